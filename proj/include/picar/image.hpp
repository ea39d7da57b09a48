#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace picar {

/// Interleaved 8-bit image, row-major, `channels` bytes per pixel.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(std::size_t w, std::size_t h, std::size_t ch, std::uint8_t fill = 0)
      : width(w), height(h), channels(ch), pixels(w * h * ch, fill) {}

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kFrameWidth = 200;
inline constexpr std::size_t kFrameHeight = 66;
inline constexpr std::size_t kFrameBytes = kFrameWidth * kFrameHeight * 3;

/// Binary PPM (P6, maxval 255).
RawImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RawImage& image, const std::filesystem::path& path);

/// Headerless 66x200x3 RGB bytes.
RawImage read_raw_frame(const std::filesystem::path& path);
void write_raw_frame(const RawImage& image, const std::filesystem::path& path);

/// Picks the reader by extension: .ppm or .raw.
RawImage load_image(const std::filesystem::path& path);

}  // namespace picar
