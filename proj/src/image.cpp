#include "picar/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace picar {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void skip_space_and_comments(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
}

std::size_t read_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos,
                            const std::filesystem::path& path) {
  skip_space_and_comments(b, pos);
  std::size_t v = 0;
  bool any = false;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    any = true;
  }
  if (!any) throw ImageError(path.string() + ": malformed PPM header");
  return v;
}

}  // namespace

RawImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ImageError(path.string() + ": not a binary PPM (P6) file");
  }
  std::size_t pos = 2;
  const std::size_t w = read_header_int(bytes, pos, path);
  const std::size_t h = read_header_int(bytes, pos, path);
  const std::size_t maxval = read_header_int(bytes, pos, path);
  if (maxval != 255) throw ImageError(path.string() + ": only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  RawImage img(w, h, 3);
  if (bytes.size() < pos + img.pixels.size()) throw ImageError(path.string() + ": truncated PPM");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  return img;
}

void write_ppm(const RawImage& image, const std::filesystem::path& path) {
  if (image.channels != 3) throw ImageError("PPM output needs 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

RawImage read_raw_frame(const std::filesystem::path& path) {
  auto bytes = read_all(path);
  if (bytes.size() != kFrameBytes) {
    throw ImageError(path.string() + ": raw frame must be exactly " + std::to_string(kFrameBytes) +
                     " bytes (66x200x3), got " + std::to_string(bytes.size()));
  }
  RawImage img;
  img.width = kFrameWidth;
  img.height = kFrameHeight;
  img.channels = 3;
  img.pixels = std::move(bytes);
  return img;
}

void write_raw_frame(const RawImage& image, const std::filesystem::path& path) {
  if (image.width != kFrameWidth || image.height != kFrameHeight || image.channels != 3) {
    throw ImageError("raw frames must be 66x200x3");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

RawImage load_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".raw") return read_raw_frame(path);
  throw ImageError(path.string() + ": unsupported image type (expected .ppm or .raw)");
}

}  // namespace picar
