#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "picar/davenet.hpp"

using namespace picar;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("picar_wio_" + name);
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(WeightFile, RoundTripIsExact) {
  const auto spec = build_dave2();
  const auto w = xavier_init(spec, 42);
  const auto p = temp_path("roundtrip.bin");
  save_weights(spec, w, p);
  EXPECT_EQ(load_weights(p, spec), w);
  // header + every layer's tags/dims + 4 bytes per parameter
  const std::size_t dims = 5 * (2 + 6) * 4 + 4 * (2 + 2) * 4 + 1 * 2 * 4;
  EXPECT_EQ(fs::file_size(p), 8 + 4 + 8 + 4 + dims + 4 * count_parameters(spec));
}

TEST(WeightFile, BadMagicIsFormatError) {
  const auto spec = build_dave2();
  const auto p = temp_path("magic.bin");
  save_weights(spec, xavier_init(spec, 1), p);
  auto bytes = slurp(p);
  bytes[0] = 'X';
  spit(p, bytes);
  EXPECT_THROW(load_weights(p, spec), WeightFormatError);
}

TEST(WeightFile, BadVersionIsFormatError) {
  const auto spec = build_dave2();
  const auto p = temp_path("version.bin");
  save_weights(spec, xavier_init(spec, 1), p);
  auto bytes = slurp(p);
  bytes[8] = 9;
  spit(p, bytes);
  EXPECT_THROW(load_weights(p, spec), WeightFormatError);
}

TEST(WeightFile, TruncationIsDetected) {
  const auto spec = build_dave2();
  const auto p = temp_path("trunc.bin");
  save_weights(spec, xavier_init(spec, 1), p);
  auto bytes = slurp(p);
  for (std::size_t keep : {std::size_t{4}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    spit(p, {bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep)});
    EXPECT_THROW(load_weights(p, spec), WeightTruncatedError) << keep;
  }
}

TEST(WeightFile, TrailingBytesRejected) {
  const auto spec = build_dave2();
  const auto p = temp_path("trail.bin");
  save_weights(spec, xavier_init(spec, 1), p);
  auto bytes = slurp(p);
  bytes.push_back(0);
  spit(p, bytes);
  EXPECT_THROW(load_weights(p, spec), WeightFormatError);
}

TEST(WeightFile, DimMismatchIsDimError) {
  const auto spec = build_dave2();
  const auto p = temp_path("dims.bin");
  save_weights(spec, xavier_init(spec, 1), p);
  NetworkSpec other = spec;
  other.layers[0].conv.out_channels = 25;
  other.layers[1].conv.in_channels = 25;
  EXPECT_THROW(load_weights(p, other), WeightDimError);
  EXPECT_THROW(load_weights(p, other), WeightFileError);
}

TEST(WeightFile, MissingFile) {
  EXPECT_THROW(load_weights(temp_path("does_not_exist.bin"), build_dave2()), WeightFileError);
}
