#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "picar/davenet.hpp"

namespace picar {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'A', 'V', 'E', '2', 'W', 'T', 'S'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_++])} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_++])} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw WeightTruncatedError("weight file truncated at byte " + std::to_string(pos_) +
                                 " (needed " + std::to_string(n) + " more)");
    }
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

void expect_dim(std::size_t layer, const char* what, std::uint64_t got, std::uint64_t want) {
  if (got != want) {
    throw WeightDimError("layer " + std::to_string(layer) + ": recorded " + what + " " +
                         std::to_string(got) + ", expected " + std::to_string(want));
  }
}

}  // namespace

void save_weights(const NetworkSpec& spec, const WeightStore& store,
                  const std::filesystem::path& path) {
  check_weights(spec, store);
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(WeightStore::kFormatVersion);
  w.u64(store.seed);
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.activation));
    if (l.kind == LayerKind::conv) {
      for (std::size_t d : {l.conv.kernel_rows, l.conv.kernel_cols, l.conv.in_channels,
                            l.conv.out_channels, l.conv.stride.rows, l.conv.stride.cols}) {
        w.u32(static_cast<std::uint32_t>(d));
      }
    } else if (l.kind == LayerKind::fc) {
      w.u32(static_cast<std::uint32_t>(l.fc.in_dim));
      w.u32(static_cast<std::uint32_t>(l.fc.out_dim));
    }
    for (float v : store.layers[i].weights.data()) w.f32(v);
    for (float v : store.layers[i].bias) w.f32(v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFileError("cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw WeightFileError("failed writing " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path, const NetworkSpec& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.remaining() < kMagic.size()) {
    throw WeightTruncatedError("weight file " + path.string() + " shorter than its header");
  }
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kMagic) throw WeightFormatError(path.string() + " is not a DAVE-2 weight file");
  const std::uint32_t version = r.u32();
  if (version != WeightStore::kFormatVersion) {
    throw WeightFormatError("unsupported weight file version " + std::to_string(version));
  }

  WeightStore store = zero_weights<float>(expected);
  store.version = version;
  store.seed = r.u64();
  expect_dim(0, "layer count", r.u32(), expected.layers.size());

  for (std::size_t i = 0; i < expected.layers.size(); ++i) {
    const LayerSpec& l = expected.layers[i];
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::flatten)) {
      throw WeightFormatError("layer " + std::to_string(i) + ": unknown kind tag " +
                              std::to_string(kind));
    }
    expect_dim(i, "kind", kind, static_cast<std::uint32_t>(l.kind));
    expect_dim(i, "activation", r.u32(), static_cast<std::uint32_t>(l.activation));
    if (l.kind == LayerKind::conv) {
      expect_dim(i, "kernel rows", r.u32(), l.conv.kernel_rows);
      expect_dim(i, "kernel cols", r.u32(), l.conv.kernel_cols);
      expect_dim(i, "in channels", r.u32(), l.conv.in_channels);
      expect_dim(i, "out channels", r.u32(), l.conv.out_channels);
      expect_dim(i, "row stride", r.u32(), l.conv.stride.rows);
      expect_dim(i, "col stride", r.u32(), l.conv.stride.cols);
    } else if (l.kind == LayerKind::fc) {
      expect_dim(i, "in dim", r.u32(), l.fc.in_dim);
      expect_dim(i, "out dim", r.u32(), l.fc.out_dim);
    }
    for (float& v : store.layers[i].weights.data()) v = r.f32();
    for (float& v : store.layers[i].bias) v = r.f32();
  }
  if (r.remaining() != 0) {
    throw WeightFormatError("weight file has " + std::to_string(r.remaining()) +
                            " trailing bytes");
  }
  if (!store.all_finite()) throw WeightFormatError("weight file contains non-finite values");
  return store;
}

}  // namespace picar
