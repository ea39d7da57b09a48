#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "picar/tensor.hpp"
#include "picar/worker_pool.hpp"

namespace picar {

enum class LayerKind : std::uint32_t { conv = 0, fc = 1, flatten = 2 };
enum class Activation : std::uint32_t { linear = 0, relu = 1 };

struct ConvDims {
  std::size_t kernel_rows = 0;
  std::size_t kernel_cols = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Stride stride;
  friend bool operator==(const ConvDims&, const ConvDims&) = default;
};

struct FcDims {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  friend bool operator==(const FcDims&, const FcDims&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  ConvDims conv;
  FcDims fc;
  Activation activation = Activation::linear;

  static LayerSpec make_conv(std::size_t kh, std::size_t kw, std::size_t in_ch, std::size_t out_ch,
                             std::size_t stride, Activation act = Activation::relu);
  static LayerSpec make_fc(std::size_t in_dim, std::size_t out_dim,
                           Activation act = Activation::relu);
  static LayerSpec make_flatten();

  bool trainable() const noexcept { return kind != LayerKind::flatten; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  Shape input_shape{66, 200, 3};
  std::vector<LayerSpec> layers;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Canonical DAVE-2: five convolutions, flatten, four fully-connected
/// layers ending in a single linear steering output.
NetworkSpec build_dave2();

/// Shape after every layer (index i is the output of layers[i]). Throws
/// ShapeError if consecutive layers do not fit.
std::vector<Shape> layer_output_shapes(const NetworkSpec& spec);

std::size_t trainable_layer_count(const NetworkSpec& spec);

std::uint64_t count_parameters(const NetworkSpec& spec);

struct ConnectionCount {
  std::uint64_t weights = 0;    ///< multiply-accumulate connections only
  std::uint64_t with_bias = 0;  ///< plus one bias connection per output element
};

ConnectionCount count_connections(const NetworkSpec& spec);

/// Parameters of one layer. Conv kernels are kh x kw x in x out, fc weights
/// out x in; flatten layers hold empty tensors.
template <typename T>
struct BasicLayerWeights {
  BasicTensor<T> weights;
  std::vector<T> bias;
  friend bool operator==(const BasicLayerWeights&, const BasicLayerWeights&) = default;
};

template <typename T>
struct BasicWeightStore {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<BasicLayerWeights<T>> layers;
  std::uint32_t version = kFormatVersion;
  std::uint64_t seed = 0;

  template <typename U>
  BasicWeightStore<U> cast() const {
    BasicWeightStore<U> out;
    out.version = version;
    out.seed = seed;
    for (const auto& l : layers) {
      out.layers.push_back({l.weights.template cast<U>(), std::vector<U>(l.bias.begin(), l.bias.end())});
    }
    return out;
  }

  bool all_finite() const noexcept;
  friend bool operator==(const BasicWeightStore&, const BasicWeightStore&) = default;
};

using LayerWeights = BasicLayerWeights<float>;
using WeightStore = BasicWeightStore<float>;
using WeightStore64 = BasicWeightStore<double>;

/// Zero-filled store laid out for `spec`.
template <typename T>
BasicWeightStore<T> zero_weights(const NetworkSpec& spec);

/// Throws ShapeError if `store` does not match the layer dims of `spec`.
template <typename T>
void check_weights(const NetworkSpec& spec, const BasicWeightStore<T>& store);

/// Xavier/Glorot uniform: weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
/// Conv fan_in = kh*kw*in, fan_out = kh*kw*out. Biases start at zero.
WeightStore xavier_init(const NetworkSpec& spec, std::uint64_t seed);

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

template <typename T>
BasicConvParams<T> conv_params(const LayerSpec& layer, const BasicLayerWeights<T>& w);
template <typename T>
BasicFcParams<T> fc_params(const BasicLayerWeights<T>& w);

/// Single-threaded composition of the tensor kernels. Reference path for
/// InferenceSession and the forward pass used in training.
template <typename T>
T forward_reference(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                    const BasicTensor<T>& frame);

// Weight files ----------------------------------------------------------------

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Bad magic bytes or unsupported version.
class WeightFormatError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
/// File ended before all declared records were read.
class WeightTruncatedError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
/// Recorded layer dims disagree with the expected network.
class WeightDimError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};

/// Layout (all integers and floats little-endian):
///   8 bytes  magic "DAVE2WTS"
///   u32      version
///   u64      seed
///   u32      layer count
///   per layer: u32 kind, u32 activation,
///              conv: u32 kh, kw, in, out, stride_rows, stride_cols
///              fc:   u32 in, out
///              then f32 weights (row-major), f32 bias
void save_weights(const NetworkSpec& spec, const WeightStore& store,
                  const std::filesystem::path& path);

/// Reads the file and checks it against `expected`. Never returns a
/// partially filled store.
WeightStore load_weights(const std::filesystem::path& path, const NetworkSpec& expected);

// Inference -------------------------------------------------------------------

/// Anything that turns a preprocessed frame into a steering angle.
class SteeringModel {
 public:
  virtual ~SteeringModel() = default;
  virtual float predict(const Tensor& frame) = 0;
};

/// Owns a worker pool sized at construction. Conv layers split output
/// channels across workers and fc layers split output rows, so the result
/// is bit-identical for every worker count. Use from one thread at a time.
class InferenceSession : public SteeringModel {
 public:
  InferenceSession(NetworkSpec spec, WeightStore weights, std::size_t worker_count = 1,
                   std::vector<int> cores = {});

  float infer(const Tensor& frame);
  float predict(const Tensor& frame) override { return infer(frame); }

  std::size_t worker_count() const noexcept { return pool_->size(); }
  bool affinity_honored() const noexcept { return pool_->affinity_honored(); }
  const NetworkSpec& spec() const noexcept { return spec_; }
  const WeightStore& weights() const noexcept { return weights_; }

 private:
  NetworkSpec spec_;
  WeightStore weights_;
  std::vector<ConvParams> conv_;
  std::vector<FcParams> fc_;
  std::vector<Tensor> activations_;
  std::unique_ptr<WorkerPool> pool_;
};

}  // namespace picar
