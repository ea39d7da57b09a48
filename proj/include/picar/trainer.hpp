#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "picar/davenet.hpp"
#include "picar/image.hpp"

namespace picar {

enum class RoadLabel { straight, curved };
enum class Split { train, validation };
enum class SamplerKind { uniform, balanced };

/// |angle| >= 15 degrees is a curve.
inline constexpr double kCurveThresholdDeg = 15.0;
RoadLabel label_for_angle(double angle_deg);

SamplerKind parse_sampler(const std::string& text);

struct DatasetRecord {
  std::string frame;  ///< file path, or "synthetic:<id>"
  float angle_deg = 0.0f;
  RoadLabel label = RoadLabel::straight;
  Split split = Split::train;
};

/// Records and their images, index-aligned.
struct DatasetIndex {
  std::vector<DatasetRecord> records;
  std::vector<RawImage> frames;

  void add(DatasetRecord record, RawImage frame);
  std::size_t size() const noexcept { return records.size(); }
  std::vector<std::size_t> indices(Split split) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Manifest lines are `<frame-file>,<angle-degrees>`; paths are relative to
/// the manifest's directory. Blank lines and lines starting with '#' are ignored.
void load_manifest(const std::filesystem::path& manifest, Split split, DatasetIndex& into);

/// Constant images of brightness a (a = k/255 for random k) labelled 3a.
DatasetIndex make_synthetic_linear(std::size_t train_count, std::size_t validation_count,
                                   std::uint64_t seed);

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  SamplerKind sampler = SamplerKind::uniform;
  std::size_t worker_count = 1;
};

using Rng = std::mt19937_64;

/// Dataset positions of one batch drawn from the training split. Uniform:
/// i.i.d. with replacement. Balanced: ceil(b/2) curved then floor(b/2)
/// straight, uniform within each category.
std::vector<std::size_t> sample_batch(const DatasetIndex& index, const TrainConfig& cfg, Rng& rng);

/// Mean of squared differences. Throws std::invalid_argument on empty or
/// unequal inputs.
double mse_loss(std::span<const double> predictions, std::span<const double> targets);

/// Intermediate values of one forward pass, kept for backprop.
template <typename T>
struct ForwardTrace {
  std::vector<BasicTensor<T>> inputs;          ///< input of layer i
  std::vector<BasicTensor<T>> pre_activation;  ///< output of layer i before its activation
  T output{};
};

template <typename T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                              const BasicTensor<T>& frame);

/// Gradient of the loss w.r.t. every parameter, given d loss / d output.
template <typename T>
BasicWeightStore<T> backward(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                             const ForwardTrace<T>& trace, T grad_output);

struct Example64 {
  Tensor64 frame;
  double target = 0.0;
};

/// Batch MSE and its gradient for all parameters.
template <typename T>
T loss_and_gradient(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                    std::span<const BasicTensor<T>> frames, std::span<const T> targets,
                    BasicWeightStore<T>* gradient);

/// Multiplies the analytic gradient of one layer, to prove the check bites.
struct GradientCorruption {
  std::size_t layer = 0;
  double factor = 2.0;
};

/// Max over parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-8), with
/// central differences at h = 1e-5. Throws above 500 parameters.
double gradient_check(const NetworkSpec& spec, const WeightStore64& weights,
                      std::span<const Example64> batch,
                      std::optional<GradientCorruption> corruption = std::nullopt);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  WeightStore weights;
  std::vector<double> loss_history;  ///< batch loss before each update
  std::optional<double> validation_loss;
};

/// Plain SGD on batch MSE of the steering angle, starting from Xavier
/// weights drawn with cfg.seed.
TrainResult train(const NetworkSpec& spec, const DatasetIndex& index, const TrainConfig& cfg);

/// Same, from explicit initial weights.
TrainResult train(const NetworkSpec& spec, const DatasetIndex& index, const TrainConfig& cfg,
                  WeightStore initial);

/// MSE over one split at the given weights.
double evaluate(const NetworkSpec& spec, const WeightStore& weights, const DatasetIndex& index,
                Split split);

}  // namespace picar
