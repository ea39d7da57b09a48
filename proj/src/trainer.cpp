#include "picar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "picar/pipeline.hpp"
#include "picar/worker_pool.hpp"

namespace picar {

RoadLabel label_for_angle(double angle_deg) {
  return std::abs(angle_deg) >= kCurveThresholdDeg ? RoadLabel::curved : RoadLabel::straight;
}

SamplerKind parse_sampler(const std::string& text) {
  if (text == "uniform") return SamplerKind::uniform;
  if (text == "balanced") return SamplerKind::balanced;
  throw std::invalid_argument("unknown sampler '" + text + "' (expected uniform or balanced)");
}

void DatasetIndex::add(DatasetRecord record, RawImage frame) {
  if (!std::isfinite(record.angle_deg)) throw DatasetError("non-finite angle for " + record.frame);
  record.label = label_for_angle(record.angle_deg);
  records.push_back(std::move(record));
  frames.push_back(std::move(frame));
}

std::vector<std::size_t> DatasetIndex::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

void load_manifest(const std::filesystem::path& manifest, Split split, DatasetIndex& into) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("cannot read manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw DatasetError(manifest.string() + ":" + std::to_string(lineno) +
                         ": expected <frame-file>,<angle-degrees>");
    }
    const std::string file = line.substr(0, comma);
    float angle = 0.0f;
    try {
      std::size_t used = 0;
      angle = std::stof(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw DatasetError(manifest.string() + ":" + std::to_string(lineno) + ": bad angle");
    }
    const std::filesystem::path path =
        std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base / file;
    RawImage img = load_image(path);
    if (img.channels != 3) throw DatasetError(path.string() + ": frames must be RGB");
    into.add({path.string(), angle, RoadLabel::straight, split}, std::move(img));
  }
}

DatasetIndex make_synthetic_linear(std::size_t train_count, std::size_t validation_count,
                                   std::uint64_t seed) {
  DatasetIndex index;
  Rng rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  for (std::size_t i = 0; i < train_count + validation_count; ++i) {
    const int k = level(rng);
    const double a = k / 255.0;
    DatasetRecord r;
    r.frame = "synthetic:" + std::to_string(i);
    r.angle_deg = static_cast<float>(3.0 * a);
    r.split = i < train_count ? Split::train : Split::validation;
    index.add(r, RawImage(kFrameWidth, kFrameHeight, 3, static_cast<std::uint8_t>(k)));
  }
  return index;
}

std::vector<std::size_t> sample_batch(const DatasetIndex& index, const TrainConfig& cfg, Rng& rng) {
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  const auto train_idx = index.indices(Split::train);
  if (train_idx.empty()) throw DatasetError("training split is empty");
  std::vector<std::size_t> batch;
  batch.reserve(cfg.batch_size);
  if (cfg.sampler == SamplerKind::uniform) {
    std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(train_idx[pick(rng)]);
    return batch;
  }
  std::vector<std::size_t> curved, straight;
  for (std::size_t i : train_idx) {
    (index.records[i].label == RoadLabel::curved ? curved : straight).push_back(i);
  }
  if (curved.empty() || straight.empty()) {
    throw DatasetError(std::string("balanced sampling needs both categories; no ") +
                       (curved.empty() ? "curved" : "straight") + " frames in the training split");
  }
  const std::size_t n_curved = (cfg.batch_size + 1) / 2;
  const std::size_t n_straight = cfg.batch_size / 2;
  std::uniform_int_distribution<std::size_t> pick_c(0, curved.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_s(0, straight.size() - 1);
  for (std::size_t i = 0; i < n_curved; ++i) batch.push_back(curved[pick_c(rng)]);
  for (std::size_t i = 0; i < n_straight; ++i) batch.push_back(straight[pick_s(rng)]);
  return batch;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw std::invalid_argument("mse of an empty batch");
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("mse: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predictions.size());
}

template <typename T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                              const BasicTensor<T>& frame) {
  check_weights(spec, weights);
  if (frame.shape() != spec.input_shape) {
    throw ShapeError("frame " + to_string(frame.shape()) + " does not match network input " +
                     to_string(spec.input_shape));
  }
  ForwardTrace<T> trace;
  BasicTensor<T> x = frame;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    trace.inputs.push_back(x);
    BasicTensor<T> y;
    switch (l.kind) {
      case LayerKind::conv:
        y = conv2d_forward(x, conv_params(l, weights.layers[i]));
        break;
      case LayerKind::flatten:
        y = x.reshaped({x.size()});
        break;
      case LayerKind::fc: {
        auto v = fc_forward<T>(x.data(), fc_params(weights.layers[i]));
        const std::size_t n = v.size();
        y = BasicTensor<T>({n}, std::move(v));
        break;
      }
    }
    trace.pre_activation.push_back(y);
    if (l.activation == Activation::relu) relu_inplace<T>(y.data());
    x = std::move(y);
  }
  if (x.size() != 1) throw ShapeError("network output is not a scalar");
  trace.output = x[0];
  return trace;
}

template <typename T>
BasicWeightStore<T> backward(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                             const ForwardTrace<T>& trace, T grad_output) {
  BasicWeightStore<T> grads = zero_weights<T>(spec);
  BasicTensor<T> g({1}, std::vector<T>{grad_output});
  for (std::size_t n = spec.layers.size(); n-- > 0;) {
    const LayerSpec& l = spec.layers[n];
    if (l.activation == Activation::relu) {
      relu_backward_inplace<T>(trace.pre_activation[n].data(), g.data());
    }
    const BasicTensor<T>& input = trace.inputs[n];
    switch (l.kind) {
      case LayerKind::conv: {
        auto cg = conv2d_backward(input, conv_params(l, weights.layers[n]), g, n > 0);
        grads.layers[n].weights = std::move(cg.kernels);
        grads.layers[n].bias = std::move(cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::flatten:
        g = g.reshaped(input.shape());
        break;
      case LayerKind::fc: {
        auto fg = fc_backward<T>(input.data(), fc_params(weights.layers[n]), g.data());
        grads.layers[n].weights = std::move(fg.weights);
        grads.layers[n].bias = std::move(fg.bias);
        g = BasicTensor<T>(input.shape(), std::move(fg.input));
        break;
      }
    }
  }
  return grads;
}

namespace {

template <typename T>
void accumulate(BasicWeightStore<T>& into, const BasicWeightStore<T>& g, T scale) {
  for (std::size_t i = 0; i < into.layers.size(); ++i) {
    auto dst = into.layers[i].weights.data();
    auto src = g.layers[i].weights.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    for (std::size_t k = 0; k < into.layers[i].bias.size(); ++k) {
      into.layers[i].bias[k] += scale * g.layers[i].bias[k];
    }
  }
}

template <typename T>
std::size_t parameter_total(const BasicWeightStore<T>& w) {
  std::size_t n = 0;
  for (const auto& l : w.layers) n += l.weights.size() + l.bias.size();
  return n;
}

template <typename T>
T& parameter_at(BasicWeightStore<T>& w, std::size_t flat, std::size_t* layer_out = nullptr) {
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    if (layer_out) *layer_out = i;
    if (flat < l.weights.size()) return l.weights[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias[flat];
    flat -= l.bias.size();
  }
  throw std::out_of_range("parameter index out of range");
}

}  // namespace

template <typename T>
T loss_and_gradient(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                    std::span<const BasicTensor<T>> frames, std::span<const T> targets,
                    BasicWeightStore<T>* gradient) {
  if (frames.empty() || frames.size() != targets.size()) {
    throw std::invalid_argument("batch needs matching, nonempty frames and targets");
  }
  const T n = static_cast<T>(frames.size());
  if (gradient) *gradient = zero_weights<T>(spec);
  T loss{0};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto trace = forward_trace(spec, weights, frames[i]);
    const T diff = trace.output - targets[i];
    loss += diff * diff;
    if (gradient) accumulate(*gradient, backward(spec, weights, trace, T{2} * diff / n), T{1});
  }
  return loss / n;
}

double gradient_check(const NetworkSpec& spec, const WeightStore64& weights,
                      std::span<const Example64> batch, std::optional<GradientCorruption> corruption) {
  check_weights(spec, weights);
  const std::size_t total = parameter_total(weights);
  if (total > 500) {
    throw std::invalid_argument("gradient check is limited to 500 parameters, network has " +
                                std::to_string(total));
  }
  std::vector<Tensor64> frames;
  std::vector<double> targets;
  for (const auto& e : batch) {
    frames.push_back(e.frame);
    targets.push_back(e.target);
  }
  WeightStore64 analytic;
  loss_and_gradient<double>(spec, weights, frames, targets, &analytic);
  if (corruption) {
    auto& l = analytic.layers.at(corruption->layer);
    for (double& v : l.weights.data()) v *= corruption->factor;
    for (double& v : l.bias) v *= corruption->factor;
  }

  constexpr double h = 1e-5;
  WeightStore64 probe = weights;
  double worst = 0.0;
  for (std::size_t p = 0; p < total; ++p) {
    double& w = parameter_at(probe, p);
    const double saved = w;
    w = saved + h;
    const double up = loss_and_gradient<double>(spec, probe, frames, targets, nullptr);
    w = saved - h;
    const double down = loss_and_gradient<double>(spec, probe, frames, targets, nullptr);
    w = saved;
    const double fd = (up - down) / (2.0 * h);
    const double a = parameter_at(analytic, p);
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

double evaluate(const NetworkSpec& spec, const WeightStore& weights, const DatasetIndex& index,
                Split split) {
  const auto idx = index.indices(split);
  if (idx.empty()) throw DatasetError("split is empty");
  std::vector<double> pred, target;
  for (std::size_t i : idx) {
    pred.push_back(forward_reference<float>(spec, weights, preprocess(index.frames[i])));
    target.push_back(index.records[i].angle_deg);
  }
  return mse_loss(pred, target);
}

TrainResult train(const NetworkSpec& spec, const DatasetIndex& index, const TrainConfig& cfg) {
  return train(spec, index, cfg, xavier_init(spec, cfg.seed));
}

TrainResult train(const NetworkSpec& spec, const DatasetIndex& index, const TrainConfig& cfg,
                  WeightStore initial) {
  if (cfg.batch_size == 0 || cfg.steps == 0) {
    throw std::invalid_argument("batch size and step count must be >= 1");
  }
  if (!std::isfinite(cfg.learning_rate) || cfg.learning_rate < 0.0) {
    throw std::invalid_argument("learning rate must be finite and non-negative");
  }
  check_weights(spec, initial);
  if (index.indices(Split::train).empty()) throw DatasetError("training split is empty");

  // Frames are preprocessed once; the trainer only ever reads them.
  std::vector<Tensor> tensors;
  tensors.reserve(index.size());
  for (const auto& f : index.frames) tensors.push_back(preprocess(f));

  TrainResult result;
  result.weights = std::move(initial);
  result.loss_history.reserve(cfg.steps);
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  WorkerPool pool(std::max<std::size_t>(1, cfg.worker_count));
  const std::size_t wave = pool.size();
  const float lr = static_cast<float>(cfg.learning_rate);

  std::vector<WeightStore> sample_grads(wave);
  std::vector<float> sample_sq(wave);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_batch(index, cfg, rng);
    const float n = static_cast<float>(batch.size());
    WeightStore grad = zero_weights<float>(spec);
    double loss = 0.0;
    // Per-sample gradients are computed in waves and summed in sample
    // order, so the result does not depend on the worker count.
    for (std::size_t base = 0; base < batch.size(); base += wave) {
      const std::size_t count = std::min(wave, batch.size() - base);
      pool.parallel_for(count, [&](std::size_t first, std::size_t last) {
        for (std::size_t k = first; k < last; ++k) {
          const std::size_t idx = batch[base + k];
          auto trace = forward_trace<float>(spec, result.weights, tensors[idx]);
          const float diff = trace.output - index.records[idx].angle_deg;
          sample_sq[k] = diff * diff;
          sample_grads[k] = backward<float>(spec, result.weights, trace, 2.0f * diff / n);
        }
      });
      for (std::size_t k = 0; k < count; ++k) {
        loss += sample_sq[k];
        accumulate(grad, sample_grads[k], 1.0f);
      }
    }
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(step) +
                             " (batch loss " + std::to_string(loss) + "); lower the learning rate");
    }
    result.loss_history.push_back(loss);
    if (lr != 0.0f) accumulate(result.weights, grad, -lr);
  }
  if (!result.weights.all_finite()) throw TrainingDiverged("weights became non-finite");
  if (!index.indices(Split::validation).empty()) {
    result.validation_loss = evaluate(spec, result.weights, index, Split::validation);
  }
  return result;
}

#define PICAR_INSTANTIATE(T)                                                                 \
  template ForwardTrace<T> forward_trace<T>(const NetworkSpec&, const BasicWeightStore<T>&,  \
                                            const BasicTensor<T>&);                          \
  template BasicWeightStore<T> backward<T>(const NetworkSpec&, const BasicWeightStore<T>&,   \
                                           const ForwardTrace<T>&, T);                       \
  template T loss_and_gradient<T>(const NetworkSpec&, const BasicWeightStore<T>&,            \
                                  std::span<const BasicTensor<T>>, std::span<const T>,      \
                                  BasicWeightStore<T>*);

PICAR_INSTANTIATE(float)
PICAR_INSTANTIATE(double)

#undef PICAR_INSTANTIATE

}  // namespace picar
