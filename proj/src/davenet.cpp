#include "picar/davenet.hpp"

#include <cmath>
#include <random>

namespace picar {

LayerSpec LayerSpec::make_conv(std::size_t kh, std::size_t kw, std::size_t in_ch,
                               std::size_t out_ch, std::size_t stride, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.conv = {kh, kw, in_ch, out_ch, {stride, stride}};
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::make_fc(std::size_t in_dim, std::size_t out_dim, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::fc;
  l.fc = {in_dim, out_dim};
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::make_flatten() { return LayerSpec{}; }

NetworkSpec build_dave2() {
  NetworkSpec spec;
  spec.input_shape = {66, 200, 3};
  spec.layers = {
      LayerSpec::make_conv(5, 5, 3, 24, 2),
      LayerSpec::make_conv(5, 5, 24, 36, 2),
      LayerSpec::make_conv(5, 5, 36, 48, 2),
      LayerSpec::make_conv(3, 3, 48, 64, 1),
      LayerSpec::make_conv(3, 3, 64, 64, 1),
      LayerSpec::make_flatten(),
      LayerSpec::make_fc(1152, 100),
      LayerSpec::make_fc(100, 50),
      LayerSpec::make_fc(50, 10),
      LayerSpec::make_fc(10, 1, Activation::linear),
  };
  return spec;
}

std::vector<Shape> layer_output_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  Shape current = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::conv: {
        const ConvDims& d = l.conv;
        if (d.kernel_rows == 0 || d.kernel_cols == 0 || d.in_channels == 0 ||
            d.out_channels == 0 || d.stride.rows == 0 || d.stride.cols == 0) {
          throw ShapeError(where + "conv dims and strides must be >= 1");
        }
        if (current.size() != 3 || current[2] != d.in_channels || current[0] < d.kernel_rows ||
            current[1] < d.kernel_cols) {
          throw ShapeError(where + "conv " + std::to_string(d.kernel_rows) + "x" +
                           std::to_string(d.kernel_cols) + "x" + std::to_string(d.in_channels) +
                           " does not fit input " + to_string(current));
        }
        current = {conv_output_extent(current[0], d.kernel_rows, d.stride.rows),
                   conv_output_extent(current[1], d.kernel_cols, d.stride.cols), d.out_channels};
        break;
      }
      case LayerKind::flatten:
        current = {element_count(current)};
        break;
      case LayerKind::fc:
        if (l.fc.in_dim == 0 || l.fc.out_dim == 0) throw ShapeError(where + "fc dims must be >= 1");
        if (current.size() != 1 || current[0] != l.fc.in_dim) {
          throw ShapeError(where + "fc expects " + std::to_string(l.fc.in_dim) +
                           " inputs, got " + to_string(current));
        }
        current = {l.fc.out_dim};
        break;
    }
    shapes.push_back(current);
  }
  return shapes;
}

std::size_t trainable_layer_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& l : spec.layers) n += l.trainable() ? 1 : 0;
  return n;
}

namespace {

Shape weight_shape(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
      return {l.conv.kernel_rows, l.conv.kernel_cols, l.conv.in_channels, l.conv.out_channels};
    case LayerKind::fc:
      return {l.fc.out_dim, l.fc.in_dim};
    case LayerKind::flatten:
      break;
  }
  return {0};
}

std::size_t bias_length(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
      return l.conv.out_channels;
    case LayerKind::fc:
      return l.fc.out_dim;
    case LayerKind::flatten:
      break;
  }
  return 0;
}

}  // namespace

std::uint64_t count_parameters(const NetworkSpec& spec) {
  std::uint64_t total = 0;
  for (const auto& l : spec.layers) {
    if (!l.trainable()) continue;
    total += element_count(weight_shape(l)) + bias_length(l);
  }
  return total;
}

ConnectionCount count_connections(const NetworkSpec& spec) {
  const auto shapes = layer_output_shapes(spec);
  ConnectionCount c;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::uint64_t outputs = element_count(shapes[i]);
    if (l.kind == LayerKind::conv) {
      c.weights += outputs * l.conv.kernel_rows * l.conv.kernel_cols * l.conv.in_channels;
      c.with_bias += outputs;
    } else if (l.kind == LayerKind::fc) {
      c.weights += static_cast<std::uint64_t>(l.fc.in_dim) * l.fc.out_dim;
      c.with_bias += outputs;
    }
  }
  c.with_bias += c.weights;
  return c;
}

template <typename T>
bool BasicWeightStore<T>::all_finite() const noexcept {
  for (const auto& l : layers) {
    if (!l.weights.all_finite()) return false;
    for (T b : l.bias)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

template <typename T>
BasicWeightStore<T> zero_weights(const NetworkSpec& spec) {
  layer_output_shapes(spec);
  BasicWeightStore<T> store;
  for (const auto& l : spec.layers) {
    if (l.trainable()) {
      store.layers.push_back({BasicTensor<T>(weight_shape(l)), std::vector<T>(bias_length(l))});
    } else {
      store.layers.push_back({});
    }
  }
  return store;
}

template <typename T>
void check_weights(const NetworkSpec& spec, const BasicWeightStore<T>& store) {
  if (store.layers.size() != spec.layers.size()) {
    throw ShapeError("weight store has " + std::to_string(store.layers.size()) +
                     " layers, network has " + std::to_string(spec.layers.size()));
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto& w = store.layers[i];
    if (!l.trainable()) {
      if (!w.weights.empty() || !w.bias.empty()) {
        throw ShapeError("layer " + std::to_string(i) + " is a flatten layer but carries weights");
      }
      continue;
    }
    if (w.weights.shape() != weight_shape(l) || w.bias.size() != bias_length(l)) {
      throw ShapeError("layer " + std::to_string(i) + " weights " + to_string(w.weights.shape()) +
                       " / bias " + std::to_string(w.bias.size()) + " do not match expected " +
                       to_string(weight_shape(l)) + " / " + std::to_string(bias_length(l)));
    }
  }
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

WeightStore xavier_init(const NetworkSpec& spec, std::uint64_t seed) {
  WeightStore store = zero_weights<float>(spec);
  store.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    std::size_t fan_in = 0, fan_out = 0;
    if (l.kind == LayerKind::conv) {
      const std::size_t taps = l.conv.kernel_rows * l.conv.kernel_cols;
      fan_in = taps * l.conv.in_channels;
      fan_out = taps * l.conv.out_channels;
    } else if (l.kind == LayerKind::fc) {
      fan_in = l.fc.in_dim;
      fan_out = l.fc.out_dim;
    } else {
      continue;
    }
    const double bound = xavier_bound(fan_in, fan_out);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& w : store.layers[i].weights.data()) w = static_cast<float>(dist(rng));
  }
  return store;
}

template <typename T>
BasicConvParams<T> conv_params(const LayerSpec& layer, const BasicLayerWeights<T>& w) {
  return {w.weights, w.bias, layer.conv.stride};
}

template <typename T>
BasicFcParams<T> fc_params(const BasicLayerWeights<T>& w) {
  return {w.weights, w.bias};
}

template <typename T>
T forward_reference(const NetworkSpec& spec, const BasicWeightStore<T>& weights,
                    const BasicTensor<T>& frame) {
  check_weights(spec, weights);
  if (frame.shape() != spec.input_shape) {
    throw ShapeError("frame " + to_string(frame.shape()) + " does not match network input " +
                     to_string(spec.input_shape));
  }
  BasicTensor<T> x = frame;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d_forward(x, conv_params(l, weights.layers[i]));
        break;
      case LayerKind::flatten:
        x = x.reshaped({x.size()});
        break;
      case LayerKind::fc: {
        auto y = fc_forward<T>(x.data(), fc_params(weights.layers[i]));
        const std::size_t n = y.size();
        x = BasicTensor<T>({n}, std::move(y));
        break;
      }
    }
    if (l.activation == Activation::relu) relu_inplace<T>(x.data());
  }
  if (x.size() != 1) throw ShapeError("network output is " + to_string(x.shape()) + ", not scalar");
  return x[0];
}

InferenceSession::InferenceSession(NetworkSpec spec, WeightStore weights, std::size_t worker_count,
                                   std::vector<int> cores)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  check_weights(spec_, weights_);
  const auto shapes = layer_output_shapes(spec_);
  if (shapes.empty() || element_count(shapes.back()) != 1) {
    throw ShapeError("network does not end in a single output");
  }
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    conv_.push_back(l.kind == LayerKind::conv ? conv_params(l, weights_.layers[i]) : ConvParams{});
    fc_.push_back(l.kind == LayerKind::fc ? fc_params(weights_.layers[i]) : FcParams{});
    activations_.emplace_back(shapes[i]);
  }
  pool_ = std::make_unique<WorkerPool>(worker_count == 0 ? 1 : worker_count, std::move(cores));
}

float InferenceSession::infer(const Tensor& frame) {
  if (frame.shape() != spec_.input_shape) {
    throw ShapeError("frame " + to_string(frame.shape()) + " does not match network input " +
                     to_string(spec_.input_shape));
  }
  const Tensor* x = &frame;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    Tensor& y = activations_[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const ConvParams& p = conv_[i];
        pool_->parallel_for(p.out_channels(), [&](std::size_t first, std::size_t last) {
          conv2d_forward_channels(*x, p, first, last, y);
        });
        break;
      }
      case LayerKind::flatten:
        std::copy(x->data().begin(), x->data().end(), y.data().begin());
        break;
      case LayerKind::fc: {
        const FcParams& p = fc_[i];
        pool_->parallel_for(p.out_dim(), [&](std::size_t first, std::size_t last) {
          fc_forward_rows<float>(x->data(), p, first, last, y.data());
        });
        break;
      }
    }
    if (l.activation == Activation::relu) relu_inplace<float>(y.data());
    x = &y;
  }
  return (*x)[0];
}

#define PICAR_INSTANTIATE(T)                                                                   \
  template struct BasicWeightStore<T>;                                                         \
  template BasicWeightStore<T> zero_weights<T>(const NetworkSpec&);                            \
  template void check_weights<T>(const NetworkSpec&, const BasicWeightStore<T>&);              \
  template BasicConvParams<T> conv_params<T>(const LayerSpec&, const BasicLayerWeights<T>&);   \
  template BasicFcParams<T> fc_params<T>(const BasicLayerWeights<T>&);                         \
  template T forward_reference<T>(const NetworkSpec&, const BasicWeightStore<T>&,              \
                                  const BasicTensor<T>&);

PICAR_INSTANTIATE(float)
PICAR_INSTANTIATE(double)

#undef PICAR_INSTANTIATE

}  // namespace picar
