#include "picar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace picar {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0 || in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

namespace {

template <typename T>
void check_conv_params(const BasicConvParams<T>& p) {
  if (p.kernels.rank() != 4) {
    throw ShapeError("conv kernels must be kh x kw x in x out, got " + to_string(p.kernels.shape()));
  }
  if (p.kernel_rows() == 0 || p.kernel_cols() == 0 || p.in_channels() == 0 ||
      p.out_channels() == 0) {
    throw ShapeError("conv kernel dims must be >= 1, got " + to_string(p.kernels.shape()));
  }
  if (p.stride.rows == 0 || p.stride.cols == 0) throw ShapeError("conv stride must be >= 1");
  if (p.bias.size() != p.out_channels()) {
    throw ShapeError("conv bias length " + std::to_string(p.bias.size()) + " != out channels " +
                     std::to_string(p.out_channels()));
  }
}

template <typename T>
void check_fc_params(const BasicFcParams<T>& p) {
  if (p.weights.rank() != 2 || p.weights.dim(0) == 0 || p.weights.dim(1) == 0) {
    throw ShapeError("fc weights must be out x in with dims >= 1, got " +
                     to_string(p.weights.shape()));
  }
  if (p.bias.size() != p.out_dim()) {
    throw ShapeError("fc bias length " + std::to_string(p.bias.size()) + " != out dim " +
                     std::to_string(p.out_dim()));
  }
}

}  // namespace

template <typename T>
Shape conv2d_output_shape(const Shape& input_shape, const BasicConvParams<T>& p) {
  check_conv_params(p);
  if (input_shape.size() != 3) {
    throw ShapeError("conv input must be H x W x C, got " + to_string(input_shape));
  }
  if (input_shape[2] != p.in_channels()) {
    throw ShapeError("conv input has " + std::to_string(input_shape[2]) +
                     " channels, kernel expects " + std::to_string(p.in_channels()));
  }
  if (input_shape[0] < p.kernel_rows() || input_shape[1] < p.kernel_cols()) {
    throw ShapeError("conv input " + to_string(input_shape) + " smaller than kernel " +
                     to_string(p.kernels.shape()));
  }
  return {conv_output_extent(input_shape[0], p.kernel_rows(), p.stride.rows),
          conv_output_extent(input_shape[1], p.kernel_cols(), p.stride.cols), p.out_channels()};
}

template <typename T>
void conv2d_forward_channels(const BasicTensor<T>& input, const BasicConvParams<T>& p,
                             std::size_t first, std::size_t last, BasicTensor<T>& out) {
  const Shape out_shape = conv2d_output_shape(input.shape(), p);
  if (out.shape() != out_shape) {
    throw ShapeError("conv output buffer " + to_string(out.shape()) + ", expected " +
                     to_string(out_shape));
  }
  const std::size_t kh = p.kernel_rows(), kw = p.kernel_cols();
  const std::size_t in_ch = p.in_channels(), out_ch = p.out_channels();
  const std::size_t in_cols = input.dim(1);
  last = std::min(last, out_ch);
  if (first >= last) return;
  const std::size_t width = last - first;

  const T* x = input.raw();
  const T* w = p.kernels.raw();
  T* y = out.raw();
  std::vector<T> acc(width);

  // Each accumulator sums kernel-row, kernel-col, channel in that order,
  // then adds the bias; vectorization runs across output channels only.
  for (std::size_t r = 0; r < out_shape[0]; ++r) {
    for (std::size_t c = 0; c < out_shape[1]; ++c) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t kr = 0; kr < kh; ++kr) {
        const T* xrow = x + ((r * p.stride.rows + kr) * in_cols + c * p.stride.cols) * in_ch;
        for (std::size_t kc = 0; kc < kw; ++kc) {
          const T* xpix = xrow + kc * in_ch;
          const T* wtap = w + ((kr * kw + kc) * in_ch) * out_ch + first;
          for (std::size_t ch = 0; ch < in_ch; ++ch) {
            const T xv = xpix[ch];
            const T* wv = wtap + ch * out_ch;
            T* a = acc.data();
            for (std::size_t f = 0; f < width; ++f) a[f] += xv * wv[f];
          }
        }
      }
      T* dst = y + (r * out_shape[1] + c) * out_ch + first;
      for (std::size_t f = 0; f < width; ++f) dst[f] = acc[f] + p.bias[first + f];
    }
  }
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvParams<T>& p) {
  BasicTensor<T> out(conv2d_output_shape(input.shape(), p));
  conv2d_forward_channels(input, p, 0, p.out_channels(), out);
  return out;
}

template <typename T>
void fc_forward_rows(std::span<const T> input, const BasicFcParams<T>& p, std::size_t first,
                     std::size_t last, std::span<T> out) {
  check_fc_params(p);
  if (input.size() != p.in_dim()) {
    throw ShapeError("fc input length " + std::to_string(input.size()) + " != in dim " +
                     std::to_string(p.in_dim()));
  }
  if (out.size() != p.out_dim()) {
    throw ShapeError("fc output length " + std::to_string(out.size()) + " != out dim " +
                     std::to_string(p.out_dim()));
  }
  const std::size_t n = p.in_dim();
  last = std::min(last, p.out_dim());
  for (std::size_t o = first; o < last; ++o) {
    const T* row = p.weights.raw() + o * n;
    T sum{0};
    for (std::size_t i = 0; i < n; ++i) sum += row[i] * input[i];
    out[o] = sum + p.bias[o];
  }
}

template <typename T>
std::vector<T> fc_forward(std::span<const T> input, const BasicFcParams<T>& p) {
  check_fc_params(p);
  std::vector<T> out(p.out_dim());
  fc_forward_rows<T>(input, p, 0, p.out_dim(), out);
  return out;
}

template <typename T>
void relu_inplace(std::span<T> values) {
  for (T& v : values) v = v > T{0} ? v : T{0};
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& t) {
  BasicTensor<T> out = t;
  relu_inplace<T>(out.data());
  return out;
}

template <typename T>
void relu_backward_inplace(std::span<const T> pre_activation, std::span<T> grad) {
  if (pre_activation.size() != grad.size()) {
    throw ShapeError("relu backward: gradient length does not match activation length");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(pre_activation[i] > T{0})) grad[i] = T{0};
  }
}

template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvParams<T>& p,
                                 const BasicTensor<T>& grad_out, bool want_input_grad) {
  const Shape out_shape = conv2d_output_shape(input.shape(), p);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv backward: grad_out " + to_string(grad_out.shape()) + ", expected " +
                     to_string(out_shape));
  }
  const std::size_t kh = p.kernel_rows(), kw = p.kernel_cols();
  const std::size_t in_ch = p.in_channels(), out_ch = p.out_channels();
  const std::size_t in_cols = input.dim(1);

  ConvGradients<T> g;
  g.kernels = BasicTensor<T>(p.kernels.shape());
  g.bias.assign(out_ch, T{0});
  if (want_input_grad) g.input = BasicTensor<T>(input.shape());

  // kh x kw x out x in copy of the kernels so the input-gradient scatter
  // runs contiguously over input channels.
  std::vector<T> wt;
  if (want_input_grad) {
    wt.resize(p.kernels.size());
    for (std::size_t tap = 0; tap < kh * kw; ++tap)
      for (std::size_t ch = 0; ch < in_ch; ++ch)
        for (std::size_t f = 0; f < out_ch; ++f)
          wt[(tap * out_ch + f) * in_ch + ch] = p.kernels[(tap * in_ch + ch) * out_ch + f];
  }

  const T* x = input.raw();
  T* gk = g.kernels.raw();
  T* gx = want_input_grad ? g.input.raw() : nullptr;

  for (std::size_t r = 0; r < out_shape[0]; ++r) {
    for (std::size_t c = 0; c < out_shape[1]; ++c) {
      const T* go = grad_out.raw() + (r * out_shape[1] + c) * out_ch;
      for (std::size_t f = 0; f < out_ch; ++f) g.bias[f] += go[f];
      for (std::size_t kr = 0; kr < kh; ++kr) {
        const std::size_t pix_row = (r * p.stride.rows + kr) * in_cols + c * p.stride.cols;
        for (std::size_t kc = 0; kc < kw; ++kc) {
          const std::size_t pix = (pix_row + kc) * in_ch;
          const std::size_t tap = kr * kw + kc;
          T* gk_tap = gk + tap * in_ch * out_ch;
          for (std::size_t ch = 0; ch < in_ch; ++ch) {
            const T xv = x[pix + ch];
            T* dst = gk_tap + ch * out_ch;
            for (std::size_t f = 0; f < out_ch; ++f) dst[f] += go[f] * xv;
          }
          if (gx) {
            const T* wt_tap = wt.data() + tap * out_ch * in_ch;
            T* dst = gx + pix;
            for (std::size_t f = 0; f < out_ch; ++f) {
              const T gv = go[f];
              const T* wv = wt_tap + f * in_ch;
              for (std::size_t ch = 0; ch < in_ch; ++ch) dst[ch] += gv * wv[ch];
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
FcGradients<T> fc_backward(std::span<const T> input, const BasicFcParams<T>& p,
                           std::span<const T> grad_out) {
  check_fc_params(p);
  if (input.size() != p.in_dim()) {
    throw ShapeError("fc backward: input length " + std::to_string(input.size()) +
                     " != in dim " + std::to_string(p.in_dim()));
  }
  if (grad_out.size() != p.out_dim()) {
    throw ShapeError("fc backward: grad_out length " + std::to_string(grad_out.size()) +
                     " != out dim " + std::to_string(p.out_dim()));
  }
  const std::size_t n = p.in_dim(), m = p.out_dim();
  FcGradients<T> g;
  g.input.assign(n, T{0});
  g.weights = BasicTensor<T>(p.weights.shape());
  g.bias.assign(grad_out.begin(), grad_out.end());
  for (std::size_t o = 0; o < m; ++o) {
    const T go = grad_out[o];
    const T* row = p.weights.raw() + o * n;
    T* grow = g.weights.raw() + o * n;
    for (std::size_t i = 0; i < n; ++i) {
      grow[i] = go * input[i];
      g.input[i] += row[i] * go;
    }
  }
  return g;
}

#define PICAR_INSTANTIATE(T)                                                                    \
  template class BasicTensor<T>;                                                                \
  template Shape conv2d_output_shape<T>(const Shape&, const BasicConvParams<T>&);               \
  template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const BasicConvParams<T>&);  \
  template void conv2d_forward_channels<T>(const BasicTensor<T>&, const BasicConvParams<T>&,    \
                                           std::size_t, std::size_t, BasicTensor<T>&);          \
  template std::vector<T> fc_forward<T>(std::span<const T>, const BasicFcParams<T>&);           \
  template void fc_forward_rows<T>(std::span<const T>, const BasicFcParams<T>&, std::size_t,    \
                                   std::size_t, std::span<T>);                                  \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                       \
  template void relu_inplace<T>(std::span<T>);                                                  \
  template void relu_backward_inplace<T>(std::span<const T>, std::span<T>);                     \
  template ConvGradients<T> conv2d_backward<T>(const BasicTensor<T>&, const BasicConvParams<T>&, \
                                               const BasicTensor<T>&, bool);                    \
  template FcGradients<T> fc_backward<T>(std::span<const T>, const BasicFcParams<T>&,           \
                                         std::span<const T>);

PICAR_INSTANTIATE(float)
PICAR_INSTANTIATE(double)

#undef PICAR_INSTANTIATE

}  // namespace picar
