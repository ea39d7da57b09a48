#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace picar {

/// Raised whenever operand shapes do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array. Convolution activations are laid out H x W x C.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// 3-D accessor for H x W x C tensors.
  T& at(std::size_t r, std::size_t c, std::size_t ch) {
    return data_[(r * shape_[1] + c) * shape_[2] + ch];
  }
  const T& at(std::size_t r, std::size_t c, std::size_t ch) const {
    return data_[(r * shape_[1] + c) * shape_[2] + ch];
  }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    if (shape_.empty()) return {};
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

struct Stride {
  std::size_t rows = 1;
  std::size_t cols = 1;
  friend bool operator==(const Stride&, const Stride&) = default;
};

/// kernels: kh x kw x in_channels x out_channels. Valid padding only.
template <typename T>
struct BasicConvParams {
  BasicTensor<T> kernels;
  std::vector<T> bias;
  Stride stride;

  std::size_t kernel_rows() const { return kernels.dim(0); }
  std::size_t kernel_cols() const { return kernels.dim(1); }
  std::size_t in_channels() const { return kernels.dim(2); }
  std::size_t out_channels() const { return kernels.dim(3); }
};

/// weights: out_dim x in_dim.
template <typename T>
struct BasicFcParams {
  BasicTensor<T> weights;
  std::vector<T> bias;

  std::size_t out_dim() const { return weights.dim(0); }
  std::size_t in_dim() const { return weights.dim(1); }
};

using ConvParams = BasicConvParams<float>;
using FcParams = BasicFcParams<float>;

template <typename T>
struct ConvGradients {
  BasicTensor<T> input;
  BasicTensor<T> kernels;
  std::vector<T> bias;
};

template <typename T>
struct FcGradients {
  std::vector<T> input;
  BasicTensor<T> weights;
  std::vector<T> bias;
};

/// Output extent of a valid convolution along one axis.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride);

/// Throws ShapeError unless `p` is self-consistent and applicable to an
/// input of `input_shape`. Returns the output shape.
template <typename T>
Shape conv2d_output_shape(const Shape& input_shape, const BasicConvParams<T>& p);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvParams<T>& p);

/// Computes output channels [first, last) into a preallocated `out`.
/// Every channel's result is independent of the range it was computed in,
/// so splitting channels across workers is bit-exact.
template <typename T>
void conv2d_forward_channels(const BasicTensor<T>& input, const BasicConvParams<T>& p,
                             std::size_t first, std::size_t last, BasicTensor<T>& out);

template <typename T>
std::vector<T> fc_forward(std::span<const T> input, const BasicFcParams<T>& p);

/// Rows [first, last) of y = W x + b into `out`.
template <typename T>
void fc_forward_rows(std::span<const T> input, const BasicFcParams<T>& p, std::size_t first,
                     std::size_t last, std::span<T> out);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& t);

template <typename T>
void relu_inplace(std::span<T> values);

/// Masks `grad` where the forward pre-activation was not positive.
template <typename T>
void relu_backward_inplace(std::span<const T> pre_activation, std::span<T> grad);

/// With `want_input_grad` false the returned `input` gradient is left empty
/// (first layer of a network needs none).
template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvParams<T>& p,
                                 const BasicTensor<T>& grad_out, bool want_input_grad = true);

template <typename T>
FcGradients<T> fc_backward(std::span<const T> input, const BasicFcParams<T>& p,
                           std::span<const T> grad_out);

}  // namespace picar
