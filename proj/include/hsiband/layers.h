#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsiband/rng.h"
#include "hsiband/tensor.h"

namespace hsiband {

enum class LayerKind : std::uint8_t {
  dense = 0,
  conv3x3 = 1,
  activation = 2,
  pool2x2 = 3,
  upsample2x = 4,
};

// Trainable parameters of one layer. Dense weights are [out][in]; conv
// weights are [c_out][c_in][3][3]. Biases are [out] / [c_out].
template <typename T>
struct LayerParams {
  LayerKind kind = LayerKind::dense;
  std::string name;
  Tensor<T> weights;
  Tensor<T> biases;

  std::size_t fan_in() const;
  std::size_t fan_out() const;

  // Same kind, name and shapes, all zero. Used as a gradient accumulator.
  LayerParams zeros_like() const;
};

template <typename T>
LayerParams<T> make_dense(std::string name, std::size_t in, std::size_t out);
template <typename T>
LayerParams<T> make_conv3x3(std::string name, std::size_t c_in, std::size_t c_out);

// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)); biases zeroed.
template <typename T>
void glorot_uniform(LayerParams<T>& layer, Rng& rng);

template <typename T>
void dense_forward(const LayerParams<T>& layer, std::span<const T> x, std::span<T> y);
// Accumulates parameter gradients into `grads`. grad_in may be empty when the
// input gradient is not needed.
template <typename T>
void dense_backward(const LayerParams<T>& layer, std::span<const T> x, std::span<const T> grad_out,
                    std::span<T> grad_in, LayerParams<T>& grads);

// Zero-padded ("same") 3x3 cross-correlation on [C][h][w] tensors.
template <typename T>
Tensor<T> conv3x3_forward(const LayerParams<T>& layer, const Tensor<T>& x);
// Returns the input gradient (empty when want_grad_in is false).
template <typename T>
Tensor<T> conv3x3_backward(const LayerParams<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out,
                           LayerParams<T>& grads, bool want_grad_in = true);

// ELU with alpha = 1.
template <typename T>
T elu(T x);
template <typename T>
T sigmoid(T x);

template <typename T>
void elu_forward(std::span<const T> x, std::span<T> y);
// Gradient expressed through the forward input x.
template <typename T>
void elu_backward(std::span<const T> x, std::span<const T> grad_out, std::span<T> grad_in);
template <typename T>
void sigmoid_forward(std::span<const T> x, std::span<T> y);
// Gradient expressed through the forward output y.
template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> grad_out, std::span<T> grad_in);

// 2x2 max pooling with floor semantics: odd trailing rows/cols are dropped.
// argmax holds flat input indices; ties resolve to the first element in
// row-major window order.
template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                              const std::vector<std::size_t>& input_shape);

// True when some pooling window has two equal maxima (non-differentiable).
template <typename T>
bool has_pool_ties(const Tensor<T>& x);

// Nearest-neighbour 2x upsampling, optionally cropped to (crop_h, crop_w)
// taken from the top-left; zero means no crop on that axis.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, std::size_t crop_h = 0, std::size_t crop_w = 0);
// Adjoint: 2x2 block sums restricted to the cropped region.
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& input_shape);

// Nearest-neighbour resize to (out_h, out_w); source index floor(i * in / out).
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
template <typename T>
Tensor<T> resize_nearest_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& input_shape);

// Plain SGD: p <- p - lr * g. Throws NumericalError naming the first layer
// with a non-finite gradient; no parameter is touched in that case.
template <typename T>
void sgd_step(std::span<LayerParams<T>> params, std::span<const LayerParams<T>> grads, double lr);

struct SgdConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
};

}  // namespace hsiband
