#include "hsiband/autoencoder.h"

#include <cmath>
#include <string>

#include "hsiband/errors.h"

namespace hsiband {
namespace {

template <typename T>
Tensor<T> elu_tensor(const Tensor<T>& z) {
  Tensor<T> a(z.shape());
  elu_forward<T>(z.values(), a.values());
  return a;
}

template <typename T>
Tensor<T> elu_grad(const Tensor<T>& z, const Tensor<T>& grad) {
  Tensor<T> g(z.shape());
  elu_backward<T>(z.values(), grad.values(), g.values());
  return g;
}

// Second decoder resize: h -> p.
template <typename T>
Tensor<T> decoder_resize(const Tensor<T>& x, std::size_t p) {
  if (2 * x.dim(1) >= p) return upsample2x(x, p, p);
  return resize_nearest(x, p, p);
}

template <typename T>
Tensor<T> decoder_resize_backward(const Tensor<T>& grad, const std::vector<std::size_t>& input_shape) {
  const std::size_t p = grad.dim(1);
  if (2 * input_shape[1] >= p) return upsample2x_backward(grad, input_shape);
  return resize_nearest_backward(grad, input_shape);
}

}  // namespace

template <typename T>
std::array<LayerParams<T>, 4> make_autoencoder(std::size_t bands, const std::array<std::size_t, 2>& channels) {
  return {make_conv3x3<T>("ae.enc1", bands, channels[0]), make_conv3x3<T>("ae.enc2", channels[0], channels[1]),
          make_conv3x3<T>("ae.dec1", channels[1], channels[0]), make_conv3x3<T>("ae.dec2", channels[0], bands)};
}

template <typename T>
Tensor<T> ae_forward(std::span<const LayerParams<T>> layers, const Tensor<T>& x, AeCache<T>* cache) {
  if (x.rank() != 3 || x.dim(1) != x.dim(2)) throw ArgumentError("autoencoder: expected a [B][p][p] input");
  const std::size_t p = x.dim(1);
  if (p < 4) throw ArgumentError("autoencoder: patch size " + std::to_string(p) + " < 4");

  AeCache<T> local;
  AeCache<T>& c = cache ? *cache : local;
  c.input = x;
  c.z1 = conv3x3_forward(layers[0], x);
  c.a1 = elu_tensor(c.z1);
  c.pool1 = maxpool2x2_forward(c.a1);
  c.z2 = conv3x3_forward(layers[1], c.pool1.output);
  c.a2 = elu_tensor(c.z2);
  c.pool2 = maxpool2x2_forward(c.a2);
  c.up1 = upsample2x(c.pool2.output);
  c.z3 = conv3x3_forward(layers[2], c.up1);
  c.a3 = elu_tensor(c.z3);
  c.up2 = decoder_resize(c.a3, p);
  c.z4 = conv3x3_forward(layers[3], c.up2);
  c.out = elu_tensor(c.z4);
  return c.out;
}

template <typename T>
Tensor<T> ae_backward(std::span<const LayerParams<T>> layers, const AeCache<T>& c, const Tensor<T>& grad_out,
                      std::span<LayerParams<T>> grads) {
  Tensor<T> g = elu_grad(c.z4, grad_out);
  g = conv3x3_backward(layers[3], c.up2, g, grads[3]);
  g = decoder_resize_backward(g, c.a3.shape());
  g = elu_grad(c.z3, g);
  g = conv3x3_backward(layers[2], c.up1, g, grads[2]);
  g = upsample2x_backward(g, c.pool2.output.shape());
  g = maxpool2x2_backward(g, c.pool2.argmax, c.a2.shape());
  g = elu_grad(c.z2, g);
  g = conv3x3_backward(layers[1], c.pool1.output, g, grads[1]);
  g = maxpool2x2_backward(g, c.pool1.argmax, c.a1.shape());
  g = elu_grad(c.z1, g);
  return conv3x3_backward(layers[0], c.input, g, grads[0]);
}

template <typename T>
double l21_norm(std::span<const T> m, std::size_t cols) {
  double sum_sq = 0.0;
  for (std::size_t r = 0; r * cols < m.size(); ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) row += std::abs(static_cast<double>(m[r * cols + c]));
    sum_sq += row * row;
  }
  return std::sqrt(sum_sq);
}

template <typename T>
void l21_norm_gradient(std::span<const T> m, std::size_t cols, std::span<T> grad) {
  const double norm = l21_norm(m, cols);
  for (std::size_t r = 0; r * cols < m.size(); ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) row += std::abs(static_cast<double>(m[r * cols + c]));
    const double scale = norm > 0.0 ? row / norm : 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T v = m[r * cols + c];
      const double sign = v > T(0) ? 1.0 : (v < T(0) ? -1.0 : 0.0);
      grad[r * cols + c] = static_cast<T>(scale * sign);
    }
  }
}

template <typename T>
LossTerms loss(std::span<const T> recon, std::span<const T> target, std::span<const T> fused_mask,
               std::size_t bands, double lambda) {
  if (recon.size() != target.size()) throw ArgumentError("loss: reconstruction/target size mismatch");
  LossTerms t;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
    t.recon += d * d;
  }
  t.recon *= 0.5;
  t.sparsity = l21_norm(fused_mask, bands);
  t.total = t.recon + lambda * t.sparsity;
  return t;
}

#define HSIBAND_INSTANTIATE_AE(T)                                                                                 \
  template std::array<LayerParams<T>, 4> make_autoencoder<T>(std::size_t, const std::array<std::size_t, 2>&);     \
  template Tensor<T> ae_forward<T>(std::span<const LayerParams<T>>, const Tensor<T>&, AeCache<T>*);               \
  template Tensor<T> ae_backward<T>(std::span<const LayerParams<T>>, const AeCache<T>&, const Tensor<T>&,         \
                                    std::span<LayerParams<T>>);                                                   \
  template double l21_norm<T>(std::span<const T>, std::size_t);                                                   \
  template void l21_norm_gradient<T>(std::span<const T>, std::size_t, std::span<T>);                              \
  template LossTerms loss<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::size_t, double);

HSIBAND_INSTANTIATE_AE(float)
HSIBAND_INSTANTIATE_AE(double)

#undef HSIBAND_INSTANTIATE_AE

}  // namespace hsiband
