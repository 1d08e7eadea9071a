#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "hsiband/layers.h"

namespace hsiband {

struct AutoencoderConfig {
  std::array<std::size_t, 2> channels{64, 32};
  double lambda = 1e-3;
};

// Intermediate tensors of one autoencoder pass.
//
// Shape trace for a B x p x p input (p >= 4):
//   conv(B->c1) ELU pool   : p        -> floor(p/2) = h1
//   conv(c1->c2) ELU pool  : h1       -> floor(h1/2) = h2
//   up2x conv(c2->c1) ELU  : h2       -> 2*h2
//   resize conv(c1->B) ELU : 2*h2     -> p
// The last resize is a 2x upsample cropped to p when 4*h2 >= p, otherwise a
// nearest-neighbour resize to p (p = 7 gives 7 -> 3 -> 1 -> 2 -> 7).
template <typename T>
struct AeCache {
  Tensor<T> input;
  Tensor<T> z1, a1;
  PoolResult<T> pool1;
  Tensor<T> z2, a2;
  PoolResult<T> pool2;
  Tensor<T> up1, z3, a3;
  Tensor<T> up2, z4, out;
};

template <typename T>
std::array<LayerParams<T>, 4> make_autoencoder(std::size_t bands, const std::array<std::size_t, 2>& channels);

// x is [B][p][p]; the reconstruction has the same shape. Throws
// ArgumentError for p < 4 or a band-count mismatch.
template <typename T>
Tensor<T> ae_forward(std::span<const LayerParams<T>> layers, const Tensor<T>& x, AeCache<T>* cache = nullptr);

// Backpropagates grad_out (d loss / d reconstruction) through a cached pass.
// Returns d loss / d input, and accumulates parameter gradients into grads.
template <typename T>
Tensor<T> ae_backward(std::span<const LayerParams<T>> layers, const AeCache<T>& cache, const Tensor<T>& grad_out,
                      std::span<LayerParams<T>> grads);

// sqrt(sum_r (sum_c |m[r][c]|)^2) for a row-major rows x cols matrix.
template <typename T>
double l21_norm(std::span<const T> m, std::size_t cols);

// d l21 / d m. The subgradient of |.| at 0 is taken as 0, and the whole
// gradient is zero when the norm is zero.
template <typename T>
void l21_norm_gradient(std::span<const T> m, std::size_t cols, std::span<T> grad);

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;     // 0.5 * ||recon - target||^2
  double sparsity = 0.0;  // l21 norm of the fused mask (unweighted)
};

// total = recon + lambda * sparsity
template <typename T>
LossTerms loss(std::span<const T> recon, std::span<const T> target, std::span<const T> fused_mask,
               std::size_t bands, double lambda);

}  // namespace hsiband
