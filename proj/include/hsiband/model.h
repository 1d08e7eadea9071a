#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hsiband/attention.h"
#include "hsiband/autoencoder.h"
#include "hsiband/layers.h"
#include "hsiband/raster.h"

namespace hsiband {

// Dual attention branches plus the convolutional autoencoder, with
// parameters stored in construction order:
//   [0, 4)  spectral attention fc1..fc4
//   [4, 8)  LiDAR attention fc1..fc4
//   [8, 12) autoencoder enc1, enc2, dec1, dec2
template <typename T>
class BandAttentionModel {
 public:
  static constexpr std::size_t kLayerCount = 12;

  // Glorot-uniform initialization drawn from Rng(seed) in layer order.
  BandAttentionModel(std::size_t bands, std::size_t patch_size, const AttentionNetConfig& attention,
                     const AutoencoderConfig& autoencoder, std::uint64_t seed);

  // Rebuilds a model from stored layers, inferring every width from the
  // layer shapes. Throws DataError when the layers do not form a model.
  static BandAttentionModel from_layers(std::vector<LayerParams<T>> layers, Fusion fusion);

  std::size_t bands() const { return bands_; }
  std::size_t patch_size() const { return patch_size_; }
  std::size_t pixels() const { return patch_size_ * patch_size_; }
  Fusion fusion() const { return fusion_; }
  void set_fusion(Fusion f) { fusion_ = f; }

  std::span<LayerParams<T>> params() { return layers_; }
  std::span<const LayerParams<T>> params() const { return layers_; }
  std::span<const LayerParams<T>> hsi_attention() const { return params().subspan(0, 4); }
  std::span<const LayerParams<T>> lidar_attention() const { return params().subspan(4, 4); }
  std::span<const LayerParams<T>> autoencoder() const { return params().subspan(8, 4); }

  std::vector<LayerParams<T>> zero_grads() const;

  // Fused mask for one sample. hsi_patch is [P][B], lidar_patch is [P].
  void fused_mask(std::span<const T> hsi_patch, std::span<const T> lidar_patch, std::span<T> fused) const;

 private:
  BandAttentionModel() = default;

  std::size_t bands_ = 0;
  std::size_t patch_size_ = 0;
  Fusion fusion_ = Fusion::multiply;
  std::vector<LayerParams<T>> layers_;
};

// One training sample: [P][B] spectral patch and [P] LiDAR patch.
template <typename T>
struct SampleView {
  std::span<const T> hsi;
  std::span<const T> lidar;
};

// The training objective over a minibatch:
//   sum_n 0.5 * ||f(X_n * M_n) - X_n||^2 + lambda * l21(M_n)
// with each M_n the P x B fused mask of sample n (rows are pixels). When grads is non-null it is
// overwritten with the gradient of the objective. Per-sample work runs on up
// to `threads` workers; results are reduced in sample order so the output
// does not depend on the thread count.
template <typename T>
LossTerms batch_objective(const BandAttentionModel<T>& model, std::span<const SampleView<T>> batch, double lambda,
                          std::vector<LayerParams<T>>* grads, std::size_t threads = 1);

struct TrainConfig {
  SgdConfig sgd;
  double lambda = 1e-3;
  std::size_t threads = 1;
};

struct TrainReport {
  // Per epoch, summed over batches and divided by N.
  std::vector<double> loss;
  std::vector<double> recon;
  std::vector<double> sparsity;
  double seconds = 0.0;
  // Fused masks of every sample under the final parameters.
  AttentionTensor attention;

  double mean_fused_mask() const;
};

// Minibatch SGD over the patch set. Samples are reshuffled every epoch with
// Fisher-Yates driven by Rng(shuffle_seed(seed)). Throws NumericalError on a
// non-finite loss or gradient, naming epoch and step.
TrainReport train(BandAttentionModel<float>& model, const PatchSet& patches, const TrainConfig& config);

// Fused attention for every sample of a patch set with frozen parameters.
AttentionTensor compute_attention(const BandAttentionModel<float>& model, const PatchSet& patches,
                                  std::size_t threads = 1);

std::uint64_t shuffle_seed(std::uint64_t seed);

}  // namespace hsiband
