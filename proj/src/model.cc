#include "hsiband/model.h"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "hsiband/errors.h"
#include "hsiband/parallel.h"
#include "hsiband/rng.h"

namespace hsiband {
namespace {

std::array<std::size_t, 3> resolve(const std::array<std::size_t, 3>& widths, std::size_t fallback) {
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = widths[i] ? widths[i] : fallback;
  return out;
}

// [P][B] -> [B][p][p]
template <typename T>
Tensor<T> to_planar(std::span<const T> pixel_major, std::size_t bands, std::size_t p) {
  Tensor<T> t({bands, p, p});
  const std::size_t pixels = p * p;
  for (std::size_t q = 0; q < pixels; ++q)
    for (std::size_t b = 0; b < bands; ++b) t[b * pixels + q] = pixel_major[q * bands + b];
  return t;
}

template <typename T>
struct SampleWork {
  std::vector<T> hsi_mask;
  std::vector<T> lidar_mask;
  std::vector<T> fused;
  std::vector<FcStackCache<T>> hsi_caches;
  FcStackCache<T> lidar_cache;
  AeCache<T> ae;
  double recon_loss = 0.0;
  double sparsity = 0.0;
  std::vector<LayerParams<T>> grads;
};

}  // namespace

template <typename T>
BandAttentionModel<T>::BandAttentionModel(std::size_t bands, std::size_t patch_size,
                                          const AttentionNetConfig& attention, const AutoencoderConfig& autoencoder,
                                          std::uint64_t seed)
    : bands_(bands), patch_size_(patch_size), fusion_(attention.fusion) {
  if (bands == 0) throw ArgumentError("model: zero bands");
  if (patch_size < 4) throw ArgumentError("model: patch size must be >= 4");
  const std::size_t pixels = patch_size * patch_size;
  for (auto& l : make_fc_stack<T>("att.hsi", bands, resolve(attention.hsi_hidden, bands), bands))
    layers_.push_back(std::move(l));
  for (auto& l : make_fc_stack<T>("att.lidar", pixels, resolve(attention.lidar_hidden, pixels), pixels))
    layers_.push_back(std::move(l));
  for (auto& l : make_autoencoder<T>(bands, autoencoder.channels)) layers_.push_back(std::move(l));

  Rng rng(seed);
  for (auto& l : layers_) glorot_uniform(l, rng);
}

template <typename T>
BandAttentionModel<T> BandAttentionModel<T>::from_layers(std::vector<LayerParams<T>> layers, Fusion fusion) {
  if (layers.size() != kLayerCount)
    throw DataError("checkpoint: expected " + std::to_string(kLayerCount) + " layers, found " +
                    std::to_string(layers.size()));
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    const LayerKind want = i < 8 ? LayerKind::dense : LayerKind::conv3x3;
    if (layers[i].kind != want) throw DataError("checkpoint: layer " + std::to_string(i) + " has the wrong kind");
  }
  auto out_of = [&](std::size_t i) { return layers[i].weights.dim(0); };
  auto in_of = [&](std::size_t i) { return layers[i].weights.dim(1); };

  BandAttentionModel m;
  m.bands_ = in_of(0);
  const std::size_t pixels = in_of(4);
  m.patch_size_ = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pixels))));
  m.fusion_ = fusion;
  bool ok = m.patch_size_ * m.patch_size_ == pixels && m.patch_size_ >= 4;
  for (std::size_t i : {1, 2, 3, 5, 6, 7}) ok = ok && in_of(i) == out_of(i - 1);
  ok = ok && out_of(3) == m.bands_ && out_of(7) == pixels;
  // Autoencoder chain B -> c1 -> c2 -> c1 -> B.
  ok = ok && in_of(8) == m.bands_ && in_of(9) == out_of(8) && in_of(10) == out_of(9) && out_of(10) == out_of(8) &&
       in_of(11) == out_of(10) && out_of(11) == m.bands_;
  if (!ok) throw DataError("checkpoint: layer shapes do not form an attention autoencoder");

  static constexpr const char* kNames[kLayerCount] = {
      "att.hsi.fc1",   "att.hsi.fc2",   "att.hsi.fc3",   "att.hsi.fc4", "att.lidar.fc1", "att.lidar.fc2",
      "att.lidar.fc3", "att.lidar.fc4", "ae.enc1",       "ae.enc2",     "ae.dec1",       "ae.dec2"};
  for (std::size_t i = 0; i < kLayerCount; ++i) layers[i].name = kNames[i];
  m.layers_ = std::move(layers);
  return m;
}

template <typename T>
std::vector<LayerParams<T>> BandAttentionModel<T>::zero_grads() const {
  std::vector<LayerParams<T>> g;
  g.reserve(layers_.size());
  for (const auto& l : layers_) g.push_back(l.zeros_like());
  return g;
}

template <typename T>
void BandAttentionModel<T>::fused_mask(std::span<const T> hsi_patch, std::span<const T> lidar_patch,
                                       std::span<T> fused) const {
  std::vector<T> hsi_mask(hsi_patch.size());
  std::vector<T> lidar_mask(lidar_patch.size());
  hsi_attention_forward<T>(hsi_attention(), hsi_patch, bands_, hsi_mask);
  lidar_attention_forward<T>(lidar_attention(), lidar_patch, lidar_mask);
  fuse_masks<T>(hsi_mask, lidar_mask, bands_, fusion_, fused);
}

template <typename T>
LossTerms batch_objective(const BandAttentionModel<T>& model, std::span<const SampleView<T>> batch, double lambda,
                          std::vector<LayerParams<T>>* grads, std::size_t threads) {
  const std::size_t bands = model.bands();
  const std::size_t p = model.patch_size();
  const std::size_t pixels = model.pixels();
  std::vector<SampleWork<T>> work(batch.size());

  parallel_for(batch.size(), threads, [&](std::size_t n) {
    const SampleView<T>& s = batch[n];
    if (s.hsi.size() != pixels * bands || s.lidar.size() != pixels)
      throw ArgumentError("batch_objective: sample " + std::to_string(n) + " has the wrong shape");
    SampleWork<T>& w = work[n];
    w.hsi_mask.resize(pixels * bands);
    w.lidar_mask.resize(pixels);
    w.fused.resize(pixels * bands);
    hsi_attention_forward<T>(model.hsi_attention(), s.hsi, bands, w.hsi_mask, &w.hsi_caches);
    lidar_attention_forward<T>(model.lidar_attention(), s.lidar, w.lidar_mask, &w.lidar_cache);
    fuse_masks<T>(w.hsi_mask, w.lidar_mask, bands, model.fusion(), w.fused);

    std::vector<T> masked(pixels * bands);
    apply_mask<T>(s.hsi, w.fused, masked);
    const Tensor<T> recon = ae_forward<T>(model.autoencoder(), to_planar<T>(masked, bands, p), &w.ae);
    const Tensor<T> target = to_planar<T>(s.hsi, bands, p);
    w.recon_loss = loss<T>(recon.values(), target.values(), {}, bands, 0.0).recon;
    w.sparsity = l21_norm<T>(w.fused, bands);
  });

  // Each sample carries its own P x B mask norm; the batch objective sums them.
  LossTerms terms;
  for (const auto& w : work) {
    terms.recon += w.recon_loss;
    terms.sparsity += w.sparsity;
  }
  terms.total = terms.recon + lambda * terms.sparsity;
  if (!grads) return terms;

  parallel_for(batch.size(), threads, [&](std::size_t n) {
    const SampleView<T>& s = batch[n];
    SampleWork<T>& w = work[n];
    w.grads = model.zero_grads();
    std::span<LayerParams<T>> g(w.grads);

    // d/d recon of 0.5 * ||recon - target||^2
    Tensor<T> grad_recon = w.ae.out;
    const Tensor<T> target = to_planar<T>(s.hsi, bands, p);
    for (std::size_t i = 0; i < grad_recon.size(); ++i) grad_recon[i] -= target[i];
    const Tensor<T> grad_masked = ae_backward<T>(model.autoencoder(), w.ae, grad_recon, g.subspan(8, 4));

    std::vector<T> grad_fused(pixels * bands);
    for (std::size_t q = 0; q < pixels; ++q) {
      double row = 0.0;
      for (std::size_t b = 0; b < bands; ++b) row += std::abs(static_cast<double>(w.fused[q * bands + b]));
      const double sparsity_scale = w.sparsity > 0.0 ? lambda * row / w.sparsity : 0.0;
      for (std::size_t b = 0; b < bands; ++b) {
        const std::size_t i = q * bands + b;
        const T v = w.fused[i];
        const double sign = v > T(0) ? 1.0 : (v < T(0) ? -1.0 : 0.0);
        grad_fused[i] = grad_masked[b * pixels + q] * s.hsi[i] + static_cast<T>(sparsity_scale * sign);
      }
    }

    std::vector<T> grad_hsi(pixels * bands);
    std::vector<T> grad_lidar(pixels);
    fuse_masks_backward<T>(w.hsi_mask, w.lidar_mask, bands, model.fusion(), grad_fused, grad_hsi, grad_lidar);
    for (std::size_t q = 0; q < pixels; ++q) {
      fc_stack_backward<T>(model.hsi_attention(), s.hsi.subspan(q * bands, bands), w.hsi_caches[q],
                           std::span<const T>(grad_hsi).subspan(q * bands, bands), g.subspan(0, 4));
    }
    fc_stack_backward<T>(model.lidar_attention(), s.lidar, w.lidar_cache, grad_lidar, g.subspan(4, 4));
  });

  *grads = model.zero_grads();
  for (const auto& w : work) {
    for (std::size_t l = 0; l < grads->size(); ++l) {
      auto dst_w = (*grads)[l].weights.values();
      auto src_w = w.grads[l].weights.values();
      for (std::size_t i = 0; i < dst_w.size(); ++i) dst_w[i] += src_w[i];
      auto dst_b = (*grads)[l].biases.values();
      auto src_b = w.grads[l].biases.values();
      for (std::size_t i = 0; i < dst_b.size(); ++i) dst_b[i] += src_b[i];
    }
  }
  return terms;
}

double TrainReport::mean_fused_mask() const {
  if (attention.values.empty()) return 0.0;
  double sum = 0.0;
  for (float v : attention.values) sum += v;
  return sum / static_cast<double>(attention.values.size());
}

std::uint64_t shuffle_seed(std::uint64_t seed) { return seed ^ 0x53485546464C45ULL; }

TrainReport train(BandAttentionModel<float>& model, const PatchSet& patches, const TrainConfig& config) {
  if (patches.bands != model.bands() || patches.patch_size != model.patch_size())
    throw ArgumentError("train: patch set does not match the model dimensions");
  if (patches.count == 0) throw ArgumentError("train: empty patch set");
  const SgdConfig& sgd = config.sgd;
  if (!(sgd.learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");
  if (sgd.epochs == 0 || sgd.batch_size == 0) throw ArgumentError("train: epochs and batch size must be positive");
  if (config.lambda < 0.0) throw ArgumentError("train: lambda must be non-negative");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = patches.count;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed(sgd.seed));

  TrainReport report;
  std::vector<SampleView<float>> batch;
  std::vector<LayerParams<float>> grads;
  for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0, recon_sum = 0.0, sparsity_sum = 0.0;
    for (std::size_t begin = 0, step = 0; begin < n; begin += sgd.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + sgd.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back({patches.hsi_patch(order[i]), patches.lidar_patch(order[i])});
      const std::string where = "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
      const LossTerms terms = batch_objective<float>(model, batch, config.lambda, &grads, config.threads);
      if (!std::isfinite(terms.total)) throw NumericalError("non-finite loss at " + where);
      try {
        sgd_step<float>(model.params(), grads, sgd.learning_rate);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at " + where);
      }
      loss_sum += terms.total;
      recon_sum += terms.recon;
      sparsity_sum += terms.sparsity;
    }
    report.loss.push_back(loss_sum / static_cast<double>(n));
    report.recon.push_back(recon_sum / static_cast<double>(n));
    report.sparsity.push_back(sparsity_sum / static_cast<double>(n));
  }
  report.attention = compute_attention(model, patches, config.threads);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

AttentionTensor compute_attention(const BandAttentionModel<float>& model, const PatchSet& patches,
                                  std::size_t threads) {
  if (patches.bands != model.bands() || patches.patch_size != model.patch_size())
    throw ArgumentError("attention: patch set does not match the model dimensions (model B=" +
                        std::to_string(model.bands()) + ", p=" + std::to_string(model.patch_size()) + ")");
  AttentionTensor out{AttentionKind::fused, patches.count, patches.patch_size, patches.bands, {}};
  const std::size_t stride = out.sample_stride();
  out.values.resize(patches.count * stride);
  parallel_for(patches.count, threads, [&](std::size_t n) {
    model.fused_mask(patches.hsi_patch(n), patches.lidar_patch(n),
                     std::span<float>(out.values).subspan(n * stride, stride));
  });
  return out;
}

template class BandAttentionModel<float>;
template class BandAttentionModel<double>;
template LossTerms batch_objective<float>(const BandAttentionModel<float>&, std::span<const SampleView<float>>,
                                          double, std::vector<LayerParams<float>>*, std::size_t);
template LossTerms batch_objective<double>(const BandAttentionModel<double>&, std::span<const SampleView<double>>,
                                           double, std::vector<LayerParams<double>>*, std::size_t);

}  // namespace hsiband
