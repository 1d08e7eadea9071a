#include "hsiband/attention.h"

#include <string>

#include "hsiband/errors.h"
#include "hsiband/raster.h"

namespace hsiband {

Fusion parse_fusion(std::string_view name) {
  if (name == "multiply") return Fusion::multiply;
  if (name == "add") return Fusion::add;
  throw ArgumentError("unknown fusion '" + std::string(name) + "' (expected multiply|add)");
}

std::string_view to_string(Fusion f) { return f == Fusion::multiply ? "multiply" : "add"; }

template <typename T>
std::array<LayerParams<T>, 4> make_fc_stack(std::string_view prefix, std::size_t in,
                                            const std::array<std::size_t, 3>& hidden, std::size_t out) {
  const std::string p(prefix);
  return {make_dense<T>(p + ".fc1", in, hidden[0]), make_dense<T>(p + ".fc2", hidden[0], hidden[1]),
          make_dense<T>(p + ".fc3", hidden[1], hidden[2]), make_dense<T>(p + ".fc4", hidden[2], out)};
}

template <typename T>
void fc_stack_forward(std::span<const LayerParams<T>> layers, std::span<const T> x, FcStackCache<T>& cache) {
  std::span<const T> input = x;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t width = layers[l].weights.dim(0);
    cache.pre[l].resize(width);
    cache.act[l].resize(width);
    dense_forward<T>(layers[l], input, cache.pre[l]);
    if (l < 3) {
      elu_forward<T>(cache.pre[l], cache.act[l]);
    } else {
      sigmoid_forward<T>(cache.pre[l], cache.act[l]);
    }
    input = cache.act[l];
  }
}

template <typename T>
void fc_stack_backward(std::span<const LayerParams<T>> layers, std::span<const T> x, const FcStackCache<T>& cache,
                       std::span<const T> grad_out, std::span<LayerParams<T>> grads) {
  std::vector<T> grad(grad_out.begin(), grad_out.end());
  std::vector<T> grad_pre(grad.size());
  sigmoid_backward<T>(cache.act[3], grad, grad_pre);
  for (std::size_t l = 4; l-- > 0;) {
    std::span<const T> input = l == 0 ? x : std::span<const T>(cache.act[l - 1]);
    std::vector<T> grad_in(l == 0 ? 0 : input.size());
    dense_backward<T>(layers[l], input, grad_pre, grad_in, grads[l]);
    if (l == 0) break;
    grad_pre.resize(grad_in.size());
    elu_backward<T>(cache.pre[l - 1], grad_in, grad_pre);
  }
}

template <typename T>
void hsi_attention_forward(std::span<const LayerParams<T>> layers, std::span<const T> patch, std::size_t bands,
                           std::span<T> mask, std::vector<FcStackCache<T>>* caches) {
  if (bands == 0 || patch.size() % bands != 0 || mask.size() != patch.size() || layers[0].weights.dim(1) != bands ||
      layers[3].weights.dim(0) != bands)
    throw ArgumentError("hsi attention: shape mismatch");
  const std::size_t pixels = patch.size() / bands;
  FcStackCache<T> local;
  if (caches) caches->resize(pixels);
  for (std::size_t q = 0; q < pixels; ++q) {
    FcStackCache<T>& cache = caches ? (*caches)[q] : local;
    fc_stack_forward<T>(layers, patch.subspan(q * bands, bands), cache);
    std::copy(cache.act[3].begin(), cache.act[3].end(), mask.begin() + q * bands);
  }
}

template <typename T>
void lidar_attention_forward(std::span<const LayerParams<T>> layers, std::span<const T> patch, std::span<T> mask,
                             FcStackCache<T>* cache) {
  if (mask.size() != patch.size() || layers[0].weights.dim(1) != patch.size() ||
      layers[3].weights.dim(0) != patch.size())
    throw ArgumentError("lidar attention: shape mismatch");
  FcStackCache<T> local;
  FcStackCache<T>& c = cache ? *cache : local;
  fc_stack_forward<T>(layers, patch, c);
  std::copy(c.act[3].begin(), c.act[3].end(), mask.begin());
}

template <typename T>
void fuse_masks(std::span<const T> hsi_mask, std::span<const T> lidar_mask, std::size_t bands, Fusion fusion,
                std::span<T> fused) {
  if (hsi_mask.size() != lidar_mask.size() * bands || fused.size() != hsi_mask.size())
    throw ArgumentError("fuse_masks: dimension mismatch");
  for (std::size_t q = 0; q < lidar_mask.size(); ++q) {
    for (std::size_t b = 0; b < bands; ++b) {
      const std::size_t i = q * bands + b;
      fused[i] = fusion == Fusion::multiply ? hsi_mask[i] * lidar_mask[q] : (hsi_mask[i] + lidar_mask[q]) / T(2);
    }
  }
}

template <typename T>
void fuse_masks_backward(std::span<const T> hsi_mask, std::span<const T> lidar_mask, std::size_t bands,
                         Fusion fusion, std::span<const T> grad_fused, std::span<T> grad_hsi,
                         std::span<T> grad_lidar) {
  for (std::size_t q = 0; q < lidar_mask.size(); ++q) {
    T acc = 0;
    for (std::size_t b = 0; b < bands; ++b) {
      const std::size_t i = q * bands + b;
      if (fusion == Fusion::multiply) {
        grad_hsi[i] = grad_fused[i] * lidar_mask[q];
        acc += grad_fused[i] * hsi_mask[i];
      } else {
        grad_hsi[i] = grad_fused[i] / T(2);
        acc += grad_fused[i] / T(2);
      }
    }
    grad_lidar[q] = acc;
  }
}

template <typename T>
void apply_mask(std::span<const T> x, std::span<const T> mask, std::span<T> out) {
  if (x.size() != mask.size() || out.size() != x.size()) throw ArgumentError("apply_mask: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
}

AttentionTensor fuse_masks(const AttentionTensor& hsi, const AttentionTensor& lidar, Fusion fusion) {
  if (hsi.kind != AttentionKind::hsi || lidar.kind != AttentionKind::lidar)
    throw ArgumentError("fuse_masks: expected an hsi and a lidar tensor");
  if (hsi.count != lidar.count || hsi.patch_size != lidar.patch_size || lidar.bands != 1 ||
      hsi.values.size() != hsi.count * hsi.sample_stride() || lidar.values.size() != lidar.count * lidar.sample_stride())
    throw ArgumentError("fuse_masks: dimension mismatch");
  AttentionTensor out{AttentionKind::fused, hsi.count, hsi.patch_size, hsi.bands,
                      std::vector<float>(hsi.values.size())};
  fuse_masks<float>(hsi.values, lidar.values, hsi.bands, fusion, out.values);
  return out;
}

std::vector<float> apply_mask(std::span<const float> patches, const AttentionTensor& mask) {
  std::vector<float> out(patches.size());
  apply_mask<float>(patches, mask.values, out);
  return out;
}

void save_attention(const AttentionTensor& tensor, const std::filesystem::path& path) {
  const std::size_t p = tensor.patch_size;
  HsiCube cube(tensor.count * p, p, tensor.bands);
  for (std::size_t n = 0; n < tensor.count; ++n)
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c)
        for (std::size_t b = 0; b < tensor.bands; ++b)
          cube.at(b, n * p + r, c) = tensor.values[((n * p + r) * p + c) * tensor.bands + b];
  save_raster(cube, path);
}

#define HSIBAND_INSTANTIATE_ATTENTION(T)                                                                          \
  template std::array<LayerParams<T>, 4> make_fc_stack<T>(std::string_view, std::size_t,                          \
                                                          const std::array<std::size_t, 3>&, std::size_t);        \
  template void fc_stack_forward<T>(std::span<const LayerParams<T>>, std::span<const T>, FcStackCache<T>&);       \
  template void fc_stack_backward<T>(std::span<const LayerParams<T>>, std::span<const T>, const FcStackCache<T>&, \
                                     std::span<const T>, std::span<LayerParams<T>>);                              \
  template void hsi_attention_forward<T>(std::span<const LayerParams<T>>, std::span<const T>, std::size_t,        \
                                         std::span<T>, std::vector<FcStackCache<T>>*);                            \
  template void lidar_attention_forward<T>(std::span<const LayerParams<T>>, std::span<const T>, std::span<T>,     \
                                           FcStackCache<T>*);                                                     \
  template void fuse_masks<T>(std::span<const T>, std::span<const T>, std::size_t, Fusion, std::span<T>);         \
  template void fuse_masks_backward<T>(std::span<const T>, std::span<const T>, std::size_t, Fusion,               \
                                       std::span<const T>, std::span<T>, std::span<T>);                           \
  template void apply_mask<T>(std::span<const T>, std::span<const T>, std::span<T>);

HSIBAND_INSTANTIATE_ATTENTION(float)
HSIBAND_INSTANTIATE_ATTENTION(double)

#undef HSIBAND_INSTANTIATE_ATTENTION

}  // namespace hsiband
