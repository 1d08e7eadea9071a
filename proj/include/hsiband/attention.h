#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "hsiband/layers.h"

namespace hsiband {

enum class Fusion { multiply, add };

Fusion parse_fusion(std::string_view name);
std::string_view to_string(Fusion f);

// Hidden widths of the two four-layer FC stacks. Zero means "same as input
// width": B for the spectral branch, P = p*p for the LiDAR branch.
struct AttentionNetConfig {
  std::array<std::size_t, 3> hsi_hidden{0, 0, 0};
  std::array<std::size_t, 3> lidar_hidden{0, 0, 0};
  Fusion fusion = Fusion::multiply;
};

// Activations of one FC stack pass, kept for the backward pass.
// pre[l] is the affine output of layer l; act[l] its activation
// (ELU for l < 3, sigmoid for l == 3).
template <typename T>
struct FcStackCache {
  std::array<std::vector<T>, 4> pre;
  std::array<std::vector<T>, 4> act;
};

// Four dense layers: ELU after the first three, sigmoid after the last.
template <typename T>
std::array<LayerParams<T>, 4> make_fc_stack(std::string_view prefix, std::size_t in,
                                            const std::array<std::size_t, 3>& hidden, std::size_t out);

template <typename T>
void fc_stack_forward(std::span<const LayerParams<T>> layers, std::span<const T> x, FcStackCache<T>& cache);
// Accumulates into grads; the input gradient is not produced (inputs are data).
template <typename T>
void fc_stack_backward(std::span<const LayerParams<T>> layers, std::span<const T> x, const FcStackCache<T>& cache,
                       std::span<const T> grad_out, std::span<LayerParams<T>> grads);

// Spectral branch: the stack is applied to each pixel's B-vector with shared
// weights. patch is [P][B]; mask is [P][B]. caches (optional) receives one
// entry per pixel.
template <typename T>
void hsi_attention_forward(std::span<const LayerParams<T>> layers, std::span<const T> patch, std::size_t bands,
                           std::span<T> mask, std::vector<FcStackCache<T>>* caches = nullptr);

// LiDAR branch: the stack maps the flattened P-vector to one value per pixel.
template <typename T>
void lidar_attention_forward(std::span<const LayerParams<T>> layers, std::span<const T> patch, std::span<T> mask,
                             FcStackCache<T>* cache = nullptr);

// fused[q][b] = hsi[q][b] * lid[q]           (multiply)
//             = (hsi[q][b] + lid[q]) / 2     (add, ablation)
template <typename T>
void fuse_masks(std::span<const T> hsi_mask, std::span<const T> lidar_mask, std::size_t bands, Fusion fusion,
                std::span<T> fused);

// Gradients of fuse_masks with respect to both inputs. grad_lidar is
// overwritten (one entry per pixel, summed over bands).
template <typename T>
void fuse_masks_backward(std::span<const T> hsi_mask, std::span<const T> lidar_mask, std::size_t bands,
                         Fusion fusion, std::span<const T> grad_fused, std::span<T> grad_hsi,
                         std::span<T> grad_lidar);

// Elementwise x * mask over equal-length [P][B] buffers.
template <typename T>
void apply_mask(std::span<const T> x, std::span<const T> mask, std::span<T> out);

enum class AttentionKind { hsi, lidar, fused };

// Mask values for a whole patch set, [sample][row][col][band]; the band axis
// has extent 1 for the LiDAR kind.
struct AttentionTensor {
  AttentionKind kind = AttentionKind::fused;
  std::size_t count = 0;
  std::size_t patch_size = 0;
  std::size_t bands = 0;
  std::vector<float> values;

  std::size_t sample_stride() const { return patch_size * patch_size * bands; }
};

// Tensor-level fusion with dimension checks (ArgumentError on mismatch).
AttentionTensor fuse_masks(const AttentionTensor& hsi, const AttentionTensor& lidar, Fusion fusion);
// Elementwise product of a [sample][row][col][band] patch buffer with a mask.
std::vector<float> apply_mask(std::span<const float> patches, const AttentionTensor& mask);

// HSIB export with the sample axis folded into rows: H = N*p, W = p.
void save_attention(const AttentionTensor& tensor, const std::filesystem::path& path);

}  // namespace hsiband
