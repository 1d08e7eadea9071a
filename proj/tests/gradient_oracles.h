#pragma once

// Finite-difference oracles shared by the unit tests and the acceptance
// binary. Each returns the worst relative error over the probed values.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <cstdint>
#include <iterator>
#include <span>
#include <vector>

#include "hsiband/attention.h"
#include "hsiband/autoencoder.h"
#include "hsiband/gradcheck.h"
#include "hsiband/layers.h"
#include "hsiband/model.h"
#include "hsiband/rng.h"

namespace oracles {

using namespace hsiband;

// Values bounded away from zero so nothing sits on the ELU kink.
template <typename T>
void fill_off_kink(std::span<T> v, Rng& rng) {
  for (T& x : v) {
    const double mag = rng.uniform(0.1, 1.0);
    x = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
  }
}

template <typename T>
void fill_uniform(std::span<T> v, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (T& x : v) x = static_cast<T>(rng.uniform(lo, hi));
}

// Scalar head: L = sum_i r_i * y_i with fixed random r.
template <typename T>
T weighted_sum(std::span<const T> y, std::span<const T> r) {
  T s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
  return s;
}

template <typename T>
LayerParams<T> cast_layer(const LayerParams<double>& src) {
  LayerParams<T> out;
  out.kind = src.kind;
  out.name = src.name;
  out.weights = Tensor<T>(src.weights.shape());
  out.biases = Tensor<T>(src.biases.shape());
  std::copy(src.weights.values().begin(), src.weights.values().end(), out.weights.values().begin());
  std::copy(src.biases.values().begin(), src.biases.values().end(), out.biases.values().begin());
  return out;
}

template <typename To, typename Range>
std::vector<To> cast_values(const Range& v) {
  return std::vector<To>(std::begin(v), std::end(v));
}

template <typename T>
Tensor<T> cast_tensor(const Tensor<double>& t) {
  Tensor<T> out(t.shape());
  std::copy(t.values().begin(), t.values().end(), out.values().begin());
  return out;
}

// Every check builds its instance in double, computes the analytic gradient
// in T, and compares it against central differences of the double forward.
// In 32-bit mode this isolates the precision of the backward pass from the
// cancellation error of differencing a float-valued loss.
constexpr double kEps = 1e-5;

template <typename T>
double dense_elu_check(Rng& rng) {
  const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(6);
  auto layer = make_dense<double>("d", in, out);
  glorot_uniform(layer, rng);
  fill_uniform(layer.biases.values(), rng, -0.3, 0.3);
  std::vector<double> x(in), r(out);
  fill_off_kink<double>(x, rng);
  fill_uniform<double>(r, rng);

  const auto layer_t = cast_layer<T>(layer);
  const auto x_t = cast_values<T>(x), r_t = cast_values<T>(r);
  std::vector<T> z(out), grad_z(out), grad_x(in);
  dense_forward<T>(layer_t, x_t, z);
  elu_backward<T>(z, r_t, grad_z);
  auto grads = layer_t.zeros_like();
  dense_backward<T>(layer_t, x_t, grad_z, grad_x, grads);

  auto forward = [&] {
    std::vector<double> zz(out), a(out);
    dense_forward<double>(layer, x, zz);
    elu_forward<double>(zz, a);
    return weighted_sum<double>(a, r);
  };
  const auto gw = cast_values<double>(grads.weights.values());
  const auto gb = cast_values<double>(grads.biases.values());
  const auto gx = cast_values<double>(grad_x);
  const GradProbe<double> probes[] = {{layer.weights.values(), gw}, {layer.biases.values(), gb}, {x, gx}};
  return finite_diff_check<double>(probes, forward, kEps).max_rel_error;
}

template <typename T>
double conv_pool_check(Rng& rng) {
  const std::size_t c_in = 1 + rng.below(3), c_out = 1 + rng.below(3);
  const std::size_t h = 2 + rng.below(5), w = 2 + rng.below(5);
  auto layer = make_conv3x3<double>("c", c_in, c_out);
  glorot_uniform(layer, rng);
  fill_uniform(layer.biases.values(), rng, -0.3, 0.3);
  Tensor<double> x({c_in, h, w});
  fill_uniform(x.values(), rng);
  const Tensor<double> y0 = conv3x3_forward(layer, x);
  Tensor<double> r(maxpool2x2_forward(y0).output.shape());
  fill_uniform(r.values(), rng);
  if (has_pool_ties(y0)) return 0.0;

  const auto layer_t = cast_layer<T>(layer);
  const auto x_t = cast_tensor<T>(x);
  const Tensor<T> y_t = conv3x3_forward(layer_t, x_t);
  const auto pooled_t = maxpool2x2_forward(y_t);
  auto grads = layer_t.zeros_like();
  const Tensor<T> grad_y = maxpool2x2_backward(cast_tensor<T>(r), pooled_t.argmax, y_t.shape());
  const Tensor<T> grad_x = conv3x3_backward(layer_t, x_t, grad_y, grads);

  auto forward = [&] {
    const auto pooled = maxpool2x2_forward(conv3x3_forward(layer, x));
    return weighted_sum<double>(pooled.output.values(), r.values());
  };
  const auto gw = cast_values<double>(grads.weights.values());
  const auto gb = cast_values<double>(grads.biases.values());
  const auto gx = cast_values<double>(grad_x.values());
  const GradProbe<double> probes[] = {
      {layer.weights.values(), gw}, {layer.biases.values(), gb}, {x.values(), gx}};
  return finite_diff_check<double>(probes, forward, kEps).max_rel_error;
}

template <typename T>
double sigmoid_check(Rng& rng) {
  const std::size_t n = 1 + rng.below(8);
  std::vector<double> x(n), r(n);
  fill_uniform<double>(x, rng, -4.0, 4.0);
  fill_uniform<double>(r, rng);
  const auto x_t = cast_values<T>(x), r_t = cast_values<T>(r);
  std::vector<T> y(n), g(n);
  sigmoid_forward<T>(x_t, y);
  sigmoid_backward<T>(y, r_t, g);
  auto forward = [&] {
    std::vector<double> out(n);
    sigmoid_forward<double>(x, out);
    return weighted_sum<double>(out, r);
  };
  const auto gx = cast_values<double>(g);
  const GradProbe<double> probes[] = {{x, gx}};
  return finite_diff_check<double>(probes, forward, kEps).max_rel_error;
}

template <typename T>
double resize_check(Rng& rng) {
  const std::size_t c = 1 + rng.below(3), h = 1 + rng.below(4), w = 1 + rng.below(4);
  Tensor<double> x({c, h, w});
  fill_uniform(x.values(), rng);
  const bool use_upsample = rng.uniform() < 0.5;
  const std::size_t oh = use_upsample ? 2 * h - rng.below(2) : 1 + rng.below(9);
  const std::size_t ow = use_upsample ? 2 * w - rng.below(2) : 1 + rng.below(9);
  auto apply = [&](const Tensor<double>& in) {
    return use_upsample ? upsample2x(in, oh, ow) : resize_nearest(in, oh, ow);
  };
  Tensor<double> r(apply(x).shape());
  fill_uniform(r.values(), rng);
  const auto r_t = cast_tensor<T>(r);
  const Tensor<T> g = use_upsample ? upsample2x_backward(r_t, x.shape()) : resize_nearest_backward(r_t, x.shape());
  auto forward = [&] { return weighted_sum<double>(apply(x).values(), r.values()); };
  const auto gx = cast_values<double>(g.values());
  const GradProbe<double> probes[] = {{x.values(), gx}};
  return finite_diff_check<double>(probes, forward, kEps).max_rel_error;
}

inline double worst_of(double (*check)(Rng&), std::uint64_t seed, int instances = 25) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) worst = std::max(worst, check(rng));
  return worst;
}


// Central-difference comparison that also reports the error restricted to
// coordinates the difference can resolve. A double loss of magnitude L moves
// in steps of ulp(L), so a numeric derivative carries an absolute error near
// ulp(L) / (2 eps); a coordinate needs |a| well above that (here 1e5 times)
// before a relative error of 1e-5 is meaningful.
struct ResolvedCheck {
  double max_rel_error = 0.0;
  double resolved_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t below_floor = 0;
  double floor = 0.0;
};

inline ResolvedCheck resolved_check(std::span<const GradProbe<double>> probes, const std::function<double()>& loss,
                                    double eps) {
  ResolvedCheck out;
  const double l0 = std::abs(loss());
  out.floor = 1e5 * (std::nextafter(l0, 2 * l0 + 1) - l0) / (2 * eps);
  for (const auto& probe : probes) {
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
      const GradProbe<double> one[] = {{probe.values.subspan(i, 1), probe.analytic.subspan(i, 1)}};
      const double err = finite_diff_check<double>(one, loss, eps).max_rel_error;
      out.max_rel_error = std::max(out.max_rel_error, err);
      if (std::abs(probe.analytic[i]) < out.floor) {
        ++out.below_floor;
      } else {
        out.resolved_rel_error = std::max(out.resolved_rel_error, err);
      }
      ++out.checked;
    }
  }
  return out;
}

// Autoencoder alone on a [B][p][p] input with a linear head.
// skipped is set when a pooling window is tied (derivative undefined).
inline ResolvedCheck autoencoder_check(Rng& rng, std::size_t bands, std::size_t p, double eps, bool* skipped) {
  auto layers = make_autoencoder<double>(bands, {4, 3});
  for (auto& l : layers) {
    glorot_uniform(l, rng);
    fill_uniform(l.biases.values(), rng, -0.3, 0.3);
  }
  Tensor<double> x({bands, p, p});
  fill_uniform(x.values(), rng, 0.0, 1.0);
  AeCache<double> cache;
  const Tensor<double> y = ae_forward<double>(layers, x, &cache);
  *skipped = has_pool_ties(cache.a1) || has_pool_ties(cache.a2);
  if (*skipped) return {};
  Tensor<double> r(y.shape());
  fill_uniform(r.values(), rng);

  std::array<LayerParams<double>, 4> grads;
  for (std::size_t i = 0; i < 4; ++i) grads[i] = layers[i].zeros_like();
  const Tensor<double> gx = ae_backward<double>(layers, cache, r, grads);

  auto forward = [&] { return weighted_sum<double>(ae_forward<double>(layers, x).values(), r.values()); };
  std::vector<GradProbe<double>> probes;
  for (std::size_t i = 0; i < 4; ++i) {
    probes.push_back({layers[i].weights.values(), grads[i].weights.values()});
    probes.push_back({layers[i].biases.values(), grads[i].biases.values()});
  }
  probes.push_back({x.values(), gx.values()});
  return resolved_check(probes, forward, eps);
}

// Both attention branches, fusion and mask application with a linear head
// on the masked patch.
inline double attention_chain_check(Rng& rng, Fusion fusion, std::size_t bands = 3, std::size_t p = 3,
                                    double eps = 1e-4) {
  const std::size_t P = p * p;
  auto hsi = make_fc_stack<double>("h", bands, {4, 5, 4}, bands);
  auto lid = make_fc_stack<double>("l", P, {6, 5, 7}, P);
  for (auto* stack : {&hsi, &lid}) {
    for (auto& l : *stack) {
      glorot_uniform(l, rng);
      fill_uniform(l.biases.values(), rng, -0.3, 0.3);
    }
  }
  std::vector<double> x(P * bands), z(P), r(P * bands);
  fill_uniform<double>(x, rng, 0.0, 1.0);
  fill_uniform<double>(z, rng, 0.0, 1.0);
  fill_uniform<double>(r, rng);

  auto forward = [&] {
    std::vector<double> mh(P * bands), ml(P), fused(P * bands), masked(P * bands);
    hsi_attention_forward<double>(hsi, x, bands, mh);
    lidar_attention_forward<double>(lid, z, ml);
    fuse_masks<double>(mh, ml, bands, fusion, fused);
    apply_mask<double>(x, fused, masked);
    return weighted_sum<double>(masked, r);
  };

  std::vector<double> mh(P * bands), ml(P);
  std::vector<FcStackCache<double>> hcaches;
  FcStackCache<double> lcache;
  hsi_attention_forward<double>(hsi, x, bands, mh, &hcaches);
  lidar_attention_forward<double>(lid, z, ml, &lcache);
  // d/dM of sum r * (x * M) is r * x
  std::vector<double> g_fused(P * bands), g_h(P * bands), g_l(P);
  for (std::size_t i = 0; i < g_fused.size(); ++i) g_fused[i] = r[i] * x[i];
  fuse_masks_backward<double>(mh, ml, bands, fusion, g_fused, g_h, g_l);

  std::array<LayerParams<double>, 4> gh, gl;
  for (std::size_t i = 0; i < 4; ++i) {
    gh[i] = hsi[i].zeros_like();
    gl[i] = lid[i].zeros_like();
  }
  for (std::size_t q = 0; q < P; ++q) {
    fc_stack_backward<double>(hsi, std::span<const double>(x).subspan(q * bands, bands), hcaches[q],
                              std::span<const double>(g_h).subspan(q * bands, bands), gh);
  }
  fc_stack_backward<double>(lid, z, lcache, g_l, gl);

  std::vector<GradProbe<double>> probes;
  for (std::size_t i = 0; i < 4; ++i) {
    probes.push_back({hsi[i].weights.values(), gh[i].weights.values()});
    probes.push_back({hsi[i].biases.values(), gh[i].biases.values()});
    probes.push_back({lid[i].weights.values(), gl[i].weights.values()});
    probes.push_back({lid[i].biases.values(), gl[i].biases.values()});
  }
  return finite_diff_check<double>(probes, forward, eps).max_rel_error;
}

// The full training objective (attention, fusion, mask, autoencoder,
// reconstruction and sparsity terms) against every model parameter.
inline ResolvedCheck end_to_end_check(std::uint64_t seed, double lambda = 0.1, std::size_t bands = 3,
                                      std::size_t p = 4, std::size_t samples = 2,
                                      std::array<std::size_t, 2> channels = {8, 4}, double eps = 3e-5) {
  Rng rng(seed);
  BandAttentionModel<double> model(bands, p, AttentionNetConfig{}, AutoencoderConfig{channels, lambda}, seed);
  for (auto& l : model.params()) fill_uniform(l.biases.values(), rng, -0.2, 0.2);

  const std::size_t P = p * p;
  std::vector<std::vector<double>> hsi(samples, std::vector<double>(P * bands));
  std::vector<std::vector<double>> lid(samples, std::vector<double>(P));
  std::vector<SampleView<double>> batch;
  for (std::size_t n = 0; n < samples; ++n) {
    fill_uniform<double>(hsi[n], rng, 0.0, 1.0);
    fill_uniform<double>(lid[n], rng, 0.0, 1.0);
    batch.push_back({hsi[n], lid[n]});
  }

  std::vector<LayerParams<double>> grads;
  batch_objective<double>(model, batch, lambda, &grads);
  auto forward = [&] { return batch_objective<double>(model, batch, lambda, nullptr).total; };
  std::vector<GradProbe<double>> probes;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    probes.push_back({model.params()[i].weights.values(), grads[i].weights.values()});
    probes.push_back({model.params()[i].biases.values(), grads[i].biases.values()});
  }
  return resolved_check(probes, forward, eps);
}

}  // namespace oracles
