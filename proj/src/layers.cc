#include "hsiband/layers.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsiband/errors.h"

namespace hsiband {

template <typename T>
std::size_t LayerParams<T>::fan_in() const {
  if (kind == LayerKind::dense) return weights.dim(1);
  if (kind == LayerKind::conv3x3) return weights.dim(1) * 9;
  return 0;
}

template <typename T>
std::size_t LayerParams<T>::fan_out() const {
  if (kind == LayerKind::dense) return weights.dim(0);
  if (kind == LayerKind::conv3x3) return weights.dim(0) * 9;
  return 0;
}

template <typename T>
LayerParams<T> LayerParams<T>::zeros_like() const {
  return {kind, name, Tensor<T>(weights.shape()), Tensor<T>(biases.shape())};
}

template <typename T>
LayerParams<T> make_dense(std::string name, std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ArgumentError("dense layer " + name + ": zero width");
  return {LayerKind::dense, std::move(name), Tensor<T>({out, in}), Tensor<T>({out})};
}

template <typename T>
LayerParams<T> make_conv3x3(std::string name, std::size_t c_in, std::size_t c_out) {
  if (c_in == 0 || c_out == 0) throw ArgumentError("conv layer " + name + ": zero channels");
  return {LayerKind::conv3x3, std::move(name), Tensor<T>({c_out, c_in, 3, 3}), Tensor<T>({c_out})};
}

template <typename T>
void glorot_uniform(LayerParams<T>& layer, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(layer.fan_in() + layer.fan_out()));
  for (T& w : layer.weights.values()) w = static_cast<T>(rng.uniform(-s, s));
  layer.biases.fill(T(0));
}

template <typename T>
void dense_forward(const LayerParams<T>& layer, std::span<const T> x, std::span<T> y) {
  const std::size_t out = layer.weights.dim(0);
  const std::size_t in = layer.weights.dim(1);
  if (x.size() != in || y.size() != out)
    throw ArgumentError("dense " + layer.name + ": shape mismatch");
  const T* w = layer.weights.data();
  for (std::size_t o = 0; o < out; ++o) {
    T acc = layer.biases[o];
    const T* row = w + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

template <typename T>
void dense_backward(const LayerParams<T>& layer, std::span<const T> x, std::span<const T> grad_out,
                    std::span<T> grad_in, LayerParams<T>& grads) {
  const std::size_t out = layer.weights.dim(0);
  const std::size_t in = layer.weights.dim(1);
  if (x.size() != in || grad_out.size() != out || (!grad_in.empty() && grad_in.size() != in))
    throw ArgumentError("dense " + layer.name + ": shape mismatch in backward");
  const T* w = layer.weights.data();
  T* gw = grads.weights.data();
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), T(0));
  for (std::size_t o = 0; o < out; ++o) {
    const T g = grad_out[o];
    grads.biases[o] += g;
    if (g == T(0)) continue;
    T* grow = gw + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += g * x[i];
    if (!grad_in.empty()) {
      const T* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) grad_in[i] += g * row[i];
    }
  }
}

namespace {

// Valid output range along one axis for kernel offset d in {-1, 0, 1}.
struct Span1 {
  std::size_t begin;
  std::size_t end;
};

Span1 valid_range(std::size_t n, int d) {
  if (d < 0) return {1, n};
  if (d > 0) return {0, n == 0 ? 0 : n - 1};
  return {0, n};
}

}  // namespace

template <typename T>
Tensor<T> conv3x3_forward(const LayerParams<T>& layer, const Tensor<T>& x) {
  const std::size_t c_out = layer.weights.dim(0);
  const std::size_t c_in = layer.weights.dim(1);
  if (x.rank() != 3 || x.dim(0) != c_in)
    throw ArgumentError("conv " + layer.name + ": expected " + std::to_string(c_in) + " input channels");
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  Tensor<T> y({c_out, h, w});
  for (std::size_t co = 0; co < c_out; ++co) {
    T* out = y.data() + co * h * w;
    std::fill(out, out + h * w, layer.biases[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* in = x.data() + ci * h * w;
      const T* k = layer.weights.data() + (co * c_in + ci) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        const Span1 rows = valid_range(h, dy);
        for (int dx = -1; dx <= 1; ++dx) {
          const T kv = k[(dy + 1) * 3 + (dx + 1)];
          const Span1 cols = valid_range(w, dx);
          for (std::size_t i = rows.begin; i < rows.end; ++i) {
            T* orow = out + i * w;
            const T* irow = in + (i + dy) * w;
            for (std::size_t j = cols.begin; j < cols.end; ++j) orow[j] += kv * irow[j + dx];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv3x3_backward(const LayerParams<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out,
                           LayerParams<T>& grads, bool want_grad_in) {
  const std::size_t c_out = layer.weights.dim(0);
  const std::size_t c_in = layer.weights.dim(1);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if (grad_out.rank() != 3 || grad_out.dim(0) != c_out || grad_out.dim(1) != h || grad_out.dim(2) != w)
    throw ArgumentError("conv " + layer.name + ": gradient shape mismatch");

  Tensor<T> grad_in;
  if (want_grad_in) grad_in = Tensor<T>(x.shape());
  for (std::size_t co = 0; co < c_out; ++co) {
    const T* g = grad_out.data() + co * h * w;
    T bias_acc = 0;
    for (std::size_t t = 0; t < h * w; ++t) bias_acc += g[t];
    grads.biases[co] += bias_acc;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* in = x.data() + ci * h * w;
      const T* k = layer.weights.data() + (co * c_in + ci) * 9;
      T* gk = grads.weights.data() + (co * c_in + ci) * 9;
      T* gin = want_grad_in ? grad_in.data() + ci * h * w : nullptr;
      for (int dy = -1; dy <= 1; ++dy) {
        const Span1 rows = valid_range(h, dy);
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t kidx = (dy + 1) * 3 + (dx + 1);
          const T kv = k[kidx];
          const Span1 cols = valid_range(w, dx);
          T acc = 0;
          for (std::size_t i = rows.begin; i < rows.end; ++i) {
            const T* grow = g + i * w;
            const T* irow = in + (i + dy) * w;
            for (std::size_t j = cols.begin; j < cols.end; ++j) acc += grow[j] * irow[j + dx];
            if (gin) {
              T* girow = gin + (i + dy) * w;
              for (std::size_t j = cols.begin; j < cols.end; ++j) girow[j + dx] += kv * grow[j];
            }
          }
          gk[kidx] += acc;
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
T elu(T x) {
  return x > T(0) ? x : std::expm1(x);
}

// Branches keep exp() from overflowing; the clamp keeps the result strictly
// inside (0, 1) where rounding would otherwise produce 0 or 1.
template <typename T>
T sigmoid(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T(1) + e);
  }
  return std::clamp(y, std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

template <typename T>
void elu_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = elu(x[i]);
}

template <typename T>
void elu_backward(std::span<const T> x, std::span<const T> grad_out, std::span<T> grad_in) {
  for (std::size_t i = 0; i < x.size(); ++i)
    grad_in[i] = x[i] > T(0) ? grad_out[i] : grad_out[i] * std::exp(x[i]);
}

template <typename T>
void sigmoid_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
}

template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> grad_out, std::span<T> grad_in) {
  for (std::size_t i = 0; i < y.size(); ++i) grad_in[i] = grad_out[i] * y[i] * (T(1) - y[i]);
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& x) {
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  PoolResult<T> r{Tensor<T>({c, oh, ow}), std::vector<std::size_t>(c * oh * ow)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (ch * h + 2 * i + di) * w + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (ch * oh + i) * ow + j;
        r.output[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                              const std::vector<std::size_t>& input_shape) {
  Tensor<T> grad_in(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_in[argmax[o]] += grad_out[o];
  return grad_in;
}

template <typename T>
bool has_pool_ties(const Tensor<T>& x) {
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i + 1 < h; i += 2) {
      for (std::size_t j = 0; j + 1 < w; j += 2) {
        const T v[4] = {x.at(ch, i, j), x.at(ch, i, j + 1), x.at(ch, i + 1, j), x.at(ch, i + 1, j + 1)};
        const T m = *std::max_element(v, v + 4);
        if (std::count(v, v + 4, m) > 1) return true;
      }
    }
  }
  return false;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, std::size_t crop_h, std::size_t crop_w) {
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  const std::size_t oh = crop_h ? crop_h : 2 * h;
  const std::size_t ow = crop_w ? crop_w : 2 * w;
  if (oh > 2 * h || ow > 2 * w) throw ArgumentError("upsample2x: crop larger than 2x input");
  Tensor<T> y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) y.at(ch, i, j) = x.at(ch, i / 2, j / 2);
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& input_shape) {
  Tensor<T> grad_in(input_shape);
  for (std::size_t ch = 0; ch < grad_out.dim(0); ++ch)
    for (std::size_t i = 0; i < grad_out.dim(1); ++i)
      for (std::size_t j = 0; j < grad_out.dim(2); ++j) grad_in.at(ch, i / 2, j / 2) += grad_out.at(ch, i, j);
  return grad_in;
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  Tensor<T> y({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) y.at(ch, i, j) = x.at(ch, i * h / out_h, j * w / out_w);
  return y;
}

template <typename T>
Tensor<T> resize_nearest_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& input_shape) {
  Tensor<T> grad_in(input_shape);
  const std::size_t h = input_shape[1];
  const std::size_t w = input_shape[2];
  const std::size_t oh = grad_out.dim(1);
  const std::size_t ow = grad_out.dim(2);
  for (std::size_t ch = 0; ch < grad_out.dim(0); ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) grad_in.at(ch, i * h / oh, j * w / ow) += grad_out.at(ch, i, j);
  return grad_in;
}

template <typename T>
void sgd_step(std::span<LayerParams<T>> params, std::span<const LayerParams<T>> grads, double lr) {
  if (params.size() != grads.size()) throw ArgumentError("sgd_step: parameter/gradient count mismatch");
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (params[l].weights.size() != grads[l].weights.size() || params[l].biases.size() != grads[l].biases.size())
      throw ArgumentError("sgd_step: shape mismatch in layer " + params[l].name);
    for (const auto* t : {&grads[l].weights, &grads[l].biases}) {
      for (T g : t->values()) {
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in layer " + params[l].name);
      }
    }
  }
  const T step = static_cast<T>(lr);
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto w = params[l].weights.values();
    auto gw = grads[l].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
    auto b = params[l].biases.values();
    auto gb = grads[l].biases.values();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
  }
}

#define HSIBAND_INSTANTIATE_LAYERS(T)                                                                  \
  template struct LayerParams<T>;                                                                      \
  template LayerParams<T> make_dense<T>(std::string, std::size_t, std::size_t);                        \
  template LayerParams<T> make_conv3x3<T>(std::string, std::size_t, std::size_t);                      \
  template void glorot_uniform<T>(LayerParams<T>&, Rng&);                                              \
  template void dense_forward<T>(const LayerParams<T>&, std::span<const T>, std::span<T>);            \
  template void dense_backward<T>(const LayerParams<T>&, std::span<const T>, std::span<const T>,      \
                                  std::span<T>, LayerParams<T>&);                                      \
  template Tensor<T> conv3x3_forward<T>(const LayerParams<T>&, const Tensor<T>&);                      \
  template Tensor<T> conv3x3_backward<T>(const LayerParams<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                         LayerParams<T>&, bool);                                       \
  template T elu<T>(T);                                                                                \
  template T sigmoid<T>(T);                                                                            \
  template void elu_forward<T>(std::span<const T>, std::span<T>);                                      \
  template void elu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);                 \
  template void sigmoid_forward<T>(std::span<const T>, std::span<T>);                                  \
  template void sigmoid_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);             \
  template PoolResult<T> maxpool2x2_forward<T>(const Tensor<T>&);                                      \
  template Tensor<T> maxpool2x2_backward<T>(const Tensor<T>&, const std::vector<std::size_t>&,         \
                                            const std::vector<std::size_t>&);                          \
  template bool has_pool_ties<T>(const Tensor<T>&);                                                    \
  template Tensor<T> upsample2x<T>(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> upsample2x_backward<T>(const Tensor<T>&, const std::vector<std::size_t>&);        \
  template Tensor<T> resize_nearest<T>(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> resize_nearest_backward<T>(const Tensor<T>&, const std::vector<std::size_t>&);    \
  template void sgd_step<T>(std::span<LayerParams<T>>, std::span<const LayerParams<T>>, double);

HSIBAND_INSTANTIATE_LAYERS(float)
HSIBAND_INSTANTIATE_LAYERS(double)

#undef HSIBAND_INSTANTIATE_LAYERS

}  // namespace hsiband
