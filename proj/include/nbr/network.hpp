#pragma once

// Plain convolutional stack with same-size zero padding: every layer is a
// k x k convolution, all but the last followed by ReLU. Tensors are planar
// (channel, row, column) and convolutions are lowered to GEMM through
// im2col, processed in row bands so large images stay within a bounded
// scratch buffer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nbr/error.hpp"
#include "nbr/rng.hpp"

namespace nbr {

template <typename T>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  bool relu = true;
  std::vector<T> weights;  // [out][in][ky][kx]
  std::vector<T> bias;     // [out]

  std::size_t patch_size() const noexcept {
    return static_cast<std::size_t>(in_channels) * kernel * kernel;
  }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

// Gradient buffers shaped like a network's parameters.
template <typename T>
struct LayerGrad {
  std::vector<T> weights;
  std::vector<T> bias;
};

template <typename T>
using Gradients = std::vector<LayerGrad<T>>;

// Eigen's vectorised kernels peel unaligned heads, so the summation order of a
// product depends on operand addresses. Every GEMM operand and result lives in
// one of these buffers to keep results independent of heap layout.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows [y0, y1) of a zero-padded im2col matrix: row (ci, ky, kx), column
// (y - y0) * w + x.
template <typename T>
void im2col(std::span<const T> in, int channels, int h, int w, int kernel, int y0, int y1,
            AlignedVector<T>& cols) {
  const int pad = kernel / 2;
  const int band = y1 - y0;
  const std::size_t ncols = static_cast<std::size_t>(band) * w;
  cols.resize(static_cast<std::size_t>(channels) * kernel * kernel * ncols);
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in.data() + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        T* dst = cols.data() + row * ncols;
        const int dx = kx - pad;
        const int x_lo = std::min(w, std::max(0, -dx));
        const int x_hi = std::max(x_lo, std::min(w, w - dx));
        for (int y = y0; y < y1; ++y, dst += w) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          std::fill(dst, dst + x_lo, T(0));
          std::copy(src + x_lo + dx, src + x_hi + dx, dst + x_lo);
          std::fill(dst + x_hi, dst + w, T(0));
        }
      }
  }
}

// Adjoint of im2col: scatters column gradients back into the input plane.
template <typename T>
void col2im_add(const AlignedVector<T>& cols, int channels, int h, int w, int kernel, int y0,
                int y1, std::span<T> out) {
  const int pad = kernel / 2;
  const std::size_t ncols = static_cast<std::size_t>(y1 - y0) * w;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    T* plane = out.data() + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        const T* src = cols.data() + row * ncols;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h || x_lo >= x_hi) continue;
          T* dst = plane + static_cast<std::size_t>(sy) * w;
          const T* s = src + static_cast<std::size_t>(y - y0) * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x + dx] += s[x];
        }
      }
  }
}

inline int band_rows(std::size_t patch, int w) {
  constexpr std::size_t kScratchElements = std::size_t{1} << 21;
  const std::size_t per_row = patch * static_cast<std::size_t>(w);
  return static_cast<int>(std::max<std::size_t>(1, kScratchElements / std::max<std::size_t>(1, per_row)));
}

}  // namespace detail

// Reusable scratch for forward/backward passes; one per worker thread.
template <typename T>
struct Workspace {
  AlignedVector<T> cols;
  AlignedVector<T> dcols;
  AlignedVector<T> band_out;
  AlignedVector<T> weights;
  AlignedVector<T> grad_weights;
  std::vector<T> grad_a;
  std::vector<T> grad_b;
  // activations[0] is the network input, activations[i + 1] the output of
  // layer i (post-ReLU where applicable).
  std::vector<std::vector<T>> activations;
};

template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<ConvLayer<T>> layers) : layers_(std::move(layers)) {}

  const std::vector<ConvLayer<T>>& layers() const noexcept { return layers_; }
  std::vector<ConvLayer<T>>& layers() noexcept { return layers_; }
  int input_channels() const { return layers_.empty() ? 0 : layers_.front().in_channels; }
  int output_channels() const { return layers_.empty() ? 0 : layers_.back().out_channels; }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  Gradients<T> zero_gradients() const {
    Gradients<T> g(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      g[i].weights.assign(layers_[i].weights.size(), T(0));
      g[i].bias.assign(layers_[i].bias.size(), T(0));
    }
    return g;
  }

  // Runs the stack on a planar input of input_channels() x h x w and returns
  // the planar output. When `keep_activations` is set every intermediate is
  // stored in ws.activations for a following backward().
  std::vector<T> forward(std::span<const T> input, int h, int w, Workspace<T>& ws,
                         bool keep_activations = false) const {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    if (layers_.empty()) throw InvalidParameter("network has no layers");
    if (input.size() != static_cast<std::size_t>(input_channels()) * hw)
      throw ShapeMismatch("network input has " + std::to_string(input.size()) +
                          " values, expected " + std::to_string(input_channels()) + "x" +
                          std::to_string(h) + "x" + std::to_string(w));
    if (keep_activations) {
      ws.activations.resize(layers_.size() + 1);
      ws.activations[0].assign(input.begin(), input.end());
    }
    std::vector<T> cur(input.begin(), input.end());
    std::vector<T> next;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      conv_forward(layers_[i], cur, h, w, next, ws);
      cur.swap(next);
      if (keep_activations) ws.activations[i + 1] = cur;
    }
    return cur;
  }

  // Backpropagates dL/d(output) through the activations cached by the last
  // forward(). Parameter gradients are accumulated into `grads` only for
  // layers with trainable[i] set; input gradients stop at the first layer.
  void backward(std::span<const T> grad_output, int h, int w, Workspace<T>& ws,
                Gradients<T>& grads, const std::vector<bool>& trainable) const {
    const std::size_t n = layers_.size();
    if (ws.activations.size() != n + 1)
      throw InvalidParameter("backward() requires a forward pass with cached activations");
    std::size_t lowest = n;
    for (std::size_t i = 0; i < n; ++i)
      if (trainable[i]) {
        lowest = i;
        break;
      }
    if (lowest == n) return;

    std::vector<T>& g = ws.grad_a;
    std::vector<T>& g_prev = ws.grad_b;
    g.assign(grad_output.begin(), grad_output.end());
    for (std::size_t li = n; li-- > lowest;) {
      const auto& layer = layers_[li];
      const std::vector<T>& out = ws.activations[li + 1];
      if (layer.relu)
        for (std::size_t k = 0; k < g.size(); ++k)
          if (!(out[k] > T(0))) g[k] = T(0);
      const bool need_input_grad = li > lowest;
      conv_backward(layer, ws.activations[li], g, h, w, trainable[li] ? &grads[li] : nullptr,
                    need_input_grad ? &g_prev : nullptr, ws);
      if (need_input_grad) g.swap(g_prev);
    }
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  static void conv_forward(const ConvLayer<T>& layer, const std::vector<T>& in, int h, int w,
                           std::vector<T>& out, Workspace<T>& ws) {
    using Mat = detail::RowMat<T>;
    const std::size_t patch = layer.patch_size();
    const int band = detail::band_rows(patch, w);
    out.resize(static_cast<std::size_t>(layer.out_channels) * h * w);
    ws.weights.assign(layer.weights.begin(), layer.weights.end());
    Eigen::Map<const Mat> wm(ws.weights.data(), layer.out_channels,
                             static_cast<Eigen::Index>(patch));
    for (int y0 = 0; y0 < h; y0 += band) {
      const int y1 = std::min(h, y0 + band);
      const Eigen::Index ncols = static_cast<Eigen::Index>(y1 - y0) * w;
      detail::im2col<T>(in, layer.in_channels, h, w, layer.kernel, y0, y1, ws.cols);
      Eigen::Map<const Mat> cols(ws.cols.data(), static_cast<Eigen::Index>(patch), ncols);
      ws.band_out.resize(static_cast<std::size_t>(layer.out_channels) * ncols);
      Eigen::Map<Mat> res(ws.band_out.data(), layer.out_channels, ncols);
      res.noalias() = wm * cols;
      for (int co = 0; co < layer.out_channels; ++co) {
        const T b = layer.bias[co];
        const T* src = ws.band_out.data() + static_cast<std::size_t>(co) * ncols;
        T* dst = out.data() + (static_cast<std::size_t>(co) * h + y0) * w;
        if (layer.relu)
          for (Eigen::Index k = 0; k < ncols; ++k) dst[k] = std::max(src[k] + b, T(0));
        else
          for (Eigen::Index k = 0; k < ncols; ++k) dst[k] = src[k] + b;
      }
    }
  }

  // `grad_out` is dL/d(pre-activation) for this layer.
  static void conv_backward(const ConvLayer<T>& layer, const std::vector<T>& in,
                            const std::vector<T>& grad_out, int h, int w, LayerGrad<T>* grad,
                            std::vector<T>* grad_in, Workspace<T>& ws) {
    using Mat = detail::RowMat<T>;
    const std::size_t patch = layer.patch_size();
    const int band = detail::band_rows(patch, w);
    ws.weights.assign(layer.weights.begin(), layer.weights.end());
    Eigen::Map<const Mat> wm(ws.weights.data(), layer.out_channels,
                             static_cast<Eigen::Index>(patch));
    if (grad) ws.grad_weights.assign(grad->weights.size(), T(0));
    if (grad_in) grad_in->assign(static_cast<std::size_t>(layer.in_channels) * h * w, T(0));
    for (int y0 = 0; y0 < h; y0 += band) {
      const int y1 = std::min(h, y0 + band);
      const Eigen::Index ncols = static_cast<Eigen::Index>(y1 - y0) * w;
      // Gather this band of the output gradient into a contiguous block.
      ws.band_out.resize(static_cast<std::size_t>(layer.out_channels) * ncols);
      for (int co = 0; co < layer.out_channels; ++co) {
        const T* src = grad_out.data() + (static_cast<std::size_t>(co) * h + y0) * w;
        std::copy(src, src + ncols, ws.band_out.data() + static_cast<std::size_t>(co) * ncols);
      }
      Eigen::Map<const Mat> gout(ws.band_out.data(), layer.out_channels, ncols);
      if (grad) {
        detail::im2col<T>(in, layer.in_channels, h, w, layer.kernel, y0, y1, ws.cols);
        Eigen::Map<const Mat> cols(ws.cols.data(), static_cast<Eigen::Index>(patch), ncols);
        Eigen::Map<Mat> gw(ws.grad_weights.data(), layer.out_channels,
                           static_cast<Eigen::Index>(patch));
        gw.noalias() += gout * cols.transpose();
        for (int co = 0; co < layer.out_channels; ++co) grad->bias[co] += gout.row(co).sum();
      }
      if (grad_in) {
        ws.dcols.resize(patch * static_cast<std::size_t>(ncols));
        Eigen::Map<Mat> dcols(ws.dcols.data(), static_cast<Eigen::Index>(patch), ncols);
        dcols.noalias() = wm.transpose() * gout;
        detail::col2im_add<T>(ws.dcols, layer.in_channels, h, w, layer.kernel, y0, y1,
                              std::span<T>(*grad_in));
      }
    }
    if (grad)
      for (std::size_t k = 0; k < ws.grad_weights.size(); ++k) grad->weights[k] += ws.grad_weights[k];
  }

  std::vector<ConvLayer<T>> layers_;
};

struct NetworkShape {
  int layers = 20;
  int features = 64;
  int kernel = 3;
  int image_channels = 1;
  int attribute_channels = 3;
};

// Fan-in scaled Gaussian initialisation (std = sqrt(2 / fan_in)), zero
// biases. Filter slices that read attribute channels in the first layer are
// scaled by `attribute_scale`.
template <typename T>
Network<T> make_network(const NetworkShape& shape, std::uint64_t seed,
                        double attribute_scale = 0.1) {
  if (shape.layers < 2) throw InvalidParameter("network needs at least 2 layers");
  if (shape.features < 1 || shape.image_channels < 1 || shape.attribute_channels < 0)
    throw InvalidParameter("invalid network channel configuration");
  if (shape.kernel < 1 || shape.kernel % 2 == 0)
    throw InvalidParameter("kernel size must be odd");
  std::vector<ConvLayer<T>> layers(shape.layers);
  for (int i = 0; i < shape.layers; ++i) {
    auto& l = layers[i];
    l.in_channels = i == 0 ? shape.image_channels + shape.attribute_channels : shape.features;
    l.out_channels = i == shape.layers - 1 ? shape.image_channels : shape.features;
    l.kernel = shape.kernel;
    l.relu = i != shape.layers - 1;
    l.weights.resize(static_cast<std::size_t>(l.out_channels) * l.patch_size());
    l.bias.assign(l.out_channels, T(0));
    SplitMix64 rng(derive_key(seed, "conv_init", static_cast<std::uint64_t>(i)));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(l.patch_size()));
    const std::size_t kk = static_cast<std::size_t>(l.kernel) * l.kernel;
    for (std::size_t k = 0; k < l.weights.size(); ++k) {
      double v = std_dev * rng.gaussian();
      const std::size_t in_channel = (k / kk) % l.in_channels;
      if (i == 0 && in_channel >= static_cast<std::size_t>(shape.image_channels))
        v *= attribute_scale;
      l.weights[k] = static_cast<T>(v);
    }
  }
  return Network<T>(std::move(layers));
}

template <typename To, typename From>
Network<To> network_cast(const Network<From>& src) {
  std::vector<ConvLayer<To>> layers;
  layers.reserve(src.layers().size());
  for (const auto& l : src.layers()) {
    ConvLayer<To> o;
    o.in_channels = l.in_channels;
    o.out_channels = l.out_channels;
    o.kernel = l.kernel;
    o.relu = l.relu;
    o.weights.assign(l.weights.begin(), l.weights.end());
    o.bias.assign(l.bias.begin(), l.bias.end());
    layers.push_back(std::move(o));
  }
  return Network<To>(std::move(layers));
}

}  // namespace nbr
