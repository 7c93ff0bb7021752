#pragma once

#include <limits>

#include "truncnet/nn/module.hpp"

namespace truncnet::nn {

struct PoolOptions {
  std::int64_t kernel = 2;
  std::int64_t stride = 2;
  std::int64_t pad = 0;
  bool count_include_pad = true;  // average pooling only
};

namespace detail {
inline void pool_out_size(const Shape& in, const PoolOptions& o, std::int64_t& ho, std::int64_t& wo) {
  if (in.size() != 4) throw ShapeError("pooling expects NCHW input, got " + to_string(in));
  ho = (in[2] + 2 * o.pad - o.kernel) / o.stride + 1;
  wo = (in[3] + 2 * o.pad - o.kernel) / o.stride + 1;
  if (in[2] + 2 * o.pad < o.kernel || in[3] + 2 * o.pad < o.kernel) {
    throw ShapeError("input " + to_string(in) + " too small for a " + std::to_string(o.kernel) + "x" +
                     std::to_string(o.kernel) + " pooling window");
  }
}
}  // namespace detail

template <typename T>
class MaxPool2d final : public Module<T> {
 public:
  explicit MaxPool2d(PoolOptions o) : opt_(o) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    std::int64_t ho = 0, wo = 0;
    detail::pool_out_size(x.shape(), opt_, ho, wo);
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    in_shape_ = x.shape();
    Tensor<T> y({n, c, ho, wo});
    argmax_.assign(y.numel(), 0);
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* src = x.data() + plane * h * w;
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t i = 0; i < opt_.kernel; ++i) {
            const auto ih = oh * opt_.stride - opt_.pad + i;
            if (ih < 0 || ih >= h) continue;
            for (std::int64_t j = 0; j < opt_.kernel; ++j) {
              const auto iw = ow * opt_.stride - opt_.pad + j;
              if (iw < 0 || iw >= w) continue;
              if (best_idx < 0 || src[ih * w + iw] > best) {
                best = src[ih * w + iw];
                best_idx = ih * w + iw;
              }
            }
          }
          const auto o = static_cast<std::size_t>((plane * ho + oh) * wo + ow);
          y[o] = best;
          argmax_[o] = plane * h * w + best_idx;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.numel(); ++o) dx[static_cast<std::size_t>(argmax_[o])] += dy[o];
    return dx;
  }

 private:
  PoolOptions opt_;
  Shape in_shape_;
  std::vector<std::int64_t> argmax_;
};

template <typename T>
class AvgPool2d final : public Module<T> {
 public:
  explicit AvgPool2d(PoolOptions o) : opt_(o) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    std::int64_t ho = 0, wo = 0;
    detail::pool_out_size(x.shape(), opt_, ho, wo);
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    in_shape_ = x.shape();
    Tensor<T> y({n, c, ho, wo});
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* src = x.data() + plane * h * w;
      T* dst = y.data() + plane * ho * wo;
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          T acc{0};
          for (std::int64_t i = 0; i < opt_.kernel; ++i) {
            const auto ih = oh * opt_.stride - opt_.pad + i;
            if (ih < 0 || ih >= h) continue;
            for (std::int64_t j = 0; j < opt_.kernel; ++j) {
              const auto iw = ow * opt_.stride - opt_.pad + j;
              if (iw >= 0 && iw < w) acc += src[ih * w + iw];
            }
          }
          dst[oh * wo + ow] = acc / divisor(oh, ow, h, w);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const auto n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const auto ho = dy.dim(2), wo = dy.dim(3);
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* g = dy.data() + plane * ho * wo;
      T* dst = dx.data() + plane * h * w;
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          const T share = g[oh * wo + ow] / divisor(oh, ow, h, w);
          for (std::int64_t i = 0; i < opt_.kernel; ++i) {
            const auto ih = oh * opt_.stride - opt_.pad + i;
            if (ih < 0 || ih >= h) continue;
            for (std::int64_t j = 0; j < opt_.kernel; ++j) {
              const auto iw = ow * opt_.stride - opt_.pad + j;
              if (iw >= 0 && iw < w) dst[ih * w + iw] += share;
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  T divisor(std::int64_t oh, std::int64_t ow, std::int64_t h, std::int64_t w) const {
    auto clip = [&](std::int64_t start, std::int64_t lo, std::int64_t hi) {
      return std::max<std::int64_t>(std::min(start + opt_.kernel, hi) - std::max(start, lo), 0);
    };
    const auto h0 = oh * opt_.stride - opt_.pad;
    const auto w0 = ow * opt_.stride - opt_.pad;
    if (opt_.count_include_pad) {
      return static_cast<T>(clip(h0, -opt_.pad, h + opt_.pad) * clip(w0, -opt_.pad, w + opt_.pad));
    }
    return static_cast<T>(clip(h0, 0, h) * clip(w0, 0, w));
  }

  PoolOptions opt_;
  Shape in_shape_;
};

/// Mean over H and W. Produces (N, C) or, with `keep_dims`, (N, C, 1, 1).
template <typename T>
class GlobalAvgPool final : public Module<T> {
 public:
  explicit GlobalAvgPool(bool keep_dims = false) : keep_dims_(keep_dims) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 4) throw ShapeError("global pooling expects NCHW input, got " + to_string(x.shape()));
    in_shape_ = x.shape();
    const auto n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
    Tensor<T> y(keep_dims_ ? Shape{n, c, 1, 1} : Shape{n, c});
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* src = x.data() + plane * p;
      T acc{0};
      for (std::int64_t i = 0; i < p; ++i) acc += src[i];
      y[static_cast<std::size_t>(plane)] = acc / static_cast<T>(p);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const auto p = in_shape_[2] * in_shape_[3];
    for (std::int64_t plane = 0; plane < in_shape_[0] * in_shape_[1]; ++plane) {
      const T share = dy[static_cast<std::size_t>(plane)] / static_cast<T>(p);
      T* dst = dx.data() + plane * p;
      for (std::int64_t i = 0; i < p; ++i) dst[i] = share;
    }
    return dx;
  }

 private:
  bool keep_dims_;
  Shape in_shape_;
};

}  // namespace truncnet::nn
