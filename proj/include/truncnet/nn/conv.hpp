#pragma once

#include <Eigen/Core>
#include <cmath>

#include "truncnet/nn/module.hpp"

namespace truncnet::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvOptions {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  std::int64_t pad_h = 0;
  std::int64_t pad_w = 0;
  std::int64_t groups = 1;
  bool bias = false;

  /// Square kernel with "same"-style padding k/2.
  static ConvOptions square(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                            std::int64_t groups = 1, bool bias = false) {
    return {in, out, k, k, stride, stride, k / 2, k / 2, groups, bias};
  }
};

inline std::int64_t conv_out_size(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
  const std::int64_t span = in + 2 * p - k;
  return span < 0 ? 0 : span / s + 1;
}

template <typename T>
class Conv2d final : public Module<T> {
 public:
  explicit Conv2d(const ConvOptions& o) : opt_(o) {
    if (o.in_channels % o.groups != 0 || o.out_channels % o.groups != 0) {
      throw ShapeError("conv channels not divisible by groups");
    }
    weight_ = Parameter<T>({o.out_channels, o.in_channels / o.groups, o.kernel_h, o.kernel_w}, true);
    if (o.bias) bias_ = Parameter<T>({o.out_channels}, true);
  }

  const ConvOptions& options() const noexcept { return opt_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  /// Kaiming-normal on fan-out for the weight (ReLU gain), zero bias.
  void reset_parameters(Rng& rng) override {
    const double fan_out = static_cast<double>(opt_.out_channels / opt_.groups * opt_.kernel_h * opt_.kernel_w);
    const double stddev = std::sqrt(2.0 / fan_out);
    for (auto& v : weight_.value.span()) v = static_cast<T>(rng.normal(0.0, stddev));
    if (opt_.bias) bias_.value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x);
    input_ = x;
    const auto n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const auto ho = conv_out_size(h, opt_.kernel_h, opt_.stride_h, opt_.pad_h);
    const auto wo = conv_out_size(w, opt_.kernel_w, opt_.stride_w, opt_.pad_w);
    if (ho <= 0 || wo <= 0) {
      throw ShapeError("input " + to_string(x.shape()) + " too small for a " + std::to_string(opt_.kernel_h) +
                       "x" + std::to_string(opt_.kernel_w) + " convolution");
    }
    Tensor<T> y({n, opt_.out_channels, ho, wo});
    if (is_depthwise()) {
      depthwise_forward(x, y);
    } else {
      const auto cg = opt_.in_channels / opt_.groups;
      const auto og = opt_.out_channels / opt_.groups;
      const auto k = cg * opt_.kernel_h * opt_.kernel_w;
      const auto p = ho * wo;
      RowMatrix<T> col;
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t g = 0; g < opt_.groups; ++g) {
          ConstMatrixMap<T> wg(weight_.value.data() + g * og * k, og, k);
          MatrixMap<T> yg(y.data() + (b * opt_.out_channels + g * og) * p, og, p);
          if (is_pointwise()) {
            ConstMatrixMap<T> xg(x.data() + (b * opt_.in_channels + g * cg) * h * w, cg, p);
            yg.noalias() = wg * xg;
          } else {
            im2col(x, b, g * cg, cg, ho, wo, col);
            yg.noalias() = wg * col;
          }
        }
      }
    }
    if (opt_.bias) add_bias(y);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Tensor<T>& x = input_;
    const auto n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const auto ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx(x.shape());
    if (opt_.bias) {
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t o = 0; o < opt_.out_channels; ++o) {
          const T* src = dy.data() + (b * opt_.out_channels + o) * ho * wo;
          T acc{0};
          for (std::int64_t i = 0; i < ho * wo; ++i) acc += src[i];
          bias_.grad[static_cast<std::size_t>(o)] += acc;
        }
      }
    }
    if (is_depthwise()) {
      depthwise_backward(x, dy, dx);
      return dx;
    }
    const auto cg = opt_.in_channels / opt_.groups;
    const auto og = opt_.out_channels / opt_.groups;
    const auto k = cg * opt_.kernel_h * opt_.kernel_w;
    const auto p = ho * wo;
    RowMatrix<T> col;
    RowMatrix<T> dcol;
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t g = 0; g < opt_.groups; ++g) {
        ConstMatrixMap<T> wg(weight_.value.data() + g * og * k, og, k);
        MatrixMap<T> dwg(weight_.grad.data() + g * og * k, og, k);
        ConstMatrixMap<T> dyg(dy.data() + (b * opt_.out_channels + g * og) * p, og, p);
        if (is_pointwise()) {
          ConstMatrixMap<T> xg(x.data() + (b * opt_.in_channels + g * cg) * h * w, cg, p);
          MatrixMap<T> dxg(dx.data() + (b * opt_.in_channels + g * cg) * h * w, cg, p);
          dwg.noalias() += dyg * xg.transpose();
          dxg.noalias() = wg.transpose() * dyg;
        } else {
          im2col(x, b, g * cg, cg, ho, wo, col);
          dwg.noalias() += dyg * col.transpose();
          dcol.noalias() = wg.transpose() * dyg;
          col2im(dcol, b, g * cg, cg, ho, wo, dx);
        }
      }
    }
    return dx;
  }

 protected:
  std::vector<std::pair<std::string, Parameter<T>*>> own_parameters() override {
    if (opt_.bias) return {{"weight", &weight_}, {"bias", &bias_}};
    return {{"weight", &weight_}};
  }

 private:
  bool is_pointwise() const noexcept {
    return opt_.kernel_h == 1 && opt_.kernel_w == 1 && opt_.stride_h == 1 && opt_.stride_w == 1 && opt_.pad_h == 0 &&
           opt_.pad_w == 0;
  }
  bool is_depthwise() const noexcept {
    return opt_.groups > 1 && opt_.groups == opt_.in_channels && opt_.groups == opt_.out_channels;
  }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != opt_.in_channels) {
      throw ShapeError("conv expects (N, " + std::to_string(opt_.in_channels) + ", H, W), got " +
                       to_string(x.shape()));
    }
  }

  void add_bias(Tensor<T>& y) const {
    const auto n = y.dim(0), p = y.dim(2) * y.dim(3);
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t o = 0; o < opt_.out_channels; ++o) {
        T* dst = y.data() + (b * opt_.out_channels + o) * p;
        const T v = bias_.value[static_cast<std::size_t>(o)];
        for (std::int64_t i = 0; i < p; ++i) dst[i] += v;
      }
    }
  }

  void im2col(const Tensor<T>& x, std::int64_t b, std::int64_t c0, std::int64_t cg, std::int64_t ho,
              std::int64_t wo, RowMatrix<T>& col) const {
    const auto h = x.dim(2), w = x.dim(3);
    const auto kh = opt_.kernel_h, kw = opt_.kernel_w;
    col.resize(cg * kh * kw, ho * wo);
    for (std::int64_t c = 0; c < cg; ++c) {
      const T* src = x.data() + ((b * x.dim(1)) + c0 + c) * h * w;
      for (std::int64_t i = 0; i < kh; ++i) {
        for (std::int64_t j = 0; j < kw; ++j) {
          T* dst = col.data() + ((c * kh + i) * kw + j) * ho * wo;
          for (std::int64_t oh = 0; oh < ho; ++oh) {
            const std::int64_t ih = oh * opt_.stride_h - opt_.pad_h + i;
            if (ih < 0 || ih >= h) {
              std::fill(dst + oh * wo, dst + (oh + 1) * wo, T{0});
              continue;
            }
            for (std::int64_t ow = 0; ow < wo; ++ow) {
              const std::int64_t iw = ow * opt_.stride_w - opt_.pad_w + j;
              dst[oh * wo + ow] = (iw < 0 || iw >= w) ? T{0} : src[ih * w + iw];
            }
          }
        }
      }
    }
  }

  void col2im(const RowMatrix<T>& col, std::int64_t b, std::int64_t c0, std::int64_t cg, std::int64_t ho,
              std::int64_t wo, Tensor<T>& dx) const {
    const auto h = dx.dim(2), w = dx.dim(3);
    const auto kh = opt_.kernel_h, kw = opt_.kernel_w;
    for (std::int64_t c = 0; c < cg; ++c) {
      T* dst = dx.data() + ((b * dx.dim(1)) + c0 + c) * h * w;
      for (std::int64_t i = 0; i < kh; ++i) {
        for (std::int64_t j = 0; j < kw; ++j) {
          const T* src = col.data() + ((c * kh + i) * kw + j) * ho * wo;
          for (std::int64_t oh = 0; oh < ho; ++oh) {
            const std::int64_t ih = oh * opt_.stride_h - opt_.pad_h + i;
            if (ih < 0 || ih >= h) continue;
            for (std::int64_t ow = 0; ow < wo; ++ow) {
              const std::int64_t iw = ow * opt_.stride_w - opt_.pad_w + j;
              if (iw >= 0 && iw < w) dst[ih * w + iw] += src[oh * wo + ow];
            }
          }
        }
      }
    }
  }

  void depthwise_forward(const Tensor<T>& x, Tensor<T>& y) const {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ho = y.dim(2), wo = y.dim(3);
    const auto kh = opt_.kernel_h, kw = opt_.kernel_w;
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* src = x.data() + (b * c + ch) * h * w;
        const T* ker = weight_.value.data() + ch * kh * kw;
        T* dst = y.data() + (b * c + ch) * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            T acc{0};
            for (std::int64_t i = 0; i < kh; ++i) {
              const std::int64_t ih = oh * opt_.stride_h - opt_.pad_h + i;
              if (ih < 0 || ih >= h) continue;
              for (std::int64_t j = 0; j < kw; ++j) {
                const std::int64_t iw = ow * opt_.stride_w - opt_.pad_w + j;
                if (iw >= 0 && iw < w) acc += ker[i * kw + j] * src[ih * w + iw];
              }
            }
            dst[oh * wo + ow] = acc;
          }
        }
      }
    }
  }

  void depthwise_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ho = dy.dim(2), wo = dy.dim(3);
    const auto kh = opt_.kernel_h, kw = opt_.kernel_w;
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* src = x.data() + (b * c + ch) * h * w;
        const T* ker = weight_.value.data() + ch * kh * kw;
        T* dker = weight_.grad.data() + ch * kh * kw;
        const T* g = dy.data() + (b * c + ch) * ho * wo;
        T* dsrc = dx.data() + (b * c + ch) * h * w;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const T go = g[oh * wo + ow];
            for (std::int64_t i = 0; i < kh; ++i) {
              const std::int64_t ih = oh * opt_.stride_h - opt_.pad_h + i;
              if (ih < 0 || ih >= h) continue;
              for (std::int64_t j = 0; j < kw; ++j) {
                const std::int64_t iw = ow * opt_.stride_w - opt_.pad_w + j;
                if (iw < 0 || iw >= w) continue;
                dker[i * kw + j] += go * src[ih * w + iw];
                dsrc[ih * w + iw] += go * ker[i * kw + j];
              }
            }
          }
        }
      }
    }
  }

  ConvOptions opt_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

}  // namespace truncnet::nn
