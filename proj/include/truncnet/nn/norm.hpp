#pragma once

#include <cmath>

#include "truncnet/nn/module.hpp"

namespace truncnet::nn {

/// Per-channel batch normalization over (N, H, W). In training mode batch
/// statistics normalize and update the running estimates (unbiased
/// variance, exponential moving average with `momentum`); in eval mode the
/// running estimates are used.
template <typename T>
class BatchNorm2d final : public Module<T> {
 public:
  explicit BatchNorm2d(std::int64_t channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels),
        eps_(eps),
        momentum_(momentum),
        weight_({channels}, true, T{1}),
        bias_({channels}, true, T{0}),
        running_mean_({channels}, false, T{0}),
        running_var_({channels}, false, T{1}) {}

  std::int64_t channels() const noexcept { return channels_; }
  double eps() const noexcept { return eps_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  Parameter<T>& running_mean() noexcept { return running_mean_; }
  Parameter<T>& running_var() noexcept { return running_var_; }

  void reset_parameters(Rng&) override {
    weight_.value.fill(T{1});
    bias_.value.fill(T{0});
    running_mean_.value.fill(T{0});
    running_var_.value.fill(T{1});
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 4 || x.dim(1) != channels_) {
      throw ShapeError("batch norm expects (N, " + std::to_string(channels_) + ", H, W), got " + to_string(x.shape()));
    }
    const auto n = x.dim(0), c = channels_, p = x.dim(2) * x.dim(3);
    const double m = static_cast<double>(n * p);
    batch_mode_ = this->training();
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(static_cast<std::size_t>(c), T{0});
    Tensor<T> y(x.shape());
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double mean = 0.0;
      double var = 0.0;
      if (batch_mode_) {
        if (m < 2) throw ShapeError("batch norm in training mode needs more than one value per channel");
        for (std::int64_t b = 0; b < n; ++b) {
          const T* src = x.data() + (b * c + ch) * p;
          for (std::int64_t i = 0; i < p; ++i) mean += src[i];
        }
        mean /= m;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* src = x.data() + (b * c + ch) * p;
          for (std::int64_t i = 0; i < p; ++i) {
            const double d = src[i] - mean;
            var += d * d;
          }
        }
        var /= m;
        auto& rm = running_mean_.value[static_cast<std::size_t>(ch)];
        auto& rv = running_var_.value[static_cast<std::size_t>(ch)];
        rm = static_cast<T>((1.0 - momentum_) * rm + momentum_ * mean);
        rv = static_cast<T>((1.0 - momentum_) * rv + momentum_ * var * m / (m - 1.0));
      } else {
        mean = running_mean_.value[static_cast<std::size_t>(ch)];
        var = running_var_.value[static_cast<std::size_t>(ch)];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      inv_std_[static_cast<std::size_t>(ch)] = inv;
      const T gamma = weight_.value[static_cast<std::size_t>(ch)];
      const T beta = bias_.value[static_cast<std::size_t>(ch)];
      const T mu = static_cast<T>(mean);
      for (std::int64_t b = 0; b < n; ++b) {
        const T* src = x.data() + (b * c + ch) * p;
        T* xh = xhat_.data() + (b * c + ch) * p;
        T* dst = y.data() + (b * c + ch) * p;
        for (std::int64_t i = 0; i < p; ++i) {
          xh[i] = (src[i] - mu) * inv;
          dst[i] = gamma * xh[i] + beta;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const auto n = dy.dim(0), c = channels_, p = dy.dim(2) * dy.dim(3);
    const T m = static_cast<T>(n * p);
    Tensor<T> dx(dy.shape());
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T sum_dy{0};
      T sum_dy_xhat{0};
      for (std::int64_t b = 0; b < n; ++b) {
        const T* g = dy.data() + (b * c + ch) * p;
        const T* xh = xhat_.data() + (b * c + ch) * p;
        for (std::int64_t i = 0; i < p; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += g[i] * xh[i];
        }
      }
      weight_.grad[static_cast<std::size_t>(ch)] += sum_dy_xhat;
      bias_.grad[static_cast<std::size_t>(ch)] += sum_dy;
      const T gamma = weight_.value[static_cast<std::size_t>(ch)];
      const T inv = inv_std_[static_cast<std::size_t>(ch)];
      for (std::int64_t b = 0; b < n; ++b) {
        const T* g = dy.data() + (b * c + ch) * p;
        const T* xh = xhat_.data() + (b * c + ch) * p;
        T* dst = dx.data() + (b * c + ch) * p;
        if (batch_mode_) {
          const T scale = gamma * inv / m;
          for (std::int64_t i = 0; i < p; ++i) dst[i] = scale * (m * g[i] - sum_dy - xh[i] * sum_dy_xhat);
        } else {
          for (std::int64_t i = 0; i < p; ++i) dst[i] = g[i] * gamma * inv;
        }
      }
    }
    return dx;
  }

 protected:
  std::vector<std::pair<std::string, Parameter<T>*>> own_parameters() override {
    return {{"weight", &weight_}, {"bias", &bias_}, {"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

 private:
  std::int64_t channels_;
  double eps_;
  double momentum_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Parameter<T> running_mean_;
  Parameter<T> running_var_;
  bool batch_mode_ = false;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

}  // namespace truncnet::nn
