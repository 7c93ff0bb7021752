#pragma once

#include <cmath>

#include "truncnet/nn/conv.hpp"

namespace truncnet::nn {

/// Fully connected layer on (N, in) inputs.
template <typename T>
class Linear final : public Module<T> {
 public:
  Linear(std::int64_t in_features, std::int64_t out_features)
      : in_(in_features), out_(out_features), weight_({out_features, in_features}, true), bias_({out_features}, true) {}

  std::int64_t in_features() const noexcept { return in_; }
  std::int64_t out_features() const noexcept { return out_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  void reset_parameters(Rng& rng) override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : weight_.value.span()) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias_.value.span()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw ShapeError("linear expects (N, " + std::to_string(in_) + "), got " + to_string(x.shape()));
    }
    input_ = x;
    const auto n = x.dim(0);
    Tensor<T> y({n, out_});
    ConstMatrixMap<T> xm(x.data(), n, in_);
    ConstMatrixMap<T> wm(weight_.value.data(), out_, in_);
    MatrixMap<T> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t o = 0; o < out_; ++o) ym(b, o) += bias_.value[static_cast<std::size_t>(o)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const auto n = dy.dim(0);
    ConstMatrixMap<T> dym(dy.data(), n, out_);
    ConstMatrixMap<T> xm(input_.data(), n, in_);
    ConstMatrixMap<T> wm(weight_.value.data(), out_, in_);
    MatrixMap<T> dwm(weight_.grad.data(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    for (std::int64_t o = 0; o < out_; ++o) bias_.grad[static_cast<std::size_t>(o)] += dym.col(o).sum();
    Tensor<T> dx({n, in_});
    MatrixMap<T> dxm(dx.data(), n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

 protected:
  std::vector<std::pair<std::string, Parameter<T>*>> own_parameters() override {
    return {{"weight", &weight_}, {"bias", &bias_}};
  }

 private:
  std::int64_t in_;
  std::int64_t out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

}  // namespace truncnet::nn
