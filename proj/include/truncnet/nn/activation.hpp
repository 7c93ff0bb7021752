#pragma once

#include <algorithm>
#include <cmath>

#include "truncnet/nn/module.hpp"

namespace truncnet::nn {

enum class ActKind { kIdentity, kRelu, kRelu6, kSilu, kSigmoid, kHardSwish, kHardSigmoid };

template <typename T>
T sigmoid(T x) {
  // Branching keeps exp() from overflowing for large |x|.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T activate(ActKind kind, T x) {
  switch (kind) {
    case ActKind::kIdentity:
      return x;
    case ActKind::kRelu:
      return x > T{0} ? x : T{0};
    case ActKind::kRelu6:
      return std::clamp(x, T{0}, T{6});
    case ActKind::kSilu:
      return x * sigmoid(x);
    case ActKind::kSigmoid:
      return sigmoid(x);
    case ActKind::kHardSwish:
      return x * std::clamp(x + T{3}, T{0}, T{6}) / T{6};
    case ActKind::kHardSigmoid:
      return std::clamp(x + T{3}, T{0}, T{6}) / T{6};
  }
  return x;
}

/// d activate(x) / dx
template <typename T>
T activate_grad(ActKind kind, T x) {
  switch (kind) {
    case ActKind::kIdentity:
      return T{1};
    case ActKind::kRelu:
      return x > T{0} ? T{1} : T{0};
    case ActKind::kRelu6:
      return (x > T{0} && x < T{6}) ? T{1} : T{0};
    case ActKind::kSilu: {
      const T s = sigmoid(x);
      return s * (T{1} + x * (T{1} - s));
    }
    case ActKind::kSigmoid: {
      const T s = sigmoid(x);
      return s * (T{1} - s);
    }
    case ActKind::kHardSwish:
      if (x <= T{-3}) return T{0};
      if (x >= T{3}) return T{1};
      return (T{2} * x + T{3}) / T{6};
    case ActKind::kHardSigmoid:
      return (x > T{-3} && x < T{3}) ? T{1} / T{6} : T{0};
  }
  return T{1};
}

template <typename T>
class Activation final : public Module<T> {
 public:
  explicit Activation(ActKind kind) : kind_(kind) {}
  ActKind kind() const noexcept { return kind_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = activate(kind_, x[i]);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * activate_grad(kind_, input_[i]);
    return dx;
  }

 private:
  ActKind kind_;
  Tensor<T> input_;
};

template <typename T>
class Identity final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return x; }
  Tensor<T> backward(const Tensor<T>& dy) override { return dy; }
};

}  // namespace truncnet::nn
