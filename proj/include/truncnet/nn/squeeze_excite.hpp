#pragma once

#include "truncnet/nn/activation.hpp"
#include "truncnet/nn/conv.hpp"
#include "truncnet/nn/pooling.hpp"

namespace truncnet::nn {

/// Channel gating y = x * gate(expand(act(reduce(mean_hw(x))))).
template <typename T>
class SqueezeExcite final : public Module<T> {
 public:
  SqueezeExcite(std::int64_t channels, std::int64_t reduced, ActKind act, ActKind gate)
      : pool_(true),
        reduce_(ConvOptions{channels, reduced, 1, 1, 1, 1, 0, 0, 1, true}),
        act_(act),
        expand_(ConvOptions{reduced, channels, 1, 1, 1, 1, 0, 0, 1, true}),
        gate_(gate) {}

  void reset_parameters(Rng& rng) override {
    reduce_.reset_parameters(rng);
    expand_.reset_parameters(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    gate_out_ = gate_.forward(expand_.forward(act_.forward(reduce_.forward(pool_.forward(x)))));
    const auto n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
    Tensor<T> y(x.shape());
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T g = gate_out_[static_cast<std::size_t>(plane)];
      const T* src = x.data() + plane * p;
      T* dst = y.data() + plane * p;
      for (std::int64_t i = 0; i < p; ++i) dst[i] = src[i] * g;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const auto n = dy.dim(0), c = dy.dim(1), p = dy.dim(2) * dy.dim(3);
    Tensor<T> dx(dy.shape());
    Tensor<T> dgate(gate_out_.shape());
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T g = gate_out_[static_cast<std::size_t>(plane)];
      const T* gy = dy.data() + plane * p;
      const T* src = input_.data() + plane * p;
      T* dst = dx.data() + plane * p;
      T acc{0};
      for (std::int64_t i = 0; i < p; ++i) {
        dst[i] = gy[i] * g;
        acc += gy[i] * src[i];
      }
      dgate[static_cast<std::size_t>(plane)] = acc;
    }
    dx += pool_.backward(reduce_.backward(act_.backward(expand_.backward(gate_.backward(dgate)))));
    return dx;
  }

  std::vector<typename Module<T>::Child> children() override {
    return {{"conv_reduce", &reduce_}, {"conv_expand", &expand_}};
  }

 private:
  GlobalAvgPool<T> pool_;
  Conv2d<T> reduce_;
  Activation<T> act_;
  Conv2d<T> expand_;
  Activation<T> gate_;
  Tensor<T> input_;
  Tensor<T> gate_out_;
};

}  // namespace truncnet::nn
