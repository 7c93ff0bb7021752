#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "truncnet/core/rng.hpp"
#include "truncnet/core/tensor.hpp"

namespace truncnet::nn {

/// A learnable tensor and its accumulated gradient. Buffers (batch-norm
/// running statistics) use the same carrier with `trainable == false`; they
/// travel with checkpoints but are never touched by the optimizer.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(Shape shape, bool is_trainable, T fill = T{0})
      : value(shape, fill), grad(is_trainable ? shape : Shape{0}), trainable(is_trainable) {}

  void zero_grad() {
    if (trainable) grad.fill(T{0});
  }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

inline std::string join_path(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

/// Layer with an explicit backward pass. `forward` caches what `backward`
/// needs, so one instance serves one forward/backward pair at a time.
template <typename T>
class Module {
 public:
  using Child = std::pair<std::string, Module*>;

  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  /// Returns dL/dx and accumulates dL/dθ into each parameter's `grad`.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  /// Children with an empty name are transparent: their parameters appear
  /// directly under this module's path.
  virtual std::vector<Child> children() { return {}; }

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, child] : children()) child->set_training(on);
  }
  bool training() const noexcept { return training_; }

  void named_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
    for (auto& [name, p] : own_parameters()) out.push_back({join_path(prefix, name), p});
    for (auto& [name, child] : children()) child->named_parameters(join_path(prefix, name), out);
  }

  std::vector<NamedParameter<T>> named_parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    named_parameters(prefix, out);
    return out;
  }

  void zero_grad() {
    for (auto& np : named_parameters()) np.param->zero_grad();
  }

  /// Default random initialization of this module's own parameters.
  virtual void reset_parameters(Rng& rng) {
    for (auto& [name, child] : children()) child->reset_parameters(rng);
  }

 protected:
  virtual std::vector<std::pair<std::string, Parameter<T>*>> own_parameters() { return {}; }

 private:
  bool training_ = false;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

template <typename T>
std::size_t count_trainable(Module<T>& module) {
  std::size_t total = 0;
  for (auto& np : module.named_parameters()) {
    if (np.param->trainable) total += np.param->value.numel();
  }
  return total;
}

}  // namespace truncnet::nn
