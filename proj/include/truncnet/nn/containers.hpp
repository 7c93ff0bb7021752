#pragma once

#include "truncnet/nn/activation.hpp"
#include "truncnet/nn/module.hpp"

namespace truncnet::nn {

template <typename T>
class Sequential final : public Module<T> {
 public:
  Sequential() = default;

  /// Appends a child and returns it for further configuration.
  template <typename M>
  M& add(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    items_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

  std::size_t size() const noexcept { return items_.size(); }
  Module<T>& at(std::size_t i) { return *items_.at(i).second; }
  const std::string& name_at(std::size_t i) const { return items_.at(i).first; }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& [name, m] : items_) h = m->forward(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (auto it = items_.rbegin(); it != items_.rend(); ++it) g = it->second->backward(g);
    return g;
  }

  std::vector<typename Module<T>::Child> children() override {
    std::vector<typename Module<T>::Child> out;
    out.reserve(items_.size());
    for (auto& [name, m] : items_) out.emplace_back(name, m.get());
    return out;
  }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> items_;
};

/// Runs every branch on the same input and concatenates along channels.
template <typename T>
class Concat final : public Module<T> {
 public:
  template <typename M>
  M& add(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    branches_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    std::vector<Tensor<T>> outs;
    outs.reserve(branches_.size());
    channels_.clear();
    for (auto& [name, m] : branches_) {
      outs.push_back(m->forward(x));
      channels_.push_back(outs.back().dim(1));
    }
    const auto n = outs.front().dim(0), h = outs.front().dim(2), w = outs.front().dim(3);
    std::int64_t total = 0;
    for (const auto& o : outs) {
      if (o.dim(0) != n || o.dim(2) != h || o.dim(3) != w) {
        throw ShapeError("concat branches disagree: " + to_string(outs.front().shape()) + " vs " +
                         to_string(o.shape()));
      }
      total += o.dim(1);
    }
    Tensor<T> y({n, total, h, w});
    const auto p = h * w;
    for (std::int64_t b = 0; b < n; ++b) {
      std::int64_t offset = 0;
      for (const auto& o : outs) {
        const auto c = o.dim(1);
        std::copy_n(o.data() + b * c * p, c * p, y.data() + (b * total + offset) * p);
        offset += c;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const auto n = dy.dim(0), total = dy.dim(1), h = dy.dim(2), w = dy.dim(3), p = h * w;
    Tensor<T> dx;
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const auto c = channels_[i];
      Tensor<T> part({n, c, h, w});
      for (std::int64_t b = 0; b < n; ++b) {
        std::copy_n(dy.data() + (b * total + offset) * p, c * p, part.data() + b * c * p);
      }
      offset += c;
      Tensor<T> g = branches_[i].second->backward(part);
      if (dx.empty()) {
        dx = std::move(g);
      } else {
        dx += g;
      }
    }
    return dx;
  }

  std::vector<typename Module<T>::Child> children() override {
    std::vector<typename Module<T>::Child> out;
    for (auto& [name, m] : branches_) out.emplace_back(name, m.get());
    return out;
  }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> branches_;
  std::vector<std::int64_t> channels_;
};

/// Elementwise sum of branch outputs; a residual connection is
/// Sum{body, Identity}.
template <typename T>
class Sum final : public Module<T> {
 public:
  template <typename M>
  M& add(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    branches_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y;
    for (auto& [name, m] : branches_) {
      Tensor<T> o = m->forward(x);
      if (y.empty()) {
        y = std::move(o);
      } else {
        y += o;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx;
    for (auto& [name, m] : branches_) {
      Tensor<T> g = m->backward(dy);
      if (dx.empty()) {
        dx = std::move(g);
      } else {
        dx += g;
      }
    }
    return dx;
  }

  std::vector<typename Module<T>::Child> children() override {
    std::vector<typename Module<T>::Child> out;
    for (auto& [name, m] : branches_) out.emplace_back(name, m.get());
    return out;
  }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> branches_;
};

}  // namespace truncnet::nn
