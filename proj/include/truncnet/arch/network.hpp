#pragma once

#include <memory>
#include <string>
#include <vector>

#include "truncnet/arch/families.hpp"
#include "truncnet/nn/nn.hpp"

namespace truncnet {

/// Ordered units followed by the classification block (global average
/// pooling, then a fully connected layer with one logit per observation).
/// Parameter names are "<unit_id>.<layer path>" and "head.fc.{weight,bias}".
template <typename T>
class Network {
 public:
  Network(ArchitectureSpec spec, std::vector<UnitRecipe<T>> recipes) : spec_(std::move(spec)) {
    spec_.validate();
    if (recipes.size() + 1 != spec_.units.size()) {
      throw SchemaError(spec_.display_name() + ": recipe count does not match the unit list");
    }
    for (std::size_t i = 0; i < recipes.size(); ++i) {
      if (recipes[i].unit.unit_id != spec_.units[i].unit_id) {
        throw SchemaError("unit order mismatch at '" + spec_.units[i].unit_id + "'");
      }
      units_.push_back(recipes[i].make());
    }
    const auto width = spec_.units[recipes.size() - 1].output_channels;
    fc_ = std::make_unique<nn::Linear<T>>(width, spec_.head().output_channels);
  }

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::size_t num_units() const noexcept { return units_.size(); }
  nn::Module<T>& unit(std::size_t i) { return *units_.at(i); }
  nn::Linear<T>& fc() noexcept { return *fc_; }
  std::int64_t num_outputs() const noexcept { return fc_->out_features(); }

  /// Cumulative downsampling (log2) after the last unit.
  int downsample_log2() const { return spec_.units[units_.size() - 1].spatial_downsample; }

  void set_training(bool on) {
    for (auto& u : units_) u->set_training(on);
    fc_->set_training(on);
  }

  std::vector<nn::NamedParameter<T>> named_parameters() {
    std::vector<nn::NamedParameter<T>> out;
    for (std::size_t i = 0; i < units_.size(); ++i) units_[i]->named_parameters(spec_.units[i].unit_id, out);
    fc_->named_parameters("head.fc", out);
    return out;
  }

  /// Parameters that belong to unit `i` only.
  std::vector<nn::NamedParameter<T>> unit_parameters(std::size_t i) {
    return units_.at(i)->named_parameters(spec_.units.at(i).unit_id);
  }

  std::size_t param_count() {
    std::size_t total = 0;
    for (auto& np : named_parameters()) {
      if (np.param->trainable) total += np.param->value.numel();
    }
    return total;
  }

  void zero_grad() {
    for (auto& np : named_parameters()) np.param->zero_grad();
  }

  /// Initializes unit i from stream derive_seed(seed, unit_id) and the head
  /// from its own stream, so the same seed yields the same retained weights
  /// regardless of how many units follow.
  void initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < units_.size(); ++i) initialize_unit(i, seed);
    initialize_head(seed);
  }
  void initialize_unit(std::size_t i, std::uint64_t seed) {
    Rng rng(derive_seed(seed, spec_.units.at(i).unit_id));
    units_.at(i)->reset_parameters(rng);
  }
  void initialize_head(std::uint64_t seed) {
    Rng rng(derive_seed(seed, std::string_view("head")));
    fc_->reset_parameters(rng);
  }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("expected an (N, 3, H, W) batch, got " + to_string(x.shape()));
    const std::int64_t need = std::int64_t{1} << downsample_log2();
    if (x.dim(2) < need || x.dim(3) < need) {
      throw ShapeError(spec_.display_name() + " downsamples by " + std::to_string(need) + "x; input " +
                       std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) + " is too small");
    }
  }

  /// Output of the first `n` units (all units when n is omitted).
  Tensor<T> features(const Tensor<T>& x, std::size_t n = static_cast<std::size_t>(-1)) {
    check_input(x);
    n = std::min(n, units_.size());
    Tensor<T> h = x;
    for (std::size_t i = 0; i < n; ++i) h = units_[i]->forward(h);
    return h;
  }

  Tensor<T> head_forward(const Tensor<T>& feats) { return fc_->forward(pool_.forward(feats)); }

  /// Logits of shape (N, outputs). Caches activations for backward().
  Tensor<T> forward(const Tensor<T>& x) { return head_forward(features(x)); }

  /// Gradient of the loss w.r.t. the last unit's output.
  Tensor<T> head_backward(const Tensor<T>& dlogits) { return pool_.backward(fc_->backward(dlogits)); }

  /// Back-propagates dL/dlogits through every unit; returns dL/dinput.
  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> g = head_backward(dlogits);
    for (auto it = units_.rbegin(); it != units_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  /// Elementwise sigmoid of the logits.
  Tensor<T> predict(const Tensor<T>& x) {
    Tensor<T> p = forward(x);
    for (auto& v : p.span()) v = nn::sigmoid(v);
    return p;
  }

 private:
  ArchitectureSpec spec_;
  std::vector<nn::ModulePtr<T>> units_;
  nn::GlobalAvgPool<T> pool_{false};
  std::unique_ptr<nn::Linear<T>> fc_;
};

/// Full network for a built-in or registered spec whose family is known to
/// the builder; units beyond those listed in `spec` are not constructed.
template <typename T>
std::unique_ptr<Network<T>> build_network(const ArchitectureSpec& spec) {
  auto recipes = family_recipe<T>(spec.family, spec.variant);
  std::vector<UnitRecipe<T>> kept;
  for (std::size_t i = 0; i + 1 < spec.units.size(); ++i) {
    if (i >= recipes.size() || recipes[i].unit.unit_id != spec.units[i].unit_id) {
      throw SchemaError(spec.display_name() + ": unit '" + spec.units[i].unit_id + "' has no builder");
    }
    kept.push_back(std::move(recipes[i]));
  }
  return std::make_unique<Network<T>>(spec, std::move(kept));
}

}  // namespace truncnet
