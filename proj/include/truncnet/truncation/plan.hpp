#pragma once

#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "truncnet/arch/provider.hpp"

namespace truncnet {

/// A base spec with its trailing removable groups 1..depth pruned and a
/// fresh classification block (global average pooling + 14-way linear).
struct TruncationPlan {
  ArchitectureSpec base;
  int depth = 0;
  std::string name;

  /// Spec of the truncated network: retained units followed by the head.
  ArchitectureSpec truncated_spec() const;
  /// Non-head units that survive the cut.
  std::vector<BlockUnit> retained_units() const;
  std::int64_t head_in_features() const;

  bool operator==(const TruncationPlan&) const = default;
};

/// Throws InvalidDepthError when depth is outside 0..G.
TruncationPlan truncate(const ArchitectureSpec& base, int depth);

/// "<Family><Variant>Minus<k>" (the base display name when k == 0).
std::string plan_name(const ArchitectureSpec& base, int depth);

void to_json(nlohmann::json& j, const TruncationPlan& plan);
void from_json(const nlohmann::json& j, TruncationPlan& plan);

/// Canonical serialization and its git-style content hash.
std::string plan_to_text(const TruncationPlan& plan);
std::string plan_content_hash(const TruncationPlan& plan);

/// Builds the truncated network. Every unit is randomly initialized from
/// `seed`, the head from its own stream; when `pretrained`, all parameters
/// of retained units (batch-norm statistics included) are then overwritten
/// from the provider's weight map. Throws RemapError on missing keys.
template <typename T>
std::unique_ptr<Network<T>> instantiate(const TruncationPlan& plan, bool pretrained, BackboneProvider* provider,
                                        std::uint64_t seed) {
  auto net = build_network<T>(plan.truncated_spec());
  net->initialize(seed);
  if (!pretrained) return net;
  if (!provider) throw InputError("pretrained instantiation of " + plan.name + " needs a provider");
  const auto weights = provider->weights(plan.base);
  auto missing = import_weights(*net, weights, /*include_head=*/false);
  if (!missing.empty()) {
    std::string units;
    for (const auto& key : missing) {
      const auto unit = key.substr(0, key.find('.'));
      if (units.find("'" + unit + "'") == std::string::npos) units += (units.empty() ? "'" : ", '") + unit + "'";
    }
    const auto what = plan.name + ": weight map from " + provider->describe() + " lacks " +
                      std::to_string(missing.size()) + " parameter(s) of unit(s) " + units + ", e.g. '" +
                      missing.front() + "'";
    throw RemapError(what, std::move(missing));
  }
  return net;
}

}  // namespace truncnet
