#pragma once

#include <functional>
#include <string>
#include <vector>

#include "truncnet/arch/spec.hpp"
#include "truncnet/nn/module.hpp"

namespace truncnet {

/// A unit's metadata plus a factory for its layers.
template <typename T>
struct UnitRecipe {
  BlockUnit unit;
  std::function<nn::ModulePtr<T>()> make;
};

/// Units preceding the classification head for a built-in family member.
/// Throws NotFoundError for unknown variants.
template <typename T>
std::vector<UnitRecipe<T>> family_recipe(Family family, const std::string& variant);

extern template std::vector<UnitRecipe<float>> family_recipe<float>(Family, const std::string&);
extern template std::vector<UnitRecipe<double>> family_recipe<double>(Family, const std::string&);

struct ToyConfig {
  int stages = 3;
  std::int64_t channels = 32;
};

/// Toy variants are spelled "<stages>x<channels>", e.g. "3x32".
ToyConfig parse_toy_variant(const std::string& variant);
std::string toy_variant(const ToyConfig& config);

/// Full spec (units + head + reference metadata) of a built-in member.
ArchitectureSpec builtin_spec(Family family, const std::string& variant);

/// The sixteen studied backbones plus the default Toy configurations.
std::vector<ArchitectureSpec> builtin_specs();

}  // namespace truncnet
