#include "truncnet/arch/registry.hpp"

#include "truncnet/arch/families.hpp"
#include "truncnet/core/errors.hpp"

namespace truncnet {

const ArchitectureSpec& Registry::register_family(const ArchitectureSpec& spec) {
  spec.validate();
  const auto key = std::make_pair(spec.family, spec.variant);
  if (const auto it = specs_.find(key); it != specs_.end()) {
    if (it->second != spec) {
      throw ConflictError(spec.display_name() + " is already registered with different content");
    }
    return it->second;
  }
  return specs_.emplace(key, spec).first->second;
}

bool Registry::contains(Family family, const std::string& variant) const {
  return specs_.count({family, variant}) > 0;
}

const ArchitectureSpec& Registry::lookup(Family family, const std::string& variant) const {
  const auto it = specs_.find({family, variant});
  if (it == specs_.end()) throw NotFoundError("no " + to_string(family) + " variant '" + variant + "' registered");
  return it->second;
}

std::vector<BlockUnit> Registry::segment_units(Family family, const std::string& variant) const {
  return lookup(family, variant).units;
}

std::vector<const ArchitectureSpec*> Registry::all() const {
  std::vector<const ArchitectureSpec*> out;
  for (const auto& [key, spec] : specs_) out.push_back(&spec);
  return out;
}

const ArchitectureSpec& Registry::ensure_builtin(Family family, const std::string& variant) {
  if (contains(family, variant)) return lookup(family, variant);
  return register_family(builtin_spec(family, variant));
}

Registry Registry::with_builtins() {
  Registry r;
  for (const auto& spec : builtin_specs()) r.register_family(spec);
  return r;
}

}  // namespace truncnet
