#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "truncnet/arch/spec.hpp"
#include "truncnet/arch/network.hpp"

namespace truncnet {

/// Specs keyed by (family, variant). Populate during start-up, then treat as
/// read-only; concurrent lookups need no locking.
class Registry {
 public:
  /// Returns the stored spec. Identical re-registration is a no-op; a
  /// different spec under the same key throws ConflictError.
  const ArchitectureSpec& register_family(const ArchitectureSpec& spec);

  bool contains(Family family, const std::string& variant) const;
  const ArchitectureSpec& lookup(Family family, const std::string& variant) const;
  std::vector<BlockUnit> segment_units(Family family, const std::string& variant) const;
  std::vector<const ArchitectureSpec*> all() const;

  /// Registers the built-in spec for a buildable member if absent (used for
  /// arbitrary Toy sizes).
  const ArchitectureSpec& ensure_builtin(Family family, const std::string& variant);

  /// Registry pre-populated with every built-in family member.
  static Registry with_builtins();

 private:
  std::map<std::pair<Family, std::string>, ArchitectureSpec> specs_;
};

template <typename T>
std::size_t count_params(Network<T>& model) {
  return model.param_count();
}

}  // namespace truncnet
