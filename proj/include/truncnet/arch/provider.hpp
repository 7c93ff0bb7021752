#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "truncnet/arch/weights.hpp"

namespace truncnet {

/// Source of pretrained weights for a full (untruncated) family member.
/// The returned map must cover every parameter of the spec's non-head units.
class BackboneProvider {
 public:
  virtual ~BackboneProvider() = default;
  virtual WeightMap weights(const ArchitectureSpec& spec) = 0;
  virtual std::string describe() const = 0;
};

/// Deterministic stand-in for a checkpoint hub: weights drawn from the
/// default initializers with stream derive_seed(seed, display name), plus
/// non-trivial batch-norm statistics. Works offline for every family.
class SeededProvider final : public BackboneProvider {
 public:
  explicit SeededProvider(std::uint64_t seed) : seed_(seed) {}
  WeightMap weights(const ArchitectureSpec& spec) override;
  std::string describe() const override { return "seeded:" + std::to_string(seed_); }

 private:
  std::uint64_t seed_;
};

/// Weights read from a single archive, regardless of the requested spec
/// (e.g. a checkpoint of an earlier run used for warm starting).
class ArchiveProvider final : public BackboneProvider {
 public:
  explicit ArchiveProvider(std::filesystem::path path) : path_(std::move(path)) {}
  WeightMap weights(const ArchitectureSpec& spec) override;
  std::string describe() const override { return path_.string(); }

 private:
  std::filesystem::path path_;
};

/// Resolves a spec's pretrained_source key through a key = value file whose
/// values are local archive paths, http(s) URLs (downloaded once into the
/// cache directory) or "seeded:<n>".
class ConfigProvider final : public BackboneProvider {
 public:
  explicit ConfigProvider(const std::filesystem::path& config_file);
  ConfigProvider(std::map<std::string, std::string> entries, std::filesystem::path base_dir);

  WeightMap weights(const ArchitectureSpec& spec) override;
  std::string describe() const override;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::filesystem::path base_dir_;
};

/// $TRUNCNET_CACHE_DIR, else $XDG_CACHE_HOME/truncnet, else ~/.cache/truncnet.
std::filesystem::path provider_cache_dir();

/// Downloads `url` into the cache (keyed by a hash of the URL) unless it is
/// already there; returns the local path.
std::filesystem::path fetch_to_cache(const std::string& url);

/// Builds a provider from a command-line style spec: "seeded:<n>", a path to
/// a weight archive, or a provider config file (*.cfg / *.ini / *.toml).
std::unique_ptr<BackboneProvider> make_provider(const std::string& spec);

}  // namespace truncnet
