#include "truncnet/arch/provider.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include "truncnet/core/errors.hpp"
#include "truncnet/core/io.hpp"

namespace truncnet {
namespace {

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("bad seed in provider key '" + text + "'");
}

}  // namespace

WeightMap SeededProvider::weights(const ArchitectureSpec& spec) {
  auto net = build_network<float>(spec);
  const auto seed = derive_seed(seed_, spec.display_name());
  net->initialize(seed);
  // Fresh batch-norm buffers are (0, 1); perturb them so that loading them is
  // observable, as it would be for real checkpoints.
  Rng rng(derive_seed(seed, std::string_view("bn-statistics")));
  for (auto& np : net->named_parameters()) {
    if (np.param->trainable) continue;
    const bool is_var = np.name.size() >= 12 && np.name.compare(np.name.size() - 12, 12, "running_var") == 0;
    for (auto& v : np.param->value.span()) {
      v = is_var ? static_cast<float>(rng.uniform(0.5, 1.5)) : static_cast<float>(rng.normal(0.0, 0.1));
    }
  }
  return export_weights(*net);
}

WeightMap ArchiveProvider::weights(const ArchitectureSpec&) { return load_weights(path_); }

ConfigProvider::ConfigProvider(const std::filesystem::path& config_file) : base_dir_(config_file.parent_path()) {
  std::ifstream in(config_file);
  if (!in) throw IoError("cannot read provider config " + config_file.string());
  try {
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
      if (item.inputs.empty()) continue;
      entries_[item.fullname()] = item.inputs.front();
    }
  } catch (const CLI::Error& e) {
    throw SchemaError(config_file.string() + ": " + e.what());
  }
}

ConfigProvider::ConfigProvider(std::map<std::string, std::string> entries, std::filesystem::path base_dir)
    : entries_(std::move(entries)), base_dir_(std::move(base_dir)) {}

std::string ConfigProvider::describe() const { return "config(" + std::to_string(entries_.size()) + " keys)"; }

WeightMap ConfigProvider::weights(const ArchitectureSpec& spec) {
  if (!spec.pretrained_source) throw NotFoundError(spec.display_name() + " has no pretrained source key");
  const auto it = entries_.find(*spec.pretrained_source);
  if (it == entries_.end()) {
    throw NotFoundError("provider config has no entry for '" + *spec.pretrained_source + "'");
  }
  const auto& value = it->second;
  if (starts_with(value, "seeded:")) return SeededProvider(parse_seed(value.substr(7))).weights(spec);
  if (starts_with(value, "http://") || starts_with(value, "https://")) return load_weights(fetch_to_cache(value));
  std::filesystem::path path(value);
  if (path.is_relative()) path = base_dir_ / path;
  return load_weights(path);
}

std::filesystem::path provider_cache_dir() {
  if (const char* dir = std::getenv("TRUNCNET_CACHE_DIR"); dir && *dir) return dir;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "truncnet";
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "truncnet";
  return std::filesystem::temp_directory_path() / "truncnet-cache";
}

std::filesystem::path fetch_to_cache(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw InputError("cannot parse URL '" + url + "'");
  const auto dir = provider_cache_dir();
  std::filesystem::create_directories(dir);
  const auto target = dir / (git_blob_sha1(url) + ".tnw");
  if (std::filesystem::exists(target)) return target;

  spdlog::info("downloading {} into {}", url, dir.string());
  httplib::Client client(m[1].str());
  client.set_follow_location(true);
  client.set_read_timeout(300, 0);
  const auto path = m[2].matched ? m[2].str() : std::string("/");
  const auto res = client.Get(path);
  if (!res) throw IoError("download of " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("download of " + url + " returned HTTP " + std::to_string(res->status));
  write_file_atomic(target, res->body);
  return target;
}

std::unique_ptr<BackboneProvider> make_provider(const std::string& spec) {
  if (starts_with(spec, "seeded:")) return std::make_unique<SeededProvider>(parse_seed(spec.substr(7)));
  const std::filesystem::path path(spec);
  const auto ext = path.extension().string();
  if (ext == ".cfg" || ext == ".ini" || ext == ".toml" || ext == ".conf") return std::make_unique<ConfigProvider>(path);
  if (!std::filesystem::exists(path)) throw NotFoundError("provider source '" + spec + "' does not exist");
  return std::make_unique<ArchiveProvider>(path);
}

}  // namespace truncnet
