#include "truncnet/analysis/analysis.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <set>

#include "truncnet/core/csv.hpp"
#include "truncnet/core/errors.hpp"
#include "truncnet/core/io.hpp"

namespace truncnet {
namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double t_p_value(double rho, std::size_t n) {
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

// Share of the n! relabelings of y's ranks with |rho| at least the observed.
double permutation_p_value(double rho, const std::vector<double>& rx, std::vector<double> ry) {
  std::sort(ry.begin(), ry.end());
  std::size_t total = 0, extreme = 0;
  const double threshold = std::abs(rho) - 1e-12;
  do {
    ++total;
    if (std::abs(pearson(rx, ry)) >= threshold) ++extreme;
  } while (std::next_permutation(ry.begin(), ry.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

std::optional<double> parse_optional(const std::string& raw, std::size_t line, const std::string& column) {
  if (raw.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used == raw.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw RowError("line " + std::to_string(line) + ": column '" + column + "' has unparsable value '" + raw + "'", line);
}

std::string optional_text(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

const std::vector<std::string>& study_columns() {
  static const std::vector<std::string> cols = {"name",   "family",        "variant", "pretrained",
                                                "k",      "param_count",   "imagenet_top1", "avg_auc",
                                                "auc_ci_lo", "auc_ci_hi"};
  return cols;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y, PValueMethod method,
                           std::string x_name, std::string y_name) {
  if (x.size() != y.size()) {
    throw InputError("spearman: " + std::to_string(x.size()) + " x values vs " + std::to_string(y.size()) + " y values");
  }
  if (x.size() < 3) throw InputError("spearman needs at least 3 pairs, got " + std::to_string(x.size()));
  auto finite = [](std::span<const double> v) { return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); }); };
  if (!finite(x) || !finite(y)) throw InputError("spearman: inputs must be finite");
  if (constant(x)) throw UndefinedCorrelationError("spearman: " + x_name + " is constant");
  if (constant(y)) throw UndefinedCorrelationError("spearman: " + y_name + " is constant");

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  CorrelationResult r;
  r.rho = pearson(rx, ry);
  r.n = x.size();
  r.x_name = std::move(x_name);
  r.y_name = std::move(y_name);
  if (method == PValueMethod::kExactPermutation) {
    if (r.n > 9) throw InputError("exact permutation p-values are limited to n <= 9");
    r.p_value = permutation_p_value(r.rho, rx, ry);
    r.exact = true;
  } else {
    r.p_value = t_p_value(r.rho, r.n);
  }
  return r;
}

std::string study_table_header() { return csv::join(study_columns()); }

std::string study_table_row(const ModelRecord& r) {
  return csv::join({r.name, r.family, r.variant, r.pretrained ? "true" : "false", std::to_string(r.k),
                    std::to_string(r.param_count), optional_text(r.imagenet_top1), csv::format_double(r.avg_auc),
                    optional_text(r.auc_ci_lo), optional_text(r.auc_ci_hi)});
}

void validate_study_table(const std::vector<ModelRecord>& records) {
  std::set<std::pair<std::string, bool>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.name, r.pretrained).second) {
      throw SchemaError("study table lists " + r.name + (r.pretrained ? " (pretrained)" : " (scratch)") + " twice");
    }
  }
}

std::vector<ModelRecord> load_study_table(const std::filesystem::path& csv_path) {
  if (!std::filesystem::exists(csv_path)) throw NotFoundError("no study table at " + csv_path.string());
  const auto lines = csv::read_lines(csv_path.string());
  if (lines.empty()) throw SchemaError(csv_path.string() + " is empty");
  const auto header = csv::split(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& c : study_columns()) {
    if (!col.count(c)) throw SchemaError(csv_path.string() + ": missing column '" + c + "'");
  }
  std::vector<ModelRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::size_t line = li + 1;
    const auto f = csv::split(lines[li]);
    if (f.size() != header.size()) {
      throw RowError("line " + std::to_string(line) + ": expected " + std::to_string(header.size()) + " fields, got " +
                         std::to_string(f.size()),
                     line);
    }
    auto cell = [&](const char* c) { return f[col.at(c)]; };
    auto required = [&](const char* c) {
      auto v = parse_optional(cell(c), line, c);
      if (!v) throw RowError("line " + std::to_string(line) + ": column '" + c + "' is empty", line);
      return *v;
    };
    ModelRecord r;
    r.name = cell("name");
    if (r.name.empty()) throw RowError("line " + std::to_string(line) + ": empty name", line);
    r.family = cell("family");
    r.variant = cell("variant");
    const auto pre = cell("pretrained");
    if (pre == "true" || pre == "1" || pre == "True") {
      r.pretrained = true;
    } else if (pre == "false" || pre == "0" || pre == "False") {
      r.pretrained = false;
    } else {
      throw RowError("line " + std::to_string(line) + ": column 'pretrained' must be true/false, got '" + pre + "'", line);
    }
    r.k = static_cast<int>(required("k"));
    const double params = required("param_count");
    if (params <= 0) throw RowError("line " + std::to_string(line) + ": param_count must be positive", line);
    r.param_count = static_cast<std::uint64_t>(std::llround(params));
    r.imagenet_top1 = parse_optional(cell("imagenet_top1"), line, "imagenet_top1");
    r.avg_auc = required("avg_auc");
    r.auc_ci_lo = parse_optional(cell("auc_ci_lo"), line, "auc_ci_lo");
    r.auc_ci_hi = parse_optional(cell("auc_ci_hi"), line, "auc_ci_hi");
    out.push_back(std::move(r));
  }
  validate_study_table(out);
  return out;
}

void write_study_table(const std::filesystem::path& csv_path, const std::vector<ModelRecord>& records) {
  std::string text = study_table_header() + "\n";
  for (const auto& r : records) text += study_table_row(r) + "\n";
  write_file_atomic(csv_path, text);
}

BoostSummary pretraining_boost(const std::vector<ModelRecord>& records,
                               const std::map<std::string, std::pair<double, double>>& intervals) {
  validate_study_table(records);
  std::map<std::string, const ModelRecord*> scratch;
  for (const auto& r : records) {
    if (!r.pretrained) scratch[r.name] = &r;
  }
  BoostSummary s;
  std::set<std::string> paired;
  for (const auto& r : records) {
    if (!r.pretrained) continue;
    const auto it = scratch.find(r.name);
    if (it == scratch.end()) {
      s.unpaired.push_back(r.name);
      continue;
    }
    BoostEntry e;
    e.name = r.name;
    e.param_count = r.param_count;
    e.auc_pretrained = r.avg_auc;
    e.auc_scratch = it->second->avg_auc;
    e.boost = e.auc_pretrained - e.auc_scratch;
    if (auto ci = intervals.find(r.name); ci != intervals.end()) e.ci = ci->second;
    paired.insert(r.name);
    s.entries.push_back(std::move(e));
  }
  for (const auto& r : records) {
    if (!r.pretrained && !paired.count(r.name)) s.unpaired.push_back(r.name);
  }
  for (const auto& name : s.unpaired) spdlog::warn("pretraining boost: {} lacks a counterpart; excluded", name);
  if (s.entries.empty()) return s;

  double total = 0.0;
  std::vector<double> params, boosts;
  for (const auto& e : s.entries) {
    total += e.boost;
    params.push_back(static_cast<double>(e.param_count));
    boosts.push_back(e.boost);
  }
  s.mean_boost = total / static_cast<double>(s.entries.size());
  if (s.entries.size() >= 3) {
    try {
      s.correlation = spearman(params, boosts, PValueMethod::kTApproximation, "param_count", "boost");
    } catch (const UndefinedCorrelationError& e) {
      spdlog::warn("pretraining boost correlation undefined: {}", e.what());
    }
  }
  return s;
}

double times_smaller(double base_params, double truncated_params) {
  if (!(base_params > 0) || !(truncated_params > 0)) {
    throw InputError("times_smaller needs positive parameter counts, got " + csv::format_double(base_params) + " and " +
                     csv::format_double(truncated_params));
  }
  return base_params / truncated_params;
}

double auc_change_pct(double truncated_auc, double base_auc) {
  if (!(base_auc > 0)) throw InputError("auc_change_pct needs a positive base AUC");
  return 100.0 * (truncated_auc - base_auc) / base_auc;
}

}  // namespace truncnet
