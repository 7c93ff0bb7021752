#include "truncnet/eval/metrics.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "truncnet/core/csv.hpp"
#include "truncnet/core/errors.hpp"
#include "truncnet/core/rng.hpp"

namespace truncnet {

std::size_t LabelMatrix::task_index(const std::string& name) const {
  const auto it = std::find(task_names.begin(), task_names.end(), name);
  if (it == task_names.end()) throw NotFoundError("task '" + name + "' is not in the label matrix");
  return static_cast<std::size_t>(it - task_names.begin());
}

void LabelMatrix::validate() const {
  if (scores.size() != rows * cols || truth.size() != rows * cols) {
    throw ShapeError("label matrix buffers do not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (task_names.size() != cols) throw ShapeError("label matrix has " + std::to_string(cols) + " columns but " +
                                                  std::to_string(task_names.size()) + " task names");
  if (!example_ids.empty() && example_ids.size() != rows) throw ShapeError("label matrix id count mismatch");
  for (auto t : truth) {
    if (t > 1) throw InputError("truth entries must be 0 or 1");
  }
}

LabelMatrix LabelMatrix::select_tasks(const std::vector<std::string>& names) const {
  LabelMatrix out;
  out.rows = rows;
  out.cols = names.size();
  out.task_names = names;
  out.example_ids = example_ids;
  std::vector<std::size_t> idx;
  for (const auto& n : names) idx.push_back(task_index(n));
  out.scores.resize(out.rows * out.cols);
  out.truth.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.scores[i * out.cols + k] = score(i, idx[k]);
      out.truth[i * out.cols + k] = label(i, idx[k]);
    }
  }
  return out;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw ShapeError("auroc: scores and truth differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (double s : scores) {
    if (std::isnan(s)) throw InputError("auroc: NaN score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann–Whitney numerator, kept integral so the result is exact.
  std::uint64_t twice_numerator = 0;
  std::uint64_t negatives_below = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truth[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_numerator += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) {
    throw UndefinedAucError("AUROC undefined: truth has " + std::to_string(positives) + " positive and " +
                            std::to_string(negatives) + " negative examples");
  }
  return static_cast<double>(twice_numerator) / static_cast<double>(2 * positives * negatives);
}

double task_auroc(const LabelMatrix& m, std::size_t k, std::span<const std::size_t> rows) {
  const std::size_t n = rows.empty() ? m.rows : rows.size();
  std::vector<double> s(n);
  std::vector<std::uint8_t> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = rows.empty() ? i : rows[i];
    s[i] = m.score(r, k);
    t[i] = m.label(r, k);
  }
  return auroc(s, t);
}

AverageAuc avg_auc(const std::vector<std::string>& tasks, const std::vector<std::optional<double>>& per_task) {
  if (tasks.size() != per_task.size()) throw ShapeError("avg_auc: task list and values differ in length");
  AverageAuc out;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (per_task[k]) {
      sum += *per_task[k];
      ++defined;
    } else {
      out.excluded.push_back(tasks[k]);
    }
  }
  if (defined == 0) throw UndefinedAucError("average AUC undefined: no task has both classes");
  out.value = sum / static_cast<double>(defined);
  return out;
}

AverageAuc matrix_avg_auc(const LabelMatrix& m, std::span<const std::size_t> rows,
                          std::vector<std::optional<double>>* per_task) {
  std::vector<std::optional<double>> values(m.cols);
  for (std::size_t k = 0; k < m.cols; ++k) {
    try {
      values[k] = task_auroc(m, k, rows);
    } catch (const UndefinedAucError&) {
      values[k].reset();
    }
  }
  auto out = avg_auc(m.task_names, values);
  if (per_task) *per_task = std::move(values);
  return out;
}

double percentile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("percentile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  // Written so that equal neighbours reproduce the value exactly.
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> replicate_rows(std::size_t n_rows, std::uint64_t seed, std::size_t replicate) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(replicate)));
  std::vector<std::size_t> rows(n_rows);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n_rows));
  return rows;
}

std::vector<BootstrapResult> bootstrap_ci(const VectorStatistic& statistic, const LabelMatrix& m, std::size_t n,
                                          std::uint64_t seed) {
  if (n < 1) throw InputError("bootstrap needs at least one replicate");
  if (m.rows == 0) throw InputError("bootstrap over an empty label matrix");
  const std::size_t budget = 100 * n;
  std::size_t redraws = 0;
  std::vector<std::vector<double>> values;
  values.reserve(n);
  std::vector<std::size_t> rows(m.rows);
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    while (true) {
      for (auto& row : rows) row = static_cast<std::size_t>(rng.below(m.rows));
      try {
        values.push_back(statistic(m, rows));
        break;
      } catch (const UndefinedAucError&) {
        if (++redraws > budget) {
          throw UndefinedAucError("bootstrap gave up after " + std::to_string(budget) +
                                  " redraws of single-class replicates");
        }
      }
    }
  }
  if (redraws > 0) spdlog::info("bootstrap redrew {} single-class replicate(s)", redraws);

  const std::size_t k = values.front().size();
  std::vector<BootstrapResult> out(k);
  for (std::size_t s = 0; s < k; ++s) {
    auto& res = out[s];
    res.seed = seed;
    res.redraws = redraws;
    res.replicate_values.reserve(n);
    for (const auto& v : values) res.replicate_values.push_back(v.at(s));
    auto sorted = res.replicate_values;
    std::sort(sorted.begin(), sorted.end());
    res.lower = percentile(sorted, 0.025);
    res.upper = percentile(sorted, 0.975);
  }
  return out;
}

BootstrapResult bootstrap_ci(const Statistic& statistic, const LabelMatrix& m, std::size_t n, std::uint64_t seed) {
  auto wrapped = [&](const LabelMatrix& mm, std::span<const std::size_t> rows) {
    return std::vector<double>{statistic(mm, rows)};
  };
  return std::move(bootstrap_ci(VectorStatistic(wrapped), m, n, seed).front());
}

namespace {

/// Average AUC over rows; undefined tasks request a redraw so every
/// replicate averages the same task set.
double strict_avg_auc(const LabelMatrix& m, std::span<const std::size_t> rows) {
  double sum = 0.0;
  for (std::size_t k = 0; k < m.cols; ++k) sum += task_auroc(m, k, rows);
  return sum / static_cast<double>(m.cols);
}

}  // namespace

PairedDifference paired_difference(const LabelMatrix& a, const LabelMatrix& b, std::size_t n, std::uint64_t seed) {
  a.validate();
  b.validate();
  if (a.rows != b.rows || a.task_names != b.task_names || a.truth != b.truth ||
      (!a.example_ids.empty() && !b.example_ids.empty() && a.example_ids != b.example_ids)) {
    throw InputError("paired comparison needs both models scored on the same examples and tasks");
  }
  PairedDifference out;
  out.diff = matrix_avg_auc(a).value - matrix_avg_auc(b).value;
  out.bootstrap = bootstrap_ci(
      [&](const LabelMatrix&, std::span<const std::size_t> rows) {
        return strict_avg_auc(a, rows) - strict_avg_auc(b, rows);
      },
      a, n, seed);
  out.lower = out.bootstrap.lower;
  out.upper = out.bootstrap.upper;
  out.significant = out.lower > 0.0 || out.upper < 0.0;
  return out;
}

std::string format_difference(const PairedDifference& d, int decimals) {
  return fmt::format("{:.{}f} ({:.{}f}, {:.{}f})", d.diff, decimals, d.lower, decimals, d.upper, decimals);
}

EvalReport evaluate(const LabelMatrix& m, const std::string& model, std::size_t n_replicates, std::uint64_t seed) {
  m.validate();
  EvalReport r;
  r.model = model;
  r.tasks = m.task_names;
  r.n_examples = m.rows;
  r.n_replicates = n_replicates;
  r.seed = seed;
  std::vector<std::optional<double>> per_task;
  const auto avg = matrix_avg_auc(m, {}, &per_task);
  r.avg_auc = avg.value;
  r.excluded_tasks = avg.excluded;
  std::vector<std::size_t> defined;
  for (std::size_t k = 0; k < m.cols; ++k) {
    if (per_task[k]) {
      r.per_task_auc[m.task_names[k]] = *per_task[k];
      defined.push_back(k);
    }
  }
  if (avg.has_exclusions()) {
    spdlog::warn("{}: tasks without both classes excluded from the average", model);
  }
  if (n_replicates == 0) return r;

  // Statistic vector: the average, then each defined task.
  const auto results = bootstrap_ci(
      [&](const LabelMatrix& mm, std::span<const std::size_t> rows) {
        std::vector<double> v(defined.size() + 1);
        double sum = 0.0;
        for (std::size_t i = 0; i < defined.size(); ++i) {
          v[i + 1] = task_auroc(mm, defined[i], rows);
          sum += v[i + 1];
        }
        v[0] = sum / static_cast<double>(defined.size());
        return v;
      },
      m, n_replicates, seed);
  r.ci["avg_auc"] = {results[0].lower, results[0].upper};
  for (std::size_t i = 0; i < defined.size(); ++i) {
    r.ci[m.task_names[defined[i]]] = {results[i + 1].lower, results[i + 1].upper};
  }
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json ci = nlohmann::json::object();
  for (const auto& [name, bounds] : r.ci) ci[name] = {bounds.first, bounds.second};
  j = nlohmann::json{{"model", r.model},
                     {"tasks", r.tasks},
                     {"per_task_auc", r.per_task_auc},
                     {"excluded_tasks", r.excluded_tasks},
                     {"avg_auc", r.avg_auc},
                     {"ci", ci},
                     {"n_examples", r.n_examples},
                     {"n_replicates", r.n_replicates},
                     {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.model = j.at("model").get<std::string>();
  r.tasks = j.at("tasks").get<std::vector<std::string>>();
  r.per_task_auc = j.at("per_task_auc").get<std::map<std::string, double>>();
  r.excluded_tasks = j.at("excluded_tasks").get<std::vector<std::string>>();
  r.avg_auc = j.at("avg_auc").get<double>();
  r.ci.clear();
  for (const auto& [name, bounds] : j.at("ci").items()) r.ci[name] = {bounds.at(0).get<double>(), bounds.at(1).get<double>()};
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.n_replicates = j.at("n_replicates").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
}

std::string eval_csv_header(const std::vector<std::string>& tasks) {
  std::vector<std::string> h = {"model", "n_examples", "avg_auc", "avg_auc_ci_lo", "avg_auc_ci_hi"};
  h.insert(h.end(), tasks.begin(), tasks.end());
  return csv::join(h);
}

std::string eval_csv_row(const EvalReport& r) {
  std::vector<std::string> row = {r.model, std::to_string(r.n_examples), csv::format_double(r.avg_auc)};
  const auto it = r.ci.find("avg_auc");
  row.push_back(it == r.ci.end() ? "" : csv::format_double(it->second.first));
  row.push_back(it == r.ci.end() ? "" : csv::format_double(it->second.second));
  for (const auto& t : r.tasks) {
    const auto a = r.per_task_auc.find(t);
    row.push_back(a == r.per_task_auc.end() ? "" : csv::format_double(a->second));
  }
  return csv::join(row);
}

}  // namespace truncnet
