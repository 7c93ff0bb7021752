// End-to-end acceptance checks. One PASS/FAIL line per criterion; exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "truncnet/analysis/analysis.hpp"
#include "truncnet/arch/families.hpp"
#include "truncnet/arch/provider.hpp"
#include "truncnet/cam/cam.hpp"
#include "truncnet/cli/cli.hpp"
#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"
#include "truncnet/data/synthetic.hpp"
#include "truncnet/eval/metrics.hpp"
#include "truncnet/train/trainer.hpp"
#include "truncnet/truncation/plan.hpp"

using namespace truncnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "!") + what);
  }
};

fs::path g_work;

void cli(const std::vector<std::string>& args) {
  std::vector<std::string> full = {"--log-level", "error"};
  full.insert(full.end(), args.begin(), args.end());
  const int code = run_cli(full);
  if (code != kExitOk) throw std::runtime_error("truncnet " + args.front() + " exited with " + std::to_string(code));
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_table(const fs::path& path) {
  const auto lines = csv::read_lines(path.string());
  Table t;
  if (lines.empty()) return t;
  t.header = csv::split(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!lines[i].empty()) t.rows.push_back(csv::split(lines[i]));
  }
  return t;
}

EvalReport report_of(const fs::path& dir) {
  return nlohmann::json::parse(read_file(dir / "report.json")).get<EvalReport>();
}

// ------------------------------------------------------------------ 1

Outcome statistics_reproduction() {
  Outcome o;
  const auto records = load_study_table(testsupport::fixture("table1.csv"));
  std::vector<double> params, aucs;
  for (const auto& r : records) {
    params.push_back(static_cast<double>(r.param_count));
    aucs.push_back(r.avg_auc);
  }
  const auto c = spearman(params, aucs);
  o.check(records.size() == 16, fmt::format("n={}", records.size()));
  o.check(std::abs(c.rho - 0.565) <= 0.05, fmt::format("rho={:.3f} (0.565±0.05)", c.rho));
  o.check(std::abs(c.p_value - 0.023) <= 0.015, fmt::format("p={:.4f} (0.023±0.015)", c.p_value));
  return o;
}

// ------------------------------------------------------------------ 2

Outcome parameter_accounting() {
  Outcome o;
  auto count = [](Family f, const std::string& v, int k) {
    return static_cast<double>(build_network<float>(truncate(builtin_spec(f, v), k).truncated_spec())->param_count());
  };
  struct Published {
    Family family;
    std::string variant;
    double millions;
  };
  for (const auto& p : std::vector<Published>{{Family::kDenseNet, "121", 6.968},
                                               {Family::kEfficientNet, "B0", 4.025},
                                               {Family::kMobileNet, "V2", 2.242},
                                               {Family::kMNASNet, "1.0", 5.290},
                                               {Family::kResNet, "18", 11.690}}) {
    const double got = count(p.family, p.variant, 0);
    const double rel = got / (p.millions * 1e6) - 1.0;
    o.check(std::abs(rel) <= 0.10, fmt::format("{}={:.3f}M ({:+.1f}%)", builtin_spec(p.family, p.variant).display_name(),
                                               got / 1e6, 100 * rel));
  }
  struct Ratio {
    Family family;
    std::string variant;
    int k;
    double published;
  };
  for (const auto& r : std::vector<Ratio>{{Family::kResNet, "18", 1, 4.2},
                                           {Family::kDenseNet, "121", 1, 1.6},
                                           {Family::kEfficientNet, "B0", 2, 4.7},
                                           {Family::kMNASNet, "1.0", 1, 2.5},
                                           {Family::kMNASNet, "1.0", 4, 112.9}}) {
    const double ts = times_smaller(count(r.family, r.variant, 0), count(r.family, r.variant, r.k));
    o.check(std::abs(ts / r.published - 1.0) <= 0.10,
            fmt::format("{}Minus{}={:.2f}x ({})", builtin_spec(r.family, r.variant).display_name(), r.k, ts, r.published));
  }
  return o;
}

// ------------------------------------------------------------------ 3

Outcome auroc_oracle() {
  Outcome o;
  Rng rng(2024);
  int exact = 0, close = 0;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<double> a(n), b(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.below(10));
      b[i] = rng.normal();
      y[i] = rng.bernoulli(0.4);
    }
    y[0] = 1;
    y[1] = 0;
    const auto ca = testsupport::brute_force_auc(a, y);
    exact += auroc(a, y) == static_cast<double>(ca.twice_numerator) / static_cast<double>(2 * ca.pairs);
    const auto cb = testsupport::brute_force_auc(b, y);
    const double err = std::abs(auroc(b, y) - 0.5 * cb.twice_numerator / cb.pairs);
    worst = std::max(worst, err);
    close += err <= 1e-12;
  }
  o.check(exact == 200, fmt::format("integer scores exact {}/200", exact));
  o.check(close == 200, fmt::format("real scores {}/200 within 1e-12 (max {:.1e})", close, worst));
  return o;
}

// ------------------------------------------------------------------ 4

LabelMatrix noisy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabelMatrix m;
  m.rows = n;
  m.cols = 6;
  m.task_names = evaluation_tasks();
  for (std::size_t i = 0; i < n; ++i) {
    m.example_ids.push_back(std::to_string(i));
    for (std::size_t k = 0; k < 6; ++k) {
      const bool y = rng.bernoulli(0.5);
      m.truth.push_back(y);
      m.scores.push_back(y + rng.normal());
    }
  }
  return m;
}

Outcome bootstrap_contract() {
  Outcome o;
  const Statistic avg = [](const LabelMatrix& m, std::span<const std::size_t> rows) {
    return matrix_avg_auc(m, rows).value;
  };
  const auto m = noisy(250, 1);
  const auto constant = bootstrap_ci([](const LabelMatrix&, std::span<const std::size_t>) { return 0.7; }, m, 1000, 3);
  o.check(constant.lower == 0.7 && constant.upper == 0.7, "constant statistic degenerate");
  const auto a = bootstrap_ci(avg, m, kDefaultReplicates, 5);
  const auto b = bootstrap_ci(avg, m, kDefaultReplicates, 5);
  o.check(a.replicate_values == b.replicate_values, "bit-identical replicates");
  o.check(a.replicate_values.size() == 1000, fmt::format("{} replicates", a.replicate_values.size()));
  auto sorted = a.replicate_values;
  std::sort(sorted.begin(), sorted.end());
  o.check(a.lower == percentile(sorted, 0.025) && a.upper == percentile(sorted, 0.975), "2.5/97.5 percentiles");
  const auto big = bootstrap_ci(avg, noisy(1000, 1), kDefaultReplicates, 5);
  const double ratio = (a.upper - a.lower) / (big.upper - big.lower);
  o.check(std::abs(ratio - 2.0) <= 0.3, fmt::format("width ratio 250 vs 1000 rows {:.2f} (2.0±0.3)", ratio));
  return o;
}

// ------------------------------------------------------------------ 5

Outcome remap_fidelity() {
  Outcome o;
  SeededProvider provider(17);
  Rng rng(5);
  TensorF x({10, 3, 64, 64});
  for (auto& v : x.span()) v = static_cast<float>(rng.normal());
  struct Base {
    Family family;
    std::string variant;
  };
  for (const auto& b : std::vector<Base>{{Family::kDenseNet, "121"},
                                          {Family::kResNet, "18"},
                                          {Family::kEfficientNet, "B0"},
                                          {Family::kMNASNet, "1.0"},
                                          {Family::kToy, "3x32"}}) {
    const auto spec = builtin_spec(b.family, b.variant);
    auto full = instantiate<float>(truncate(spec, 0), true, &provider, 0);
    full->set_training(false);
    double worst = 0;
    for (int k = 1; k <= spec.max_depth(); ++k) {
      auto cut = instantiate<float>(truncate(spec, k), true, &provider, 1);
      cut->set_training(false);
      const auto want = full->features(x, cut->num_units());
      const auto got = cut->features(x);
      if (got.shape() != want.shape()) {
        worst = INFINITY;
        break;
      }
      for (std::size_t i = 0; i < got.numel(); ++i) worst = std::max(worst, double(std::abs(got[i] - want[i])));
    }
    o.check(worst <= 1e-5, fmt::format("{} k=1..{} max|Δ|={:.1e}", spec.display_name(), spec.max_depth(), worst));
  }
  return o;
}

// ------------------------------------------------------------------ 6

Outcome gradient_check() {
  Outcome o;
  auto net = instantiate<double>(truncate(builtin_spec(Family::kToy, "3x8"), 0), false, nullptr, 11);
  net->set_training(false);
  Rng rng(12);
  const auto x = testsupport::random_tensor({4, 3, 32, 32}, rng);
  TensorF y({4, 14}), mask({4, 14}, 1.0f);
  for (auto& v : y.span()) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  auto loss = [&] { return bce_with_logits(net->forward(x), y, mask, static_cast<TensorD*>(nullptr)); };
  net->zero_grad();
  TensorD g;
  bce_with_logits(net->forward(x), y, mask, &g);
  net->backward(g);
  double worst = 0;
  std::size_t checked = 0;
  const double h = 1e-6;
  for (auto& np : net->named_parameters()) {
    if (!np.param->trainable) continue;
    auto& v = np.param->value;
    const std::size_t stride = std::max<std::size_t>(1, v.numel() / 12);
    for (std::size_t i = 0; i < v.numel(); i += stride) {
      const double orig = v[i];
      v[i] = orig + h;
      const double lp = loss();
      v[i] = orig - h;
      const double lm = loss();
      v[i] = orig;
      worst = std::max(worst, testsupport::rel_error((lp - lm) / (2 * h), np.param->grad[i], 1e-4));
      ++checked;
    }
  }
  o.check(worst < 1e-4, fmt::format("{} entries, max rel err {:.1e}", checked, worst));
  return o;
}

// ------------------------------------------------------------------ 7

std::vector<std::string> toy_train(const fs::path& out, const fs::path& data, int k) {
  return {"train", "--out", out.string(), "--data", data.string(), "--family", "toy", "--variant", "3x32",
          "--k", std::to_string(k), "--image-size", "64", "--lr", "0.003", "--batch-size", "16", "--epochs", "10",
          "--eval-every", "22", "--ensemble", "3", "--seed", "7"};
}

Outcome desk_scale_pipeline() {
  Outcome o;
  const auto data = g_work / "synth";
  cli({"synth", "--out", data.string(), "--n", "500", "--size", "64", "--tasks", "6", "--seed", "1"});
  for (int k : {0, 1}) {
    const auto run = g_work / ("toy_k" + std::to_string(k));
    cli(toy_train(run, data, k));
    cli({"eval", "--run", run.string(), "--test-manifest", (data / "valid.csv").string(), "--out",
         (run / "eval_valid").string()});
    cli({"eval", "--run", run.string(), "--test-manifest", (data / "test.csv").string()});
    const auto valid = report_of(run / "eval_valid");
    const auto test = report_of(run / "eval");
    o.check(valid.avg_auc > 0.90,
            fmt::format("{} valid avg AUC {:.3f} (test {:.3f})", valid.model, valid.avg_auc, test.avg_auc));
  }
  cli({"eval", "--compare", (g_work / "toy_k0").string(), (g_work / "toy_k1").string(), "--test-manifest",
       (data / "test.csv").string(), "--out", (g_work / "compare").string()});
  // The joint-resampling interval recomputed from both prediction files.
  auto matrix = [&](const std::string& run) {
    const auto table = read_table(g_work / run / "eval/predictions.csv");
    LabelMatrix m;
    m.task_names = evaluation_tasks();
    m.cols = 6;
    for (const auto& row : table.rows) {
      m.example_ids.push_back(row.at(table.column("example_id")));
      for (const auto& t : m.task_names) {
        m.scores.push_back(std::stod(row.at(table.column("p:" + t))));
        m.truth.push_back(static_cast<std::uint8_t>(std::stoi(row.at(table.column("y:" + t)))));
      }
    }
    m.rows = m.example_ids.size();
    return m;
  };
  const auto cmp = read_table(g_work / "compare/comparison.csv");
  const auto& written = cmp.rows.at(0);
  const auto d = paired_difference(matrix("toy_k0"), matrix("toy_k1"), kDefaultReplicates,
                                   std::stoull(written.at(cmp.column("seed"))));
  o.check(d.lower <= d.diff && d.diff <= d.upper && d.bootstrap.replicate_values.size() == 1000,
          "paired difference " + format_difference(d));
  o.check(std::stod(written.at(cmp.column("ci_lo"))) == d.lower && std::stod(written.at(cmp.column("ci_hi"))) == d.upper,
          "comparison.csv carries the joint interval");
  return o;
}

// ------------------------------------------------------------------ 8

Outcome pretraining_boost_pipeline() {
  Outcome o;
  const auto data = g_work / "synth";
  const auto scratch = g_work / "toy_k0";  // from criterion 7
  const auto warm = g_work / "toy_k0_warm";
  auto args = toy_train(warm, data, 0);
  args.insert(args.end(), {"--pretrained", "true", "--provider", "run:" + scratch.string()});
  cli(args);
  cli({"eval", "--run", warm.string(), "--test-manifest", (data / "test.csv").string()});
  cli({"analyze", "--run", warm.string(), "--run", scratch.string(), "--out", (g_work / "boost_report").string()});
  const auto pre = report_of(warm / "eval");
  const auto base = report_of(scratch / "eval");
  const auto records = load_study_table(g_work / "boost_report/study_table.csv");
  const auto summary = pretraining_boost(records);
  o.check(summary.entries.size() == 1, fmt::format("{} paired model(s)", summary.entries.size()));
  if (summary.entries.size() == 1) {
    const double hand = pre.avg_auc - base.avg_auc;
    o.check(summary.entries[0].boost == hand,
            fmt::format("boost {:.6f} vs hand {:.6f} - {:.6f}", summary.entries[0].boost, pre.avg_auc, base.avg_auc));
  }
  return o;
}

// ------------------------------------------------------------------ 9

Outcome cam_properties() {
  Outcome o;
  {
    auto net = instantiate<double>(truncate(builtin_spec(Family::kToy, "3x32"), 0), false, nullptr, 2);
    net->set_training(false);
    net->fc().weight().value.fill(0);
    Rng rng(3);
    const auto cam = gradcam(*net, testsupport::random_tensor({1, 3, 64, 64}, rng), "Edema");
    const bool zero = std::all_of(cam.upsampled.span().begin(), cam.upsampled.span().end(), [](double v) { return v == 0; });
    o.check(zero, "zero gradient -> zero map");
  }
  // Probe images carrying a single planted patch. Per task, the most
  // confident one must peak, at native resolution, on a cell overlapping the
  // patch. (Upsampled argmax is not used: bilinear resizing replicates border
  // cells, so ties land on row or column 0 next to the patches on the edge.)
  SyntheticConfig pc;
  pc.count = 300;
  pc.seed = 99;
  pc.positive_rate = 0.15;
  const auto probe_set = make_synthetic_dataset(pc, g_work / "cam_probe");
  const auto probe = load_dataset(probe_set.manifest, 64, UncertaintyPolicy::kUncertainAsNegative);
  const auto run = g_work / "toy_k1";
  const auto ensemble = select_ensemble(run, 1);
  auto model = load_checkpoint(run, ensemble.members.front());
  model->set_training(false);
  const auto probs = predict_probabilities(*model, probe, ensemble.normalization);
  auto label = [&](std::size_t i, int t) { return probe.targets.target[i * 14 + observation_index(evaluation_tasks()[t])]; };
  auto localizes = [&](std::size_t i, int t) {
    TensorF x({1, 3, 64, 64});
    std::copy_n(probe.images.data() + i * 3 * 64 * 64, 3 * 64 * 64, x.data());
    ensemble.normalization.normalize(x);
    const auto cam = gradcam(*model, x, observation_index(evaluation_tasks()[t]));
    const auto [cy, cx] = argmax2d(cam.heatmap);
    const auto cell = 64 / cam.heatmap.dim(0);
    const auto box = synthetic_patch(t, 64);
    return cy * cell < box.row + box.side && (cy + 1) * cell > box.row && cx * cell < box.col + box.side &&
           (cx + 1) * cell > box.col;
  };
  int top_hits = 0, hits = 0, solos = 0;
  for (int t = 0; t < 6; ++t) {
    const auto col = static_cast<std::int64_t>(observation_index(evaluation_tasks()[t]));
    std::int64_t best = -1;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      int positives = 0;
      for (int u = 0; u < 6; ++u) positives += label(i, u) == 1.0f;
      if (label(i, t) != 1.0f || positives != 1) continue;
      ++solos;
      hits += localizes(i, t);
      const auto row = static_cast<std::int64_t>(i);
      if (best < 0 || probs.at(row, col) > probs.at(best, col)) best = row;
    }
    if (best < 0) {
      o.check(false, evaluation_tasks()[t] + ": no single-patch probe");
      continue;
    }
    const bool ok = localizes(static_cast<std::size_t>(best), t);
    top_hits += ok;
    if (!ok) o.notes.push_back("!" + evaluation_tasks()[t] + " peak outside its patch");
  }
  o.check(top_hits == 6, fmt::format("Toy3x32Minus1 localizes {}/6 patches (all probes {}/{})", top_hits, hits, solos));
  Rng rng(4);
  TensorF img({1, 3, 64, 64});
  for (auto& v : img.span()) v = static_cast<float>(rng.normal());
  const auto dense = builtin_spec(Family::kDenseNet, "121");
  auto full = instantiate<float>(truncate(dense, 0), false, nullptr, 0);
  auto cut = instantiate<float>(truncate(dense, 2), false, nullptr, 0);
  const auto a = gradcam(*full, img, 0u).heatmap.dim(0);
  const auto b = gradcam(*cut, img, 0u).heatmap.dim(0);
  o.check(b == 4 * a, fmt::format("DenseNet121Minus2 side {} vs {}", b, a));
  return o;
}

// ------------------------------------------------------------------ 10

Outcome determinism() {
  Outcome o;
  std::vector<fs::path> runs;
  for (const auto* tag : {"det_a", "det_b"}) {
    const auto data = g_work / tag / "data";
    cli({"synth", "--out", data.string(), "--n", "160", "--size", "32", "--tasks", "6", "--seed", "9"});
    runs.push_back(g_work / tag / "run");
    cli({"train", "--out", runs.back().string(), "--data", data.string(), "--family", "toy", "--variant", "3x16",
         "--k", "1", "--image-size", "32", "--lr", "0.003", "--batch-size", "16", "--epochs", "3", "--eval-every", "5",
         "--seed", "9"});
  }
  const auto a = read_table(runs[0] / "metrics.csv");
  const auto b = read_table(runs[1] / "metrics.csv");
  bool same = a.header == b.header && a.rows.size() == b.rows.size() && !a.rows.empty();
  double worst = 0;
  for (std::size_t r = 0; same && r < a.rows.size(); ++r) {
    for (std::size_t c = 0; c < a.rows[r].size(); ++c) {
      const auto &x = a.rows[r][c], &y = b.rows[r][c];
      if (x == y) continue;
      try {
        worst = std::max(worst, std::abs(std::stod(x) - std::stod(y)));
      } catch (const std::exception&) {
        same = false;
      }
    }
  }
  o.check(same && worst <= 1e-6, fmt::format("{} rows, max cell difference {:.1e}", a.rows.size(), worst));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = (fs::temp_directory_path() / "truncnet_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory (recreated)");
  app.add_option("--only", only, "Criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "statistics reproduction", 1, statistics_reproduction},
      {2, "parameter accounting", 120, parameter_accounting},
      {3, "AUROC oracle equivalence", 60, auroc_oracle},
      {4, "bootstrap contract", 120, bootstrap_contract},
      {5, "remap fidelity", 300, remap_fidelity},
      {6, "gradient check", 120, gradient_check},
      {7, "desk-scale end-to-end", 900, desk_scale_pipeline},
      {8, "pretraining boost pipeline", 600, pretraining_boost_pipeline},
      {9, "CAM properties", 300, cam_properties},
      {10, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.check(secs < c.budget_s, fmt::format("{:.1f}s < {:.0f}s", secs, c.budget_s));
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << detail << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
