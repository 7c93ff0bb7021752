#include "truncnet/cli/cli.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "truncnet/analysis/analysis.hpp"
#include "truncnet/arch/provider.hpp"
#include "truncnet/arch/registry.hpp"
#include "truncnet/cam/cam.hpp"
#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"
#include "truncnet/core/rng.hpp"
#include "truncnet/data/synthetic.hpp"
#include "truncnet/train/trainer.hpp"

namespace truncnet {
namespace fs = std::filesystem;
namespace {

// Bad values on the command line: exit code 1 rather than 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Library errors raised while interpreting flags are usage errors.
template <typename F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct SynthOptions {
  fs::path out;
  SyntheticConfig cfg;
};

struct TrainOptions {
  fs::path out;
  fs::path data_dir;
  fs::path train_manifest;
  fs::path valid_manifest;
  std::string family;
  std::string variant;
  int k = 0;
  bool pretrained = false;
  std::string provider;
  std::int64_t image_size = 0;
  std::string uncertainty = "uncertain_as_negative";
  std::string normalization = "auto";
  std::size_t stats_cap = 2000;
  std::vector<std::string> tasks;
  TrainConfig train;
};

struct EvalOptions {
  fs::path run;
  std::vector<fs::path> compare;
  fs::path test_manifest;
  fs::path out;
  std::size_t replicates = kDefaultReplicates;
  std::uint64_t seed = 0;
  std::size_t ensemble = 0;
};

struct AnalyzeOptions {
  fs::path table;
  std::vector<fs::path> runs;
  std::vector<fs::path> boost_ci;
  fs::path out;
};

struct CamOptions {
  std::vector<fs::path> runs;
  std::vector<fs::path> images;
  std::string task;
  fs::path out;
  std::int64_t step = -1;
};

std::string default_variant(Family f) {
  switch (f) {
    case Family::kDenseNet:
      return "121";
    case Family::kResNet:
      return "18";
    case Family::kEfficientNet:
      return "B0";
    case Family::kMobileNet:
      return "V2";
    case Family::kMNASNet:
      return "1.0";
    case Family::kInception:
      return "V3";
    case Family::kToy:
      return "3x32";
  }
  return "";
}

std::string fmt_num(double v) { return csv::format_double(v); }

// ----------------------------------------------------------------- synth

int cmd_synth(const SynthOptions& o) {
  const auto ds = make_synthetic_dataset(o.cfg, o.out);
  std::cout << fmt::format("wrote {} images under {}\n", o.cfg.count, ds.root.string());
  std::cout << fmt::format("manifest {}\ntrain {}\nvalid {}\ntest {}\n", ds.manifest.string(), ds.train.string(),
                           ds.valid.string(), ds.test.string());
  return kExitOk;
}

// ----------------------------------------------------------------- train

std::unique_ptr<BackboneProvider> resolve_provider(const std::string& spec) {
  static const std::string run_prefix = "run:";
  if (spec.rfind(run_prefix, 0) == 0) {
    const fs::path dir = spec.substr(run_prefix.size());
    if (!fs::is_directory(dir)) throw UsageError("provider run directory " + dir.string() + " does not exist");
    return std::make_unique<ArchiveProvider>(best_checkpoint_path(dir));
  }
  return as_usage([&] { return make_provider(spec); });
}

int cmd_train(const TrainOptions& o, const std::string& merged_config) {
  RunSpec rs;
  auto registry = Registry::with_builtins();
  rs.plan = as_usage([&] {
    const auto family = parse_family(o.family);
    const auto variant = o.variant.empty() ? default_variant(family) : o.variant;
    return truncate(registry.ensure_builtin(family, variant), o.k);
  });
  rs.pretrained = o.pretrained;
  std::unique_ptr<BackboneProvider> provider;
  if (o.pretrained) {
    if (o.provider.empty()) {
      throw UsageError("--pretrained needs --provider (seeded:<n>, run:<dir>, an archive or a provider config)");
    }
    provider = resolve_provider(o.provider);
    rs.provider = provider.get();
    rs.provider_description = o.provider;
  }
  rs.train_manifest = !o.train_manifest.empty() ? o.train_manifest : o.data_dir / "train.csv";
  rs.valid_manifest = !o.valid_manifest.empty() ? o.valid_manifest : o.data_dir / "valid.csv";
  if (o.train_manifest.empty() && o.data_dir.empty()) throw UsageError("give --data or --train-manifest");
  if (o.valid_manifest.empty() && o.data_dir.empty()) throw UsageError("give --data or --valid-manifest");
  rs.image_size = o.image_size;
  rs.uncertainty = as_usage([&] { return parse_uncertainty_policy(o.uncertainty); });
  if (o.normalization != "auto") rs.normalization = as_usage([&] { return parse_normalization_mode(o.normalization); });
  rs.stats_sample_cap = o.stats_cap;
  if (!o.tasks.empty()) {
    as_usage([&] {
      for (const auto& t : o.tasks) observation_index(t);
      return 0;
    });
    rs.tasks = o.tasks;
  }
  rs.train = o.train;
  as_usage([&] {
    rs.train.validate();
    return 0;
  });

  const auto result = finetune(rs, o.out);
  write_file_atomic(o.out / "cli_config.ini", merged_config);
  const auto e = select_ensemble(o.out, rs.train.ensemble_size);
  std::cout << fmt::format("{}: {} steps, {} checkpoints, best validation avg AUC {:.4f} (step {})\n", rs.plan.name,
                           result.total_steps, result.checkpoints.size(), e.members.front().avg_auc,
                           e.members.front().step);
  std::cout << "run directory " << o.out.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ eval

struct ScoredRun {
  std::string name;
  EvalReport report;
  LabelMatrix matrix;
};

LabelMatrix score_run(const fs::path& run, const fs::path& manifest, std::size_t k) {
  if (!fs::is_directory(run)) throw UsageError("run directory " + run.string() + " does not exist");
  const auto config = load_run_config(run);
  if (k == 0) k = config.at("train").at("ensemble_size").get<std::size_t>();
  const auto ensemble = select_ensemble(run, k);
  const auto policy = parse_uncertainty_policy(config.at("data").at("uncertainty_policy").get<std::string>());
  const auto tasks = config.at("tasks").get<std::vector<std::string>>();
  const auto data = load_dataset(manifest, ensemble.image_size, policy);
  if (data.size() == 0) throw EmptyDatasetError("test split " + manifest.string() + " is empty");
  spdlog::info("{}: ensemble of {} checkpoint(s) on {} examples", ensemble.plan.name, ensemble.members.size(), data.size());
  return to_label_matrix(ensemble.predict(data), data, tasks);
}

void write_predictions(const LabelMatrix& m, const fs::path& path) {
  std::vector<std::string> header = {"example_id"};
  for (const auto& t : m.task_names) header.push_back("p:" + t);
  for (const auto& t : m.task_names) header.push_back("y:" + t);
  std::string text = csv::join(header) + "\n";
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<std::string> row = {i < m.example_ids.size() ? m.example_ids[i] : std::to_string(i)};
    for (std::size_t k = 0; k < m.cols; ++k) row.push_back(fmt_num(m.score(i, k)));
    for (std::size_t k = 0; k < m.cols; ++k) row.push_back(std::to_string(m.label(i, k)));
    text += csv::join(row) + "\n";
  }
  write_file_atomic(path, text);
}

void print_report(const EvalReport& r) {
  const auto& ci = r.ci.at("avg_auc");
  std::cout << fmt::format("{}: avg AUC {:.3f} ({:.3f}, {:.3f}) on {} examples\n", r.model, r.avg_auc, ci.first,
                           ci.second, r.n_examples);
  for (const auto& t : r.tasks) {
    if (auto it = r.per_task_auc.find(t); it != r.per_task_auc.end()) {
      std::cout << fmt::format("  {:<18} {:.3f}\n", t, it->second);
    } else {
      std::cout << fmt::format("  {:<18} undefined\n", t);
    }
  }
}

ScoredRun evaluate_run(const fs::path& run, const EvalOptions& o, const fs::path& out) {
  ScoredRun s;
  s.name = load_run_plan(run).name;
  s.matrix = score_run(run, o.test_manifest, o.ensemble);
  s.report = evaluate(s.matrix, s.name, o.replicates, derive_seed(o.seed, std::string_view("bootstrap")));
  fs::create_directories(out);
  write_file_atomic(out / "report.json", nlohmann::json(s.report).dump(2) + "\n");
  write_file_atomic(out / "report.csv", eval_csv_header(s.report.tasks) + "\n" + eval_csv_row(s.report) + "\n");
  write_predictions(s.matrix, out / "predictions.csv");
  return s;
}

int cmd_eval(const EvalOptions& o) {
  if (!fs::exists(o.test_manifest)) throw UsageError("test manifest " + o.test_manifest.string() + " does not exist");
  if (o.compare.empty()) {
    if (o.run.empty()) throw UsageError("give --run or --compare A B");
    if (!fs::is_directory(o.run)) throw UsageError("run directory " + o.run.string() + " does not exist");
    const auto out = o.out.empty() ? o.run / "eval" : o.out;
    const auto s = evaluate_run(o.run, o, out);
    print_report(s.report);
    std::cout << "report " << (out / "report.json").string() << "\n";
    return kExitOk;
  }
  if (o.compare.size() != 2) throw UsageError("--compare takes exactly two run directories");
  for (const auto& r : o.compare) {
    if (!fs::is_directory(r)) throw UsageError("run directory " + r.string() + " does not exist");
  }
  if (o.out.empty()) throw UsageError("--compare needs --out");
  const auto a = evaluate_run(o.compare[0], o, o.out / "a");
  const auto b = evaluate_run(o.compare[1], o, o.out / "b");
  const auto d = paired_difference(a.matrix, b.matrix, o.replicates, derive_seed(o.seed, std::string_view("bootstrap")));
  print_report(a.report);
  print_report(b.report);
  std::cout << fmt::format("difference {} - {}: {}{}\n", a.name, b.name, format_difference(d),
                           d.significant ? " (significant)" : "");
  const std::string text = "model_a,model_b,run_a,run_b,diff,ci_lo,ci_hi,significant,n_replicates,seed\n" +
                           csv::join({a.name, b.name, fs::absolute(o.compare[0]).string(),
                                      fs::absolute(o.compare[1]).string(), fmt_num(d.diff), fmt_num(d.lower),
                                      fmt_num(d.upper), d.significant ? "true" : "false",
                                      std::to_string(d.bootstrap.replicate_values.size()),
                                      std::to_string(d.bootstrap.seed)}) +
                           "\n";
  write_file_atomic(o.out / "comparison.csv", text);
  return kExitOk;
}

// --------------------------------------------------------------- analyze

ModelRecord record_from_run(const fs::path& run) {
  if (!fs::is_directory(run)) throw UsageError("run directory " + run.string() + " does not exist");
  const auto report_path = run / "eval" / "report.json";
  if (!fs::exists(report_path)) throw NotFoundError(run.string() + " has no eval/report.json; run `truncnet eval` first");
  const auto plan = load_run_plan(run);
  const auto config = load_run_config(run);
  const auto report = nlohmann::json::parse(read_file(report_path)).get<EvalReport>();
  ModelRecord r;
  r.name = plan.base.display_name() + (plan.depth > 0 ? "Minus" + std::to_string(plan.depth) : "");
  r.family = to_string(plan.base.family);
  r.variant = plan.base.variant;
  r.pretrained = config.at("model").at("pretrained").get<bool>();
  r.k = plan.depth;
  r.param_count = build_network<float>(plan.truncated_spec())->param_count();
  r.imagenet_top1 = plan.base.published_imagenet_top1;
  r.avg_auc = report.avg_auc;
  if (auto it = report.ci.find("avg_auc"); it != report.ci.end()) {
    r.auc_ci_lo = it->second.first;
    r.auc_ci_hi = it->second.second;
  }
  return r;
}

std::map<std::string, std::pair<double, double>> load_boost_intervals(const std::vector<fs::path>& files) {
  std::map<std::string, std::pair<double, double>> out;
  for (const auto& f : files) {
    const auto lines = csv::read_lines(f.string());
    if (lines.size() < 2) throw SchemaError(f.string() + " holds no comparison");
    const auto header = csv::split(lines[0]);
    auto col = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw SchemaError(f.string() + ": missing column '" + name + "'");
      return static_cast<std::size_t>(it - header.begin());
    };
    const auto name = col("model_a"), lo = col("ci_lo"), hi = col("ci_hi");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto row = csv::split(lines[i]);
      if (row.size() != header.size()) throw RowError(f.string() + ": malformed line " + std::to_string(i + 1), i + 1);
      out[row[name]] = {std::stod(row[lo]), std::stod(row[hi])};
    }
  }
  return out;
}

nlohmann::json correlation_json(const CorrelationResult& c) {
  return {{"x", c.x_name}, {"y", c.y_name}, {"rho", c.rho}, {"p_value", c.p_value}, {"n", c.n}};
}

int cmd_analyze(const AnalyzeOptions& o) {
  std::vector<ModelRecord> records;
  if (!o.table.empty()) {
    const auto loaded = load_study_table(o.table);
    records.insert(records.end(), loaded.begin(), loaded.end());
  }
  for (const auto& run : o.runs) records.push_back(record_from_run(run));
  if (records.empty()) throw UsageError("give --table and/or --run");
  const auto files = emit_report(records, o.out, load_boost_intervals(o.boost_ci));

  nlohmann::json summary = {{"n_records", records.size()}, {"correlations", nlohmann::json::array()}};
  auto correlate = [&](const std::string& label, bool pretrained, bool use_top1) {
    std::vector<double> x, y;
    for (const auto& r : records) {
      if (r.pretrained != pretrained) continue;
      if (use_top1 && !r.imagenet_top1) continue;
      x.push_back(use_top1 ? *r.imagenet_top1 : static_cast<double>(r.param_count));
      y.push_back(r.avg_auc);
    }
    try {
      const auto c = spearman(x, y, PValueMethod::kTApproximation, use_top1 ? "imagenet_top1" : "param_count", "avg_auc");
      std::cout << fmt::format("{:<34} rho = {:.3f}, p = {:.3g} (n = {})\n", label, c.rho, c.p_value, c.n);
      auto j = correlation_json(c);
      j["label"] = label;
      summary["correlations"].push_back(j);
    } catch (const Error& e) {
      spdlog::info("{}: {}", label, e.what());
    }
  };
  correlate("avg AUC vs params (scratch)", false, false);
  correlate("avg AUC vs params (pretrained)", true, false);
  correlate("avg AUC vs ImageNet top-1 (scratch)", false, true);
  correlate("avg AUC vs ImageNet top-1 (pretrained)", true, true);

  const auto boost = pretraining_boost(records, load_boost_intervals(o.boost_ci));
  if (!boost.entries.empty()) {
    std::cout << fmt::format("pretraining boost: mean {:.4f} over {} model(s)\n", boost.mean_boost, boost.entries.size());
    summary["mean_boost"] = boost.mean_boost;
    if (boost.correlation) {
      std::cout << fmt::format("{:<34} rho = {:.3f}, p = {:.3g} (n = {})\n", "boost vs params", boost.correlation->rho,
                               boost.correlation->p_value, boost.correlation->n);
      summary["boost_correlation"] = correlation_json(*boost.correlation);
    }
  }
  write_file_atomic(o.out / "summary.json", summary.dump(2) + "\n");
  std::cout << "report " << o.out.string() << " (" << files.plots.size() << " plots)\n";
  return kExitOk;
}

// ------------------------------------------------------------------- cam

int cmd_cam(const CamOptions& o) {
  const auto task_index = as_usage([&] { return observation_index(o.task); });
  if (o.runs.empty()) throw UsageError("give at least one --run");
  if (o.images.empty()) throw UsageError("give at least one --image");
  for (const auto& r : o.runs) {
    if (!fs::is_directory(r)) throw UsageError("run directory " + r.string() + " does not exist");
  }
  for (const auto& img : o.images) {
    if (!fs::exists(img)) throw UsageError("image " + img.string() + " does not exist");
  }
  fs::create_directories(o.out);
  std::string slug = o.task;
  std::replace(slug.begin(), slug.end(), ' ', '_');

  std::vector<std::vector<fs::path>> grid(o.images.size());
  for (const auto& run : o.runs) {
    const auto config = load_run_config(run);
    const auto norm = config.at("normalization").get<NormalizationPolicy>();
    const auto size = config.at("data").at("image_size").get<std::int64_t>();
    CheckpointMeta meta;
    if (o.step >= 0) {
      const auto all = list_checkpoints(run);
      const auto it = std::find_if(all.begin(), all.end(), [&](const auto& m) { return m.step == o.step; });
      if (it == all.end()) throw UsageError(run.string() + " has no checkpoint at step " + std::to_string(o.step));
      meta = *it;
    } else {
      meta = select_ensemble(run, 1).members.front();
    }
    auto net = load_checkpoint(run, meta);
    const auto model_name = load_run_plan(run).name;
    for (std::size_t i = 0; i < o.images.size(); ++i) {
      const auto gray = load_grayscale(o.images[i], size);
      TensorF x({1, 3, size, size});
      for (std::int64_t c = 0; c < 3; ++c)
        std::copy_n(gray.data(), gray.numel(), x.data() + c * gray.numel());
      norm.normalize(x);
      auto cam = gradcam(*net, x, task_index);
      const auto stem = fmt::format("{}_{}_{}", o.images[i].stem().string(), model_name, slug);
      cam.overlay_path = o.out / (stem + ".png");
      render_overlay(cam, gray, *cam.overlay_path);
      write_heatmap_csv(cam.heatmap, o.out / (stem + "_heatmap.csv"));
      write_heatmap_csv(cam.upsampled, o.out / (stem + "_upsampled.csv"));
      const auto [py, px] = argmax2d(cam.upsampled);
      std::cout << fmt::format("{} {}: p({}) = {:.3f}, native map {}x{}, peak at ({}, {}) -> {}\n",
                               o.images[i].filename().string(), model_name, o.task, cam.probability,
                               cam.heatmap.dim(0), cam.heatmap.dim(1), py, px, cam.overlay_path->string());
      grid[i].push_back(*cam.overlay_path);
    }
  }
  if (o.runs.size() > 1) {
    const auto path = o.out / fmt::format("grid_{}.png", slug);
    render_grid(grid, path);
    std::cout << "grid " << path.string() << "\n";
  }
  return kExitOk;
}

void setup_logging(const std::string& level) {
  static bool done = false;
  if (!done) {
    auto logger = spdlog::stderr_color_mt("truncnet");
    spdlog::set_default_logger(logger);
    done = true;
  }
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Truncate, finetune, evaluate and analyze convolutional backbones on multilabel X-ray style data.",
               "truncnet"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file; a [<subcommand>] section supplies that subcommand's flags");
  app.allow_config_extras(false);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.set_version_flag("--version", "truncnet 0.1.0");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic dataset with planted per-task patches");
  s->fallthrough();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.cfg.count, "Number of images");
  s->add_option("--size", synth.cfg.image_size, "Image side in pixels")->check(CLI::Range(16, 4096));
  s->add_option("--tasks", synth.cfg.tasks, "Number of planted tasks")->check(CLI::Range(1, 6));
  s->add_option("--seed", synth.cfg.seed, "Seed");
  s->add_option("--positive-rate", synth.cfg.positive_rate, "Probability that a task is present")->check(CLI::Range(0.0, 1.0));
  s->add_option("--uncertain-rate", synth.cfg.uncertain_rate, "Fraction of labels written as uncertain")->check(CLI::Range(0.0, 1.0));
  s->add_option("--noise", synth.cfg.noise, "Background noise standard deviation")->check(CLI::NonNegativeNumber);
  s->add_option("--contrast-min", synth.cfg.contrast_min, "Smallest brightness added by a planted patch")->check(CLI::NonNegativeNumber);
  s->add_option("--contrast-max", synth.cfg.contrast_max, "Largest brightness added by a planted patch")->check(CLI::NonNegativeNumber);
  s->add_option("--train-fraction", synth.cfg.train_fraction, "Share of images in train.csv")->check(CLI::Range(0.0, 1.0));
  s->add_option("--valid-fraction", synth.cfg.valid_fraction, "Share of images in valid.csv")->check(CLI::Range(0.0, 1.0));

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Finetune a (truncated) architecture and write a run directory");
  t->fallthrough();
  t->add_option("--out", train.out, "Run directory to create")->required();
  t->add_option("--data", train.data_dir, "Directory holding train.csv and valid.csv");
  t->add_option("--train-manifest", train.train_manifest, "Training manifest (overrides --data)");
  t->add_option("--valid-manifest", train.valid_manifest, "Validation manifest (overrides --data)");
  t->add_option("--family", train.family, "densenet, resnet, efficientnet, mobilenet, mnasnet, inception or toy")->required();
  t->add_option("--variant", train.variant, "Family member, e.g. 121, 18, B0, V2, 3x32 (default: smallest studied)");
  t->add_option("--k", train.k, "Number of trailing block groups to remove")->check(CLI::NonNegativeNumber);
  t->add_option("--pretrained", train.pretrained, "Initialize retained units from --provider (true/false)");
  t->add_option("--provider", train.provider, "seeded:<n>, run:<dir>, a weight archive or a provider config file");
  t->add_option("--image-size", train.image_size, "Input side in pixels")->required()->check(CLI::PositiveNumber);
  t->add_option("--uncertainty", train.uncertainty, "uncertain_as_negative, uncertain_as_positive or drop_uncertain");
  t->add_option("--normalization", train.normalization, "auto, imagenet or dataset");
  t->add_option("--stats-cap", train.stats_cap, "Images sampled for dataset statistics (0 = all)");
  t->add_option("--tasks", train.tasks, "Scored tasks, comma separated (default: the six evaluation tasks)")->delimiter(',');
  t->add_option("--lr", train.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  t->add_option("--beta1", train.train.beta1, "Adam beta1")->check(CLI::Range(0.0, 1.0));
  t->add_option("--beta2", train.train.beta2, "Adam beta2")->check(CLI::Range(0.0, 1.0));
  t->add_option("--batch-size", train.train.batch_size, "Global batch size")->check(CLI::PositiveNumber);
  t->add_option("--epochs", train.train.epochs, "Epochs")->check(CLI::PositiveNumber);
  t->add_option("--eval-every", train.train.eval_every, "Checkpoint every N gradient steps")->check(CLI::PositiveNumber);
  t->add_option("--ensemble", train.train.ensemble_size, "Checkpoints in the final ensemble")->check(CLI::PositiveNumber);
  t->add_option("--seed", train.train.seed, "Top-level seed (data order, initialization, statistics)");

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Evaluate a run's ensemble with bootstrap confidence intervals");
  e->fallthrough();
  e->add_option("--run", eval.run, "Run directory");
  e->add_option("--compare", eval.compare, "Two run directories for a paired difference")->expected(2);
  e->add_option("--test-manifest", eval.test_manifest, "Test manifest")->required();
  e->add_option("--out", eval.out, "Output directory (default <run>/eval)");
  e->add_option("--replicates", eval.replicates, "Bootstrap replicates")->check(CLI::PositiveNumber);
  e->add_option("--seed", eval.seed, "Bootstrap seed");
  e->add_option("--ensemble", eval.ensemble, "Ensemble size (default: the run's setting)");

  AnalyzeOptions analyze;
  auto* a = app.add_subcommand("analyze", "Correlations, pretraining boost and plots over a study table");
  a->fallthrough();
  a->add_option("--table", analyze.table, "Study-table CSV");
  a->add_option("--run", analyze.runs, "Evaluated run directory (repeatable)");
  a->add_option("--boost-ci", analyze.boost_ci, "comparison.csv from `eval --compare` giving a boost interval (repeatable)");
  a->add_option("--out", analyze.out, "Report directory")->required();

  CamOptions cam;
  auto* c = app.add_subcommand("cam", "Grad-CAM overlays for images under one or more runs");
  c->fallthrough();
  c->add_option("--run", cam.runs, "Run directory (repeatable; several runs also produce a side-by-side grid)")->required();
  c->add_option("--image", cam.images, "Image file (repeatable)")->required();
  c->add_option("--task", cam.task, "Observation name, e.g. Edema")->required();
  c->add_option("--out", cam.out, "Output directory")->required();
  c->add_option("--step", cam.step, "Checkpoint step (default: best validation checkpoint)");

  std::vector<std::string> argv_store = {"truncnet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& x : argv_store) argv.push_back(x.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    setup_logging(log_level);
    if (*s) return cmd_synth(synth);
    if (*t) {
      const std::string merged = "[train]\n" + t->config_to_str(true, false);
      return cmd_train(train, merged);
    }
    if (*e) return cmd_eval(eval);
    if (*a) return cmd_analyze(analyze);
    if (*c) return cmd_cam(cam);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace truncnet
