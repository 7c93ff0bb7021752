#include "truncnet/train/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <regex>

#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"

namespace truncnet {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InputError("learning_rate must be positive");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (eval_every < 1) throw InputError("eval_every must be >= 1");
  if (ensemble_size < 1) throw InputError("ensemble_size must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"optimizer", "adam"},         {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                     {"beta2", c.beta2},            {"adam_eps", c.adam_eps},           {"batch_size", c.batch_size},
                     {"epochs", c.epochs},          {"eval_every", c.eval_every},       {"seed", c.seed},
                     {"ensemble_size", c.ensemble_size}, {"loss", "masked_binary_cross_entropy"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<int>();
  c.eval_every = j.at("eval_every").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ensemble_size = j.at("ensemble_size").get<std::size_t>();
}

void to_json(nlohmann::json& j, const CheckpointMeta& m) {
  // NaN is not representable in JSON; undefined task AUCs become null.
  nlohmann::json aucs = nlohmann::json::array();
  for (double a : m.per_task_auc) aucs.push_back(std::isnan(a) ? nlohmann::json(nullptr) : nlohmann::json(a));
  j = nlohmann::json{{"step", m.step},
                     {"tasks", m.tasks},
                     {"per_task_auc", aucs},
                     {"avg_auc", m.avg_auc},
                     {"artifact_path", m.artifact_path},
                     {"plan_hash", m.plan_hash}};
}

void from_json(const nlohmann::json& j, CheckpointMeta& m) {
  m.step = j.at("step").get<std::int64_t>();
  m.tasks = j.at("tasks").get<std::vector<std::string>>();
  m.per_task_auc.clear();
  for (const auto& a : j.at("per_task_auc")) m.per_task_auc.push_back(a.is_null() ? std::nan("") : a.get<double>());
  m.avg_auc = j.at("avg_auc").get<double>();
  m.artifact_path = j.at("artifact_path").get<std::string>();
  m.plan_hash = j.at("plan_hash").get<std::string>();
}

double train_step(Network<float>& model, Adam<float>& optimizer, const TensorF& batch, const TensorF& target,
                  const TensorF& mask) {
  model.set_training(true);
  model.zero_grad();
  const TensorF logits = model.forward(batch);
  TensorF dlogits;
  const double loss = bce_with_logits(logits, target, mask, &dlogits);
  if (std::isnan(loss) && std::all_of(mask.span().begin(), mask.span().end(), [](float m) { return m == 0.0f; })) {
    spdlog::warn("skipping a batch whose loss mask is empty");
    return loss;
  }
  if (!std::isfinite(loss)) return loss;
  model.backward(dlogits);
  optimizer.step();
  return loss;
}

std::int64_t expected_checkpoints(std::int64_t total_steps, std::int64_t eval_every) {
  if (total_steps <= 0) return 0;
  return total_steps / eval_every + (total_steps % eval_every != 0 ? 1 : 0);
}

TensorF predict_probabilities(Network<float>& model, const ImageDataset& data, const NormalizationPolicy& norm,
                              std::size_t batch_size) {
  model.set_training(false);
  const auto n = static_cast<std::int64_t>(data.size());
  TensorF out({n, model.num_outputs()});
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t row = 0;
  for (const auto& idx : make_batches(order, batch_size)) {
    const auto p = model.predict(data.batch(idx, norm));
    std::copy_n(p.data(), p.numel(), out.data() + row * static_cast<std::size_t>(model.num_outputs()));
    row += idx.size();
  }
  return out;
}

LabelMatrix to_label_matrix(const TensorF& probs, const ImageDataset& data, const std::vector<std::string>& tasks) {
  if (probs.rank() != 2 || static_cast<std::size_t>(probs.dim(0)) != data.size()) {
    throw ShapeError("prediction rows do not match the dataset");
  }
  LabelMatrix m;
  m.rows = data.size();
  m.cols = tasks.size();
  m.task_names = tasks;
  m.scores.resize(m.rows * m.cols);
  m.truth.resize(m.rows * m.cols);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto col = observation_index(tasks[k]);
    for (std::size_t i = 0; i < m.rows; ++i) {
      m.scores[i * m.cols + k] = probs.at(static_cast<std::int64_t>(i), static_cast<std::int64_t>(col));
      m.truth[i * m.cols + k] = data.targets.target[i * kObservations + col] > 0.5f ? 1 : 0;
    }
  }
  for (const auto& r : data.records) m.example_ids.push_back(r.image_path);
  return m;
}

TensorF combine_predictions(const std::vector<TensorF>& member_probs) {
  if (member_probs.empty()) throw InputError("cannot combine an empty set of predictions");
  TensorF out(member_probs.front().shape());
  for (const auto& p : member_probs) {
    p.require_same_shape(out);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += p[i];
  }
  const float inv = 1.0f / static_cast<float>(member_probs.size());
  if (member_probs.size() == 1) return member_probs.front();
  for (auto& v : out.span()) v *= inv;
  return out;
}

namespace {

std::string checkpoint_stem(std::int64_t step) { return fmt::format("step_{}", step); }

CheckpointMeta evaluate_checkpoint(Network<float>& model, const ImageDataset& valid, const NormalizationPolicy& norm,
                                   const std::vector<std::string>& tasks, std::int64_t step) {
  const auto m = to_label_matrix(predict_probabilities(model, valid, norm), valid, tasks);
  CheckpointMeta meta;
  meta.step = step;
  meta.tasks = tasks;
  std::vector<std::optional<double>> per_task;
  const auto avg = matrix_avg_auc(m, {}, &per_task);
  for (const auto& a : per_task) meta.per_task_auc.push_back(a ? *a : std::nan(""));
  meta.avg_auc = avg.value;
  if (avg.has_exclusions()) spdlog::warn("step {}: validation tasks without both classes were excluded", step);
  return meta;
}

std::string metrics_header(const std::vector<std::string>& tasks) {
  std::vector<std::string> h = {"step"};
  h.insert(h.end(), tasks.begin(), tasks.end());
  h.push_back("avg_auc");
  return csv::join(h);
}

std::string metrics_row(const CheckpointMeta& m) {
  std::vector<std::string> row = {std::to_string(m.step)};
  for (double a : m.per_task_auc) row.push_back(std::isnan(a) ? "" : csv::format_double(a));
  row.push_back(csv::format_double(m.avg_auc));
  return csv::join(row);
}

}  // namespace

RunResult finetune(const RunSpec& spec, const fs::path& run_dir) {
  spec.train.validate();
  if (spec.image_size <= 0) throw InputError("image_size must be configured");
  if (spec.pretrained && !spec.provider) throw InputError("pretrained training needs a weight provider");
  if (fs::exists(run_dir / "config.json")) throw ConflictError(run_dir.string() + " already holds a run");
  std::error_code ec;
  fs::create_directories(run_dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create " + run_dir.string() + ": " + ec.message());

  const auto seed = spec.train.seed;
  auto train = load_dataset(spec.train_manifest, spec.image_size, spec.uncertainty);
  auto valid = load_dataset(spec.valid_manifest, spec.image_size, spec.uncertainty);
  if (train.size() == 0) throw EmptyDatasetError("training split is empty");
  if (valid.size() == 0) throw EmptyDatasetError("validation split is empty");

  const auto mode = spec.normalization.value_or(NormalizationPolicy::default_mode(spec.pretrained));
  const NormalizationPolicy norm =
      mode == NormalizationPolicy::Mode::kImagenetStats
          ? NormalizationPolicy::imagenet()
          : compute_dataset_stats(train.records, spec.stats_sample_cap, derive_seed(seed, std::string_view("stats")));
  if (mode != NormalizationPolicy::default_mode(spec.pretrained)) {
    spdlog::warn("normalization overridden to {} for a {} run", to_string(mode),
                 spec.pretrained ? "pretrained" : "scratch");
  }

  const auto plan_hash = plan_content_hash(spec.plan);
  const auto steps_per_epoch = static_cast<std::int64_t>((train.size() + spec.train.batch_size - 1) / spec.train.batch_size);
  const auto total_steps = steps_per_epoch * spec.train.epochs;

  nlohmann::json config = {
      {"model",
       {{"family", to_string(spec.plan.base.family)},
        {"variant", spec.plan.base.variant},
        {"depth", spec.plan.depth},
        {"name", spec.plan.name},
        {"pretrained", spec.pretrained},
        {"provider", spec.pretrained ? (spec.provider_description.empty() ? spec.provider->describe()
                                                                          : spec.provider_description)
                                     : ""}}},
      {"data",
       {{"train_manifest", fs::absolute(spec.train_manifest).string()},
        {"valid_manifest", fs::absolute(spec.valid_manifest).string()},
        {"image_size", spec.image_size},
        {"uncertainty_policy", to_string(spec.uncertainty)},
        {"stats_sample_cap", spec.stats_sample_cap},
        {"n_train", train.size()},
        {"n_valid", valid.size()}}},
      {"normalization", norm},
      {"train", spec.train},
      {"tasks", spec.tasks},
      {"seed", seed},
      {"plan_hash", plan_hash},
      {"steps_per_epoch", steps_per_epoch},
      {"total_steps", total_steps}};
  write_file_atomic(run_dir / "plan.json", plan_to_text(spec.plan));
  write_file_atomic(run_dir / "config.json", config.dump(2) + "\n");
  write_file_atomic(run_dir / "metrics.csv", metrics_header(spec.tasks) + "\n");

  auto model = instantiate<float>(spec.plan, spec.pretrained, spec.provider, derive_seed(seed, std::string_view("init")));
  spdlog::info("{}: {} parameters, {} steps ({} per epoch), normalization {}", spec.plan.name, model->param_count(),
               total_steps, steps_per_epoch, to_string(norm.mode));
  Adam<float> optimizer(model->named_parameters(), spec.train);

  RunResult result{run_dir, {}, total_steps};
  auto checkpoint = [&](std::int64_t step) {
    auto meta = evaluate_checkpoint(*model, valid, norm, spec.tasks, step);
    meta.plan_hash = plan_hash;
    meta.artifact_path = (fs::path("checkpoints") / (checkpoint_stem(step) + ".tnw")).string();
    save_weights(run_dir / meta.artifact_path, export_weights(*model));
    write_file_atomic(run_dir / "checkpoints" / (checkpoint_stem(step) + ".json"), nlohmann::json(meta).dump(2) + "\n");
    append_line(run_dir / "metrics.csv", metrics_row(meta));
    spdlog::info("{} step {}: validation avg AUC {:.4f}", spec.plan.name, step, meta.avg_auc);
    result.checkpoints.push_back(std::move(meta));
  };

  const auto data_seed = derive_seed(seed, std::string_view("data"));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < spec.train.epochs; ++epoch) {
    const auto batches = make_batches(epoch_order(train.size(), data_seed, static_cast<std::uint64_t>(epoch)),
                                      spec.train.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      TensorF target, mask;
      train.batch_targets(batches[b], target, mask);
      const double loss = train_step(*model, optimizer, train.batch(batches[b], norm), target, mask);
      ++step;
      const bool skipped = std::isnan(loss) &&
                           std::all_of(mask.span().begin(), mask.span().end(), [](float m) { return m == 0.0f; });
      if (!skipped && !std::isfinite(loss)) {
        throw NonFiniteLossError(fmt::format("non-finite loss {} at step {} (epoch {}, batch {})", loss, step, epoch, b),
                                 static_cast<long>(step), static_cast<long>(b));
      }
      if (step % spec.train.eval_every == 0) checkpoint(step);
    }
  }
  if (step % spec.train.eval_every != 0) checkpoint(step);
  build_ensemble(run_dir, spec.train.ensemble_size);
  return result;
}

std::vector<CheckpointMeta> list_checkpoints(const fs::path& run_dir) {
  std::vector<CheckpointMeta> out;
  const auto dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return out;
  static const std::regex name(R"(step_(\d+)\.json)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!std::regex_match(entry.path().filename().string(), name)) continue;
    out.push_back(nlohmann::json::parse(read_file(entry.path())).get<CheckpointMeta>());
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

TruncationPlan load_run_plan(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "plan.json")) throw NotFoundError(run_dir.string() + " is not a run directory");
  return nlohmann::json::parse(read_file(run_dir / "plan.json")).get<TruncationPlan>();
}

nlohmann::json load_run_config(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "config.json")) throw NotFoundError(run_dir.string() + " is not a run directory");
  return nlohmann::json::parse(read_file(run_dir / "config.json"));
}

EnsembleModel select_ensemble(const fs::path& run_dir, std::size_t k) {
  if (k < 1) throw InputError("ensemble size must be >= 1");
  auto all = list_checkpoints(run_dir);
  if (all.empty()) throw NotFoundError("no checkpoints under " + run_dir.string());
  std::sort(all.begin(), all.end(), [](const CheckpointMeta& a, const CheckpointMeta& b) {
    if (a.avg_auc != b.avg_auc) return a.avg_auc > b.avg_auc;
    return a.step > b.step;
  });
  if (all.size() > k) all.resize(k);
  const auto config = load_run_config(run_dir);
  EnsembleModel e{run_dir, load_run_plan(run_dir), config.at("normalization").get<NormalizationPolicy>(),
                  config.at("data").at("image_size").get<std::int64_t>(), std::move(all)};
  return e;
}

EnsembleModel build_ensemble(const fs::path& run_dir, std::size_t k) {
  auto e = select_ensemble(run_dir, k);
  write_file_atomic(run_dir / "ensemble.json", nlohmann::json(e).dump(2) + "\n");
  return e;
}

void to_json(nlohmann::json& j, const EnsembleModel& e) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : e.members) members.push_back({{"step", m.step}, {"avg_auc", m.avg_auc}, {"artifact_path", m.artifact_path}});
  j = nlohmann::json{{"model", e.plan.name}, {"combine", "mean_probability"}, {"members", members}};
}

std::unique_ptr<Network<float>> load_checkpoint(const fs::path& run_dir, const CheckpointMeta& meta) {
  const auto plan = load_run_plan(run_dir);
  if (!meta.plan_hash.empty() && meta.plan_hash != plan_content_hash(plan)) {
    throw SchemaError("checkpoint step " + std::to_string(meta.step) + " was written for a different plan");
  }
  auto net = build_network<float>(plan.truncated_spec());
  const auto missing = import_weights(*net, load_weights(run_dir / meta.artifact_path));
  if (!missing.empty()) throw RemapError("checkpoint lacks " + std::to_string(missing.size()) + " parameter(s)", missing);
  return net;
}

TensorF EnsembleModel::predict(const ImageDataset& data) const {
  std::vector<TensorF> probs;
  for (const auto& m : members) {
    auto net = load_checkpoint(run_dir, m);
    probs.push_back(predict_probabilities(*net, data, normalization));
  }
  return combine_predictions(probs);
}

fs::path best_checkpoint_path(const fs::path& run_dir) {
  const auto e = select_ensemble(run_dir, 1);
  return run_dir / e.members.front().artifact_path;
}

}  // namespace truncnet
