#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "truncnet/arch/registry.hpp"
#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"
#include "truncnet/data/synthetic.hpp"
#include "truncnet/train/trainer.hpp"

using namespace truncnet;
using testsupport::TempDir;

namespace {

class TrainerRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_dir_ = new TempDir("trainer_data");
    SyntheticConfig cfg;
    cfg.count = 100;
    cfg.image_size = 16;
    cfg.tasks = 2;
    cfg.seed = 3;
    data_ = new SyntheticDataset(make_synthetic_dataset(cfg, data_dir_->path()));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete data_dir_;
  }

  static RunSpec small_spec() {
    RunSpec s;
    s.plan = truncate(builtin_spec(Family::kToy, "2x8"), 0);
    s.train_manifest = data_->train;
    s.valid_manifest = data_->valid;
    s.image_size = 16;
    s.tasks = {"No Finding", "Atelectasis"};
    s.train.learning_rate = 3e-3;
    s.train.batch_size = 8;
    s.train.epochs = 2;
    s.train.eval_every = 3;
    s.train.ensemble_size = 2;
    s.train.seed = 5;
    return s;
  }

  static TempDir* data_dir_;
  static SyntheticDataset* data_;
};

TempDir* TrainerRun::data_dir_ = nullptr;
SyntheticDataset* TrainerRun::data_ = nullptr;

}  // namespace

TEST(Loss, BceMatchesTheDefinitionAndIsStable) {
  TensorD z({1, 4}, std::vector<double>{0.0, 2.0, -3.0, 800.0});
  TensorF y({1, 4}, std::vector<float>{1, 0, 1, 0});
  TensorF mask({1, 4}, std::vector<float>{1, 1, 1, 0});
  TensorD g;
  const double got = bce_with_logits(z, y, mask, &g);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double want = (-std::log(sig(0.0)) - std::log(1 - sig(2.0)) - std::log(sig(-3.0))) / 3.0;
  EXPECT_NEAR(got, want, 1e-12);
  EXPECT_NEAR(g[0], (sig(0.0) - 1) / 3, 1e-12);
  EXPECT_NEAR(g[1], sig(2.0) / 3, 1e-12);
  EXPECT_EQ(g[3], 0.0);
  // Extreme logits stay finite.
  TensorD big({1, 2}, std::vector<double>{1000.0, -1000.0});
  TensorF ones({1, 2}, 1.0f);
  EXPECT_NEAR(bce_with_logits(big, TensorF({1, 2}, std::vector<float>{0, 1}), ones, static_cast<TensorD*>(nullptr)),
              1000.0, 1e-9);
  EXPECT_TRUE(std::isnan(bce_with_logits(big, ones, TensorF({1, 2}, 0.0f), static_cast<TensorD*>(nullptr))));
  EXPECT_THROW(bce_with_logits(big, TensorF({2, 1}), ones, static_cast<TensorD*>(nullptr)), ShapeError);
}

// Every trainable parameter of a small Toy network: analytic BCE gradients
// against central differences of the full masked loss.
TEST(Loss, ToyNetworkGradientsMatchFiniteDifferences) {
  auto net = instantiate<double>(truncate(builtin_spec(Family::kToy, "2x4"), 0), false, nullptr, 3);
  net->set_training(false);  // eval-mode batch norm keeps examples independent
  Rng rng(4);
  const auto x = testsupport::random_tensor({3, 3, 16, 16}, rng);
  TensorF y({3, 14}), mask({3, 14});
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    mask[i] = i % 5 == 0 ? 0.0f : 1.0f;
  }
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
    const std::size_t stride = std::max<std::size_t>(1, v.numel() / 16);
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
  EXPECT_GT(checked, 50u);
  EXPECT_LT(worst, 1e-4);
}

TEST(Optimizer, FirstAdamStepMovesByTheLearningRate) {
  nn::Parameter<float> p;
  p.value = TensorF({3}, std::vector<float>{1, 1, 1});
  p.grad = TensorF({3}, std::vector<float>{0.5f, -2.0f, 0.0f});
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  Adam<float> adam({{"p", &p}}, cfg);
  adam.step();
  EXPECT_NEAR(p.value[0], 0.99, 1e-6);
  EXPECT_NEAR(p.value[1], 1.01, 1e-6);
  EXPECT_EQ(p.value[2], 1.0f);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Config, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.eval_every, 8192);
  EXPECT_EQ(c.ensemble_size, 10u);
  auto bad = c;
  bad.eval_every = 0;
  EXPECT_THROW(bad.validate(), InputError);
  bad = c;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), InputError);
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.eval_every, c.eval_every);
  EXPECT_EQ(back.learning_rate, c.learning_rate);
}

TEST(Config, CheckpointCadence) {
  EXPECT_EQ(expected_checkpoints(12, 3), 4);
  EXPECT_EQ(expected_checkpoints(10, 4), 3);  // 4, 8, 10
  EXPECT_EQ(expected_checkpoints(3, 8192), 1);
  EXPECT_EQ(expected_checkpoints(8192, 8192), 1);
  EXPECT_EQ(expected_checkpoints(8193, 8192), 2);
}

TEST_F(TrainerRun, WritesTheRunDirectoryLayout) {
  TempDir run("run_layout");
  const auto spec = small_spec();
  const auto r = finetune(spec, run.path());
  EXPECT_EQ(r.total_steps, 2 * 9);  // 70 training rows in batches of 8, two epochs
  ASSERT_EQ(static_cast<std::int64_t>(r.checkpoints.size()), expected_checkpoints(r.total_steps, 3));
  for (const auto* f : {"config.json", "plan.json", "metrics.csv", "ensemble.json"}) {
    EXPECT_TRUE(std::filesystem::exists(run / f)) << f;
  }
  const auto config = load_run_config(run.path());
  EXPECT_EQ(config.at("model").at("name"), "Toy2x8");
  EXPECT_EQ(config.at("normalization").at("mode"), "dataset_stats");
  EXPECT_EQ(config.at("train").at("eval_every"), 3);
  EXPECT_EQ(load_run_plan(run.path()), spec.plan);
  const auto metas = list_checkpoints(run.path());
  ASSERT_EQ(metas.size(), r.checkpoints.size());
  for (std::size_t i = 0; i < metas.size(); ++i) {
    EXPECT_EQ(metas[i].step, r.checkpoints[i].step);
    EXPECT_TRUE(std::filesystem::exists(run / metas[i].artifact_path));
    EXPECT_EQ(metas[i].tasks, spec.tasks);
  }
  EXPECT_EQ(metas.back().step, r.total_steps);
  const auto rows = csv::read_lines((run / "metrics.csv").string());
  EXPECT_EQ(rows.size(), metas.size() + 1);
  EXPECT_EQ(rows[0], "step,No Finding,Atelectasis,avg_auc");

  const auto ens = nlohmann::json::parse(read_file(run / "ensemble.json"));
  EXPECT_EQ(ens.at("members").size(), 2u);
  EXPECT_THROW(finetune(spec, run.path()), ConflictError);
}

TEST_F(TrainerRun, SameSeedGivesIdenticalMetrics) {
  TempDir a("run_a"), b("run_b"), c("run_c");
  auto spec = small_spec();
  spec.train.epochs = 1;
  finetune(spec, a.path());
  finetune(spec, b.path());
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "checkpoints/step_6.tnw"), read_file(b / "checkpoints/step_6.tnw"));
  spec.train.seed = 6;
  finetune(spec, c.path());
  EXPECT_NE(read_file(a / "checkpoints/step_6.tnw"), read_file(c / "checkpoints/step_6.tnw"));
}

TEST_F(TrainerRun, EnsemblePicksTopAucWithTiesToTheLaterStep) {
  TempDir run("run_ens");
  auto spec = small_spec();
  spec.train.ensemble_size = 1;
  finetune(spec, run.path());
  auto metas = list_checkpoints(run.path());
  ASSERT_GE(metas.size(), 3u);
  // Rewrite the validation scores: steps 3 and 9 tie at the top.
  for (auto& m : metas) {
    m.avg_auc = m.step == 3 || m.step == 9 ? 0.9 : 0.5;
    write_file_atomic(run / ("checkpoints/step_" + std::to_string(m.step) + ".json"), nlohmann::json(m).dump());
  }
  const auto top1 = select_ensemble(run.path(), 1);
  ASSERT_EQ(top1.members.size(), 1u);
  EXPECT_EQ(top1.members[0].step, 9);
  const auto top2 = select_ensemble(run.path(), 2);
  EXPECT_EQ(top2.members[1].step, 3);
  EXPECT_EQ(select_ensemble(run.path(), 50).members.size(), metas.size());
  EXPECT_EQ(best_checkpoint_path(run.path()), run.path() / "checkpoints/step_9.tnw");
  // Reading never rewrites ensemble.json.
  const auto before = read_file(run / "ensemble.json");
  select_ensemble(run.path(), 2);
  EXPECT_EQ(read_file(run / "ensemble.json"), before);
}

TEST_F(TrainerRun, EnsemblePredictionIsTheMeanOfItsMembers) {
  TempDir run("run_mean");
  finetune(small_spec(), run.path());
  const auto ens = select_ensemble(run.path(), 2);
  const auto test = load_dataset(data_->test, 16, UncertaintyPolicy::kUncertainAsNegative);
  std::vector<TensorF> members;
  for (const auto& m : ens.members) {
    auto net = load_checkpoint(run.path(), m);
    members.push_back(predict_probabilities(*net, test, ens.normalization));
  }
  const auto want = combine_predictions(members);
  const auto got = ens.predict(test);
  ASSERT_EQ(got.shape(), want.shape());
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_FLOAT_EQ(got[i], (members[0][i] + members[1][i]) / 2);
  const auto m = to_label_matrix(got, test, {"Atelectasis"});
  EXPECT_EQ(m.cols, 1u);
  EXPECT_EQ(m.rows, test.size());
  EXPECT_EQ(m.score(2, 0), got.at(2, observation_index("Atelectasis")));
}

TEST_F(TrainerRun, CheckpointOfAnotherPlanIsRejected) {
  TempDir run("run_plan");
  finetune(small_spec(), run.path());
  auto meta = list_checkpoints(run.path()).front();
  meta.plan_hash = "0000";
  EXPECT_THROW(load_checkpoint(run.path(), meta), SchemaError);
}

TEST_F(TrainerRun, DivergentTrainingRaisesNonFiniteLoss) {
  TempDir run("run_nan");
  auto spec = small_spec();
  spec.train.learning_rate = 1e30;
  EXPECT_THROW(finetune(spec, run.path()), NonFiniteLossError);
}

TEST_F(TrainerRun, ConfigurationErrors) {
  TempDir run("run_err");
  auto spec = small_spec();
  spec.pretrained = true;
  EXPECT_THROW(finetune(spec, run.path()), InputError);
  spec = small_spec();
  spec.image_size = 0;
  EXPECT_THROW(finetune(spec, run.path()), InputError);
  spec = small_spec();
  write_manifest(run / "empty.csv", {});
  spec.train_manifest = run / "empty.csv";
  EXPECT_THROW(finetune(spec, run / "r"), EmptyDatasetError);
  EXPECT_TRUE(list_checkpoints(run / "nowhere").empty());
  EXPECT_THROW(select_ensemble(run / "nowhere", 1), NotFoundError);
  EXPECT_THROW(load_run_plan(run / "nowhere"), NotFoundError);
}
