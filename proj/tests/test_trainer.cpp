/* Copyright 2026 The dfnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include <unistd.h>

#include "dfnet/trainer.hpp"
#include "test_util.hpp"

namespace dfnet {
namespace {

namespace fs = std::filesystem;
using namespace trainer;
using model::ParamGroup;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("dfnet_trainer_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TrainConfig tiny_config(const fs::path& out = "unused") {
  TrainConfig c;
  c.architecture = "desk";
  c.width = 64;
  c.height = 32;
  c.batch_size = 1;
  c.synthetic_frames = 6;
  c.correlation_radius = 2;
  c.steps = {3, 3, 2};
  c.seed = 11;
  c.output_dir = out.string();
  c.results_ledger = (out / "ledger.jsonl").string();
  return c;
}

std::uint64_t digest(const nn::NamedParameters& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, p] : params)
    for (double v : p.value().values()) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
  return h;
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DumpParsesBackToTheSameConfig) {
  TrainConfig c = tiny_config();
  c.learning_rate[2] = 3.5e-6;
  c.loss.flow_scales[1] = 0.125;
  c.flags.dual_head = false;
  const TrainConfig back = TrainConfig::parse(c.dump());
  EXPECT_EQ(back.dump(), c.dump());
  EXPECT_EQ(back.learning_rate[2], 3.5e-6);
  EXPECT_FALSE(back.flags.dual_head);
  EXPECT_EQ(back.model, "VI");
}

TEST(Config, ModelKeyResetsFlagsAndLaterKeysOverride) {
  const TrainConfig c = TrainConfig::parse(
      "# comment\nmodel = IV   # trailing\n\nema = false\nstage2_steps = 7\n");
  EXPECT_EQ(c.flags, (model::ModelFlags{true, true, true, false, false}));
  EXPECT_EQ(c.steps[1], 7);
}

TEST(Config, ErrorsNameTheLineAndKey) {
  const auto message = [](const std::string& text) {
    try {
      TrainConfig::parse(text, "run.cfg");
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("width = 64\nbogus = 1\n").find("run.cfg:2"), std::string::npos);
  EXPECT_NE(message("bogus = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(message("width = 6x4\n").find("width"), std::string::npos);
  EXPECT_NE(message("d2f = maybe\n").find("boolean"), std::string::npos);
  EXPECT_NE(message("width 64\n").find("key = value"), std::string::npos);
  EXPECT_NE(message("model = VII\n").find("VII"), std::string::npos);
  EXPECT_THROW(TrainConfig::load("/nonexistent/cfg"), std::invalid_argument);
}

TEST(Config, ValidationRejectsBadValues) {
  const auto rejects = [](const std::string& key, const std::string& value) {
    TrainConfig c = tiny_config();
    c.set(key, value);
    EXPECT_THROW(c.validate(), std::invalid_argument) << key << " = " << value;
  };
  rejects("stage1_lr", "0");
  rejects("stage3_lr", "-1e-5");
  rejects("ema_decay", "1");
  rejects("width", "100");
  rejects("batch_size", "0");
  rejects("architecture", "huge");
  rejects("data", "imagenet");
  rejects("data", "kitti");  // without data_root
  TrainConfig inconsistent = tiny_config();
  inconsistent.flags.d2f = false;
  EXPECT_THROW(inconsistent.validate(), std::invalid_argument);
  EXPECT_NO_THROW(tiny_config().validate());
}

TEST(Config, HashIgnoresModelAndSeedOnly) {
  const TrainConfig a = tiny_config();
  TrainConfig b = a;
  b.set("model", "II");
  b.seed = 99;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.learning_rate[0] = 2e-4;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, EnvironmentOverridesDataRoot) {
  TrainConfig c = tiny_config();
  c.data_root = "/from/config";
  ::setenv("DFNET_DATA_ROOT", "/from/env", 1);
  c.apply_environment();
  ::unsetenv("DFNET_DATA_ROOT");
  EXPECT_EQ(c.data_root, "/from/env");
}

// ---------------------------------------------------------------------------
// Optimizer and EMA

TEST(Adam, MatchesReferenceUpdates) {
  Var p(Tensor({1, 1, 1, 2}, {1.0, -2.0}), true);
  Var frozen(Tensor({1, 1, 1, 1}, {5.0}), true);
  nn::NamedParameters params{{"p", p}, {"frozen", frozen}};
  Adam adam(0.9, 0.999, 1e-8);
  const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.1, 2.0}, {-0.3, 0.0}};
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    p.zero_grad();
    p.node()->grad_buffer() = Tensor({1, 1, 1, 2}, grads[t - 1]);
    adam.step(params, 0.01);
    if (t == 1) EXPECT_NEAR(p.value()[1], -2.0 + 0.01, 1e-8);  // first step moves by lr
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value()[i], w[i], 1e-15);
    }
  }
  EXPECT_EQ(frozen.value()[0], 5.0);
  EXPECT_EQ(adam.slots().count("frozen"), 0u);
  EXPECT_EQ(adam.slots().at("p").step, 3);
}

TEST(Ema, GapDecaysGeometrically) {
  model::MultiTaskNet net(Architecture::desk(), model::ModelFlags::ablation("VI"), 3);
  const nn::NamedParameters student = net.parameters(ParamGroup::kFlow);
  const nn::NamedParameters teacher = net.teacher_parameters();
  std::mt19937_64 rng(4);
  std::vector<Tensor> gap0;
  for (const auto& [name, p] : student) {
    Var s = p;
    for (double& v : s.mutable_value().values()) v += std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  for (std::size_t k = 0; k < student.size(); ++k) {
    Tensor g = teacher[k].second.value();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= student[k].second.value()[i];
    gap0.push_back(g);
  }
  const double alpha = 0.9;
  double worst = 0.0;
  for (int step = 1; step <= 60; ++step) {
    net.ema_update(alpha);
    const double factor = std::pow(alpha, step);
    for (std::size_t k = 0; k < student.size(); ++k)
      for (std::size_t i = 0; i < gap0[k].numel(); ++i) {
        const double gap = teacher[k].second.value()[i] - student[k].second.value()[i];
        worst = std::max(worst, std::abs(gap - factor * gap0[k][i]));
      }
  }
  EXPECT_LT(worst, 1e-12);
}

// ---------------------------------------------------------------------------
// Stage schedule

class TinyRun : public ::testing::Test {
 protected:
  void SetUp() override {
    config = tiny_config(dir.path());
    train = make_training_set(config);
  }
  TempDir dir;
  TrainConfig config;
  std::shared_ptr<const data::Dataset> train;
};

TEST_F(TinyRun, StageLengthFollowsStepsOrEpochs) {
  config.steps = {0, 5, 0};
  config.epochs = {2, 1, 3};
  config.batch_size = 3;
  Trainer t(config, train);
  ASSERT_EQ(train->size(), 4u);
  EXPECT_EQ(t.stage_length(1), 4);
  EXPECT_EQ(t.stage_length(2), 5);
  EXPECT_EQ(t.stage_length(3), 6);
}

TEST_F(TinyRun, StagesMustRunInOrder) {
  Trainer t(config, train);
  EXPECT_THROW(t.begin_stage(2), std::invalid_argument);
  EXPECT_THROW(t.step(), std::invalid_argument);
  try {
    train_stage(2, config, std::nullopt);
    FAIL() << "stage 2 ran without a stage 1 checkpoint";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("stage1.ckpt"), std::string::npos);
  }
  t.begin_stage(1);
  t.step();
  EXPECT_THROW(t.begin_stage(2), std::invalid_argument);  // stage 1 unfinished
}

TEST_F(TinyRun, StageOneNeverTouchesFlowBranch) {
  Trainer t(config, train);
  const std::uint64_t flow = digest(t.net().parameters(ParamGroup::kFlow));
  const std::uint64_t f2d = digest(t.net().parameters(ParamGroup::kF2D));
  const std::uint64_t teacher = digest(t.net().teacher_parameters());
  const std::uint64_t depth = digest(t.net().parameters(ParamGroup::kDepth));
  t.begin_stage(1);
  t.finish_stage();
  EXPECT_EQ(digest(t.net().parameters(ParamGroup::kFlow)), flow);
  EXPECT_EQ(digest(t.net().parameters(ParamGroup::kF2D)), f2d);
  EXPECT_EQ(digest(t.net().teacher_parameters()), teacher);
  EXPECT_NE(digest(t.net().parameters(ParamGroup::kDepth)), depth);
}

TEST_F(TinyRun, SeparateFlowEncoderWaitsForStageTwo) {
  config.set("model", "I");
  Trainer t(config, train);
  const auto flow_encoder = [&] {
    nn::NamedParameters out;
    for (const auto& p : t.net().parameters(ParamGroup::kEncoder))
      if (p.first.rfind("flow_encoder.", 0) == 0) out.push_back(p);
    return out;
  };
  ASSERT_FALSE(flow_encoder().empty());
  const std::uint64_t before = digest(flow_encoder());
  t.begin_stage(1);
  t.finish_stage();
  EXPECT_EQ(digest(flow_encoder()), before);
  t.begin_stage(2);
  t.step();
  EXPECT_NE(digest(flow_encoder()), before);
}

TEST_F(TinyRun, TeacherIsNeverOptimized) {
  Trainer t(config, train);
  std::set<const Node*> teacher_nodes;
  for (const auto& [name, p] : t.net().teacher_parameters()) teacher_nodes.insert(p.node());
  ASSERT_FALSE(teacher_nodes.empty());
  for (int stage = 1; stage <= kStages; ++stage)
    for (const auto& [name, p] : t.optimized_parameters(stage)) {
      EXPECT_EQ(teacher_nodes.count(p.node()), 0u) << name;
      EXPECT_EQ(name.rfind("teacher", 0), std::string::npos) << name;
    }
  for (int stage = 1; stage <= kStages; ++stage) {
    t.begin_stage(stage);
    t.finish_stage();
  }
  for (const auto& [name, slot] : t.optimizer().slots())
    EXPECT_EQ(name.rfind("teacher", 0), std::string::npos) << name;
}

TEST_F(TinyRun, FreezeSwitchKeepsDepthBranchInStageTwo) {
  config.freeze_depth_in_stage2 = true;
  Trainer t(config, train);
  t.begin_stage(1);
  t.finish_stage();
  const std::uint64_t depth = digest(t.net().parameters(ParamGroup::kDepth));
  const std::uint64_t flow = digest(t.net().parameters(ParamGroup::kFlow));
  t.begin_stage(2);
  t.finish_stage();
  EXPECT_EQ(digest(t.net().parameters(ParamGroup::kDepth)), depth);
  EXPECT_NE(digest(t.net().parameters(ParamGroup::kFlow)), flow);
}

TEST_F(TinyRun, StageTwoStartsWithTeacherEqualToStudent) {
  Trainer t(config, train);
  t.begin_stage(1);
  t.finish_stage();
  t.begin_stage(2);
  const auto student = t.net().parameters(ParamGroup::kFlow);
  const auto teacher = t.net().teacher_parameters();
  ASSERT_EQ(student.size(), teacher.size());
  for (std::size_t k = 0; k < student.size(); ++k)
    EXPECT_TRUE(testing::bit_equal(student[k].second.value(), teacher[k].second.value()))
        << student[k].first;
  t.step();
  EXPECT_NE(digest(teacher), digest(student));
}

TEST_F(TinyRun, StageThreeContinuesStageTwoLoss) {
  Trainer t(config, train);
  for (int stage = 1; stage <= 2; ++stage) {
    t.begin_stage(stage);
    t.finish_stage();
  }
  const std::vector<std::size_t> batch{0, 1};
  const double end_of_two = t.loss_on(batch).total_value();
  t.begin_stage(3);
  const double start_of_three = t.loss_on(batch).total_value();
  EXPECT_NEAR(start_of_three, end_of_two, 0.01 * end_of_two);
  const std::uint64_t f2d = digest(t.net().parameters(ParamGroup::kF2D));
  t.step();
  EXPECT_NE(digest(t.net().parameters(ParamGroup::kF2D)), f2d);
}

TEST_F(TinyRun, LossAtStepTenIsReproducible) {
  config.steps = {10, 0, 0};
  double losses[2];
  for (double& loss : losses) {
    Trainer t(config, train);
    t.begin_stage(1);
    for (int i = 0; i < 10; ++i) loss = t.step().loss;
  }
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_TRUE(std::isfinite(losses[0]));
}

TEST_F(TinyRun, CheckpointRoundTripIsBitExact) {
  Trainer t(config, train);
  t.begin_stage(1);
  t.finish_stage();
  t.begin_stage(2);
  t.step();
  const fs::path file = dir.path() / "mid.ckpt";
  t.save(file);
  Trainer back(Checkpoint::load(file), train);

  const data::SequenceSample s = train->sample(2);
  const model::Prediction a = t.net().predict(s.target(), s.next());
  const model::Prediction b = back.net().predict(s.target(), s.next());
  EXPECT_TRUE(testing::bit_equal(a.depth, b.depth));
  EXPECT_TRUE(testing::bit_equal(a.flow, b.flow));
  EXPECT_EQ(back.progress().stage, 2);
  EXPECT_EQ(back.progress().stage_step, 1);
  EXPECT_EQ(back.progress().global_step, t.progress().global_step);
  ASSERT_EQ(back.history().size(), t.history().size());
  EXPECT_EQ(back.history().back().loss, t.history().back().loss);
  EXPECT_EQ(back.config().dump(), t.config().dump());
  for (const auto& [name, slot] : t.optimizer().slots()) {
    const AdamSlot& other = back.optimizer().slots().at(name);
    EXPECT_EQ(other.step, slot.step);
    EXPECT_TRUE(testing::bit_equal(other.m, slot.m)) << name;
    EXPECT_TRUE(testing::bit_equal(other.v, slot.v)) << name;
  }
  // Resuming continues exactly where the original run goes.
  EXPECT_EQ(back.step().loss, t.step().loss);
  EXPECT_EQ(digest(back.net().state()), digest(t.net().state()));
}

TEST_F(TinyRun, CheckpointRejectsForeignModelsAndCorruptFiles) {
  Trainer t(config, train);
  const fs::path file = dir.path() / "a.ckpt";
  t.save(file);
  TrainConfig other = config;
  other.set("model", "II");
  EXPECT_THROW(Trainer(Checkpoint::load(file), train, other), std::invalid_argument);

  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write = [&](const std::string& content) {
    std::ofstream(file, std::ios::binary | std::ios::trunc) << content;
  };
  write(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(Checkpoint::load(file), std::invalid_argument);
  write("NOT-A-CHECKPOINT\n" + bytes);
  EXPECT_THROW(Checkpoint::load(file), std::invalid_argument);
  try {
    Checkpoint::load(dir.path() / "missing.ckpt");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("missing.ckpt"), std::string::npos);
  }
}

TEST_F(TinyRun, TrainStageWritesCheckpointsAndLog) {
  const Checkpoint one = train_stage(1, config, std::nullopt);
  ASSERT_TRUE(fs::exists(config.stage_checkpoint(1)));
  const Checkpoint two = train_stage(2, config, Checkpoint::load(config.stage_checkpoint(1)));
  EXPECT_EQ(two.manifest["progress"]["stage"], 2);
  EXPECT_TRUE(two.manifest["progress"]["stage_complete"].get<bool>());
  EXPECT_EQ(two.manifest["progress"]["global_step"], 6);
  const auto log = eval::read_jsonl(fs::path(config.output_dir) / "train_log.jsonl");
  ASSERT_EQ(log.size(), 6u);
  EXPECT_EQ(log.back()["stage"], 2);
  // Re-running a finished stage from its own checkpoint is rejected.
  EXPECT_THROW(train_stage(2, config, two), std::invalid_argument);
}

TEST_F(TinyRun, InterruptedStageResumes) {
  config.steps = {4, 1, 1};
  config.checkpoint_every = 2;
  TrainConfig straight = config;
  straight.output_dir = (dir.path() / "straight").string();
  const Checkpoint full = train_stage(1, straight, std::nullopt);

  Trainer partial(config, train);
  partial.begin_stage(1);
  partial.step();
  partial.step();
  const Checkpoint resumed = train_stage(1, config, partial.checkpoint());
  EXPECT_EQ(resumed.manifest["progress"]["global_step"], 4);
  for (const auto& [name, t] : full.tensors)
    EXPECT_TRUE(testing::bit_equal(t, resumed.tensors.at(name))) << name;
}

TEST_F(TinyRun, EvaluationCoversDepthFlowAndRigidRegions) {
  const Trainer t(config, train);
  const EvalReport r = evaluate(t.net(), *make_validation_set(config), 2);
  EXPECT_EQ(r.samples, 2u);
  EXPECT_GT(r.depth.pixels, 0u);
  EXPECT_GT(r.flow.pixels, 0u);
  EXPECT_TRUE(std::isfinite(r.rigid_epe));
  EXPECT_TRUE(std::isfinite(r.depth.abs_rel));
  const nlohmann::json j = to_json(r);
  EXPECT_TRUE(j.contains("depth") && j.contains("flow"));
}

TEST_F(TinyRun, AblationAppendsOneRecord) {
  config.steps = {1, 1, 1};
  config.eval_samples = 1;
  const nlohmann::json record = run_ablation("V", config);
  const auto ledger = eval::read_jsonl(config.results_ledger);
  ASSERT_EQ(ledger.size(), 1u);
  EXPECT_EQ(ledger[0]["model"], "V");
  EXPECT_EQ(ledger[0]["seed"], config.seed);
  EXPECT_EQ(ledger[0]["config_hash"], config.hash());
  EXPECT_EQ(record["parameters"],
            eval::count_parameters(config.resolved_architecture(),
                                   model::ModelFlags::ablation("V")));
  EXPECT_TRUE(find_ablation_record(config.results_ledger, "V", config.seed, config.hash()));
  EXPECT_FALSE(find_ablation_record(config.results_ledger, "VI", config.seed, config.hash()));
  EXPECT_THROW(run_ablation("VII", config), std::invalid_argument);
}

TEST(StageOne, DepthLossFallsOnFlatPlane) {
  TrainConfig c = tiny_config();
  c.width = 128;
  c.height = 64;
  c.steps = {200, 0, 0};
  data::SyntheticSceneSpec spec = data::SyntheticSceneSpec::standard(1, 12);
  spec.sprites.clear();
  spec.width = 128;
  spec.height = 64;
  spec.fx = spec.fy = 74.24;
  spec.cx = 63.5;
  spec.cy = 31.5;
  auto train = std::make_shared<data::SyntheticDataset>(data::generate_synthetic(spec));
  const std::vector<std::size_t> probe{0, 4, 8};
  std::vector<double> drops;
  for (std::uint64_t seed : {1, 2, 3}) {
    c.seed = seed;
    Trainer t(c, train);
    t.begin_stage(1);
    double at10 = 0.0;
    for (int step = 1; step <= 200; ++step) {
      t.step();
      if (step == 10) at10 = t.loss_on(probe).total_value();
    }
    drops.push_back(at10 - t.loss_on(probe).total_value());
  }
  std::sort(drops.begin(), drops.end());
  EXPECT_GT(drops[1], 0.0);
}

}  // namespace
}  // namespace dfnet
