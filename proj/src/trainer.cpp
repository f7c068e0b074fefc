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

#include "dfnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace dfnet::trainer {
namespace {

namespace fs = std::filesystem;
using model::ParamGroup;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

void append(nn::NamedParameters& out, const nn::NamedParameters& more) {
  out.insert(out.end(), more.begin(), more.end());
}

nn::NamedParameters filtered(const nn::NamedParameters& in, const std::string& prefix) {
  nn::NamedParameters out;
  for (const auto& p : in)
    if (starts_with(p.first, prefix)) out.push_back(p);
  return out;
}

data::SyntheticSceneSpec synthetic_scene(const TrainConfig& c, std::uint64_t seed) {
  data::SyntheticSceneSpec s = data::SyntheticSceneSpec::standard(seed, c.synthetic_frames);
  if (c.width == s.width && c.height == s.height) return s;
  const double sx = static_cast<double>(c.width) / s.width;
  const double sy = static_cast<double>(c.height) / s.height;
  s.fx *= sx;
  s.fy *= sy;
  s.cx = (s.cx + 0.5) * sx - 0.5;
  s.cy = (s.cy + 0.5) * sy - 0.5;
  for (data::SpriteSpec& sp : s.sprites) {
    sp.width = std::max(1, static_cast<int>(std::lround(sp.width * sx)));
    sp.height = std::max(1, static_cast<int>(std::lround(sp.height * sy)));
    sp.x *= sx;
    sp.y *= sy;
    sp.velocity_x *= sx;
    sp.velocity_y *= sy;
  }
  s.width = c.width;
  s.height = c.height;
  return s;
}

data::KittiOptions kitti_options(const TrainConfig& c) {
  data::KittiOptions o;
  o.split_dir = c.split_dir.empty() ? fs::path(c.data_root) / "splits" : fs::path(c.split_dir);
  o.width = c.width;
  o.height = c.height;
  return o;
}

std::shared_ptr<const data::Dataset> synthetic_directory(const TrainConfig& c) {
  auto set = std::make_shared<data::SyntheticDirectory>(c.data_root);
  require(set->intrinsics().width == c.width && set->intrinsics().height == c.height,
          "synthetic directory " + c.data_root + " holds " +
              std::to_string(set->intrinsics().width) + "x" +
              std::to_string(set->intrinsics().height) + " frames but the config asks for " +
              std::to_string(c.width) + "x" + std::to_string(c.height));
  return set;
}

nlohmann::json components_json(const std::vector<losses::LossComponent>& cs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cs) j.push_back({{"name", c.name}, {"value", c.value}, {"weight", c.weight}});
  return j;
}

StepRecord record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.stage = j.at("stage");
  r.step = j.at("step");
  r.loss = j.at("loss");
  r.learning_rate = j.at("lr");
  for (const auto& c : j.at("components"))
    r.components.push_back({c.at("name"), c.at("value"), c.at("weight")});
  return r;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

/// Copies "param/<name>" tensors into the network; returns how many.
std::size_t load_parameters(model::MultiTaskNet& net, const Checkpoint& ck) {
  std::size_t loaded = 0;
  for (const auto& [name, p] : net.state()) {
    const std::string key = "param/" + name;
    const auto it = ck.tensors.find(key);
    require(it != ck.tensors.end(), "checkpoint lacks tensor '" + key + "'");
    require(it->second.shape() == p.shape(),
            "checkpoint tensor '" + key + "' has shape " + it->second.shape().str() +
                ", model expects " + p.shape().str());
    Var target = p;
    target.mutable_value() = it->second;
    ++loaded;
  }
  return loaded;
}

}  // namespace

nlohmann::json to_json(const StepRecord& r) {
  return {{"stage", r.stage},
          {"step", r.step},
          {"loss", r.loss},
          {"lr", r.learning_rate},
          {"components", components_json(r.components)}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"samples", r.samples}};
  if (r.depth.pixels > 0) j["depth"] = eval::to_json(r.depth);
  if (r.flow.pixels > 0) j["flow"] = eval::to_json(r.flow);
  j["rigid_epe"] = std::isnan(r.rigid_epe) ? nlohmann::json(nullptr) : nlohmann::json(r.rigid_epe);
  return j;
}

std::shared_ptr<const data::Dataset> make_training_set(const TrainConfig& c) {
  if (c.data == "synthetic")
    return std::make_shared<data::SyntheticDataset>(
        data::generate_synthetic(synthetic_scene(c, c.synthetic_seed)));
  if (c.data == "synthetic-dir") return synthetic_directory(c);
  if (c.data == "kitti")
    return std::make_shared<data::KittiEigenDataset>(c.data_root, data::Split::kTrain,
                                                     kitti_options(c));
  throw std::invalid_argument("unknown data source '" + c.data + "'");
}

std::shared_ptr<const data::Dataset> make_validation_set(const TrainConfig& c) {
  if (c.data == "synthetic")
    return std::make_shared<data::SyntheticDataset>(
        data::generate_synthetic(synthetic_scene(c, c.validation_seed)));
  if (c.data == "synthetic-dir") return synthetic_directory(c);
  if (c.data == "kitti")
    return std::make_shared<data::KittiEigenDataset>(c.data_root, data::Split::kVal,
                                                     kitti_options(c));
  throw std::invalid_argument("unknown data source '" + c.data + "'");
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, std::shared_ptr<const data::Dataset> train)
    : config_(std::move(config)),
      train_(std::move(train)),
      adam_(config_.adam_beta1, config_.adam_beta2, config_.adam_epsilon) {
  config_.validate();
  require(train_ && train_->size() > 0, "trainer: empty training set");
  net_ = std::make_unique<model::MultiTaskNet>(config_.resolved_architecture(),
                                               config_.flags, config_.seed);
}

TrainConfig checkpoint_config(const Checkpoint& ck) {
  require(ck.manifest.contains("config"), "checkpoint has no config snapshot");
  return TrainConfig::parse(ck.manifest.at("config").get<std::string>(), "checkpoint config");
}

std::unique_ptr<model::MultiTaskNet> restore_network(const Checkpoint& ck,
                                                     const TrainConfig& config) {
  config.validate();
  auto net = std::make_unique<model::MultiTaskNet>(config.resolved_architecture(),
                                                   config.flags, config.seed);
  std::size_t params = 0;
  for (const auto& entry : ck.tensors) params += entry.first.rfind("param/", 0) == 0;
  require(load_parameters(*net, ck) == params,
          "checkpoint holds parameters the model does not have (model or flags differ)");
  return net;
}

Trainer::Trainer(const Checkpoint& ck, std::shared_ptr<const data::Dataset> train,
                 std::optional<TrainConfig> config)
    : Trainer(config ? *config : checkpoint_config(ck), std::move(train)) {
  std::size_t expected = load_parameters(*net_, ck);
  const nlohmann::json& slots = ck.manifest.at("adam");
  for (const auto& [name, step] : slots.items()) {
    AdamSlot& slot = adam_.slots()[name];
    slot.step = step.get<std::int64_t>();
    const auto m = ck.tensors.find("adam.m/" + name);
    const auto v = ck.tensors.find("adam.v/" + name);
    require(m != ck.tensors.end() && v != ck.tensors.end(),
            "checkpoint lacks optimizer state of '" + name + "'");
    slot.m = m->second;
    slot.v = v->second;
    expected += 2;
  }
  require(expected == ck.tensors.size(),
          "checkpoint holds tensors the model does not have (model or flags differ)");
  const nlohmann::json& p = ck.manifest.at("progress");
  progress_.stage = p.at("stage");
  progress_.stage_step = p.at("stage_step");
  progress_.stage_complete = p.at("stage_complete");
  progress_.global_step = p.at("global_step");
  for (const auto& r : ck.manifest.at("history")) history_.push_back(record_from_json(r));
}

std::int64_t Trainer::stage_length(int stage) const {
  require(stage >= 1 && stage <= kStages, "stage must be 1, 2 or 3");
  if (config_.steps[stage - 1] > 0) return config_.steps[stage - 1];
  const std::int64_t n = static_cast<std::int64_t>(train_->size());
  const std::int64_t per_epoch = (n + config_.batch_size - 1) / config_.batch_size;
  return per_epoch * config_.epochs[stage - 1];
}

void Trainer::begin_stage(int stage) {
  require(stage >= 1 && stage <= kStages, "stage must be 1, 2 or 3");
  if (stage > 1)
    require(progress_.stage == stage - 1 && progress_.stage_complete,
            "stage " + std::to_string(stage) + " requires a completed stage " +
                std::to_string(stage - 1) + " checkpoint");
  else
    require(progress_.stage == 0, "stage 1 must start from a fresh model");
  if (stage == 2 && config_.flags.ema) net_->clone_teacher();
  progress_.stage = stage;
  progress_.stage_step = 0;
  progress_.stage_complete = false;
}

nn::NamedParameters Trainer::optimized_parameters(int stage) const {
  nn::NamedParameters out;
  const nn::NamedParameters encoders = net_->parameters(ParamGroup::kEncoder);
  if (stage == 1 || !(stage == 2 && config_.freeze_depth_in_stage2)) {
    append(out, filtered(encoders, "encoder."));
    append(out, net_->parameters(ParamGroup::kDepth));
    append(out, net_->parameters(ParamGroup::kPose));
  }
  if (stage >= 2) {
    append(out, filtered(encoders, "flow_encoder."));
    append(out, net_->parameters(ParamGroup::kFlow));
  }
  if (stage == 3) append(out, net_->parameters(ParamGroup::kF2D));
  return out;
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t global_step) const {
  const std::size_t n = train_->size();
  const std::size_t b = std::min<std::size_t>(config_.batch_size, n);
  const std::size_t per_epoch = (n + b - 1) / b;
  const std::uint64_t epoch = static_cast<std::uint64_t>(global_step) / per_epoch;
  const std::size_t pos = static_cast<std::size_t>(global_step) % per_epoch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config_.seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t begin = pos * b;
  return {order.begin() + begin, order.begin() + std::min(n, begin + b)};
}

losses::LossReport Trainer::objective(const data::Batch& batch, int stage) const {
  const Var prev(batch.previous), target(batch.target), next(batch.next);
  model::ForwardOptions options;
  options.flow = stage >= 2;
  options.f2d = stage >= 3;
  const model::ForwardResult r = net_->forward(target, next, options);

  losses::DepthLossInputs in;
  in.frame_prev = prev;
  in.frame_t = target;
  in.frame_next = next;
  in.disparity = r.depth.disparity;
  in.pose_prev = net_->pose(target, prev).params;
  in.pose_next = net_->pose(target, next).params;
  in.intrinsics = batch.intrinsics;
  in.min_depth = net_->architecture().min_depth;
  in.max_depth = net_->architecture().max_depth;
  losses::LossReport report = losses::depth_loss(in, config_.loss);
  if (options.flow)
    report.merge(losses::flow_loss(target, next, r.flow->flows, config_.loss),
                 config_.loss.flow);
  return report;
}

losses::LossReport Trainer::loss_on(std::span<const std::size_t> indices) const {
  require(progress_.stage >= 1, "loss_on: no stage has started");
  NoGradGuard no_grad;
  return objective(data::make_batch(*train_, indices), progress_.stage);
}

StepRecord Trainer::step() {
  require(progress_.stage >= 1 && !progress_.stage_complete,
          "step: no stage in progress");
  const int stage = progress_.stage;
  const std::vector<std::size_t> indices = batch_indices(progress_.global_step);
  const data::Batch batch = data::make_batch(*train_, indices);
  nn::NamedParameters all = net_->trainable_parameters();
  for (auto& [name, p] : all) p.zero_grad();

  StepRecord record;
  {
    const losses::LossReport report = objective(batch, stage);
    backward(report.total);
    record.loss = report.total_value();
    record.components = report.components;
  }
  const double lr = config_.learning_rate[stage - 1];
  adam_.step(optimized_parameters(stage), lr);
  for (auto& [name, p] : all) p.zero_grad();
  if (stage >= 2 && config_.flags.ema) net_->ema_update(config_.ema_decay);

  ++progress_.stage_step;
  ++progress_.global_step;
  record.stage = stage;
  record.step = progress_.stage_step;
  record.learning_rate = lr;
  history_.push_back(record);
  return record;
}

void Trainer::finish_stage() {
  while (progress_.stage_step < stage_length(progress_.stage)) step();
  progress_.stage_complete = true;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.manifest["config"] = config_.dump();
  ck.manifest["progress"] = {{"stage", progress_.stage},
                             {"stage_step", progress_.stage_step},
                             {"stage_complete", progress_.stage_complete},
                             {"global_step", progress_.global_step}};
  nlohmann::json history = nlohmann::json::array();
  for (const StepRecord& r : history_) history.push_back(to_json(r));
  ck.manifest["history"] = std::move(history);
  nlohmann::json slots = nlohmann::json::object();
  for (const auto& [name, slot] : adam_.slots()) {
    slots[name] = slot.step;
    ck.tensors["adam.m/" + name] = slot.m;
    ck.tensors["adam.v/" + name] = slot.v;
  }
  ck.manifest["adam"] = std::move(slots);
  for (const auto& [name, p] : net_->state()) ck.tensors["param/" + name] = p.value();
  return ck;
}

void Trainer::save(const fs::path& path) const { checkpoint().save(path); }

// ---------------------------------------------------------------------------

EvalReport evaluate(const model::MultiTaskNet& net, const data::Dataset& dataset,
                    std::size_t max_samples, const eval::DepthEvalOptions& depth_options) {
  const std::size_t n = max_samples > 0 ? std::min(max_samples, dataset.size()) : dataset.size();
  std::vector<eval::DepthMetrics> depth;
  std::vector<eval::FlowMetrics> flow;
  double rigid_sum = 0.0;
  std::size_t rigid_images = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const data::SequenceSample s = dataset.sample(i);
    const model::Prediction p = net.predict(s.target(), s.next());
    if (s.gt_depth) {
      const Tensor& gt = *s.gt_depth;
      depth.push_back(eval::depth_metrics(eval::resize_map(p.depth, gt.h(), gt.w()), gt,
                                          depth_options));
    }
    if (s.gt_flow) {
      const data::FlowGroundTruth& gt = *s.gt_flow;
      const Tensor pred = eval::resize_flow(p.flow, gt.flow.h(), gt.flow.w());
      flow.push_back(eval::flow_metrics(pred, gt.flow, gt.valid, gt.noc));
      if (!gt.rigid.empty()) {
        Tensor mask = gt.rigid;
        bool any = false;
        for (std::size_t k = 0; k < mask.numel(); ++k) {
          mask[k] = (mask[k] > 0.5 && gt.valid[k] > 0.5) ? 1.0 : 0.0;
          any = any || mask[k] > 0.0;
        }
        if (any) {
          rigid_sum += eval::masked_epe(pred, gt.flow, mask);
          ++rigid_images;
        }
      }
    }
  }
  EvalReport r;
  r.samples = n;
  if (!depth.empty()) r.depth = eval::mean(depth);
  if (!flow.empty()) {
    r.flow = eval::mean(flow);
  } else {
    r.flow.epe = r.flow.epe_noc = r.flow.f1 = nan();
  }
  r.rigid_epe = rigid_images > 0 ? rigid_sum / static_cast<double>(rigid_images) : nan();
  return r;
}

Checkpoint train_stage(int stage, const TrainConfig& config,
                       const std::optional<Checkpoint>& resume, std::ostream* log) {
  config.validate();
  auto train = make_training_set(config);
  std::unique_ptr<Trainer> trainer;
  if (resume) {
    trainer = std::make_unique<Trainer>(*resume, train, config);
  } else {
    require(stage == 1, "stage " + std::to_string(stage) + " requires the stage " +
                            std::to_string(stage - 1) + " checkpoint (" +
                            config.stage_checkpoint(stage - 1).string() + ")");
    trainer = std::make_unique<Trainer>(config, train);
  }
  const Progress& p = trainer->progress();
  if (p.stage != stage || p.stage_complete) trainer->begin_stage(stage);

  const fs::path log_file = fs::path(config.output_dir) / "train_log.jsonl";
  const std::int64_t length = trainer->stage_length(stage);
  while (trainer->progress().stage_step < length) {
    const StepRecord r = trainer->step();
    nlohmann::json line = to_json(r);
    line["global_step"] = trainer->progress().global_step;
    eval::append_jsonl(log_file, line);
    if (log && (r.step % config.log_every == 0 || r.step == length))
      *log << "stage " << stage << " step " << r.step << "/" << length << " loss "
           << std::setprecision(6) << r.loss << std::endl;
    if (config.checkpoint_every > 0 && r.step % config.checkpoint_every == 0 && r.step < length)
      trainer->save(config.stage_checkpoint(stage));
  }
  trainer->finish_stage();
  Checkpoint ck = trainer->checkpoint();
  ck.save(config.stage_checkpoint(stage));
  return ck;
}

TrainConfig ablation_config(const std::string& model_id, const TrainConfig& base) {
  TrainConfig c = base;
  c.set("model", model_id);
  c.output_dir = (fs::path(base.output_dir) /
                  ("ablation_" + model_id + "_seed" + std::to_string(base.seed)))
                     .string();
  return c;
}

nlohmann::json run_ablation(const std::string& model_id, const TrainConfig& base,
                            std::ostream* log) {
  const TrainConfig config = ablation_config(model_id, base);
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(config, make_training_set(config));
  for (int stage = 1; stage <= kStages; ++stage) {
    trainer.begin_stage(stage);
    const std::int64_t length = trainer.stage_length(stage);
    while (trainer.progress().stage_step < length) {
      const StepRecord r = trainer.step();
      if (log && (r.step % config.log_every == 0 || r.step == length))
        *log << "model " << model_id << " seed " << config.seed << " stage " << stage
             << " step " << r.step << "/" << length << " loss " << std::setprecision(6)
             << r.loss << std::endl;
    }
    trainer.finish_stage();
  }
  trainer.save(config.stage_checkpoint(kStages));
  const EvalReport report = evaluate(trainer.net(), *make_validation_set(config),
                                     static_cast<std::size_t>(config.eval_samples));
  nlohmann::json record = {
      {"model", model_id},
      {"seed", config.seed},
      {"config_hash", config.hash()},
      {"parameters", eval::count_parameters(trainer.net())},
      {"steps", trainer.progress().global_step},
      {"seconds",
       std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
      {"eval", to_json(report)}};
  eval::append_jsonl(config.results_ledger, record);
  return record;
}

std::optional<nlohmann::json> find_ablation_record(const fs::path& ledger,
                                                   const std::string& model_id,
                                                   std::uint64_t seed,
                                                   const std::string& config_hash) {
  std::optional<nlohmann::json> found;
  for (const nlohmann::json& r : eval::read_jsonl(ledger))
    if (r.value("model", "") == model_id && r.value("seed", std::uint64_t{0}) == seed &&
        r.value("config_hash", "") == config_hash)
      found = r;
  return found;
}

}  // namespace dfnet::trainer
