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

// Staged training of the joint network: configuration, Adam, the EMA teacher
// schedule, checkpoints, evaluation on held-out data and the ablation
// harness.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfnet/data.hpp"
#include "dfnet/evalmetrics.hpp"
#include "dfnet/losses.hpp"
#include "dfnet/model.hpp"

namespace dfnet::trainer {

inline constexpr int kStages = 3;

/// Every tunable of a run. Text form is one `key = value` per line; `#`
/// starts a comment. `model = <I..VI>` resets the five mechanism flags, which
/// later lines may override individually.
struct TrainConfig {
  std::string architecture = "desk";
  std::string model = "VI";
  model::ModelFlags flags = model::ModelFlags::ablation("VI");
  int correlation_radius = 4;
  int width = 256;
  int height = 128;
  int batch_size = 4;
  std::uint64_t seed = 0;

  /// Per stage: steps overrides epochs when positive.
  std::array<int, kStages> epochs{20, 20, 5};
  std::array<int, kStages> steps{0, 0, 0};
  std::array<double, kStages> learning_rate{1e-4, 1e-4, 1e-5};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double ema_decay = 0.999;
  /// Keeps encoder, depth decoder and pose net fixed during stage 2.
  bool freeze_depth_in_stage2 = false;
  losses::LossWeights loss;

  /// "synthetic" (rendered in memory), "synthetic-dir" (export_synthetic
  /// output at data_root) or "kitti" (raw data at data_root).
  std::string data = "synthetic";
  std::string data_root;
  std::string split_dir;
  int synthetic_frames = 50;
  std::uint64_t synthetic_seed = 1;
  /// Texture seed of the held-out synthetic sequence.
  std::uint64_t validation_seed = 1001;
  /// Held-out samples used by evaluation (0 = all).
  int eval_samples = 0;

  std::string output_dir = "runs/default";
  std::string results_ledger = "runs/ablation.jsonl";
  int log_every = 10;
  /// Intermediate checkpoint period in steps (0 = only at stage end).
  int checkpoint_every = 0;

  /// Sets one key from its text value; throws naming the key on error.
  void set(const std::string& key, const std::string& value);
  /// Canonical `key = value` text, readable by parse().
  std::string dump() const;
  /// Throws on inconsistent or out-of-range values.
  void validate() const;
  /// Hash of every setting except the model flags and the seed.
  std::string hash() const;
  Architecture resolved_architecture() const;
  std::filesystem::path stage_checkpoint(int stage) const;

  static TrainConfig parse(const std::string& text,
                           const std::string& origin = "config");
  static TrainConfig load(const std::filesystem::path& path);
  /// Applies DFNET_DATA_ROOT when set.
  void apply_environment();
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamSlot {
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
};

/// Adam without weight decay; state is keyed by parameter path.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Updates every parameter in `params` that holds a gradient.
  void step(const nn::NamedParameters& params, double learning_rate);
  std::map<std::string, AdamSlot>& slots() { return slots_; }
  const std::map<std::string, AdamSlot>& slots() const { return slots_; }

 private:
  double beta1_, beta2_, epsilon_;
  std::map<std::string, AdamSlot> slots_;
};

// ---------------------------------------------------------------------------
// Checkpoints

/// Single-file container: the line "DFNET-CHECKPOINT", a little-endian
/// uint64 manifest length, a JSON manifest, then float64 little-endian
/// tensor blobs at the offsets the manifest lists.
struct Checkpoint {
  static constexpr int kVersion = 1;
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// Config snapshot stored in a checkpoint.
TrainConfig checkpoint_config(const Checkpoint& checkpoint);
/// Network described by `config` with every parameter (teacher included)
/// loaded from `checkpoint`. Throws when the tensors do not match the model.
std::unique_ptr<model::MultiTaskNet> restore_network(const Checkpoint& checkpoint,
                                                     const TrainConfig& config);

// ---------------------------------------------------------------------------
// Training

struct StepRecord {
  int stage = 0;
  std::int64_t step = 0;  // within the stage, 1-based
  double loss = 0.0;
  std::vector<losses::LossComponent> components;
  double learning_rate = 0.0;
};
nlohmann::json to_json(const StepRecord& r);

/// Progress through the staged schedule.
struct Progress {
  int stage = 0;  // 0 before any stage starts
  std::int64_t stage_step = 0;
  bool stage_complete = false;
  std::int64_t global_step = 0;
};

struct EvalReport {
  eval::DepthMetrics depth;
  eval::FlowMetrics flow;
  /// End-point error over valid pixels of static scene parts (NaN when the
  /// data has no such mask).
  double rigid_epe = 0.0;
  std::size_t samples = 0;
};
nlohmann::json to_json(const EvalReport& r);

/// Builds the training set the config names.
std::shared_ptr<const data::Dataset> make_training_set(const TrainConfig& config);
/// Held-out set: the synthetic sequence at validation_seed, the KITTI
/// validation split, or the exported directory itself.
std::shared_ptr<const data::Dataset> make_validation_set(const TrainConfig& config);

class Trainer {
 public:
  Trainer(TrainConfig config, std::shared_ptr<const data::Dataset> train);
  /// Restores network, optimizer, counters and history from a checkpoint.
  Trainer(const Checkpoint& checkpoint, std::shared_ptr<const data::Dataset> train,
          std::optional<TrainConfig> config = std::nullopt);

  /// Enters `stage`. Stage n > 1 requires stage n - 1 to be complete.
  /// Entering stage 2 clones the teacher from the student.
  void begin_stage(int stage);
  /// One optimizer step of the current stage.
  StepRecord step();
  /// Runs the remaining steps of the current stage and marks it complete.
  void finish_stage();
  /// Total steps of `stage` under the config.
  std::int64_t stage_length(int stage) const;

  /// Loss of the current stage's objective on a fixed batch, without
  /// updating anything.
  losses::LossReport loss_on(std::span<const std::size_t> indices) const;

  /// Parameters the optimizer updates in `stage`.
  nn::NamedParameters optimized_parameters(int stage) const;

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;

  const model::MultiTaskNet& net() const { return *net_; }
  model::MultiTaskNet& net() { return *net_; }
  const TrainConfig& config() const { return config_; }
  const Progress& progress() const { return progress_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const Adam& optimizer() const { return adam_; }

 private:
  losses::LossReport objective(const data::Batch& batch, int stage) const;
  std::vector<std::size_t> batch_indices(std::int64_t global_step) const;

  TrainConfig config_;
  std::shared_ptr<const data::Dataset> train_;
  std::unique_ptr<model::MultiTaskNet> net_;
  Adam adam_;
  Progress progress_;
  std::vector<StepRecord> history_;
};

/// Depth (median scaled), flow and rigid-region flow metrics of the
/// network's inference outputs over `dataset`.
EvalReport evaluate(const model::MultiTaskNet& net, const data::Dataset& dataset,
                    std::size_t max_samples = 0,
                    const eval::DepthEvalOptions& depth_options = {});

/// Runs stage `stage` (resuming from `resume` when given) to completion and
/// returns the final checkpoint. Writes the checkpoint and the line-delimited
/// training log under config.output_dir.
Checkpoint train_stage(int stage, const TrainConfig& config,
                       const std::optional<Checkpoint>& resume,
                       std::ostream* log = nullptr);

/// Trains ablation model `model_id` (I..VI) through all stages, evaluates it
/// on the validation set and appends the record to config.results_ledger.
nlohmann::json run_ablation(const std::string& model_id, const TrainConfig& config,
                            std::ostream* log = nullptr);

/// Config of ablation model `model_id` derived from `base`, with its own
/// output directory.
TrainConfig ablation_config(const std::string& model_id, const TrainConfig& base);

/// Latest ledger record for (model, seed, config hash), if any.
std::optional<nlohmann::json> find_ablation_record(
    const std::filesystem::path& ledger, const std::string& model_id,
    std::uint64_t seed, const std::string& config_hash);

}  // namespace dfnet::trainer
