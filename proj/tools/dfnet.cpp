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

// Command-line front end: data generation, staged training, evaluation,
// inference, ablation runs, parameter counts and plots.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "dfnet/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dfnet;
using trainer::Checkpoint;
using trainer::TrainConfig;

/// Options shared by every subcommand that reads a run configuration.
struct ConfigOptions {
  std::string path;
  std::vector<std::string> overrides;
  bool print = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "Run configuration (key = value lines)");
    cmd->add_option("--set", overrides, "Override one key: --set key=value")
        ->type_name("KEY=VALUE");
    cmd->add_flag("--print-config", print, "Print the resolved configuration and exit");
  }

  /// File (or `base` when no file is given), then --set, then environment.
  TrainConfig resolve(const std::optional<TrainConfig>& base = std::nullopt) const {
    TrainConfig c = !path.empty() ? TrainConfig::load(path) : base.value_or(TrainConfig{});
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects KEY=VALUE, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.apply_environment();
    c.validate();
    return c;
  }
};

Checkpoint load_checkpoint(const std::string& path, const char* command) {
  if (path.empty())
    throw std::invalid_argument(std::string(command) +
                                " needs a checkpoint: pass --checkpoint PATH");
  if (!fs::exists(path))
    throw std::invalid_argument("checkpoint not found: " + path);
  return Checkpoint::load(path);
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

int synth_data(const fs::path& out, std::uint64_t seed, int frames, int width, int height) {
  data::SyntheticSceneSpec spec = data::SyntheticSceneSpec::standard(seed, frames);
  if (width != spec.width || height != spec.height) {
    TrainConfig c;
    c.width = width;
    c.height = height;
    c.synthetic_frames = frames;
    c.synthetic_seed = seed;
    c.validate();
    const auto set = trainer::make_training_set(c);
    const auto& seq = dynamic_cast<const data::SyntheticDataset&>(*set).sequence();
    data::export_synthetic(seq, out);
  } else {
    data::export_synthetic(data::generate_synthetic(spec), out);
  }
  std::cout << "wrote " << frames << " frames to " << out.string() << "\n";
  return 0;
}

int train(const ConfigOptions& opts, const std::string& stage_arg, const std::string& resume) {
  std::optional<Checkpoint> ck;
  if (!resume.empty()) ck = load_checkpoint(resume, "train --resume");
  const TrainConfig config =
      opts.resolve(ck && opts.path.empty() ? std::optional(trainer::checkpoint_config(*ck))
                                           : std::nullopt);
  if (opts.print) {
    std::cout << config.dump();
    return 0;
  }
  std::vector<int> stages;
  if (stage_arg == "all") {
    stages = {1, 2, 3};
  } else {
    stages = {std::stoi(stage_arg)};
  }
  for (int stage : stages) {
    if (!ck && stage > 1) {
      const fs::path previous = config.stage_checkpoint(stage - 1);
      if (!fs::exists(previous))
        throw std::invalid_argument("stage " + std::to_string(stage) +
                                    " needs the stage " + std::to_string(stage - 1) +
                                    " checkpoint " + previous.string() +
                                    " (or pass --resume PATH)");
      ck = Checkpoint::load(previous);
    }
    ck = trainer::train_stage(stage, config, ck, &std::cout);
    std::cout << "stage " << stage << " checkpoint: "
              << config.stage_checkpoint(stage).string() << "\n";
  }
  return 0;
}

int eval_depth(const ConfigOptions& opts, const std::string& checkpoint,
               const std::string& split, int max_samples, const std::string& output) {
  const Checkpoint ck = load_checkpoint(checkpoint, "eval-depth");
  const TrainConfig config = opts.resolve(trainer::checkpoint_config(ck));
  const auto net = trainer::restore_network(ck, config);
  std::shared_ptr<const data::Dataset> set;
  eval::DepthEvalOptions options;
  if (config.data == "kitti") {
    data::KittiOptions ko;
    ko.split_dir = config.split_dir.empty() ? fs::path(config.data_root) / "splits"
                                            : fs::path(config.split_dir);
    ko.width = config.width;
    ko.height = config.height;
    set = std::make_shared<data::KittiEigenDataset>(config.data_root,
                                                    data::parse_split(split), ko);
    options.garg_crop = true;
  } else {
    set = trainer::make_validation_set(config);
  }
  const trainer::EvalReport r =
      trainer::evaluate(*net, *set, static_cast<std::size_t>(max_samples), options);
  if (r.depth.pixels == 0)
    throw std::invalid_argument("evaluation set has no depth ground truth");
  std::cout << eval::depth_table({{config.model, r.depth}});
  if (!output.empty())
    eval::append_jsonl(output, {{"checkpoint", checkpoint},
                                {"samples", r.samples},
                                {"depth", eval::to_json(r.depth)}});
  return 0;
}

int eval_flow(const ConfigOptions& opts, const std::string& checkpoint,
              const std::string& kitti_flow, int max_samples, const std::string& output) {
  const Checkpoint ck = load_checkpoint(checkpoint, "eval-flow");
  const TrainConfig config = opts.resolve(trainer::checkpoint_config(ck));
  const auto net = trainer::restore_network(ck, config);
  eval::FlowMetrics flow;
  double rigid = std::nan("");
  std::size_t samples = 0;
  if (!kitti_flow.empty()) {
    const data::KittiFlowDataset set(kitti_flow);
    std::vector<eval::FlowMetrics> per_image;
    const std::size_t n = max_samples > 0 ? std::min<std::size_t>(max_samples, set.size())
                                          : set.size();
    for (std::size_t i = 0; i < n; ++i) {
      const data::FlowPair p = set.pair(i);
      const Tensor t = eval::resize_map(p.frame_t, config.height, config.width);
      const Tensor s = eval::resize_map(p.frame_s, config.height, config.width);
      const Tensor pred = eval::resize_flow(net->predict(t, s).flow, p.gt.flow.h(),
                                            p.gt.flow.w());
      per_image.push_back(eval::flow_metrics(pred, p.gt.flow, p.gt.valid, p.gt.noc));
    }
    require(!per_image.empty(), "no KITTI flow pairs under " + kitti_flow);
    flow = eval::mean(per_image);
    samples = n;
  } else {
    const trainer::EvalReport r = trainer::evaluate(
        *net, *trainer::make_validation_set(config), static_cast<std::size_t>(max_samples));
    if (r.flow.pixels == 0)
      throw std::invalid_argument("evaluation set has no flow ground truth");
    flow = r.flow;
    rigid = r.rigid_epe;
    samples = r.samples;
  }
  std::cout << eval::flow_table({{config.model, flow}});
  if (!std::isnan(rigid)) std::cout << "rigid-region epe: " << fixed(rigid) << "\n";
  if (!output.empty())
    eval::append_jsonl(output, {{"checkpoint", checkpoint},
                                {"samples", samples},
                                {"flow", eval::to_json(flow)}});
  return 0;
}

int infer(const ConfigOptions& opts, const std::string& checkpoint, const std::string& frame_t,
          const std::string& frame_s, const fs::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint, "infer");
  const TrainConfig config = opts.resolve(trainer::checkpoint_config(ck));
  const auto net = trainer::restore_network(ck, config);
  const Tensor original = data::read_rgb(frame_t);
  const Tensor t = data::read_rgb(frame_t, config.width, config.height);
  const Tensor s = data::read_rgb(frame_s, config.width, config.height);
  const model::Prediction p = net->predict(t, s);
  const Tensor flow = eval::resize_flow(p.flow, original.h(), original.w());
  fs::create_directories(out);
  data::write_rgb(out / "depth.png",
                  eval::depth_to_color(eval::resize_map(p.depth, original.h(), original.w())));
  data::write_flow_png(out / "flow.png", flow, Tensor({1, 1, original.h(), original.w()}, 1.0));
  data::write_rgb(out / "flow_color.png", eval::flow_to_color(flow));
  std::cout << "wrote depth.png, flow.png and flow_color.png to " << out.string() << "\n";
  return 0;
}

int ablate(const ConfigOptions& opts, const std::vector<std::string>& models,
           const std::vector<std::uint64_t>& seeds, bool force) {
  TrainConfig base = opts.resolve();
  if (opts.print) {
    std::cout << base.dump();
    return 0;
  }
  std::vector<std::string> ids = models;
  if (ids.size() == 1 && ids[0] == "all") ids = {"I", "II", "III", "IV", "V", "VI"};
  for (const std::string& id : ids) model::ModelFlags::ablation(id);
  std::vector<std::pair<std::string, eval::FlowMetrics>> flow_rows;
  std::vector<std::pair<std::string, eval::DepthMetrics>> depth_rows;
  for (const std::string& id : ids)
    for (std::uint64_t seed : seeds) {
      base.seed = seed;
      const std::string hash = trainer::ablation_config(id, base).hash();
      std::optional<nlohmann::json> record;
      if (!force) record = trainer::find_ablation_record(base.results_ledger, id, seed, hash);
      if (record) {
        std::cout << "model " << id << " seed " << seed << ": reusing ledger record\n";
      } else {
        record = trainer::run_ablation(id, base, &std::cout);
      }
      const nlohmann::json& e = (*record)["eval"];
      eval::FlowMetrics f;
      f.epe = e["flow"]["epe"];
      f.epe_noc = e["flow"]["epe_noc"].is_null() ? std::nan("") : e["flow"]["epe_noc"].get<double>();
      f.f1 = e["flow"]["f1"];
      eval::DepthMetrics d;
      d.abs_rel = e["depth"]["abs_rel"];
      d.sq_rel = e["depth"]["sq_rel"];
      d.rms = e["depth"]["rms"];
      d.log_rms = e["depth"]["log_rms"];
      d.delta1 = e["depth"]["delta1"];
      d.delta2 = e["depth"]["delta2"];
      d.delta3 = e["depth"]["delta3"];
      const std::string label = id + "/seed" + std::to_string(seed);
      flow_rows.emplace_back(label, f);
      depth_rows.emplace_back(label, d);
    }
  std::cout << "\n" << eval::depth_table(depth_rows) << "\n" << eval::flow_table(flow_rows);
  return 0;
}

int param_count(const std::string& architecture, const std::string& model) {
  std::vector<std::string> ids{model};
  if (model == "all") ids = {"I", "II", "III", "IV", "V", "VI"};
  const Architecture arch = Architecture::by_name(architecture);
  std::vector<std::vector<std::string>> rows;
  for (const std::string& id : ids) {
    const std::int64_t n = eval::count_parameters(arch, model::ModelFlags::ablation(id));
    rows.push_back({id, std::to_string(n), fixed(n / 1e6, 2) + "M"});
  }
  std::cout << eval::format_table({"model", "parameters", ""}, rows);
  return 0;
}

int plot(const ConfigOptions& opts, const std::string& log, const std::string& checkpoint,
         int sample, const fs::path& out, bool log_y) {
  if (!log.empty()) {
    const auto records = eval::read_jsonl(log);
    require(!records.empty(), "no training records in " + log);
    std::map<int, eval::Series> by_stage;
    for (const auto& r : records) {
      const int stage = r.at("stage");
      eval::Series& s = by_stage[stage];
      s.name = "stage " + std::to_string(stage);
      s.x.push_back(r.value("global_step", r.at("step").get<double>()));
      s.y.push_back(r.at("loss"));
    }
    std::vector<eval::Series> series;
    for (auto& [stage, s] : by_stage) series.push_back(std::move(s));
    const fs::path file = out.extension() == ".png" ? out : out / "training_loss.png";
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    data::write_rgb(file, eval::plot_series(series, "training loss", 800, 480, log_y));
    std::cout << "wrote " << file.string() << "\n";
    return 0;
  }
  const Checkpoint ck = load_checkpoint(checkpoint, "plot");
  const TrainConfig config = opts.resolve(trainer::checkpoint_config(ck));
  const auto net = trainer::restore_network(ck, config);
  const auto set = trainer::make_validation_set(config);
  require(sample >= 0 && static_cast<std::size_t>(sample) < set->size(),
          "--sample out of range (validation set has " + std::to_string(set->size()) + ")");
  const data::SequenceSample s = set->sample(sample);
  const model::Prediction p = net->predict(s.target(), s.next());
  fs::create_directories(out);
  data::write_rgb(out / "frame.png", s.target());
  data::write_rgb(out / "depth.png", eval::depth_to_color(p.depth));
  data::write_rgb(out / "flow_color.png", eval::flow_to_color(p.flow));
  if (s.gt_depth) {
    const Tensor gt = *s.gt_depth;
    const Tensor pred = eval::resize_map(p.depth, gt.h(), gt.w());
    Tensor scaled = pred;
    std::vector<double> ratios;
    for (std::size_t i = 0; i < gt.numel(); ++i)
      if (gt[i] > 0.0) ratios.push_back(gt[i] / pred[i]);
    if (!ratios.empty()) {
      std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
      for (std::size_t i = 0; i < scaled.numel(); ++i) scaled[i] *= ratios[ratios.size() / 2];
    }
    data::write_rgb(out / "depth_error.png", eval::depth_error_map(scaled, gt));
  }
  if (s.gt_flow) {
    const Tensor pred = eval::resize_flow(p.flow, s.gt_flow->flow.h(), s.gt_flow->flow.w());
    data::write_rgb(out / "flow_error.png",
                    eval::flow_error_map(pred, s.gt_flow->flow, s.gt_flow->valid));
    data::write_rgb(out / "flow_gt_color.png", eval::flow_to_color(s.gt_flow->flow));
  }
  std::cout << "wrote figures to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint self-supervised depth and optical flow training and evaluation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "Render and export a synthetic sequence");
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  int synth_frames = 50, synth_width = 256, synth_height = 128;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Texture seed");
  synth->add_option("--frames", synth_frames, "Sequence length")->check(CLI::Range(3, 100000));
  synth->add_option("--width", synth_width, "Frame width");
  synth->add_option("--height", synth_height, "Frame height");

  auto* train_cmd = app.add_subcommand("train", "Run training stages");
  ConfigOptions train_opts;
  train_opts.attach(train_cmd);
  std::string stage = "all", resume;
  train_cmd->add_option("--stage", stage, "Stage to run")
      ->check(CLI::IsMember({"1", "2", "3", "all"}));
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");

  auto* depth_cmd = app.add_subcommand("eval-depth", "Depth metrics of a checkpoint");
  ConfigOptions depth_opts;
  depth_opts.attach(depth_cmd);
  std::string depth_ckpt, depth_split = "test", depth_out;
  int depth_max = 0;
  depth_cmd->add_option("--checkpoint", depth_ckpt, "Checkpoint to evaluate");
  depth_cmd->add_option("--split", depth_split, "KITTI split (train|val|test)");
  depth_cmd->add_option("--max-samples", depth_max, "Evaluate at most this many samples");
  depth_cmd->add_option("--output", depth_out, "Append the metrics to this JSONL file");

  auto* flow_cmd = app.add_subcommand("eval-flow", "Flow metrics of a checkpoint");
  ConfigOptions flow_opts;
  flow_opts.attach(flow_cmd);
  std::string flow_ckpt, kitti_flow, flow_out;
  int flow_max = 0;
  flow_cmd->add_option("--checkpoint", flow_ckpt, "Checkpoint to evaluate");
  flow_cmd->add_option("--kitti-flow", kitti_flow, "KITTI 2015 root (default: validation set)");
  flow_cmd->add_option("--max-samples", flow_max, "Evaluate at most this many samples");
  flow_cmd->add_option("--output", flow_out, "Append the metrics to this JSONL file");

  auto* infer_cmd = app.add_subcommand("infer", "Depth and flow for one frame pair");
  ConfigOptions infer_opts;
  infer_opts.attach(infer_cmd);
  std::string infer_ckpt, frame_t, frame_s, infer_out = ".";
  infer_cmd->add_option("--checkpoint", infer_ckpt, "Trained checkpoint");
  infer_cmd->add_option("--frame-t", frame_t, "Target frame")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--frame-s", frame_s, "Source frame")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer_out, "Output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate ablation models");
  ConfigOptions ablate_opts;
  ablate_opts.attach(ablate_cmd);
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds{0};
  bool force = false;
  ablate_cmd->add_option("--model", models, "I..VI or all")->required()->check(
      CLI::IsMember({"I", "II", "III", "IV", "V", "VI", "all"}));
  ablate_cmd->add_option("--seeds", seeds, "Seeds to run")->delimiter(',');
  ablate_cmd->add_flag("--force", force, "Rerun even when the ledger has a matching record");

  auto* count_cmd = app.add_subcommand("param-count", "Trainable parameters per model");
  std::string count_arch = "full", count_model = "all";
  count_cmd->add_option("--architecture", count_arch, "full|desk")
      ->check(CLI::IsMember({"full", "desk"}));
  count_cmd->add_option("--model", count_model, "I..VI or all")
      ->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI", "all"}));

  auto* plot_cmd = app.add_subcommand("plot", "Training curves or error maps");
  ConfigOptions plot_opts;
  plot_opts.attach(plot_cmd);
  std::string plot_log, plot_ckpt, plot_out = "figures";
  int plot_sample = 0;
  bool log_y = false;
  plot_cmd->add_option("--log", plot_log, "Training log (train_log.jsonl)");
  plot_cmd->add_option("--checkpoint", plot_ckpt, "Checkpoint for error maps");
  plot_cmd->add_option("--sample", plot_sample, "Validation sample for error maps");
  plot_cmd->add_option("--out", plot_out, "Output PNG or directory");
  plot_cmd->add_flag("--log-y", log_y, "Logarithmic loss axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return synth_data(synth_out, synth_seed, synth_frames, synth_width, synth_height);
    if (*train_cmd) return train(train_opts, stage, resume);
    if (*depth_cmd) {
      if (depth_opts.print) return std::cout << depth_opts.resolve().dump(), 0;
      return eval_depth(depth_opts, depth_ckpt, depth_split, depth_max, depth_out);
    }
    if (*flow_cmd) {
      if (flow_opts.print) return std::cout << flow_opts.resolve().dump(), 0;
      return eval_flow(flow_opts, flow_ckpt, kitti_flow, flow_max, flow_out);
    }
    if (*infer_cmd) return infer(infer_opts, infer_ckpt, frame_t, frame_s, infer_out);
    if (*ablate_cmd) return ablate(ablate_opts, models, seeds, force);
    if (*count_cmd) return param_count(count_arch, count_model);
    if (*plot_cmd) {
      if (plot_log.empty() && plot_ckpt.empty())
        throw std::invalid_argument("plot needs --log PATH or --checkpoint PATH");
      return plot(plot_opts, plot_log, plot_ckpt, plot_sample, plot_out, log_y);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "Run with --help for usage.\n";
    return 1;
  }
  return 1;
}
