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

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dfnet/trainer.hpp"

namespace dfnet::trainer {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument("config key '" + key + "': '" + text +
                                "' is not a valid number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("config key '" + key + "': '" + text +
                              "' is not a boolean (true|false)");
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// One settable key: parse from text, print back.
struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number(std::string key, T TrainConfig::*member) {
  return {key,
          [key, member](TrainConfig& c, const std::string& v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

Field real(std::string key, std::function<double&(TrainConfig&)> ref) {
  return {key,
          [key, ref](TrainConfig& c, const std::string& v) {
            ref(c) = parse_number<double>(key, v);
          },
          [ref](const TrainConfig& c) {
            return format_double(ref(const_cast<TrainConfig&>(c)));
          }};
}

Field integer(std::string key, std::function<int&(TrainConfig&)> ref) {
  return {key,
          [key, ref](TrainConfig& c, const std::string& v) {
            ref(c) = parse_number<int>(key, v);
          },
          [ref](const TrainConfig& c) {
            return std::to_string(ref(const_cast<TrainConfig&>(c)));
          }};
}

Field flag(std::string key, bool model::ModelFlags::*member) {
  return {key,
          [key, member](TrainConfig& c, const std::string& v) {
            c.flags.*member = parse_bool(key, v);
          },
          [member](const TrainConfig& c) {
            return std::string(c.flags.*member ? "true" : "false");
          }};
}

Field text(std::string key, std::string TrainConfig::*member) {
  return {key, [member](TrainConfig& c, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("architecture", &TrainConfig::architecture));
    f.push_back({"model",
                 [](TrainConfig& c, const std::string& v) {
                   c.flags = model::ModelFlags::ablation(v);
                   c.model = v;
                 },
                 [](const TrainConfig& c) { return c.model; }});
    f.push_back(flag("shared_encoder", &model::ModelFlags::shared_encoder));
    f.push_back(flag("d2f", &model::ModelFlags::d2f));
    f.push_back(flag("f2d", &model::ModelFlags::f2d));
    f.push_back(flag("ema", &model::ModelFlags::ema));
    f.push_back(flag("dual_head", &model::ModelFlags::dual_head));
    f.push_back(number("correlation_radius", &TrainConfig::correlation_radius));
    f.push_back(number("width", &TrainConfig::width));
    f.push_back(number("height", &TrainConfig::height));
    f.push_back(number("batch_size", &TrainConfig::batch_size));
    f.push_back(number("seed", &TrainConfig::seed));
    for (int s = 0; s < kStages; ++s) {
      const std::string p = "stage" + std::to_string(s + 1) + "_";
      f.push_back(integer(p + "epochs", [s](TrainConfig& c) -> int& { return c.epochs[s]; }));
      f.push_back(integer(p + "steps", [s](TrainConfig& c) -> int& { return c.steps[s]; }));
      f.push_back(real(p + "lr", [s](TrainConfig& c) -> double& { return c.learning_rate[s]; }));
    }
    f.push_back(number("adam_beta1", &TrainConfig::adam_beta1));
    f.push_back(number("adam_beta2", &TrainConfig::adam_beta2));
    f.push_back(number("adam_epsilon", &TrainConfig::adam_epsilon));
    f.push_back(number("ema_decay", &TrainConfig::ema_decay));
    f.push_back({"freeze_depth_in_stage2",
                 [](TrainConfig& c, const std::string& v) {
                   c.freeze_depth_in_stage2 = parse_bool("freeze_depth_in_stage2", v);
                 },
                 [](const TrainConfig& c) {
                   return std::string(c.freeze_depth_in_stage2 ? "true" : "false");
                 }});
    f.push_back(real("loss.ssim", [](TrainConfig& c) -> double& { return c.loss.ssim; }));
    f.push_back(real("loss.depth_smoothness",
                     [](TrainConfig& c) -> double& { return c.loss.depth_smoothness; }));
    f.push_back(real("loss.flow_smoothness",
                     [](TrainConfig& c) -> double& { return c.loss.flow_smoothness; }));
    f.push_back(real("loss.flow_smoothness_decay",
                     [](TrainConfig& c) -> double& { return c.loss.flow_smoothness_decay; }));
    for (int i = 0; i < kExchangeScales; ++i)
      f.push_back(real("loss.flow_scale" + std::to_string(i + 1),
                       [i](TrainConfig& c) -> double& { return c.loss.flow_scales[i]; }));
    f.push_back(real("loss.flow_border",
                     [](TrainConfig& c) -> double& { return c.loss.flow_border; }));
    f.push_back(real("loss.flow_weight", [](TrainConfig& c) -> double& { return c.loss.flow; }));
    f.push_back(text("data", &TrainConfig::data));
    f.push_back(text("data_root", &TrainConfig::data_root));
    f.push_back(text("split_dir", &TrainConfig::split_dir));
    f.push_back(number("synthetic_frames", &TrainConfig::synthetic_frames));
    f.push_back(number("synthetic_seed", &TrainConfig::synthetic_seed));
    f.push_back(number("validation_seed", &TrainConfig::validation_seed));
    f.push_back(number("eval_samples", &TrainConfig::eval_samples));
    f.push_back(text("output_dir", &TrainConfig::output_dir));
    f.push_back(text("results_ledger", &TrainConfig::results_ledger));
    f.push_back(number("log_every", &TrainConfig::log_every));
    f.push_back(number("checkpoint_every", &TrainConfig::checkpoint_every));
    return f;
  }();
  return table;
}

bool excluded_from_hash(const std::string& key) {
  static const std::vector<std::string> keys{
      "model", "shared_encoder", "d2f", "f2d", "ema", "dual_head", "seed",
      "output_dir", "results_ledger", "log_every", "checkpoint_every"};
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields())
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string TrainConfig::dump() const {
  std::ostringstream out;
  for (const Field& f : fields()) out << f.key << " = " << f.get(*this) << "\n";
  return out.str();
}

std::string TrainConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Field& f : fields()) {
    if (excluded_from_hash(f.key)) continue;
    for (char ch : f.key + "=" + f.get(*this) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void TrainConfig::validate() const {
  resolved_architecture();
  flags.validate();
  for (int s = 0; s < kStages; ++s) {
    require(learning_rate[s] > 0.0, "config: stage" + std::to_string(s + 1) +
                                        "_lr must be > 0");
    require(epochs[s] >= 0 && steps[s] >= 0,
            "config: stage epochs and steps must be >= 0");
  }
  require(ema_decay >= 0.0 && ema_decay < 1.0, "config: ema_decay must be in [0, 1)");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
              adam_beta2 < 1.0,
          "config: Adam betas must be in [0, 1)");
  require(adam_epsilon > 0.0, "config: adam_epsilon must be > 0");
  require(width > 0 && height > 0 && width % kInputMultiple == 0 &&
              height % kInputMultiple == 0,
          "config: width and height must be positive multiples of " +
              std::to_string(kInputMultiple));
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(correlation_radius >= 1, "config: correlation_radius must be >= 1");
  require(synthetic_frames >= 3, "config: synthetic_frames must be >= 3");
  require(eval_samples >= 0 && log_every >= 1 && checkpoint_every >= 0,
          "config: eval_samples, checkpoint_every must be >= 0 and log_every >= 1");
  require(data == "synthetic" || data == "synthetic-dir" || data == "kitti",
          "config: data must be synthetic, synthetic-dir or kitti");
  require(data == "synthetic" || !data_root.empty(),
          "config: data = " + data + " needs data_root");
}

Architecture TrainConfig::resolved_architecture() const {
  Architecture a = Architecture::by_name(architecture);
  a.correlation_radius = correlation_radius;
  return a;
}

std::filesystem::path TrainConfig::stage_checkpoint(int stage) const {
  return std::filesystem::path(output_dir) / ("stage" + std::to_string(stage) + ".ckpt");
}

TrainConfig TrainConfig::parse(const std::string& text, const std::string& origin) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos)
      throw std::invalid_argument(where + "expected 'key = value', got '" + line + "'");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void TrainConfig::apply_environment() {
  if (const char* root = std::getenv("DFNET_DATA_ROOT"); root && *root)
    data_root = root;
}

}  // namespace dfnet::trainer
