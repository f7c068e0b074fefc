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

#include <bit>
#include <cmath>
#include <fstream>

#include "dfnet/trainer.hpp"

namespace dfnet::trainer {

Adam::Adam(double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(const nn::NamedParameters& params, double learning_rate) {
  for (const auto& [name, param] : params) {
    if (!param.has_grad()) continue;
    Var p = param;
    AdamSlot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m = Tensor(p.shape());
      slot.v = Tensor(p.shape());
    }
    require(slot.m.shape() == p.shape(),
            "Adam: state shape of '" + name + "' does not match the parameter");
    ++slot.step;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.step));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.step));
    std::span<double> w = p.mutable_value().values();
    std::span<const double> g = p.grad().values();
    std::span<double> m = slot.m.values();
    std::span<double> v = slot.v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "DFNET-CHECKPOINT\n";

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_u64(const char* bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json m = manifest;
  m["format"] = "dfnet-checkpoint";
  m["version"] = kVersion;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const Shape& s = t.shape();
    index.push_back({{"name", name},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"dtype", "float64"},
                     {"offset", offset}});
    offset += 8 * t.numel();
  }
  m["tensors"] = index;
  const std::string text = m.dump(1);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot write checkpoint " + tmp.string());
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<char> blob;
    for (const auto& [name, t] : tensors) {
      blob.resize(8 * t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(t[i]);
        for (int b = 0; b < 8; ++b)
          blob[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      }
      out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    require(out.good(), "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("checkpoint not found: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) {
    return std::invalid_argument("malformed checkpoint " + path.string() + ": " + why);
  };
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw bad("missing header");
  std::size_t pos = kMagic.size();
  if (bytes.size() < pos + 8) throw bad("truncated");
  const std::uint64_t length = get_u64(bytes.data() + pos);
  pos += 8;
  if (bytes.size() - pos < length) throw bad("truncated manifest");
  Checkpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(bytes.substr(pos, length));
  } catch (const nlohmann::json::exception& e) {
    throw bad(e.what());
  }
  pos += length;
  if (ck.manifest.value("version", 0) != kVersion)
    throw bad("unsupported version " + ck.manifest.value("version", nlohmann::json(0)).dump());
  const std::size_t blob = pos;
  for (const auto& entry : ck.manifest.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw bad("tensor shape must have 4 dimensions");
    Tensor t(Shape{shape[0], shape[1], shape[2], shape[3]});
    const std::size_t at = blob + entry.at("offset").get<std::uint64_t>();
    if (at + 8 * t.numel() > bytes.size())
      throw bad("tensor '" + entry.at("name").get<std::string>() + "' is truncated");
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = std::bit_cast<double>(get_u64(bytes.data() + at + 8 * i));
    ck.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  ck.manifest.erase("tensors");
  return ck;
}

}  // namespace dfnet::trainer
