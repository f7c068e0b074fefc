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
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "dfnet/data.hpp"
#include "image_io.hpp"

namespace dfnet::data {
namespace {

namespace fs = std::filesystem;

// "key: v0 v1 ..." lines; non-numeric values are skipped.
std::map<std::string, std::vector<double>> read_calib(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open calibration file " + path.string());
  std::map<std::string, std::vector<double>> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::istringstream values(line.substr(colon + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (values.fail() && !values.eof()) continue;
    out[line.substr(0, colon)] = std::move(v);
  }
  return out;
}

const std::vector<double>& calib_entry(
    const std::map<std::string, std::vector<double>>& calib,
    const std::string& key, std::size_t size, const fs::path& path) {
  const auto it = calib.find(key);
  require(it != calib.end() && it->second.size() == size,
          path.string() + ": missing or malformed " + key);
  return it->second;
}

char camera_digit(char side) {
  require(side == 'l' || side == 'r', std::string("unknown camera side '") +
                                          side + "'");
  return side == 'l' ? '2' : '3';
}

std::string date_of(const std::string& folder) {
  return folder.substr(0, folder.find('/'));
}

std::string padded(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, value);
  return buf;
}

}  // namespace

std::vector<SplitEntry> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open split file " + path.string());
  std::vector<SplitEntry> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    SplitEntry e;
    std::string side;
    require(static_cast<bool>(fields >> e.folder >> e.frame),
            path.string() + ":" + std::to_string(number) +
                ": expected '<folder> <frame> [l|r]'");
    if (fields >> side) e.side = side.empty() ? 'l' : side[0];
    camera_digit(e.side);
    out.push_back(std::move(e));
  }
  return out;
}

CameraIntrinsics read_kitti_intrinsics(const fs::path& calib, char side) {
  const auto c = read_calib(calib);
  const std::string cam = std::string("0") + camera_digit(side);
  const auto& p = calib_entry(c, "P_rect_" + cam, 12, calib);
  const auto& s = calib_entry(c, "S_rect_" + cam, 2, calib);
  CameraIntrinsics k{p[0], p[5], p[2], p[6], static_cast<int>(s[0]),
                     static_cast<int>(s[1])};
  k.validate();
  return k;
}

Tensor velodyne_depth(const fs::path& velodyne_bin, const fs::path& calib_dir,
                      char side) {
  const fs::path cam_path = calib_dir / "calib_cam_to_cam.txt";
  const fs::path velo_path = calib_dir / "calib_velo_to_cam.txt";
  const auto cam = read_calib(cam_path);
  const auto velo = read_calib(velo_path);
  const std::string id = std::string("0") + camera_digit(side);
  const auto& p = calib_entry(cam, "P_rect_" + id, 12, cam_path);
  const auto& s = calib_entry(cam, "S_rect_" + id, 2, cam_path);
  const auto& rr = calib_entry(cam, "R_rect_00", 9, cam_path);
  const auto& r = calib_entry(velo, "R", 9, velo_path);
  const auto& t = calib_entry(velo, "T", 3, velo_path);

  Eigen::Matrix<double, 3, 4> proj;
  Eigen::Matrix4d rect = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d velo_to_cam = Eigen::Matrix4d::Identity();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) proj(i, j) = p[i * 4 + j];
    for (int j = 0; j < 3; ++j) {
      rect(i, j) = rr[i * 3 + j];
      velo_to_cam(i, j) = r[i * 3 + j];
    }
    velo_to_cam(i, 3) = t[i];
  }
  const Eigen::Matrix<double, 3, 4> to_image = proj * rect * velo_to_cam;

  std::ifstream in(velodyne_bin, std::ios::binary);
  require(in.good(), "cannot open velodyne scan " + velodyne_bin.string());
  const int w = static_cast<int>(s[0]);
  const int h = static_cast<int>(s[1]);
  Tensor depth({1, 1, h, w});
  float pt[4];
  while (in.read(reinterpret_cast<char*>(pt), sizeof pt)) {
    if (pt[0] < 0.0f) continue;
    const Eigen::Vector3d q =
        to_image * Eigen::Vector4d(pt[0], pt[1], pt[2], 1.0);
    if (q.z() <= 0.0) continue;
    const int u = static_cast<int>(std::round(q.x() / q.z())) - 1;
    const int v = static_cast<int>(std::round(q.y() / q.z())) - 1;
    if (u < 0 || v < 0 || u >= w || v >= h) continue;
    double& d = depth.at(0, 0, v, u);
    const double z = pt[0];
    if (d == 0.0 || z < d) d = z;
  }
  return depth;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name +
                              "' (expected train, val or test)");
}

KittiEigenDataset::KittiEigenDataset(fs::path root, Split split,
                                     KittiOptions options)
    : root_(std::move(root)), split_(split), options_(std::move(options)) {
  static constexpr const char* kFiles[] = {"train_files.txt", "val_files.txt",
                                           "test_files.txt"};
  const fs::path list = options_.split_dir / kFiles[static_cast<int>(split)];
  for (SplitEntry& e : read_split_file(list)) {
    std::vector<fs::path> needed{image_path(e, e.frame),
                                 root_ / date_of(e.folder) / "calib_cam_to_cam.txt"};
    if (split_ == Split::kTest) {
      needed.push_back(root_ / e.folder / "velodyne_points" / "data" /
                       (padded(e.frame, 10) + ".bin"));
      needed.push_back(root_ / date_of(e.folder) / "calib_velo_to_cam.txt");
    } else {
      needed.push_back(image_path(e, e.frame - 1));
      needed.push_back(image_path(e, e.frame + 1));
    }
    const auto missing = std::find_if(needed.begin(), needed.end(),
                                      [](const fs::path& p) { return !fs::exists(p); });
    if (missing != needed.end()) {
      std::cerr << "warning: skipping " << e.folder << " " << e.frame
                << ": missing " << missing->string() << "\n";
      ++skipped_;
      continue;
    }
    entries_.push_back(std::move(e));
  }
  require(!entries_.empty(), "KITTI split " + list.string() +
                                 " has no usable samples under " +
                                 root_.string());
}

fs::path KittiEigenDataset::image_path(const SplitEntry& e, int frame) const {
  return root_ / e.folder /
         (std::string("image_0") + camera_digit(e.side)) / "data" /
         (padded(frame, 10) + options_.image_extension);
}

SequenceSample KittiEigenDataset::sample(std::size_t index) const {
  require(index < entries_.size(), "KITTI dataset: index out of range");
  const SplitEntry& e = entries_[index];
  const int w = options_.width;
  const int h = options_.height;
  SequenceSample s;
  s.frames[1] = read_rgb(image_path(e, e.frame), w, h);
  for (int k : {0, 2}) {
    const fs::path p = image_path(e, e.frame + k - 1);
    s.frames[k] = fs::exists(p) ? read_rgb(p, w, h) : s.frames[1];
  }
  const fs::path calib_dir = root_ / date_of(e.folder);
  s.intrinsics = read_kitti_intrinsics(calib_dir / "calib_cam_to_cam.txt", e.side)
                     .resized(w, h);
  if (split_ == Split::kTest)
    s.gt_depth = velodyne_depth(root_ / e.folder / "velodyne_points" / "data" /
                                    (padded(e.frame, 10) + ".bin"),
                                calib_dir, e.side);
  s.id = e.folder + " " + std::to_string(e.frame) + " " + e.side;
  s.validate();
  return s;
}

KittiFlowDataset::KittiFlowDataset(fs::path root) : root_(std::move(root)) {
  const fs::path occ = root_ / "training" / "flow_occ";
  require(fs::is_directory(occ), "KITTI flow: missing directory " + occ.string());
  for (const auto& entry : fs::directory_iterator(occ)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 7 && name.ends_with("_10.png"))
      ids_.push_back(name.substr(0, name.size() - 7));
  }
  std::sort(ids_.begin(), ids_.end());
  require(!ids_.empty(), "KITTI flow: no *_10.png files in " + occ.string());
}

FlowPair KittiFlowDataset::pair(std::size_t index) const {
  require(index < ids_.size(), "KITTI flow: index out of range");
  const std::string& id = ids_[index];
  const fs::path train = root_ / "training";
  FlowPair p;
  p.frame_t = read_rgb(train / "image_2" / (id + "_10.png"));
  p.frame_s = read_rgb(train / "image_2" / (id + "_11.png"));
  const FlowImage occ = read_flow_png(train / "flow_occ" / (id + "_10.png"));
  const fs::path noc_path = train / "flow_noc" / (id + "_10.png");
  const Tensor noc = fs::exists(noc_path) ? read_flow_png(noc_path).valid : occ.valid;
  require(occ.flow.h() == p.frame_t.h() && occ.flow.w() == p.frame_t.w() &&
              noc.shape() == occ.valid.shape(),
          "KITTI flow: size mismatch for " + id);
  p.gt = {occ.flow, occ.valid, noc, Tensor()};
  p.id = id;
  return p;
}

}  // namespace dfnet::data
