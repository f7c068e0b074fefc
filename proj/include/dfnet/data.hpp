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

// Training and evaluation data: a synthetic sequence renderer with exact
// ground truth, its on-disk export format, and KITTI raw / KITTI 2015
// readers.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dfnet/camera.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet::data {

using backbone::CameraIntrinsics;
using backbone::Motion;

/// Flow from frame t to frame t+1 with its masks, all at the same size.
struct FlowGroundTruth {
  Tensor flow;   // [1, 2, H, W] pixels
  Tensor valid;  // [1, 1, H, W] 1 where a measurement exists
  Tensor noc;    // [1, 1, H, W] valid and visible in both frames
  Tensor rigid;  // [1, 1, H, W] static-scene pixels; empty when unknown
};

/// One training/evaluation unit: frames (t-1, t, t+1), each [1, 3, H, W] with
/// values in [0, 1].
struct SequenceSample {
  std::array<Tensor, 3> frames;
  CameraIntrinsics intrinsics;
  std::optional<Tensor> gt_depth;  // [1, 1, h, w] metres, 0 = no measurement
  std::optional<FlowGroundTruth> gt_flow;
  std::optional<Motion> gt_pose;  // t -> t+1
  std::string id;

  const Tensor& previous() const { return frames[0]; }
  const Tensor& target() const { return frames[1]; }
  const Tensor& next() const { return frames[2]; }
  /// Throws unless every frame is a [1, 3, H, W] image of the same size.
  void validate() const;
};

/// Random-access sample source. Implementations are immutable after
/// construction, so `sample` may be called from several threads.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual SequenceSample sample(std::size_t index) const = 0;
};

/// Frames of several samples stacked along the batch axis.
struct Batch {
  Tensor previous;
  Tensor target;
  Tensor next;
  CameraIntrinsics intrinsics;
};

/// Throws when the samples disagree in size or intrinsics.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Synthetic scenes

/// Fronto-parallel textured rectangle in front of the background.
struct SpriteSpec {
  double depth = 10.0;
  /// Image-plane motion per frame added on top of the camera-induced flow.
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  int width = 48;
  int height = 32;
  /// Top-left corner in frame 0, pixels.
  double x = 0.0;
  double y = 0.0;
  std::uint64_t texture_seed = 1;
};

/// Camera in front of a textured plane with sprites. Between frames f and
/// f + 1 the camera moves by X_{f+1} = R(s_f rotation) X_f + s_f translation
/// in camera coordinates, where s_f is the speed profile entry for f.
struct SyntheticSceneSpec {
  double background_depth = 20.0;
  Eigen::Vector3d camera_translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d camera_rotation = Eigen::Vector3d::Zero();
  /// Per-frame multipliers of the camera motion, repeated over the sequence.
  /// Empty means a constant motion.
  std::vector<double> speed_profile;
  std::vector<SpriteSpec> sprites;
  int width = 256;
  int height = 128;
  double fx = 148.48;
  double fy = 148.48;
  double cx = 127.5;
  double cy = 63.5;
  int length = 50;
  std::uint64_t seed = 0;

  CameraIntrinsics intrinsics() const {
    return {fx, fy, cx, cy, width, height};
  }
  double speed(int frame) const {
    return speed_profile.empty()
               ? 1.0
               : speed_profile[static_cast<std::size_t>(frame) % speed_profile.size()];
  }
  /// Camera motion from frame `frame` to frame + 1.
  Motion motion(int frame) const {
    return {speed(frame) * camera_rotation, speed(frame) * camera_translation};
  }

  /// Throws when a sprite is not in front of the background or leaves less
  /// than half of its area inside some frame.
  void validate() const;

  /// Sideways-moving camera with two sprites at half the background depth
  /// that cross the frame while drifting on their own. The seed selects
  /// textures only; the geometry is fixed.
  static SyntheticSceneSpec standard(std::uint64_t seed, int length = 50);
};

/// Rendered sequence. `flow[f]` maps frame f to f+1.
struct SyntheticSequence {
  SyntheticSceneSpec spec;
  std::vector<Tensor> frames;  // [1, 3, H, W]
  std::vector<Tensor> depth;   // [1, 1, H, W]
  std::vector<FlowGroundTruth> flow;
};

SyntheticSequence generate_synthetic(const SyntheticSceneSpec& spec);

/// Triplets of a rendered sequence; sample i targets frame i + 1.
class SyntheticDataset : public Dataset {
 public:
  explicit SyntheticDataset(SyntheticSequence sequence);
  std::size_t size() const override;
  SequenceSample sample(std::size_t index) const override;
  const SyntheticSequence& sequence() const { return sequence_; }

 private:
  SyntheticSequence sequence_;
};

/// Writes `dir/manifest.json`, `image/NNNNNN.png` (8-bit RGB),
/// `flow_occ` and `flow_noc` (16-bit KITTI flow), `rigid` (8-bit mask) and
/// `inv_depth` (16-bit, value = inverse depth * inverse_depth_scale).
void export_synthetic(const SyntheticSequence& sequence,
                      const std::filesystem::path& dir);

/// Reads a directory written by export_synthetic.
class SyntheticDirectory : public Dataset {
 public:
  explicit SyntheticDirectory(std::filesystem::path dir);
  std::size_t size() const override;
  SequenceSample sample(std::size_t index) const override;
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  double inverse_depth_scale() const { return inverse_depth_scale_; }

 private:
  std::filesystem::path dir_;
  CameraIntrinsics intrinsics_;
  double inverse_depth_scale_ = 0.0;
  int frames_ = 0;
  Motion motion_;
  std::vector<double> speed_profile_;
};

// ---------------------------------------------------------------------------
// Image files

/// 8- or 16-bit colour or grey PNG/JPEG as [1, 3, H, W] in [0, 1]. Resizes
/// with area averaging when width/height are nonzero.
Tensor read_rgb(const std::filesystem::path& path, int width = 0,
                int height = 0);
/// [1, 3, H, W] or [1, 1, H, W] in [0, 1] to an 8-bit PNG.
void write_rgb(const std::filesystem::path& path, const Tensor& image);

/// 16-bit flow encoding: round(64 * value + 2^15), clamped to [0, 65535].
std::uint16_t encode_flow_value(double value);
double decode_flow_value(std::uint16_t encoded);

struct FlowImage {
  Tensor flow;   // [1, 2, H, W]
  Tensor valid;  // [1, 1, H, W]
};
FlowImage read_flow_png(const std::filesystem::path& path);
void write_flow_png(const std::filesystem::path& path, const Tensor& flow,
                    const Tensor& valid);

// ---------------------------------------------------------------------------
// KITTI

/// One line of a split file: "<date>/<drive> <frame> <l|r>".
struct SplitEntry {
  std::string folder;
  int frame = 0;
  char side = 'l';
};
std::vector<SplitEntry> read_split_file(const std::filesystem::path& path);

/// Rectified intrinsics of camera 2 (side 'l') or 3 ('r') from
/// calib_cam_to_cam.txt.
CameraIntrinsics read_kitti_intrinsics(const std::filesystem::path& calib,
                                       char side = 'l');

/// Sparse depth of the velodyne scan projected into the rectified camera at
/// its native resolution; the nearest return wins per pixel.
Tensor velodyne_depth(const std::filesystem::path& velodyne_bin,
                      const std::filesystem::path& calib_dir, char side);

enum class Split { kTrain, kVal, kTest };
Split parse_split(const std::string& name);

struct KittiOptions {
  /// Directory holding train_files.txt, val_files.txt and test_files.txt.
  std::filesystem::path split_dir;
  int width = 256;
  int height = 128;
  std::string image_extension = ".png";
};

/// KITTI raw triplets listed by a split file. Entries whose files are missing
/// are skipped with a warning. Static frames are excluded by the split file
/// itself. Test samples carry velodyne depth.
class KittiEigenDataset : public Dataset {
 public:
  KittiEigenDataset(std::filesystem::path root, Split split,
                    KittiOptions options);
  std::size_t size() const override { return entries_.size(); }
  SequenceSample sample(std::size_t index) const override;
  std::size_t skipped() const { return skipped_; }

 private:
  std::filesystem::path image_path(const SplitEntry& e, int frame) const;

  std::filesystem::path root_;
  Split split_;
  KittiOptions options_;
  std::vector<SplitEntry> entries_;
  std::size_t skipped_ = 0;
};

/// KITTI 2015 flow training pairs at native resolution.
struct FlowPair {
  Tensor frame_t;  // [1, 3, H, W]
  Tensor frame_s;
  FlowGroundTruth gt;
  std::string id;
};

class KittiFlowDataset {
 public:
  /// `root` holds training/image_2, training/flow_occ and training/flow_noc.
  explicit KittiFlowDataset(std::filesystem::path root);
  std::size_t size() const { return ids_.size(); }
  FlowPair pair(std::size_t index) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> ids_;
};

}  // namespace dfnet::data
