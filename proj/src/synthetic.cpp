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
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "dfnet/data.hpp"
#include "image_io.hpp"

namespace dfnet::data {
namespace {

namespace fs = std::filesystem;
using Eigen::Matrix3d;
using Eigen::Vector3d;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h =
      mix(seed ^ mix(static_cast<std::uint64_t>(ix) ^
                     mix(static_cast<std::uint64_t>(iy) + 0x51ed27ULL)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Value noise in [0, 1] with lattice spacing `cell` pixels.
double value_noise(std::uint64_t seed, double u, double v, double cell) {
  const double x = u / cell;
  const double y = v / cell;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double sx = fade(x - fx);
  const double sy = fade(y - fy);
  const double a = lattice(seed, ix, iy);
  const double b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1);
  const double d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * sx) + ((c + (d - c) * sx) - (a + (b - a) * sx)) * sy;
}

// Band-limited grey texture in [0, 1]; coordinates in pixels.
double fractal(std::uint64_t seed, double u, double v) {
  return 0.5 * value_noise(seed, u, v, 32.0) +
         0.3 * value_noise(seed + 1, u, v, 16.0) +
         0.2 * value_noise(seed + 2, u, v, 8.0);
}

std::array<double, 3> texture(std::uint64_t seed, double u, double v) {
  const double shared = fractal(mix(seed), u, v);
  std::array<double, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    const double own = fractal(mix(seed + 101 * (c + 1)), u, v);
    rgb[c] = 0.1 + 0.8 * (0.6 * shared + 0.4 * own);
  }
  return rgb;
}

// Camera pose of frame f: X_f = rotation * X_0 + offset.
struct CameraPose {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d offset = Vector3d::Zero();
};

std::vector<CameraPose> camera_poses(const SyntheticSceneSpec& spec) {
  std::vector<CameraPose> poses(static_cast<std::size_t>(spec.length));
  for (int f = 1; f < spec.length; ++f) {
    const Motion m = spec.motion(f - 1);
    const Matrix3d r = backbone::rotation_matrix(m.rotation);
    poses[f].rotation = r * poses[f - 1].rotation;
    poses[f].offset = r * poses[f - 1].offset + m.translation;
  }
  return poses;
}

struct SpriteGeometry {
  Vector3d origin;  // top-left corner in world coordinates at frame 0
  Vector3d step;    // world displacement per frame
  double extent_x;
  double extent_y;
};

SpriteGeometry sprite_geometry(const SyntheticSceneSpec& spec,
                               const SpriteSpec& s) {
  const double z = s.depth;
  return {Vector3d((s.x - spec.cx) * z / spec.fx, (s.y - spec.cy) * z / spec.fy,
                   z),
          Vector3d(s.velocity_x * z / spec.fx, s.velocity_y * z / spec.fy, 0.0),
          s.width * z / spec.fx, s.height * z / spec.fy};
}

struct Hit {
  int surface = -1;  // 0 = background, k + 1 = sprite k
  double range = std::numeric_limits<double>::infinity();
  Vector3d world;
};

class Renderer {
 public:
  explicit Renderer(const SyntheticSceneSpec& spec)
      : spec_(spec), poses_(camera_poses(spec)) {
    for (const SpriteSpec& s : spec.sprites)
      sprites_.push_back(sprite_geometry(spec, s));
  }

  const CameraPose& pose(int f) const { return poses_[f]; }
  const SpriteGeometry& sprite(int k) const { return sprites_[k]; }

  Vector3d ray(double x, double y) const {
    return {(x - spec_.cx) / spec_.fx, (y - spec_.cy) / spec_.fy, 1.0};
  }

  // First surface hit by the ray through pixel (x, y) of frame f. `range` is
  // the camera-frame depth since rays have unit z.
  Hit trace(int f, double x, double y) const {
    const CameraPose& p = poses_[f];
    const Vector3d o = -(p.rotation.transpose() * p.offset);
    const Vector3d d = p.rotation.transpose() * ray(x, y);
    Hit best;
    if (d.z() <= 0.0) return best;
    auto plane = [&](double z) { return (z - o.z()) / d.z(); };
    const double lb = plane(spec_.background_depth);
    if (lb > 0.0) best = {0, lb, o + lb * d};
    for (std::size_t k = 0; k < sprites_.size(); ++k) {
      const SpriteGeometry& g = sprites_[k];
      const double l = plane(g.origin.z());
      if (l <= 0.0 || l >= best.range) continue;
      const Vector3d w = o + l * d;
      const Vector3d corner = g.origin + static_cast<double>(f) * g.step;
      const double lx = w.x() - corner.x();
      const double ly = w.y() - corner.y();
      if (lx >= 0.0 && lx < g.extent_x && ly >= 0.0 && ly < g.extent_y)
        best = {static_cast<int>(k) + 1, l, w};
    }
    return best;
  }

  std::array<double, 3> shade(int f, const Hit& h) const {
    if (h.surface == 0)
      return texture(spec_.seed, h.world.x() * spec_.fx / spec_.background_depth,
                     h.world.y() * spec_.fy / spec_.background_depth);
    const SpriteSpec& s = spec_.sprites[h.surface - 1];
    const SpriteGeometry& g = sprites_[h.surface - 1];
    const Vector3d corner = g.origin + static_cast<double>(f) * g.step;
    return texture(s.texture_seed ^ 0xa5a5a5a5ULL,
                   (h.world.x() - corner.x()) * spec_.fx / s.depth,
                   (h.world.y() - corner.y()) * spec_.fy / s.depth);
  }

  // Camera-frame position in frame f + 1 of the surface point `h` seen in
  // frame f.
  Vector3d advance(int f, const Hit& h) const {
    Vector3d w = h.world;
    if (h.surface > 0) w += sprites_[h.surface - 1].step;
    const CameraPose& next = poses_[f + 1];
    return next.rotation * w + next.offset;
  }

 private:
  const SyntheticSceneSpec& spec_;
  std::vector<CameraPose> poses_;
  std::vector<SpriteGeometry> sprites_;
};

double visible_fraction(const SyntheticSceneSpec& spec,
                        const Renderer& renderer, int f, int k) {
  const SpriteGeometry& g = renderer.sprite(k);
  const CameraPose& p = renderer.pose(f);
  const Vector3d corner = g.origin + static_cast<double>(f) * g.step;
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (int cy = 0; cy < 2; ++cy)
    for (int cx = 0; cx < 2; ++cx) {
      const Vector3d w = corner + Vector3d(cx * g.extent_x, cy * g.extent_y, 0);
      const Vector3d c = p.rotation * w + p.offset;
      if (c.z() <= 0.0) return 0.0;
      const double u = spec.fx * c.x() / c.z() + spec.cx;
      const double v = spec.fy * c.y() / c.z() + spec.cy;
      x0 = std::min(x0, u);
      x1 = std::max(x1, u);
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  const double area = (x1 - x0) * (y1 - y0);
  const double ix = std::max(0.0, std::min(x1, spec.width - 0.5) -
                                      std::max(x0, -0.5));
  const double iy = std::max(0.0, std::min(y1, spec.height - 0.5) -
                                      std::max(y0, -0.5));
  return area > 0.0 ? ix * iy / area : 0.0;
}

// Removes round-off from targets that land on a pixel centre.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  require(length >= 3, "synthetic scene: length must be >= 3");
  require(background_depth > 0.0, "synthetic scene: background depth <= 0");
  intrinsics().validate();
  require(camera_translation.allFinite() && camera_rotation.allFinite(),
          "synthetic scene: camera motion is not finite");
  require(std::all_of(speed_profile.begin(), speed_profile.end(),
                      [](double v) { return std::isfinite(v); }),
          "synthetic scene: speed profile is not finite");
  const Renderer renderer(*this);
  for (std::size_t k = 0; k < sprites.size(); ++k) {
    const SpriteSpec& s = sprites[k];
    const std::string name = "synthetic scene: sprite " + std::to_string(k);
    require(s.depth > 0.0 && s.depth < background_depth,
            name + " must lie between the camera and the background");
    require(s.width > 0 && s.height > 0, name + " has an empty size");
    for (int f = 0; f < length; ++f)
      require(visible_fraction(*this, renderer, f, static_cast<int>(k)) >= 0.5,
              name + " is less than half visible in frame " +
                  std::to_string(f));
  }
}

SyntheticSceneSpec SyntheticSceneSpec::standard(std::uint64_t seed,
                                                int length) {
  SyntheticSceneSpec s;
  s.seed = seed;
  s.length = length;
  s.camera_translation = Vector3d(-0.27, 0.0, 0.0);
  const std::uint64_t base = mix(seed);
  s.sprites = {
      {10.0, 0.2, -0.5, 56, 40, 196.0, 34.0, base + 11},
      {10.0, -0.2, 0.3, 48, 36, 226.0, 76.0, base + 23},
  };
  return s;
}

SyntheticSequence generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  const Renderer renderer(spec);
  const int h = spec.height;
  const int w = spec.width;
  SyntheticSequence seq;
  seq.spec = spec;
  std::vector<std::vector<int>> surfaces;
  std::vector<std::vector<Hit>> hits;
  for (int f = 0; f < spec.length; ++f) {
    Tensor image({1, 3, h, w});
    Tensor depth({1, 1, h, w});
    std::vector<int> ids(static_cast<std::size_t>(h) * w);
    std::vector<Hit> frame_hits(ids.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Hit hit = renderer.trace(f, x, y);
        require(hit.surface >= 0, "synthetic scene: a ray misses every surface");
        const auto rgb = renderer.shade(f, hit);
        for (int c = 0; c < 3; ++c) image.at(0, c, y, x) = rgb[c];
        depth.at(0, 0, y, x) = hit.range;
        ids[static_cast<std::size_t>(y) * w + x] = hit.surface;
        frame_hits[static_cast<std::size_t>(y) * w + x] = hit;
      }
    seq.frames.push_back(std::move(image));
    seq.depth.push_back(std::move(depth));
    surfaces.push_back(std::move(ids));
    hits.push_back(std::move(frame_hits));
  }

  for (int f = 0; f + 1 < spec.length; ++f) {
    FlowGroundTruth gt{Tensor({1, 2, h, w}), Tensor({1, 1, h, w}),
                       Tensor({1, 1, h, w}), Tensor({1, 1, h, w})};
    const std::vector<int>& next_ids = surfaces[f + 1];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Hit& hit = hits[f][static_cast<std::size_t>(y) * w + x];
        const Vector3d p = renderer.advance(f, hit);
        gt.rigid.at(0, 0, y, x) = hit.surface == 0 ? 1.0 : 0.0;
        if (p.z() <= 0.0) continue;
        const CameraPose& now = renderer.pose(f);
        const Vector3d q = now.rotation * hit.world + now.offset;
        gt.flow.at(0, 0, y, x) = spec.fx * p.x() / p.z() - spec.fx * q.x() / q.z();
        gt.flow.at(0, 1, y, x) = spec.fy * p.y() / p.z() - spec.fy * q.y() / q.z();
        const double u = snap(x + gt.flow.at(0, 0, y, x));
        const double v = snap(y + gt.flow.at(0, 1, y, x));
        if (u < 0.0 || u > w - 1 || v < 0.0 || v > h - 1) continue;
        gt.valid.at(0, 0, y, x) = 1.0;
        const int u0 = static_cast<int>(std::floor(u));
        const int v0 = static_cast<int>(std::floor(v));
        const int u1 = u > u0 ? u0 + 1 : u0;
        const int v1 = v > v0 ? v0 + 1 : v0;
        bool visible = true;
        for (int ty : {v0, v1})
          for (int tx : {u0, u1})
            visible = visible &&
                      next_ids[static_cast<std::size_t>(ty) * w + tx] ==
                          hit.surface;
        gt.noc.at(0, 0, y, x) = visible ? 1.0 : 0.0;
      }
    seq.flow.push_back(std::move(gt));
  }
  return seq;
}

// ---------------------------------------------------------------------------

void SequenceSample::validate() const {
  const Shape& s = frames[1].shape();
  for (const Tensor& f : frames)
    require(f.n() == 1 && f.c() == 3 && f.shape() == s,
            "sample " + id + ": frames must be [1, 3, H, W] of equal size");
  require(intrinsics.width == s.w && intrinsics.height == s.h,
          "sample " + id + ": intrinsics do not match the frame size");
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  require(!indices.empty(), "make_batch: no indices");
  std::vector<Tensor> prev, target, next;
  Batch batch;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    SequenceSample s = dataset.sample(indices[k]);
    s.validate();
    if (k == 0) {
      batch.intrinsics = s.intrinsics;
    } else {
      const CameraIntrinsics& a = batch.intrinsics;
      const CameraIntrinsics& b = s.intrinsics;
      require(a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy &&
                  a.width == b.width && a.height == b.height,
              "make_batch: samples have different intrinsics");
    }
    prev.push_back(std::move(s.frames[0]));
    target.push_back(std::move(s.frames[1]));
    next.push_back(std::move(s.frames[2]));
  }
  batch.previous = Tensor::stack(prev);
  batch.target = Tensor::stack(target);
  batch.next = Tensor::stack(next);
  return batch;
}

SyntheticDataset::SyntheticDataset(SyntheticSequence sequence)
    : sequence_(std::move(sequence)) {
  require(sequence_.frames.size() >= 3, "synthetic dataset: fewer than 3 frames");
}

std::size_t SyntheticDataset::size() const {
  return sequence_.frames.size() - 2;
}

SequenceSample SyntheticDataset::sample(std::size_t index) const {
  require(index < size(), "synthetic dataset: index out of range");
  const std::size_t t = index + 1;
  SequenceSample s;
  s.frames = {sequence_.frames[t - 1], sequence_.frames[t],
              sequence_.frames[t + 1]};
  s.intrinsics = sequence_.spec.intrinsics();
  s.gt_depth = sequence_.depth[t];
  s.gt_flow = sequence_.flow[t];
  s.gt_pose = sequence_.spec.motion(static_cast<int>(t));
  s.id = "synthetic/" + std::to_string(sequence_.spec.seed) + "/" +
         std::to_string(t);
  return s;
}

// ---------------------------------------------------------------------------
// Export format

namespace {

constexpr const char* kFormat = "dfnet-synthetic";
constexpr int kFormatVersion = 2;

std::string frame_name(std::size_t f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu.png", f);
  return buf;
}

nlohmann::json vec3(const Vector3d& v) { return {v.x(), v.y(), v.z()}; }
Vector3d vec3(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void export_synthetic(const SyntheticSequence& seq, const fs::path& dir) {
  const SyntheticSceneSpec& spec = seq.spec;
  for (const char* sub : {"image", "flow_occ", "flow_noc", "rigid", "inv_depth"})
    fs::create_directories(dir / sub);

  double nearest = std::numeric_limits<double>::infinity();
  for (const Tensor& d : seq.depth) nearest = std::min(nearest, d.min());
  const double scale = std::floor(65535.0 * nearest);
  require(scale >= 1.0, "export_synthetic: scene too close to the camera");

  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const std::string name = frame_name(f);
    write_rgb(dir / "image" / name, seq.frames[f]);
    write_inverse_depth_png(dir / "inv_depth" / name, seq.depth[f], scale);
    if (f < seq.flow.size()) {
      const FlowGroundTruth& gt = seq.flow[f];
      write_flow_png(dir / "flow_occ" / name, gt.flow, gt.valid);
      write_flow_png(dir / "flow_noc" / name, gt.flow, gt.noc);
      write_mask_png(dir / "rigid" / name, gt.rigid);
    }
  }

  nlohmann::json sprites = nlohmann::json::array();
  for (const SpriteSpec& s : spec.sprites)
    sprites.push_back({{"depth", s.depth},
                       {"velocity", {s.velocity_x, s.velocity_y}},
                       {"size", {s.width, s.height}},
                       {"position", {s.x, s.y}},
                       {"texture_seed", s.texture_seed}});
  const nlohmann::json manifest = {
      {"format", kFormat},
      {"version", kFormatVersion},
      {"seed", spec.seed},
      {"frames", seq.frames.size()},
      {"width", spec.width},
      {"height", spec.height},
      {"intrinsics",
       {{"fx", spec.fx}, {"fy", spec.fy}, {"cx", spec.cx}, {"cy", spec.cy}}},
      {"background_depth", spec.background_depth},
      {"camera_motion",
       {{"rotation", vec3(spec.camera_rotation)},
        {"translation", vec3(spec.camera_translation)},
        {"speed_profile", spec.speed_profile},
        {"convention", "X_next = R(s rotation) X + s translation, s = speed_profile[f % n]"}}},
      {"sprites", sprites},
      {"inverse_depth_scale", scale},
      {"flow_encoding", "u,v = (value - 32768) / 64; third channel = valid"},
  };
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

SyntheticDirectory::SyntheticDirectory(fs::path dir) : dir_(std::move(dir)) {
  const fs::path path = dir_ / "manifest.json";
  std::ifstream in(path);
  require(in.good(), "synthetic directory: cannot open " + path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    require(m.at("format") == kFormat && m.at("version") == kFormatVersion,
            "synthetic directory: unsupported format in " + path.string());
    const auto& k = m.at("intrinsics");
    intrinsics_ = {k.at("fx"), k.at("fy"), k.at("cx"), k.at("cy"),
                   m.at("width"), m.at("height")};
    inverse_depth_scale_ = m.at("inverse_depth_scale");
    frames_ = m.at("frames");
    const auto& motion = m.at("camera_motion");
    motion_ = {vec3(motion.at("rotation")), vec3(motion.at("translation"))};
    speed_profile_ = motion.at("speed_profile").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("synthetic directory: malformed " +
                                path.string() + ": " + e.what());
  }
  intrinsics_.validate();
  require(frames_ >= 3, "synthetic directory: fewer than 3 frames");
}

std::size_t SyntheticDirectory::size() const {
  return static_cast<std::size_t>(frames_ - 2);
}

SequenceSample SyntheticDirectory::sample(std::size_t index) const {
  require(index < size(), "synthetic directory: index out of range");
  const std::size_t t = index + 1;
  SequenceSample s;
  for (int k = 0; k < 3; ++k)
    s.frames[k] = read_rgb(dir_ / "image" / frame_name(t - 1 + k));
  s.intrinsics = intrinsics_;
  const std::string name = frame_name(t);
  s.gt_depth = read_inverse_depth_png(dir_ / "inv_depth" / name,
                                      inverse_depth_scale_);
  const FlowImage occ = read_flow_png(dir_ / "flow_occ" / name);
  const FlowImage noc = read_flow_png(dir_ / "flow_noc" / name);
  s.gt_flow = FlowGroundTruth{occ.flow, occ.valid, noc.valid,
                              read_mask_png(dir_ / "rigid" / name)};
  const double speed =
      speed_profile_.empty() ? 1.0 : speed_profile_[t % speed_profile_.size()];
  s.gt_pose = Motion{speed * motion_.rotation, speed * motion_.translation};
  s.id = dir_.filename().string() + "/" + std::to_string(t);
  s.validate();
  return s;
}

}  // namespace dfnet::data
