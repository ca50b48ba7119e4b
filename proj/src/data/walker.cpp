// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/data/walker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kElevationRad = 20.0 * kPi / 180.0;

struct Vec3 {
  double x, y, z;  // forward, up, lateral (left)
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }

// Direction of a limb hanging down and pitched forward by `angle`.
Vec3 pitched(double angle) { return {std::sin(angle), -std::cos(angle), 0.0}; }

struct Capsule {
  Vec3 a, b;
  double radius;
};

// Per-identity body and gait parameters derived from the seed.
struct Physique {
  double limb, torso, head, shoulder, build;
  double hip_swing, knee_flex, arm_swing, lean;
};

Physique physique_for(const WalkerSpec& spec) {
  std::mt19937_64 rng(derive_seed(static_cast<uint64_t>(spec.identity_seed), 0x5eed));
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };
  Physique p{};
  p.limb = spec.limb_scale * draw(0.85, 1.15);
  p.torso = spec.torso_scale * draw(0.85, 1.15);
  p.head = spec.head_scale * draw(0.85, 1.2);
  p.shoulder = draw(0.85, 1.25);
  p.build = draw(0.85, 1.2);
  p.hip_swing = draw(0.32, 0.55);
  p.knee_flex = draw(0.35, 0.8);
  p.arm_swing = draw(0.2, 0.6);
  p.lean = draw(0.0, 0.14);
  return p;
}

std::vector<Capsule> pose(const WalkerSpec& spec, const Physique& p, int frame_index) {
  const double bulk = spec.clothing_bulk;
  const double phase = 2.0 * kPi * frame_index / spec.stride_period_frames;

  const double thigh = 0.245 * p.limb, shin = 0.245 * p.limb;
  const double upper_arm = 0.17 * p.limb, forearm = 0.16 * p.limb;
  const double torso_len = 0.30 * p.torso;
  const double pelvis_half = 0.055 * p.torso * p.build;
  const double shoulder_half = 0.105 * p.torso * p.shoulder;
  const double head_r = 0.062 * p.head;

  const double hip_y = thigh + shin + 0.025 + 0.012 * std::cos(2.0 * phase);
  const Vec3 hip{0.0, hip_y, 0.0};
  const Vec3 neck = hip + Vec3{torso_len * std::sin(p.lean), torso_len * std::cos(p.lean), 0.0};

  std::vector<Capsule> parts;
  parts.reserve(14);

  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    const double side_phase = phase + side * kPi;
    // Legs.
    const double hip_angle = p.hip_swing * std::sin(side_phase);
    const double knee = p.knee_flex * 0.5 * (1.0 + std::cos(side_phase - kPi / 3.0));
    const Vec3 hip_joint = hip + Vec3{0.0, 0.0, sign * pelvis_half};
    const Vec3 knee_joint = hip_joint + thigh * pitched(hip_angle);
    const Vec3 ankle = knee_joint + shin * pitched(hip_angle - knee);
    const Vec3 toe = ankle + Vec3{0.075 * p.limb, -0.01, 0.0};
    parts.push_back({hip_joint, knee_joint, 0.048 * p.build * (1.0 + 0.2 * bulk)});
    parts.push_back({knee_joint, ankle, 0.036 * p.build});
    parts.push_back({ankle, toe, 0.022});
    // Arms swing against the same-side leg.
    const double arm_angle = -p.arm_swing * std::sin(side_phase);
    const Vec3 shoulder = neck + Vec3{0.0, -0.035, sign * shoulder_half};
    const Vec3 elbow = shoulder + upper_arm * pitched(arm_angle);
    const Vec3 wrist = elbow + forearm * pitched(arm_angle + 0.25 + 0.2 * p.arm_swing);
    parts.push_back({shoulder, elbow, 0.03 * p.build * (1.0 + 0.55 * bulk)});
    parts.push_back({elbow, wrist, 0.026 * p.build * (1.0 + 0.3 * bulk)});
  }

  const Vec3 torso_low = hip + Vec3{0.0, 0.04, 0.0};
  const Vec3 torso_high = neck + Vec3{0.0, -0.03, 0.0};
  parts.push_back({torso_low, torso_high, 0.072 * p.torso * p.build * (1.0 + 0.45 * bulk)});
  parts.push_back({neck + Vec3{0.0, -0.035, shoulder_half}, neck + Vec3{0.0, -0.035, -shoulder_half},
                   0.045 * p.build * (1.0 + 0.4 * bulk)});
  const Vec3 head = neck + Vec3{0.02, 0.035 + head_r, 0.0};
  parts.push_back({neck, head, 0.03});
  parts.push_back({head, head, head_r});
  return parts;
}

struct Point2 {
  double u, v;
};

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double du = b.u - a.u, dv = b.v - a.v;
  const double len2 = du * du + dv * dv;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.u - a.u) * du + (p.v - a.v) * dv) / len2, 0.0, 1.0);
  const double eu = p.u - (a.u + t * du), ev = p.v - (a.v + t * dv);
  return std::sqrt(eu * eu + ev * ev);
}

}  // namespace

void WalkerSpec::validate() const {
  if (T <= 0) throw ValidationError("walker T must be positive");
  if (resolution <= 0) throw ValidationError("walker resolution must be positive");
  if (stride_period_frames < 4) throw ValidationError("stride_period_frames must be >= 4");
  if (!(limb_scale > 0.0 && torso_scale > 0.0 && head_scale > 0.0)) {
    throw ValidationError("walker body scales must be positive");
  }
  if (!(clothing_bulk >= 0.0 && clothing_bulk <= 1.0)) {
    throw ValidationError("clothing_bulk must lie in [0, 1]");
  }
  if (!std::isfinite(view_deg)) throw ValidationError("view_deg must be finite");
  if (start_frame < 0) throw ValidationError("start_frame must be non-negative");
}

SilhouetteSequence render_walker(const WalkerSpec& spec) {
  spec.validate();
  const Physique phys = physique_for(spec);
  const int res = spec.resolution;
  const double theta = spec.view_deg * kPi / 180.0;
  // Image-right and toward-camera axes in the walker frame.
  const Vec3 right{std::sin(theta), 0.0, std::cos(theta)};
  const Vec3 toward{std::cos(theta), 0.0, -std::sin(theta)};
  const double scale = 0.84 * res;
  const double ground = 0.97 * res;
  auto project = [&](Vec3 q) {
    const double u = q.x * right.x + q.z * right.z;
    const double depth = q.x * toward.x + q.z * toward.z;
    const double v = q.y * std::cos(kElevationRad) - depth * std::sin(kElevationRad);
    return Point2{res / 2.0 + u * scale, ground - v * scale};
  };

  auto frames = torch::zeros({spec.T, res, res}, torch::kFloat32);
  auto acc = frames.accessor<float, 3>();
  for (int t = 0; t < spec.T; ++t) {
    for (const Capsule& c : pose(spec, phys, t + spec.start_frame)) {
      const Point2 a = project(c.a), b = project(c.b);
      const double r = c.radius * scale;
      const int j0 = std::max(0, static_cast<int>(std::floor(std::min(a.u, b.u) - r - 1)));
      const int j1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(a.u, b.u) + r + 1)));
      const int i0 = std::max(0, static_cast<int>(std::floor(std::min(a.v, b.v) - r - 1)));
      const int i1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(a.v, b.v) + r + 1)));
      for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
          const double d = segment_distance({j + 0.5, i + 0.5}, a, b);
          const double cover = std::clamp(r - d + 0.5, 0.0, 1.0);
          if (cover > acc[t][i][j]) acc[t][i][j] = static_cast<float>(cover);
        }
      }
    }
  }
  SequenceMeta meta;
  meta.identity_id = "walker_" + std::to_string(spec.identity_seed);
  double view = std::fmod(spec.view_deg, 360.0);
  if (view < 0.0) view += 360.0;
  meta.view_deg = view;
  meta.attribute_tags = {"synthetic", spec.clothing_bulk > 0.5 ? "bulky" : "slim"};
  return SilhouetteSequence(frames, std::move(meta));
}

int64_t corpus_identity_seed(uint64_t seed, int index) {
  return static_cast<int64_t>(derive_seed(seed, 0x1d000 + static_cast<uint64_t>(index)) >> 1);
}

std::vector<WalkerSpec> corpus_specs(const CorpusSpec& spec) {
  if (spec.count <= 0) throw ValidationError("corpus count must be positive");
  if (spec.views.empty()) throw ValidationError("corpus needs at least one view");
  std::vector<WalkerSpec> out;
  out.reserve(spec.count);
  const int nv = static_cast<int>(spec.views.size());
  for (int k = 0; k < spec.count; ++k) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<uint64_t>(k)));
    WalkerSpec w;
    w.identity_seed = corpus_identity_seed(spec.seed, k / nv);
    w.view_deg = spec.views[k % nv];
    w.clothing_bulk = spec.max_clothing_bulk * unit_uniform(rng);
    w.stride_period_frames = spec.stride_period_frames;
    w.start_frame = static_cast<int>(uniform_index(rng, static_cast<uint64_t>(spec.stride_period_frames)));
    w.T = spec.T;
    w.resolution = spec.resolution;
    out.push_back(w);
  }
  return out;
}

SequenceCollection synthesize_corpus(const CorpusSpec& spec) {
  SequenceCollection out;
  const auto specs = corpus_specs(spec);
  const int nv = static_cast<int>(spec.views.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    auto seq = render_walker(specs[k]);
    char id[32];
    std::snprintf(id, sizeof id, "id_%03d", static_cast<int>(k) / nv);
    seq.meta().identity_id = id;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace gaiteditor::data
