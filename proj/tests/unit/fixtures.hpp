// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <string>

#include "gaiteditor/data/walker.hpp"
#include "gaiteditor/training/model_set.hpp"

namespace fixtures {

// Small enough that a forward pass costs milliseconds.
inline gaiteditor::training::ModelConfig tiny_config(int resolution = 32) {
  gaiteditor::training::ModelConfig c;
  c.generator.resolution = resolution;
  c.generator.z_dim = 32;
  c.generator.w_dim = 32;
  c.generator.channel_base = 256;
  c.generator.channel_max = 16;
  c.generator.disc_channel_base = 128;
  c.generator.disc_channel_max = 16;
  c.blender.id_channels = 8;
  c.blender.att_channels = {8, 8, 16, 16};
  c.blender.att_head_channels = 16;
  c.blender.id_trunk_channels = {8, 8, 16};
  c.blender.head_hidden = 64;
  c.blender.q_hidden = 32;
  c.d_vid.channels = {8, 8, 8};
  c.c_view.channels = {8, 8, 8};
  c.reconcile();
  return c;
}

inline gaiteditor::training::ModelSet tiny_models(uint64_t seed = 1, int resolution = 32) {
  auto m = gaiteditor::training::ModelSet::create(tiny_config(resolution), seed);
  m.gen.update_w_avg(64, seed + 1);
  m.blender.set_latent_avg(m.gen.w_avg());
  return m;
}

/// Marks a tiny model set as if stages I and II had run, so the editor
/// accepts it. Weights stay at their random initialization.
inline gaiteditor::training::ModelSet tiny_editable(uint64_t seed = 1, int resolution = 32) {
  auto m = tiny_models(seed, resolution);
  m.gen.freeze_synthesis();
  m.blender.mark_identity_ready();
  m.view_ready = true;
  m.stage_completed = 2;
  m.apply_frozen();
  return m;
}

inline gaiteditor::data::SequenceCollection corpus(int count, int resolution = 32, int T = 8, uint64_t seed = 3) {
  gaiteditor::data::CorpusSpec spec;
  spec.count = count;
  spec.resolution = resolution;
  spec.T = T;
  spec.seed = seed;
  return gaiteditor::data::synthesize_corpus(spec);
}

inline gaiteditor::data::SilhouetteSequence walker(int resolution = 32, int T = 8, int64_t identity = 5,
                                                   double view = 90.0) {
  gaiteditor::data::WalkerSpec w;
  w.identity_seed = identity;
  w.resolution = resolution;
  w.T = T;
  w.view_deg = view;
  return gaiteditor::data::render_walker(w);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("gaiteditor_" + name + "_" + std::to_string(rng() % 1000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace fixtures
