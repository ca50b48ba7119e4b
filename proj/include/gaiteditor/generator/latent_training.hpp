// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <random>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/generator/style_generator.hpp"

namespace gaiteditor::generator {

/// Fixed-probability discriminator augmentations. Each kind is applied to a
/// whole minibatch with its own probability; real and fake inputs share the
/// same draw.
struct AugmentConfig {
  double hflip_p = 0.5;
  double translate_p = 0.5;
  int max_translate = 4;  // pixels
  double cutout_p = 0.5;
  int max_cutout = 16;  // pixels, square side

  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

/// What the augmentation pipeline did to one discriminator minibatch.
struct AugmentTrace {
  bool flipped = false;
  int shift_x = 0, shift_y = 0;
  int cutout_size = 0;  // 0 = no cutout
  int cutout_x = 0, cutout_y = 0;
  torch::Tensor real_raw;        // [N,1,R,R] before augmentation
  torch::Tensor real_augmented;  // what D_img saw
};

struct LatentTrainingConfig {
  int steps = 2000;
  int batch = 16;
  double lr = 0.0005;
  double mapping_lr_mul = 0.01;
  double beta1 = 0.0, beta2 = 0.99;
  uint64_t seed = 0;
  AugmentConfig augment;
  int w_avg_samples = 4096;
  /// Instrumentation: called with every discriminator-side real batch.
  std::function<void(const AugmentTrace&)> on_discriminator_input;
  /// Progress: (step, d_loss, g_loss).
  std::function<void(int, double, double)> on_step;

  nlohmann::json to_json() const;
  static LatentTrainingConfig from_json(const nlohmann::json& j);
};

struct LatentTrainingStats {
  int steps_run = 0;
  double last_d_loss = 0.0;
  double last_g_loss = 0.0;
};

/// Applies one augmentation draw to `frames` ([N,1,R,R]); differentiable.
torch::Tensor apply_augment(const torch::Tensor& frames, const AugmentTrace& draw);
AugmentTrace draw_augment(const AugmentConfig& cfg, int resolution, std::mt19937_64& rng);

/// Alternating LSGAN updates of D_img and (M, A, G) on single frames drawn
/// from `dataset`. Trains `gen` in place, refreshes its w_avg, and marks A
/// and G frozen. Throws DivergenceError if a loss becomes non-finite.
LatentTrainingStats train_latent_space(StyleGenerator& gen, const data::SequenceCollection& dataset,
                                       const LatentTrainingConfig& cfg);

/// Mean frame over every frame of every sequence: [R, R].
torch::Tensor dataset_mean_image(const data::SequenceCollection& dataset);
/// Mean generated frame over `n` seeded samples: [R, R].
torch::Tensor generated_mean_image(const StyleGenerator& gen, int n, uint64_t seed);

}  // namespace gaiteditor::generator
