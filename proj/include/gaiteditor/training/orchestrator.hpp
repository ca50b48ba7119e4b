// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/generator/latent_training.hpp"
#include "gaiteditor/losses/losses.hpp"
#include "gaiteditor/training/model_set.hpp"
#include "json.hpp"

namespace gaiteditor::training {

struct StageConfig {
  data::Stage stage = data::Stage::II;
  int steps = 2000;
  int batch_pairs = 2;  // stage III: drawn pairs, four permutations each
  int clip_length = 8;
  double lr = 1e-4;
  double d_lr = 1e-4;
  double beta1 = 0.0, beta2 = 0.99;
  losses::LossWeights weights;
  losses::IdentityCosine id_mode = losses::IdentityCosine::Flattened;
  uint64_t rng_seed = 0;
  /// Train on the first `subset` sequences only (0 = all).
  int subset = 0;
  // Auxiliary pretraining run when E_id / C_view are not yet trained.
  blender::IdentityTrainingConfig identity_training;
  losses::ViewTrainingConfig view_training;

  void validate() const;
  nlohmann::json to_json() const;
  static StageConfig from_json(const nlohmann::json& j);
};

struct IterationRecord {
  int64_t step = 0;
  losses::LossBundle bundle;
  double total = 0.0;
  std::vector<bool> pair_identical;
  double wall_ms = 0.0;  // not written to the metrics log

  /// One metrics line; excludes wall time so logs replay identically.
  nlohmann::json to_json() const;
};

/// Per-pair loss terms, each [B], with the identity-pair gate applied.
struct PairTerms {
  torch::Tensor rec, adv_B, adv_Dvid, id, view;
  torch::Tensor identical;  // bool [B]
};

/// The networks a loss evaluation consults. Real runs bind them to a
/// ModelSet; tests may bind stubs.
struct LossContext {
  std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)> reconstruction;  // (hat, ref) -> [B]
  std::function<torch::Tensor(const torch::Tensor&)> d_vid;       // clips -> score maps [B, ...]
  std::function<torch::Tensor(const torch::Tensor&)> embed;       // clips -> [B, P, C]
  std::function<torch::Tensor(const torch::Tensor&)> view_probs;  // clips -> [B, K]
  losses::IdentityCosine id_mode = losses::IdentityCosine::Flattened;

  static LossContext bind(const ModelSet& models, const losses::LossWeights& weights,
                          losses::IdentityCosine id_mode = losses::IdentityCosine::Flattened);
};

/// Bool [B]: pair b is bit-identical (S_i == S_j).
torch::Tensor identical_mask(const torch::Tensor& s_i, const torch::Tensor& s_j);

/// All five terms for a batch of pairs, gated: rec, adv_B and adv_Dvid are
/// exactly 0 on non-identical pairs; id and view apply to every pair.
PairTerms pair_terms(const torch::Tensor& s_i, const torch::Tensor& s_j, const torch::Tensor& s_hat,
                     const LossContext& ctx);

/// Sequences of a pair batch stacked to [B,T,1,R,R].
std::pair<torch::Tensor, torch::Tensor> stack_pairs(const data::PairBatch& batch);

/// Blender + generator forward: Ŝ = G(A(B(S_i, S_j))), [B,T,1,R,R].
torch::Tensor reconstruct(const ModelSet& models, const torch::Tensor& s_i, const torch::Tensor& s_j);

class Trainer {
 public:
  Trainer(ModelSet models, StageConfig cfg);

  /// One alternating update: D_vid on the identical pairs, then the blender
  /// on the weighted rec, adv_B, id, view terms. Throws DivergenceError on a
  /// non-finite loss.
  IterationRecord run_iteration(const data::PairBatch& batch);

  ModelSet& models() { return models_; }
  const StageConfig& config() const { return cfg_; }

 private:
  ModelSet models_;
  StageConfig cfg_;
  std::unique_ptr<torch::optim::Adam> blender_opt_, d_opt_;
};

struct StageResult {
  ModelSet models;
  std::vector<IterationRecord> records;
};

/// Runs `cfg.steps` iterations of stage II or III on `dataset`. Pretrains
/// E_id and C_view first when they are not ready. Appends each record to
/// `metrics_path` as a JSON line when given.
StageResult train_stage(ModelSet models, const StageConfig& cfg, const data::SequenceCollection& dataset,
                        const std::optional<std::string>& metrics_path = std::nullopt,
                        const std::function<void(const IterationRecord&)>& on_record = {});

/// PSNR in dB between two equal-shape tensors with peak 1.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

// ---------------------------------------------------------------------------
// Run config file

struct RunConfig {
  nlohmann::json data;  // {"dir": PATH} or {"synth": {count, seed, ...}}
  ModelConfig model;
  generator::LatentTrainingConfig latent;  // stage I
  std::vector<StageConfig> stages;         // stages II / III
  uint64_t init_seed = 0;
  std::string output_dir = "runs/default";

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  const StageConfig& stage(data::Stage s) const;
  /// Loads or synthesizes the dataset described by `data`.
  data::SequenceCollection load_data() const;
};

}  // namespace gaiteditor::training
