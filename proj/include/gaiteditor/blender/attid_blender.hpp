// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/generator/latent_types.hpp"
#include "json.hpp"

namespace gaiteditor::blender {

enum class ConfidenceMode { Full, PerChannel };

struct BlenderConfig {
  int resolution = 64;
  int num_styles = 10;
  int w_dim = 512;
  int parts = 16;
  int id_channels = 256;
  // Attribute trunk widths: stem, then three strided residual stages whose
  // outputs are the fine / medium / coarse pyramid taps.
  std::vector<int> att_channels = {16, 32, 64, 64};
  int att_head_channels = 64;
  std::vector<int> id_trunk_channels = {16, 32, 64};
  int head_hidden = 2048;
  int q_hidden = 512;
  ConfidenceMode q_mode = ConfidenceMode::Full;
  double leaky_slope = 0.2;

  void validate() const;
  /// Style rows fed by the coarse / medium / fine taps: [0, coarse_end),
  /// [coarse_end, medium_end), [medium_end, num_styles).
  int coarse_end() const;
  int medium_end() const;

  nlohmann::json to_json() const;
  static BlenderConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

// Feature and code types; all carry one tensor, shaped as noted.
struct AttributeFeature {
  torch::Tensor f_att;  // [L, T, C]
};
struct IdentityEmbedding {
  torch::Tensor g_id;  // [P, C_id]
};
struct AlignedIdentityFeature {
  torch::Tensor f_id;  // [L, T, C], constant along T
};
struct FusionConfidence {
  torch::Tensor q;  // [L, T, C] in [0, 1]
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in, int out, int stride, double slope);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
  double slope_;
};
TORCH_MODULE(ResidualBlock);

// Strided convs from a pyramid level down to 1x1, then a linear map to w.
class StyleHeadImpl : public torch::nn::Module {
 public:
  StyleHeadImpl(int in, int hidden, int spatial, int w_dim, double slope);
  torch::Tensor forward(const torch::Tensor& x);  // [N, in, s, s] -> [N, w_dim]

 private:
  torch::nn::Sequential convs_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(StyleHead);

/// E_att: per-frame residual trunk with a three-tap feature pyramid; each
/// style row has its own head. Output rows are offsets from `latent_avg`.
class AttributeEncoderImpl : public torch::nn::Module {
 public:
  explicit AttributeEncoderImpl(const BlenderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames);  // [N,1,R,R] -> [N, L, C]

  torch::Tensor latent_avg;

 private:
  BlenderConfig cfg_;
  torch::nn::Conv2d stem_{nullptr};
  ResidualBlock stage1_{nullptr}, stage2_{nullptr}, stage3_{nullptr};
  torch::nn::Conv2d lateral1_{nullptr}, lateral2_{nullptr};
  std::vector<StyleHead> heads_;
};
TORCH_MODULE(AttributeEncoder);

/// E_id: part-based sequence encoder. Per-frame conv trunk, max over time,
/// 16 horizontal strips (mean + max pooled), one linear map per strip.
class IdentityEncoderImpl : public torch::nn::Module {
 public:
  explicit IdentityEncoderImpl(const BlenderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& clips);  // [B,T,1,R,R] -> [B, P, C_id]

 private:
  BlenderConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::Tensor part_fc_;  // [P, C_trunk, C_id]
};
TORCH_MODULE(IdentityEncoder);

/// h: flattened g_id -> hidden -> [L, C] (plus `latent_avg`).
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  explicit ProjectionHeadImpl(const BlenderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& g_id);  // [B, P, C_id] -> [B, L, C]

  torch::Tensor latent_avg;

 private:
  BlenderConfig cfg_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(ProjectionHead);

/// Q: three non-linear layers over the channel axis of f_att + f_id, the
/// last one a logistic so q lies in [0, 1].
class ConfidenceEstimatorImpl : public torch::nn::Module {
 public:
  explicit ConfidenceEstimatorImpl(const BlenderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& summed);  // [B, L, T, C] -> same (or [B,L,1,C])

 private:
  BlenderConfig cfg_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, fc3_{nullptr};
};
TORCH_MODULE(ConfidenceEstimator);

struct BlendOutput {
  torch::Tensor w;      // [B, L, T, C]
  torch::Tensor f_att;  // [B, L, T, C]
  torch::Tensor f_id;   // [B, L, T, C]
  torch::Tensor q;      // broadcastable to w
};

/// The two-stream blender B(S_i, S_j). Copies share the underlying modules.
class AttIDBlender {
 public:
  AttIDBlender() = default;
  AttIDBlender(const BlenderConfig& cfg, uint64_t init_seed);

  const BlenderConfig& config() const { return cfg_; }

  AttributeEncoder e_att{nullptr};
  IdentityEncoder e_id{nullptr};
  ProjectionHead head{nullptr};
  ConfidenceEstimator confidence{nullptr};

  AttributeFeature extract_attributes(const data::SilhouetteSequence& s) const;
  IdentityEmbedding embed_identity(const data::SilhouetteSequence& s) const;
  AlignedIdentityFeature project_identity(const IdentityEmbedding& g, int64_t T) const;
  FusionConfidence estimate_confidence(const AttributeFeature& f_att, const AlignedIdentityFeature& f_id) const;
  /// w = q * f_att + (1 - q) * f_id. Throws ContractError if q leaves [0, 1].
  static generator::WPlusSequence fuse(const AttributeFeature& f_att, const AlignedIdentityFeature& f_id,
                                       const FusionConfidence& q);
  generator::WPlusSequence blend(const data::SilhouetteSequence& attribute,
                                 const data::SilhouetteSequence& identity) const;

  /// Batched, differentiable blend: attribute [B,T,1,R,R], identity
  /// [B,T',1,R,R].
  BlendOutput forward(const torch::Tensor& attribute, const torch::Tensor& identity) const;
  /// E_id on a batch of clips [B,T,1,R,R] -> [B, P, C_id]; requires a loaded encoder.
  torch::Tensor identity_embeddings(const torch::Tensor& clips) const;

  /// Anchors both streams at the generator's mean intermediate code.
  void set_latent_avg(const torch::Tensor& w_avg);

  /// E_id must be trained or loaded before use; it is frozen once ready.
  bool identity_ready() const { return *identity_ready_; }
  void mark_identity_ready();

  std::vector<torch::Tensor> trainable_parameters() const;  // E_att, h, Q
  /// Named parameters and buffers under the prefixes E_att., E_id., h., Q.
  std::vector<std::pair<std::string, torch::Tensor>> named_tensors() const;
  void to(torch::Dtype dtype);

 private:
  void check_frames(const data::SilhouetteSequence& s) const;

  BlenderConfig cfg_;
  std::shared_ptr<bool> identity_ready_ = std::make_shared<bool>(false);
};

/// Batch-hard triplet training of E_id on sequences labelled by
/// meta.identity_id. Leaves E_id frozen and marked ready.
struct IdentityTrainingConfig {
  int steps = 300;
  int identities_per_batch = 4;
  int sequences_per_identity = 2;
  int clip_length = 8;
  double margin = 0.2;
  double lr = 1e-3;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static IdentityTrainingConfig from_json(const nlohmann::json& j);
};

double train_identity_encoder(AttIDBlender& blender, const data::SequenceCollection& dataset,
                              const IdentityTrainingConfig& cfg);

/// Cosine similarity of two flattened embeddings.
double embedding_cosine(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace gaiteditor::blender
