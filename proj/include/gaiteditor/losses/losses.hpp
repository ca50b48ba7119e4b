// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gaiteditor/blender/attid_blender.hpp"
#include "gaiteditor/data/sequence.hpp"
#include "json.hpp"

namespace gaiteditor::losses {

/// Weights of the blender-side objective. `pix` and `per` combine into the
/// reconstruction term; the rest scale whole terms of the total.
struct LossWeights {
  double pix = 1.0;
  double per = 0.8;
  double rec = 1.0;
  double adv_B = 0.1;
  double id = 0.5;
  double view = 0.5;

  void validate() const;  // every weight >= 0
  std::map<std::string, double> as_map() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

enum class IdentityCosine { Flattened, PerPartMean };

struct LossBundle {
  double rec = 0.0, adv_B = 0.0, adv_Dvid = 0.0, id = 0.0, view = 0.0;
  std::map<std::string, double> weights;
  std::map<std::string, bool> gated_flags;

  double operator[](const std::string& term) const;
  nlohmann::json to_json() const;
};

struct ViewDistribution {
  torch::Tensor probs;  // [K]
};

struct GatedLoss {
  double value = 0.0;
  bool gated = false;
};

// ---------------------------------------------------------------------------
// Networks

/// Fixed random-weight conv pyramid (five taps). Parameters never train.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  explicit PerceptualExtractorImpl(uint64_t seed, std::vector<int> channels = {8, 16, 32, 32, 32});
  std::vector<torch::Tensor> forward(const torch::Tensor& frames);  // [N,1,H,W]

 private:
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(PerceptualExtractor);

struct VideoDiscriminatorConfig {
  int clip_length = 8;
  std::vector<int> channels = {16, 32, 64};
  double leaky_slope = 0.2;

  nlohmann::json to_json() const;
  static VideoDiscriminatorConfig from_json(const nlohmann::json& j);
};

/// D_vid: 3D-conv patch discriminator; one score per spatiotemporal patch.
class VideoDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit VideoDiscriminatorImpl(const VideoDiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& clips);  // [B,T,1,H,W] -> [B, T, h, w]
  int clip_length() const { return cfg_.clip_length; }

 private:
  VideoDiscriminatorConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(VideoDiscriminator);

struct ViewClassifierConfig {
  std::vector<double> bins_deg = {0, 45, 90, 135, 180};
  std::vector<int> channels = {16, 32, 64};
  int pool_grid = 4;  // trunk output is average-pooled to grid x grid, then flattened
  double leaky_slope = 0.2;

  int num_bins() const { return static_cast<int>(bins_deg.size()); }
  /// Index of the circularly nearest bin.
  int bin_for(double view_deg) const;
  nlohmann::json to_json() const;
  static ViewClassifierConfig from_json(const nlohmann::json& j);
};

/// C_view: per-frame conv net; the sequence logit is the mean frame logit.
class ViewClassifierImpl : public torch::nn::Module {
 public:
  explicit ViewClassifierImpl(const ViewClassifierConfig& cfg);
  torch::Tensor forward(const torch::Tensor& clips);  // [B,T,1,H,W] -> logits [B, K]
  const ViewClassifierConfig& config() const { return cfg_; }

 private:
  ViewClassifierConfig cfg_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ViewClassifier);

struct ViewTrainingConfig {
  int steps = 600;
  int batch = 8;
  int clip_length = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  /// Extra walker renders per view bin added to the labelled sequences, so
  /// the classifier sees more body shapes than a small corpus holds.
  int synthetic_per_view = 40;

  nlohmann::json to_json() const;
  static ViewTrainingConfig from_json(const nlohmann::json& j);
};

/// Cross-entropy training on meta.view_deg labels plus synthetic renders at
/// every bin (same resolution and length as the dataset); leaves C_view frozen.
double train_view_classifier(ViewClassifier& c_view, const data::SequenceCollection& dataset,
                             const ViewTrainingConfig& cfg);

// ---------------------------------------------------------------------------
// Differentiable batch losses. Sequences are [B,T,1,H,W]; results are one
// value per pair, shape [B].

torch::Tensor pixel_loss(const torch::Tensor& hat, const torch::Tensor& ref);
torch::Tensor perceptual_loss(const torch::Tensor& hat, const torch::Tensor& ref, const PerceptualExtractor& v);
/// weights.pix * pixel + weights.per * perceptual.
torch::Tensor reconstruction_loss(const torch::Tensor& hat, const torch::Tensor& ref, const PerceptualExtractor& v,
                                  const LossWeights& weights);
/// LSGAN terms on precomputed score maps [B, ...]; averaged per pair.
torch::Tensor lsgan_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
torch::Tensor lsgan_generator(const torch::Tensor& fake_scores);
/// 1 - cos on embeddings [B, P, C].
torch::Tensor identity_loss(const torch::Tensor& g_ref, const torch::Tensor& g_hat,
                            IdentityCosine mode = IdentityCosine::Flattened);
/// KL(p_hat || p_ref) with both floored at 1e-8; inputs [B, K].
torch::Tensor viewpoint_loss(const torch::Tensor& p_hat, const torch::Tensor& p_ref);

constexpr double kProbabilityFloor = 1e-8;

// ---------------------------------------------------------------------------
// Sequence-level operations

double pixel_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& ref);
double perceptual_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& ref,
                       const PerceptualExtractor& v);
/// Active only for a bit-identical pair (S_i == S_j); otherwise 0 and gated.
GatedLoss reconstruction_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& s_i,
                              const data::SilhouetteSequence& s_j, const PerceptualExtractor& v,
                              const LossWeights& weights = {});

/// Score map [T', h, w]. Throws ValidationError when T < clip length.
torch::Tensor video_discriminate(const VideoDiscriminator& d, const data::SilhouetteSequence& s);
GatedLoss adv_loss_discriminator(const VideoDiscriminator& d, const data::SilhouetteSequence& real,
                                 const data::SilhouetteSequence& fake, const data::SilhouetteSequence& s_i,
                                 const data::SilhouetteSequence& s_j);
GatedLoss adv_loss_blender(const VideoDiscriminator& d, const data::SilhouetteSequence& fake,
                           const data::SilhouetteSequence& s_i, const data::SilhouetteSequence& s_j);

double identity_loss(const data::SilhouetteSequence& s_j, const data::SilhouetteSequence& hat,
                     const blender::AttIDBlender& b, IdentityCosine mode = IdentityCosine::Flattened);
/// Same on embeddings; throws ContractError on a zero-norm embedding.
double identity_loss(const blender::IdentityEmbedding& ref, const blender::IdentityEmbedding& hat,
                     IdentityCosine mode = IdentityCosine::Flattened);

ViewDistribution classify_viewpoint(const ViewClassifier& c, const data::SilhouetteSequence& s);
double viewpoint_loss(const ViewDistribution& p_hat, const ViewDistribution& p_ref);
double viewpoint_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& s_i,
                      const ViewClassifier& c);

/// Σ weight[k] * bundle[k] over rec, adv_B, id, view.
double total_loss(const LossBundle& bundle, const LossWeights& weights);

}  // namespace gaiteditor::losses
