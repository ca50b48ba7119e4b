// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/generator/latent_types.hpp"
#include "json.hpp"

namespace gaiteditor::generator {

struct GeneratorConfig {
  int resolution = 64;
  int z_dim = 512;
  int w_dim = 512;
  int mapping_layers = 2;
  double leaky_slope = 0.2;
  // Feature maps at resolution r: min(channel_base / r, channel_max).
  int channel_base = 1024;
  int channel_max = 128;
  int disc_channel_base = 512;
  int disc_channel_max = 128;
  bool noise = false;

  int num_styles() const;
  int channels_at(int res) const;
  int disc_channels_at(int res) const;
  void validate() const;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  /// Stable hash of the architecture-defining fields.
  std::string hash() const;
};

// M: `mapping_layers` fully connected blocks applied to z as drawn.
class MappingNetworkImpl : public torch::nn::Module {
 public:
  explicit MappingNetworkImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& z);  // [N, z_dim] -> [N, w_dim]

 private:
  std::vector<torch::nn::Linear> layers_;
  double slope_;
};
TORCH_MODULE(MappingNetwork);

// A: one affine map per style input, w row l -> s_l.
class AffineLayerImpl : public torch::nn::Module {
 public:
  AffineLayerImpl(const GeneratorConfig& cfg, const std::vector<int>& style_dims);
  /// [N, num_styles, w_dim] -> styles[l] of [N, C_style(l)].
  std::vector<torch::Tensor> forward(const torch::Tensor& wplus);
  torch::nn::Linear& layer(int l) { return layers_.at(l); }

 private:
  std::vector<torch::nn::Linear> layers_;
};
TORCH_MODULE(AffineLayer);

// Style-modulated convolution with optional weight demodulation and a 2x
// bilinear upsample in front.
class ModulatedConvImpl : public torch::nn::Module {
 public:
  ModulatedConvImpl(int in, int out, int kernel, bool demodulate, bool upsample);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& style);

  int in_channels() const { return in_; }

 private:
  int in_, out_, kernel_;
  bool demodulate_, upsample_;
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(ModulatedConv);

// G: learned 4x4 constant, then per resolution an upsampling conv and a
// conv, ending in a modulated 1x1 projection to one channel. Output is
// (tanh + 1) / 2, so always within [0, 1].
class SynthesisNetworkImpl : public torch::nn::Module {
 public:
  explicit SynthesisNetworkImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const std::vector<torch::Tensor>& styles, uint64_t const_seed = 0);

  /// Modulated input channels of each style layer, in style order.
  const std::vector<int>& style_dims() const { return style_dims_; }

 private:
  GeneratorConfig cfg_;
  torch::Tensor const_input_;
  std::vector<ModulatedConv> convs_;
  std::vector<torch::Tensor> noise_strength_;
  std::vector<int> style_dims_;
};
TORCH_MODULE(SynthesisNetwork);

// D_img: strided conv stack to a single realness score per frame.
class ImageDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ImageDiscriminatorImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames);  // [N, 1, R, R] -> [N]

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear fc_{nullptr}, out_{nullptr};
  double slope_;
};
TORCH_MODULE(ImageDiscriminator);

/// The generator stack M, A, G plus D_img and the tracked mean intermediate
/// code. Copies share the underlying modules.
class StyleGenerator {
 public:
  StyleGenerator() = default;
  /// Fresh random initialization seeded by `init_seed`.
  StyleGenerator(const GeneratorConfig& cfg, uint64_t init_seed);

  const GeneratorConfig& config() const { return cfg_; }
  int num_styles() const { return cfg_.num_styles(); }
  const std::vector<int>& style_dims() const { return synthesis.ptr()->style_dims(); }

  MappingNetwork mapping{nullptr};
  AffineLayer affine{nullptr};
  SynthesisNetwork synthesis{nullptr};
  ImageDiscriminator discriminator{nullptr};

  // Typed single-item operations.
  IntermediateCode map_noise(const NoiseVector& z) const;
  WPlusCode broadcast_wplus(const IntermediateCode& w) const;
  StyleCode affine_transform(const WPlusCode& wp) const;
  torch::Tensor synthesize(const StyleCode& s, uint64_t const_seed = 0) const;  // [R, R]
  data::SilhouetteSequence generate_sequence(const WPlusSequence& wps, uint64_t const_seed = 0) const;
  double discriminate_image(const torch::Tensor& frame) const;

  // Batched, differentiable paths used by training and editing.
  StyleCodeSequence styles_for(const WPlusSequence& wps) const;
  torch::Tensor synthesize_frames(const StyleCodeSequence& s, uint64_t const_seed = 0) const;  // [T,1,R,R]
  torch::Tensor generate_frames(const torch::Tensor& wplus, uint64_t const_seed = 0) const;   // [N,L,C] -> [N,1,R,R]
  torch::Tensor discriminate(const torch::Tensor& frames) const;                               // [N,1,R,R] -> [N]

  /// Draws `n` intermediate codes from seeded Gaussian noise.
  torch::Tensor sample_w(int64_t n, uint64_t seed) const;

  /// Mean of M(z) used as the inversion anchor.
  const torch::Tensor& w_avg() const { return *w_avg_; }
  void update_w_avg(int64_t samples, uint64_t seed);
  void set_w_avg(torch::Tensor w) { *w_avg_ = std::move(w); }

  /// Marks A and G frozen: their parameters stop requiring gradients and are
  /// excluded from `trainable_parameters()`.
  void freeze_synthesis();
  const std::set<std::string>& frozen() const { return *frozen_; }
  void set_frozen(const std::set<std::string>& names);

  std::vector<torch::Tensor> trainable_parameters() const;
  /// Named parameters and buffers under the prefixes M., A., G., D_img.
  std::vector<std::pair<std::string, torch::Tensor>> named_tensors() const;

  int64_t step() const { return *step_; }
  void set_step(int64_t s) { *step_ = s; }

  void to(torch::Dtype dtype);

 private:
  GeneratorConfig cfg_;
  std::shared_ptr<torch::Tensor> w_avg_ = std::make_shared<torch::Tensor>();
  std::shared_ptr<std::set<std::string>> frozen_ = std::make_shared<std::set<std::string>>();
  std::shared_ptr<int64_t> step_ = std::make_shared<int64_t>(0);
};

/// Shared utility: seeds the global torch RNG for deterministic module init.
void seed_everything(uint64_t seed);

}  // namespace gaiteditor::generator
