// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/generator/style_generator.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "gaiteditor/config_hash.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::generator {
namespace F = torch::nn::functional;
using json = nlohmann::json;

namespace {

int log2_exact(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t d = 0; d < t.dim(); ++d) s += (d ? "," : "") + std::to_string(t.size(d));
  return s + "]";
}

}  // namespace

// ---------------------------------------------------------------------------
// GeneratorConfig

int GeneratorConfig::num_styles() const { return 2 * (log2_exact(resolution) - 1); }

int GeneratorConfig::channels_at(int res) const { return std::min(channel_base / res, channel_max); }

int GeneratorConfig::disc_channels_at(int res) const {
  return std::max(1, std::min(disc_channel_base / res, disc_channel_max));
}

void GeneratorConfig::validate() const {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0) {
    throw ValidationError("generator resolution must be a power of two >= 8");
  }
  if (z_dim <= 0 || w_dim <= 0 || mapping_layers <= 0) throw ValidationError("generator widths must be positive");
  if (channels_at(resolution) <= 0) throw ValidationError("channel_base too small for the output resolution");
}

json GeneratorConfig::to_json() const {
  return json{{"resolution", resolution},
              {"z_dim", z_dim},
              {"w_dim", w_dim},
              {"mapping_layers", mapping_layers},
              {"leaky_slope", leaky_slope},
              {"channel_base", channel_base},
              {"channel_max", channel_max},
              {"disc_channel_base", disc_channel_base},
              {"disc_channel_max", disc_channel_max},
              {"noise", noise}};
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
  GeneratorConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.z_dim = j.value("z_dim", c.z_dim);
  c.w_dim = j.value("w_dim", c.w_dim);
  c.mapping_layers = j.value("mapping_layers", c.mapping_layers);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.channel_base = j.value("channel_base", c.channel_base);
  c.channel_max = j.value("channel_max", c.channel_max);
  c.disc_channel_base = j.value("disc_channel_base", c.disc_channel_base);
  c.disc_channel_max = j.value("disc_channel_max", c.disc_channel_max);
  c.noise = j.value("noise", c.noise);
  c.validate();
  return c;
}

std::string GeneratorConfig::hash() const { return config_hash(to_json().dump()); }

// ---------------------------------------------------------------------------
// Modules

MappingNetworkImpl::MappingNetworkImpl(const GeneratorConfig& cfg) : slope_(cfg.leaky_slope) {
  int in = cfg.z_dim;
  for (int i = 0; i < cfg.mapping_layers; ++i) {
    layers_.push_back(register_module("fc" + std::to_string(i), torch::nn::Linear(in, cfg.w_dim)));
    in = cfg.w_dim;
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) {
  auto x = z;
  for (auto& fc : layers_) x = F::leaky_relu(fc(x), F::LeakyReLUFuncOptions().negative_slope(slope_));
  return x;
}

AffineLayerImpl::AffineLayerImpl(const GeneratorConfig& cfg, const std::vector<int>& style_dims) {
  for (size_t l = 0; l < style_dims.size(); ++l) {
    auto fc = register_module("fc" + std::to_string(l), torch::nn::Linear(cfg.w_dim, style_dims[l]));
    torch::NoGradGuard ng;
    fc->bias.fill_(1.0);
    layers_.push_back(fc);
  }
}

std::vector<torch::Tensor> AffineLayerImpl::forward(const torch::Tensor& wplus) {
  if (wplus.dim() != 3 || wplus.size(1) != static_cast<int64_t>(layers_.size())) {
    throw ShapeError("affine layer expects [N, " + std::to_string(layers_.size()) + ", w_dim], got " +
                     shape_str(wplus));
  }
  std::vector<torch::Tensor> styles;
  styles.reserve(layers_.size());
  for (size_t l = 0; l < layers_.size(); ++l) styles.push_back(layers_[l](wplus.select(1, l)));
  return styles;
}

ModulatedConvImpl::ModulatedConvImpl(int in, int out, int kernel, bool demodulate, bool upsample)
    : in_(in), out_(out), kernel_(kernel), demodulate_(demodulate), upsample_(upsample) {
  weight_ = register_parameter("weight", torch::randn({out, in, kernel, kernel}));
  bias_ = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor ModulatedConvImpl::forward(torch::Tensor x, const torch::Tensor& style) {
  const int64_t n = x.size(0);
  if (style.dim() != 2 || style.size(0) != n || style.size(1) != in_) {
    throw ShapeError("modulated conv expects style [" + std::to_string(n) + ", " + std::to_string(in_) +
                     "], got " + shape_str(style));
  }
  if (upsample_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  const double gain = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_));
  auto w = weight_ * gain;
  x = x * style.view({n, in_, 1, 1});
  auto y = F::conv2d(x, w, F::Conv2dFuncOptions().padding(kernel_ / 2));
  if (demodulate_) {
    // d[n, o] = (sum_{i,k} (w[o,i,k] * s[n,i])^2)^(-1/2)
    auto wsq = w.pow(2).sum({2, 3});  // [out, in]
    auto d = torch::rsqrt(torch::matmul(style.pow(2), wsq.t()) + 1e-8);
    y = y * d.view({n, out_, 1, 1});
  }
  return y + bias_.view({1, out_, 1, 1});
}

SynthesisNetworkImpl::SynthesisNetworkImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int c4 = cfg.channels_at(4);
  const_input_ = register_parameter("const", torch::randn({1, c4, 4, 4}));
  auto add = [&](int in, int out, int k, bool demod, bool up) {
    auto conv = register_module("conv" + std::to_string(convs_.size()), ModulatedConv(in, out, k, demod, up));
    convs_.push_back(conv);
    style_dims_.push_back(in);
  };
  add(c4, c4, 3, true, false);
  for (int res = 8; res <= cfg.resolution; res *= 2) {
    add(cfg.channels_at(res / 2), cfg.channels_at(res), 3, true, true);
    add(cfg.channels_at(res), cfg.channels_at(res), 3, true, false);
  }
  add(cfg.channels_at(cfg.resolution), 1, 1, false, false);
  if (cfg.noise) {
    for (size_t l = 0; l + 1 < convs_.size(); ++l) {
      noise_strength_.push_back(register_parameter("noise_strength" + std::to_string(l), torch::zeros({1})));
    }
  }
}

torch::Tensor SynthesisNetworkImpl::forward(const std::vector<torch::Tensor>& styles, uint64_t const_seed) {
  if (styles.size() != convs_.size()) {
    throw ShapeError("synthesis expects " + std::to_string(convs_.size()) + " style layers, got " +
                     std::to_string(styles.size()));
  }
  const int64_t n = styles.front().size(0);
  std::optional<at::Generator> gen;
  if (cfg_.noise) gen = at::detail::createCPUGenerator(const_seed);
  auto x = const_input_.expand({n, -1, -1, -1});
  const auto act = F::LeakyReLUFuncOptions().negative_slope(cfg_.leaky_slope);
  for (size_t l = 0; l + 1 < convs_.size(); ++l) {
    x = convs_[l](x, styles[l]);
    if (cfg_.noise) {
      auto noise = torch::randn({n, 1, x.size(2), x.size(3)}, *gen, x.options().requires_grad(false));
      x = x + noise_strength_[l] * noise;
    }
    x = F::leaky_relu(x, act);
  }
  auto rgb = convs_.back()(x, styles.back());
  return (torch::tanh(rgb) + 1.0) * 0.5;
}

ImageDiscriminatorImpl::ImageDiscriminatorImpl(const GeneratorConfig& cfg) : slope_(cfg.leaky_slope) {
  torch::nn::Sequential body;
  const auto act = torch::nn::LeakyReLUOptions().negative_slope(slope_);
  body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(1, cfg.disc_channels_at(cfg.resolution), 1)));
  body->push_back(torch::nn::LeakyReLU(act));
  for (int res = cfg.resolution; res > 4; res /= 2) {
    const int c = cfg.disc_channels_at(res), c_next = cfg.disc_channels_at(res / 2);
    body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)));
    body->push_back(torch::nn::LeakyReLU(act));
    body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c_next, 3).stride(2).padding(1)));
    body->push_back(torch::nn::LeakyReLU(act));
  }
  const int c4 = cfg.disc_channels_at(4);
  body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c4, c4, 3).padding(1)));
  body->push_back(torch::nn::LeakyReLU(act));
  body_ = register_module("body", body);
  fc_ = register_module("fc", torch::nn::Linear(c4 * 16, c4));
  out_ = register_module("out", torch::nn::Linear(c4, 1));
}

torch::Tensor ImageDiscriminatorImpl::forward(const torch::Tensor& frames) {
  auto x = body_->forward(frames).flatten(1);
  x = F::leaky_relu(fc_(x), F::LeakyReLUFuncOptions().negative_slope(slope_));
  return out_(x).squeeze(1);
}

// ---------------------------------------------------------------------------
// StyleGenerator

void seed_everything(uint64_t seed) { torch::manual_seed(seed); }

StyleGenerator::StyleGenerator(const GeneratorConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  seed_everything(init_seed);
  mapping = MappingNetwork(cfg_);
  synthesis = SynthesisNetwork(cfg_);
  affine = AffineLayer(cfg_, synthesis.ptr()->style_dims());
  discriminator = ImageDiscriminator(cfg_);
  update_w_avg(1024, init_seed ^ 0xa11ce);
}

IntermediateCode StyleGenerator::map_noise(const NoiseVector& z) const {
  if (z.z.dim() != 1 || z.z.size(0) != cfg_.z_dim) {
    throw ShapeError("noise vector must have length " + std::to_string(cfg_.z_dim) + ", got " + shape_str(z.z));
  }
  torch::NoGradGuard ng;
  return {mapping.ptr()->forward(z.z.unsqueeze(0)).squeeze(0)};
}

WPlusCode StyleGenerator::broadcast_wplus(const IntermediateCode& w) const {
  if (w.w.dim() != 1 || w.w.size(0) != cfg_.w_dim) {
    throw ShapeError("intermediate code must have length " + std::to_string(cfg_.w_dim) + ", got " +
                     shape_str(w.w));
  }
  return {w.w.unsqueeze(0).expand({num_styles(), cfg_.w_dim}).clone()};
}

StyleCode StyleGenerator::affine_transform(const WPlusCode& wp) const {
  if (wp.codes.dim() != 2 || wp.codes.size(0) != num_styles() || wp.codes.size(1) != cfg_.w_dim) {
    throw ShapeError("W+ code must be [" + std::to_string(num_styles()) + ", " + std::to_string(cfg_.w_dim) +
                     "], got " + shape_str(wp.codes));
  }
  torch::NoGradGuard ng;
  StyleCode out;
  for (auto& s : affine.ptr()->forward(wp.codes.unsqueeze(0))) out.styles.push_back(s.squeeze(0));
  return out;
}

torch::Tensor StyleGenerator::synthesize(const StyleCode& s, uint64_t const_seed) const {
  if (static_cast<int>(s.styles.size()) != num_styles()) {
    throw ShapeError("style code has " + std::to_string(s.styles.size()) + " layers, generator expects " +
                     std::to_string(num_styles()));
  }
  StyleCodeSequence seq;
  for (const auto& st : s.styles) seq.styles.push_back(st.unsqueeze(0));
  torch::NoGradGuard ng;
  return synthesize_frames(seq, const_seed)[0][0];
}

StyleCodeSequence StyleGenerator::styles_for(const WPlusSequence& wps) const {
  if (!wps.codes.defined() || wps.codes.dim() != 3 || wps.codes.size(0) != num_styles() ||
      wps.codes.size(2) != cfg_.w_dim) {
    throw ShapeError("W+ sequence must be [" + std::to_string(num_styles()) + ", T, " +
                     std::to_string(cfg_.w_dim) + "]");
  }
  if (wps.length() < 1) throw ValidationError("cannot generate an empty sequence");
  return {affine.ptr()->forward(wps.frame_major())};
}

torch::Tensor StyleGenerator::synthesize_frames(const StyleCodeSequence& s, uint64_t const_seed) const {
  const auto& dims = style_dims();
  if (s.styles.size() != dims.size()) throw ShapeError("style layer count mismatch");
  for (size_t l = 0; l < dims.size(); ++l) {
    if (s.styles[l].dim() != 2 || s.styles[l].size(1) != dims[l]) {
      throw ShapeError("style layer " + std::to_string(l) + " must have " + std::to_string(dims[l]) +
                       " channels, got " + shape_str(s.styles[l]));
    }
  }
  return synthesis.ptr()->forward(s.styles, const_seed);
}

torch::Tensor StyleGenerator::generate_frames(const torch::Tensor& wplus, uint64_t const_seed) const {
  return synthesis.ptr()->forward(affine.ptr()->forward(wplus), const_seed);
}

data::SilhouetteSequence StyleGenerator::generate_sequence(const WPlusSequence& wps, uint64_t const_seed) const {
  torch::NoGradGuard ng;
  auto frames = synthesize_frames(styles_for(wps), const_seed);
  return data::SilhouetteSequence(frames.squeeze(1).to(torch::kFloat32));
}

torch::Tensor StyleGenerator::discriminate(const torch::Tensor& frames) const {
  const int64_t r = cfg_.resolution;
  if (frames.dim() != 4 || frames.size(1) != 1 || frames.size(2) != r || frames.size(3) != r) {
    throw ShapeError("image discriminator expects [N, 1, " + std::to_string(r) + ", " + std::to_string(r) +
                     "], got " + shape_str(frames));
  }
  return discriminator.ptr()->forward(frames);
}

double StyleGenerator::discriminate_image(const torch::Tensor& frame) const {
  if (frame.dim() != 2) throw ShapeError("discriminate_image expects a [R, R] frame, got " + shape_str(frame));
  torch::NoGradGuard ng;
  return discriminate(frame.unsqueeze(0).unsqueeze(0).to(w_avg().scalar_type()))[0].item<double>();
}

torch::Tensor StyleGenerator::sample_w(int64_t n, uint64_t seed) const {
  auto gen = at::detail::createCPUGenerator(seed);
  auto z = torch::randn({n, cfg_.z_dim}, gen, torch::TensorOptions().dtype(w_avg_->defined() ? w_avg_->scalar_type()
                                                                                             : torch::kFloat32));
  torch::NoGradGuard ng;
  return mapping.ptr()->forward(z);
}

void StyleGenerator::update_w_avg(int64_t samples, uint64_t seed) { *w_avg_ = sample_w(samples, seed).mean(0); }

void StyleGenerator::freeze_synthesis() { set_frozen({"A", "G"}); }

void StyleGenerator::set_frozen(const std::set<std::string>& names) {
  *frozen_ = names;
  for (auto& p : affine->parameters()) p.set_requires_grad(!names.contains("A"));
  for (auto& p : synthesis->parameters()) p.set_requires_grad(!names.contains("G"));
  for (auto& p : mapping->parameters()) p.set_requires_grad(!names.contains("M"));
}

std::vector<torch::Tensor> StyleGenerator::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  auto take = [&](const std::string& name, const std::vector<torch::Tensor>& ps) {
    if (frozen_->contains(name)) return;
    out.insert(out.end(), ps.begin(), ps.end());
  };
  take("M", mapping->parameters());
  take("A", affine->parameters());
  take("G", synthesis->parameters());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> StyleGenerator::named_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("M.", *mapping);
  add("A.", *affine);
  add("G.", *synthesis);
  add("D_img.", *discriminator);
  out.emplace_back("w_avg", *w_avg_);
  return out;
}

void StyleGenerator::to(torch::Dtype dtype) {
  mapping->to(dtype);
  affine->to(dtype);
  synthesis->to(dtype);
  discriminator->to(dtype);
  *w_avg_ = w_avg_->to(dtype);
}

}  // namespace gaiteditor::generator
