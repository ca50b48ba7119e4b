// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/losses/losses.hpp"

#include <cmath>
#include <random>

#include <ATen/CPUGeneratorImpl.h>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/data/walker.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::losses {
namespace F = torch::nn::functional;
namespace nn = torch::nn;
using json = nlohmann::json;

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t d = 0; d < t.dim(); ++d) s += (d ? "," : "") + std::to_string(t.size(d));
  return s + "]";
}

void check_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ShapeError(std::string(what) + ": shapes differ, " + shape_str(a) + " vs " + shape_str(b));
  }
}

void check_clips(const torch::Tensor& x, const char* what) {
  if (x.dim() != 5 || x.size(2) != 1) throw ShapeError(std::string(what) + " expects [B,T,1,H,W], got " + shape_str(x));
}

// Per-frame Frobenius norm over the trailing three axes, mean over frames.
torch::Tensor frame_norm_mean(const torch::Tensor& diff, int64_t B, int64_t T) {
  return torch::linalg_vector_norm(diff.reshape({B, T, -1}), 2, {2}, false, c10::nullopt).mean(1);
}

torch::Tensor batch_of(const data::SilhouetteSequence& s) { return s.as_batch().unsqueeze(0); }

}  // namespace

// ---------------------------------------------------------------------------
// Config types

void LossWeights::validate() const {
  for (const auto& [k, v] : as_map()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("loss weight '" + k + "' must be non-negative");
  }
}

std::map<std::string, double> LossWeights::as_map() const {
  return {{"pix", pix}, {"per", per}, {"rec", rec}, {"adv_B", adv_B}, {"id", id}, {"view", view}};
}

json LossWeights::to_json() const { return json(as_map()); }

LossWeights LossWeights::from_json(const json& j) {
  LossWeights w;
  w.pix = j.value("pix", w.pix);
  w.per = j.value("per", w.per);
  w.rec = j.value("rec", w.rec);
  w.adv_B = j.value("adv_B", w.adv_B);
  w.id = j.value("id", w.id);
  w.view = j.value("view", w.view);
  w.validate();
  return w;
}

double LossBundle::operator[](const std::string& term) const {
  if (term == "rec") return rec;
  if (term == "adv_B") return adv_B;
  if (term == "adv_Dvid") return adv_Dvid;
  if (term == "id") return id;
  if (term == "view") return view;
  throw ValidationError("unknown loss term '" + term + "'");
}

json LossBundle::to_json() const {
  return json{{"rec", rec}, {"adv_B", adv_B}, {"adv_Dvid", adv_Dvid}, {"id", id}, {"view", view},
              {"weights", weights}, {"gated", gated_flags}};
}

json VideoDiscriminatorConfig::to_json() const {
  return json{{"clip_length", clip_length}, {"channels", channels}, {"leaky_slope", leaky_slope}};
}

VideoDiscriminatorConfig VideoDiscriminatorConfig::from_json(const json& j) {
  VideoDiscriminatorConfig c;
  c.clip_length = j.value("clip_length", c.clip_length);
  c.channels = j.value("channels", c.channels);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  if (c.clip_length < 1 || c.channels.empty()) throw ValidationError("invalid video discriminator config");
  return c;
}

int ViewClassifierConfig::bin_for(double view_deg) const {
  int best = 0;
  double best_d = 1e9;
  for (int k = 0; k < num_bins(); ++k) {
    double d = std::fmod(std::abs(view_deg - bins_deg[k]), 360.0);
    d = std::min(d, 360.0 - d);
    if (d < best_d) best_d = d, best = k;
  }
  return best;
}

json ViewClassifierConfig::to_json() const {
  return json{{"bins_deg", bins_deg}, {"channels", channels}, {"pool_grid", pool_grid}, {"leaky_slope", leaky_slope}};
}

ViewClassifierConfig ViewClassifierConfig::from_json(const json& j) {
  ViewClassifierConfig c;
  c.bins_deg = j.value("bins_deg", c.bins_deg);
  c.channels = j.value("channels", c.channels);
  c.pool_grid = j.value("pool_grid", c.pool_grid);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  if (c.bins_deg.size() < 2 || c.channels.empty() || c.pool_grid < 1) throw ValidationError("invalid view classifier config");
  return c;
}

json ViewTrainingConfig::to_json() const {
  return json{{"steps", steps}, {"batch", batch}, {"clip_length", clip_length}, {"lr", lr}, {"seed", seed},
              {"synthetic_per_view", synthetic_per_view}};
}

ViewTrainingConfig ViewTrainingConfig::from_json(const json& j) {
  ViewTrainingConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.clip_length = j.value("clip_length", c.clip_length);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.synthetic_per_view = j.value("synthetic_per_view", c.synthetic_per_view);
  if (c.synthetic_per_view < 0) throw ValidationError("synthetic_per_view must be >= 0");
  return c;
}

// ---------------------------------------------------------------------------
// Networks

PerceptualExtractorImpl::PerceptualExtractorImpl(uint64_t seed, std::vector<int> channels) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  int in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    auto conv = nn::Conv2d(nn::Conv2dOptions(in, channels[i], 5).stride(i == 0 ? 1 : 2).padding(2));
    torch::NoGradGuard ng;
    conv->weight.copy_(at::normal(0.0, std::sqrt(2.0 / (in * 25)), conv->weight.sizes(), gen));
    conv->bias.zero_();
    conv->weight.set_requires_grad(false);
    conv->bias.set_requires_grad(false);
    convs_.push_back(register_module("conv" + std::to_string(i), conv));
    in = channels[i];
  }
  eval();
}

std::vector<torch::Tensor> PerceptualExtractorImpl::forward(const torch::Tensor& frames) {
  std::vector<torch::Tensor> taps;
  auto x = frames;
  for (auto& conv : convs_) {
    x = F::leaky_relu(conv(x), F::LeakyReLUFuncOptions().negative_slope(0.2));
    taps.push_back(x);
  }
  return taps;
}

VideoDiscriminatorImpl::VideoDiscriminatorImpl(const VideoDiscriminatorConfig& cfg) : cfg_(cfg) {
  body_ = nn::Sequential();
  int in = 1;
  for (int c : cfg.channels) {
    body_->push_back(nn::Conv3d(nn::Conv3dOptions(in, c, {3, 4, 4}).stride({1, 2, 2}).padding({1, 1, 1})));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(cfg.leaky_slope)));
    in = c;
  }
  body_->push_back(nn::Conv3d(nn::Conv3dOptions(in, 1, 3).padding(1)));
  body_ = register_module("body", body_);
}

torch::Tensor VideoDiscriminatorImpl::forward(const torch::Tensor& clips) {
  check_clips(clips, "video discriminator");
  return body_->forward(clips.transpose(1, 2)).squeeze(1);
}

ViewClassifierImpl::ViewClassifierImpl(const ViewClassifierConfig& cfg) : cfg_(cfg) {
  body_ = nn::Sequential();
  int in = 1;
  for (int c : cfg.channels) {
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, c, 3).stride(2).padding(1)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(cfg.leaky_slope)));
    in = c;
  }
  body_->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(std::vector<int64_t>{cfg.pool_grid, cfg.pool_grid})));
  body_ = register_module("body", body_);
  fc_ = register_module("fc", nn::Linear(in * cfg.pool_grid * cfg.pool_grid, cfg.num_bins()));
}

torch::Tensor ViewClassifierImpl::forward(const torch::Tensor& clips) {
  check_clips(clips, "view classifier");
  const int64_t B = clips.size(0), T = clips.size(1);
  auto x = body_->forward(clips.reshape({B * T, 1, clips.size(3), clips.size(4)}));
  auto logits = fc_(x.flatten(1));
  return logits.reshape({B, T, -1}).mean(1);
}

double train_view_classifier(ViewClassifier& c_view, const data::SequenceCollection& dataset,
                             const ViewTrainingConfig& cfg) {
  std::vector<const data::SilhouetteSequence*> labelled;
  for (const auto& s : dataset) {
    if (s.meta().view_deg) labelled.push_back(&s);
  }
  if (labelled.empty()) throw ValidationError("view classifier training needs sequences with view_deg");
  data::SequenceCollection renders;
  const auto& bins = c_view->config().bins_deg;
  std::mt19937_64 render_rng(data::derive_seed(cfg.seed, 0x5e7d));
  for (int k = 0; k < cfg.synthetic_per_view; ++k) {
    for (double view : bins) {
      data::WalkerSpec w;
      w.identity_seed = static_cast<int64_t>(render_rng() >> 1);
      w.view_deg = view;
      w.clothing_bulk = data::unit_uniform(render_rng);
      w.start_frame = static_cast<int>(data::uniform_index(render_rng, static_cast<uint64_t>(w.stride_period_frames)));
      w.T = static_cast<int>(std::max<int64_t>(labelled[0]->length(), cfg.clip_length));
      w.resolution = static_cast<int>(labelled[0]->resolution());
      renders.push_back(data::render_walker(w));
    }
  }
  for (const auto& s : renders) labelled.push_back(&s);
  for (auto& p : c_view->parameters()) p.set_requires_grad(true);
  c_view->train();
  torch::optim::Adam opt(c_view->parameters(), torch::optim::AdamOptions(cfg.lr));
  std::mt19937_64 rng(data::derive_seed(cfg.seed, 0x71e3));
  double last = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<torch::Tensor> clips;
    std::vector<int64_t> labels;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& seq = *labelled[data::uniform_index(rng, labelled.size())];
      const int64_t len = std::min<int64_t>(cfg.clip_length, seq.length());
      const auto start = static_cast<int64_t>(data::uniform_index(rng, static_cast<uint64_t>(seq.length())));
      clips.push_back(data::temporal_clip(seq, start, len).as_batch());
      labels.push_back(c_view->config().bin_for(*seq.meta().view_deg));
    }
    auto loss = F::cross_entropy(c_view->forward(torch::stack(clips)), torch::tensor(labels));
    if (!std::isfinite(loss.item<double>())) throw DivergenceError("view classifier loss became non-finite");
    opt.zero_grad();
    loss.backward();
    opt.step();
    last = loss.item<double>();
  }
  for (auto& p : c_view->parameters()) p.set_requires_grad(false);
  c_view->eval();
  return last;
}

// ---------------------------------------------------------------------------
// Batch losses

torch::Tensor pixel_loss(const torch::Tensor& hat, const torch::Tensor& ref) {
  check_same(hat, ref, "pixel_loss");
  check_clips(hat, "pixel_loss");
  return frame_norm_mean(hat - ref, hat.size(0), hat.size(1));
}

torch::Tensor perceptual_loss(const torch::Tensor& hat, const torch::Tensor& ref, const PerceptualExtractor& v) {
  if (v.is_empty()) throw NotLoadedError("perceptual extractor not loaded");
  check_same(hat, ref, "perceptual_loss");
  check_clips(hat, "perceptual_loss");
  const int64_t B = hat.size(0), T = hat.size(1);
  auto flat = [&](const torch::Tensor& x) { return x.reshape({B * T, 1, x.size(3), x.size(4)}); };
  auto a = v.ptr()->forward(flat(hat));
  auto b = v.ptr()->forward(flat(ref));
  auto total = torch::zeros({B}, hat.options());
  for (size_t k = 0; k < a.size(); ++k) total = total + frame_norm_mean(a[k] - b[k], B, T);
  return total;
}

torch::Tensor reconstruction_loss(const torch::Tensor& hat, const torch::Tensor& ref, const PerceptualExtractor& v,
                                  const LossWeights& weights) {
  return weights.pix * pixel_loss(hat, ref) + weights.per * perceptual_loss(hat, ref, v);
}

torch::Tensor lsgan_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  const int64_t B = real_scores.size(0);
  return 0.5 * (real_scores.reshape({B, -1}) - 1).square().mean(1) +
         0.5 * fake_scores.reshape({fake_scores.size(0), -1}).square().mean(1);
}

torch::Tensor lsgan_generator(const torch::Tensor& fake_scores) {
  return 0.5 * (fake_scores.reshape({fake_scores.size(0), -1}) - 1).square().mean(1);
}

torch::Tensor identity_loss(const torch::Tensor& g_ref, const torch::Tensor& g_hat, IdentityCosine mode) {
  check_same(g_ref, g_hat, "identity_loss");
  const double eps = 1e-12;
  if (mode == IdentityCosine::Flattened) {
    auto a = g_ref.flatten(1), b = g_hat.flatten(1);
    return 1 - (a * b).sum(1) / (a.norm(2, 1) * b.norm(2, 1)).clamp_min(eps);
  }
  return 1 - ((g_ref * g_hat).sum(2) / (g_ref.norm(2, 2) * g_hat.norm(2, 2)).clamp_min(eps)).mean(1);
}

torch::Tensor viewpoint_loss(const torch::Tensor& p_hat, const torch::Tensor& p_ref) {
  check_same(p_hat, p_ref, "viewpoint_loss");
  auto p = p_hat.clamp_min(kProbabilityFloor), q = p_ref.clamp_min(kProbabilityFloor);
  return (p * (p.log() - q.log())).sum(1);
}

// ---------------------------------------------------------------------------
// Sequence-level operations

double pixel_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& ref) {
  torch::NoGradGuard ng;
  return pixel_loss(batch_of(hat).to(torch::kFloat64), batch_of(ref).to(torch::kFloat64)).item<double>();
}

double perceptual_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& ref,
                       const PerceptualExtractor& v) {
  if (v.is_empty()) throw NotLoadedError("perceptual extractor not loaded");
  torch::NoGradGuard ng;
  const auto dtype = v.ptr()->parameters().front().scalar_type();
  return perceptual_loss(batch_of(hat).to(dtype), batch_of(ref).to(dtype), v).item<double>();
}

GatedLoss reconstruction_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& s_i,
                              const data::SilhouetteSequence& s_j, const PerceptualExtractor& v,
                              const LossWeights& weights) {
  if (!s_i.identical_to(s_j)) return {0.0, true};
  return {weights.pix * pixel_loss(hat, s_i) + weights.per * perceptual_loss(hat, s_i, v), false};
}

torch::Tensor video_discriminate(const VideoDiscriminator& d, const data::SilhouetteSequence& s) {
  if (d.is_empty()) throw NotLoadedError("video discriminator not loaded");
  if (s.length() < d.ptr()->clip_length()) {
    throw ValidationError("sequence of " + std::to_string(s.length()) + " frames is shorter than the clip length " +
                          std::to_string(d.ptr()->clip_length()) + "; loop-pad it with temporal_clip first");
  }
  torch::NoGradGuard ng;
  const auto dtype = d.ptr()->parameters().front().scalar_type();
  return d.ptr()->forward(batch_of(s).to(dtype))[0];
}

GatedLoss adv_loss_discriminator(const VideoDiscriminator& d, const data::SilhouetteSequence& real,
                                 const data::SilhouetteSequence& fake, const data::SilhouetteSequence& s_i,
                                 const data::SilhouetteSequence& s_j) {
  if (!s_i.identical_to(s_j)) return {0.0, true};
  auto r = video_discriminate(d, real).unsqueeze(0), f = video_discriminate(d, fake).unsqueeze(0);
  return {lsgan_discriminator(r, f).item<double>(), false};
}

GatedLoss adv_loss_blender(const VideoDiscriminator& d, const data::SilhouetteSequence& fake,
                           const data::SilhouetteSequence& s_i, const data::SilhouetteSequence& s_j) {
  if (!s_i.identical_to(s_j)) return {0.0, true};
  return {lsgan_generator(video_discriminate(d, fake).unsqueeze(0)).item<double>(), false};
}

double identity_loss(const blender::IdentityEmbedding& ref, const blender::IdentityEmbedding& hat,
                     IdentityCosine mode) {
  auto a = ref.g_id.to(torch::kFloat64), b = hat.g_id.to(torch::kFloat64);
  const bool degenerate = mode == IdentityCosine::Flattened
                              ? (a.norm().item<double>() == 0.0 || b.norm().item<double>() == 0.0)
                              : ((a.norm(2, 1) == 0).any().item<bool>() || (b.norm(2, 1) == 0).any().item<bool>());
  if (degenerate) throw ContractError("identity embedding has zero norm");
  return identity_loss(a.unsqueeze(0), b.unsqueeze(0), mode).item<double>();
}

double identity_loss(const data::SilhouetteSequence& s_j, const data::SilhouetteSequence& hat,
                     const blender::AttIDBlender& b, IdentityCosine mode) {
  return identity_loss(b.embed_identity(s_j), b.embed_identity(hat), mode);
}

ViewDistribution classify_viewpoint(const ViewClassifier& c, const data::SilhouetteSequence& s) {
  if (c.is_empty()) throw NotLoadedError("view classifier not loaded");
  torch::NoGradGuard ng;
  const auto dtype = c.ptr()->parameters().front().scalar_type();
  return {torch::softmax(c.ptr()->forward(batch_of(s).to(dtype)), 1)[0]};
}

double viewpoint_loss(const ViewDistribution& p_hat, const ViewDistribution& p_ref) {
  return viewpoint_loss(p_hat.probs.to(torch::kFloat64).unsqueeze(0), p_ref.probs.to(torch::kFloat64).unsqueeze(0))
      .item<double>();
}

double viewpoint_loss(const data::SilhouetteSequence& hat, const data::SilhouetteSequence& s_i,
                      const ViewClassifier& c) {
  return viewpoint_loss(classify_viewpoint(c, hat), classify_viewpoint(c, s_i));
}

double total_loss(const LossBundle& bundle, const LossWeights& weights) {
  weights.validate();
  return weights.rec * bundle.rec + weights.adv_B * bundle.adv_B + weights.id * bundle.id +
         weights.view * bundle.view;
}

}  // namespace gaiteditor::losses
