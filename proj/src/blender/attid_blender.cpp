// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/blender/attid_blender.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "gaiteditor/config_hash.hpp"
#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::blender {
namespace F = torch::nn::functional;
namespace nn = torch::nn;
using json = nlohmann::json;

namespace {

int log2_exact(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

nn::Conv2d conv3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::LeakyReLU lrelu(double slope) { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(slope)); }

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t d = 0; d < t.dim(); ++d) s += (d ? "," : "") + std::to_string(t.size(d));
  return s + "]";
}

}  // namespace

// ---------------------------------------------------------------------------
// BlenderConfig

void BlenderConfig::validate() const {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0) {
    throw ValidationError("blender resolution must be a power of two >= 8");
  }
  if (num_styles < 3) throw ValidationError("blender needs at least three style rows");
  if (w_dim <= 0 || parts <= 0 || id_channels <= 0 || head_hidden <= 0 || q_hidden <= 0) {
    throw ValidationError("blender widths must be positive");
  }
  if (att_channels.size() != 4) throw ValidationError("att_channels needs four entries");
  if (id_trunk_channels.size() != 3) throw ValidationError("id_trunk_channels needs three entries");
}

int BlenderConfig::coarse_end() const { return static_cast<int>(std::lround(0.3 * num_styles)); }
int BlenderConfig::medium_end() const { return static_cast<int>(std::lround(0.7 * num_styles)); }

json BlenderConfig::to_json() const {
  return json{{"resolution", resolution},
              {"num_styles", num_styles},
              {"w_dim", w_dim},
              {"parts", parts},
              {"id_channels", id_channels},
              {"att_channels", att_channels},
              {"att_head_channels", att_head_channels},
              {"id_trunk_channels", id_trunk_channels},
              {"head_hidden", head_hidden},
              {"q_hidden", q_hidden},
              {"q_mode", q_mode == ConfidenceMode::Full ? "full" : "per_channel"},
              {"leaky_slope", leaky_slope}};
}

BlenderConfig BlenderConfig::from_json(const json& j) {
  BlenderConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.num_styles = j.value("num_styles", c.num_styles);
  c.w_dim = j.value("w_dim", c.w_dim);
  c.parts = j.value("parts", c.parts);
  c.id_channels = j.value("id_channels", c.id_channels);
  c.att_channels = j.value("att_channels", c.att_channels);
  c.att_head_channels = j.value("att_head_channels", c.att_head_channels);
  c.id_trunk_channels = j.value("id_trunk_channels", c.id_trunk_channels);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.q_hidden = j.value("q_hidden", c.q_hidden);
  const std::string mode = j.value("q_mode", std::string("full"));
  if (mode == "full") {
    c.q_mode = ConfidenceMode::Full;
  } else if (mode == "per_channel") {
    c.q_mode = ConfidenceMode::PerChannel;
  } else {
    throw ValidationError("unknown q_mode '" + mode + "'");
  }
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.validate();
  return c;
}

std::string BlenderConfig::hash() const { return config_hash(to_json().dump()); }

// ---------------------------------------------------------------------------
// Building blocks

ResidualBlockImpl::ResidualBlockImpl(int in, int out, int stride, double slope) : slope_(slope) {
  conv1_ = register_module("conv1", conv3(in, out, stride));
  conv2_ = register_module("conv2", conv3(out, out));
  shortcut_ = register_module("shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = F::leaky_relu(conv1_(x), F::LeakyReLUFuncOptions().negative_slope(slope_));
  y = conv2_(y) + shortcut_(x);
  return F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(slope_));
}

StyleHeadImpl::StyleHeadImpl(int in, int hidden, int spatial, int w_dim, double slope) {
  convs_ = nn::Sequential();
  const int downs = std::max(1, log2_exact(spatial));
  for (int i = 0; i < downs; ++i) {
    convs_->push_back(conv3(i == 0 ? in : hidden, hidden, spatial > 1 ? 2 : 1));
    convs_->push_back(lrelu(slope));
    spatial = std::max(1, spatial / 2);
  }
  convs_ = register_module("convs", convs_);
  fc_ = register_module("fc", nn::Linear(hidden, w_dim));
}

torch::Tensor StyleHeadImpl::forward(const torch::Tensor& x) { return fc_(convs_->forward(x).flatten(1)); }

// ---------------------------------------------------------------------------
// E_att

AttributeEncoderImpl::AttributeEncoderImpl(const BlenderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const auto& c = cfg.att_channels;
  const double s = cfg.leaky_slope;
  stem_ = register_module("stem", conv3(1, c[0]));
  stage1_ = register_module("stage1", ResidualBlock(c[0], c[1], 2, s));
  stage2_ = register_module("stage2", ResidualBlock(c[1], c[2], 2, s));
  stage3_ = register_module("stage3", ResidualBlock(c[2], c[3], 2, s));
  lateral1_ = register_module("lateral1", nn::Conv2d(nn::Conv2dOptions(c[1], c[3], 1)));
  lateral2_ = register_module("lateral2", nn::Conv2d(nn::Conv2dOptions(c[2], c[3], 1)));
  const int R = cfg.resolution;
  for (int l = 0; l < cfg.num_styles; ++l) {
    // Coarse rows read the deepest tap (R/8), fine rows the shallowest (R/2).
    const int spatial = l < cfg.coarse_end() ? R / 8 : (l < cfg.medium_end() ? R / 4 : R / 2);
    heads_.push_back(
        register_module("head" + std::to_string(l), StyleHead(c[3], cfg.att_head_channels, spatial, cfg.w_dim, s)));
  }
  latent_avg = register_buffer("latent_avg", torch::zeros({cfg.w_dim}));
}

torch::Tensor AttributeEncoderImpl::forward(const torch::Tensor& frames) {
  if (frames.dim() != 4 || frames.size(1) != 1 || frames.size(2) != cfg_.resolution ||
      frames.size(3) != cfg_.resolution) {
    throw ShapeError("attribute encoder expects [N,1," + std::to_string(cfg_.resolution) + "," +
                     std::to_string(cfg_.resolution) + "], got " + shape_str(frames));
  }
  auto x = F::leaky_relu(stem_(frames), F::LeakyReLUFuncOptions().negative_slope(cfg_.leaky_slope));
  auto c1 = stage1_(x);
  auto c2 = stage2_(c1);
  auto c3 = stage3_(c2);
  auto up = [](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  };
  auto p3 = c3;
  auto p2 = up(p3) + lateral2_(c2);
  auto p1 = up(p2) + lateral1_(c1);
  std::vector<torch::Tensor> rows;
  rows.reserve(heads_.size());
  for (int l = 0; l < cfg_.num_styles; ++l) {
    const auto& tap = l < cfg_.coarse_end() ? p3 : (l < cfg_.medium_end() ? p2 : p1);
    rows.push_back(heads_[l](tap));
  }
  return torch::stack(rows, 1) + latent_avg;
}

// ---------------------------------------------------------------------------
// E_id

IdentityEncoderImpl::IdentityEncoderImpl(const BlenderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const auto& c = cfg.id_trunk_channels;
  const double s = cfg.leaky_slope;
  // Pool down to roughly `parts` rows, at most twice.
  int pools = 0;
  for (int r = cfg.resolution; r / 2 >= cfg.parts && pools < 2; r /= 2) ++pools;
  trunk_ = nn::Sequential(conv3(1, c[0]), lrelu(s), conv3(c[0], c[0]), lrelu(s));
  if (pools > 0) trunk_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
  trunk_->push_back(conv3(c[0], c[1]));
  trunk_->push_back(lrelu(s));
  trunk_->push_back(conv3(c[1], c[1]));
  trunk_->push_back(lrelu(s));
  if (pools > 1) trunk_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
  trunk_->push_back(conv3(c[1], c[2]));
  trunk_->push_back(lrelu(s));
  trunk_->push_back(conv3(c[2], c[2]));
  trunk_ = register_module("trunk", trunk_);
  part_fc_ = register_parameter(
      "part_fc", torch::randn({cfg.parts, c[2], cfg.id_channels}) * std::sqrt(1.0 / c[2]));
}

torch::Tensor IdentityEncoderImpl::forward(const torch::Tensor& clips) {
  const int R = cfg_.resolution;
  if (clips.dim() != 5 || clips.size(2) != 1 || clips.size(3) != R || clips.size(4) != R || clips.size(1) < 1) {
    throw ShapeError("identity encoder expects [B,T,1," + std::to_string(R) + "," + std::to_string(R) + "], got " +
                     shape_str(clips));
  }
  const int64_t B = clips.size(0), T = clips.size(1);
  auto feat = trunk_->forward(clips.reshape({B * T, 1, R, R}));
  feat = feat.reshape({B, T, feat.size(1), feat.size(2), feat.size(3)});
  // Max over time makes the embedding independent of frame order.
  auto pooled = std::get<0>(feat.max(1));  // [B, C, h, w]
  const std::vector<int64_t> bins{cfg_.parts, 1};
  auto strips = F::adaptive_avg_pool2d(pooled, F::AdaptiveAvgPool2dFuncOptions(bins)) +
                F::adaptive_max_pool2d(pooled, F::AdaptiveMaxPool2dFuncOptions(bins));
  strips = strips.squeeze(-1);  // [B, C, P]
  return torch::einsum("bcp,pcd->bpd", {strips, part_fc_});
}

// ---------------------------------------------------------------------------
// h and Q

ProjectionHeadImpl::ProjectionHeadImpl(const BlenderConfig& cfg) : cfg_(cfg) {
  fc1_ = register_module("fc1", nn::Linear(cfg.parts * cfg.id_channels, cfg.head_hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg.head_hidden, cfg.num_styles * cfg.w_dim));
  latent_avg = register_buffer("latent_avg", torch::zeros({cfg.w_dim}));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& g_id) {
  if (g_id.dim() != 3 || g_id.size(1) != cfg_.parts || g_id.size(2) != cfg_.id_channels) {
    throw ShapeError("projection head expects [B," + std::to_string(cfg_.parts) + "," +
                     std::to_string(cfg_.id_channels) + "], got " + shape_str(g_id));
  }
  auto h = F::leaky_relu(fc1_(g_id.flatten(1)), F::LeakyReLUFuncOptions().negative_slope(cfg_.leaky_slope));
  return fc2_(h).reshape({g_id.size(0), cfg_.num_styles, cfg_.w_dim}) + latent_avg;
}

ConfidenceEstimatorImpl::ConfidenceEstimatorImpl(const BlenderConfig& cfg) : cfg_(cfg) {
  fc1_ = register_module("fc1", nn::Linear(cfg.w_dim, cfg.q_hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg.q_hidden, cfg.q_hidden));
  fc3_ = register_module("fc3", nn::Linear(cfg.q_hidden, cfg.w_dim));
}

torch::Tensor ConfidenceEstimatorImpl::forward(const torch::Tensor& summed) {
  if (summed.dim() != 4 || summed.size(3) != cfg_.w_dim) {
    throw ShapeError("confidence estimator expects [B,L,T," + std::to_string(cfg_.w_dim) + "], got " +
                     shape_str(summed));
  }
  auto x = cfg_.q_mode == ConfidenceMode::Full ? summed : summed.mean(2, /*keepdim=*/true);
  const auto opts = F::LeakyReLUFuncOptions().negative_slope(cfg_.leaky_slope);
  x = F::leaky_relu(fc1_(x), opts);
  x = F::leaky_relu(fc2_(x), opts);
  return torch::sigmoid(fc3_(x));
}

// ---------------------------------------------------------------------------
// AttIDBlender

AttIDBlender::AttIDBlender(const BlenderConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg.validate();
  torch::manual_seed(init_seed);
  e_att = AttributeEncoder(cfg);
  e_id = IdentityEncoder(cfg);
  head = ProjectionHead(cfg);
  confidence = ConfidenceEstimator(cfg);
}

void AttIDBlender::check_frames(const data::SilhouetteSequence& s) const {
  if (s.resolution() != cfg_.resolution) {
    throw ValidationError("sequence resolution " + std::to_string(s.resolution()) +
                          " does not match blender resolution " + std::to_string(cfg_.resolution));
  }
}

AttributeFeature AttIDBlender::extract_attributes(const data::SilhouetteSequence& s) const {
  check_frames(s);
  torch::NoGradGuard ng;
  auto codes = e_att.ptr()->forward(s.as_batch().to(e_att.ptr()->latent_avg.dtype()));  // [T, L, C]
  return {codes.transpose(0, 1).contiguous()};
}

IdentityEmbedding AttIDBlender::embed_identity(const data::SilhouetteSequence& s) const {
  check_frames(s);
  torch::NoGradGuard ng;
  return {identity_embeddings(s.as_batch().unsqueeze(0))[0]};
}

torch::Tensor AttIDBlender::identity_embeddings(const torch::Tensor& clips) const {
  if (!*identity_ready_) throw NotLoadedError("identity encoder not loaded");
  return e_id.ptr()->forward(clips.to(head.ptr()->latent_avg.dtype()));
}

AlignedIdentityFeature AttIDBlender::project_identity(const IdentityEmbedding& g, int64_t T) const {
  if (T < 1) throw ValidationError("project_identity needs T >= 1");
  torch::NoGradGuard ng;
  auto rows = head.ptr()->forward(g.g_id.unsqueeze(0))[0];  // [L, C]
  return {rows.unsqueeze(1).expand({rows.size(0), T, rows.size(1)}).contiguous()};
}

FusionConfidence AttIDBlender::estimate_confidence(const AttributeFeature& f_att,
                                                   const AlignedIdentityFeature& f_id) const {
  if (!f_att.f_att.sizes().equals(f_id.f_id.sizes())) {
    throw ShapeError("confidence inputs differ in shape: " + shape_str(f_att.f_att) + " vs " + shape_str(f_id.f_id));
  }
  torch::NoGradGuard ng;
  auto q = confidence.ptr()->forward((f_att.f_att + f_id.f_id).unsqueeze(0))[0];
  return {q.expand_as(f_att.f_att).contiguous()};
}

generator::WPlusSequence AttIDBlender::fuse(const AttributeFeature& f_att, const AlignedIdentityFeature& f_id,
                                            const FusionConfidence& q) {
  const auto& a = f_att.f_att;
  if (!a.sizes().equals(f_id.f_id.sizes()) || !a.sizes().equals(q.q.sizes())) {
    throw ShapeError("fuse inputs differ in shape: " + shape_str(a) + ", " + shape_str(f_id.f_id) + ", " +
                     shape_str(q.q));
  }
  if (q.q.numel() > 0 && (q.q.min().item<double>() < 0.0 || q.q.max().item<double>() > 1.0 ||
                          !torch::isfinite(q.q).all().item<bool>())) {
    throw ContractError("fusion confidence outside [0, 1]");
  }
  return {q.q * a + (1 - q.q) * f_id.f_id};
}

generator::WPlusSequence AttIDBlender::blend(const data::SilhouetteSequence& attribute,
                                             const data::SilhouetteSequence& identity) const {
  auto f_att = extract_attributes(attribute);
  auto f_id = project_identity(embed_identity(identity), attribute.length());
  auto q = estimate_confidence(f_att, f_id);
  return fuse(f_att, f_id, q);
}

BlendOutput AttIDBlender::forward(const torch::Tensor& attribute, const torch::Tensor& identity) const {
  const int R = cfg_.resolution;
  if (attribute.dim() != 5 || attribute.size(2) != 1 || attribute.size(3) != R || attribute.size(4) != R) {
    throw ShapeError("attribute batch expects [B,T,1,R,R], got " + shape_str(attribute));
  }
  if (identity.dim() != 5 || identity.size(0) != attribute.size(0)) {
    throw ShapeError("identity batch must be [B,T',1,R,R] with matching B, got " + shape_str(identity));
  }
  const int64_t B = attribute.size(0), T = attribute.size(1);
  const auto dtype = head.ptr()->latent_avg.dtype();
  BlendOutput out;
  out.f_att = e_att.ptr()->forward(attribute.reshape({B * T, 1, R, R}).to(dtype))
                  .reshape({B, T, cfg_.num_styles, cfg_.w_dim})
                  .transpose(1, 2);
  auto rows = head.ptr()->forward(identity_embeddings(identity));  // [B, L, C]
  out.f_id = rows.unsqueeze(2).expand({B, cfg_.num_styles, T, cfg_.w_dim});
  out.q = confidence.ptr()->forward(out.f_att + out.f_id);
  out.w = out.q * out.f_att + (1 - out.q) * out.f_id;
  return out;
}

void AttIDBlender::set_latent_avg(const torch::Tensor& w_avg) {
  torch::NoGradGuard ng;
  e_att->latent_avg.copy_(w_avg.reshape({cfg_.w_dim}));
  head->latent_avg.copy_(w_avg.reshape({cfg_.w_dim}));
}

void AttIDBlender::mark_identity_ready() {
  *identity_ready_ = true;
  for (auto& p : e_id->parameters()) p.set_requires_grad(false);
  e_id->eval();
}

std::vector<torch::Tensor> AttIDBlender::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const nn::Module* m : {static_cast<const nn::Module*>(e_att.get()), static_cast<const nn::Module*>(head.get()),
                              static_cast<const nn::Module*>(confidence.get())}) {
    auto ps = m->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> AttIDBlender::named_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("E_att.", *e_att);
  add("E_id.", *e_id);
  add("h.", *head);
  add("Q.", *confidence);
  return out;
}

void AttIDBlender::to(torch::Dtype dtype) {
  e_att->to(dtype);
  e_id->to(dtype);
  head->to(dtype);
  confidence->to(dtype);
}

// ---------------------------------------------------------------------------
// E_id training

json IdentityTrainingConfig::to_json() const {
  return json{{"steps", steps},
              {"identities_per_batch", identities_per_batch},
              {"sequences_per_identity", sequences_per_identity},
              {"clip_length", clip_length},
              {"margin", margin},
              {"lr", lr},
              {"seed", seed}};
}

IdentityTrainingConfig IdentityTrainingConfig::from_json(const json& j) {
  IdentityTrainingConfig c;
  c.steps = j.value("steps", c.steps);
  c.identities_per_batch = j.value("identities_per_batch", c.identities_per_batch);
  c.sequences_per_identity = j.value("sequences_per_identity", c.sequences_per_identity);
  c.clip_length = j.value("clip_length", c.clip_length);
  c.margin = j.value("margin", c.margin);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

double train_identity_encoder(AttIDBlender& blender, const data::SequenceCollection& dataset,
                              const IdentityTrainingConfig& cfg) {
  std::map<std::string, std::vector<size_t>> by_id;
  for (size_t k = 0; k < dataset.size(); ++k) by_id[dataset[k].meta().identity_id].push_back(k);
  std::vector<std::vector<size_t>> groups;
  for (auto& [id, members] : by_id) groups.push_back(members);
  if (groups.size() < 2) throw ValidationError("identity training needs at least two identities");

  auto& enc = blender.e_id;
  for (auto& p : enc->parameters()) p.set_requires_grad(true);
  enc->train();
  torch::optim::Adam opt(enc->parameters(), torch::optim::AdamOptions(cfg.lr));
  std::mt19937_64 rng(data::derive_seed(cfg.seed, 0x1d7a));
  const int n_ids = std::min<int>(cfg.identities_per_batch, static_cast<int>(groups.size()));
  double last = 0.0;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<size_t> order(groups.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<torch::Tensor> clips;
    std::vector<int64_t> labels;
    for (int g = 0; g < n_ids; ++g) {
      const auto& members = groups[order[g]];
      for (int k = 0; k < cfg.sequences_per_identity; ++k) {
        const auto& seq = dataset[members[data::uniform_index(rng, members.size())]];
        const int64_t len = std::min<int64_t>(cfg.clip_length, seq.length());
        const auto start = static_cast<int64_t>(data::uniform_index(rng, static_cast<uint64_t>(seq.length())));
        clips.push_back(data::temporal_clip(seq, start, len).as_batch());
        labels.push_back(g);
      }
    }
    auto embed = enc->forward(torch::stack(clips)).flatten(1);
    embed = F::normalize(embed, F::NormalizeFuncOptions().dim(1));
    auto lab = torch::tensor(labels);
    auto same = lab.unsqueeze(0) == lab.unsqueeze(1);
    auto dist = torch::cdist(embed, embed);
    // Batch-hard mining: farthest positive, nearest negative per anchor.
    auto hardest_pos = std::get<0>(torch::where(same, dist, torch::zeros_like(dist)).max(1));
    auto hardest_neg = std::get<0>(torch::where(same, torch::full_like(dist, 1e4), dist).min(1));
    auto loss = F::relu(hardest_pos - hardest_neg + cfg.margin).mean();
    if (!std::isfinite(loss.item<double>())) throw DivergenceError("identity encoder loss became non-finite");
    opt.zero_grad();
    loss.backward();
    opt.step();
    last = loss.item<double>();
  }
  blender.mark_identity_ready();
  return last;
}

double embedding_cosine(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.flatten().to(torch::kFloat64), y = b.flatten().to(torch::kFloat64);
  return (x.dot(y) / (x.norm() * y.norm()).clamp_min(1e-12)).item<double>();
}

}  // namespace gaiteditor::blender
