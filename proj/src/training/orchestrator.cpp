// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/training/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gaiteditor/data/sequence_io.hpp"
#include "gaiteditor/data/walker.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::training {
using json = nlohmann::json;

namespace {

std::string stage_name(data::Stage s) {
  switch (s) {
    case data::Stage::I: return "I";
    case data::Stage::II: return "II";
    case data::Stage::III: return "III";
  }
  return "?";
}

void check_finite(const torch::Tensor& t, const std::string& what, int64_t step) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw DivergenceError(what + " became non-finite at step " + std::to_string(step));
  }
}

torch::Tensor select_rows(const torch::Tensor& x, const torch::Tensor& mask) {
  return x.index_select(0, mask.nonzero().flatten());
}

}  // namespace

// ---------------------------------------------------------------------------
// StageConfig

void StageConfig::validate() const {
  if (stage == data::Stage::I) throw ValidationError("blender stages are II and III");
  if (steps < 0) throw ValidationError("stage steps must be non-negative");
  if (batch_pairs <= 0) throw ValidationError("batch_pairs must be positive");
  if (clip_length <= 0) throw ValidationError("clip_length must be positive");
  if (!(lr >= 0.0) || !(d_lr >= 0.0)) throw ValidationError("learning rates must be non-negative");
  if (subset < 0) throw ValidationError("subset must be non-negative");
  weights.validate();
}

json StageConfig::to_json() const {
  return json{{"stage", static_cast<int>(stage)},
              {"steps", steps},
              {"batch_pairs", batch_pairs},
              {"clip_length", clip_length},
              {"lr", lr},
              {"d_lr", d_lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"weights", weights.to_json()},
              {"id_mode", id_mode == losses::IdentityCosine::Flattened ? "flattened" : "per_part_mean"},
              {"rng_seed", rng_seed},
              {"subset", subset},
              {"identity_training", identity_training.to_json()},
              {"view_training", view_training.to_json()}};
}

StageConfig StageConfig::from_json(const json& j) {
  StageConfig c;
  const int s = j.value("stage", 2);
  if (s != 2 && s != 3) throw ValidationError("stage must be 2 or 3, got " + std::to_string(s));
  c.stage = static_cast<data::Stage>(s);
  c.steps = j.value("steps", c.steps);
  c.batch_pairs = j.value("batch_pairs", c.batch_pairs);
  c.clip_length = j.value("clip_length", c.clip_length);
  c.lr = j.value("lr", c.lr);
  c.d_lr = j.value("d_lr", c.d_lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  if (j.contains("weights")) c.weights = losses::LossWeights::from_json(j["weights"]);
  const std::string mode = j.value("id_mode", std::string("flattened"));
  if (mode == "flattened") {
    c.id_mode = losses::IdentityCosine::Flattened;
  } else if (mode == "per_part_mean") {
    c.id_mode = losses::IdentityCosine::PerPartMean;
  } else {
    throw ValidationError("unknown id_mode '" + mode + "'");
  }
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.subset = j.value("subset", c.subset);
  if (j.contains("identity_training")) {
    c.identity_training = blender::IdentityTrainingConfig::from_json(j["identity_training"]);
  }
  if (j.contains("view_training")) c.view_training = losses::ViewTrainingConfig::from_json(j["view_training"]);
  c.validate();
  return c;
}

json IterationRecord::to_json() const {
  json j = bundle.to_json();
  j.erase("weights");
  j["step"] = step;
  j["total"] = total;
  j["pairs"] = pair_identical;
  return j;
}

// ---------------------------------------------------------------------------
// Loss assembly

LossContext LossContext::bind(const ModelSet& models, const losses::LossWeights& weights,
                              losses::IdentityCosine id_mode) {
  LossContext ctx;
  auto extractor = models.extractor;
  ctx.reconstruction = [extractor, weights](const torch::Tensor& hat, const torch::Tensor& ref) {
    return losses::reconstruction_loss(hat, ref, extractor, weights);
  };
  auto d = models.d_vid;
  ctx.d_vid = [d](const torch::Tensor& clips) { return d.ptr()->forward(clips); };
  auto b = models.blender;
  ctx.embed = [b](const torch::Tensor& clips) { return b.identity_embeddings(clips); };
  auto c = models.c_view;
  ctx.view_probs = [c](const torch::Tensor& clips) { return torch::softmax(c.ptr()->forward(clips), 1); };
  ctx.id_mode = id_mode;
  return ctx;
}

torch::Tensor identical_mask(const torch::Tensor& s_i, const torch::Tensor& s_j) {
  if (!s_i.sizes().equals(s_j.sizes())) return torch::zeros({s_i.size(0)}, torch::kBool);
  const int64_t B = s_i.size(0);
  auto out = torch::zeros({B}, torch::kBool);
  for (int64_t b = 0; b < B; ++b) out[b] = torch::equal(s_i[b], s_j[b]);
  return out;
}

PairTerms pair_terms(const torch::Tensor& s_i, const torch::Tensor& s_j, const torch::Tensor& s_hat,
                     const LossContext& ctx) {
  PairTerms t;
  t.identical = identical_mask(s_i, s_j);
  const int64_t B = s_i.size(0);
  auto zeros = torch::zeros({B}, s_hat.options());
  // Gated terms are evaluated only on identical pairs and scattered back, so
  // gated entries are exact zeros rather than products with a mask.
  auto gated = [&](const std::function<torch::Tensor(const torch::Tensor&)>& term) {
    if (!t.identical.any().item<bool>()) return zeros;
    auto idx = t.identical.nonzero().flatten();
    return zeros.index_put({idx}, term(idx));
  };
  t.rec = gated([&](const torch::Tensor& idx) {
    return ctx.reconstruction(s_hat.index_select(0, idx), s_i.index_select(0, idx));
  });
  t.adv_B = gated([&](const torch::Tensor& idx) { return losses::lsgan_generator(ctx.d_vid(s_hat.index_select(0, idx))); });
  t.adv_Dvid = gated([&](const torch::Tensor& idx) {
    return losses::lsgan_discriminator(ctx.d_vid(s_i.index_select(0, idx)),
                                       ctx.d_vid(s_hat.detach().index_select(0, idx)));
  });
  t.id = losses::identity_loss(ctx.embed(s_j), ctx.embed(s_hat), ctx.id_mode);
  t.view = losses::viewpoint_loss(ctx.view_probs(s_hat), ctx.view_probs(s_i));
  return t;
}

std::pair<torch::Tensor, torch::Tensor> stack_pairs(const data::PairBatch& batch) {
  if (batch.pairs.empty()) throw ValidationError("empty pair batch");
  std::vector<torch::Tensor> a, b;
  for (const auto& p : batch.pairs) {
    a.push_back(p.attribute.as_batch());
    b.push_back(p.identity.as_batch());
  }
  try {
    return {torch::stack(a), torch::stack(b)};
  } catch (const c10::Error&) {
    throw ShapeError("pair batch sequences differ in length or resolution; clip them first");
  }
}

torch::Tensor reconstruct(const ModelSet& models, const torch::Tensor& s_i, const torch::Tensor& s_j) {
  auto out = models.blender.forward(s_i, s_j);
  const int64_t B = out.w.size(0), L = out.w.size(1), T = out.w.size(2), C = out.w.size(3);
  auto frames = models.gen.generate_frames(out.w.permute({0, 2, 1, 3}).reshape({B * T, L, C}));
  return frames.reshape({B, T, 1, frames.size(2), frames.size(3)});
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(ModelSet models, StageConfig cfg) : models_(std::move(models)), cfg_(std::move(cfg)) {
  cfg_.validate();
  models_.apply_frozen();
  const auto opts = [&](double lr) { return torch::optim::AdamOptions(lr).betas({cfg_.beta1, cfg_.beta2}); };
  blender_opt_ = std::make_unique<torch::optim::Adam>(models_.blender.trainable_parameters(), opts(cfg_.lr));
  d_opt_ = std::make_unique<torch::optim::Adam>(models_.d_vid->parameters(), opts(cfg_.d_lr));
}

IterationRecord Trainer::run_iteration(const data::PairBatch& batch) {
  const auto t0 = std::chrono::steady_clock::now();
  IterationRecord rec;
  rec.step = models_.step;
  const auto [s_i, s_j] = stack_pairs(batch);
  const auto ctx = LossContext::bind(models_, cfg_.weights, cfg_.id_mode);
  const auto dtype = models_.gen.w_avg().scalar_type();
  const auto a = s_i.to(dtype), b = s_j.to(dtype);

  models_.blender.e_att->train();
  models_.d_vid->train();
  auto s_hat = reconstruct(models_, a, b);
  auto mask = identical_mask(a, b);
  for (int64_t k = 0; k < mask.size(0); ++k) rec.pair_identical.push_back(mask[k].item<bool>());
  const bool any_identical = mask.any().item<bool>();

  // D_vid update from the identical pairs only.
  double adv_d = 0.0;
  if (any_identical) {
    auto real = select_rows(a, mask), fake = select_rows(s_hat.detach(), mask);
    auto loss_d = losses::lsgan_discriminator(ctx.d_vid(real), ctx.d_vid(fake)).sum();
    check_finite(loss_d, "D_vid loss", rec.step);
    d_opt_->zero_grad();
    loss_d.backward();
    d_opt_->step();
    adv_d = loss_d.item<double>();
  }

  // Blender update; D_vid is only a critic here.
  for (auto& p : models_.d_vid->parameters()) p.set_requires_grad(false);
  PairTerms terms;
  try {
    const auto zeros = torch::zeros({mask.size(0)}, s_hat.options());
    terms.identical = mask;
    terms.rec = zeros, terms.adv_B = zeros;
    if (any_identical) {
      auto idx = mask.nonzero().flatten();
      terms.rec = zeros.index_put({idx}, ctx.reconstruction(s_hat.index_select(0, idx), a.index_select(0, idx)));
      terms.adv_B = zeros.index_put({idx}, losses::lsgan_generator(ctx.d_vid(s_hat.index_select(0, idx))));
    }
    terms.id = losses::identity_loss(ctx.embed(b), ctx.embed(s_hat), ctx.id_mode);
    terms.view = losses::viewpoint_loss(ctx.view_probs(s_hat), ctx.view_probs(a));
  } catch (...) {
    for (auto& p : models_.d_vid->parameters()) p.set_requires_grad(true);
    throw;
  }
  for (auto& p : models_.d_vid->parameters()) p.set_requires_grad(true);

  const auto& w = cfg_.weights;
  auto total = w.rec * terms.rec.sum() + w.adv_B * terms.adv_B.sum() + w.id * terms.id.sum() +
               w.view * terms.view.sum();
  check_finite(total, "blender loss", rec.step);
  blender_opt_->zero_grad();
  total.backward();
  blender_opt_->step();

  rec.bundle.rec = terms.rec.sum().item<double>();
  rec.bundle.adv_B = terms.adv_B.sum().item<double>();
  rec.bundle.adv_Dvid = adv_d;
  rec.bundle.id = terms.id.sum().item<double>();
  rec.bundle.view = terms.view.sum().item<double>();
  rec.bundle.weights = w.as_map();
  rec.bundle.gated_flags = {{"rec", !any_identical}, {"adv_B", !any_identical}, {"adv_Dvid", !any_identical},
                            {"id", false}, {"view", false}};
  rec.total = total.item<double>();
  ++models_.step;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Stage loop

StageResult train_stage(ModelSet models, const StageConfig& cfg, const data::SequenceCollection& dataset,
                        const std::optional<std::string>& metrics_path,
                        const std::function<void(const IterationRecord&)>& on_record) {
  cfg.validate();
  if (models.stage_completed < 1) {
    throw ValidationError("stage " + stage_name(cfg.stage) + " requires a stage I (generator) checkpoint");
  }
  if (cfg.stage == data::Stage::III && models.stage_completed < 2) {
    throw ValidationError("stage III requires a stage II checkpoint");
  }
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  data::SequenceCollection train =
      cfg.subset > 0 && cfg.subset < static_cast<int>(dataset.size())
          ? data::SequenceCollection(dataset.begin(), dataset.begin() + cfg.subset)
          : dataset;

  if (!models.blender.identity_ready()) {
    auto id_cfg = cfg.identity_training;
    id_cfg.seed = data::derive_seed(cfg.rng_seed, 0x1d);
    blender::train_identity_encoder(models.blender, dataset, id_cfg);
  }
  if (!models.view_ready) {
    auto view_cfg = cfg.view_training;
    view_cfg.seed = data::derive_seed(cfg.rng_seed, 0x7e);
    losses::train_view_classifier(models.c_view, dataset, view_cfg);
    models.view_ready = true;
  }
  // A fresh stage restarts the iteration counter; stage III continues from
  // the stage II weights verbatim.
  models.step = 0;
  models.apply_frozen();

  std::ofstream log;
  if (metrics_path) {
    log.open(*metrics_path, std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log '" + *metrics_path + "'");
  }
  Trainer trainer(models, cfg);
  StageResult result;
  for (int it = 0; it < cfg.steps; ++it) {
    const uint64_t seed = data::derive_seed(cfg.rng_seed, static_cast<uint64_t>(it));
    auto batch = data::sample_pairs(train, cfg.stage, cfg.batch_pairs, seed);
    batch = data::clip_pairs(batch, cfg.clip_length, data::derive_seed(seed, 0xc11b));
    auto record = trainer.run_iteration(batch);
    if (log) log << record.to_json().dump() << '\n' << std::flush;
    if (on_record) on_record(record);
    result.records.push_back(std::move(record));
  }
  result.models = trainer.models();
  result.models.stage_completed = std::max(result.models.stage_completed, static_cast<int>(cfg.stage));
  return result;
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.sizes().equals(b.sizes())) throw ShapeError("psnr inputs differ in shape");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------------
// RunConfig

json RunConfig::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) stages_json.push_back(s.to_json());
  return json{{"data", data},
              {"model", model.to_json()},
              {"latent", latent.to_json()},
              {"stages", stages_json},
              {"seeds", {{"init", init_seed}}},
              {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.data = j.value("data", json::object());
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    c.model.reconcile();
    if (j.contains("latent")) c.latent = generator::LatentTrainingConfig::from_json(j["latent"]);
    for (const auto& s : j.value("stages", json::array())) c.stages.push_back(StageConfig::from_json(s));
    if (j.contains("seeds")) c.init_seed = j["seeds"].value("init", c.init_seed);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open run config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError("run config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

const StageConfig& RunConfig::stage(data::Stage s) const {
  for (const auto& c : stages) {
    if (c.stage == s) return c;
  }
  throw ValidationError("run config has no entry for stage " + stage_name(s));
}

data::SequenceCollection RunConfig::load_data() const {
  const int res = model.generator.resolution;
  if (data.contains("dir")) return data::load_dataset(data["dir"].get<std::string>(), res);
  if (data.contains("synth")) {
    const json& s = data["synth"];
    data::CorpusSpec spec;
    spec.count = s.value("count", spec.count);
    spec.seed = s.value("seed", spec.seed);
    spec.T = s.value("T", spec.T);
    spec.resolution = res;
    spec.stride_period_frames = s.value("stride_period_frames", spec.stride_period_frames);
    spec.views = s.value("views", spec.views);
    spec.max_clothing_bulk = s.value("max_clothing_bulk", spec.max_clothing_bulk);
    return data::synthesize_corpus(spec);
  }
  throw ValidationError("run config 'data' needs a \"dir\" or \"synth\" entry");
}

}  // namespace gaiteditor::training
