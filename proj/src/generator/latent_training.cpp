// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/generator/latent_training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::generator {
namespace F = torch::nn::functional;
using json = nlohmann::json;

json AugmentConfig::to_json() const {
  return json{{"hflip_p", hflip_p},     {"translate_p", translate_p}, {"max_translate", max_translate},
              {"cutout_p", cutout_p},   {"max_cutout", max_cutout}};
}

AugmentConfig AugmentConfig::from_json(const json& j) {
  AugmentConfig c;
  c.hflip_p = j.value("hflip_p", c.hflip_p);
  c.translate_p = j.value("translate_p", c.translate_p);
  c.max_translate = j.value("max_translate", c.max_translate);
  c.cutout_p = j.value("cutout_p", c.cutout_p);
  c.max_cutout = j.value("max_cutout", c.max_cutout);
  return c;
}

json LatentTrainingConfig::to_json() const {
  return json{{"steps", steps},   {"batch", batch},          {"lr", lr},
              {"mapping_lr_mul", mapping_lr_mul}, {"beta1", beta1}, {"beta2", beta2},
              {"seed", seed},     {"augment", augment.to_json()}, {"w_avg_samples", w_avg_samples}};
}

LatentTrainingConfig LatentTrainingConfig::from_json(const json& j) {
  LatentTrainingConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.mapping_lr_mul = j.value("mapping_lr_mul", c.mapping_lr_mul);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  if (j.contains("augment")) c.augment = AugmentConfig::from_json(j["augment"]);
  c.w_avg_samples = j.value("w_avg_samples", c.w_avg_samples);
  return c;
}

AugmentTrace draw_augment(const AugmentConfig& cfg, int resolution, std::mt19937_64& rng) {
  AugmentTrace t;
  t.flipped = data::unit_uniform(rng) < cfg.hflip_p;
  if (data::unit_uniform(rng) < cfg.translate_p && cfg.max_translate > 0) {
    const auto span = static_cast<uint64_t>(2 * cfg.max_translate + 1);
    t.shift_x = static_cast<int>(data::uniform_index(rng, span)) - cfg.max_translate;
    t.shift_y = static_cast<int>(data::uniform_index(rng, span)) - cfg.max_translate;
  }
  if (data::unit_uniform(rng) < cfg.cutout_p && cfg.max_cutout > 0) {
    t.cutout_size = 1 + static_cast<int>(data::uniform_index(rng, static_cast<uint64_t>(cfg.max_cutout)));
    const auto room = static_cast<uint64_t>(std::max(1, resolution - t.cutout_size + 1));
    t.cutout_x = static_cast<int>(data::uniform_index(rng, room));
    t.cutout_y = static_cast<int>(data::uniform_index(rng, room));
  }
  return t;
}

torch::Tensor apply_augment(const torch::Tensor& frames, const AugmentTrace& draw) {
  auto x = frames;
  if (draw.flipped) x = x.flip({3});
  if (draw.shift_x != 0 || draw.shift_y != 0) {
    const int64_t r = x.size(2), pad = std::max(std::abs(draw.shift_x), std::abs(draw.shift_y));
    auto padded = F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}));
    x = padded.narrow(2, pad - draw.shift_y, r).narrow(3, pad - draw.shift_x, r);
  }
  if (draw.cutout_size != 0) {
    const int64_t size = draw.cutout_size;
    auto mask = torch::ones({1, 1, x.size(2), x.size(3)}, x.options().requires_grad(false));
    mask.narrow(2, draw.cutout_y, std::min<int64_t>(size, x.size(2) - draw.cutout_y))
        .narrow(3, draw.cutout_x, std::min<int64_t>(size, x.size(3) - draw.cutout_x))
        .zero_();
    x = x * mask;
  }
  return x;
}

torch::Tensor dataset_mean_image(const data::SequenceCollection& dataset) {
  if (dataset.empty()) throw ValidationError("empty dataset");
  torch::Tensor sum;
  int64_t count = 0;
  for (const auto& s : dataset) {
    auto part = s.frames().to(torch::kFloat64).sum(0);
    sum = sum.defined() ? sum + part : part;
    count += s.length();
  }
  return sum / static_cast<double>(count);
}

torch::Tensor generated_mean_image(const StyleGenerator& gen, int n, uint64_t seed) {
  torch::NoGradGuard ng;
  auto w = gen.sample_w(n, seed);
  auto wplus = w.unsqueeze(1).expand({-1, gen.num_styles(), -1});
  return gen.generate_frames(wplus).to(torch::kFloat64).mean(0)[0];
}

LatentTrainingStats train_latent_space(StyleGenerator& gen, const data::SequenceCollection& dataset,
                                       const LatentTrainingConfig& cfg) {
  if (dataset.empty()) throw ValidationError("latent-space training needs a nonempty dataset");
  LatentTrainingStats stats;
  const int res = gen.config().resolution;
  std::vector<torch::Tensor> frames;
  for (const auto& s : dataset) {
    if (s.resolution() != res) throw ShapeError("dataset resolution does not match the generator");
    frames.push_back(s.as_batch());
  }
  const auto dtype = gen.w_avg().scalar_type();
  auto all = torch::cat(frames).to(dtype);
  const auto n_frames = static_cast<uint64_t>(all.size(0));

  std::vector<torch::Tensor> synth_params = gen.affine->parameters();
  for (auto& p : gen.synthesis->parameters()) synth_params.push_back(p);
  for (auto& p : synth_params) p.set_requires_grad(true);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(gen.mapping->parameters(),
                      std::make_unique<torch::optim::AdamOptions>(cfg.lr * cfg.mapping_lr_mul));
  groups.emplace_back(synth_params, std::make_unique<torch::optim::AdamOptions>(cfg.lr));
  for (auto& g : groups) {
    static_cast<torch::optim::AdamOptions&>(g.options()).betas({cfg.beta1, cfg.beta2});
  }
  torch::optim::Adam g_opt(std::move(groups), torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  torch::optim::Adam d_opt(gen.discriminator->parameters(),
                           torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));

  std::mt19937_64 rng(cfg.seed);
  const int L = gen.num_styles();
  auto fake_batch = [&](uint64_t seed) {
    auto z_gen = at::detail::createCPUGenerator(seed);
    auto z = torch::randn({cfg.batch, gen.config().z_dim}, z_gen, torch::TensorOptions().dtype(dtype));
    auto w = gen.mapping->forward(z);
    return gen.generate_frames(w.unsqueeze(1).expand({-1, L, -1}));
  };
  auto set_d_grad = [&](bool on) {
    for (auto& p : gen.discriminator->parameters()) p.set_requires_grad(on);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    // Discriminator update.
    auto idx = torch::empty({cfg.batch}, torch::kLong);
    for (int b = 0; b < cfg.batch; ++b) idx[b] = static_cast<int64_t>(data::uniform_index(rng, n_frames));
    auto real = all.index_select(0, idx);
    torch::Tensor fake;
    {
      torch::NoGradGuard ng;
      fake = fake_batch(data::derive_seed(cfg.seed, 2 * static_cast<uint64_t>(step)));
    }
    AugmentTrace draw = draw_augment(cfg.augment, res, rng);
    auto real_aug = apply_augment(real, draw);
    if (cfg.on_discriminator_input) {
      draw.real_raw = real;
      draw.real_augmented = real_aug;
      cfg.on_discriminator_input(draw);
    }
    set_d_grad(true);
    d_opt.zero_grad();
    auto d_real = gen.discriminator->forward(real_aug);
    auto d_fake = gen.discriminator->forward(apply_augment(fake, draw));
    auto d_loss = 0.5 * (d_real - 1.0).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
    d_loss.backward();
    d_opt.step();

    // Generator update.
    set_d_grad(false);
    g_opt.zero_grad();
    auto fake_g = fake_batch(data::derive_seed(cfg.seed, 2 * static_cast<uint64_t>(step) + 1));
    AugmentTrace g_draw = draw_augment(cfg.augment, res, rng);
    auto g_loss = 0.5 * (gen.discriminator->forward(apply_augment(fake_g, g_draw)) - 1.0).pow(2).mean();
    g_loss.backward();
    g_opt.step();

    stats.last_d_loss = d_loss.item<double>();
    stats.last_g_loss = g_loss.item<double>();
    if (!std::isfinite(stats.last_d_loss) || !std::isfinite(stats.last_g_loss)) {
      throw DivergenceError("latent-space training diverged at step " + std::to_string(step));
    }
    stats.steps_run = step + 1;
    if (cfg.on_step) cfg.on_step(step, stats.last_d_loss, stats.last_g_loss);
  }
  set_d_grad(true);
  if (cfg.steps > 0) gen.update_w_avg(cfg.w_avg_samples, data::derive_seed(cfg.seed, 0xa7a7));
  gen.set_step(gen.step() + stats.steps_run);
  gen.freeze_synthesis();
  return stats;
}

}  // namespace gaiteditor::generator
