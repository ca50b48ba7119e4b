// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS / WARN / FAIL line per criterion, then a summary.
// Property checks run first; the training pipeline (stage I on 32 synthetic
// sequences, stage II overfit on 4, a two-identity toy run through stage III)
// runs once and feeds every criterion that needs trained weights.

#include <CLI11.hpp>
#include <httplib.h>
#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/fixtures.hpp"
#include "gaiteditor/blender/attid_blender.hpp"
#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/data/sequence_io.hpp"
#include "gaiteditor/data/walker.hpp"
#include "gaiteditor/editor/catalog.hpp"
#include "gaiteditor/editor/latent_editor.hpp"
#include "gaiteditor/error.hpp"
#include "gaiteditor/gateway/augment.hpp"
#include "gaiteditor/gateway/service.hpp"
#include "gaiteditor/generator/latent_training.hpp"
#include "gaiteditor/losses/losses.hpp"
#include "gaiteditor/training/model_set.hpp"
#include "gaiteditor/training/orchestrator.hpp"

using namespace gaiteditor;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Reporting

enum class Verdict { Pass, Warn, Fail };

struct Line {
  std::string name;
  Verdict verdict;
  std::string detail;
};

std::vector<Line> g_lines;

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void report(const std::string& name, Verdict v, const std::string& detail, double seconds) {
  const char* tag = v == Verdict::Pass ? "PASS" : v == Verdict::Warn ? "WARN" : "FAIL";
  std::cout << tag << "  " << std::left << std::setw(24) << name << detail << " (" << fmt(seconds, 3) << " s)"
            << std::endl;
  g_lines.push_back({name, v, detail});
}

void report(const std::string& name, bool ok, const std::string& detail, double seconds) {
  report(name, ok ? Verdict::Pass : Verdict::Fail, detail, seconds);
}

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// Runs one criterion and turns an escaped exception into a FAIL line.
void guarded(const std::string& name, const std::function<void()>& body) {
  Timer t;
  try {
    body();
  } catch (const Error& e) {
    report(name, false, std::string("error: ") + e.kind() + ": " + e.what(), t.seconds());
  } catch (const std::exception& e) {
    report(name, false, std::string("error: ") + e.what(), t.seconds());
  }
}

torch::Tensor f64(const torch::Tensor& t) { return t.to(torch::kFloat64); }

// ---------------------------------------------------------------------------
// Gating

double frobenius_mean(const torch::Tensor& a, const torch::Tensor& b) {  // [T,1,H,W]
  auto x = f64(a).contiguous(), y = f64(b).contiguous();
  const auto T = x.size(0), n = x.numel() / T;
  const double* px = x.data_ptr<double>();
  const double* py = y.data_ptr<double>();
  double acc = 0.0;
  for (int64_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (int64_t k = 0; k < n; ++k) {
      const double d = px[t * n + k] - py[t * n + k];
      s += d * d;
    }
    acc += std::sqrt(s);
  }
  return acc / static_cast<double>(T);
}

double plain_mean(const torch::Tensor& a) {
  auto x = f64(a).contiguous();
  const double* p = x.data_ptr<double>();
  double s = 0.0;
  for (int64_t k = 0; k < x.numel(); ++k) s += p[k];
  return s / static_cast<double>(x.numel());
}

void check_gating() {
  Timer timer;
  // Stub networks with closed-form outputs: D is the clip mean, the
  // embedding is the flattened clip, the view distribution is (m, 1 - m).
  training::LossContext stub;
  stub.reconstruction = [](const torch::Tensor& h, const torch::Tensor& r) { return losses::pixel_loss(h, r); };
  stub.d_vid = [](const torch::Tensor& x) { return x.mean({1, 2, 3, 4}).unsqueeze(1).expand({-1, 3}); };
  stub.embed = [](const torch::Tensor& x) { return x.flatten(1).unsqueeze(1); };
  stub.view_probs = [](const torch::Tensor& x) {
    auto m = x.mean({1, 2, 3, 4});
    return torch::stack({m, 1.0 - m}, 1);
  };

  std::mt19937_64 rng(20261014);
  auto gen = at::detail::createCPUGenerator(20261014);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  int64_t n_distinct = 0, n_identical = 0, bad_zero = 0;
  double worst = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const int64_t B = 1 + static_cast<int64_t>(rng() % 4), T = 2 + static_cast<int64_t>(rng() % 4);
    auto si = torch::rand({B, T, 1, 8, 8}, gen, opts);
    auto sj = torch::rand({B, T, 1, 8, 8}, gen, opts);
    for (int64_t b = 0; b < B; ++b) {
      if (rng() % 2 == 0) sj[b].copy_(si[b]);
    }
    // Occasionally make S_hat equal S_i to hit the zero-loss branch.
    auto hat = (rng() % 10 == 0) ? si.clone() : torch::rand({B, T, 1, 8, 8}, gen, opts);
    auto t = training::pair_terms(si, sj, hat, stub);
    for (int64_t b = 0; b < B; ++b) {
      const double rec = t.rec[b].item<double>(), adv_b = t.adv_B[b].item<double>(),
                   adv_d = t.adv_Dvid[b].item<double>();
      const bool same = torch::equal(si[b], sj[b]);
      // Terms that apply to every pair.
      auto fj = f64(sj[b]).flatten(), fh = f64(hat[b]).flatten();
      const double cos = (fj * fh).sum().item<double>() / (fj.norm().item<double>() * fh.norm().item<double>());
      const double mh = plain_mean(hat[b]), mi = plain_mean(si[b]);
      auto kl = [](double p, double q) {
        p = std::max(p, losses::kProbabilityFloor);
        q = std::max(q, losses::kProbabilityFloor);
        return p * std::log(p / q);
      };
      const double view = kl(mh, mi) + kl(1.0 - mh, 1.0 - mi);
      worst = std::max({worst, std::abs(t.id[b].item<double>() - (1.0 - cos)), std::abs(t.view[b].item<double>() - view)});
      if (!same) {
        ++n_distinct;
        if (rec != 0.0 || adv_b != 0.0 || adv_d != 0.0) ++bad_zero;
        continue;
      }
      ++n_identical;
      const double want_rec = frobenius_mean(hat[b], si[b]);
      const double want_b = 0.5 * (mh - 1.0) * (mh - 1.0);
      const double want_d = 0.5 * (mi - 1.0) * (mi - 1.0) + 0.5 * mh * mh;
      worst = std::max({worst, std::abs(rec - want_rec), std::abs(adv_b - want_b), std::abs(adv_d - want_d)});
    }
  }

  // The same gate with real networks: distinct pairs must still give exact zeros.
  auto models = fixtures::tiny_editable(3);
  const auto ctx = training::LossContext::bind(models, losses::LossWeights{});
  int64_t real_bad = 0, real_distinct = 0;
  {
    torch::NoGradGuard ng;
    for (int it = 0; it < 20; ++it) {
      auto si = torch::rand({3, 8, 1, 32, 32}, gen);
      auto sj = torch::rand({3, 8, 1, 32, 32}, gen);
      sj[0].copy_(si[0]);
      auto t = training::pair_terms(si, sj, torch::rand({3, 8, 1, 32, 32}, gen), ctx);
      for (int64_t b = 1; b < 3; ++b, ++real_distinct) {
        if (t.rec[b].item<double>() != 0.0 || t.adv_B[b].item<double>() != 0.0 ||
            t.adv_Dvid[b].item<double>() != 0.0) {
          ++real_bad;
        }
      }
      if (!(t.rec[0].item<double>() > 0.0)) ++real_bad;
    }
  }
  const bool ok = bad_zero == 0 && real_bad == 0 && worst <= 1e-6 && n_distinct > 0 && n_identical > 0;
  report("gating", ok,
         "1000 stub batches: " + std::to_string(n_distinct) + " distinct pairs (" + std::to_string(bad_zero) +
             " nonzero), " + std::to_string(n_identical) + " identical, max closed-form error " + fmt(worst, 3) +
             "; real networks: " + std::to_string(real_distinct) + " distinct pairs (" + std::to_string(real_bad) +
             " violations)",
         timer.seconds());
}

// ---------------------------------------------------------------------------
// Fusion

void check_fusion() {
  Timer timer;
  std::mt19937_64 rng(7);
  auto gen = at::detail::createCPUGenerator(7);
  int64_t endpoint_bad = 0;
  double mid_err = 0.0;
  for (int it = 0; it < 100; ++it) {
    const int64_t L = 1 + rng() % 12, T = 1 + rng() % 24, C = 1 + rng() % 96;
    for (auto dtype : {torch::kFloat32, torch::kFloat64}) {
      const auto o = torch::TensorOptions().dtype(dtype);
      auto fa = torch::randn({L, T, C}, gen, o) * 3.0, fi = torch::randn({L, T, C}, gen, o) * 3.0;
      blender::AttributeFeature a{fa};
      blender::AlignedIdentityFeature i{fi};
      auto ones = blender::AttIDBlender::fuse(a, i, {torch::ones({L, T, C}, o)}).codes;
      auto zeros = blender::AttIDBlender::fuse(a, i, {torch::zeros({L, T, C}, o)}).codes;
      if (!torch::equal(ones, fa) || !torch::equal(zeros, fi)) ++endpoint_bad;
      if (dtype == torch::kFloat64) {
        auto half = blender::AttIDBlender::fuse(a, i, {torch::full({L, T, C}, 0.5, o)}).codes;
        mid_err = std::max(mid_err, (half - (fa + fi) / 2.0).abs().max().item<double>());
      }
    }
  }
  report("fusion", endpoint_bad == 0 && mid_err <= 1e-7,
         "100 shapes x {f32, f64}: endpoint mismatches " + std::to_string(endpoint_bad) + ", q=0.5 max error " +
             fmt(mid_err, 3),
         timer.seconds());
}

// ---------------------------------------------------------------------------
// Gradients

struct GradProbe {
  std::string name;
  std::function<torch::Tensor()> f;
  torch::Tensor x;  // contiguous double leaf
};

// Max relative error between autograd and central differences over `coords`
// sampled entries of x.
double grad_error(const GradProbe& p, int coords, std::mt19937_64& rng) {
  auto x = p.x;
  if (x.grad().defined()) x.mutable_grad().zero_();
  p.f().backward();
  auto g = x.grad().detach().contiguous().clone();
  torch::NoGradGuard ng;
  double* data = x.data_ptr<double>();
  const double* grad = g.data_ptr<double>();
  const double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < coords; ++k) {
    const int64_t i = static_cast<int64_t>(rng() % static_cast<uint64_t>(x.numel()));
    const double orig = data[i];
    data[i] = orig + h;
    const double fp = p.f().item<double>();
    data[i] = orig - h;
    const double fm = p.f().item<double>();
    data[i] = orig;
    const double num = (fp - fm) / (2.0 * h), ana = grad[i];
    worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-4}));
  }
  return worst;
}

torch::Tensor leaf(torch::Tensor t) { return t.to(torch::kFloat64).contiguous().detach().requires_grad_(true); }

void check_gradients() {
  Timer timer;
  auto gen = at::detail::createCPUGenerator(11);
  const auto o = torch::TensorOptions().dtype(torch::kFloat64);
  torch::manual_seed(11);

  // Loss networks at 8x8, all in double precision.
  losses::PerceptualExtractor v(7);
  v->to(torch::kFloat64);
  losses::VideoDiscriminator d(losses::VideoDiscriminatorConfig{});
  d->to(torch::kFloat64);
  losses::ViewClassifier c(losses::ViewClassifierConfig{});
  c->to(torch::kFloat64);
  // A minimal blender at the same 8x8 crop size.
  blender::BlenderConfig bc;
  bc.resolution = 8;
  bc.num_styles = 6;
  bc.w_dim = 16;
  bc.parts = 4;
  bc.id_channels = 8;
  bc.att_channels = {4, 4, 8, 8};
  bc.att_head_channels = 8;
  bc.id_trunk_channels = {4, 4, 8};
  bc.head_hidden = 16;
  bc.q_hidden = 8;
  blender::AttIDBlender b(bc, 5);
  b.set_latent_avg(torch::zeros({bc.w_dim}));
  b.to(torch::kFloat64);

  auto ref8 = torch::rand({1, 8, 1, 8, 8}, gen, o);
  auto hat8 = leaf(torch::rand({1, 8, 1, 8, 8}, gen, o));
  const losses::LossWeights w;

  auto d_weight = d->parameters().front();
  std::vector<GradProbe> probes;
  probes.push_back({"pix", [&] { return losses::pixel_loss(hat8, ref8).sum(); }, hat8});
  probes.push_back({"per", [&] { return losses::perceptual_loss(hat8, ref8, v).sum(); }, hat8});
  probes.push_back({"rec", [&] { return losses::reconstruction_loss(hat8, ref8, v, w).sum(); }, hat8});
  probes.push_back({"adv_B", [&] { return losses::lsgan_generator(d->forward(hat8)).sum(); }, hat8});
  probes.push_back({"adv_Dvid/param",
                    [&] { return losses::lsgan_discriminator(d->forward(ref8), d->forward(hat8.detach())).sum(); },
                    d_weight});
  probes.push_back({"adv_Dvid/input",
                    [&] { return losses::lsgan_discriminator(d->forward(ref8), d->forward(hat8)).sum(); }, hat8});
  probes.push_back({"id",
                    [&] { return losses::identity_loss(b.e_id->forward(ref8), b.e_id->forward(hat8)).sum(); },
                    hat8});
  probes.push_back({"view",
                    [&] {
                      return losses::viewpoint_loss(torch::softmax(c->forward(hat8), 1), torch::softmax(c->forward(ref8), 1))
                          .sum();
                    },
                    hat8});

  auto frames = leaf(torch::rand({3, 1, 8, 8}, gen, o));
  auto r_att = torch::randn({3, bc.num_styles, bc.w_dim}, gen, o);
  probes.push_back({"E_att/input", [&] { return (b.e_att->forward(frames) * r_att).sum(); }, frames});
  probes.push_back(
      {"E_att/param", [&] { return (b.e_att->forward(frames.detach()) * r_att).sum(); }, b.e_att->parameters().front()});
  auto g_id = leaf(torch::randn({2, bc.parts, bc.id_channels}, gen, o));
  auto r_h = torch::randn({2, bc.num_styles, bc.w_dim}, gen, o);
  probes.push_back({"h/input", [&] { return (b.head->forward(g_id) * r_h).sum(); }, g_id});
  probes.push_back({"h/param", [&] { return (b.head->forward(g_id.detach()) * r_h).sum(); }, b.head->parameters().front()});
  auto summed = leaf(torch::randn({2, bc.num_styles, 3, bc.w_dim}, gen, o));
  auto r_q = torch::randn({2, bc.num_styles, 3, bc.w_dim}, gen, o);
  probes.push_back({"Q/input", [&] { return (b.confidence->forward(summed) * r_q).sum(); }, summed});
  probes.push_back({"Q/param", [&] { return (b.confidence->forward(summed.detach()) * r_q).sum(); },
                    b.confidence->parameters().front()});

  std::mt19937_64 rng(3);
  double worst = 0.0;
  std::string worst_name, all;
  for (auto& p : probes) {
    if (!p.x.requires_grad()) p.x.set_requires_grad(true);
    const double e = grad_error(p, 24, rng);
    all += (all.empty() ? "" : " ") + p.name + "=" + fmt(e, 2);
    if (e >= worst) worst = e, worst_name = p.name;
  }
  report("gradients", worst < 1e-4,
         std::to_string(probes.size()) + " probes, max relative error " + fmt(worst, 3) + " (" + worst_name + "); " + all,
         timer.seconds());
}

// ---------------------------------------------------------------------------
// Augmentation statistics

void check_augmentation() {
  Timer timer;
  editor::LatentEditor ed(fixtures::tiny_editable(2));
  editor::DirectionCatalog cat;
  cat.generator_config_hash = ed.generator_hash();
  editor::SemanticDirection d;
  d.layer = 3;
  d.channel = 2;
  d.label = "bulk";
  d.curation_status = editor::CurationStatus::Kept;
  cat.add(d);
  data::SequenceCollection batch;
  for (int k = 0; k < 100; ++k) batch.push_back(fixtures::walker(32, 2, k, 90.0));

  bool ok = true;
  std::string detail;
  for (double p : {0.05, 0.1, 0.2}) {
    gateway::AugmentPolicy pol;
    pol.probability = p;
    pol.rng_seed = static_cast<uint64_t>(p * 1000);
    int64_t edited = 0, n = 0;
    for (int64_t step = 0; step < 100; ++step) {
      auto out = gateway::augment_batch(batch, pol, ed, cat, step);
      for (bool e : out.edited) edited += e, ++n;
    }
    const double rate = static_cast<double>(edited) / static_cast<double>(n);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    const bool in = std::abs(rate - p) <= 3.0 * sigma;
    ok = ok && in;
    detail += (detail.empty() ? "" : "; ") + std::string("p=") + fmt(p) + ": " + std::to_string(edited) + "/" +
              std::to_string(n) + " = " + fmt(rate) + " (3 sigma " + fmt(3 * sigma, 3) + ")";
  }
  report("augmentation", ok, detail, timer.seconds());
}

// ---------------------------------------------------------------------------
// Training pipeline

using Snapshot = std::vector<std::pair<std::string, torch::Tensor>>;

Snapshot snapshot_frozen(const training::ModelSet& m) {
  Snapshot out;
  for (auto& [n, t] : m.named_tensors()) {
    if (n.rfind("A.", 0) == 0 || n.rfind("G.", 0) == 0 || n.rfind("E_id.", 0) == 0) {
      out.emplace_back(n, t.detach().clone());
    }
  }
  return out;
}

double max_delta(const Snapshot& before, const training::ModelSet& m) {
  std::map<std::string, torch::Tensor> now;
  for (auto& [n, t] : m.named_tensors()) now[n] = t;
  double worst = 0.0;
  for (const auto& [n, t] : before) worst = std::max(worst, fixtures::max_abs(t, now.at(n)));
  return worst;
}

double max_delta_prefix(const Snapshot& before, const training::ModelSet& m, const std::string& prefix) {
  std::map<std::string, torch::Tensor> now;
  for (auto& [n, t] : m.named_tensors()) now[n] = t;
  double worst = 0.0;
  for (const auto& [n, t] : before) {
    if (n.rfind(prefix, 0) == 0) worst = std::max(worst, fixtures::max_abs(t, now.at(n)));
  }
  return worst;
}

Snapshot snapshot_prefix(const training::ModelSet& m, const std::string& prefix) {
  Snapshot out;
  for (auto& [n, t] : m.named_tensors()) {
    if (n.rfind(prefix, 0) == 0) out.emplace_back(n, t.detach().clone());
  }
  return out;
}

// E_id and C_view training exactly as train_stage would do it, run up front so
// the frozen-weight check can snapshot E_id before the first blender update.
void pretrain_auxiliary(training::ModelSet& m, const training::StageConfig& cfg, const data::SequenceCollection& ds) {
  if (!m.blender.identity_ready()) {
    auto id_cfg = cfg.identity_training;
    id_cfg.seed = data::derive_seed(cfg.rng_seed, 0x1d);
    blender::train_identity_encoder(m.blender, ds, id_cfg);
  }
  if (!m.view_ready) {
    auto view_cfg = cfg.view_training;
    view_cfg.seed = data::derive_seed(cfg.rng_seed, 0x7e);
    losses::train_view_classifier(m.c_view, ds, view_cfg);
    m.view_ready = true;
  }
  m.apply_frozen();
}

struct FrozenProbe {
  Snapshot frozen, e_att;
  double frozen_delta = -1.0, e_att_delta = -1.0;
};

// Runs a blender stage and measures parameter deltas after the first 50
// iterations.
training::StageResult run_stage(training::ModelSet m, const training::StageConfig& cfg,
                                const data::SequenceCollection& ds, const fs::path& metrics, FrozenProbe& probe,
                                const std::string& label) {
  pretrain_auxiliary(m, cfg, ds);
  probe.frozen = snapshot_frozen(m);
  probe.e_att = snapshot_prefix(m, "E_att.");
  Timer t;
  auto live = m;
  auto res = training::train_stage(m, cfg, ds, metrics.string(), [&](const training::IterationRecord& r) {
    if (r.step == 49) {
      probe.frozen_delta = max_delta(probe.frozen, live);
      probe.e_att_delta = max_delta_prefix(probe.e_att, live, "E_att.");
    }
    if (r.step % 250 == 0) {
      std::cout << "  .. " << label << " step " << r.step << " total " << fmt(r.total) << " rec " << fmt(r.bundle.rec)
                << " (" << fmt(t.seconds(), 4) << " s)" << std::endl;
    }
  });
  return res;
}

struct Pipeline {
  fs::path work;
  training::RunConfig rc;
  data::SequenceCollection corpus;
  std::optional<training::ModelSet> stage1, stage2;
  double meandiff_before = 0.0, meandiff_after = 0.0;
  FrozenProbe frozen2, frozen3;
  std::optional<training::ModelSet> toy3;
  data::SequenceCollection toy_test;
};

void train_stage1(Pipeline& p, bool reuse) {
  Timer t;
  auto m = training::ModelSet::create(p.rc.model, p.rc.init_seed);
  const auto data_mean = generator::dataset_mean_image(p.corpus);
  p.meandiff_before = (generator::generated_mean_image(m.gen, 256, 5) - data_mean).abs().mean().item<double>();
  const auto ckpt = p.work / "stage1.ckpt";
  if (reuse && fs::exists(ckpt)) {
    // Only the generator is taken, so the other networks may have changed
    // architecture since the checkpoint was written.
    m.gen = training::load_checkpoint(ckpt.string()).gen;
    m.stage_completed = 1;
    m.blender.set_latent_avg(m.gen.w_avg());
    m.apply_frozen();
    p.meandiff_after = (generator::generated_mean_image(m.gen, 256, 5) - data_mean).abs().mean().item<double>();
    std::cout << "  .. stage I loaded from " << ckpt.string() << std::endl;
    p.stage1 = m;
    return;
  }
  auto lc = p.rc.latent;
  lc.on_step = [&](int s, double d, double g) {
    if (s % 250 == 0) {
      std::cout << "  .. stage I step " << s << " d " << fmt(d) << " g " << fmt(g) << " (" << fmt(t.seconds(), 4)
                << " s)" << std::endl;
    }
  };
  generator::train_latent_space(m.gen, p.corpus, lc);
  m.stage_completed = 1;
  m.blender.set_latent_avg(m.gen.w_avg());
  p.meandiff_after = (generator::generated_mean_image(m.gen, 256, 5) - data_mean).abs().mean().item<double>();
  training::save_checkpoint(m, (p.work / "stage1.ckpt").string());
  p.stage1 = m;
}

void train_stage2(Pipeline& p) {
  const auto cfg = p.rc.stage(data::Stage::II);
  auto res = run_stage(*p.stage1, cfg, p.corpus, p.work / "stage2.metrics.jsonl", p.frozen2, "stage II");
  training::save_checkpoint(res.models, (p.work / "stage2.ckpt").string());
  p.stage2 = res.models;
}

// Two identities at 45 and 135 degrees; training variants and held-out
// variants differ in clothing bulk and gait phase.
std::pair<data::SequenceCollection, data::SequenceCollection> toy_corpus() {
  data::SequenceCollection train, test;
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> bulk(0.0, 1.0);
  const int64_t ids[2] = {1001, 2002};
  for (int i = 0; i < 2; ++i) {
    for (double view : {45.0, 135.0}) {
      for (int k = 0; k < 10; ++k) {
        data::WalkerSpec w;
        w.identity_seed = ids[i];
        w.view_deg = view;
        w.clothing_bulk = bulk(rng);
        w.start_frame = static_cast<int>(rng() % 16);
        auto s = data::render_walker(w);
        s.meta().identity_id = i == 0 ? "toy_a" : "toy_b";
        (k < 6 ? train : test).push_back(std::move(s));
      }
    }
  }
  return {train, test};
}

void train_toy(Pipeline& p) {
  auto [train, test] = toy_corpus();
  p.toy_test = test;
  // Fresh blender, D_vid and C_view on top of the stage I generator.
  auto m = training::ModelSet::create(p.rc.model, p.rc.init_seed + 1);
  m.gen = p.stage1->gen;
  m.blender.set_latent_avg(m.gen.w_avg());
  m.stage_completed = 1;
  m.apply_frozen();
  auto cfg2 = p.rc.stage(data::Stage::II);
  cfg2.subset = 0;
  cfg2.steps = 1000;
  FrozenProbe unused;
  auto s2 = run_stage(m, cfg2, train, p.work / "toy_stage2.metrics.jsonl", unused, "toy stage II");
  auto cfg3 = p.rc.stage(data::Stage::III);
  auto s3 = run_stage(s2.models, cfg3, train, p.work / "toy_stage3.metrics.jsonl", p.frozen3, "toy stage III");
  training::save_checkpoint(s3.models, (p.work / "toy_stage3.ckpt").string());
  p.toy3 = s3.models;
}

// ---------------------------------------------------------------------------
// Criteria on trained models

void check_frozen(const Pipeline& p) {
  Timer t;
  const bool ok = p.frozen2.frozen_delta == 0.0 && p.frozen3.frozen_delta == 0.0 && p.frozen2.e_att_delta > 0.0 &&
                  p.frozen3.e_att_delta > 0.0;
  report("frozen-weights", ok,
         "50-iteration prefix max |delta| of A, G, E_id: stage II " + fmt(p.frozen2.frozen_delta, 3) + ", stage III " +
             fmt(p.frozen3.frozen_delta, 3) + " (E_att moved " + fmt(p.frozen2.e_att_delta, 3) + " / " +
             fmt(p.frozen3.e_att_delta, 3) + ")",
         t.seconds());
}

void check_overfit(const Pipeline& p, double train_seconds) {
  Timer t;
  editor::LatentEditor ed(*p.stage2);
  const int subset = p.rc.stage(data::Stage::II).subset;
  double worst = std::numeric_limits<double>::infinity();
  std::string each;
  for (int k = 0; k < subset; ++k) {
    const auto rec = ed.invert(p.corpus[k]).reconstruction;
    const double db = training::psnr(rec.frames(), p.corpus[k].frames());
    worst = std::min(worst, db);
    each += (each.empty() ? "" : ", ") + fmt(db);
    data::save_sequence(rec, p.work / ("overfit_rec_" + std::to_string(k)));
  }
  report("overfit-inversion", worst >= 20.0,
         "PSNR on " + std::to_string(subset) + " training sequences [" + each + "] dB, min " + fmt(worst) +
             " (need >= 20); pipeline " + fmt(train_seconds / 60.0, 3) + " min",
         t.seconds());
}

void check_editing(const Pipeline& p) {
  Timer t;
  editor::LatentEditor ed(*p.stage2);
  const auto& dims = ed.models().gen.style_dims();
  std::mt19937_64 rng(99);
  int64_t violations = 0, checks = 0;
  for (int k = 0; k < 3; ++k) {
    const auto& s = p.corpus[4 + k];
    const auto inv = ed.invert(s);
    const auto styles = ed.models().gen.styles_for(inv.codes);
    for (int r = 0; r < 8; ++r, ++checks) {
      editor::SemanticDirection d;
      d.layer = static_cast<int>(rng() % dims.size());
      d.channel = static_cast<int>(rng() % static_cast<uint64_t>(dims[d.layer]));
      auto zero = ed.navigate(styles, d, 0.0);
      for (size_t l = 0; l < styles.styles.size(); ++l) violations += !torch::equal(zero.styles[l], styles.styles[l]);
      auto moved = ed.navigate(styles, d, 1.5);
      int64_t changed = 0;
      for (size_t l = 0; l < styles.styles.size(); ++l) {
        changed += (moved.styles[l] != styles.styles[l]).sum().item<int64_t>();
      }
      const bool right_place = !torch::equal(moved.styles[d.layer].select(1, d.channel),
                                             styles.styles[d.layer].select(1, d.channel));
      violations += changed != s.length() || !right_place;
    }
    violations += !ed.edit_appearance(s, editor::SemanticDirection{}, 0.0).identical_to(inv.reconstruction);
    violations += !ed.swap_attributes(s, s).identical_to(inv.reconstruction);
  }
  report("editing-identities", violations == 0,
         std::to_string(checks) + " directions on 3 sequences: alpha=0 identity, locality (one scalar per frame), "
                                  "swap(S,S) == inversion; violations " +
             std::to_string(violations),
         t.seconds());
}

// Frames of S_i | S_j | swap side by side, one row per pair.
void save_swap_montage(const std::vector<std::array<data::SilhouetteSequence, 3>>& rows, const fs::path& path) {
  if (rows.empty()) return;
  const int64_t R = rows[0][0].resolution();
  auto img = torch::zeros({static_cast<int64_t>(rows.size()) * R, 3 * R});
  for (size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < 3; ++c) img.narrow(0, r * R, R).narrow(1, c * R, R).copy_(rows[r][c].frame(0));
  }
  data::write_png(img, path);
}

void check_toy_swap(const Pipeline& p) {
  Timer t;
  editor::LatentEditor ed(*p.toy3);
  const auto& m = ed.models();
  std::mt19937_64 rng(5150);
  int view_ok = 0, id_ok = 0, n = 0;
  std::ofstream csv(p.work / "toy_swap_pairs.csv");
  csv << "attribute,identity,view_attr,view_swap,cos_to_identity,cos_to_attribute\n";
  std::vector<std::array<data::SilhouetteSequence, 3>> rows;
  const auto& test = p.toy_test;
  while (n < 50) {
    const auto& si = test[rng() % test.size()];
    const auto& sj = test[rng() % test.size()];
    if (si.meta().identity_id == sj.meta().identity_id || *si.meta().view_deg == *sj.meta().view_deg) continue;
    const auto hat = ed.swap_attributes(si, sj);
    const int64_t v_hat = losses::classify_viewpoint(m.c_view, hat).probs.argmax().item<int64_t>();
    const int64_t v_i = losses::classify_viewpoint(m.c_view, si).probs.argmax().item<int64_t>();
    const auto g_hat = m.blender.embed_identity(hat).g_id;
    const double to_j = blender::embedding_cosine(g_hat, m.blender.embed_identity(sj).g_id);
    const double to_i = blender::embedding_cosine(g_hat, m.blender.embed_identity(si).g_id);
    view_ok += v_hat == v_i;
    id_ok += to_j > to_i;
    csv << si.meta().identity_id << ',' << sj.meta().identity_id << ',' << v_i << ',' << v_hat << ',' << to_j << ','
        << to_i << '\n';
    if (rows.size() < 12) rows.push_back({si, sj, hat});
    ++n;
  }
  save_swap_montage(rows, p.work / "toy_swap_montage.png");
  const double vr = 100.0 * view_ok / n, ir = 100.0 * id_ok / n;
  Verdict v = Verdict::Pass;
  if (vr < 80.0 || ir < 80.0) v = Verdict::Warn;
  if (vr < 60.0 && ir < 60.0) v = Verdict::Fail;
  report("toy-swap", v,
         "50 held-out pairs: viewpoint transfer " + fmt(vr) + "%, identity preference " + fmt(ir) +
             "% (target 80/80, hard floor 60); diagnostics in toy_swap_pairs.csv, toy_swap_montage.png",
         t.seconds());
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {});
}

void check_round_trips(const Pipeline& p) {
  Timer t;
  std::vector<std::string> problems;
  // Checkpoint: tensors bit-exact, re-save byte-identical.
  const auto ck = p.work / "stage2.ckpt", ck2 = p.work / "stage2.resaved.ckpt";
  auto back = training::load_checkpoint(ck.string(), p.stage2->config.hash());
  training::save_checkpoint(back, ck2.string());
  if (!same_bytes(ck, ck2)) problems.push_back("checkpoint bytes differ");
  {
    auto a = p.stage2->named_tensors(), b = back.named_tensors();
    if (a.size() != b.size()) problems.push_back("checkpoint tensor count");
    for (size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
      if (a[k].first != b[k].first || !torch::equal(a[k].second, b[k].second)) {
        problems.push_back("tensor " + a[k].first);
        break;
      }
    }
  }

  // Catalog from a sweep of the trained generator.
  editor::LatentEditor ed(back);
  editor::SweepConfig sc;
  sc.top_k = 20;
  sc.style_samples = 256;
  editor::DirectionCatalog cat;
  cat.generator_config_hash = ed.generator_hash();
  for (auto& d : editor::sweep_directions(ed.models().gen, sc)) cat.add(d);
  cat.directions[0].curation_status = editor::CurationStatus::Kept;
  cat.directions[0].label = "bulk";
  cat.directions[0].polarity_note = "+ widens";
  const auto cp = p.work / "catalog.json", cp2 = p.work / "catalog.resaved.json";
  editor::catalog_save(cat, cp.string());
  auto cat_back = editor::catalog_load(cp.string());
  editor::catalog_save(cat_back, cp2.string());
  if (!(cat_back == cat)) problems.push_back("catalog differs after load");
  if (!same_bytes(cp, cp2)) problems.push_back("catalog bytes differ");

  // Service: identical /api/edit answers between catalog writes.
  gateway::EditService svc(ed, cat, (p.work / "service_catalog.json").string(), 2);
  const auto id = svc.register_sequence(p.corpus[0]);
  const int port = svc.start_background();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(300, 0);
  const auto& d0 = cat.directions[0];
  const json req{{"sequence_id", id}, {"layer", d0.layer}, {"channel", d0.channel}, {"alpha", 1.25}};
  auto edit = [&] {
    auto r = cli.Post("/api/edit", req.dump(), "application/json");
    if (!r || r->status != 200) throw IoError("/api/edit failed");
    auto j = json::parse(r->body);
    return std::make_pair(j["frames"].dump() + j["checksum"].dump(), j["catalog_version"].get<int64_t>());
  };
  auto [f1, v1] = edit();
  auto [f2, v2] = edit();
  auto st = cli.Post("/api/directions/" + std::to_string(cat.directions[1].layer) + "/" +
                         std::to_string(cat.directions[1].channel) + "/status",
                     json{{"status", "kept"}, {"label", "stride"}}.dump(), "application/json");
  if (!st || st->status != 200) problems.push_back("status write failed");
  auto [f3, v3] = edit();
  auto [f4, v4] = edit();
  svc.stop();
  if (f1 != f2 || f3 != f4) problems.push_back("edit responses differ between writes");
  if (f1 != f3) problems.push_back("edit output changed after an unrelated write");
  if (!(v1 == v2 && v3 == v4 && v3 == v1 + 1)) problems.push_back("catalog version sequence");

  std::string detail = "checkpoint re-save byte-identical, catalog (" + std::to_string(cat.directions.size()) +
                       " directions) byte-identical, /api/edit stable across a write (version " + std::to_string(v1) +
                       " -> " + std::to_string(v3) + ")";
  if (!problems.empty()) {
    detail = "problems:";
    for (auto& s : problems) detail += " [" + s + "]";
  }
  report("round-trips", problems.empty(), detail, t.seconds());
}

// Post-training measurements attached to individual component contracts.
void check_trained_properties(const Pipeline& p) {
  {
    Timer t;
    torch::NoGradGuard ng;
    const auto& g = p.stage1->gen;
    auto styles = g.affine_transform(g.broadcast_wplus({g.sample_w(1, 21)[0]}));
    auto moved = styles;
    const int late = g.num_styles() - 2;
    moved.styles[late] = styles.styles[late].clone();
    moved.styles[late][0] += 2.0;
    const double l2 = (g.synthesize(moved) - g.synthesize(styles)).norm().item<double>();
    report("derived/late-channel", l2 > 0.0, "one channel of style layer " + std::to_string(late) + " moved: L2 " + fmt(l2),
           t.seconds());
  }
  {
    Timer t;
    torch::NoGradGuard ng;
    std::vector<torch::Tensor> real;
    for (int k = 0; k < 32; ++k) real.push_back(p.corpus[k].frame(k % 16).unsqueeze(0));
    auto gen = at::detail::createCPUGenerator(1);
    const double s_real = p.stage1->gen.discriminate(torch::stack(real)).mean().item<double>();
    const double s_noise = p.stage1->gen.discriminate(torch::rand({32, 1, 64, 64}, gen)).mean().item<double>();
    report("derived/D_img", s_real > s_noise, "mean score real " + fmt(s_real) + " vs noise " + fmt(s_noise),
           t.seconds());
  }
  report("derived/mean-image", p.meandiff_after < p.meandiff_before,
         "generated vs dataset mean image |diff| " + fmt(p.meandiff_before) + " -> " + fmt(p.meandiff_after), 0.0);
  {
    Timer t;
    editor::LatentEditor ed(*p.stage2);
    const auto& m = ed.models();
    double real = 0.0, fake = 0.0;
    const int subset = p.rc.stage(data::Stage::II).subset;
    for (int k = 0; k < subset; ++k) {
      real += losses::video_discriminate(m.d_vid, p.corpus[k]).mean().item<double>();
      fake += losses::video_discriminate(m.d_vid, ed.invert(p.corpus[k]).reconstruction).mean().item<double>();
    }
    report("derived/D_vid", real > fake,
           "mean score real " + fmt(real / subset) + " vs reconstructed " + fmt(fake / subset), t.seconds());

    auto a = fixtures::walker(64, 16, 31337, 90.0), b = fixtures::walker(64, 16, 4711, 90.0);
    const double cos = blender::embedding_cosine(m.blender.embed_identity(a).g_id, m.blender.embed_identity(b).g_id);
    report("derived/E_id", cos < 1.0, "cosine of two identities " + fmt(cos, 6), 0.0);

    const double asym = (m.blender.blend(a, b).codes - m.blender.blend(b, a).codes).norm().item<double>();
    report("derived/blend-order", asym > 0.0, "|B(Si,Sj) - B(Sj,Si)| " + fmt(asym), 0.0);

    int hits = 0;
    const int bin90 = m.c_view->config().bin_for(90.0);
    for (int k = 0; k < 20; ++k) {
      data::WalkerSpec w;
      w.identity_seed = 900000 + k;
      w.view_deg = 90.0;
      w.start_frame = k % 16;
      w.clothing_bulk = (k % 5) / 4.0;
      hits += losses::classify_viewpoint(m.c_view, data::render_walker(w)).probs.argmax().item<int64_t>() == bin90;
    }
    report("derived/C_view-90", hits >= 18, std::to_string(hits) + "/20 held-out 90 degree walkers in the 90 bin", 0.0);
  }
  {
    Timer t;
    editor::LatentEditor ed(*p.stage2);
    const auto& g = ed.models().gen;
    editor::SweepConfig sc;
    sc.top_k = 20;
    sc.style_samples = 256;
    const auto dirs = editor::sweep_directions(g, sc);
    const auto styles = g.styles_for(ed.invert(p.corpus[0]).codes);
    int monotone = 0;
    std::string first;
    for (const auto& d : dirs) {
      std::vector<double> fg;
      for (int k = 0; k <= 6; ++k) {
        const double alpha = d.alpha_range.first + (d.alpha_range.second - d.alpha_range.first) * k / 6.0;
        torch::NoGradGuard ng;
        auto frames = g.synthesize_frames(editor::navigate_styles(g, styles, d, alpha)).squeeze(1);
        fg.push_back(editor::mean_foreground(data::SilhouetteSequence(frames.clamp(0.0, 1.0))));
      }
      bool up = true, down = true;
      for (size_t k = 1; k < fg.size(); ++k) up = up && fg[k] > fg[k - 1], down = down && fg[k] < fg[k - 1];
      if (up || down) {
        if (monotone++ == 0) first = "<" + std::to_string(d.layer) + "," + std::to_string(d.channel) + ">";
      }
    }
    report("derived/sweep-monotone", monotone > 0,
           std::to_string(monotone) + "/" + std::to_string(dirs.size()) +
               " top directions change mean foreground monotonically" + (first.empty() ? "" : ", first " + first),
           t.seconds());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work", config = GAITEDITOR_DESK_CONFIG;
  bool quick = false, reuse = false;
  app.add_option("--work-dir", work, "Directory for checkpoints, logs and diagnostics");
  app.add_option("--config", config, "Run config for the training pipeline");
  app.add_flag("--quick", quick, "Property checks only; skip the training pipeline");
  app.add_flag("--reuse-stage1", reuse, "Load stage1.ckpt from the work dir when present");
  CLI11_PARSE(app, argc, argv);
  torch::set_num_threads(1);
  fs::create_directories(work);

  guarded("gating", check_gating);
  guarded("fusion", check_fusion);
  guarded("gradients", check_gradients);
  guarded("augmentation", check_augmentation);

  if (!quick) {
    Pipeline p;
    p.work = work;
    Timer pipeline_time;
    bool trained = false;
    guarded("pipeline", [&] {
      p.rc = training::RunConfig::load(config);
      p.corpus = p.rc.load_data();
      train_stage1(p, reuse);
      train_stage2(p);
      trained = true;
    });
    const double stage2_seconds = pipeline_time.seconds();
    if (trained) {
      guarded("overfit-inversion", [&] { check_overfit(p, stage2_seconds); });
      guarded("editing-identities", [&] { check_editing(p); });
      guarded("round-trips", [&] { check_round_trips(p); });
      guarded("derived", [&] { check_trained_properties(p); });
      bool toy = false;
      guarded("toy-swap", [&] {
        train_toy(p);
        toy = true;
      });
      if (toy) {
        guarded("toy-swap", [&] { check_toy_swap(p); });
        guarded("frozen-weights", [&] { check_frozen(p); });
      }
    }
  }

  int pass = 0, warn = 0, fail = 0;
  for (const auto& l : g_lines) {
    pass += l.verdict == Verdict::Pass;
    warn += l.verdict == Verdict::Warn;
    fail += l.verdict == Verdict::Fail;
  }
  std::cout << "summary: " << pass << " passed, " << warn << " warned, " << fail << " failed" << std::endl;
  return fail == 0 ? 0 : 1;
}
