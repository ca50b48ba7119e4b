// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/editor/latent_editor.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::editor {

namespace {

void check_geometry(const generator::StyleGenerator& gen, const SemanticDirection& d) {
  if (d.label == "viewpoint") {
    throw PolicyError("viewpoint is not editable by navigation; use swap mode with a donor of the target view");
  }
  const auto& dims = gen.style_dims();
  if (d.layer < 0 || d.layer >= static_cast<int>(dims.size())) {
    throw ValidationError("direction layer " + std::to_string(d.layer) + " outside [0, " +
                          std::to_string(dims.size()) + ")");
  }
  if (d.channel < 0 || d.channel >= dims[d.layer]) {
    throw ValidationError("direction channel " + std::to_string(d.channel) + " outside [0, " +
                          std::to_string(dims[d.layer]) + ") for layer " + std::to_string(d.layer));
  }
}

// Random W+ codes broadcast from M(z): [n, L, C].
torch::Tensor random_wplus(const generator::StyleGenerator& gen, int n, uint64_t seed) {
  return gen.sample_w(n, seed).unsqueeze(1).expand({n, gen.num_styles(), gen.config().w_dim});
}

}  // namespace

generator::StyleCodeSequence navigate_styles(const generator::StyleGenerator& gen,
                                             const generator::StyleCodeSequence& styles, const SemanticDirection& d,
                                             double alpha) {
  check_geometry(gen, d);
  generator::StyleCodeSequence out;
  out.styles.reserve(styles.styles.size());
  for (const auto& s : styles.styles) out.styles.push_back(s.clone());
  if (alpha != 0.0) {
    torch::NoGradGuard ng;
    auto col = out.styles[d.layer].select(1, d.channel);
    col.add_(alpha);
  }
  return out;
}

LatentEditor::LatentEditor(training::ModelSet models, const std::optional<std::string>& expected_hash)
    : models_(std::move(models)) {
  if (models_.stage_completed < 2 || !models_.blender.identity_ready()) {
    throw NotLoadedError("editing needs a trained blender checkpoint (stage II or later)");
  }
  if (expected_hash && *expected_hash != models_.config.hash()) {
    throw ConfigMismatchError("model config hash " + models_.config.hash() + " does not match expected " +
                              *expected_hash);
  }
  models_.blender.e_att->eval();
}

std::string LatentEditor::generator_hash() const { return models_.gen.config().hash(); }

void LatentEditor::check_direction(const SemanticDirection& d) const { check_geometry(models_.gen, d); }

Inversion LatentEditor::invert(const data::SilhouetteSequence& s) const {
  auto codes = models_.blender.blend(s, s);
  return {codes, models_.gen.generate_sequence(codes)};
}

generator::StyleCodeSequence LatentEditor::navigate(const generator::StyleCodeSequence& styles,
                                                    const SemanticDirection& d, double alpha) const {
  return navigate_styles(models_.gen, styles, d, alpha);
}

data::SilhouetteSequence LatentEditor::edit_appearance(const data::SilhouetteSequence& s,
                                                       const SemanticDirection& d, double alpha) const {
  return edit_appearance(s, std::vector<std::pair<SemanticDirection, double>>{{d, alpha}});
}

data::SilhouetteSequence LatentEditor::edit_appearance(
    const data::SilhouetteSequence& s, const std::vector<std::pair<SemanticDirection, double>>& edits) const {
  for (const auto& edit : edits) check_direction(edit.first);
  torch::NoGradGuard ng;
  auto codes = models_.blender.blend(s, s);
  auto styles = models_.gen.styles_for(codes);
  for (const auto& [d, alpha] : edits) styles = navigate(styles, d, alpha);
  auto frames = models_.gen.synthesize_frames(styles);
  return data::SilhouetteSequence(frames.squeeze(1).to(torch::kFloat32));
}

data::SilhouetteSequence LatentEditor::swap_attributes(const data::SilhouetteSequence& attribute,
                                                       const data::SilhouetteSequence& identity) const {
  auto out = models_.gen.generate_sequence(models_.blender.blend(attribute, identity));
  data::SequenceMeta meta;
  meta.identity_id = identity.meta().identity_id;
  meta.view_deg = attribute.meta().view_deg;
  meta.attribute_tags = attribute.meta().attribute_tags;
  meta.attribute_tags.insert("edited");
  return data::SilhouetteSequence(out.frames(), std::move(meta));
}

std::vector<torch::Tensor> LatentEditor::style_std(int samples, uint64_t seed) const {
  torch::NoGradGuard ng;
  auto styles = models_.gen.affine.ptr()->forward(random_wplus(models_.gen, samples, seed));
  std::vector<torch::Tensor> out;
  for (auto& s : styles) out.push_back(s.std(0));
  return out;
}

std::vector<SemanticDirection> sweep_directions(const generator::StyleGenerator& gen, const SweepConfig& cfg) {
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> sigma;
  for (auto& s : gen.affine.ptr()->forward(random_wplus(gen, cfg.style_samples, cfg.seed))) {
    sigma.push_back(s.std(0));
  }
  auto base = gen.affine.ptr()->forward(random_wplus(gen, cfg.samples, data::derive_seed(cfg.seed, 0x5a11)));
  std::vector<SemanticDirection> out;
  const auto& dims = gen.style_dims();
  for (int l = 0; l < static_cast<int>(dims.size()); ++l) {
    for (int c = 0; c < dims[l]; ++c) {
      const double sg = std::max(sigma[l][c].item<double>(), 1e-6);
      // Plus and minus perturbations batched together.
      std::vector<torch::Tensor> styles;
      for (size_t k = 0; k < base.size(); ++k) {
        auto s = torch::cat({base[k], base[k]});
        if (static_cast<int>(k) == l) {
          auto col = s.select(1, c);
          col.narrow(0, 0, cfg.samples).add_(sg);
          col.narrow(0, cfg.samples, cfg.samples).sub_(sg);
        }
        styles.push_back(s);
      }
      auto frames = gen.synthesis.ptr()->forward(styles);
      auto diff = frames.narrow(0, 0, cfg.samples) - frames.narrow(0, cfg.samples, cfg.samples);
      SemanticDirection d;
      d.layer = l;
      d.channel = c;
      d.alpha_range = {-3.0 * sg, 3.0 * sg};
      d.saliency = diff.abs().mean().item<double>() / (2.0 * sg);
      out.push_back(d);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SemanticDirection& a, const SemanticDirection& b) { return *a.saliency > *b.saliency; });
  if (cfg.top_k > 0 && static_cast<int>(out.size()) > cfg.top_k) out.resize(cfg.top_k);
  return out;
}

double mean_foreground(const data::SilhouetteSequence& s) {
  return s.frames().to(torch::kFloat64).sum({1, 2}).mean().item<double>();
}

void export_embeddings(const std::vector<EmbeddingSource>& sequences, const blender::AttIDBlender& blender,
                       const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write embeddings '" + path + "'");
  const int width = blender.config().parts * blender.config().id_channels;
  f << "id,source,view";
  for (int k = 0; k < width; ++k) f << ",v" << k;
  f << '\n';
  char buf[32];
  for (const auto& e : sequences) {
    if (e.source != "real" && e.source != "edited") throw ValidationError("embedding source must be real or edited");
    auto g = blender.embed_identity(e.sequence).g_id.flatten().to(torch::kFloat64).contiguous();
    const auto& meta = e.sequence.meta();
    f << meta.identity_id << ',' << e.source << ',';
    if (meta.view_deg) {
      std::snprintf(buf, sizeof buf, "%g", *meta.view_deg);
      f << buf;
    }
    const double* v = g.data_ptr<double>();
    for (int64_t k = 0; k < g.numel(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.9g", v[k]);
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("short write to embeddings '" + path + "'");
}

}  // namespace gaiteditor::editor
