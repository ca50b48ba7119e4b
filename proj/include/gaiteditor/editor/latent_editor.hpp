// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/editor/catalog.hpp"
#include "gaiteditor/generator/latent_types.hpp"
#include "gaiteditor/training/model_set.hpp"

namespace gaiteditor::editor {

struct Inversion {
  generator::WPlusSequence codes;
  data::SilhouetteSequence reconstruction;
};

/// Read-only editing over a trained model set; safe to share across threads.
class LatentEditor {
 public:
  /// Throws NotLoadedError unless the blender has been trained (stage II or
  /// later) and ConfigMismatchError when `expected_hash` differs from the
  /// models' config hash.
  explicit LatentEditor(training::ModelSet models, const std::optional<std::string>& expected_hash = std::nullopt);

  const training::ModelSet& models() const { return models_; }
  /// Hash of the generator architecture; catalogs are keyed by it.
  std::string generator_hash() const;

  Inversion invert(const data::SilhouetteSequence& s) const;
  /// s[l][t][c] += alpha for every frame t; throws on out-of-range <l, c>.
  /// Directions labelled "viewpoint" are refused (use swap_attributes).
  generator::StyleCodeSequence navigate(const generator::StyleCodeSequence& styles, const SemanticDirection& d,
                                        double alpha) const;
  data::SilhouetteSequence edit_appearance(const data::SilhouetteSequence& s, const SemanticDirection& d,
                                           double alpha) const;
  /// Several additive edits applied to one inversion.
  data::SilhouetteSequence edit_appearance(const data::SilhouetteSequence& s,
                                           const std::vector<std::pair<SemanticDirection, double>>& edits) const;
  /// Viewpoint / attributes of `attribute`, identity of `identity`.
  data::SilhouetteSequence swap_attributes(const data::SilhouetteSequence& attribute,
                                           const data::SilhouetteSequence& identity) const;

  /// Per-channel style standard deviation over `samples` random codes.
  std::vector<torch::Tensor> style_std(int samples = 1024, uint64_t seed = 0) const;

 private:
  void check_direction(const SemanticDirection& d) const;

  training::ModelSet models_;
};

/// Navigating the generator's S space does not need a trained blender.
generator::StyleCodeSequence navigate_styles(const generator::StyleGenerator& gen,
                                             const generator::StyleCodeSequence& styles, const SemanticDirection& d,
                                             double alpha);

struct SweepConfig {
  int samples = 8;       // random codes the saliency is averaged over
  int style_samples = 1024;
  uint64_t seed = 0;
  int top_k = 0;         // 0 keeps every channel
};

/// Exhaustive per-channel perturbation sweep. Each channel is pushed by
/// +-sigma_c and ranked by mean absolute pixel change per unit strength;
/// returns `candidate` entries with alpha_range = +-3 sigma_c, best first.
std::vector<SemanticDirection> sweep_directions(const generator::StyleGenerator& gen, const SweepConfig& cfg);

/// Mean foreground (sum of pixel values per frame) of a sequence.
double mean_foreground(const data::SilhouetteSequence& s);

struct EmbeddingSource {
  data::SilhouetteSequence sequence;
  std::string source = "real";  // real | edited
};

/// CSV: id,source,view,v0..v(P*C-1). Throws IoError on write failure.
void export_embeddings(const std::vector<EmbeddingSource>& sequences, const blender::AttIDBlender& blender,
                       const std::string& path);

}  // namespace gaiteditor::editor
