// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/editor/catalog.hpp"
#include "gaiteditor/editor/latent_editor.hpp"
#include "json.hpp"

namespace gaiteditor::gateway {

enum class AugmentMode { Appearance, Viewpoint, Mixed };

/// Online editing for downstream recognition training. `schedule` entries
/// (step, probability) override `probability` from their step onward.
struct AugmentPolicy {
  double probability = 0.2;
  AugmentMode mode = AugmentMode::Appearance;
  std::vector<std::pair<int64_t, double>> schedule;
  uint64_t rng_seed = 0;

  void validate() const;
  double probability_at(int64_t step) const;
  nlohmann::json to_json() const;
  static AugmentPolicy from_json(const nlohmann::json& j);
};

struct AugmentedBatch {
  data::SequenceCollection sequences;
  std::vector<bool> edited;
  std::vector<std::string> edit_kind;  // "", "appearance" or "viewpoint"
  /// Identity label of each output; a viewpoint swap carries the donor's.
  std::vector<std::string> identity_labels;
};

/// Each sequence is independently replaced by an edited version with the
/// probability in force at `step`. Appearance edits use a random kept
/// direction and a uniform strength in its range; viewpoint edits swap
/// against a random donor from the same batch. Outputs are detached values.
/// Throws ValidationError in appearance mode when no direction is kept.
AugmentedBatch augment_batch(const data::SequenceCollection& batch, const AugmentPolicy& policy,
                             const editor::LatentEditor& editor, const editor::DirectionCatalog& catalog,
                             int64_t step = 0);

}  // namespace gaiteditor::gateway
