// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "gaiteditor/data/sequence.hpp"

namespace gaiteditor::data {

/// Parameters of one synthetic walking figure.
///
/// The figure is built from capsules (head, torso, two arms, two legs with
/// feet) in a walker-local 3-D frame and projected orthographically from a
/// camera at azimuth `view_deg` and a fixed downward elevation. Limbs swing
/// sinusoidally with opposite phase per side. `identity_seed` perturbs body
/// proportions and gait amplitudes; `clothing_bulk` thickens torso, upper
/// arms and thighs.
struct WalkerSpec {
  int64_t identity_seed = 0;
  double view_deg = 90.0;
  double limb_scale = 1.0;
  double torso_scale = 1.0;
  double head_scale = 1.0;
  double clothing_bulk = 0.0;  // [0, 1]
  int stride_period_frames = 16;
  int T = 16;
  int resolution = 64;
  int start_frame = 0;  // phase offset into the gait cycle, in frames

  /// Throws ValidationError when any field is out of range.
  void validate() const;
};

SilhouetteSequence render_walker(const WalkerSpec& spec);

/// Layout knobs for a synthetic corpus. Sequence k gets identity
/// k / views.size() and view views[k % views.size()]; clothing bulk and
/// phase are drawn from `seed`.
struct CorpusSpec {
  int count = 32;
  uint64_t seed = 0;
  int T = 16;
  int resolution = 64;
  int stride_period_frames = 16;
  std::vector<double> views = {0.0, 45.0, 90.0, 135.0, 180.0};
  double max_clothing_bulk = 1.0;
};

/// The walker specs behind `synthesize_corpus`, exposed for tests and tools.
std::vector<WalkerSpec> corpus_specs(const CorpusSpec& spec);

SequenceCollection synthesize_corpus(const CorpusSpec& spec);

/// Identity seed used for identity number `index` in a corpus with `seed`.
int64_t corpus_identity_seed(uint64_t seed, int index);

}  // namespace gaiteditor::data
