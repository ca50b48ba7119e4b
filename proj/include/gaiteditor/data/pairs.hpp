// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gaiteditor/data/sequence.hpp"

namespace gaiteditor::data {

enum class Stage { I = 1, II = 2, III = 3 };

/// (attribute sequence S_i, identity sequence S_j).
struct SequencePair {
  SilhouetteSequence attribute;
  SilhouetteSequence identity;

  bool identical() const { return attribute.identical_to(identity); }
};

/// Stage II batches hold only (S, S) pairs. Stage III batches are a
/// concatenation of permutation quadruples (S_i,S_i),(S_i,S_j),(S_j,S_i),(S_j,S_j).
struct PairBatch {
  std::vector<SequencePair> pairs;
  Stage stage = Stage::II;
};

/// Draws `batch` sequences (stage II) or `batch` distinct ordered pairs
/// (stage III, four pairs each). A pure function of its arguments.
PairBatch sample_pairs(const SequenceCollection& dataset, Stage stage, int batch, uint64_t rng_seed);

/// Mixes a run seed with a call index so parallel loaders can partition calls.
uint64_t derive_seed(uint64_t seed, uint64_t index);

/// Uniform double in [0, 1) from a 64-bit engine draw (bit-portable).
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline uint64_t uniform_index(std::mt19937_64& rng, uint64_t n) {
  return static_cast<uint64_t>(unit_uniform(rng) * static_cast<double>(n));
}

/// Temporal crop of `length` frames starting at `start`, looping the
/// sequence when it is shorter than `length`.
SilhouetteSequence temporal_clip(const SilhouetteSequence& seq, int64_t start, int64_t length);

/// Crops both members of every pair to `length` frames. Identical pairs keep
/// a shared crop so they stay bit-identical.
PairBatch clip_pairs(const PairBatch& batch, int64_t length, uint64_t rng_seed);

}  // namespace gaiteditor::data
