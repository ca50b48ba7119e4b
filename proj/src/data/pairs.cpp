// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/data/pairs.hpp"

#include "gaiteditor/error.hpp"

namespace gaiteditor::data {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t seed, uint64_t index) { return splitmix64(seed ^ splitmix64(index)); }

PairBatch sample_pairs(const SequenceCollection& dataset, Stage stage, int batch, uint64_t rng_seed) {
  if (dataset.empty()) throw ValidationError("cannot sample pairs from an empty dataset");
  if (batch <= 0) throw ValidationError("pair batch size must be positive");
  std::mt19937_64 rng(rng_seed);
  PairBatch out;
  out.stage = stage;
  const uint64_t n = dataset.size();
  switch (stage) {
    case Stage::II:
      for (int b = 0; b < batch; ++b) {
        const auto& s = dataset[uniform_index(rng, n)];
        out.pairs.push_back({s, s});
      }
      break;
    case Stage::III:
      if (n < 2) throw ValidationError("stage III pair sampling needs at least two sequences");
      for (int b = 0; b < batch; ++b) {
        const uint64_t i = uniform_index(rng, n);
        uint64_t j = uniform_index(rng, n - 1);
        if (j >= i) ++j;
        const auto& si = dataset[i];
        const auto& sj = dataset[j];
        out.pairs.push_back({si, si});
        out.pairs.push_back({si, sj});
        out.pairs.push_back({sj, si});
        out.pairs.push_back({sj, sj});
      }
      break;
    case Stage::I:
      throw ValidationError("stage I trains on single frames; pair sampling applies to stages II and III");
  }
  return out;
}

SilhouetteSequence temporal_clip(const SilhouetteSequence& seq, int64_t start, int64_t length) {
  if (length <= 0) throw ValidationError("clip length must be positive");
  const int64_t T = seq.length();
  if (start == 0 && length == T) return seq;
  auto idx = (torch::arange(length, torch::kLong) + start).remainder(T);
  return SilhouetteSequence(seq.frames().index_select(0, idx), seq.meta());
}

PairBatch clip_pairs(const PairBatch& batch, int64_t length, uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  auto start_for = [&](const SilhouetteSequence& s) -> int64_t {
    const int64_t T = s.length();
    if (T <= length) return 0;
    return static_cast<int64_t>(uniform_index(rng, static_cast<uint64_t>(T - length + 1)));
  };
  PairBatch out;
  out.stage = batch.stage;
  for (const auto& p : batch.pairs) {
    if (p.identical()) {
      auto c = temporal_clip(p.attribute, start_for(p.attribute), length);
      out.pairs.push_back({c, c});
    } else {
      auto a = temporal_clip(p.attribute, start_for(p.attribute), length);
      auto b = temporal_clip(p.identity, start_for(p.identity), length);
      out.pairs.push_back({std::move(a), std::move(b)});
    }
  }
  return out;
}

}  // namespace gaiteditor::data
