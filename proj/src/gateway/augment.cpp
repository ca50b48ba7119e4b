// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/gateway/augment.hpp"

#include <random>

#include "gaiteditor/data/pairs.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::gateway {
using json = nlohmann::json;

namespace {

std::string mode_name(AugmentMode m) {
  switch (m) {
    case AugmentMode::Appearance: return "appearance";
    case AugmentMode::Viewpoint: return "viewpoint";
    case AugmentMode::Mixed: return "mixed";
  }
  return "appearance";
}

}  // namespace

void AugmentPolicy::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) throw ValidationError("augment probability must lie in [0, 1]");
  for (size_t k = 0; k < schedule.size(); ++k) {
    const auto& [step, p] = schedule[k];
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("schedule probabilities must lie in [0, 1]");
    if (k > 0 && step <= schedule[k - 1].first) throw ValidationError("schedule steps must be strictly increasing");
  }
}

double AugmentPolicy::probability_at(int64_t step) const {
  double p = probability;
  for (const auto& [s, q] : schedule) {
    if (s > step) break;
    p = q;
  }
  return p;
}

json AugmentPolicy::to_json() const {
  json sched = json::array();
  for (const auto& [s, p] : schedule) sched.push_back({s, p});
  return json{{"probability", probability}, {"mode", mode_name(mode)}, {"schedule", sched}, {"rng_seed", rng_seed}};
}

AugmentPolicy AugmentPolicy::from_json(const json& j) {
  AugmentPolicy p;
  try {
    p.probability = j.value("probability", p.probability);
    const std::string mode = j.value("mode", std::string("appearance"));
    if (mode == "appearance") {
      p.mode = AugmentMode::Appearance;
    } else if (mode == "viewpoint") {
      p.mode = AugmentMode::Viewpoint;
    } else if (mode == "mixed") {
      p.mode = AugmentMode::Mixed;
    } else {
      throw ValidationError("unknown augment mode '" + mode + "'");
    }
    for (const auto& e : j.value("schedule", json::array())) {
      p.schedule.emplace_back(e.at(0).get<int64_t>(), e.at(1).get<double>());
    }
    p.rng_seed = j.value("rng_seed", p.rng_seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed augment policy: ") + e.what());
  }
  p.validate();
  return p;
}

AugmentedBatch augment_batch(const data::SequenceCollection& batch, const AugmentPolicy& policy,
                             const editor::LatentEditor& editor, const editor::DirectionCatalog& catalog,
                             int64_t step) {
  policy.validate();
  const auto kept = catalog.kept();
  if (policy.mode == AugmentMode::Appearance && kept.empty()) {
    throw ValidationError("appearance augmentation needs at least one kept direction in the catalog");
  }
  const double p = policy.probability_at(step);
  std::mt19937_64 rng(data::derive_seed(policy.rng_seed, static_cast<uint64_t>(step)));

  AugmentedBatch out;
  const size_t n = batch.size();
  for (size_t k = 0; k < n; ++k) {
    const auto& seq = batch[k];
    // Fixed draw order per sequence keeps decisions independent of outcomes.
    const bool edit = data::unit_uniform(rng) < p;
    const double kind_u = data::unit_uniform(rng);
    const double pick_u = data::unit_uniform(rng);
    const double alpha_u = data::unit_uniform(rng);
    if (!edit) {
      out.sequences.push_back(seq);
      out.edited.push_back(false);
      out.edit_kind.emplace_back();
      out.identity_labels.push_back(seq.meta().identity_id);
      continue;
    }
    bool appearance = policy.mode == AugmentMode::Appearance;
    if (policy.mode == AugmentMode::Mixed) appearance = !kept.empty() && kind_u < 0.5;
    if (appearance) {
      const auto& d = kept[static_cast<size_t>(pick_u * static_cast<double>(kept.size()))];
      const double alpha = d.alpha_range.first + alpha_u * (d.alpha_range.second - d.alpha_range.first);
      auto edited = editor.edit_appearance(seq, d, alpha);
      data::SequenceMeta meta = seq.meta();
      meta.attribute_tags.insert("edited");
      out.sequences.emplace_back(edited.frames().detach().clone(), std::move(meta));
      out.edit_kind.emplace_back("appearance");
      out.identity_labels.push_back(seq.meta().identity_id);
    } else {
      size_t donor = k;
      if (n > 1) {
        donor = static_cast<size_t>(pick_u * static_cast<double>(n - 1));
        if (donor >= k) ++donor;
      }
      // The swapped sequence keeps this sequence's attributes (viewpoint)
      // and takes the donor's identity.
      auto swapped = editor.swap_attributes(seq, batch[donor]);
      out.identity_labels.push_back(batch[donor].meta().identity_id);
      out.sequences.emplace_back(swapped.frames().detach().clone(), swapped.meta());
      out.edit_kind.emplace_back("viewpoint");
    }
    out.edited.push_back(true);
  }
  return out;
}

}  // namespace gaiteditor::gateway
