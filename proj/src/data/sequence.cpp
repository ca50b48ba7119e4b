// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/data/sequence.hpp"

#include "gaiteditor/error.hpp"

namespace gaiteditor::data {

SilhouetteSequence::SilhouetteSequence(torch::Tensor frames, SequenceMeta meta)
    : meta_(std::move(meta)) {
  if (!frames.defined() || frames.dim() != 3) {
    throw ShapeError("silhouette sequence must be a [T, H, W] tensor");
  }
  if (frames.size(0) < 1) throw ValidationError("silhouette sequence needs T >= 1");
  if (frames.size(1) != frames.size(2)) {
    throw ShapeError("silhouette frames must be square, got " + std::to_string(frames.size(1)) + "x" +
                     std::to_string(frames.size(2)));
  }
  frames_ = frames.detach().to(torch::kFloat32).contiguous();
  const auto lo = frames_.min().item<float>();
  const auto hi = frames_.max().item<float>();
  if (!(lo >= 0.0f && hi <= 1.0f)) {
    throw ValidationError("silhouette intensities must lie in [0, 1]");
  }
  if (meta_.view_deg && !(*meta_.view_deg >= 0.0 && *meta_.view_deg < 360.0)) {
    throw ValidationError("view_deg must lie in [0, 360)");
  }
}

bool SilhouetteSequence::identical_to(const SilhouetteSequence& other) const {
  if (empty() || other.empty()) return empty() && other.empty();
  if (frames_.sizes() != other.frames_.sizes()) return false;
  if (frames_.data_ptr() == other.frames_.data_ptr()) return true;
  return std::memcmp(frames_.data_ptr(), other.frames_.data_ptr(), frames_.nbytes()) == 0;
}

double squared_distance(const SilhouetteSequence& a, const SilhouetteSequence& b) {
  if (a.frames().sizes() != b.frames().sizes()) throw ShapeError("sequences differ in shape");
  return (a.frames().to(torch::kFloat64) - b.frames().to(torch::kFloat64)).pow(2).sum().item<double>();
}

}  // namespace gaiteditor::data
