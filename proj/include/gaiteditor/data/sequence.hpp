// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gaiteditor::data {

struct SequenceMeta {
  std::string identity_id;
  std::optional<double> view_deg;  // degrees in [0, 360)
  std::set<std::string> attribute_tags;

  bool operator==(const SequenceMeta&) const = default;
};

/// T silhouette frames of one resolution, intensities in [0, 1].
///
/// Frames are held as a contiguous float32 tensor of shape [T, H, W]. The
/// tensor is shared on copy; treat it as immutable.
class SilhouetteSequence {
 public:
  SilhouetteSequence() = default;
  /// Validates shape (3-D, T >= 1, square frames) and range.
  explicit SilhouetteSequence(torch::Tensor frames, SequenceMeta meta = {});

  int64_t length() const { return frames_.size(0); }
  int64_t resolution() const { return frames_.size(1); }
  bool empty() const { return !frames_.defined(); }

  const torch::Tensor& frames() const { return frames_; }
  torch::Tensor frame(int64_t t) const { return frames_[t]; }
  /// Frames as a network batch: [T, 1, H, W].
  torch::Tensor as_batch() const { return frames_.unsqueeze(1); }

  const SequenceMeta& meta() const { return meta_; }
  SequenceMeta& meta() { return meta_; }

  /// Bit-exact equality of the frame data (metadata is ignored).
  bool identical_to(const SilhouetteSequence& other) const;

 private:
  torch::Tensor frames_;
  SequenceMeta meta_;
};

using SequenceCollection = std::vector<SilhouetteSequence>;

/// Sum of squared per-pixel differences between two sequences of equal shape.
double squared_distance(const SilhouetteSequence& a, const SilhouetteSequence& b);

}  // namespace gaiteditor::data
