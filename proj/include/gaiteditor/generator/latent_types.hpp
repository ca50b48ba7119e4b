// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <vector>

namespace gaiteditor::generator {

// Value types for the spaces the generator stack moves between. Each wraps a
// tensor; shapes are checked by the operations that consume them.

/// z in Z: [z_dim], standard Gaussian.
struct NoiseVector {
  torch::Tensor z;
};

/// w = M(z): [w_dim].
struct IntermediateCode {
  torch::Tensor w;
};

/// One frame's W+ code: [num_styles, w_dim].
struct WPlusCode {
  torch::Tensor codes;
};

/// One frame's S-space code: styles[l] is [C_style(l)].
struct StyleCode {
  std::vector<torch::Tensor> styles;
};

/// Per-frame W+ codes stacked as [num_styles, T, w_dim].
struct WPlusSequence {
  torch::Tensor codes;

  int64_t length() const { return codes.size(1); }
  /// Frame-major view [T, num_styles, w_dim] for batched synthesis.
  torch::Tensor frame_major() const { return codes.permute({1, 0, 2}); }
};

/// Per-frame S-space codes: styles[l] is [T, C_style(l)].
struct StyleCodeSequence {
  std::vector<torch::Tensor> styles;

  int64_t length() const { return styles.empty() ? 0 : styles.front().size(0); }
};

}  // namespace gaiteditor::generator
