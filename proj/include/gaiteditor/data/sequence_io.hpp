// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gaiteditor/data/sequence.hpp"

namespace gaiteditor::data {

// On-disk layout: one directory per sequence holding `%06d.png` gray frames
// and an optional `meta.json` with identity_id / view_deg / attribute_tags.

SilhouetteSequence load_sequence(const std::filesystem::path& dir, int resolution = 64);
void save_sequence(const SilhouetteSequence& seq, const std::filesystem::path& dir);

/// Loads every immediate subdirectory of `root` (sorted by name) as a sequence.
SequenceCollection load_dataset(const std::filesystem::path& root, int resolution = 64);
void save_dataset(const SequenceCollection& seqs, const std::filesystem::path& root);

/// Bilinear resize with half-pixel centers, then clamp to [0, 1]. `frames` is
/// [T, H, W]; returns [T, size, size].
torch::Tensor resize_bilinear(const torch::Tensor& frames, int64_t size);

/// Resizes every frame to resolution x resolution and clamps. Throws
/// ValidationError when `resolution` is not a positive power of two.
SilhouetteSequence preprocess(const SilhouetteSequence& seq, int resolution);

// 8-bit gray PNG codec. Values are rounded from [0, 1].
std::vector<uint8_t> encode_png(const torch::Tensor& frame);
torch::Tensor decode_png(const std::vector<uint8_t>& bytes, const std::string& name = "<memory>");
void write_png(const torch::Tensor& frame, const std::filesystem::path& path);
torch::Tensor read_png(const std::filesystem::path& path);

std::string meta_to_json(const SequenceMeta& meta);
SequenceMeta meta_from_json(const std::string& text);

}  // namespace gaiteditor::data
