// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "gaiteditor/blender/attid_blender.hpp"
#include "gaiteditor/generator/style_generator.hpp"
#include "gaiteditor/losses/losses.hpp"
#include "json.hpp"

namespace gaiteditor::training {

/// Architecture of every network in a run. The blender's resolution, style
/// count and code width follow the generator.
struct ModelConfig {
  generator::GeneratorConfig generator;
  blender::BlenderConfig blender;
  losses::VideoDiscriminatorConfig d_vid;
  losses::ViewClassifierConfig c_view;
  uint64_t perceptual_seed = 7;

  /// Copies generator geometry into the blender config and validates.
  void reconcile();
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

/// All networks plus training progress. Copies share the modules.
struct ModelSet {
  ModelConfig config;
  generator::StyleGenerator gen;
  blender::AttIDBlender blender;
  losses::VideoDiscriminator d_vid{nullptr};
  losses::ViewClassifier c_view{nullptr};
  losses::PerceptualExtractor extractor{nullptr};
  int stage_completed = 0;  // highest finished stage: 0, 1, 2 or 3
  int64_t step = 0;         // iterations of the current blender stage
  bool view_ready = false;

  static ModelSet create(ModelConfig cfg, uint64_t init_seed);

  /// Module names whose parameters are frozen: A and G after stage I; E_id,
  /// C_view once trained; V always.
  std::set<std::string> frozen() const;
  /// Reapplies requires_grad = false on every frozen module.
  void apply_frozen();
  std::vector<std::pair<std::string, torch::Tensor>> named_tensors() const;
  void to(torch::Dtype dtype);
};

/// Binary archive: magic, format version, header length, JSON header
/// (config, config_hash, frozen, stage, step, tensor index, payload crc32),
/// then raw little-endian tensor bytes in index order.
void save_checkpoint(const ModelSet& models, const std::string& path);
/// Throws IoError (missing / unreadable), IntegrityError (bad magic, size or
/// checksum) and ConfigMismatchError when `expected_hash` differs.
ModelSet load_checkpoint(const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt);
/// Header JSON only, without loading tensors.
nlohmann::json read_checkpoint_header(const std::string& path);

}  // namespace gaiteditor::training
