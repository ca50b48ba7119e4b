// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gaiteditor::editor {

enum class CurationStatus { Candidate, Kept, Discarded };

std::string to_string(CurationStatus s);
CurationStatus curation_status_from(const std::string& s);

/// An S-space handle <layer, channel> with curation metadata.
struct SemanticDirection {
  int layer = 0;
  int channel = 0;
  std::string label;
  std::string polarity_note;
  std::pair<double, double> alpha_range{-3.0, 3.0};
  CurationStatus curation_status = CurationStatus::Candidate;
  /// Mean absolute pixel change per unit strength; set by sweeps.
  std::optional<double> saliency;

  bool operator==(const SemanticDirection&) const = default;
};

struct DirectionCatalog {
  std::vector<SemanticDirection> directions;
  std::string generator_config_hash;
  int64_t version = 1;

  /// Throws ValidationError on a duplicate <layer, channel>.
  void add(SemanticDirection d);
  const SemanticDirection* find(int layer, int channel) const;
  SemanticDirection* find(int layer, int channel);
  std::vector<SemanticDirection> kept() const;

  bool operator==(const DirectionCatalog&) const = default;
};

nlohmann::json catalog_to_json(const DirectionCatalog& cat);
/// Throws ValidationError on malformed entries or duplicate directions.
DirectionCatalog catalog_from_json(const nlohmann::json& j);
void catalog_save(const DirectionCatalog& cat, const std::string& path);
DirectionCatalog catalog_load(const std::string& path);

/// A warning message when the catalog was curated against another generator.
std::optional<std::string> check_catalog_hash(const DirectionCatalog& cat, const std::string& generator_hash);

}  // namespace gaiteditor::editor
