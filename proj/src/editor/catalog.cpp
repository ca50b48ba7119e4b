// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/editor/catalog.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "gaiteditor/error.hpp"

namespace gaiteditor::editor {
using json = nlohmann::json;

std::string to_string(CurationStatus s) {
  switch (s) {
    case CurationStatus::Candidate: return "candidate";
    case CurationStatus::Kept: return "kept";
    case CurationStatus::Discarded: return "discarded";
  }
  return "candidate";
}

CurationStatus curation_status_from(const std::string& s) {
  if (s == "candidate") return CurationStatus::Candidate;
  if (s == "kept") return CurationStatus::Kept;
  if (s == "discarded") return CurationStatus::Discarded;
  throw ValidationError("unknown curation status '" + s + "'");
}

void DirectionCatalog::add(SemanticDirection d) {
  if (find(d.layer, d.channel)) {
    throw ValidationError("duplicate direction <" + std::to_string(d.layer) + "," + std::to_string(d.channel) + ">");
  }
  directions.push_back(std::move(d));
}

const SemanticDirection* DirectionCatalog::find(int layer, int channel) const {
  for (const auto& d : directions) {
    if (d.layer == layer && d.channel == channel) return &d;
  }
  return nullptr;
}

SemanticDirection* DirectionCatalog::find(int layer, int channel) {
  return const_cast<SemanticDirection*>(std::as_const(*this).find(layer, channel));
}

std::vector<SemanticDirection> DirectionCatalog::kept() const {
  std::vector<SemanticDirection> out;
  for (const auto& d : directions) {
    if (d.curation_status == CurationStatus::Kept) out.push_back(d);
  }
  return out;
}

json catalog_to_json(const DirectionCatalog& cat) {
  json dirs = json::array();
  for (const auto& d : cat.directions) {
    json e{{"layer", d.layer},
           {"channel", d.channel},
           {"label", d.label},
           {"alpha_range", {d.alpha_range.first, d.alpha_range.second}},
           {"curation_status", to_string(d.curation_status)},
           {"polarity_note", d.polarity_note}};
    if (d.saliency) e["saliency"] = *d.saliency;
    dirs.push_back(std::move(e));
  }
  return json{{"version", cat.version}, {"generator_config_hash", cat.generator_config_hash}, {"directions", dirs}};
}

DirectionCatalog catalog_from_json(const json& j) {
  DirectionCatalog cat;
  try {
    cat.version = j.value("version", int64_t{1});
    cat.generator_config_hash = j.value("generator_config_hash", std::string());
    for (const auto& e : j.value("directions", json::array())) {
      SemanticDirection d;
      d.layer = e.at("layer").get<int>();
      d.channel = e.at("channel").get<int>();
      if (d.layer < 0 || d.channel < 0) throw ValidationError("direction indices must be non-negative");
      d.label = e.value("label", std::string());
      d.polarity_note = e.value("polarity_note", std::string());
      if (e.contains("alpha_range")) {
        const auto& r = e["alpha_range"];
        if (!r.is_array() || r.size() != 2) throw ValidationError("alpha_range must be [min, max]");
        d.alpha_range = {r[0].get<double>(), r[1].get<double>()};
        if (d.alpha_range.first > d.alpha_range.second) throw ValidationError("alpha_range min exceeds max");
      }
      d.curation_status = curation_status_from(e.value("curation_status", std::string("candidate")));
      if (e.contains("saliency")) d.saliency = e["saliency"].get<double>();
      cat.add(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed catalog: ") + e.what());
  }
  return cat;
}

void catalog_save(const DirectionCatalog& cat, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("cannot write catalog '" + path + "'");
    f << catalog_to_json(cat).dump(2) << '\n';
    if (!f) throw IoError("short write to catalog '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move catalog into '" + path + "'");
}

DirectionCatalog catalog_load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open catalog '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError("catalog '" + path + "' is not valid JSON: " + e.what());
  }
  return catalog_from_json(j);
}

std::optional<std::string> check_catalog_hash(const DirectionCatalog& cat, const std::string& generator_hash) {
  if (cat.generator_config_hash.empty() || cat.generator_config_hash == generator_hash) return std::nullopt;
  return "catalog was curated against generator " + cat.generator_config_hash + ", loaded generator is " +
         generator_hash;
}

}  // namespace gaiteditor::editor
