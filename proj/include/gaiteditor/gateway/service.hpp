// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>

#include "gaiteditor/data/sequence.hpp"
#include "gaiteditor/editor/catalog.hpp"
#include "gaiteditor/editor/latent_editor.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace gaiteditor::gateway {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint;
  std::string catalog;         // created on first write when missing
  std::string sequences_dir;   // optional: preregistered sequences
  std::string static_dir;      // optional: UI assets mounted at /
  int max_concurrent_edits = 4;
  std::string frame_encoding = "base64";  // base64 | png

  /// Throws ValidationError / IoError when fields are invalid or referenced
  /// files do not exist.
  void validate() const;
  nlohmann::json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j);
};

/// The HTTP edit and curation service. Editing is read-only over frozen
/// weights; catalog writes are serialized and bump the catalog version.
class EditService {
 public:
  static constexpr int kMaxConcurrency = 64;

  EditService(editor::LatentEditor editor, editor::DirectionCatalog catalog,
              std::optional<std::string> catalog_path = std::nullopt, int max_concurrent_edits = 4,
              std::string frame_encoding = "base64");
  /// Loads the checkpoint, catalog and sequences named by `cfg`.
  static std::unique_ptr<EditService> from_config(const ServiceConfig& cfg);
  ~EditService();

  /// Registers a sequence and returns its id.
  std::string register_sequence(data::SilhouetteSequence seq);
  std::shared_ptr<const editor::DirectionCatalog> catalog() const;
  const editor::LatentEditor& editor() const { return editor_; }
  /// Non-empty when the catalog was curated against a different generator.
  const std::optional<std::string>& catalog_warning() const { return catalog_warning_; }

  /// Installs every route on `server`; `static_dir` is mounted at / if set.
  void mount(httplib::Server& server, const std::string& static_dir = "");
  /// Binds and serves until stop(). Throws IoError on bind failure.
  void listen(const std::string& host, int port, const std::string& static_dir = "");
  /// Binds to an ephemeral port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  editor::LatentEditor editor_;
  std::optional<std::string> catalog_warning_;
};

}  // namespace gaiteditor::gateway
