// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/gateway/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "gaiteditor/config_hash.hpp"
#include "gaiteditor/data/sequence_io.hpp"
#include "gaiteditor/error.hpp"
#include "gaiteditor/training/model_set.hpp"

namespace gaiteditor::gateway {
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

int status_for(const Error& e) {
  const auto& k = e.kind();
  if (k == "validation" || k == "shape") return 400;
  if (k == "not_found") return 404;
  if (k == "conflict") return 409;
  if (k == "policy") return 422;
  return 500;
}

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& m) : Error("not_found", m) {}
};

class Conflict : public Error {
 public:
  explicit Conflict(const std::string& m) : Error("conflict", m) {}
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  send_json(res, json{{"error", {{"kind", kind}, {"message", message}}}}, status);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

/// Wraps a handler with the JSON error envelope.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, status_for(e), e.kind(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::string frame_png(const data::SilhouetteSequence& s, int64_t t) {
  const auto bytes = data::encode_png(s.frame(t));
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// ServiceConfig

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ValidationError("port must lie in [0, 65535]");
  if (max_concurrent_edits < 1 || max_concurrent_edits > EditService::kMaxConcurrency) {
    throw ValidationError("max_concurrent_edits must lie in [1, " + std::to_string(EditService::kMaxConcurrency) +
                          "]");
  }
  if (frame_encoding != "base64" && frame_encoding != "png") {
    throw ValidationError("frame_encoding must be base64 or png");
  }
  if (checkpoint.empty()) throw ValidationError("service needs a checkpoint");
  if (!fs::exists(checkpoint)) throw IoError("checkpoint '" + checkpoint + "' does not exist");
  if (!sequences_dir.empty() && !fs::is_directory(sequences_dir)) {
    throw IoError("sequences_dir '" + sequences_dir + "' is not a directory");
  }
  if (!static_dir.empty() && !fs::is_directory(static_dir)) {
    throw IoError("static_dir '" + static_dir + "' is not a directory");
  }
}

json ServiceConfig::to_json() const {
  return json{{"host", host},
              {"port", port},
              {"checkpoint", checkpoint},
              {"catalog", catalog},
              {"sequences_dir", sequences_dir},
              {"static_dir", static_dir},
              {"max_concurrent_edits", max_concurrent_edits},
              {"frame_encoding", frame_encoding}};
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.catalog = j.value("catalog", c.catalog);
  c.sequences_dir = j.value("sequences_dir", c.sequences_dir);
  c.static_dir = j.value("static_dir", c.static_dir);
  c.max_concurrent_edits = j.value("max_concurrent_edits", c.max_concurrent_edits);
  c.frame_encoding = j.value("frame_encoding", c.frame_encoding);
  return c;
}

// ---------------------------------------------------------------------------
// EditService

struct EditService::Impl {
  std::counting_semaphore<kMaxConcurrency> slots;
  mutable std::shared_mutex catalog_mu;
  std::shared_ptr<const editor::DirectionCatalog> catalog;
  std::mutex write_mu;  // single catalog writer
  std::optional<std::string> catalog_path;
  mutable std::shared_mutex seq_mu;
  std::map<std::string, data::SilhouetteSequence> sequences;
  std::atomic<int64_t> next_id{0};
  std::string frame_encoding;
  std::unique_ptr<httplib::Server> owned_server;
  httplib::Server* server = nullptr;
  std::thread worker;

  explicit Impl(int slots_n) : slots(slots_n) {}

  data::SilhouetteSequence sequence(const std::string& id) const {
    std::shared_lock lock(seq_mu);
    auto it = sequences.find(id);
    if (it == sequences.end()) throw NotFound("unknown sequence_id '" + id + "'");
    return it->second;
  }

  std::shared_ptr<const editor::DirectionCatalog> snapshot() const {
    std::shared_lock lock(catalog_mu);
    return catalog;
  }
};

// Limits concurrent model inference to the configured number of slots.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<EditService::kMaxConcurrency>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }

 private:
  std::counting_semaphore<EditService::kMaxConcurrency>& s_;
};

EditService::EditService(editor::LatentEditor editor, editor::DirectionCatalog catalog,
                         std::optional<std::string> catalog_path, int max_concurrent_edits,
                         std::string frame_encoding)
    : impl_(std::make_unique<Impl>(std::clamp(max_concurrent_edits, 1, kMaxConcurrency))),
      editor_(std::move(editor)) {
  if (catalog.generator_config_hash.empty()) catalog.generator_config_hash = editor_.generator_hash();
  catalog_warning_ = editor::check_catalog_hash(catalog, editor_.generator_hash());
  impl_->catalog = std::make_shared<const editor::DirectionCatalog>(std::move(catalog));
  impl_->catalog_path = std::move(catalog_path);
  impl_->frame_encoding = std::move(frame_encoding);
}

EditService::~EditService() { stop(); }

std::unique_ptr<EditService> EditService::from_config(const ServiceConfig& cfg) {
  cfg.validate();
  auto models = training::load_checkpoint(cfg.checkpoint);
  editor::LatentEditor ed(std::move(models));
  editor::DirectionCatalog cat;
  std::optional<std::string> cat_path;
  if (!cfg.catalog.empty()) {
    cat_path = cfg.catalog;
    if (fs::exists(cfg.catalog)) cat = editor::catalog_load(cfg.catalog);
  }
  auto svc = std::make_unique<EditService>(std::move(ed), std::move(cat), cat_path, cfg.max_concurrent_edits,
                                           cfg.frame_encoding);
  if (!cfg.sequences_dir.empty()) {
    for (auto& s : data::load_dataset(cfg.sequences_dir, svc->editor().models().config.generator.resolution)) {
      svc->register_sequence(std::move(s));
    }
  }
  return svc;
}

std::string EditService::register_sequence(data::SilhouetteSequence seq) {
  const int R = editor_.models().config.generator.resolution;
  if (seq.resolution() != R) seq = data::preprocess(seq, R);
  char id[32];
  std::snprintf(id, sizeof id, "seq_%06lld", static_cast<long long>(impl_->next_id++));
  std::unique_lock lock(impl_->seq_mu);
  impl_->sequences.emplace(id, std::move(seq));
  return id;
}

std::shared_ptr<const editor::DirectionCatalog> EditService::catalog() const { return impl_->snapshot(); }

void EditService::mount(httplib::Server& svr, const std::string& static_dir) {
  Impl* impl = impl_.get();
  const editor::LatentEditor* ed = &editor_;

  auto frames_payload = [impl](const data::SilhouetteSequence& s, const std::string& base_url) {
    json frames = json::array();
    std::string digest_input;
    for (int64_t t = 0; t < s.length(); ++t) {
      const std::string png = frame_png(s, t);
      digest_input += png;
      if (impl->frame_encoding == "png") {
        frames.push_back(base_url + "/frames/" + std::to_string(t) + ".png");
      } else {
        frames.push_back(httplib::detail::base64_encode(png));
      }
    }
    json out{{"T", s.length()}, {"checksum", config_hash(digest_input)}};
    out[impl->frame_encoding == "png" ? "frame_urls" : "frames"] = frames;
    return out;
  };

  svr.Get("/api/health", guarded([ed](const httplib::Request&, httplib::Response& res) {
            send_json(res, json{{"status", "ok"},
                                {"config_hash", ed->models().config.hash()},
                                {"generator_config_hash", ed->generator_hash()}});
          }));

  svr.Get("/api/directions", guarded([impl](const httplib::Request&, httplib::Response& res) {
            send_json(res, editor::catalog_to_json(*impl->snapshot()));
          }));

  svr.Post(R"(/api/directions/(-?\d+)/(-?\d+)/status)",
           guarded([impl](const httplib::Request& req, httplib::Response& res) {
             const int layer = std::stoi(req.matches[1]);
             const int channel = std::stoi(req.matches[2]);
             const json body = parse_body(req);
             std::lock_guard writer(impl->write_mu);
             auto next = std::make_shared<editor::DirectionCatalog>(*impl->snapshot());
             if (body.contains("expected_version") && body["expected_version"].get<int64_t>() != next->version) {
               throw Conflict("catalog version is " + std::to_string(next->version) + ", request expected " +
                              std::to_string(body["expected_version"].get<int64_t>()));
             }
             auto* d = next->find(layer, channel);
             if (!d) {
               throw NotFound("no direction <" + std::to_string(layer) + "," + std::to_string(channel) +
                              "> in the catalog");
             }
             d->curation_status = editor::curation_status_from(body.at("status").get<std::string>());
             if (body.contains("label")) d->label = body["label"].get<std::string>();
             if (body.contains("polarity_note")) d->polarity_note = body["polarity_note"].get<std::string>();
             ++next->version;
             if (impl->catalog_path) editor::catalog_save(*next, *impl->catalog_path);
             {
               std::unique_lock lock(impl->catalog_mu);
               impl->catalog = next;
             }
             send_json(res, editor::catalog_to_json(*next));
           }));

  svr.Post("/api/sequences", guarded([this, impl](const httplib::Request& req, httplib::Response& res) {
             if (!req.is_multipart_form_data()) {
               throw ValidationError("POST /api/sequences expects multipart form data with 'frames' files");
             }
             std::vector<httplib::MultipartFormData> files;
             for (const auto& [name, item] : req.files) {
               if (name == "frames") files.push_back(item);
             }
             if (files.empty()) throw ValidationError("no 'frames' parts in upload");
             std::stable_sort(files.begin(), files.end(),
                              [](const auto& a, const auto& b) { return a.filename < b.filename; });
             std::vector<torch::Tensor> frames;
             for (const auto& f : files) {
               frames.push_back(data::decode_png(std::vector<uint8_t>(f.content.begin(), f.content.end()),
                                                 f.filename.empty() ? "frame" : f.filename));
             }
             for (const auto& f : frames) {
               if (!f.sizes().equals(frames.front().sizes())) throw ValidationError("uploaded frames differ in size");
             }
             data::SequenceMeta meta;
             if (req.has_file("meta")) meta = data::meta_from_json(req.get_file_value("meta").content);
             const std::string id = register_sequence(data::SilhouetteSequence(torch::stack(frames), meta));
             send_json(res, json{{"sequence_id", id}, {"T", frames.size()}}, 201);
             (void)impl;
           }));

  svr.Get("/api/sequences", guarded([impl](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            std::shared_lock lock(impl->seq_mu);
            for (const auto& [id, s] : impl->sequences) {
              json e{{"sequence_id", id}, {"T", s.length()}, {"identity_id", s.meta().identity_id}};
              if (s.meta().view_deg) e["view_deg"] = *s.meta().view_deg;
              list.push_back(std::move(e));
            }
            send_json(res, json{{"sequences", list}});
          }));

  // Shared by /api/edit and the raw frame endpoint.
  auto run_edit = [impl, ed](const std::string& seq_id, int layer, int channel, double alpha) {
    auto seq = impl->sequence(seq_id);
    editor::SemanticDirection d;
    d.layer = layer;
    d.channel = channel;
    if (const auto* known = impl->snapshot()->find(layer, channel)) d = *known;
    SlotGuard slot(impl->slots);
    return ed->edit_appearance(seq, d, alpha);
  };

  svr.Post("/api/edit", guarded([run_edit, frames_payload, impl](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             const std::string id = body.at("sequence_id");
             const int layer = body.at("layer"), channel = body.at("channel");
             const double alpha = body.value("alpha", 0.0);
             auto out = run_edit(id, layer, channel, alpha);
             json payload = frames_payload(out, "/api/sequences/" + id);
             payload["sequence_id"] = id;
             payload["layer"] = layer;
             payload["channel"] = channel;
             payload["alpha"] = alpha;
             payload["catalog_version"] = impl->snapshot()->version;
             res.set_header("X-Frames-Checksum", payload["checksum"].get<std::string>());
             send_json(res, payload);
           }));

  svr.Get(R"(/api/sequences/([A-Za-z0-9_]+)/frames/(\d+)\.png)",
          guarded([run_edit, impl](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const int64_t t = std::stoll(req.matches[2]);
            data::SilhouetteSequence s = impl->sequence(id);
            if (req.has_param("layer") && req.has_param("channel")) {
              const double alpha = req.has_param("alpha") ? std::stod(req.get_param_value("alpha")) : 0.0;
              s = run_edit(id, std::stoi(req.get_param_value("layer")), std::stoi(req.get_param_value("channel")),
                           alpha);
            }
            if (t < 0 || t >= s.length()) throw NotFound("frame index out of range");
            res.set_content(frame_png(s, t), "image/png");
          }));

  svr.Post("/api/swap", guarded([impl, ed, frames_payload](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             const std::string attr_id = body.at("attr_id"), id_id = body.at("id_id");
             auto a = impl->sequence(attr_id), b = impl->sequence(id_id);
             data::SilhouetteSequence out = [&] {
               SlotGuard slot(impl->slots);
               return ed->swap_attributes(a, b);
             }();
             json payload = frames_payload(out, "/api/sequences/" + attr_id);
             payload["attr_id"] = attr_id;
             payload["id_id"] = id_id;
             send_json(res, payload);
           }));

  if (!static_dir.empty() && !svr.set_mount_point("/", static_dir)) {
    throw IoError("cannot mount static assets from '" + static_dir + "'");
  }
}

void EditService::listen(const std::string& host, int port, const std::string& static_dir) {
  impl_->owned_server = std::make_unique<httplib::Server>();
  impl_->server = impl_->owned_server.get();
  mount(*impl_->server, static_dir);
  if (!impl_->server->bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->server->listen_after_bind();
}

int EditService::start_background(const std::string& host) {
  impl_->owned_server = std::make_unique<httplib::Server>();
  impl_->server = impl_->owned_server.get();
  mount(*impl_->server);
  const int port = impl_->server->bind_to_any_port(host);
  if (port <= 0) throw IoError("cannot bind an ephemeral port on " + host);
  impl_->worker = std::thread([s = impl_->server] { s->listen_after_bind(); });
  impl_->server->wait_until_ready();
  return port;
}

void EditService::stop() {
  if (!impl_) return;
  if (impl_->server) impl_->server->stop();
  if (impl_->worker.joinable()) impl_->worker.join();
  impl_->server = nullptr;
}

}  // namespace gaiteditor::gateway
