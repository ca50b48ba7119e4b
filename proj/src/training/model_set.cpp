// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/training/model_set.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>

#include "gaiteditor/config_hash.hpp"
#include "gaiteditor/error.hpp"

namespace gaiteditor::training {
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'E', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kFormatVersion = 1;

std::string dtype_name(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw ValidationError("checkpoint cannot store tensors of this dtype");
  }
}

torch::Dtype dtype_from(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  throw IntegrityError("checkpoint has unknown dtype '" + s + "'");
}

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), {});
}

struct Parsed {
  json header;
  size_t payload_offset = 0;
};

Parsed parse(const std::string& bytes, const std::string& path) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("'" + path + "' is not a checkpoint archive");
  }
  size_t pos = sizeof kMagic;
  const auto version = get<uint32_t>(bytes, pos);
  if (version != kFormatVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw IntegrityError("checkpoint header truncated");
  Parsed p;
  try {
    p.header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is corrupt: ") + e.what());
  }
  p.payload_offset = pos + header_len;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::reconcile() {
  generator.validate();
  blender.resolution = generator.resolution;
  blender.num_styles = generator.num_styles();
  blender.w_dim = generator.w_dim;
  blender.validate();
}

json ModelConfig::to_json() const {
  return json{{"generator", generator.to_json()},
              {"blender", blender.to_json()},
              {"d_vid", d_vid.to_json()},
              {"c_view", c_view.to_json()},
              {"perceptual_seed", perceptual_seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  if (j.contains("generator")) c.generator = generator::GeneratorConfig::from_json(j["generator"]);
  if (j.contains("blender")) {
    // Geometry fields are derived; let partial blender configs omit them.
    json b = j["blender"];
    b["resolution"] = c.generator.resolution;
    b["num_styles"] = c.generator.num_styles();
    b["w_dim"] = c.generator.w_dim;
    c.blender = blender::BlenderConfig::from_json(b);
  }
  if (j.contains("d_vid")) c.d_vid = losses::VideoDiscriminatorConfig::from_json(j["d_vid"]);
  if (j.contains("c_view")) c.c_view = losses::ViewClassifierConfig::from_json(j["c_view"]);
  c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
  c.reconcile();
  return c;
}

std::string ModelConfig::hash() const { return config_hash(to_json().dump()); }

// ---------------------------------------------------------------------------
// ModelSet

ModelSet ModelSet::create(ModelConfig cfg, uint64_t init_seed) {
  cfg.reconcile();
  ModelSet m;
  m.config = cfg;
  m.gen = generator::StyleGenerator(cfg.generator, init_seed);
  m.blender = blender::AttIDBlender(cfg.blender, init_seed ^ 0xb1e0d);
  m.blender.set_latent_avg(m.gen.w_avg());
  torch::manual_seed(init_seed ^ 0xd1d);
  m.d_vid = losses::VideoDiscriminator(cfg.d_vid);
  m.c_view = losses::ViewClassifier(cfg.c_view);
  m.extractor = losses::PerceptualExtractor(cfg.perceptual_seed);
  m.apply_frozen();
  return m;
}

std::set<std::string> ModelSet::frozen() const {
  std::set<std::string> out = gen.frozen();
  if (blender.identity_ready()) out.insert("E_id");
  if (view_ready) out.insert("C_view");
  out.insert("V");
  return out;
}

void ModelSet::apply_frozen() {
  gen.set_frozen(gen.frozen());
  if (blender.identity_ready()) blender.mark_identity_ready();
  if (view_ready) {
    for (auto& p : c_view->parameters()) p.set_requires_grad(false);
    c_view->eval();
  }
  for (auto& p : extractor->parameters()) p.set_requires_grad(false);
}

std::vector<std::pair<std::string, torch::Tensor>> ModelSet::named_tensors() const {
  auto out = gen.named_tensors();
  for (auto& kv : blender.named_tensors()) out.push_back(std::move(kv));
  auto add = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("D_vid.", *d_vid);
  add("C_view.", *c_view);
  return out;
}

void ModelSet::to(torch::Dtype dtype) {
  gen.to(dtype);
  blender.to(dtype);
  d_vid->to(dtype);
  c_view->to(dtype);
  extractor->to(dtype);
}

// ---------------------------------------------------------------------------
// Archive

void save_checkpoint(const ModelSet& models, const std::string& path) {
  std::string payload;
  json index = json::array();
  for (const auto& [name, t] : models.named_tensors()) {
    auto c = t.detach().contiguous().cpu();
    const size_t nbytes = c.numel() * c.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_name(c.scalar_type())},
                     {"shape", c.sizes().vec()},
                     {"offset", payload.size()},
                     {"nbytes", nbytes}});
    payload.append(static_cast<const char*>(c.data_ptr()), nbytes);
  }
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  const auto& g = models.config.generator;
  json header{{"format", "gaiteditor-checkpoint"},
              {"resolution", g.resolution},
              {"C_latent", g.w_dim},
              {"L_style", g.num_styles()},
              {"step", models.step},
              {"generator_step", models.gen.step()},
              {"stage_completed", models.stage_completed},
              {"frozen", models.frozen()},
              {"identity_ready", models.blender.identity_ready()},
              {"view_ready", models.view_ready},
              {"config", models.config.to_json()},
              {"config_hash", models.config.hash()},
              {"tensors", index},
              {"payload_bytes", payload.size()},
              {"payload_crc32", crc}};
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<uint32_t>(out, kFormatVersion);
  put<uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint '" + path + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

json read_checkpoint_header(const std::string& path) {
  const std::string bytes = read_file(path);
  return parse(bytes, path).header;
}

ModelSet load_checkpoint(const std::string& path, const std::optional<std::string>& expected_hash) {
  const std::string bytes = read_file(path);
  const Parsed p = parse(bytes, path);
  const json& h = p.header;
  const size_t payload_bytes = h.value("payload_bytes", size_t{0});
  if (p.payload_offset + payload_bytes != bytes.size()) throw IntegrityError("checkpoint payload size mismatch");
  const char* payload = bytes.data() + p.payload_offset;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload), static_cast<uInt>(payload_bytes));
  if (crc != h.value("payload_crc32", 0UL)) throw IntegrityError("checkpoint checksum mismatch (archive corrupted)");

  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(h.at("config"));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint config unreadable: ") + e.what());
  }
  const std::string stored_hash = h.value("config_hash", std::string());
  if (stored_hash != cfg.hash()) throw IntegrityError("checkpoint config hash does not match its config");
  if (expected_hash && *expected_hash != stored_hash) {
    throw ConfigMismatchError("checkpoint config hash " + stored_hash + " does not match run config hash " +
                              *expected_hash);
  }

  ModelSet m = ModelSet::create(cfg, 0);
  std::map<std::string, torch::Tensor> targets;
  for (auto& [name, t] : m.named_tensors()) targets[name] = t;
  torch::NoGradGuard ng;
  size_t seen = 0;
  for (const auto& e : h.at("tensors")) {
    const std::string name = e.at("name");
    auto it = targets.find(name);
    if (it == targets.end()) throw IntegrityError("checkpoint tensor '" + name + "' has no destination");
    const auto dtype = dtype_from(e.at("dtype"));
    const std::vector<int64_t> shape = e.at("shape");
    const size_t offset = e.at("offset"), nbytes = e.at("nbytes");
    if (offset + nbytes > payload_bytes) throw IntegrityError("checkpoint tensor '" + name + "' out of bounds");
    auto src = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<size_t>(src.numel() * src.element_size()) != nbytes) {
      throw IntegrityError("checkpoint tensor '" + name + "' has inconsistent size");
    }
    std::memcpy(src.data_ptr(), payload + offset, nbytes);
    auto& dst = it->second;
    if (!dst.sizes().equals(src.sizes())) throw IntegrityError("checkpoint tensor '" + name + "' has wrong shape");
    if (name == "w_avg") {
      m.gen.set_w_avg(src);
    } else {
      dst.set_data(src);
    }
    ++seen;
  }
  if (seen != targets.size()) throw IntegrityError("checkpoint is missing tensors");

  m.stage_completed = h.value("stage_completed", 0);
  m.step = h.value("step", int64_t{0});
  m.gen.set_step(h.value("generator_step", int64_t{0}));
  m.view_ready = h.value("view_ready", false);
  std::set<std::string> frozen = h.value("frozen", std::set<std::string>{});
  std::set<std::string> gen_frozen;
  for (const auto& n : {"M", "A", "G"}) {
    if (frozen.contains(n)) gen_frozen.insert(n);
  }
  m.gen.set_frozen(gen_frozen);
  if (h.value("identity_ready", false)) m.blender.mark_identity_ready();
  m.apply_frozen();
  m.blender.set_latent_avg(m.gen.w_avg());
  return m;
}

}  // namespace gaiteditor::training
