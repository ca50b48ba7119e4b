// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

// gaiteditor: command-line front end for data synthesis, training, editing,
// direction curation, embedding export, the edit service and augmentation.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gaiteditor/data/sequence_io.hpp"
#include "gaiteditor/data/walker.hpp"
#include "gaiteditor/editor/catalog.hpp"
#include "gaiteditor/editor/latent_editor.hpp"
#include "gaiteditor/error.hpp"
#include "gaiteditor/gateway/augment.hpp"
#include "gaiteditor/gateway/service.hpp"
#include "gaiteditor/generator/latent_training.hpp"
#include "gaiteditor/training/model_set.hpp"
#include "gaiteditor/training/orchestrator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gaiteditor;

namespace {

int resolution_of(const training::ModelSet& m) { return m.config.generator.resolution; }

data::SequenceCollection load_many(const std::vector<std::string>& dirs, int res) {
  data::SequenceCollection out;
  for (const auto& d : dirs) {
    // A directory holding frames is one sequence; otherwise a dataset root.
    bool has_png = false;
    for (const auto& e : fs::directory_iterator(d)) has_png |= e.path().extension() == ".png";
    if (has_png) {
      out.push_back(data::load_sequence(d, res));
    } else {
      for (auto& s : data::load_dataset(d, res)) out.push_back(std::move(s));
    }
  }
  return out;
}

void progress(const std::string& what, int64_t step, const std::string& detail) {
  std::cerr << what << " step " << step << ' ' << detail << '\n';
}

// --- subcommand state -------------------------------------------------------

struct SynthArgs {
  int count = 4;
  uint64_t seed = 0;
  std::string out;
  int resolution = 64;
  int T = 16;
  std::vector<double> views;
};

struct GanArgs {
  std::string config, data, out;
  int steps = -1;
  uint64_t seed = 0;
};

struct BlenderArgs {
  std::string config, ckpt, out, metrics;
  int stage = 2;
  int steps = -1;
};

struct InvertArgs {
  std::string ckpt, seq, out, frames;
};

struct EditArgs {
  std::string mode = "navigate", ckpt, seq, attr, id, out, catalog, label;
  int layer = -1, channel = -1;
  double alpha = 0.0;
};

struct SweepArgs {
  std::string ckpt, out;
  int top_k = 20, samples = 8;
  uint64_t seed = 0;
};

struct ListArgs {
  std::string catalog, status;
};

struct ExportArgs {
  std::string ckpt, out;
  std::vector<std::string> real, edited;
};

struct ServeArgs {
  std::string config, ckpt, catalog, host, sequences, static_dir, encoding;
  int port = -1, max_edits = -1;
};

struct AugArgs {
  std::string ckpt, catalog, data, mode = "appearance", out;
  double probability = 0.2;
  uint64_t seed = 0;
  int rounds = 1;
};

// --- handlers ---------------------------------------------------------------

void run_synth(const SynthArgs& a) {
  data::CorpusSpec spec;
  spec.count = a.count;
  spec.seed = a.seed;
  spec.resolution = a.resolution;
  spec.T = a.T;
  if (!a.views.empty()) spec.views = a.views;
  auto seqs = data::synthesize_corpus(spec);
  data::save_dataset(seqs, a.out);
  std::cout << json{{"sequences", seqs.size()}, {"out", a.out}}.dump() << '\n';
}

void run_train_gan(const GanArgs& a) {
  training::RunConfig rc;
  if (!a.config.empty()) rc = training::RunConfig::load(a.config);
  if (!a.data.empty()) rc.data = json{{"dir", a.data}};
  if (a.steps >= 0) rc.latent.steps = a.steps;
  if (a.seed != 0) rc.init_seed = a.seed;
  rc.model.reconcile();
  const auto dataset = rc.load_data();
  auto models = training::ModelSet::create(rc.model, rc.init_seed);
  const auto t0 = std::chrono::steady_clock::now();
  rc.latent.on_step = [&](int s, double d, double g) {
    if (s % 100 == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      progress("train-gan", s, "d=" + std::to_string(d) + " g=" + std::to_string(g) + " t=" + std::to_string(secs));
    }
  };
  const auto stats = generator::train_latent_space(models.gen, dataset, rc.latent);
  models.stage_completed = std::max(models.stage_completed, 1);
  const std::string out = a.out.empty() ? (fs::path(rc.output_dir) / "stage1.ckpt").string() : a.out;
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  training::save_checkpoint(models, out);
  std::cout << json{{"steps", stats.steps_run}, {"d_loss", stats.last_d_loss}, {"g_loss", stats.last_g_loss},
                    {"checkpoint", out}}
                   .dump()
            << '\n';
}

void run_train_blender(const BlenderArgs& a) {
  if (a.stage != 2 && a.stage != 3) throw ValidationError("--stage must be 2 or 3");
  const auto rc = training::RunConfig::load(a.config);
  auto cfg = rc.stage(static_cast<data::Stage>(a.stage));
  if (a.steps >= 0) cfg.steps = a.steps;
  const fs::path dir = rc.output_dir;
  const std::string in = a.ckpt.empty() ? (dir / ("stage" + std::to_string(a.stage - 1) + ".ckpt")).string() : a.ckpt;
  const std::string out = a.out.empty() ? (dir / ("stage" + std::to_string(a.stage) + ".ckpt")).string() : a.out;
  const std::string metrics =
      a.metrics.empty() ? (dir / ("stage" + std::to_string(a.stage) + ".metrics.jsonl")).string() : a.metrics;
  auto models = training::load_checkpoint(in, rc.model.hash());
  const auto dataset = rc.load_data();
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  auto result = training::train_stage(std::move(models), cfg, dataset, metrics, [](const training::IterationRecord& r) {
    if (r.step % 100 == 0) progress("train-blender", r.step, "total=" + std::to_string(r.total));
  });
  training::save_checkpoint(result.models, out);
  std::cout << json{{"stage", a.stage}, {"steps", result.records.size()}, {"checkpoint", out}, {"metrics", metrics}}
                   .dump()
            << '\n';
}

void run_invert(const InvertArgs& a) {
  editor::LatentEditor ed(training::load_checkpoint(a.ckpt));
  const auto seq = data::load_sequence(a.seq, resolution_of(ed.models()));
  auto inv = ed.invert(seq);
  torch::save(inv.codes.codes.contiguous(), a.out);
  if (!a.frames.empty()) data::save_sequence(inv.reconstruction, a.frames);
  std::cout << json{{"codes", a.out},
                    {"shape", inv.codes.codes.sizes().vec()},
                    {"psnr_db", training::psnr(inv.reconstruction.frames(), seq.frames())}}
                   .dump()
            << '\n';
}

void run_edit(const EditArgs& a) {
  editor::LatentEditor ed(training::load_checkpoint(a.ckpt));
  const int res = resolution_of(ed.models());
  data::SilhouetteSequence out;
  if (a.mode == "swap") {
    if (a.attr.empty() || a.id.empty()) throw ValidationError("swap mode needs --attr and --id");
    out = ed.swap_attributes(data::load_sequence(a.attr, res), data::load_sequence(a.id, res));
  } else if (a.mode == "navigate") {
    if (a.seq.empty()) throw ValidationError("navigate mode needs --seq");
    editor::SemanticDirection d;
    d.layer = a.layer;
    d.channel = a.channel;
    if (!a.catalog.empty()) {
      const auto cat = editor::catalog_load(a.catalog);
      if (const auto* known = cat.find(a.layer, a.channel)) d = *known;
    }
    if (!a.label.empty()) d.label = a.label;
    const auto seq = data::load_sequence(a.seq, res);
    out = ed.edit_appearance(seq, d, a.alpha);
    out.meta() = seq.meta();
    out.meta().attribute_tags.insert("edited");
  } else {
    throw ValidationError("--mode must be navigate or swap");
  }
  data::save_sequence(out, a.out);
  std::cout << json{{"mode", a.mode}, {"T", out.length()}, {"out", a.out}}.dump() << '\n';
}

void run_sweep(const SweepArgs& a) {
  const auto models = training::load_checkpoint(a.ckpt);
  editor::SweepConfig sc;
  sc.top_k = a.top_k;
  sc.samples = a.samples;
  sc.seed = a.seed;
  editor::DirectionCatalog cat;
  cat.generator_config_hash = models.gen.config().hash();
  for (auto& d : editor::sweep_directions(models.gen, sc)) cat.add(std::move(d));
  editor::catalog_save(cat, a.out);
  std::cout << json{{"directions", cat.directions.size()}, {"out", a.out}}.dump() << '\n';
}

void run_list(const ListArgs& a) {
  const auto cat = editor::catalog_load(a.catalog);
  for (const auto& d : cat.directions) {
    const std::string status = editor::to_string(d.curation_status);
    if (!a.status.empty() && status != a.status) continue;
    std::cout << d.layer << '\t' << d.channel << '\t' << status << '\t' << (d.label.empty() ? "-" : d.label) << '\t'
              << d.alpha_range.first << ".." << d.alpha_range.second;
    if (d.saliency) std::cout << '\t' << *d.saliency;
    std::cout << '\n';
  }
}

void run_export(const ExportArgs& a) {
  const auto models = training::load_checkpoint(a.ckpt);
  if (!models.blender.identity_ready()) throw NotLoadedError("checkpoint has no trained identity encoder");
  std::vector<editor::EmbeddingSource> src;
  for (auto& s : load_many(a.real, resolution_of(models))) src.push_back({std::move(s), "real"});
  for (auto& s : load_many(a.edited, resolution_of(models))) src.push_back({std::move(s), "edited"});
  editor::export_embeddings(src, models.blender, a.out);
  std::cout << json{{"rows", src.size()}, {"out", a.out}}.dump() << '\n';
}

gateway::EditService* g_service = nullptr;

void run_serve(const ServeArgs& a) {
  gateway::ServiceConfig sc;
  std::string path = a.config;
  if (path.empty()) {
    if (const char* env = std::getenv("GAITEDITOR_CONFIG")) path = env;
  }
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open service config '" + path + "'");
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw ValidationError("service config '" + path + "' is not valid JSON: " + e.what());
    }
    sc = gateway::ServiceConfig::from_json(j.contains("service") ? j["service"] : j);
  }
  if (!a.ckpt.empty()) sc.checkpoint = a.ckpt;
  if (!a.catalog.empty()) sc.catalog = a.catalog;
  if (!a.host.empty()) sc.host = a.host;
  if (a.port >= 0) sc.port = a.port;
  if (a.max_edits > 0) sc.max_concurrent_edits = a.max_edits;
  if (!a.sequences.empty()) sc.sequences_dir = a.sequences;
  if (!a.static_dir.empty()) sc.static_dir = a.static_dir;
  if (!a.encoding.empty()) sc.frame_encoding = a.encoding;
  auto svc = gateway::EditService::from_config(sc);
  if (svc->catalog_warning()) std::cerr << "warning: " << *svc->catalog_warning() << '\n';
  g_service = svc.get();
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serving on " << sc.host << ':' << sc.port << '\n';
  svc->listen(sc.host, sc.port, sc.static_dir);
  g_service = nullptr;
}

void run_augment(const AugArgs& a) {
  editor::LatentEditor ed(training::load_checkpoint(a.ckpt));
  editor::DirectionCatalog cat;
  if (!a.catalog.empty()) cat = editor::catalog_load(a.catalog);
  gateway::AugmentPolicy pol = gateway::AugmentPolicy::from_json(
      json{{"probability", a.probability}, {"mode", a.mode}, {"rng_seed", a.seed}});
  const auto batch = load_many({a.data}, resolution_of(ed.models()));
  int64_t edited = 0, total = 0;
  gateway::AugmentedBatch last;
  for (int r = 0; r < a.rounds; ++r) {
    last = gateway::augment_batch(batch, pol, ed, cat, r);
    for (bool e : last.edited) edited += e;
    total += static_cast<int64_t>(last.edited.size());
  }
  if (!a.out.empty()) data::save_dataset(last.sequences, a.out);
  std::cout << json{{"draws", total},
                    {"edited", edited},
                    {"edited_fraction", total ? static_cast<double>(edited) / static_cast<double>(total) : 0.0},
                    {"probability", a.probability}}
                   .dump()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaiteditor: gait silhouette latent editing"};
  app.require_subcommand(1);

  auto* data_cmd = app.add_subcommand("data", "Dataset utilities");
  data_cmd->require_subcommand(1);
  SynthArgs synth;
  auto* synth_cmd = data_cmd->add_subcommand("synth", "Render a synthetic walker corpus");
  synth_cmd->add_option("--count", synth.count, "Number of sequences")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Corpus seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--resolution", synth.resolution, "Frame size");
  synth_cmd->add_option("--frames", synth.T, "Frames per sequence");
  synth_cmd->add_option("--views", synth.views, "Viewpoints in degrees");

  GanArgs gan;
  auto* gan_cmd = app.add_subcommand("train-gan", "Stage I: train the style generator");
  gan_cmd->add_option("--config", gan.config, "Run config file");
  gan_cmd->add_option("--data", gan.data, "Dataset directory (overrides the config)");
  gan_cmd->add_option("--steps", gan.steps, "Training steps");
  gan_cmd->add_option("--seed", gan.seed, "Initialization seed");
  gan_cmd->add_option("--out", gan.out, "Output checkpoint");

  BlenderArgs bl;
  auto* bl_cmd = app.add_subcommand("train-blender", "Stage II or III: train the blender");
  bl_cmd->add_option("--config", bl.config, "Run config file")->required();
  bl_cmd->add_option("--stage", bl.stage, "2 or 3")->required();
  bl_cmd->add_option("--ckpt", bl.ckpt, "Input checkpoint (default: previous stage in output_dir)");
  bl_cmd->add_option("--out", bl.out, "Output checkpoint");
  bl_cmd->add_option("--metrics", bl.metrics, "Metrics JSON-lines path");
  bl_cmd->add_option("--steps", bl.steps, "Override the configured step count");

  InvertArgs inv;
  auto* inv_cmd = app.add_subcommand("invert", "Invert a sequence into W+ codes");
  inv_cmd->add_option("--ckpt", inv.ckpt, "Blender checkpoint")->required();
  inv_cmd->add_option("--seq", inv.seq, "Sequence directory")->required();
  inv_cmd->add_option("--out", inv.out, "Output codes file")->required();
  inv_cmd->add_option("--frames", inv.frames, "Also write the reconstruction here");

  EditArgs ed;
  auto* ed_cmd = app.add_subcommand("edit", "Edit a sequence by navigation or swapping");
  ed_cmd->add_option("--mode", ed.mode, "navigate or swap")->check(CLI::IsMember({"navigate", "swap"}));
  ed_cmd->add_option("--ckpt", ed.ckpt, "Blender checkpoint")->required();
  ed_cmd->add_option("--seq", ed.seq, "Sequence to navigate");
  ed_cmd->add_option("--attr", ed.attr, "Attribute (viewpoint) source for swap");
  ed_cmd->add_option("--id", ed.id, "Identity source for swap");
  ed_cmd->add_option("--layer", ed.layer, "Style layer");
  ed_cmd->add_option("--channel", ed.channel, "Style channel");
  ed_cmd->add_option("--alpha", ed.alpha, "Edit strength");
  ed_cmd->add_option("--catalog", ed.catalog, "Catalog for direction metadata");
  ed_cmd->add_option("--label", ed.label, "Direction label");
  ed_cmd->add_option("--out", ed.out, "Output sequence directory")->required();

  auto* dir_cmd = app.add_subcommand("directions", "Semantic direction catalog");
  dir_cmd->require_subcommand(1);
  SweepArgs sw;
  auto* sw_cmd = dir_cmd->add_subcommand("sweep", "Rank single-channel directions by saliency");
  sw_cmd->add_option("--ckpt", sw.ckpt, "Checkpoint with a trained generator")->required();
  sw_cmd->add_option("--out", sw.out, "Output catalog JSON")->required();
  sw_cmd->add_option("--top-k", sw.top_k, "Candidates to keep (0 = all)");
  sw_cmd->add_option("--samples", sw.samples, "Probe samples per channel");
  sw_cmd->add_option("--seed", sw.seed, "Probe seed");
  ListArgs ls;
  auto* ls_cmd = dir_cmd->add_subcommand("list", "Print catalog entries");
  ls_cmd->add_option("--catalog", ls.catalog, "Catalog JSON")->required();
  ls_cmd->add_option("--status", ls.status, "Filter by status")
      ->check(CLI::IsMember({"candidate", "kept", "discarded"}));

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-embeddings", "Write identity embeddings as CSV");
  ex_cmd->add_option("--ckpt", ex.ckpt, "Blender checkpoint")->required();
  ex_cmd->add_option("--real", ex.real, "Real sequence or dataset directories")->required();
  ex_cmd->add_option("--edited", ex.edited, "Edited sequence or dataset directories");
  ex_cmd->add_option("--out", ex.out, "Output CSV")->required();

  ServeArgs sv;
  auto* sv_cmd = app.add_subcommand("serve", "Run the HTTP edit and curation service");
  sv_cmd->add_option("--config", sv.config, "Service config (default: $GAITEDITOR_CONFIG)");
  sv_cmd->add_option("--ckpt", sv.ckpt, "Blender checkpoint");
  sv_cmd->add_option("--catalog", sv.catalog, "Catalog JSON");
  sv_cmd->add_option("--host", sv.host, "Bind address");
  sv_cmd->add_option("--port", sv.port, "Bind port");
  sv_cmd->add_option("--max-concurrent-edits", sv.max_edits, "Inference slots");
  sv_cmd->add_option("--sequences", sv.sequences, "Dataset directory to preregister");
  sv_cmd->add_option("--static", sv.static_dir, "UI assets to mount at /");
  sv_cmd->add_option("--frame-encoding", sv.encoding, "base64 or png")->check(CLI::IsMember({"base64", "png"}));

  AugArgs au;
  auto* au_cmd = app.add_subcommand("augment-demo", "Apply the online augmentation hook to a dataset");
  au_cmd->add_option("--ckpt", au.ckpt, "Blender checkpoint")->required();
  au_cmd->add_option("--catalog", au.catalog, "Catalog JSON (appearance and mixed modes)");
  au_cmd->add_option("--data", au.data, "Dataset directory")->required();
  au_cmd->add_option("--mode", au.mode, "appearance, viewpoint or mixed")
      ->check(CLI::IsMember({"appearance", "viewpoint", "mixed"}));
  au_cmd->add_option("--probability", au.probability, "Edit probability");
  au_cmd->add_option("--seed", au.seed, "RNG seed");
  au_cmd->add_option("--rounds", au.rounds, "Batches to draw")->check(CLI::PositiveNumber);
  au_cmd->add_option("--out", au.out, "Write the last augmented batch here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) run_synth(synth);
    if (gan_cmd->parsed()) run_train_gan(gan);
    if (bl_cmd->parsed()) run_train_blender(bl);
    if (inv_cmd->parsed()) run_invert(inv);
    if (ed_cmd->parsed()) run_edit(ed);
    if (sw_cmd->parsed()) run_sweep(sw);
    if (ls_cmd->parsed()) run_list(ls);
    if (ex_cmd->parsed()) run_export(ex);
    if (sv_cmd->parsed()) run_serve(sv);
    if (au_cmd->parsed()) run_augment(au);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
