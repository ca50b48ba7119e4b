// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include "gaiteditor/data/sequence_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gaiteditor/error.hpp"
#include "json.hpp"

namespace gaiteditor::data {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<uint8_t> encode_png(const torch::Tensor& frame) {
  if (frame.dim() != 2) throw ShapeError("encode_png expects a [H, W] frame");
  auto bytes = (frame.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0f)
                   .round()
                   .to(torch::kUInt8)
                   .contiguous();
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.size(1));
  image.height = static_cast<png_uint_32>(frame.size(0));
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data_ptr(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data_ptr(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

torch::Tensor decode_png(const std::vector<uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError("unreadable image " + name + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  auto out = torch::empty({static_cast<int64_t>(image.height), static_cast<int64_t>(image.width)},
                          torch::kUInt8);
  if (!png_image_finish_read(&image, nullptr, out.data_ptr(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("unreadable image " + name + ": " + msg);
  }
  return out.to(torch::kFloat32) / 255.0f;
}

void write_png(const torch::Tensor& frame, const fs::path& path) {
  const auto bytes = encode_png(frame);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

torch::Tensor read_png(const fs::path& path) { return decode_png(read_file(path), path.string()); }

std::string meta_to_json(const SequenceMeta& meta) {
  json j;
  j["identity_id"] = meta.identity_id;
  if (meta.view_deg) j["view_deg"] = *meta.view_deg;
  j["attribute_tags"] = json::array();
  for (const auto& tag : meta.attribute_tags) j["attribute_tags"].push_back(tag);
  return j.dump(2);
}

SequenceMeta meta_from_json(const std::string& text) {
  SequenceMeta meta;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed meta.json: ") + e.what());
  }
  if (j.contains("identity_id")) meta.identity_id = j["identity_id"].get<std::string>();
  if (j.contains("view_deg") && !j["view_deg"].is_null()) meta.view_deg = j["view_deg"].get<double>();
  if (j.contains("attribute_tags")) {
    for (const auto& tag : j["attribute_tags"]) meta.attribute_tags.insert(tag.get<std::string>());
  }
  return meta;
}

torch::Tensor resize_bilinear(const torch::Tensor& frames, int64_t size) {
  if (frames.dim() != 3) throw ShapeError("resize_bilinear expects [T, H, W]");
  const int64_t T = frames.size(0), H = frames.size(1), W = frames.size(2);
  auto src = frames.to(torch::kFloat32).contiguous();
  if (H == size && W == size) return src.clamp(0.0, 1.0);
  auto out = torch::empty({T, size, size}, torch::kFloat32);
  auto s = src.accessor<float, 3>();
  auto d = out.accessor<float, 3>();
  const double sy = static_cast<double>(H) / size, sx = static_cast<double>(W) / size;
  for (int64_t i = 0; i < size; ++i) {
    const double fy = std::max(0.0, (i + 0.5) * sy - 0.5);
    const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), H - 1);
    const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
    const double wy = fy - y0;
    for (int64_t j = 0; j < size; ++j) {
      const double fx = std::max(0.0, (j + 0.5) * sx - 0.5);
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), W - 1);
      const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
      const double wx = fx - x0;
      for (int64_t t = 0; t < T; ++t) {
        const double top = s[t][y0][x0] * (1.0 - wx) + s[t][y0][x1] * wx;
        const double bottom = s[t][y1][x0] * (1.0 - wx) + s[t][y1][x1] * wx;
        d[t][i][j] = static_cast<float>(std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

SilhouetteSequence preprocess(const SilhouetteSequence& seq, int resolution) {
  if (!is_power_of_two(resolution)) {
    throw ValidationError("resolution must be a positive power of two, got " + std::to_string(resolution));
  }
  if (seq.empty()) throw ValidationError("cannot preprocess an empty sequence");
  return SilhouetteSequence(resize_bilinear(seq.frames(), resolution), seq.meta());
}

SilhouetteSequence load_sequence(const fs::path& dir, int resolution) {
  if (!fs::is_directory(dir)) throw IoError("not a sequence directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no frames found in " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<torch::Tensor> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    auto img = read_png(f);
    if (!frames.empty() && img.sizes() != frames.front().sizes()) {
      throw ValidationError("mixed frame sizes in " + dir.string() + ": " + f.filename().string());
    }
    frames.push_back(std::move(img));
  }
  SequenceMeta meta;
  const auto meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    const auto raw = read_file(meta_path);
    meta = meta_from_json(std::string(raw.begin(), raw.end()));
  }
  if (!is_power_of_two(resolution)) {
    throw ValidationError("resolution must be a positive power of two, got " + std::to_string(resolution));
  }
  return SilhouetteSequence(resize_bilinear(torch::stack(frames), resolution), std::move(meta));
}

void save_sequence(const SilhouetteSequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  char name[32];
  for (int64_t t = 0; t < seq.length(); ++t) {
    std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(t));
    write_png(seq.frame(t), dir / name);
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta_to_json(seq.meta()) << "\n";
}

SequenceCollection load_dataset(const fs::path& root, int resolution) {
  if (!fs::is_directory(root)) throw IoError("not a dataset directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  if (dirs.empty()) throw IoError("no sequence directories in " + root.string());
  std::sort(dirs.begin(), dirs.end());
  SequenceCollection out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_sequence(d, resolution));
  return out;
}

void save_dataset(const SequenceCollection& seqs, const fs::path& root) {
  char name[32];
  for (size_t k = 0; k < seqs.size(); ++k) {
    std::snprintf(name, sizeof name, "seq_%06zu", k);
    save_sequence(seqs[k], root / name);
  }
}

}  // namespace gaiteditor::data
