// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_DATA_HPP
#define ACTIONFORMER_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "actionformer/error.hpp"
#include "actionformer/tensor.hpp"
#include "actionformer/types.hpp"

// Feature file layout (.afmt, little-endian):
//   "AFMT" | u32 version = 1 | u32 T | u32 D | T * D f32, row-major
// fps, feature stride and clip window live in the manifest.json sidecar:
//   {"videos": [{"video_id", "file", "fps", "feature_stride", "clip_window"}]}

namespace actionformer {

using json = nlohmann::json;

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

/// Per-step features of one video.
struct FeatureSequence {
  std::string video_id;
  std::size_t length = 0;  // T
  std::size_t dim = 0;     // D
  std::vector<float> features;  // [T * D]
  double fps = 30.0;
  double feature_stride = 1.0;  // frames per feature step
  double clip_window = 1.0;     // frames seen by each feature (metadata only)

  /// Seconds covered by `steps` grid steps.
  double seconds(double steps) const { return steps * feature_stride / fps; }
  double duration() const { return seconds(static_cast<double>(length)); }
};

/// Ground truth of one video; actions in seconds.
struct VideoAnnotation {
  std::string video_id;
  double duration = 0.0;
  double fps = 30.0;
  std::string subset;
  std::vector<ActionInstance> actions;
};

using AnnotationSet = std::map<std::string, VideoAnnotation>;

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  os << text;
  if (!os) fail(ErrorKind::kIo, "write failed: " + path);
}

inline json parse_json_file(const std::string& path) {
  const auto text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, "malformed JSON in " + path + ": " + e.what());
  }
}

/// Reads a required field, mapping type errors to ErrorKind::kFormat.
template <typename V>
V json_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::kFormat, where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, where + ": bad field \"" + key + "\": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Feature files

inline void save_features(const std::string& path, const FeatureSequence& seq) {
  require(seq.features.size() == seq.length * seq.dim, ErrorKind::kShapeMismatch,
          "save_features: payload does not match T x D");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  const std::uint32_t header[3] = {kFeatureVersion, static_cast<std::uint32_t>(seq.length),
                                   static_cast<std::uint32_t>(seq.dim)};
  os.write("AFMT", 4);
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(seq.features.data()),
           static_cast<std::streamsize>(seq.features.size() * sizeof(float)));
  if (!os) fail(ErrorKind::kIo, "write failed: " + path);
}

/// Loads an .afmt payload. Metadata (id, fps, stride) is left at defaults;
/// see load_feature_dir for the manifest-aware loader.
inline FeatureSequence load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open feature file: " + path);
  char magic[4] = {};
  std::uint32_t header[3] = {};
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is) fail(ErrorKind::kFormat, "truncated feature header: " + path);
  if (std::memcmp(magic, "AFMT", 4) != 0) fail(ErrorKind::kFormat, "bad feature magic: " + path);
  if (header[0] != kFeatureVersion)
    fail(ErrorKind::kFormat, "unsupported feature version " + std::to_string(header[0]) + ": " + path);
  FeatureSequence seq;
  seq.length = header[1];
  seq.dim = header[2];
  if (seq.length == 0) fail(ErrorKind::kFormat, "feature file has T = 0: " + path);
  if (seq.dim == 0) fail(ErrorKind::kFormat, "feature file has D = 0: " + path);
  seq.features.resize(seq.length * seq.dim);
  is.read(reinterpret_cast<char*>(seq.features.data()),
          static_cast<std::streamsize>(seq.features.size() * sizeof(float)));
  if (!is) fail(ErrorKind::kFormat, "truncated feature payload: " + path);
  for (float v : seq.features)
    if (!std::isfinite(v)) fail(ErrorKind::kFormat, "non-finite feature value in " + path);
  seq.video_id = std::filesystem::path(path).stem().string();
  return seq;
}

struct ManifestEntry {
  std::string video_id;
  std::string file;
  double fps = 30.0;
  double feature_stride = 1.0;
  double clip_window = 1.0;
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("videos") || !j["videos"].is_array())
    fail(ErrorKind::kFormat, path + ": expected {\"videos\": [...]}");
  std::vector<ManifestEntry> out;
  for (const auto& v : j["videos"]) {
    ManifestEntry e;
    e.video_id = json_field<std::string>(v, "video_id", path);
    e.file = json_field<std::string>(v, "file", path);
    e.fps = json_field<double>(v, "fps", path);
    e.feature_stride = json_field<double>(v, "feature_stride", path);
    e.clip_window = v.contains("clip_window") ? json_field<double>(v, "clip_window", path) : e.feature_stride;
    if (!(e.fps > 0.0) || !(e.feature_stride > 0.0))
      fail(ErrorKind::kFormat, path + ": fps and feature_stride must be > 0 for " + e.video_id);
    out.push_back(std::move(e));
  }
  return out;
}

inline json manifest_json(const std::vector<ManifestEntry>& entries) {
  json videos = json::array();
  for (const auto& e : entries)
    videos.push_back({{"video_id", e.video_id}, {"file", e.file}, {"fps", e.fps},
                      {"feature_stride", e.feature_stride}, {"clip_window", e.clip_window}});
  return json{{"videos", videos}};
}

/// Loads every video listed in `<dir>/manifest.json`, in manifest order.
inline std::vector<FeatureSequence> load_feature_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = load_manifest((fs::path(dir) / "manifest.json").string());
  std::vector<FeatureSequence> out;
  for (const auto& e : manifest) {
    auto seq = load_features((fs::path(dir) / e.file).string());
    seq.video_id = e.video_id;
    seq.fps = e.fps;
    seq.feature_stride = e.feature_stride;
    seq.clip_window = e.clip_window;
    out.push_back(std::move(seq));
  }
  return out;
}

/// Writes `.afmt` files plus manifest.json into `dir` (created if needed).
inline void save_feature_dir(const std::string& dir, const std::vector<FeatureSequence>& seqs) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir + ": " + ec.message());
  std::vector<ManifestEntry> manifest;
  for (const auto& s : seqs) {
    const std::string file = s.video_id + ".afmt";
    save_features((fs::path(dir) / file).string(), s);
    manifest.push_back({s.video_id, file, s.fps, s.feature_stride, s.clip_window});
  }
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest_json(manifest).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Annotations

inline AnnotationSet parse_annotations(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("database") || !j["database"].is_object())
    fail(ErrorKind::kFormat, where + ": expected {\"database\": {...}}");
  AnnotationSet out;
  for (const auto& [vid, v] : j["database"].items()) {
    VideoAnnotation a;
    a.video_id = vid;
    a.duration = json_field<double>(v, "duration", where);
    a.fps = v.contains("fps") ? json_field<double>(v, "fps", where) : 30.0;
    a.subset = v.contains("subset") ? json_field<std::string>(v, "subset", where) : "";
    const json anns = v.contains("annotations") ? v["annotations"] : json::array();
    if (!anns.is_array()) fail(ErrorKind::kFormat, where + ": annotations of " + vid + " must be an array");
    for (const auto& an : anns) {
      const auto seg = json_field<std::vector<double>>(an, "segment", where);
      if (seg.size() != 2) fail(ErrorKind::kFormat, where + ": segment of " + vid + " must have 2 values");
      ActionInstance act{seg[0], seg[1], json_field<int>(an, "label_id", where), 1.0};
      if (!(act.start < act.end) || act.start < 0.0 || act.label < 0)
        fail(ErrorKind::kFormat, where + ": invalid segment in " + vid);
      a.actions.push_back(act);
    }
    out.emplace(vid, std::move(a));
  }
  return out;
}

inline AnnotationSet load_annotations(const std::string& path) {
  return parse_annotations(parse_json_file(path), path);
}

inline json annotations_json(const AnnotationSet& anns) {
  json db = json::object();
  for (const auto& [vid, a] : anns) {
    json list = json::array();
    for (const auto& act : a.actions) list.push_back({{"segment", {act.start, act.end}}, {"label_id", act.label}});
    db[vid] = {{"duration", a.duration}, {"fps", a.fps}, {"subset", a.subset}, {"annotations", list}};
  }
  return json{{"database", db}};
}

/// Ground truth of the videos in `subset` (all videos when empty), in seconds.
inline DetectionSet ground_truth_set(const AnnotationSet& anns, const std::string& subset = "") {
  DetectionSet out;
  for (const auto& [vid, a] : anns)
    if (subset.empty() || a.subset == subset) out[vid] = a.actions;
  return out;
}

// ---------------------------------------------------------------------------
// Grid <-> seconds

/// Guards against 1-ulp drift when a value that is an exact grid position in
/// seconds is mapped back.
inline constexpr double kGridEpsilon = 1e-6;

inline double grid_to_seconds(double grid, double fps, double feature_stride) {
  return grid * feature_stride / fps;
}

/// Seconds -> grid: start rounds down, end rounds up, so the labelled extent
/// never shrinks. A segment never collapses to zero length.
inline ActionInstance seconds_to_grid(const ActionInstance& a, double fps, double feature_stride) {
  ActionInstance g = a;
  g.start = std::floor(a.start * fps / feature_stride + kGridEpsilon);
  g.end = std::ceil(a.end * fps / feature_stride - kGridEpsilon);
  if (g.end <= g.start) g.end = g.start + 1.0;
  return g;
}

inline std::vector<ActionInstance> actions_to_grid(const std::vector<ActionInstance>& actions, double fps,
                                                   double feature_stride) {
  std::vector<ActionInstance> out;
  for (const auto& a : actions) out.push_back(seconds_to_grid(a, fps, feature_stride));
  return out;
}

inline ActionInstance grid_segment_to_seconds(const ActionInstance& a, double fps, double feature_stride) {
  ActionInstance s = a;
  s.start = grid_to_seconds(a.start, fps, feature_stride);
  s.end = grid_to_seconds(a.end, fps, feature_stride);
  return s;
}

// ---------------------------------------------------------------------------
// Predictions JSON: {"video_id": [{"start_sec", "end_sec", "label", "score"}]}

inline json predictions_json(const DetectionSet& preds) {
  json j = json::object();
  for (const auto& [vid, dets] : preds) {
    json list = json::array();
    for (const auto& d : dets)
      list.push_back({{"start_sec", d.start}, {"end_sec", d.end}, {"label", d.label}, {"score", d.score}});
    j[vid] = list;
  }
  return j;
}

inline DetectionSet parse_predictions(const json& j, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::kFormat, where + ": expected an object keyed by video id");
  DetectionSet out;
  for (const auto& [vid, list] : j.items()) {
    if (!list.is_array()) fail(ErrorKind::kFormat, where + ": predictions of " + vid + " must be an array");
    auto& dets = out[vid];
    for (const auto& p : list) {
      dets.push_back({json_field<double>(p, "start_sec", where), json_field<double>(p, "end_sec", where),
                      json_field<int>(p, "label", where), json_field<double>(p, "score", where)});
    }
  }
  return out;
}

inline DetectionSet load_predictions(const std::string& path) {
  return parse_predictions(parse_json_file(path), path);
}

// ---------------------------------------------------------------------------
// Windowing and resampling

/// Padded (or cropped) training input of fixed length.
struct TrainingWindow {
  std::size_t length = 0;  // T_max
  std::size_t dim = 0;
  std::vector<float> features;          // [T_max * D], zero beyond the valid prefix
  Mask mask;                            // [T_max]
  std::vector<ActionInstance> actions;  // window-local grid units
  std::size_t offset = 0;               // crop start in the source sequence
};

namespace detail {

/// Actions clipped to [offset, offset + len), translated to window-local
/// coordinates. Partially visible actions survive when at least `keep`
/// of their span remains.
inline std::vector<ActionInstance> clip_actions(const std::vector<ActionInstance>& actions, double offset,
                                                double len, double keep) {
  std::vector<ActionInstance> out;
  for (const auto& a : actions) {
    const double s = std::max(a.start - offset, 0.0);
    const double e = std::min(a.end - offset, len);
    if (!(e > s)) continue;
    if (e - s < keep * a.length()) continue;
    out.push_back({s, e, a.label, a.score});
  }
  return out;
}

}  // namespace detail

inline constexpr double kPartialActionKeep = 0.25;

/// Pads sequences up to `max_len`; longer ones are cropped to a uniformly
/// random window that keeps at least one action (see clip_actions). When no
/// such window exists, any crop is returned.
template <typename Rng>
TrainingWindow sample_window(const FeatureSequence& seq, const std::vector<ActionInstance>& grid_actions,
                             std::size_t max_len, Rng& rng) {
  require(max_len >= 1, ErrorKind::kInvalidArgument, "sample_window: max_len must be >= 1");
  require(seq.length >= 1 && seq.features.size() == seq.length * seq.dim, ErrorKind::kShapeMismatch,
          "sample_window: malformed feature sequence");
  TrainingWindow w;
  w.length = max_len;
  w.dim = seq.dim;
  w.features.assign(max_len * seq.dim, 0.0f);
  w.mask.assign(max_len, 0);
  const double window = static_cast<double>(max_len);

  std::size_t offset = 0;
  if (seq.length > max_len) {
    const std::size_t last = seq.length - max_len;
    // Valid starts, enumerated once; uniform choice among them.
    std::vector<std::size_t> valid;
    for (std::size_t o = 0; o <= last; ++o)
      if (!detail::clip_actions(grid_actions, static_cast<double>(o), window, kPartialActionKeep).empty())
        valid.push_back(o);
    if (valid.empty()) {
      offset = std::uniform_int_distribution<std::size_t>(0, last)(rng);
    } else {
      offset = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    }
  }
  const std::size_t n = std::min(max_len, seq.length - offset);
  std::copy(seq.features.begin() + static_cast<std::ptrdiff_t>(offset * seq.dim),
            seq.features.begin() + static_cast<std::ptrdiff_t>((offset + n) * seq.dim), w.features.begin());
  std::fill(w.mask.begin(), w.mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
  w.offset = offset;
  w.actions = detail::clip_actions(grid_actions, static_cast<double>(offset), static_cast<double>(n),
                                   seq.length > max_len ? kPartialActionKeep : 0.0);
  return w;
}

/// Linear interpolation onto `target_len` steps with both endpoints
/// preserved. The feature stride is rescaled so the duration is unchanged.
inline FeatureSequence resize_fixed(const FeatureSequence& seq, std::size_t target_len) {
  require(target_len >= 1, ErrorKind::kInvalidArgument, "resize_fixed: target_len must be >= 1");
  if (target_len == seq.length) return seq;
  FeatureSequence out = seq;
  out.length = target_len;
  out.features.assign(target_len * seq.dim, 0.0f);
  for (std::size_t i = 0; i < target_len; ++i) {
    const double pos = target_len == 1 || seq.length == 1
                           ? 0.0
                           : static_cast<double>(i) * static_cast<double>(seq.length - 1) /
                                 static_cast<double>(target_len - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(std::floor(pos)), seq.length - 1);
    const std::size_t hi = std::min(lo + 1, seq.length - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t d = 0; d < seq.dim; ++d) {
      const double a = seq.features[lo * seq.dim + d], b = seq.features[hi * seq.dim + d];
      out.features[i * seq.dim + d] = static_cast<float>(frac == 0.0 ? a : a + frac * (b - a));
    }
  }
  out.feature_stride = seq.feature_stride * static_cast<double>(seq.length) / static_cast<double>(target_len);
  return out;
}

/// Keeps every `factor`-th step: ceil(T / factor) steps, stride x factor.
inline FeatureSequence stride_downsample(const FeatureSequence& seq, std::size_t factor) {
  require(factor >= 1, ErrorKind::kInvalidArgument, "stride_downsample: factor must be >= 1");
  if (factor == 1) return seq;
  FeatureSequence out = seq;
  out.length = (seq.length + factor - 1) / factor;
  out.features.clear();
  out.features.reserve(out.length * seq.dim);
  for (std::size_t t = 0; t < seq.length; t += factor)
    out.features.insert(out.features.end(), seq.features.begin() + static_cast<std::ptrdiff_t>(t * seq.dim),
                        seq.features.begin() + static_cast<std::ptrdiff_t>((t + 1) * seq.dim));
  out.feature_stride = seq.feature_stride * static_cast<double>(factor);
  out.clip_window = seq.clip_window;
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

/// A video ready for training or inference: features plus grid-unit actions.
struct Video {
  FeatureSequence seq;
  VideoAnnotation annotation;           // seconds
  std::vector<ActionInstance> actions;  // grid units
};

/// Joins features and annotations of one subset (all videos when empty).
/// Videos are ordered by id. Every annotated video of the subset must have
/// features.
inline std::vector<Video> join_dataset(const std::vector<FeatureSequence>& features, const AnnotationSet& anns,
                                       const std::string& subset) {
  std::map<std::string, const FeatureSequence*> by_id;
  for (const auto& f : features) by_id[f.video_id] = &f;
  std::vector<Video> out;
  for (const auto& [vid, a] : anns) {
    if (!subset.empty() && a.subset != subset) continue;
    const auto it = by_id.find(vid);
    if (it == by_id.end()) fail(ErrorKind::kIo, "no features for annotated video " + vid);
    Video v{*it->second, a, {}};
    for (const auto& act : a.actions) {
      auto g = seconds_to_grid(act, v.seq.fps, v.seq.feature_stride);
      g.end = std::min(g.end, static_cast<double>(v.seq.length));
      if (g.end > g.start) v.actions.push_back(g);
    }
    out.push_back(std::move(v));
  }
  return out;
}

/// Splits a run seed into an independent stream per (purpose, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

}  // namespace actionformer

#endif  // ACTIONFORMER_DATA_HPP
