// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_SYNTHETIC_HPP
#define ACTIONFORMER_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "actionformer/data.hpp"
#include "actionformer/error.hpp"
#include "actionformer/model.hpp"
#include "actionformer/targets.hpp"

namespace actionformer {

/// Parameters of the synthetic localization benchmark. Lengths and durations
/// are in feature steps.
struct SyntheticSpec {
  std::size_t num_train = 200;
  std::size_t num_test = 50;
  std::size_t min_length = 128;
  std::size_t max_length = 256;
  std::size_t feature_dim = 32;
  std::size_t num_classes = 3;
  std::size_t min_instances = 1;
  std::size_t max_instances = 5;
  double min_duration = 3.0;
  double max_duration = 64.0;
  std::size_t min_gap = 2;
  double noise = 0.5;          // std of the Gaussian background
  double amplitude = 1.0;      // peak signature strength inside an instance
  double envelope_tau = 0.4;   // edge softness of the instance envelope
  double fps = 30.0;
  double feature_stride = 4.0;
  std::size_t coverage_levels = 4;  // pyramid depth checked for level coverage (0 = skip)
  double coverage_init_range = 4.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) fail(ErrorKind::kConfig, "synthetic spec: " + msg);
    };
    check(num_train + num_test >= 1, "needs at least one video");
    check(min_length >= 1 && min_length <= max_length, "need 1 <= min_length <= max_length");
    check(feature_dim >= 1 && num_classes >= 1, "feature_dim and num_classes must be >= 1");
    check(min_instances >= 1 && min_instances <= max_instances, "need 1 <= min_instances <= max_instances");
    check(min_duration >= 1.0 && min_duration <= max_duration, "need 1 <= min_duration <= max_duration");
    check(noise >= 0.0 && amplitude > 0.0 && envelope_tau > 0.0, "noise >= 0, amplitude > 0, envelope_tau > 0");
    check(fps > 0.0 && feature_stride > 0.0, "fps and feature_stride must be > 0");
    const double needed = static_cast<double>(max_instances) * (min_duration + static_cast<double>(min_gap));
    check(needed <= static_cast<double>(min_length),
          "min_length too short for max_instances instances of min_duration");
  }
};

inline SyntheticSpec parse_synthetic_spec(const json& j, const std::string& where) {
  SyntheticSpec s;
  if (!j.is_object()) fail(ErrorKind::kFormat, where + ": synthetic spec must be an object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = json_field<std::decay_t<decltype(field)>>(j, key, where);
  };
  get("num_train", s.num_train);
  get("num_test", s.num_test);
  get("min_length", s.min_length);
  get("max_length", s.max_length);
  get("feature_dim", s.feature_dim);
  get("num_classes", s.num_classes);
  get("min_instances", s.min_instances);
  get("max_instances", s.max_instances);
  get("min_duration", s.min_duration);
  get("max_duration", s.max_duration);
  get("min_gap", s.min_gap);
  get("noise", s.noise);
  get("amplitude", s.amplitude);
  get("envelope_tau", s.envelope_tau);
  get("fps", s.fps);
  get("feature_stride", s.feature_stride);
  get("coverage_levels", s.coverage_levels);
  get("coverage_init_range", s.coverage_init_range);
  get("seed", s.seed);
  return s;
}

struct SyntheticDataset {
  std::vector<FeatureSequence> features;  // train videos first, then test
  AnnotationSet annotations;              // subsets "training" / "testing"
  std::vector<std::vector<float>> signatures;  // [C][D], unit norm
};

inline float synthetic_envelope(double t, double start, double end, double tau) {
  const double rise = 1.0 / (1.0 + std::exp(-(t - start) / tau));
  const double fall = 1.0 / (1.0 + std::exp(-(end - t) / tau));
  return static_cast<float>(rise * fall);
}

/// Positive-moment count per pyramid level over grid-unit annotations.
inline std::vector<std::size_t> level_positive_counts(const std::vector<std::vector<ActionInstance>>& videos,
                                                      const std::vector<std::size_t>& lengths,
                                                      const std::vector<RegressionRange>& ranges,
                                                      std::size_t num_classes, const LossConfig& cfg = {}) {
  std::vector<std::size_t> counts(ranges.size(), 0);
  for (std::size_t v = 0; v < videos.size(); ++v) {
    std::vector<LevelGeometry> geo;
    const auto lens = pyramid_lengths(lengths[v], ranges.size());
    for (std::size_t l = 0; l < ranges.size(); ++l) geo.push_back({lens[l], level_stride(l), ranges[l], {}});
    const auto t = assign_targets(videos[v], geo, num_classes, cfg);
    for (std::size_t l = 0; l < ranges.size(); ++l)
      counts[l] += static_cast<std::size_t>(std::count(t.levels[l].positive.begin(), t.levels[l].positive.end(), 1));
  }
  return counts;
}

/// Deterministic synthetic dataset: Gaussian noise plus, for every action,
/// amplitude * (class signature) * smooth envelope over its extent. Actions do
/// not overlap, have integer grid boundaries and log-uniform durations.
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  {
    std::mt19937_64 rng(derive_seed(spec.seed, 0, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      std::vector<double> u(spec.feature_dim);
      double norm = 0.0;
      for (auto& x : u) {
        x = normal(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      std::vector<float> sig(spec.feature_dim);
      for (std::size_t d = 0; d < spec.feature_dim; ++d) sig[d] = static_cast<float>(u[d] / norm);
      ds.signatures.push_back(std::move(sig));
    }
  }

  const std::size_t total = spec.num_train + spec.num_test;
  std::vector<std::vector<ActionInstance>> grid_actions;
  std::vector<std::size_t> lengths;
  for (std::size_t v = 0; v < total; ++v) {
    std::mt19937_64 rng(derive_seed(spec.seed, 1, v));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(spec.min_length, spec.max_length)(rng);
    const std::size_t count =
        std::uniform_int_distribution<std::size_t>(spec.min_instances, spec.max_instances)(rng);

    // Durations: log-uniform, rounded, shrunk to fit if needed.
    std::vector<double> dur(count);
    const double log_lo = std::log(spec.min_duration), log_hi = std::log(spec.max_duration);
    for (auto& d : dur) d = std::round(std::exp(log_lo + unit(rng) * (log_hi - log_lo)));
    const double budget = static_cast<double>(len) - static_cast<double>((count + 1) * spec.min_gap);
    double used = 0.0;
    for (double d : dur) used += d;
    if (used > budget) {
      const double factor = budget / used;
      used = 0.0;
      for (auto& d : dur) {
        d = std::max(std::ceil(spec.min_duration), std::floor(d * factor));
        used += d;
      }
    }
    // Free steps scattered between the count + 1 gaps.
    const auto free_steps = static_cast<std::size_t>(std::max(0.0, budget - used));
    std::vector<std::size_t> cuts(count);
    for (auto& c : cuts) c = std::uniform_int_distribution<std::size_t>(0, free_steps)(rng);
    std::sort(cuts.begin(), cuts.end());

    std::vector<ActionInstance> acts;
    double pos = 0.0;
    std::size_t prev_cut = 0;
    for (std::size_t i = 0; i < count; ++i) {
      pos += static_cast<double>(spec.min_gap + cuts[i] - prev_cut);
      prev_cut = cuts[i];
      const int label = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, spec.num_classes - 1)(rng));
      acts.push_back({pos, pos + dur[i], label, 1.0});
      pos += dur[i];
    }

    FeatureSequence seq;
    std::ostringstream id;
    id << (v < spec.num_train ? "train_" : "test_") << std::setw(5) << std::setfill('0')
       << (v < spec.num_train ? v : v - spec.num_train);
    seq.video_id = id.str();
    seq.length = len;
    seq.dim = spec.feature_dim;
    seq.fps = spec.fps;
    seq.feature_stride = spec.feature_stride;
    seq.clip_window = spec.feature_stride;
    seq.features.resize(len * spec.feature_dim);
    for (auto& x : seq.features) x = static_cast<float>(spec.noise * normal(rng));
    for (const auto& a : acts) {
      const auto& sig = ds.signatures[static_cast<std::size_t>(a.label)];
      // The envelope is negligible a few tau outside the segment.
      const auto lo = static_cast<std::size_t>(std::max(0.0, a.start - 8.0));
      const auto hi = static_cast<std::size_t>(std::min(static_cast<double>(len), a.end + 9.0));
      for (std::size_t t = lo; t < hi; ++t) {
        const float g = static_cast<float>(spec.amplitude) *
                        synthetic_envelope(static_cast<double>(t), a.start, a.end, spec.envelope_tau);
        for (std::size_t d = 0; d < spec.feature_dim; ++d) seq.features[t * spec.feature_dim + d] += g * sig[d];
      }
    }

    VideoAnnotation ann;
    ann.video_id = seq.video_id;
    ann.duration = seq.duration();
    ann.fps = spec.fps;
    ann.subset = v < spec.num_train ? "training" : "testing";
    for (const auto& a : acts) ann.actions.push_back(grid_segment_to_seconds(a, spec.fps, spec.feature_stride));
    ds.annotations.emplace(seq.video_id, std::move(ann));
    grid_actions.push_back(acts);
    lengths.push_back(len);
    ds.features.push_back(std::move(seq));
  }

  if (spec.coverage_levels > 0) {
    const auto ranges = make_regression_ranges(spec.coverage_levels, spec.coverage_init_range);
    const auto counts = level_positive_counts(grid_actions, lengths, ranges, spec.num_classes);
    for (std::size_t l = 0; l < counts.size(); ++l)
      require(counts[l] > 0, ErrorKind::kConfig,
              "synthetic spec: pyramid level " + std::to_string(l) +
                  " receives no positive moments; widen the duration range");
  }
  return ds;
}

/// Writes `<dir>/features/*.afmt`, `<dir>/features/manifest.json` and
/// `<dir>/annotations.json`.
inline void save_synthetic(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  save_feature_dir((fs::path(dir) / "features").string(), ds.features);
  write_text_file((fs::path(dir) / "annotations.json").string(), annotations_json(ds.annotations).dump(2) + "\n");
}

}  // namespace actionformer

#endif  // ACTIONFORMER_SYNTHETIC_HPP
