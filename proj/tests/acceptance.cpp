// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Tolerances are pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "actionformer/actionformer.hpp"
#include "oracles.hpp"
#include "profile_fixture.hpp"

namespace af = actionformer;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

template <typename T>
af::Tensor<T> random_input(std::size_t len, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(len * dim);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return af::Tensor<T>(af::Shape{len, dim}, std::move(v));
}

// --- 1 ---------------------------------------------------------------------
void gradient_suite(Outcome& o) {
  const auto t0 = Clock::now();
  const auto results = af::run_gradient_suite();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  bool model_seen = false;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    o.require(r.passed, r.name);
    model_seen = model_seen || r.name == "model_end_to_end";
  }
  o.require(model_seen, "end-to-end model check present");
  o.require(secs < 120.0, "runtime < 120 s");
  o.detail << results.size() << " checks, max rel err " << worst << ", " << secs << " s";
}

// --- 2 ---------------------------------------------------------------------
void attention_equivalence(Outcome& o) {
  using TF = af::Tensor<float>;
  double worst = 0.0;
  for (std::size_t len : {8u, 37u, 128u}) {
    const TF q = random_input<float>(len, 16, 10 + len), k = random_input<float>(len, 16, 20 + len),
             v = random_input<float>(len, 16, 30 + len);
    const auto local = af::local_attention(q, k, v, {}, 2 * len - 1, 4);
    const auto dense = af::dense_attention(q, k, v, {}, 4);
    for (std::size_t i = 0; i < local.numel(); ++i)
      worst = std::max(worst, double(std::abs(local.data()[i] - dense.data()[i])));
  }
  const TF q = random_input<float>(128, 16, 1), k = random_input<float>(128, 16, 2), v = random_input<float>(128, 16, 3);
  const auto local = af::local_attention(q, k, v, {}, 19, 4);
  const auto dense = af::dense_attention(q, k, v, {}, 4);
  double narrow = 0.0;
  for (std::size_t i = 0; i < local.numel(); ++i)
    narrow = std::max(narrow, double(std::abs(local.data()[i] - dense.data()[i])));
  o.require(worst <= 1e-6, "W = 2T-1 matches dense within 1e-6");
  o.require(narrow > 1e-3, "W = 19 at T = 128 differs");
  o.detail << "wide max diff " << worst << ", W=19 max diff " << narrow;
}

// --- 3 ---------------------------------------------------------------------
void pyramid_shapes(Outcome& o) {
  const af::ModelConfig cfg;
  af::ActionFormer<float> model(cfg, 1);
  af::NoGradGuard guard;
  const auto out = model.forward(random_input<float>(2304, cfg.input_dim, 4));
  const std::vector<std::size_t> want = {2304, 1152, 576, 288, 144, 72};
  const std::vector<std::pair<double, double>> ranges = {{0, 4}, {4, 8}, {8, 16}, {16, 32}, {32, 64}, {64, INFINITY}};
  o.require(out.levels.size() == want.size(), "six levels");
  for (std::size_t l = 0; l < std::min(want.size(), out.levels.size()); ++l) {
    const auto& lv = out.levels[l];
    o.require(lv.features.shape()[0] == want[l] && lv.cls_logits.shape()[0] == want[l] && lv.reg.shape()[0] == want[l],
              "length of level " + std::to_string(l));
    o.require(lv.cls_logits.shape()[1] == cfg.num_classes && lv.reg.shape()[1] == 2, "head widths");
    o.require(lv.range.min == ranges[l].first && lv.range.max == ranges[l].second, "range of level " + std::to_string(l));
    o.require(lv.stride == (std::size_t{1} << l), "stride of level " + std::to_string(l));
  }
  o.detail << "lengths";
  for (const auto& lv : out.levels) o.detail << ' ' << lv.cls_logits.shape()[0];
}

// --- 4 ---------------------------------------------------------------------
void padding_invariance(Outcome& o) {
  af::ModelConfig cfg;
  cfg.input_dim = 64;
  cfg.embed_dim = 64;
  cfg.scale_init = 0.5;  // make every residual branch contribute
  af::ActionFormer<float> model(cfg, 9);
  af::NoGradGuard guard;
  const std::size_t n = 300, padded = 2304;
  const auto x = random_input<float>(n, cfg.input_dim, 6);
  std::vector<float> xp(padded * cfg.input_dim, 0.0f);
  std::copy(x.data().begin(), x.data().end(), xp.begin());
  af::Mask mask(padded, 0);
  std::fill(mask.begin(), mask.begin() + n, 1);
  const auto a = model.forward(x);
  const auto b = model.forward(af::Tensor<float>(af::Shape{padded, cfg.input_dim}, xp), mask);
  const auto lens = af::pyramid_lengths(n, cfg.num_levels());
  double worst = 0.0;
  for (std::size_t l = 0; l < lens.size(); ++l) {
    for (std::size_t i = 0; i < lens[l] * cfg.num_classes; ++i)
      worst = std::max(worst, std::abs(double(a.levels[l].cls_logits.data()[i]) - b.levels[l].cls_logits.data()[i]));
    for (std::size_t i = 0; i < lens[l] * 2; ++i)
      worst = std::max(worst, std::abs(double(a.levels[l].reg.data()[i]) - b.levels[l].reg.data()[i]));
  }
  o.require(worst <= 1e-5, "shift <= 1e-5");
  o.detail << "max shift " << worst;
}

// --- 5 ---------------------------------------------------------------------
void oracle_equivalence(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2026);
  const auto ec = af::EvalConfig::thumos();
  std::size_t map_bad = 0, nms_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto inst = oracle::random_instance(rng);
    const auto got = af::map_at(inst.preds, inst.gts, ec);
    const auto [maps, avg] = oracle::map_at(inst.preds, inst.gts, ec.tiou_thresholds);
    if (got.map != maps || got.average_map != avg) ++map_bad;

    std::vector<af::Detection> dets;
    for (const auto& [v, d] : inst.preds) dets.insert(dets.end(), d.begin(), d.end());
    af::PostprocessConfig pc;
    pc.class_agnostic_nms = t % 2 == 1;
    pc.soft_nms_min_score = 0.05;
    pc.max_detections_per_video = 8;
    const auto want =
        oracle::soft_nms(dets, pc.soft_nms_sigma, pc.soft_nms_min_score, pc.max_detections_per_video, pc.class_agnostic_nms);
    if (af::soft_nms(dets, pc) != want) ++nms_bad;
  }
  const double secs = seconds_since(t0);
  o.require(map_bad == 0, "map_at mismatches");
  o.require(nms_bad == 0, "soft_nms mismatches");
  o.require(secs < 60.0, "runtime < 60 s");
  o.detail << "1000 instances, map_at mismatches " << map_bad << ", soft_nms mismatches " << nms_bad << ", " << secs
           << " s";
}

// --- 6 ---------------------------------------------------------------------
void formula_spot_checks(Outcome& o) {
  // Logit 0 is probability 0.5.
  const double focal = af::focal_loss_value(0.0, 1.0, 0.25, 2.0);
  const double diou = af::diou_loss_value(7.0, 3.0, 2.0, 8.0);  // [0,10] vs [5,15] seen from moment 7
  const double t = af::tiou({0, 10}, {5, 15});
  af::PostprocessConfig pc;
  const auto nms = af::soft_nms({{0, 10, 0, 0.9}, {0, 10, 0, 0.8}}, pc);
  const double rescored = nms.size() == 2 ? nms[1].score : -1.0;
  o.require(std::abs(focal - 0.043322) <= 1e-5, "focal");
  o.require(std::abs(diou - 0.7778) <= 1e-4, "diou");
  o.require(std::abs(t - 0.3333) <= 1e-4 && std::abs(t - 1.0 / 3.0) <= 1e-6, "tiou");
  o.require(std::abs(rescored - 0.10827) <= 1e-5, "soft-nms rescore");
  o.detail << "focal " << focal << ", diou " << diou << ", tiou " << t << ", rescore " << rescored;
}

// --- 7 ---------------------------------------------------------------------
void target_round_trip(Outcome& o) {
  af::SyntheticSpec spec;
  spec.num_train = 40;
  spec.num_test = 0;
  spec.seed = 77;
  const auto ds = af::generate_synthetic(spec);
  const auto videos = af::join_dataset(ds.features, ds.annotations, "training");
  af::ModelConfig mc;
  mc.num_pyramid_blocks = 3;
  mc.regression_ranges = af::make_regression_ranges(4);
  std::size_t checked = 0, wrong = 0, uncovered = 0;
  for (const auto& v : videos) {
    const auto geo = af::pyramid_geometry(v.seq.length, mc);
    const auto t = af::assign_targets(v.actions, geo, spec.num_classes, af::LossConfig{});
    std::vector<bool> hit(v.actions.size(), false);
    for (std::size_t l = 0; l < geo.size(); ++l) {
      const double stride = static_cast<double>(geo[l].stride);
      for (std::size_t i = 0; i < geo[l].length; ++i) {
        if (!t.levels[l].positive[i]) continue;
        ++checked;
        const double p = static_cast<double>(i) * stride;
        const auto src = static_cast<std::size_t>(t.levels[l].source[i]);
        const auto& g = v.actions[src];
        hit[src] = true;
        if (p - t.levels[l].reg[i * 2] * stride != g.start || p + t.levels[l].reg[i * 2 + 1] * stride != g.end ||
            t.levels[l].cls[i * spec.num_classes + static_cast<std::size_t>(g.label)] != 1.0)
          ++wrong;
      }
    }
    uncovered += static_cast<std::size_t>(std::count(hit.begin(), hit.end(), false));
  }
  o.require(checked > 0 && wrong == 0, "decoded segments equal ground truth");

  const std::vector<af::LevelGeometry> geo = {{40, 1, af::RegressionRange{}, {}}};
  const auto t = af::assign_targets(std::vector<af::ActionInstance>{{10, 20, 0}}, geo, 1, af::LossConfig{});
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < 40; ++i)
    if (t.levels[0].positive[i]) pos.push_back(i);
  o.require(pos == std::vector<std::size_t>{14, 15, 16}, "center sampling positives {14,15,16}");
  o.detail << checked << " positives decoded exactly (" << uncovered << " actions without positives), center positives {";
  for (std::size_t i = 0; i < pos.size(); ++i) o.detail << (i ? "," : "") << pos[i];
  o.detail << "}";
}

// --- 8, 9 --------------------------------------------------------------------

// Scaled-down default model: 128 channels, 4 pyramid levels.
af::ModelConfig benchmark_model(std::size_t levels) {
  af::ModelConfig mc;
  mc.input_dim = 32;
  mc.embed_dim = 128;
  mc.num_classes = 3;
  mc.num_pyramid_blocks = levels - 1;
  mc.regression_ranges = af::make_regression_ranges(levels);
  mc.max_seq_len = 256;
  return mc;
}

af::TrainConfig benchmark_training() {
  af::TrainConfig tc;
  tc.epochs = 20;
  tc.warmup_epochs = 2;
  tc.base_lr = 1e-3;
  tc.weight_decay = 0.5;
  tc.batch_size = 2;
  tc.max_seq_len = 128;  // random 128-step crops of the 128-256 step videos
  tc.seed = 0;
  return tc;
}

struct BenchmarkRun {
  double first_loss = 0.0;
  double last_loss = 0.0;
  double average_map = 0.0;
  std::vector<double> map;
  double seconds = 0.0;
};

BenchmarkRun run_benchmark(const std::vector<af::Video>& train, const std::vector<af::Video>& test,
                           std::size_t levels) {
  const auto t0 = Clock::now();
  const auto mc = benchmark_model(levels);
  const auto r = af::train<float>(train, mc, benchmark_training());
  const auto ev = af::evaluate_checkpoint<float>(r.checkpoint(), mc, test, af::PostprocessConfig{},
                                                 af::EvalConfig::thumos(), true, 1);
  BenchmarkRun out;
  out.first_loss = r.history.front().loss_total;
  out.last_loss = r.history.back().loss_total;
  out.average_map = ev.report.average_map;
  out.map = ev.report.map;
  out.seconds = seconds_since(t0);
  return out;
}

struct Benchmark {
  std::vector<af::Video> train, test;
};

Benchmark benchmark_data() {
  af::SyntheticSpec spec;  // 200 / 50 videos, T in [128, 256], D 32, C 3, 1-5 instances, noise 0.5
  const auto ds = af::generate_synthetic(spec);
  return {af::join_dataset(ds.features, ds.annotations, "training"),
          af::join_dataset(ds.features, ds.annotations, "testing")};
}

void synthetic_end_to_end(Outcome& o, const BenchmarkRun& r) {
  const double ratio = r.first_loss / r.last_loss;
  o.require(r.average_map >= 0.85, "average mAP >= 0.85");
  o.require(ratio >= 10.0, "loss ratio >= 10");
  o.require(r.seconds <= 900.0, "runtime <= 15 min");
  o.detail << "average mAP " << r.average_map << " (";
  for (std::size_t i = 0; i < r.map.size(); ++i) o.detail << (i ? " " : "") << r.map[i];
  o.detail << "), loss " << r.first_loss << " -> " << r.last_loss << " (x" << ratio << "), " << r.seconds << " s";
}

void ablation_directions(Outcome& o, const Benchmark& data, const BenchmarkRun& four) {
  const auto one = run_benchmark(data.train, data.test, 1);
  o.require(one.average_map < four.average_map, "1-level below 4-level");

  // Center-sampled positives form a subset of the unsampled ones.
  const auto mc = benchmark_model(4);
  af::LossConfig with, without;
  without.center_sampling = false;
  std::size_t n_with = 0, n_without = 0, violations = 0;
  for (const auto& v : data.train) {
    const auto geo = af::pyramid_geometry(v.seq.length, mc);
    const auto a = af::assign_targets(v.actions, geo, mc.num_classes, with);
    const auto b = af::assign_targets(v.actions, geo, mc.num_classes, without);
    n_with += a.num_positive;
    n_without += b.num_positive;
    for (std::size_t l = 0; l < geo.size(); ++l)
      for (std::size_t i = 0; i < geo[l].length; ++i)
        if (a.levels[l].positive[i] && !b.levels[l].positive[i]) ++violations;
  }
  o.require(violations == 0, "superset invariant");
  o.require(n_with < n_without, "center sampling removes positives");
  o.detail << "average mAP 1 level " << one.average_map << " vs 4 levels " << four.average_map
           << "; positives with/without center sampling " << n_with << "/" << n_without;
}

// --- 10 --------------------------------------------------------------------

// synth -> files -> load -> train -> predict -> evaluate, with every artifact
// passing through disk.
std::pair<std::string, std::string> full_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  af::SyntheticSpec spec;
  spec.num_train = 24;
  spec.num_test = 8;
  spec.seed = 31;
  af::save_synthetic(af::generate_synthetic(spec), dir.string());
  const auto seqs = af::load_feature_dir((dir / "features").string());
  const auto anns = af::load_annotations((dir / "annotations.json").string());
  const auto train = af::join_dataset(seqs, anns, "training");
  const auto test = af::join_dataset(seqs, anns, "testing");

  auto mc = benchmark_model(4);
  mc.embed_dim = 32;
  auto tc = benchmark_training();
  tc.epochs = 3;
  tc.warmup_epochs = 1;
  tc.seed = 12;
  const auto r = af::train<float>(train, mc, tc);
  af::save_checkpoint((dir / "checkpoint.afck").string(), r.checkpoint());
  const auto ev = af::evaluate_checkpoint<float>(af::load_checkpoint((dir / "checkpoint.afck").string()), mc, test,
                                                 af::PostprocessConfig{}, af::EvalConfig::thumos(), true, 2);
  const std::string preds = af::predictions_json(ev.predictions).dump(2);
  const std::string metrics = af::map_report_json(ev.report).dump(2);
  fs::remove_all(dir);
  return {preds, metrics};
}

void determinism(Outcome& o) {
  const auto base = fs::temp_directory_path();
  const auto a = full_pipeline(base / "af_acceptance_a");
  const auto b = full_pipeline(base / "af_acceptance_b");
  o.require(a.first == b.first, "predictions.json identical");
  o.require(a.second == b.second, "metric report identical");
  o.detail << "predictions " << a.first.size() << " bytes, metrics " << a.second.size() << " bytes";
}

// --- 11 --------------------------------------------------------------------
void profiler_fixture(Outcome& o) {
  const auto c = fixture::six_videos();
  const auto rep = af::profile_errors(c.preds, c.gts, c.durations);
  const auto gts = fixture::expected_ground_truth();
  std::size_t bad = 0;
  if (rep.ground_truth.size() != gts.size()) ++bad;
  for (std::size_t i = 0; i < std::min(gts.size(), rep.ground_truth.size()); ++i) {
    const auto& g = rep.ground_truth[i];
    if (g.video_id != gts[i].video || g.index != gts[i].index || g.coverage_bin != gts[i].coverage_bin ||
        g.length_bin != gts[i].length_bin || g.instances_bin != gts[i].instances_bin || g.detected != gts[i].detected)
      ++bad;
  }
  const auto cats = fixture::expected_categories();
  if (rep.top_predictions.size() != cats.size()) ++bad;
  for (std::size_t i = 0; i < std::min(cats.size(), rep.top_predictions.size()); ++i)
    if (rep.top_predictions[i].category != cats[i]) ++bad;
  const auto bins = fixture::expected_bin_counts();
  for (const auto& ch : rep.characteristics) {
    const auto it = bins.find(ch.characteristic);
    if (it == bins.end() || it->second.size() != ch.bins.size()) {
      ++bad;
      continue;
    }
    for (std::size_t b = 0; b < ch.bins.size(); ++b)
      if (ch.bins[b].count != it->second[b].first || ch.bins[b].false_negatives != it->second[b].second) ++bad;
  }
  o.require(bad == 0, "hand table");
  o.detail << gts.size() << " ground-truth rows, " << cats.size() << " predictions, " << bad << " mismatches";
}

bool report(int id, const std::string& name, const std::function<void(Outcome&)>& fn) {
  Outcome o;
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail.str() << std::endl;
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report(1, "gradient suite", gradient_suite);
  ok &= report(2, "attention equivalence", attention_equivalence);
  ok &= report(3, "pyramid shape law", pyramid_shapes);
  ok &= report(4, "padding invariance", padding_invariance);
  ok &= report(5, "oracle equivalence", oracle_equivalence);
  ok &= report(6, "formula spot checks", formula_spot_checks);
  ok &= report(7, "target round trip", target_round_trip);

  Benchmark data;
  BenchmarkRun four;
  bool have_four = false;
  ok &= report(8, "synthetic end-to-end", [&](Outcome& o) {
    data = benchmark_data();
    four = run_benchmark(data.train, data.test, 4);
    have_four = true;
    synthetic_end_to_end(o, four);
  });
  ok &= report(9, "ablation directions", [&](Outcome& o) {
    if (!have_four) {
      o.require(false, "4-level run unavailable");
      return;
    }
    ablation_directions(o, data, four);
  });
  ok &= report(10, "determinism", determinism);
  ok &= report(11, "profiler fixture", profiler_fixture);
  return ok ? 0 : 1;
}
