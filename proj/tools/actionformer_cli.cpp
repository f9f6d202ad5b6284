// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, train, predict, eval, profile, gradcheck,
// ablate. Errors are reported as one JSON object on stderr:
//   {"error": {"kind": ..., "message": ..., "exit_code": ...}}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "actionformer/actionformer.hpp"

namespace af = actionformer;
namespace fs = std::filesystem;
using af::json;

namespace {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kIoError = 3,
  kFormatError = 4,
  kConfigError = 5,
  kNumericalError = 6,
};

int exit_code_for(af::ErrorKind kind) {
  switch (kind) {
    case af::ErrorKind::kIo: return kIoError;
    case af::ErrorKind::kFormat: return kFormatError;
    case af::ErrorKind::kConfig: return kConfigError;
    case af::ErrorKind::kNumerical: return kNumericalError;
    default: return kOther;
  }
}

int report_error(const std::string& kind, const std::string& message, int code) {
  json err = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << err.dump() << std::endl;
  return code;
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) af::fail(af::ErrorKind::kIo, "cannot create directory " + parent.string() + ": " + ec.message());
}

void write_json(const std::string& path, const json& j) {
  ensure_parent_dir(path);
  af::write_text_file(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::map<std::string, double> durations_of(const af::AnnotationSet& anns) {
  std::map<std::string, double> out;
  for (const auto& [vid, a] : anns) out[vid] = a.duration;
  return out;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  auto spec = a.spec.empty() ? af::SyntheticSpec{} : af::parse_synthetic_spec(af::parse_json_file(a.spec), a.spec);
  if (a.seed) spec.seed = *a.seed;
  const auto ds = af::generate_synthetic(spec);
  af::save_synthetic(ds, a.out);
  std::size_t instances = 0;
  for (const auto& [vid, ann] : ds.annotations) instances += ann.actions.size();
  std::cout << json{{"videos", ds.features.size()}, {"instances", instances}, {"out", a.out}}.dump() << std::endl;
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

af::RunConfig load_config_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = af::load_run_config(path);
  if (seed) cfg.train.seed = *seed;
  return cfg;
}

std::vector<af::Video> load_split(const af::RunConfig& cfg, const std::string& subset) {
  require(!cfg.data.annotations.empty(), af::ErrorKind::kConfig, "config: data.annotations is not set");
  const auto seqs = af::load_config_features(cfg);
  return af::join_dataset(seqs, af::load_annotations(cfg.data.annotations), subset);
}

af::TrainResult<float> run_training(const af::RunConfig& cfg, const std::string& log_path, bool quiet) {
  const auto videos = load_split(cfg, cfg.data.train_subset);
  std::ofstream log;
  if (!log_path.empty()) {
    ensure_parent_dir(log_path);
    log.open(log_path);
    if (!log) af::fail(af::ErrorKind::kIo, "cannot open for writing: " + log_path);
  }
  return af::train<float>(videos, cfg.model, cfg.train, cfg.loss, [&](const af::StepLog& s) {
    const auto line = af::step_log_json(s).dump();
    if (log) log << line << '\n';
    if (!quiet && (s.step == 1 || s.step % 50 == 0)) std::cerr << line << std::endl;
  });
}

int cmd_train(const TrainArgs& a) {
  const auto cfg = load_config_with_seed(a.config, a.seed);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) af::fail(af::ErrorKind::kIo, "cannot create directory " + a.out + ": " + ec.message());
  const auto result = run_training(cfg, (fs::path(a.out) / "train_log.jsonl").string(), a.quiet);
  const auto ckpt = (fs::path(a.out) / "checkpoint.afck").string();
  af::save_checkpoint(ckpt, result.checkpoint());
  write_json((fs::path(a.out) / "config.json").string(), af::run_config_json(cfg));
  const auto& h = result.history;
  std::cout << json{{"checkpoint", ckpt},
                    {"steps", h.size()},
                    {"first_loss", h.empty() ? 0.0 : h.front().loss_total},
                    {"last_loss", h.empty() ? 0.0 : h.back().loss_total}}
                   .dump()
            << std::endl;
  return kOk;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string config;
  std::string checkpoint;
  std::string features;
  std::string out;
  std::string fusion_scores;
  bool raw = false;
  std::size_t threads = 1;
};

int cmd_predict(const PredictArgs& a) {
  auto cfg = af::load_run_config(a.config);
  if (!a.features.empty()) cfg.data.features_dir = a.features;
  const auto seqs = af::load_config_features(cfg);
  af::ActionFormer<float> model(cfg.model);
  model.load_state(af::load_checkpoint(a.checkpoint), a.raw ? "" : "ema.");
  auto preds = af::predict(model, seqs, cfg.postprocess, a.threads);
  if (!a.fusion_scores.empty()) {
    const json ext = af::parse_json_file(a.fusion_scores);
    for (auto& [vid, dets] : preds) {
      const auto scores = af::json_field<std::vector<double>>(ext, vid, a.fusion_scores);
      dets = af::fuse_scores(dets, scores, cfg.postprocess.fusion_topk);
      std::sort(dets.begin(), dets.end(), af::detection_order);
    }
  }
  write_json(a.out, af::predictions_json(preds));
  std::size_t n = 0;
  for (const auto& [vid, d] : preds) n += d.size();
  std::cout << json{{"videos", preds.size()}, {"detections", n}, {"out", a.out}}.dump() << std::endl;
  return kOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string predictions;
  std::string gt;
  std::string subset;
  std::string preset;
  std::vector<double> thresholds;
  std::string out;
  std::string pr_csv;
};

af::EvalConfig eval_config_from(const std::string& preset, const std::vector<double>& thresholds) {
  af::EvalConfig ec;
  if (preset == "activitynet") ec = af::EvalConfig::activitynet();
  else if (preset == "epic") ec = af::EvalConfig::epic();
  else if (preset.empty() || preset == "thumos") ec = af::EvalConfig::thumos();
  else af::fail(af::ErrorKind::kConfig, "unknown eval preset \"" + preset + "\"");
  if (!thresholds.empty()) ec.tiou_thresholds = thresholds;
  ec.validate();
  return ec;
}

int cmd_eval(const EvalArgs& a) {
  const auto ec = eval_config_from(a.preset, a.thresholds);
  const auto preds = af::load_predictions(a.predictions);
  const auto gts = af::ground_truth_set(af::load_annotations(a.gt), a.subset);
  const auto report = af::map_at(preds, gts, ec);
  const json j = af::map_report_json(report);
  if (!a.out.empty()) write_json(a.out, j);
  if (!a.pr_csv.empty()) {
    std::ostringstream csv;
    csv << "tiou,label,rank,precision,recall\n";
    for (double thr : ec.tiou_thresholds)
      for (int c : report.classes) {
        const auto pr = af::precision_recall(preds, gts, c, thr);
        for (std::size_t i = 0; i < pr.size(); ++i)
          csv << format_double(thr) << ',' << c << ',' << i + 1 << ',' << format_double(pr[i].precision) << ','
              << format_double(pr[i].recall) << '\n';
      }
    ensure_parent_dir(a.pr_csv);
    af::write_text_file(a.pr_csv, csv.str());
  }
  std::cout << j.dump() << std::endl;
  return kOk;
}

// --- profile -----------------------------------------------------------------

struct ProfileArgs {
  std::string predictions;
  std::string gt;
  std::string subset;
  std::string out;
};

json profile_json(const af::ProfileReport& r, const af::ProfileBins& bins) {
  json fp = json::object();
  for (std::size_t c = 0; c < af::kNumFpCategories; ++c)
    fp[af::fp_category_name(static_cast<af::FpCategory>(c))] = r.fp_counts[c];
  json chars = json::array();
  for (const auto& cr : r.characteristics) {
    json rows = json::array();
    for (const auto& b : cr.bins)
      rows.push_back({{"bin", b.name},
                      {"count", b.count},
                      {"false_negatives", b.false_negatives},
                      {"fn_rate", b.fn_rate},
                      {"raw_mAP", b.raw_map}});
    chars.push_back({{"characteristic", cr.characteristic}, {"bins", rows}});
  }
  json gts = json::array();
  auto bin_name = [](const std::vector<af::Bin>& list, int idx) {
    return idx < 0 ? std::string("none") : list[static_cast<std::size_t>(idx)].name;
  };
  for (const auto& g : r.ground_truth)
    gts.push_back({{"video_id", g.video_id},
                   {"index", g.index},
                   {"coverage_bin", bin_name(bins.coverage, g.coverage_bin)},
                   {"length_bin", bin_name(bins.length, g.length_bin)},
                   {"instances_bin", bin_name(bins.instances, g.instances_bin)},
                   {"detected", g.detected}});
  return {{"tiou", r.threshold},
          {"num_ground_truth", r.num_ground_truth},
          {"num_top_predictions", r.top_predictions.size()},
          {"false_positive_counts", fp},
          {"characteristics", chars},
          {"ground_truth", gts},
          {"note", "raw_mAP is the unnormalized per-bin mAP at the profiling tIoU"}};
}

int cmd_profile(const ProfileArgs& a) {
  const auto preds = af::load_predictions(a.predictions);
  const auto anns = af::load_annotations(a.gt);
  const auto gts = af::ground_truth_set(anns, a.subset);
  const af::ProfileBins bins;
  const auto report = af::profile_errors(preds, gts, durations_of(anns), bins);
  const json j = profile_json(report, bins);
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) af::fail(af::ErrorKind::kIo, "cannot create directory " + a.out + ": " + ec.message());
    write_json((fs::path(a.out) / "profile.json").string(), j);
    std::ostringstream fn;
    fn << "characteristic,bin,count,false_negatives,fn_rate,raw_map\n";
    for (const auto& cr : report.characteristics)
      for (const auto& b : cr.bins)
        fn << cr.characteristic << ',' << b.name << ',' << b.count << ',' << b.false_negatives << ','
           << format_double(b.fn_rate) << ',' << format_double(b.raw_map) << '\n';
    af::write_text_file((fs::path(a.out) / "false_negatives.csv").string(), fn.str());
    std::ostringstream fp;
    fp << "category,count\n";
    for (std::size_t c = 0; c < af::kNumFpCategories; ++c)
      fp << af::fp_category_name(static_cast<af::FpCategory>(c)) << ',' << report.fp_counts[c] << '\n';
    af::write_text_file((fs::path(a.out) / "false_positives.csv").string(), fp.str());
  }
  std::cout << j.dump() << std::endl;
  return kOk;
}

// --- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
  af::GradCheckOptions opt;
  opt.seed = seed;
  const auto results = af::run_gradient_suite(opt);
  bool ok = true;
  std::cout << std::left << std::setw(20) << "op" << std::setw(10) << "entries" << std::setw(14) << "max_rel_err"
            << "result\n";
  for (const auto& r : results) {
    std::cout << std::left << std::setw(20) << r.name << std::setw(10) << r.entries << std::setw(14)
              << std::setprecision(3) << r.max_error << (r.passed ? "pass" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  if (!ok) return report_error("numerical", "gradient check failed", kNumericalError);
  return kOk;
}

// --- ablate ------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string axis;
  std::vector<double> values;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

void apply_axis(af::RunConfig& cfg, const std::string& axis, double v) {
  auto as_count = [&](const char* what) {
    if (!(v >= 1.0) || v != std::floor(v))
      af::fail(af::ErrorKind::kConfig, std::string("ablate: ") + what + " values must be positive integers");
    return static_cast<std::size_t>(v);
  };
  if (axis == "window_size") {
    cfg.model.window_size = as_count("window_size");
  } else if (axis == "levels") {
    cfg.model.num_pyramid_blocks = as_count("levels") - 1;
    cfg.model.regression_ranges = af::make_regression_ranges(cfg.model.num_levels(), cfg.init_range);
  } else if (axis == "init_range") {
    require(v > 0.0, af::ErrorKind::kConfig, "ablate: init_range values must be > 0");
    cfg.init_range = v;
    cfg.model.regression_ranges = af::make_regression_ranges(cfg.model.num_levels(), v);
  } else if (axis == "lambda_reg") {
    cfg.train.lambda_reg = v;
  } else if (axis == "T_max") {
    cfg.train.max_seq_len = as_count("T_max");
    cfg.model.max_seq_len = std::max(cfg.model.max_seq_len, cfg.train.max_seq_len);
  } else if (axis == "feature_stride") {
    cfg.data.feature_stride_factor = as_count("feature_stride");
  } else {
    af::fail(af::ErrorKind::kConfig, "ablate: unknown axis \"" + axis +
                                         "\" (expected window_size, levels, init_range, lambda_reg, T_max, "
                                         "feature_stride)");
  }
  cfg.validate();
}

int cmd_ablate(const AblateArgs& a) {
  const auto base = load_config_with_seed(a.config, a.seed);
  require(!a.values.empty(), af::ErrorKind::kConfig, "ablate: no values given");
  json rows = json::array();
  std::ostringstream csv;
  csv << a.axis;
  for (double t : base.eval.tiou_thresholds) csv << ",mAP@" << format_double(t);
  csv << ",average_mAP\n";
  for (double v : a.values) {
    auto cfg = base;
    apply_axis(cfg, a.axis, v);
    const auto result = run_training(cfg, "", true);
    const auto test = load_split(cfg, cfg.data.test_subset);
    const auto ev = af::evaluate_checkpoint<float>(result.checkpoint(), cfg.model, test, cfg.postprocess, cfg.eval,
                                                   true, a.threads);
    rows.push_back({{"value", v}, {"metrics", af::map_report_json(ev.report)}});
    csv << format_double(v);
    for (double m : ev.report.map) csv << ',' << format_double(m);
    csv << ',' << format_double(ev.report.average_map) << '\n';
    std::cerr << a.axis << "=" << format_double(v) << " average_mAP=" << format_double(ev.report.average_map)
              << std::endl;
  }
  const json table = {{"axis", a.axis}, {"rows", rows}};
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) af::fail(af::ErrorKind::kIo, "cannot create directory " + a.out + ": " + ec.message());
    write_json((fs::path(a.out) / "ablation.json").string(), table);
    af::write_text_file((fs::path(a.out) / "ablation.csv").string(), csv.str());
  }
  std::cout << csv.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-stage temporal action localization: synthesize, train, predict, evaluate"};
  app.require_subcommand(1);
  std::uint64_t seed_value = 0;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  s->add_option("--spec,spec", synth.spec, "Synthetic spec JSON (defaults apply to missing keys)");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", seed_value, "Overrides the spec seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config,config", train.config, "Run config JSON")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--seed", seed_value, "Overrides train.seed");
  t->add_flag("--quiet", train.quiet, "No progress on stderr");
  std::size_t threads = 1;
  t->add_option("--threads", threads, "Accepted for uniformity; training is sequential");

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Detect actions in every video of a feature directory");
  p->add_option("--config,config", predict.config, "Run config JSON")->required();
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  p->add_option("--features", predict.features, "Feature directory (defaults to data.features_dir)");
  p->add_option("--out", predict.out, "Predictions JSON")->required();
  p->add_option("--fusion-scores", predict.fusion_scores, "External video-level class scores JSON");
  p->add_flag("--raw", predict.raw, "Use raw instead of EMA weights");
  p->add_option("--threads", predict.threads, "Worker threads")->check(CLI::PositiveNumber);
  p->add_option("--seed", seed_value, "Unused; inference is deterministic");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--predictions,predictions", eval.predictions, "Predictions JSON")->required();
  e->add_option("--gt,gt", eval.gt, "Ground-truth JSON")->required();
  e->add_option("--subset", eval.subset, "Only videos of this subset");
  e->add_option("--preset", eval.preset, "thumos | activitynet | epic");
  e->add_option("--thresholds", eval.thresholds, "tIoU thresholds")->delimiter(',');
  e->add_option("--out", eval.out, "Metrics JSON");
  e->add_option("--pr-csv", eval.pr_csv, "Precision/recall curve CSV");
  e->add_option("--threads", threads, "Accepted for uniformity");

  ProfileArgs profile;
  auto* pr = app.add_subcommand("profile", "False-negative / false-positive / sensitivity analysis");
  pr->add_option("--predictions,predictions", profile.predictions, "Predictions JSON")->required();
  pr->add_option("--gt,gt", profile.gt, "Ground-truth JSON")->required();
  pr->add_option("--subset", profile.subset, "Only videos of this subset");
  pr->add_option("--out", profile.out, "Output directory for JSON and CSV tables");

  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks over all ops");
  g->add_option("--seed", seed_value, "Seed for the random probes");

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Train and evaluate over a sweep of one setting");
  ab->add_option("--config,config", ablate.config, "Run config JSON")->required();
  ab->add_option("--axis", ablate.axis, "window_size | levels | init_range | lambda_reg | T_max | feature_stride")
      ->required();
  ab->add_option("--values", ablate.values, "Comma-separated values")->delimiter(',')->required();
  ab->add_option("--out", ablate.out, "Output directory");
  ab->add_option("--seed", seed_value, "Overrides train.seed");
  ab->add_option("--threads", ablate.threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    return report_error("usage", err.what(), kUsage);
  }

  auto seed_opt = [&](CLI::App* sub) -> std::optional<std::uint64_t> {
    if (sub->count("--seed") > 0) return seed_value;
    return std::nullopt;
  };
  try {
    if (s->parsed()) {
      synth.seed = seed_opt(s);
      return cmd_synth(synth);
    }
    if (t->parsed()) {
      train.seed = seed_opt(t);
      return cmd_train(train);
    }
    if (p->parsed()) return cmd_predict(predict);
    if (e->parsed()) return cmd_eval(eval);
    if (pr->parsed()) return cmd_profile(profile);
    if (g->parsed()) return cmd_gradcheck(seed_value);
    if (ab->parsed()) {
      ablate.seed = seed_opt(ab);
      return cmd_ablate(ablate);
    }
  } catch (const af::Error& err) {
    return report_error(af::error_kind_name(err.kind()), err.what(), exit_code_for(err.kind()));
  } catch (const std::exception& err) {
    return report_error("internal", err.what(), kOther);
  }
  return kOk;
}
