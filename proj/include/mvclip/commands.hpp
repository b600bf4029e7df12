#pragma once

// Subcommand implementations behind the CLI: synth, train, eval, ablate,
// audit, gradcheck. Each writes its outputs into a directory and returns a
// summary so callers (and tests) need not re-read the files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mvclip/checkpoint.hpp"
#include "mvclip/cv.hpp"
#include "mvclip/gradcheck_suite.hpp"
#include "mvclip/trainer.hpp"

namespace mvclip {

namespace fs = std::filesystem;

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string s = "epoch,lr,train_loss,val_accuracy\n";
  for (const auto& r : history) {
    s += std::to_string(r.epoch) + "," + fmt_num(r.lr) + "," + fmt_num(r.train_loss) + "," + fmt_num(r.val_accuracy) +
         "\n";
  }
  return s;
}

inline std::string curve_csv(const Curve& c) {
  std::string s = "threshold,x,y\n";
  for (const auto& p : c.points) s += fmt_num(p.threshold) + "," + fmt_num(p.x) + "," + fmt_num(p.y) + "\n";
  return s;
}

// ---------------------------------------------------------------- data

// Cases in model-input form ([H, W, C], 0..255) for the configured views.
inline std::vector<Case> load_dataset(const RunConfig& cfg) {
  const auto& v = cfg.model.vision;
  std::vector<Case> out;
  if (cfg.data.synthetic) {
    for (const auto& s : synthesize(*cfg.data.synthetic)) out.push_back(to_case(s, v.views, v.image_size, v.channels));
  } else {
    for (const auto& rec : load_manifest(cfg.data.manifest, v.views)) {
      out.push_back(load_case(rec, v.views, v.image_size, v.channels));
    }
  }
  if (out.empty()) throw ValidationError("dataset has no cases");
  return out;
}

inline std::vector<Case> select(const std::vector<Case>& cases, const std::vector<std::size_t>& idx) {
  std::vector<Case> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cases[i]);
  return out;
}

inline std::vector<int> labels_of(const std::vector<Case>& cases) {
  std::vector<int> out;
  for (const auto& c : cases) out.push_back(c.label);
  return out;
}

// ---------------------------------------------------------------- metrics

struct CaseMetrics {
  double accuracy = 0.0;
  std::optional<double> auc;    // absent when a class is missing
  std::optional<Interval> auc_ci;
  std::optional<double> prauc;  // absent without positives
  std::optional<Curve> roc, pr;
};

inline CaseMetrics score_metrics(const Evaluation& ev, std::uint64_t seed, std::size_t n_boot = 2000) {
  CaseMetrics m;
  m.accuracy = ev.accuracy;
  const auto pos = std::count(ev.labels.begin(), ev.labels.end(), 1);
  if (pos > 0) {
    m.pr = pr_curve(ev.scores, ev.labels);
    m.prauc = m.pr->area;
  }
  if (pos > 0 && pos < static_cast<std::ptrdiff_t>(ev.labels.size())) {
    m.roc = roc_curve(ev.scores, ev.labels);
    m.auc = m.roc->area;
    m.auc_ci = bootstrap_ci(roc_auc, ev.scores, ev.labels, n_boot, 0.05, seed);
  }
  return m;
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const CaseMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"auc", optional_json(m.auc)},
          {"auc_ci", m.auc_ci ? json{m.auc_ci->lo, m.auc_ci->hi} : json(nullptr)},
          {"prauc", optional_json(m.prauc)}};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// Sample standard deviation (n - 1); zero for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  r.n = xs.size();
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

// ---------------------------------------------------------------- train

struct FoldOutcome {
  std::size_t fold = 0;
  std::size_t best_epoch = 0;
  CaseMetrics metrics;  // best checkpoint on the validation fold
  FitResult fit;
};

struct TrainSummary {
  std::string config_hash;
  std::vector<FoldOutcome> folds;
  MeanStd accuracy, auc, prauc;
};

inline json checkpoint_config(const RunConfig& cfg, const ModelConfig& resolved, const NormStats& norm,
                              std::size_t fold, std::size_t best_epoch) {
  auto run = to_json(cfg);
  run["model"] = to_json(resolved);
  return {{"run", run}, {"norm", {{"mean", norm.mean}, {"std", norm.std}}}, {"fold", fold}, {"best_epoch", best_epoch}};
}

struct TrainOptions {
  bool write_outputs = true;      // checkpoints, per-fold files, metrics.json
  bool write_checkpoints = true;
  std::size_t n_boot = 2000;
  bool verbose = false;
};

// k-fold fine-tuning. Every fold starts from the same initial weights; fold f
// uses the stream derive_seed(seed, "fit", f).
inline TrainSummary run_training(const RunConfig& cfg, const std::vector<Case>& cases, const fs::path& out_dir,
                                 const TrainOptions& opt = {}) {
  cfg.validate();
  const auto labels = labels_of(cases);
  const auto splits = kfold_split(labels, cfg.train.folds, derive_seed(cfg.seed, "folds"));
  const std::size_t run = cfg.train.run_folds == 0 ? splits.size() : cfg.train.run_folds;
  const auto vocab = build_vocab(prompt_corpus());

  TrainSummary summary;
  summary.config_hash = config_hash(cfg);
  std::vector<double> accs, aucs, praucs;
  for (std::size_t f = 0; f < run; ++f) {
    const auto train = select(cases, splits[f].train), val = select(cases, splits[f].validation);
    MultiViewClip<float> model(cfg.model, vocab, derive_seed(cfg.seed, "model"));
    auto fitted = fit(model, train, val, cfg.train, derive_seed(cfg.seed, "fit", f));
    model.params().copy_values_from(fitted.best);
    const auto ev = evaluate(model, prepare_all(val, fitted.norm, cfg.train.augment.normalize), training_prompts());
    FoldOutcome fo{f, fitted.best_epoch, score_metrics(ev, derive_seed(cfg.seed, "bootstrap", f), opt.n_boot), {}};
    if (opt.verbose) {
      std::cerr << "fold " << f << ": best epoch " << fo.best_epoch << ", val accuracy " << fo.metrics.accuracy
                << "\n";
    }
    accs.push_back(fo.metrics.accuracy);
    if (fo.metrics.auc) aucs.push_back(*fo.metrics.auc);
    if (fo.metrics.prauc) praucs.push_back(*fo.metrics.prauc);

    if (opt.write_outputs) {
      const auto dir = out_dir / ("fold_" + std::to_string(f));
      fs::create_directories(dir);
      write_file(dir / "history.csv", history_csv(fitted.history));
      if (fo.metrics.roc) write_file(dir / "roc.csv", curve_csv(*fo.metrics.roc));
      if (fo.metrics.pr) write_file(dir / "pr.csv", curve_csv(*fo.metrics.pr));
      if (opt.write_checkpoints) {
        save_checkpoint(fitted.best, checkpoint_config(cfg, model.config(), fitted.norm, f, fitted.best_epoch),
                        (dir / "checkpoint.json").string());
      }
    }
    fo.fit = std::move(fitted);
    summary.folds.push_back(std::move(fo));
  }
  summary.accuracy = mean_std(accs);
  summary.auc = mean_std(aucs);
  summary.prauc = mean_std(praucs);

  if (opt.write_outputs) {
    json folds = json::array();
    for (const auto& fo : summary.folds) {
      auto j = to_json(fo.metrics);
      j["fold_id"] = fo.fold;
      j["best_epoch"] = fo.best_epoch;
      j["config_hash"] = summary.config_hash;
      folds.push_back(j);
      write_json(out_dir / ("fold_" + std::to_string(fo.fold)) / "metrics.json", j);
    }
    write_json(out_dir / "metrics.json", {{"config_hash", summary.config_hash},
                                          {"folds", folds},
                                          {"accuracy", to_json(summary.accuracy)},
                                          {"auc", to_json(summary.auc)},
                                          {"prauc", to_json(summary.prauc)}});
  }
  return summary;
}

inline TrainSummary cmd_train(const RunConfig& cfg, const fs::path& out_dir, bool verbose = false) {
  TrainOptions opt;
  opt.verbose = verbose;
  return run_training(cfg, load_dataset(cfg), out_dir, opt);
}

// ---------------------------------------------------------------- eval

struct EvalSummary {
  std::string config_hash;
  Evaluation evaluation;
  CaseMetrics metrics;
};

// Scores every case of the data source with a saved checkpoint. `data`
// overrides the data section stored with the checkpoint when given.
inline EvalSummary cmd_eval(const std::string& checkpoint, const std::optional<DataConfig>& data, bool zero_shot,
                            const fs::path& out_dir) {
  const auto ck = load_checkpoint(checkpoint);
  if (!ck.config.contains("run") || !ck.config.contains("norm")) {
    throw CorruptCheckpoint("checkpoint '" + checkpoint + "' lacks its run configuration");
  }
  auto cfg = parse_run_config(ck.config.at("run"));
  if (data) {
    data->validate();
    cfg.data = *data;
  }
  const NormStats norm{ck.config.at("norm").at("mean").get<double>(), ck.config.at("norm").at("std").get<double>()};
  MultiViewClip<float> model(cfg.model, build_vocab(prompt_corpus()), 0);
  load_into(model.params(), ck);

  const auto cases = prepare_all(load_dataset(cfg), norm, cfg.train.augment.normalize);
  EvalSummary s;
  s.config_hash = config_hash(cfg);
  s.evaluation = evaluate(model, cases, zero_shot ? zeroshot_prompts() : training_prompts());
  s.metrics = score_metrics(s.evaluation, derive_seed(cfg.seed, "eval.bootstrap"));

  auto j = to_json(s.metrics);
  j["fold_id"] = ck.config.value("fold", json(nullptr));
  j["config_hash"] = s.config_hash;
  j["prompts"] = zero_shot ? "zero_shot" : "training";
  j["cases"] = cases.size();
  write_json(out_dir / "metrics.json", j);
  if (s.metrics.roc) write_file(out_dir / "roc.csv", curve_csv(*s.metrics.roc));
  if (s.metrics.pr) write_file(out_dir / "pr.csv", curve_csv(*s.metrics.pr));
  return s;
}

// ---------------------------------------------------------------- ablate

struct AblationRow {
  std::string setting;
  TrainSummary summary;
};

inline std::vector<std::pair<std::string, RunConfig>> ablation_settings(const RunConfig& base, const std::string& sweep) {
  std::vector<std::pair<std::string, RunConfig>> out;
  if (sweep == "local_global") {
    const std::size_t n = base.model.vision.local_depth + base.model.vision.global_depth;
    for (std::size_t local = 0;; local = std::min(n, local + 2)) {
      auto c = base;
      c.model.vision.local_depth = local;
      c.model.vision.global_depth = n - local;
      out.emplace_back(std::to_string(local) + "/" + std::to_string(n - local), c);
      if (local == n) break;
    }
  } else if (sweep == "views") {
    for (const auto& [name, views] : {std::pair{std::string("cc_only"), cc_views()},
                                      std::pair{std::string("mlo_only"), mlo_views()},
                                      std::pair{std::string("both"), four_views()}}) {
      auto c = base;
      c.model.vision.views = views;
      out.emplace_back(name, c);
    }
  } else if (sweep == "adapters") {
    for (const auto& [name, image, text] : {std::tuple{"image_only", true, false}, std::tuple{"text_only", false, true},
                                            std::tuple{"both", true, true}}) {
      auto c = base;
      c.model.vision_adapters = image;
      c.model.text_adapters = text;
      out.emplace_back(name, c);
    }
  } else {
    throw ValidationError("unknown sweep '" + sweep + "' (expected local_global, views or adapters)");
  }
  return out;
}

// One row per setting; every setting uses the configured seed.
inline std::vector<AblationRow> cmd_ablate(const RunConfig& base, const std::string& sweep, const fs::path& out_dir,
                                           bool verbose = false) {
  const auto settings = ablation_settings(base, sweep);
  std::vector<AblationRow> rows;
  std::string csv = "sweep,setting,folds,accuracy_mean,accuracy_std,auc_mean,auc_std,prauc_mean,prauc_std\n";
  for (const auto& [name, cfg] : settings) {
    if (verbose) std::cerr << "ablation " << sweep << ": " << name << "\n";
    TrainOptions opt;
    opt.write_outputs = false;
    opt.verbose = verbose;
    auto summary = run_training(cfg, load_dataset(cfg), out_dir, opt);
    csv += sweep + "," + name + "," + std::to_string(summary.folds.size()) + "," + fmt_num(summary.accuracy.mean) +
           "," + fmt_num(summary.accuracy.std) + "," + fmt_num(summary.auc.mean) + "," + fmt_num(summary.auc.std) +
           "," + fmt_num(summary.prauc.mean) + "," + fmt_num(summary.prauc.std) + "\n";
    rows.push_back({name, std::move(summary)});
  }
  write_file(out_dir / "ablation.csv", csv);
  return rows;
}

// ---------------------------------------------------------------- audit / gradcheck

inline json cmd_audit(const std::string& backbone, const std::optional<fs::path>& out_dir) {
  const auto a = audit_backbone(backbone);
  json j = {{"backbone", backbone}, {"total", a.total}, {"trainable", a.trainable}, {"fraction", a.fraction}};
  if (out_dir) write_json(*out_dir / "audit.json", j);
  return j;
}

inline GradCheckReport cmd_gradcheck(std::ostream& out, std::uint64_t seed = 0) {
  auto report = run_grad_check_suite(seed);
  for (const auto& r : report.results) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-16s cases=%-3zu max_rel_error=%.3e", r.passed ? "ok" : "FAIL",
                  r.name.c_str(), r.cases, r.max_error);
    out << line << (r.detail.empty() ? "" : "  " + r.detail) << "\n";
  }
  for (const auto& op : report.uncovered) out << "FAIL " << op << " not exercised\n";
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (" << report.results.size()
      << " checks, threshold " << report.threshold << ", " << fmt_num(report.seconds) << " s)\n";
  return report;
}

}  // namespace mvclip
