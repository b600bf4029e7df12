// mvclip: synthesize data, train, evaluate, run ablations, audit parameter
// counts and check gradients.
//
// Exit codes: 0 success, 1 invalid input (config, arguments, shapes),
// 2 runtime failure (I/O, numerics, failed gradient check).

#include <CLI11.hpp>

#include <iostream>

#include "mvclip/commands.hpp"

using namespace mvclip;

namespace {

RunConfig load_with_overrides(const std::string& path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  auto cfg = load_run_config(path);
  if (!out.empty()) cfg.output_dir = out;
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view image-text model with adapters: training and evaluation tools"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic four-view dataset with a manifest");
  SyntheticSpec spec;
  std::string task = "presence", synth_out;
  synth->add_option("--task", task, "presence, asymmetry or correspondence")->capture_default_str();
  synth->add_option("--n", spec.cases, "number of cases")->capture_default_str();
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  synth->add_option("--balance", spec.balance, "fraction of positive cases")->capture_default_str();
  synth->add_option("--image-size", spec.image_size, "square image side in pixels")->capture_default_str();
  synth->add_option("--grid", spec.grid, "correspondence task: cells per axis")->capture_default_str();
  synth->add_option("--noise", spec.noise, "white noise std, fraction of full scale")->capture_default_str();
  synth->add_option("--format", spec.format, "pgm or png")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Fine-tune with k-fold cross-validation from a JSON config");
  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  bool verbose = false;
  train->add_option("--config", train_config, "run configuration (JSON)")->required();
  train->add_option("--out", train_out, "output directory (overrides output_dir)");
  train->add_option("--seed", train_seed, "seed (overrides the config)");
  train->add_flag("-v,--verbose", verbose, "progress on stderr");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a dataset with a saved checkpoint");
  std::string checkpoint, eval_manifest, eval_out = "eval";
  bool zero_shot = false;
  eval->add_option("--checkpoint", checkpoint, "checkpoint manifest (checkpoint.json)")->required();
  eval->add_option("--manifest", eval_manifest, "case manifest (default: the data the checkpoint was trained on)");
  eval->add_flag("--zero-shot", zero_shot, "classify with the short zero-shot prompts");
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Sweep one design choice with the same seeds for every setting");
  std::string ablate_config, sweep, ablate_out;
  std::optional<std::uint64_t> ablate_seed;
  ablate->add_option("--config", ablate_config, "run configuration (JSON)")->required();
  ablate->add_option("--sweep", sweep, "local_global, views or adapters")->required();
  ablate->add_option("--out", ablate_out, "output directory (overrides output_dir)");
  ablate->add_option("--seed", ablate_seed, "seed (overrides the config)");
  ablate->add_flag("-v,--verbose", verbose, "progress on stderr");

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "Count total and trainable parameters of a full-size backbone");
  std::string backbone = "vitb32", audit_out;
  audit_cmd->add_option("--backbone", backbone, "vitb32, vitb16 or vitl14")->capture_default_str();
  audit_cmd->add_option("--out", audit_out, "directory for audit.json");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t gradcheck_seed = 0;
  gradcheck->add_option("--seed", gradcheck_seed, "input seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      spec.task = parse_task(task);
      std::cout << generate_synthetic(spec, synth_out) << "\n";
    } else if (*train) {
      const auto cfg = load_with_overrides(train_config, train_out, train_seed);
      const auto s = cmd_train(cfg, cfg.output_dir, verbose);
      std::cout << "folds " << s.folds.size() << "  accuracy " << fmt_num(s.accuracy.mean) << " +- "
                << fmt_num(s.accuracy.std) << "  auc " << fmt_num(s.auc.mean) << " +- " << fmt_num(s.auc.std) << "\n"
                << (fs::path(cfg.output_dir) / "metrics.json").string() << "\n";
    } else if (*eval) {
      std::optional<DataConfig> data;
      if (!eval_manifest.empty()) data = DataConfig{eval_manifest, std::nullopt};
      const auto s = cmd_eval(checkpoint, data, zero_shot, eval_out);
      std::cout << "accuracy " << fmt_num(s.metrics.accuracy);
      if (s.metrics.auc) {
        std::cout << "  auc " << fmt_num(*s.metrics.auc) << " [" << fmt_num(s.metrics.auc_ci->lo) << ", "
                  << fmt_num(s.metrics.auc_ci->hi) << "]";
      }
      if (s.metrics.prauc) std::cout << "  prauc " << fmt_num(*s.metrics.prauc);
      std::cout << "\n" << (fs::path(eval_out) / "metrics.json").string() << "\n";
    } else if (*ablate) {
      const auto cfg = load_with_overrides(ablate_config, ablate_out, ablate_seed);
      for (const auto& row : cmd_ablate(cfg, sweep, cfg.output_dir, verbose)) {
        std::cout << row.setting << "  accuracy " << fmt_num(row.summary.accuracy.mean) << " +- "
                  << fmt_num(row.summary.accuracy.std) << "  auc " << fmt_num(row.summary.auc.mean) << " +- "
                  << fmt_num(row.summary.auc.std) << "\n";
      }
      std::cout << (fs::path(cfg.output_dir) / "ablation.csv").string() << "\n";
    } else if (*audit_cmd) {
      std::optional<fs::path> dir;
      if (!audit_out.empty()) dir = audit_out;
      std::cout << cmd_audit(backbone, dir).dump(2) << "\n";
    } else if (*gradcheck) {
      if (!cmd_gradcheck(std::cout, gradcheck_seed).passed()) return 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
