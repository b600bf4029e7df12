// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "mvclip/commands.hpp"
#include "oracles.hpp"

using namespace mvclip;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * target; }

std::vector<Case> synthetic_cases(const SyntheticSpec& spec, std::size_t channels = 1) {
  std::vector<Case> out;
  for (const auto& s : synthesize(spec)) out.push_back(to_case(s, four_views(), spec.image_size, channels));
  return out;
}

// ---------------------------------------------------------------------------

Outcome parameter_audit() {
  const auto t0 = Clock::now();
  const auto b32 = cmd_audit("vitb32", std::nullopt);
  const auto l14 = cmd_audit("vitl14", std::nullopt);
  const double secs = seconds_since(t0);
  auto ok = [](const json& a, double total, double trainable) {
    const double f = a["fraction"].get<double>();
    return within(a["total"].get<double>(), total, 0.10) && within(a["trainable"].get<double>(), trainable, 0.10) &&
           f >= 0.005 && f <= 0.015;
  };
  const bool pass = ok(b32, 151.3e6, 1.3e6) && ok(l14, 363.8e6, 4.1e6) && secs < 10.0;
  auto show = [](const json& a) {
    return fmt("%.1fM/%.2fM (%.2f%%)", a["total"].get<double>() / 1e6, a["trainable"].get<double>() / 1e6,
               100.0 * a["fraction"].get<double>());
  };
  return {pass, "vitb32 " + show(b32) + " want 151.3M/1.3M; vitl14 " + show(l14) + " want 363.8M/4.1M; " +
                    fmt("%.3f s", secs)};
}

Outcome gradient_integrity() {
  std::ostringstream log;
  const auto t0 = Clock::now();
  const auto report = cmd_gradcheck(log, 0);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  bool micro = false;
  for (const auto& r : report.results) {
    worst = std::max(worst, r.max_error);
    if (r.name == "micro_model") micro = true;
  }
  const bool pass = report.passed() && micro && report.threshold <= 1e-4 && worst < 1e-4 && secs < 120.0;
  return {pass, fmt("%zu checks, max rel error %.2e (< 1e-4), %.1f s", report.results.size(), worst, secs)};
}

Outcome adapter_identity() {
  ModelConfig with;
  with.vision.channels = 3;
  ModelConfig without = with;
  without.vision_adapters = false;
  without.text_adapters = false;
  const auto vocab = build_vocab(prompt_corpus());
  MultiViewClip<float> a(with, vocab, 11), b(without, vocab, 11);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> pixel(-2.0f, 2.0f);
  double vision_err = 0.0, text_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor<float>> views;
    for (int v = 0; v < 4; ++v) {
      std::vector<float> px(with.vision.image_size * with.vision.image_size * 3);
      for (auto& p : px) p = pixel(rng);
      views.emplace_back(Shape{with.vision.image_size, with.vision.image_size, 3}, std::move(px));
    }
    const auto ya = a.encode_case(views), yb = b.encode_case(views);
    for (std::size_t i = 0; i < ya.numel(); ++i) vision_err = std::max<double>(vision_err, std::abs(ya.data()[i] - yb.data()[i]));

    std::vector<std::size_t> ids{Vocabulary::kSos};
    const std::size_t len = 1 + rng() % (with.text.context_length - 2);
    for (std::size_t k = 0; k < len; ++k) ids.push_back(Vocabulary::kSpecials + rng() % (vocab.size() - Vocabulary::kSpecials));
    ids.push_back(Vocabulary::kEos);
    const auto ta = a.text().encode(ids), tb = b.text().encode(ids);
    for (std::size_t i = 0; i < ta.numel(); ++i) text_err = std::max<double>(text_err, std::abs(ta.data()[i] - tb.data()[i]));
  }
  return {vision_err <= 1e-6 && text_err <= 1e-6,
          fmt("20 inputs: vision max |diff| %.2e, text max |diff| %.2e (<= 1e-6)", vision_err, text_err)};
}

Outcome freeze_soundness() {
  ModelConfig m;
  m.vision.image_size = 16;
  m.vision.channels = 1;
  m.vision.width = 16;
  m.vision.heads = 2;
  m.vision.local_depth = 1;
  m.vision.global_depth = 1;
  m.vision.embed_dim = 8;
  m.text.width = 16;
  m.text.heads = 2;
  m.text.depth = 1;
  m.text.embed_dim = 8;
  m.adapter.bottleneck_ratio = 4;
  MultiViewClip<float> model(m, build_vocab(prompt_corpus()), 21);
  auto frozen = [](const ParameterRegistry<float>::Entry& e) { return !is_adapter_param(e.name); };
  auto adapter = [](const ParameterRegistry<float>::Entry& e) { return is_adapter_param(e.name); };
  const auto frozen_before = checksum(model.params(), frozen);
  std::map<std::string, std::vector<float>> adapters_before;
  for (const auto& e : model.params().entries())
    if (adapter(e)) adapters_before[e.name] = {e.tensor.data().begin(), e.tensor.data().end()};

  SyntheticSpec spec;
  spec.cases = 24;
  spec.image_size = 16;
  spec.radius_min = 1.5;
  spec.radius_max = 2.5;
  spec.seed = 22;
  const auto cases = synthetic_cases(spec);
  TrainConfig t;
  t.schedule = {5, 1, 5e-3, 1e-5};
  t.mode = FreezeMode::kAdaptersOnly;
  const std::vector<Case> train(cases.begin(), cases.begin() + 16), val(cases.begin() + 16, cases.end());
  fit(model, train, val, t, 23);

  const bool frozen_same = checksum(model.params(), frozen) == frozen_before;
  std::size_t changed = 0;
  for (const auto& e : model.params().entries())
    if (adapter(e) && !std::equal(e.tensor.data().begin(), e.tensor.data().end(), adapters_before[e.name].begin()))
      ++changed;
  return {frozen_same && changed > 0, fmt("frozen checksum %s, %zu of %zu adapter tensors changed",
                                          frozen_same ? "unchanged" : "CHANGED", changed, adapters_before.size())};
}

Outcome overfit() {
  ModelConfig m;
  m.vision.image_size = 64;
  m.vision.channels = 1;
  m.vision.patch_size = 8;
  m.vision.width = 64;
  m.vision.local_depth = 0;
  m.vision.global_depth = 4;
  m.vision.embed_dim = 32;
  m.text.embed_dim = 32;
  SyntheticSpec spec;
  spec.cases = 80;
  spec.image_size = 64;
  spec.seed = 1;
  const auto cases = synthetic_cases(spec);
  const std::vector<Case> train(cases.begin(), cases.begin() + 64), val(cases.begin() + 64, cases.end());
  TrainConfig t;
  t.schedule = {200, 10, 5e-4, 1e-5};
  t.mode = FreezeMode::kFull;
  t.augment.hflip_prob = 0.0;
  t.augment.erase_prob = 0.0;
  t.track_train_accuracy = true;
  t.stop_at_train_accuracy = 0.95;
  MultiViewClip<float> model(m, build_vocab(prompt_corpus()), 1);
  const auto t0 = Clock::now();
  const auto r = fit(model, train, val, t, 0);
  const double secs = seconds_since(t0);
  double best = 0.0;
  for (const auto& h : r.history) best = std::max(best, *h.train_accuracy);
  return {best >= 0.95 && r.history.size() <= 200 && secs < 600.0,
          fmt("train accuracy %.3f after %zu epochs (>= 0.95 within 200), %.1f s", best, r.history.size(), secs)};
}

RunConfig correspondence_run(std::size_t local, std::size_t global, std::uint64_t seed) {
  RunConfig c;
  auto& v = c.model.vision;
  v.image_size = 32;
  v.channels = 1;
  v.patch_size = 8;
  v.width = 32;
  v.heads = 2;
  v.local_depth = local;
  v.global_depth = global;
  v.embed_dim = 32;
  v.view_embedding = true;
  c.model.text.width = 32;
  c.model.text.heads = 2;
  c.model.text.depth = 2;
  c.model.text.embed_dim = 32;
  c.model.adapter.bottleneck_ratio = 4;
  SyntheticSpec s;
  s.task = SyntheticTask::kCorrespondence;
  s.cases = 256;
  s.image_size = 32;
  s.grid = 2;
  s.seed = seed;
  c.data.synthetic = s;
  c.train.schedule = {40, 5, 1e-3, 1e-5};
  c.train.mode = FreezeMode::kFull;
  c.train.folds = 5;
  c.train.run_folds = 1;
  c.seed = seed;
  return c;
}

Outcome fusion_trend() {
  double global_acc = 0.0, local_acc = 0.0;
  std::string per_seed;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainOptions opt;
    opt.write_outputs = false;
    opt.n_boot = 10;
    double acc[2];
    int k = 0;
    for (auto [local, global] : {std::pair<std::size_t, std::size_t>{0, 4}, {4, 0}}) {
      const auto cfg = correspondence_run(local, global, seed);
      acc[k++] = run_training(cfg, load_dataset(cfg), "", opt).accuracy.mean;
    }
    global_acc += acc[0] / 3.0;
    local_acc += acc[1] / 3.0;
    per_seed += fmt(" s%llu %.3f/%.3f", static_cast<unsigned long long>(seed), acc[0], acc[1]);
  }
  const double gap = 100.0 * (global_acc - local_acc);
  return {gap >= 5.0, fmt("global %.3f vs local %.3f, gap %+.1f pp (need >= +5);", global_acc, local_acc, gap) +
                          per_seed + fmt(", %.0f s", seconds_since(t0))};
}

Outcome zero_shot() {
  ModelConfig m;
  m.vision.image_size = 32;
  m.vision.channels = 1;
  m.vision.patch_size = 8;
  m.vision.width = 64;
  m.vision.local_depth = 0;
  m.vision.global_depth = 4;
  m.vision.embed_dim = 32;
  m.text.embed_dim = 32;
  SyntheticSpec spec;
  spec.cases = 160;
  spec.image_size = 32;
  spec.radius_min = 1.5;
  spec.radius_max = 3.0;
  spec.seed = 1;
  const auto cases = synthetic_cases(spec);
  const std::vector<Case> train(cases.begin(), cases.begin() + 96), val(cases.begin() + 96, cases.begin() + 128),
      test(cases.begin() + 128, cases.end());
  TrainConfig t;
  t.schedule = {20, 2, 5e-4, 1e-5};
  t.mode = FreezeMode::kFull;
  MultiViewClip<float> model(m, build_vocab(prompt_corpus()), 1);
  const auto r = fit(model, train, val, t, 1);
  model.params().copy_values_from(r.best);
  const auto held_out = prepare_all(test, r.norm, t.augment.normalize);
  const double same = evaluate(model, held_out, training_prompts()).accuracy;
  const double zs = evaluate(model, held_out, zeroshot_prompts()).accuracy;
  return {same >= 0.80 && zs >= 0.70,
          fmt("held-out accuracy: training prompts %.3f (>= 0.80), zero-shot prompts %.3f (>= 0.70)", same, zs)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> level(0, 9);
  auto instance = [&](std::size_t n, std::vector<double>& s, std::vector<int>& l) {
    do {
      s.clear();
      l.clear();
      for (std::size_t i = 0; i < n; ++i) {
        l.push_back(static_cast<int>(rng() % 2));
        s.push_back((level(rng) + 2 * l.back()) / 12.0);  // coarse levels force ties
      }
    } while (std::count(l.begin(), l.end(), 1) == 0 || std::count(l.begin(), l.end(), 0) == 0);
  };
  int exact = 0;
  std::vector<double> s;
  std::vector<int> l;
  for (int trial = 0; trial < 100; ++trial) {
    instance(2 + rng() % 199, s, l);
    if (roc_auc(s, l) == oracle::pair_count_auc(s, l)) ++exact;
  }
  const double worked = roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1});

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> rs(2000);
  std::vector<int> rl(2000, 0);
  for (auto& v : rs) v = u(rng);
  std::fill(rl.begin(), rl.begin() + 500, 1);
  std::shuffle(rl.begin(), rl.end(), rng);
  const double pr = pr_auc(rs, rl);

  int contained = 0;
  for (int trial = 0; trial < 100; ++trial) {
    instance(60, s, l);
    const double point = roc_auc(s, l);
    const auto ci = bootstrap_ci(roc_auc, s, l, 500, 0.05, static_cast<std::uint64_t>(trial));
    if (ci.lo <= point && point <= ci.hi) ++contained;
  }
  const bool pass = exact == 100 && worked == 0.75 && std::abs(pr - 0.25) <= 0.05 && contained >= 99;
  return {pass, fmt("auc == pair count %d/100, worked example %.4g, pr_auc at prevalence 0.25: %.3f, "
                    "ci contains point %d/100",
                    exact, worked, pr, contained)};
}

Outcome preprocessing() {
  const auto a = avg_pool_5x5(RawImage(2558, 3327, 16));
  const auto b = avg_pool_5x5(RawImage(3327, 4091, 16));
  const bool sizes = a.width == 512 && a.height == 666 && b.width == 666 && b.height == 819;

  RawImage img(300, 260, 16);
  std::mt19937_64 rng(41);
  for (auto& v : img.samples) v = static_cast<std::uint16_t>(rng() % 4096);
  const auto t = to_model_input(img);
  bool channels = t.shape() == Shape{224, 224, 3};
  for (std::size_t i = 0; channels && i < 224 * 224; ++i) {
    const float c0 = t.data()[3 * i];
    channels = c0 == t.data()[3 * i + 1] && c0 == t.data()[3 * i + 2] && c0 >= 0.0f && c0 <= 255.0f;
  }
  return {sizes && channels, fmt("2558x3327 -> %zux%zu, 3327x4091 -> %zux%zu; model input %s", a.width, a.height,
                                 b.width, b.height, channels ? "224x224x3, equal channels in [0,255]" : "WRONG")};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  RunConfig c;
  auto& v = c.model.vision;
  v.image_size = 16;
  v.channels = 1;
  v.width = 16;
  v.heads = 2;
  v.local_depth = 1;
  v.global_depth = 1;
  v.embed_dim = 8;
  c.model.text.width = 16;
  c.model.text.heads = 2;
  c.model.text.depth = 1;
  c.model.text.embed_dim = 8;
  c.model.adapter.bottleneck_ratio = 4;
  SyntheticSpec s;
  s.cases = 20;
  s.image_size = 16;
  s.radius_min = 1.5;
  s.radius_max = 2.5;
  s.seed = 51;
  c.data.synthetic = s;
  c.train.schedule = {3, 1, 5e-3, 1e-5};
  c.train.folds = 2;
  c.seed = 52;

  const auto root = fs::temp_directory_path() / "mvclip_acceptance_determinism";
  fs::remove_all(root);
  cmd_train(c, root / "a");
  cmd_train(c, root / "b");
  std::vector<fs::path> files{"metrics.json"};
  for (std::size_t f = 0; f < c.train.folds; ++f) {
    const fs::path dir = "fold_" + std::to_string(f);
    files.push_back(dir / "history.csv");
    files.push_back(dir / "metrics.json");
  }
  std::size_t same = 0;
  for (const auto& f : files) {
    const auto x = read_file(root / "a" / f), y = read_file(root / "b" / f);
    if (!x.empty() && x == y) ++same;
  }
  fs::remove_all(root);
  return {same == files.size(), fmt("%zu of %zu history/metrics files byte-identical", same, files.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parameter audit", parameter_audit},   {"gradient integrity", gradient_integrity},
      {"adapter identity at init", adapter_identity}, {"freeze soundness", freeze_soundness},
      {"overfit capability", overfit},        {"fusion-stage trend", fusion_trend},
      {"zero-shot prompts", zero_shot},       {"metric oracles", metric_oracles},
      {"preprocessing", preprocessing},       {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures;
}
