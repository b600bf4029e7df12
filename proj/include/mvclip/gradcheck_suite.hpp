#pragma once

// Finite-difference sweep over every differentiable op, the layer composites
// and a small end-to-end model, all in 64-bit.

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mvclip/gradcheck.hpp"
#include "mvclip/model.hpp"
#include "mvclip/util.hpp"

namespace mvclip {

// Ops with a backward rule, as named in the graph.
inline const std::vector<std::string>& differentiable_ops() {
  static const std::vector<std::string> ops{
      "add",     "sub",        "mul",        "scale",          "add_row",    "matmul",      "transpose",
      "reshape", "sum",        "mean_axis",  "softmax",        "log_softmax", "causal_softmax", "layer_norm",
      "gelu",    "concat",     "slice",      "gather_rows",    "pick",       "l2_normalize_rows", "unfold_patches"};
  return ops;
}

struct GradCheckResult {
  std::string name;
  std::size_t cases = 0;
  double max_error = 0.0;
  bool passed = false;
  std::string detail;  // worst offenders, when any
};

struct GradCheckReport {
  double threshold = 1e-4;
  std::vector<GradCheckResult> results;
  std::vector<std::string> uncovered;  // registered ops never exercised
  double seconds = 0.0;

  bool passed() const {
    return uncovered.empty() && std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  }
};

// Same metric as grad_check, for a leaf the function reads through a captured
// handle (model parameters). The leaf must have requires_grad set.
inline double grad_check_leaf(const std::function<Tensor<double>()>& f, Tensor<double>& leaf, double step,
                              const std::vector<std::size_t>& coords) {
  leaf.zero_grad();
  const auto loss = f();
  backward(loss);
  const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    auto& v = leaf.storage()[i];
    const double saved = v;
    v = saved + step;
    const double up = f().item();
    v = saved - step;
    const double down = f().item();
    v = saved;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12));
  }
  return worst;
}

// Collects op names of every node reachable from `root`.
inline void collect_ops(const Tensor<double>& root, std::set<std::string>& seen) {
  std::vector<const Node<double>*> stack{root.impl().get()};
  std::set<const Node<double>*> visited;
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (!visited.insert(n).second) continue;
    if (n->op && *n->op) seen.insert(n->op);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
}

namespace detail {

using MultiFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

class SuiteRunner {
 public:
  SuiteRunner(std::uint64_t seed, double step) : rng_(derive_seed(seed, "gradcheck")), step_(step) {}

  Rng& rng() { return rng_; }

  Tensor<double> random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor<double>(std::move(shape), std::move(v));
  }

  // Two rows a small distance apart. With a 0.07 temperature, random text
  // pairs saturate the softmax and push gradients below finite-difference
  // resolution.
  Tensor<double> near_pair(std::size_t e) {
    auto base = random({1, e});
    return concat(std::vector<Tensor<double>>{add(base, random({1, e}, -0.05, 0.05)), add(base, random({1, e}, -0.05, 0.05))}, 0).detach();
  }

  std::size_t extent(std::size_t lo, std::size_t hi) { return lo + rng_() % (hi - lo + 1); }

  // Reduces an op output to a scalar through fixed random weights, so that
  // every output coordinate contributes a distinct amount.
  Tensor<double> probe(const Tensor<double>& y) {
    auto it = probes_.find(y.shape());
    if (it == probes_.end()) {
      Rng local(mix64(0x9e3779b97f4a7c15ULL ^ numel_of(y.shape()) ^ (y.rank() << 32)));
      std::uniform_real_distribution<double> dist(0.5, 1.5);
      std::vector<double> w(y.numel());
      for (auto& x : w) x = (local() % 2 ? 1.0 : -1.0) * dist(local);
      it = probes_.emplace(y.shape(), Tensor<double>(y.shape(), std::move(w))).first;
    }
    return sum(mul(y, it->second));
  }

  // Checks f with respect to each input in turn. Inputs listed in
  // `zero_grad` have an identically zero gradient (key bias under softmax
  // shift invariance); the relative metric is meaningless there, so both
  // sides are instead held to an absolute bound.
  void check(const std::string& name, const MultiFn& f, const std::vector<Tensor<double>>& inputs,
             const std::set<std::size_t>& zero_grad = {}) {
    auto& r = result(name);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      ScalarFn g = [&, i](const Tensor<double>& xi) {
        auto in = inputs;
        in[i] = xi;
        return probe(f(in));
      };
      if (zero_grad.count(i)) {
        r.max_error = std::max(r.max_error, zero_gradient_violation(g, inputs[i]));
      } else {
        r.max_error = std::max(r.max_error, grad_check(g, inputs[i], step_));
      }
    }
    auto traced = inputs;
    for (auto& t : traced) {
      t = t.detach();
      t.set_requires_grad(true);
    }
    collect_ops(f(traced), seen_);
    ++r.cases;
  }

  // 0 when analytic and central-difference gradients are both within
  // kZeroTolerance of zero, 1 otherwise.
  double zero_gradient_violation(const ScalarFn& f, const Tensor<double>& input) {
    auto x = input.detach();
    x.set_requires_grad(true);
    backward(f(x));
    auto probe_x = x.detach();
    for (std::size_t i = 0; i < probe_x.numel(); ++i) {
      const double saved = probe_x.storage()[i];
      probe_x.storage()[i] = saved + step_;
      const double up = f(probe_x).item();
      probe_x.storage()[i] = saved - step_;
      const double down = f(probe_x).item();
      probe_x.storage()[i] = saved;
      if (std::abs(x.grad()[i]) > kZeroTolerance || std::abs((up - down) / (2 * step_)) > kZeroTolerance) return 1.0;
    }
    return 0.0;
  }

  static constexpr double kZeroTolerance = 1e-8;

  GradCheckResult& result(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      it = index_.emplace(name, results_.size()).first;
      results_.push_back({name});
    }
    return results_[it->second];
  }

  double step() const { return step_; }
  std::set<std::string>& seen() { return seen_; }
  std::vector<GradCheckResult>& results() { return results_; }

 private:
  Rng rng_;
  double step_;
  std::map<Shape, Tensor<double>> probes_;
  std::map<std::string, std::size_t> index_;
  std::vector<GradCheckResult> results_;
  std::set<std::string> seen_;
};

inline void check_primitives(SuiteRunner& s, int shapes) {
  for (int c = 0; c < shapes; ++c) {
    const std::size_t r = s.extent(1, 5), k = s.extent(2, 6), n = s.extent(1, 5);
    const Shape rc{r, k};

    s.check("add", [](const auto& in) { return add(in[0], in[1]); }, {s.random(rc), s.random(rc)});
    s.check("sub", [](const auto& in) { return sub(in[0], in[1]); }, {s.random(rc), s.random(rc)});
    s.check("mul", [](const auto& in) { return mul(in[0], in[1]); }, {s.random({r, k, n}), s.random({r, k, n})});
    const double factor = s.random({1}, -2, 2).item();
    s.check("scale", [factor](const auto& in) { return scale(in[0], factor); }, {s.random(rc)});
    s.check("add_row", [](const auto& in) { return add_row(in[0], in[1]); }, {s.random(rc), s.random({k})});
    s.check("matmul", [](const auto& in) { return matmul(in[0], in[1]); }, {s.random({r, k}), s.random({k, n})});
    s.check("transpose", [](const auto& in) { return transpose(in[0]); }, {s.random(rc)});
    s.check("reshape", [r, k](const auto& in) { return reshape(in[0], Shape{k, r}); }, {s.random(rc)});
    s.check("sum", [](const auto& in) { return scale(sum(in[0]), 0.7); }, {s.random({r, k, n})});
    const std::size_t axis = c % 2;
    s.check("mean_axis", [axis](const auto& in) { return mean_axis(in[0], axis); }, {s.random({r, k, n})});
    s.check("softmax", [axis](const auto& in) { return softmax(in[0], axis); }, {s.random(rc, -3, 3)});
    s.check("log_softmax", [axis](const auto& in) { return log_softmax(in[0], axis); }, {s.random(rc, -3, 3)});
    s.check("causal_softmax", [](const auto& in) { return causal_softmax(in[0]); }, {s.random({k, k}, -3, 3)});
    s.check("layer_norm", [](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
            {s.random(rc, -2, 2), s.random({k}, 0.5, 1.5), s.random({k})});
    s.check("gelu", [](const auto& in) { return gelu(in[0]); }, {s.random(rc, -3, 3)});
    const std::size_t cat_axis = c % 3;
    Shape a{r, k, n}, b{r, k, n};
    b[cat_axis] = s.extent(1, 4);
    s.check("concat", [cat_axis](const auto& in) { return concat(std::vector<Tensor<double>>{in[0], in[1], in[0]}, cat_axis); },
            {s.random(a), s.random(b)});
    const std::size_t len = s.extent(1, k), start = s.extent(0, k - len);
    s.check("slice", [start, len](const auto& in) { return slice(in[0], 1, start, len); }, {s.random(rc)});
    std::vector<std::size_t> rows(n + 1);
    for (auto& i : rows) i = s.extent(0, r - 1);
    s.check("gather_rows", [rows](const auto& in) { return gather_rows(in[0], rows); }, {s.random(rc)});
    std::vector<std::size_t> cols(r);
    for (auto& i : cols) i = s.extent(0, k - 1);
    s.check("pick", [cols](const auto& in) { return pick(in[0], cols); }, {s.random(rc)});
    s.check("l2_normalize_rows", [](const auto& in) { return l2_normalize_rows(in[0]); }, {s.random(rc)});
    const std::size_t p = s.extent(1, 3);
    s.check("unfold_patches", [p](const auto& in) { return unfold_patches(in[0], p); },
            {s.random({p * s.extent(1, 3), p * s.extent(1, 3), s.extent(1, 3)})});
  }
}

inline std::vector<Tensor<double>> linear_inputs(SuiteRunner& s, std::size_t in, std::size_t out, double scale_w) {
  return {s.random({in, out}, -scale_w, scale_w), s.random({out}, -0.2, 0.2)};
}

inline void check_composites(SuiteRunner& s, int shapes) {
  for (int c = 0; c < shapes; ++c) {
    const std::size_t heads = s.extent(1, 3), d = heads * s.extent(1, 3), t = s.extent(2, 5);
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<Tensor<double>> attn{s.random({t, d})};
    for (int l = 0; l < 4; ++l) {
      auto lin = linear_inputs(s, d, d, ws);
      attn.insert(attn.end(), lin.begin(), lin.end());
    }
    auto to_attention = [heads](const std::vector<Tensor<double>>& in) {
      AttentionParams<double> p;
      p.q = {in[1], in[2]};
      p.k = {in[3], in[4]};
      p.v = {in[5], in[6]};
      p.out = {in[7], in[8]};
      p.heads = heads;
      return p;
    };
    for (bool causal : {false, true}) {
      s.check(causal ? "mha_causal" : "mha",
              [=](const auto& in) { return mha_forward(in[0], to_attention(in), causal); }, attn, {4});
    }

    auto mlp_in = std::vector<Tensor<double>>{s.random({t, d})};
    for (auto& x : linear_inputs(s, d, 4 * d, ws)) mlp_in.push_back(x);
    for (auto& x : linear_inputs(s, 4 * d, d, ws / 2)) mlp_in.push_back(x);
    s.check("mlp", [](const auto& in) { return mlp_forward(in[0], MlpParams<double>{{in[1], in[2]}, {in[3], in[4]}}); },
            mlp_in);

    auto ad_in = std::vector<Tensor<double>>{s.random({t, d})};
    const std::size_t bottleneck = std::max<std::size_t>(1, d / 2);
    for (auto& x : linear_inputs(s, d, bottleneck, ws)) ad_in.push_back(x);
    for (auto& x : linear_inputs(s, bottleneck, d, ws)) ad_in.push_back(x);
    s.check("adapter",
            [](const auto& in) { return adapter_forward(in[0], AdapterParams<double>{{in[1], in[2]}, {in[3], in[4]}}); },
            ad_in);

    // MSA -> MLP -> CE over the row logits.
    std::vector<std::size_t> labels(t);
    for (auto& l : labels) l = s.extent(0, d - 1);
    auto chain = attn;
    chain.insert(chain.end(), mlp_in.begin() + 1, mlp_in.end());
    s.check("msa_mlp_ce",
            [=](const auto& in) {
              auto h = mha_forward(in[0], to_attention(in), false);
              auto y = mlp_forward(h, MlpParams<double>{{in[9], in[10]}, {in[11], in[12]}});
              return scale(mean(pick(log_softmax(y, 1), labels)), -1.0);
            },
            chain, {4});

    const std::size_t b = s.extent(1, 4), e = s.extent(2, 5);
    std::vector<int> case_labels(b);
    for (auto& l : case_labels) l = static_cast<int>(s.extent(0, 1));
    s.check("clip_loss",
            [case_labels](const auto& in) {
              return image_ce_loss(similarity_logits(in[0], in[1], ClipHeadConfig{}), case_labels);
            },
            {s.random({b, e}), s.near_pair(e)});
  }
}

inline ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.vision.image_size = 16;
  cfg.vision.channels = 3;
  cfg.vision.patch_size = 8;
  cfg.vision.width = 16;
  cfg.vision.heads = 2;
  cfg.vision.local_depth = 1;
  cfg.vision.global_depth = 1;
  cfg.vision.embed_dim = 8;
  cfg.text.context_length = 16;
  cfg.text.width = 16;
  cfg.text.heads = 2;
  cfg.text.depth = 2;
  cfg.text.embed_dim = 8;
  cfg.adapter.bottleneck_ratio = 4;
  cfg.adapter.zero_init_up = false;
  return cfg;
}

inline void check_micro_model(SuiteRunner& s, std::size_t coords_per_tensor) {
  MultiViewClip<double> model(micro_config(), build_vocab(prompt_corpus()), s.rng()());
  apply_freeze_policy(model.params(), FreezeMode::kFull);
  std::vector<std::vector<Tensor<double>>> cases;
  for (int b = 0; b < 2; ++b) {
    std::vector<Tensor<double>> views;
    for (int k = 0; k < 4; ++k) {
      auto img = s.random({16, 16, 3});
      img.set_requires_grad(true);
      views.push_back(img);
    }
    cases.push_back(views);
  }
  const std::vector<int> labels{0, 1};
  auto loss = [&] {
    std::vector<Tensor<double>> images;
    for (const auto& views : cases) images.push_back(model.encode_case(views));
    auto texts = model.encode_prompts(zeroshot_prompts());
    return image_ce_loss(similarity_logits(concat(images, 0), texts, model.config().head), labels);
  };

  auto& r = s.result("micro_model");
  std::vector<std::pair<std::string, Tensor<double>>> leaves;
  for (auto& e : model.params().entries()) leaves.emplace_back(e.name, e.tensor);
  for (auto& views : cases)
    for (auto& v : views) leaves.emplace_back("image", v);
  for (auto& [name, leaf] : leaves) {
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < coords_per_tensor; ++i) coords.push_back(s.rng()() % leaf.numel());
    double err = 0.0;
    if (name.ends_with(".k_proj.bias")) {
      leaf.zero_grad();
      backward(loss());
      for (std::size_t i = 0; i < leaf.numel(); ++i) {
        if (std::abs(leaf.grad()[i]) > SuiteRunner::kZeroTolerance) err = 1.0;
      }
    } else {
      err = grad_check_leaf(loss, leaf, s.step(), coords);
    }
    r.max_error = std::max(r.max_error, err);
    if (err >= 1e-6) r.detail += name + " " + std::to_string(err) + "; ";
    ++r.cases;
  }
  collect_ops(loss(), s.seen());
}

}  // namespace detail

inline GradCheckReport run_grad_check_suite(std::uint64_t seed = 0, double threshold = 1e-4, double step = 1e-5) {
  const auto start = std::chrono::steady_clock::now();
  detail::SuiteRunner runner(seed, step);
  detail::check_primitives(runner, 5);
  detail::check_composites(runner, 5);
  detail::check_micro_model(runner, 4);

  GradCheckReport report;
  report.threshold = threshold;
  report.results = runner.results();
  for (auto& r : report.results) r.passed = r.max_error < threshold;
  for (const auto& op : differentiable_ops()) {
    if (!runner.seen().count(op)) report.uncovered.push_back(op);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mvclip
