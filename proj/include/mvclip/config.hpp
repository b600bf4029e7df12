#pragma once

// JSON run configuration: model, train and data sections. Unknown keys and
// type mismatches are rejected with the offending field path.

#include "json.hpp"

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mvclip/augment.hpp"
#include "mvclip/model.hpp"
#include "mvclip/optim.hpp"
#include "mvclip/synthetic.hpp"

namespace mvclip {

using json = nlohmann::json;

struct TrainConfig {
  ScheduleConfig schedule;
  AdamWConfig adamw;
  std::size_t batch_size = 8;
  FreezeMode mode = FreezeMode::kAdaptersOnly;
  bool train_heads = false;
  AugmentConfig augment;
  std::size_t folds = 5;        // k of the stratified split
  std::size_t run_folds = 0;    // how many of the k folds to train; 0 = all
  double stop_at_train_accuracy = 0.0;  // > 0: stop once clean train accuracy reaches it
  bool track_train_accuracy = false;

  void validate() const {
    schedule.validate();
    if (batch_size == 0) throw ValidationError("train.batch_size must be at least 1");
    if (folds < 2) throw ValidationError("train.folds must be at least 2");
    if (run_folds > folds) throw ValidationError("train.run_folds exceeds train.folds");
    if (stop_at_train_accuracy > 1.0) throw ValidationError("train.stop_at_train_accuracy must not exceed 1");
  }
};

struct DataConfig {
  std::string manifest;               // used when set
  std::optional<SyntheticSpec> synthetic;

  void validate() const {
    if (manifest.empty() == !synthetic.has_value()) {
      throw ValidationError("data: exactly one of data.manifest and data.synthetic must be given");
    }
    if (synthetic) synthetic->validate();
  }
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "run";
  std::uint64_t seed = 0;

  void validate() const {
    auto resolved = model;
    if (resolved.text.vocab_size == 0) resolved.text.vocab_size = build_vocab(prompt_corpus()).size();
    resolved.validate();
    train.validate();
    data.validate();
  }
};

inline std::string mode_name(FreezeMode m) { return m == FreezeMode::kFull ? "full" : "adapters_only"; }

inline FreezeMode parse_mode(const std::string& s) {
  if (s == "full") return FreezeMode::kFull;
  if (s == "adapters_only") return FreezeMode::kAdaptersOnly;
  throw ValidationError("unknown train mode '" + s + "' (expected full or adapters_only)");
}

inline std::string placement_name(AdapterPlacement p) {
  switch (p) {
    case AdapterPlacement::kMsaOnly: return "msa";
    case AdapterPlacement::kMlpOnly: return "mlp";
    case AdapterPlacement::kBoth: return "both";
  }
  return "?";
}

inline AdapterPlacement parse_placement(const std::string& s) {
  for (auto p : {AdapterPlacement::kMsaOnly, AdapterPlacement::kMlpOnly, AdapterPlacement::kBoth}) {
    if (placement_name(p) == s) return p;
  }
  throw ValidationError("unknown adapter placement '" + s + "' (expected msa, mlp or both)");
}

inline std::string pooling_name(Pooling p) { return p == Pooling::kFirstClassToken ? "first" : "mean"; }

inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::kMeanClassTokens;
  if (s == "first") return Pooling::kFirstClassToken;
  throw ValidationError("unknown pooling '" + s + "' (expected mean or first)");
}

namespace detail {

// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const std::string field = join(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(field + ": expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ValidationError(field + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(field + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(field + ": expected a string");
    }
    out = v.get<T>();
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    used_.insert(key);
    return Section(j_.at(key), join(key));
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  // Throws on the first key that no get/child call asked for.
  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!used_.count(k)) throw ValidationError("unknown config key '" + join(k) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

inline json to_json(const VisionEncoderConfig& c) {
  json views = json::array();
  for (View v : c.views) views.push_back(std::string(view_name(v)));
  return {{"image_size", c.image_size}, {"channels", c.channels},       {"patch_size", c.patch_size},
          {"width", c.width},           {"heads", c.heads},             {"local_depth", c.local_depth},
          {"global_depth", c.global_depth}, {"embed_dim", c.embed_dim}, {"views", views},
          {"pooling", pooling_name(c.pooling)}, {"view_embedding", c.view_embedding}};
}

inline json to_json(const TextEncoderConfig& c) {
  return {{"context_length", c.context_length}, {"vocab_size", c.vocab_size}, {"width", c.width},
          {"heads", c.heads},                   {"depth", c.depth},           {"embed_dim", c.embed_dim}};
}

inline json to_json(const ModelConfig& c) {
  return {{"vision", to_json(c.vision)},
          {"text", to_json(c.text)},
          {"adapter",
           {{"bottleneck_ratio", c.adapter.bottleneck_ratio},
            {"placement", placement_name(c.adapter.placement)},
            {"zero_init_up", c.adapter.zero_init_up}}},
          {"vision_adapters", c.vision_adapters},
          {"text_adapters", c.text_adapters},
          {"head", {{"temperature", c.head.temperature}}}};
}

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.schedule.epochs},
          {"warmup_epochs", c.schedule.warmup_epochs},
          {"base_lr", c.schedule.base_lr},
          {"min_lr", c.schedule.min_lr},
          {"weight_decay", c.adamw.weight_decay},
          {"betas", {c.adamw.beta1, c.adamw.beta2}},
          {"eps", c.adamw.eps},
          {"batch_size", c.batch_size},
          {"mode", mode_name(c.mode)},
          {"train_heads", c.train_heads},
          {"augment",
           {{"hflip_prob", c.augment.hflip_prob},
            {"erase_prob", c.augment.erase_prob},
            {"erase_min_area", c.augment.erase_min_area},
            {"erase_max_area", c.augment.erase_max_area},
            {"normalize", c.augment.normalize}}},
          {"folds", c.folds},
          {"run_folds", c.run_folds},
          {"stop_at_train_accuracy", c.stop_at_train_accuracy},
          {"track_train_accuracy", c.track_train_accuracy}};
}

inline json to_json(const SyntheticSpec& s) {
  return {{"task", task_name(s.task)}, {"cases", s.cases},     {"image_size", s.image_size},
          {"radius_min", s.radius_min}, {"radius_max", s.radius_max}, {"noise", s.noise},
          {"balance", s.balance},       {"grid", s.grid},      {"seed", s.seed},
          {"format", s.format}};
}

inline json to_json(const RunConfig& c) {
  json data = json::object();
  if (!c.data.manifest.empty()) data["manifest"] = c.data.manifest;
  if (c.data.synthetic) data["synthetic"] = to_json(*c.data.synthetic);
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"data", data},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

inline VisionEncoderConfig parse_vision(detail::Section s) {
  VisionEncoderConfig c;
  s.get("image_size", c.image_size);
  s.get("channels", c.channels);
  s.get("patch_size", c.patch_size);
  s.get("width", c.width);
  s.get("heads", c.heads);
  s.get("local_depth", c.local_depth);
  s.get("global_depth", c.global_depth);
  s.get("embed_dim", c.embed_dim);
  s.get("view_embedding", c.view_embedding);
  std::string pooling = pooling_name(c.pooling);
  s.get("pooling", pooling);
  c.pooling = parse_pooling(pooling);
  if (s.has("views")) {
    const auto& arr = s.raw("views");
    if (!arr.is_array()) throw ValidationError(s.join("views") + ": expected an array of view names");
    c.views.clear();
    for (const auto& v : arr) {
      if (!v.is_string()) throw ValidationError(s.join("views") + ": expected view names");
      c.views.push_back(parse_view(v.get<std::string>()));
    }
  }
  s.finish();
  return c;
}

inline TextEncoderConfig parse_text(detail::Section s) {
  TextEncoderConfig c;
  s.get("context_length", c.context_length);
  s.get("vocab_size", c.vocab_size);
  s.get("width", c.width);
  s.get("heads", c.heads);
  s.get("depth", c.depth);
  s.get("embed_dim", c.embed_dim);
  s.finish();
  return c;
}

inline ModelConfig parse_model(detail::Section s) {
  ModelConfig c;
  if (s.has("vision")) c.vision = parse_vision(s.child("vision"));
  if (s.has("text")) c.text = parse_text(s.child("text"));
  if (s.has("adapter")) {
    auto a = s.child("adapter");
    a.get("bottleneck_ratio", c.adapter.bottleneck_ratio);
    std::string placement = placement_name(c.adapter.placement);
    a.get("placement", placement);
    c.adapter.placement = parse_placement(placement);
    a.get("zero_init_up", c.adapter.zero_init_up);
    a.finish();
  }
  s.get("vision_adapters", c.vision_adapters);
  s.get("text_adapters", c.text_adapters);
  if (s.has("head")) {
    auto h = s.child("head");
    h.get("temperature", c.head.temperature);
    h.finish();
  }
  s.finish();
  return c;
}

inline TrainConfig parse_train(detail::Section s) {
  TrainConfig c;
  s.get("epochs", c.schedule.epochs);
  s.get("warmup_epochs", c.schedule.warmup_epochs);
  s.get("base_lr", c.schedule.base_lr);
  s.get("min_lr", c.schedule.min_lr);
  s.get("weight_decay", c.adamw.weight_decay);
  if (s.has("betas")) {
    const auto& b = s.raw("betas");
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
      throw ValidationError(s.join("betas") + ": expected two numbers");
    }
    c.adamw.beta1 = b[0].get<double>();
    c.adamw.beta2 = b[1].get<double>();
  }
  s.get("eps", c.adamw.eps);
  s.get("batch_size", c.batch_size);
  std::string mode = mode_name(c.mode);
  s.get("mode", mode);
  c.mode = parse_mode(mode);
  s.get("train_heads", c.train_heads);
  if (s.has("augment")) {
    auto a = s.child("augment");
    a.get("hflip_prob", c.augment.hflip_prob);
    a.get("erase_prob", c.augment.erase_prob);
    a.get("erase_min_area", c.augment.erase_min_area);
    a.get("erase_max_area", c.augment.erase_max_area);
    a.get("normalize", c.augment.normalize);
    a.finish();
  }
  s.get("folds", c.folds);
  s.get("run_folds", c.run_folds);
  s.get("stop_at_train_accuracy", c.stop_at_train_accuracy);
  s.get("track_train_accuracy", c.track_train_accuracy);
  s.finish();
  return c;
}

inline SyntheticSpec parse_synthetic(detail::Section s) {
  SyntheticSpec spec;
  std::string task = task_name(spec.task);
  s.get("task", task);
  spec.task = parse_task(task);
  s.get("cases", spec.cases);
  s.get("image_size", spec.image_size);
  s.get("radius_min", spec.radius_min);
  s.get("radius_max", spec.radius_max);
  s.get("noise", spec.noise);
  s.get("balance", spec.balance);
  s.get("grid", spec.grid);
  s.get("seed", spec.seed);
  s.get("format", spec.format);
  s.finish();
  return spec;
}

inline RunConfig parse_run_config(const json& j) {
  detail::Section root(j, "");
  RunConfig c;
  if (root.has("model")) c.model = parse_model(root.child("model"));
  if (root.has("train")) c.train = parse_train(root.child("train"));
  if (root.has("data")) {
    auto d = root.child("data");
    d.get("manifest", c.data.manifest);
    if (d.has("synthetic")) c.data.synthetic = parse_synthetic(d.child("synthetic"));
    d.finish();
  }
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);
  root.finish();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

// FNV-1a of the canonical (sorted-key) dump of the resolved configuration.
inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace mvclip
