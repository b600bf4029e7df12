#pragma once

// Model-ready cases, training-time augmentation and intensity normalization.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mvclip/image.hpp"
#include "mvclip/manifest.hpp"
#include "mvclip/synthetic.hpp"

namespace mvclip {

// Views in the configured order, each [H, W, C] with samples in [0, 255].
struct Case {
  std::string id;
  std::vector<Tensor<float>> views;
  int label = 0;
};

inline Case load_case(const CaseRecord& rec, const std::vector<View>& views, std::size_t size, std::size_t channels) {
  Case c{rec.case_id, {}, rec.label};
  for (View v : views) c.views.push_back(to_model_input(read_image(rec.images.at(v)), size, channels));
  return c;
}

inline Case to_case(const SyntheticCase& s, const std::vector<View>& views, std::size_t size, std::size_t channels) {
  Case c{s.case_id, {}, s.label};
  for (View v : views) c.views.push_back(to_model_input(s.views[static_cast<int>(v)], size, channels));
  return c;
}

struct AugmentConfig {
  double hflip_prob = 0.5;
  double erase_prob = 0.25;
  double erase_min_area = 0.02;
  double erase_max_area = 0.20;
  bool normalize = true;
};

// Mean and standard deviation of [0, 1]-scaled samples over a training set.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

inline NormStats compute_norm_stats(const std::vector<Case>& cases) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& c : cases)
    for (const auto& v : c.views)
      for (float x : v.data()) {
        const double s = x / 255.0;
        sum += s;
        sq += s * s;
        ++n;
      }
  if (n == 0) return {};
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

struct EraseRect {
  std::size_t x = 0, y = 0, w = 0, h = 0;
};

// Rectangle covering a uniform area fraction in [min_area, max_area] with a
// log-uniform aspect ratio in [0.3, 3.3]; candidates that fall outside the
// image or round outside the area range are redrawn (at most 100 tries).
inline std::optional<EraseRect> sample_erase_rect(Rng& rng, std::size_t height, std::size_t width, double min_area,
                                                  double max_area) {
  const double total = static_cast<double>(height * width);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double target = (min_area + uniform01(rng) * (max_area - min_area)) * total;
    const double aspect = std::exp(std::log(0.3) + uniform01(rng) * (std::log(3.3) - std::log(0.3)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    const double frac = static_cast<double>(h * w) / total;
    if (h == 0 || w == 0 || h > height || w > width || frac < min_area || frac > max_area) continue;
    EraseRect r{0, 0, w, h};
    r.y = rng() % (height - h + 1);
    r.x = rng() % (width - w + 1);
    return r;
  }
  return std::nullopt;
}

inline Tensor<float> hflip(const Tensor<float>& img) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::vector<float> out(img.numel());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = img.data()[(y * w + (w - 1 - x)) * c + k];
  return Tensor<float>(img.shape(), std::move(out));
}

inline Tensor<float> normalize_view(const Tensor<float>& img, const NormStats& stats) {
  std::vector<float> out(img.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((img.data()[i] / 255.0 - stats.mean) / stats.std);
  }
  return Tensor<float>(img.shape(), std::move(out));
}

// Evaluation-time transform: normalization only (when enabled).
inline Case prepare_case(const Case& c, const NormStats& stats, bool normalize) {
  Case out{c.id, {}, c.label};
  for (const auto& v : c.views) out.views.push_back(normalize ? normalize_view(v, stats) : v.detach());
  return out;
}

// Flip every view together with probability hflip_prob, then erase a rectangle
// in each view independently with probability erase_prob, then normalize.
inline Case augment(const Case& c, Rng& rng, const AugmentConfig& cfg, const NormStats& stats) {
  Case out{c.id, {}, c.label};
  const bool flip = uniform01(rng) < cfg.hflip_prob;
  for (const auto& v : c.views) {
    auto img = flip ? hflip(v) : v.detach();
    if (uniform01(rng) < cfg.erase_prob) {
      const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
      if (auto r = sample_erase_rect(rng, h, w, cfg.erase_min_area, cfg.erase_max_area)) {
        for (std::size_t y = r->y; y < r->y + r->h; ++y)
          for (std::size_t x = r->x; x < r->x + r->w; ++x)
            for (std::size_t k = 0; k < ch; ++k) img.storage()[(y * w + x) * ch + k] = 0.0f;
      }
    }
    out.views.push_back(cfg.normalize ? normalize_view(img, stats) : img);
  }
  return out;
}

}  // namespace mvclip
