#pragma once

// Synthetic four-view cases: Gaussian blobs over a textured background, with
// labels that depend on single views (presence) or on agreement between views
// (asymmetry, correspondence).

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mvclip/image.hpp"
#include "mvclip/manifest.hpp"
#include "mvclip/util.hpp"

namespace mvclip {

enum class SyntheticTask { kPresence, kAsymmetry, kCorrespondence };

inline std::string task_name(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::kPresence: return "presence";
    case SyntheticTask::kAsymmetry: return "asymmetry";
    case SyntheticTask::kCorrespondence: return "correspondence";
  }
  return "?";
}

inline SyntheticTask parse_task(const std::string& name) {
  for (auto t : {SyntheticTask::kPresence, SyntheticTask::kAsymmetry, SyntheticTask::kCorrespondence}) {
    if (task_name(t) == name) return t;
  }
  throw ValidationError("unknown synthetic task '" + name + "' (expected presence, asymmetry or correspondence)");
}

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::kPresence;
  std::size_t cases = 128;
  std::size_t image_size = 64;
  double radius_min = 2.5;
  double radius_max = 4.0;
  double noise = 0.04;    // white-noise std as a fraction of full scale
  double balance = 0.5;   // fraction of positive cases
  std::size_t grid = 2;   // correspondence: blob cells per axis
  std::uint64_t seed = 0;
  std::string format = "pgm";

  void validate() const {
    if (cases == 0) throw ValidationError("synthetic case count must be positive");
    if (!(balance > 0.0 && balance < 1.0)) throw ValidationError("synthetic balance must lie in (0, 1)");
    if (image_size < 8) throw ValidationError("synthetic image_size must be at least 8");
    if (!(radius_min > 0.0 && radius_max >= radius_min)) throw ValidationError("synthetic blob radii are invalid");
    if (4.0 * radius_max >= static_cast<double>(image_size)) throw ValidationError("synthetic blobs do not fit the image");
    if (noise < 0.0) throw ValidationError("synthetic noise must be non-negative");
    if (grid == 0 || (task == SyntheticTask::kCorrespondence && grid < 2)) {
      throw ValidationError("synthetic grid must be at least 2 for the correspondence task");
    }
    if (format != "pgm" && format != "png") throw ValidationError("synthetic format must be pgm or png");
  }

  std::size_t positives() const { return static_cast<std::size_t>(std::llround(balance * static_cast<double>(cases))); }
};

struct SyntheticCase {
  std::string case_id;
  int label = 0;
  std::array<RawImage, 4> views;  // indexed by View
};

inline constexpr std::uint16_t kSyntheticMaxval = 4095;

namespace detail {

struct Blob {
  double u = 0.0;  // breast frame: x measured from the chest wall side
  double v = 0.0;
  double radius = 3.0;
  double amplitude = 1400.0;
};

inline RawImage render_view(Rng& rng, const SyntheticSpec& spec, bool mirrored, const std::vector<Blob>& blobs) {
  const std::size_t s = spec.image_size;
  const double n = static_cast<double>(s);
  std::vector<double> plane(s * s, 1000.0);
  // Low-frequency texture: a few random plane waves.
  for (int k = 0; k < 4; ++k) {
    const double fx = (uniform01(rng) * 3.0 + 0.5) / n, fy = (uniform01(rng) * 3.0 + 0.5) / n;
    const double phase = uniform01(rng) * 2.0 * std::numbers::pi, amp = 60.0 + 90.0 * uniform01(rng);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        plane[y * s + x] += amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
  }
  for (const auto& b : blobs) {
    const double cx = mirrored ? n - 1.0 - b.u : b.u;
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - b.v;
        plane[y * s + x] += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
      }
  }
  std::normal_distribution<double> white(0.0, spec.noise * kSyntheticMaxval);
  RawImage img(s, s, 16);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    img.samples[i] = static_cast<std::uint16_t>(std::clamp(std::lround(plane[i] + white(rng)), 0L, 4095L));
  }
  return img;
}

inline Blob random_blob(Rng& rng, const SyntheticSpec& spec) {
  const double margin = 2.0 * spec.radius_max, n = static_cast<double>(spec.image_size);
  Blob b;
  b.u = margin + uniform01(rng) * (n - 1.0 - 2.0 * margin);
  b.v = margin + uniform01(rng) * (n - 1.0 - 2.0 * margin);
  b.radius = spec.radius_min + uniform01(rng) * (spec.radius_max - spec.radius_min);
  b.amplitude = 1200.0 + 400.0 * uniform01(rng);
  return b;
}

// Blob centred in a grid cell with a small jitter.
inline Blob cell_blob(Rng& rng, const SyntheticSpec& spec, std::size_t cell) {
  const double size = static_cast<double>(spec.image_size) / static_cast<double>(spec.grid);
  const double jitter = std::max(0.0, size / 2.0 - 2.0 * spec.radius_max);
  Blob b = random_blob(rng, spec);
  b.u = (static_cast<double>(cell % spec.grid) + 0.5) * size + (uniform01(rng) * 2.0 - 1.0) * jitter;
  b.v = (static_cast<double>(cell / spec.grid) + 0.5) * size + (uniform01(rng) * 2.0 - 1.0) * jitter;
  return b;
}

}  // namespace detail

// Case i is a pure function of (spec, i), so any subset can be regenerated.
inline SyntheticCase synthesize_case(const SyntheticSpec& spec, std::size_t i, int label) {
  Rng rng(derive_seed(spec.seed, "synthetic.case", i));
  using detail::Blob;
  std::array<std::vector<Blob>, 4> blobs;  // per View
  auto put = [&](bool left, const Blob& cc, const Blob& mlo) {
    blobs[static_cast<int>(left ? View::kLCC : View::kRCC)].push_back(cc);
    blobs[static_cast<int>(left ? View::kLMLO : View::kRMLO)].push_back(mlo);
  };
  const bool left = uniform01(rng) < 0.5;
  switch (spec.task) {
    case SyntheticTask::kPresence:
      if (label == 1) {
        const Blob b = detail::random_blob(rng, spec);
        put(left, b, b);
      }
      break;
    case SyntheticTask::kAsymmetry: {
      const Blob b = detail::random_blob(rng, spec);
      if (label == 1) {
        put(left, b, b);
      } else {
        put(true, b, b);
        put(false, b, b);
      }
      break;
    }
    case SyntheticTask::kCorrespondence: {
      const std::size_t cells = spec.grid * spec.grid;
      const std::size_t cc_cell = rng() % cells;
      std::size_t mlo_cell = cc_cell;
      if (label == 1) mlo_cell = (cc_cell + 1 + rng() % (cells - 1)) % cells;
      const Blob cc = detail::cell_blob(rng, spec, cc_cell);
      Blob mlo = detail::cell_blob(rng, spec, mlo_cell);
      mlo.radius = cc.radius;
      mlo.amplitude = cc.amplitude;
      put(left, cc, mlo);
      break;
    }
  }
  SyntheticCase out;
  char id[32];
  std::snprintf(id, sizeof id, "case_%04zu", i);
  out.case_id = id;
  out.label = label;
  for (View v : kAllViews) {
    out.views[static_cast<int>(v)] = detail::render_view(rng, spec, !is_left(v), blobs[static_cast<int>(v)]);
  }
  return out;
}

// Exactly positives() cases carry label 1; which ones is a seeded shuffle.
inline std::vector<int> synthetic_labels(const SyntheticSpec& spec) {
  std::vector<int> labels(spec.cases, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.positives()), 1);
  Rng rng(derive_seed(spec.seed, "synthetic.labels"));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

inline std::vector<SyntheticCase> synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const auto labels = synthetic_labels(spec);
  std::vector<SyntheticCase> out;
  out.reserve(spec.cases);
  for (std::size_t i = 0; i < spec.cases; ++i) out.push_back(synthesize_case(spec, i, labels[i]));
  return out;
}

// Writes one image per view plus manifest.csv into `dir`; returns the manifest path.
inline std::string generate_synthetic(const SyntheticSpec& spec, const std::string& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  const auto labels = synthetic_labels(spec);
  std::vector<CaseRecord> records;
  for (std::size_t i = 0; i < spec.cases; ++i) {
    const auto c = synthesize_case(spec, i, labels[i]);
    CaseRecord rec{c.case_id, {}, c.label};
    for (View v : kAllViews) {
      const std::string file = c.case_id + "_" + std::string(view_name(v)) + "." + spec.format;
      const auto path = (std::filesystem::path(dir) / file).string();
      if (spec.format == "png") {
        write_png(path, c.views[static_cast<int>(v)]);
      } else {
        write_pgm(path, c.views[static_cast<int>(v)], kSyntheticMaxval);
      }
      rec.images[v] = file;
    }
    records.push_back(std::move(rec));
  }
  const auto manifest = (std::filesystem::path(dir) / "manifest.csv").string();
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace mvclip
