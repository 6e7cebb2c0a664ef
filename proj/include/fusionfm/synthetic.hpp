#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/png_io.hpp"
#include "fusionfm/random.hpp"
#include "fusionfm/selector.hpp"

// Paired-modality images with a known ideal fusion
//   F* = clamp(0.5 max(A,B) + 0.25 (A+B))
// and three teachers obtained by degrading F*.
namespace fusionfm::synth {

inline constexpr int kGeneratorVersion = 2;

enum class Flavor { IvfLike, MefLike, MffLike };

[[nodiscard]] inline std::string flavor_name(Flavor f) {
  switch (f) {
    case Flavor::IvfLike: return "ivf-like";
    case Flavor::MefLike: return "mef-like";
    case Flavor::MffLike: return "mff-like";
  }
  return "?";
}

[[nodiscard]] inline Flavor parse_flavor(std::string_view s) {
  if (s == "ivf-like") return Flavor::IvfLike;
  if (s == "mef-like") return Flavor::MefLike;
  if (s == "mff-like") return Flavor::MffLike;
  throw ConfigError("unknown flavor '" + std::string(s) + "' (expected ivf-like, mef-like or mff-like)");
}

// Task whose weighting and directory the flavor maps to.
[[nodiscard]] inline TaskKind flavor_task(Flavor f) {
  switch (f) {
    case Flavor::IvfLike: return TaskKind::IVF;
    case Flavor::MefLike: return TaskKind::MEF;
    case Flavor::MffLike: return TaskKind::MFF;
  }
  return TaskKind::IVF;
}

struct SyntheticPair {
  std::string id;
  Image a;
  Image b;
  Image f_star;
  Image mask;  // mff-like: 1 where A is in focus; empty otherwise
  std::uint64_t seed = 0;
};

struct TeacherDegradation {
  double blur_sigma = 1.5;
  double contrast = 0.6;
  double noise_sigma = 0.04;
};

[[nodiscard]] inline Image ideal_fusion(const Image& a, const Image& b) {
  require_same_shape(a, b, "ideal_fusion");
  Image f(a.height(), a.width(), a.channels());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    f.data()[i] = std::clamp(0.5 * std::max(x, y) + 0.25 * (x + y), 0.0, 1.0);
  }
  return f;
}

namespace detail {

inline Image gaussian_blur(const Image& img, double sigma) {
  const int side = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  return convolve(img, Kernel::gaussian(side, sigma));
}

// Sum of a few random low-frequency cosines, rescaled to [lo, hi].
inline Image smooth_field(int size, Rng& rng, double lo, double hi, int terms = 4) {
  Image f(size, size);
  for (int k = 0; k < terms; ++k) {
    const double fx = rng.uniform(0.3, 2.0), fy = rng.uniform(0.3, 2.0);
    const double px = rng.uniform(0.0, 6.283185307179586), py = rng.uniform(0.0, 6.283185307179586);
    const double amp = rng.uniform(0.5, 1.0);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        f.at(y, x) += amp * std::cos(fx * 6.283185307179586 * x / size + px) *
                      std::cos(fy * 6.283185307179586 * y / size + py);
      }
    }
  }
  const auto [mn, mx] = std::minmax_element(f.data().begin(), f.data().end());
  const double a = *mn, r = *mx - *mn;
  for (double& v : f.data()) v = lo + (hi - lo) * (r > 0.0 ? (v - a) / r : 0.5);
  return f;
}

// Band-limited noise with zero mean and the given standard deviation.
inline Image texture(int size, Rng& rng, double stddev, double blur = 0.8) {
  Image n(size, size);
  for (double& v : n.data()) v = rng.normal();
  n = gaussian_blur(n, blur);
  const double m = mean(n);
  double var = 0.0;
  for (double v : n.data()) var += (v - m) * (v - m);
  const double s = std::sqrt(var / static_cast<double>(n.size()));
  for (double& v : n.data()) v = (v - m) / s * stddev;
  return n;
}

inline void add_rectangles(Image& img, Rng& rng, int count, double lo_offset, double hi_offset) {
  const int size = img.height();
  for (int k = 0; k < count; ++k) {
    const int h = 6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 3)));
    const int w = 6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 3)));
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - h)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - w)));
    const double off = rng.uniform() < 0.5 ? lo_offset : hi_offset;
    for (int y = top; y < top + h; ++y) {
      for (int x = left; x < left + w; ++x) img.at(y, x) += off;
    }
  }
}

// Latent scene for the single-scene flavors.
inline Image scene(int size, Rng& rng) {
  Image s = smooth_field(size, rng, 0.2, 0.7);
  add_rectangles(s, rng, 3, -0.15, 0.2);
  const Image t = texture(size, rng, 0.05, 1.5);
  for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = std::clamp(s.data()[i] + t.data()[i], 0.0, 1.0);
  return s;
}

inline void ivf_like(SyntheticPair& p, int size, Rng& rng) {
  // A: dark, smooth background with bright exclusive targets.
  p.a = smooth_field(size, rng, 0.02, 0.15, 3);
  const int blobs = 2 + static_cast<int>(rng.below(3));
  Image targets(size, size);
  for (int k = 0; k < blobs; ++k) {
    const double cy = rng.uniform(0.15, 0.85) * size, cx = rng.uniform(0.15, 0.85) * size;
    const double r = rng.uniform(0.07, 0.13) * size;
    const double level = rng.uniform(0.85, 1.0);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = std::hypot(y - cy, x - cx);
        const double inside = 1.0 / (1.0 + std::exp((d - r) / 0.6));
        targets.at(y, x) = std::max(targets.at(y, x), level * inside);
      }
    }
  }
  for (std::size_t i = 0; i < p.a.size(); ++i) p.a.data()[i] = std::max(p.a.data()[i], targets.data()[i]);
  // B: dim textured background with exclusive edge structures.
  p.b = smooth_field(size, rng, 0.12, 0.24, 2);
  add_rectangles(p.b, rng, 3, -0.08, 0.2);
  const Image t = texture(size, rng, 0.03);
  for (std::size_t i = 0; i < p.b.size(); ++i) p.b.data()[i] = std::clamp(p.b.data()[i] + t.data()[i], 0.0, 1.0);
}

inline void mef_like(SyntheticPair& p, int size, Rng& rng) {
  const Image s = scene(size, rng);
  const double gain_hi = rng.uniform(1.3, 1.5), gain_lo = rng.uniform(0.4, 0.5);
  p.a = Image(size, size);
  p.b = Image(size, size);
  for (std::size_t i = 0; i < s.size(); ++i) {
    p.a.data()[i] = std::clamp(gain_hi * s.data()[i] + 0.2, 0.0, 1.0);
    p.b.data()[i] = std::clamp(gain_lo * s.data()[i], 0.0, 1.0);
  }
}

inline void mff_like(SyntheticPair& p, int size, Rng& rng) {
  const Image s = scene(size, rng);
  const Image blurred = gaussian_blur(s, rng.uniform(1.0, 1.5));
  // Binary focus mask bounded by a smooth random curve.
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double amp = rng.uniform(0.0, 0.12) * size, freq = rng.uniform(0.5, 2.0), phase = rng.uniform(0.0, 6.3);
  const double offset = rng.uniform(-0.05, 0.05) * size;
  p.mask = Image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double cx = x - size / 2.0, cy = y - size / 2.0;
      const double along = -uy * cx + ux * cy;
      const double across = ux * cx + uy * cy;
      const double boundary = offset + amp * std::sin(freq * 6.283185307179586 * along / size + phase);
      p.mask.at(y, x) = across < boundary ? 1.0 : 0.0;
    }
  }
  p.a = Image(size, size);
  p.b = Image(size, size);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double m = p.mask.data()[i];
    p.a.data()[i] = m * s.data()[i] + (1.0 - m) * blurred.data()[i];
    p.b.data()[i] = (1.0 - m) * s.data()[i] + m * blurred.data()[i];
  }
}

}  // namespace detail

[[nodiscard]] inline std::string pair_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

[[nodiscard]] inline SyntheticPair make_pair(std::size_t index, int size, std::uint64_t seed, Flavor flavor) {
  if (size < 16) throw ConfigError("synthetic image size must be at least 16");
  SyntheticPair p;
  p.id = pair_id(index);
  p.seed = derive_seed(seed, index);
  Rng rng(p.seed);
  switch (flavor) {
    case Flavor::IvfLike: detail::ivf_like(p, size, rng); break;
    case Flavor::MefLike: detail::mef_like(p, size, rng); break;
    case Flavor::MffLike: detail::mff_like(p, size, rng); break;
  }
  p.f_star = ideal_fusion(p.a, p.b);
  return p;
}

struct Teacher {
  std::string name;
  Image image;
};

// The three degraded teachers, in name order. Noise is drawn from a stream
// derived from the pair seed.
[[nodiscard]] inline std::vector<Teacher> teachers(const SyntheticPair& p, const TeacherDegradation& d = {}) {
  std::vector<Teacher> out;
  out.push_back({"blur", clamp01(detail::gaussian_blur(p.f_star, d.blur_sigma))});
  Image c = p.f_star;
  const double m = mean(c);
  for (double& v : c.data()) v = m + d.contrast * (v - m);
  out.push_back({"contrast", clamp01(std::move(c))});
  Image n = p.f_star;
  Rng rng(derive_seed(p.seed, 0x7e4c));
  for (double& v : n.data()) v += d.noise_sigma * rng.normal();
  out.push_back({"noise", clamp01(std::move(n))});
  return out;
}

// Name of the candidate directory holding F* itself.
inline constexpr std::string_view kIdealTeacher = "ideal";

struct GenerateOptions {
  std::size_t n_pairs = 100;
  int size = 80;
  std::uint64_t seed = 0;
  Flavor flavor = Flavor::IvfLike;
  double val_fraction = 0.2;
  TeacherDegradation degradation;
};

// Writes <root>/<TASK>/{modA,modB,reference,candidates/<teacher>}/<id>.png and
// split.json; returns the task directory. PNGs are 16-bit so F* survives
// the round trip to within 1/65535.
inline std::filesystem::path generate(const std::filesystem::path& root, const GenerateOptions& opt) {
  if (opt.n_pairs == 0) throw ConfigError("gen-synth: n_pairs must be positive");
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0)) throw ConfigError("gen-synth: val_fraction must be in [0,1)");
  const auto dir = root / task_name(flavor_task(opt.flavor));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    const SyntheticPair p = make_pair(i, opt.size, opt.seed, opt.flavor);
    save_png(dir / "modA" / (p.id + ".png"), p.a, 16);
    save_png(dir / "modB" / (p.id + ".png"), p.b, 16);
    save_png(dir / "reference" / (p.id + ".png"), p.f_star, 16);
    save_png(dir / "candidates" / std::string(kIdealTeacher) / (p.id + ".png"), p.f_star, 16);
    for (const auto& t : teachers(p, opt.degradation)) {
      save_png(dir / "candidates" / t.name / (p.id + ".png"), t.image, 16);
    }
    ids.push_back(p.id);
  }
  // Deterministic shuffle, then the tail becomes the held-out split.
  Rng rng(derive_seed(opt.seed, 0x5b117));
  std::vector<std::string> order = ids;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(opt.val_fraction * static_cast<double>(ids.size())));
  std::vector<std::string> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  nlohmann::json split = {{"task", task_name(flavor_task(opt.flavor))},
                          {"flavor", flavor_name(opt.flavor)},
                          {"generator_version", kGeneratorVersion},
                          {"seed", opt.seed},
                          {"size", opt.size},
                          {"train", train},
                          {"val", val}};
  std::ofstream(dir / "split.json") << split.dump(2) << "\n";
  return dir;
}

}  // namespace fusionfm::synth
