#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"

// Fusion quality metrics. Every function takes luminance (3-channel inputs are
// converted first). SD, SF and AG are reported on the 0-255 intensity scale.
namespace fusionfm::metrics {

enum class Metric { EN, SD, SF, AG, VIF, Qabf, SCD, SSIM };

inline constexpr std::array<Metric, 8> kAllMetrics = {Metric::EN,   Metric::SD,   Metric::SF,
                                                      Metric::AG,   Metric::VIF,  Metric::Qabf,
                                                      Metric::SCD,  Metric::SSIM};

[[nodiscard]] inline std::string_view name(Metric m) {
  switch (m) {
    case Metric::EN: return "EN";
    case Metric::SD: return "SD";
    case Metric::SF: return "SF";
    case Metric::AG: return "AG";
    case Metric::VIF: return "VIF";
    case Metric::Qabf: return "Qabf";
    case Metric::SCD: return "SCD";
    case Metric::SSIM: return "SSIM";
  }
  return "?";
}

[[nodiscard]] inline std::optional<Metric> parse_metric(std::string_view s) {
  for (Metric m : kAllMetrics) {
    const auto n = name(m);
    if (n.size() == s.size() &&
        std::equal(n.begin(), n.end(), s.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        })) {
      return m;
    }
  }
  return std::nullopt;
}

struct MetricReport {
  double en = 0.0;
  double sd = 0.0;
  double sf = 0.0;
  double ag = 0.0;
  double vif = 0.0;
  double qabf = 0.0;
  double scd = 0.0;
  double ssim = 0.0;

  [[nodiscard]] double get(Metric m) const {
    switch (m) {
      case Metric::EN: return en;
      case Metric::SD: return sd;
      case Metric::SF: return sf;
      case Metric::AG: return ag;
      case Metric::VIF: return vif;
      case Metric::Qabf: return qabf;
      case Metric::SCD: return scd;
      case Metric::SSIM: return ssim;
    }
    return 0.0;
  }
};

namespace detail {

inline void require_triple(const Image& f, const Image& a, const Image& b, const char* what) {
  require_same_shape(to_luminance(f), to_luminance(a), what);
  require_same_shape(to_luminance(f), to_luminance(b), what);
}

// 'valid' correlation of a single-channel image with a square window.
inline Image filter_valid(const Image& img, const Kernel& k) {
  const int oh = img.height() - k.side() + 1;
  const int ow = img.width() - k.side() + 1;
  if (oh <= 0 || ow <= 0) throw DimensionError("window larger than image " + img.shape_string());
  Image out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < k.side(); ++dy)
        for (int dx = 0; dx < k.side(); ++dx) acc += k.at(dy, dx) * img.at(y + dy, x + dx);
      out.at(y, x) = acc;
    }
  }
  return out;
}

inline Image multiply(const Image& a, const Image& b) {
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

inline Image scaled255(const Image& img) {
  Image out = to_luminance(img);
  for (double& v : out.data()) v *= 255.0;
  return out;
}

inline Image decimate2(const Image& img) {
  Image out((img.height() + 1) / 2, (img.width() + 1) / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(y, x) = img.at(2 * y, 2 * x);
  return out;
}

// Pearson correlation; zero-variance operands correlate to 0.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Shannon entropy (bits) of the 256-bin histogram.
[[nodiscard]] inline double entropy(const Image& f) {
  const auto p = histogram256(to_luminance(f));
  double h = 0.0;
  for (double pb : p) {
    if (pb > 0.0) h -= pb * std::log2(pb);
  }
  return h;
}

// Population standard deviation on the 0-255 scale.
[[nodiscard]] inline double std_dev(const Image& f) {
  const Image g = detail::scaled255(f);
  const double m = mean(g);
  double ss = 0.0;
  for (double v : g.data()) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(g.size()));
}

// sqrt(RF^2 + CF^2); RF/CF are RMS horizontal/vertical first differences.
[[nodiscard]] inline double spatial_frequency(const Image& f) {
  const Image g = detail::scaled255(f);
  if (g.height() < 2 || g.width() < 2) throw DimensionError("spatial_frequency needs H,W >= 2");
  double rf = 0.0, cf = 0.0;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 1; x < g.width(); ++x) rf += std::pow(g.at(y, x) - g.at(y, x - 1), 2);
  for (int y = 1; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) cf += std::pow(g.at(y, x) - g.at(y - 1, x), 2);
  rf /= static_cast<double>(g.height()) * (g.width() - 1);
  cf /= static_cast<double>(g.height() - 1) * g.width();
  return std::sqrt(rf + cf);
}

// Mean of sqrt((gx^2 + gy^2)/2) with forward differences over (H-1)x(W-1).
[[nodiscard]] inline double average_gradient(const Image& f) {
  const Image g = detail::scaled255(f);
  if (g.height() < 2 || g.width() < 2) throw DimensionError("average_gradient needs H,W >= 2");
  double acc = 0.0;
  for (int y = 0; y + 1 < g.height(); ++y) {
    for (int x = 0; x + 1 < g.width(); ++x) {
      const double gx = g.at(y, x + 1) - g.at(y, x);
      const double gy = g.at(y + 1, x) - g.at(y, x);
      acc += std::sqrt((gx * gx + gy * gy) / 2.0);
    }
  }
  return acc / (static_cast<double>(g.height() - 1) * (g.width() - 1));
}

inline constexpr double kVifEpsilon = 1e-10;
inline constexpr double kVifNoiseVariance = 2.0;  // HVS noise on the 0-255 scale

// Pixel-domain VIF of `dist` against `ref` over 4 Gaussian scales. Scales whose
// valid region vanishes are skipped. A reference without information at every
// scale gives 1.
[[nodiscard]] inline double vif_single(const Image& ref_in, const Image& dist_in) {
  Image ref = detail::scaled255(ref_in);
  Image dist = detail::scaled255(dist_in);
  require_same_shape(ref, dist, "vif");
  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (4 - scale + 1)) + 1;
    const Kernel win = Kernel::gaussian(n, n / 5.0);
    if (scale > 1) {
      if (ref.height() < n || ref.width() < n) break;
      ref = detail::decimate2(detail::filter_valid(ref, win));
      dist = detail::decimate2(detail::filter_valid(dist, win));
    }
    if (ref.height() < n || ref.width() < n) continue;
    const Image mu1 = detail::filter_valid(ref, win);
    const Image mu2 = detail::filter_valid(dist, win);
    const Image e11 = detail::filter_valid(detail::multiply(ref, ref), win);
    const Image e22 = detail::filter_valid(detail::multiply(dist, dist), win);
    const Image e12 = detail::filter_valid(detail::multiply(ref, dist), win);
    for (std::size_t i = 0; i < mu1.size(); ++i) {
      const double m1 = mu1.data()[i], m2 = mu2.data()[i];
      double s1 = std::max(0.0, e11.data()[i] - m1 * m1);
      double s2 = std::max(0.0, e22.data()[i] - m2 * m2);
      const double s12 = e12.data()[i] - m1 * m2;
      double g = s12 / (s1 + kVifEpsilon);
      double sv = s2 - g * s12;
      if (s1 < kVifEpsilon) {
        g = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < kVifEpsilon) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = s2;
        g = 0.0;
      }
      if (sv <= kVifEpsilon) sv = kVifEpsilon;
      num += std::log10(1.0 + g * g * s1 / (sv + kVifNoiseVariance));
      den += std::log10(1.0 + s1 / kVifNoiseVariance);
    }
  }
  if (den <= 0.0) return 1.0;
  return num / den;
}

[[nodiscard]] inline double vif(const Image& f, const Image& a, const Image& b) {
  detail::require_triple(f, a, b, "vif");
  return 0.5 * (vif_single(a, f) + vif_single(b, f));
}

struct QabfConstants {
  double gamma_g = 0.9994;
  double kappa_g = -15.0;
  double sigma_g = 0.5;
  double gamma_a = 0.9879;
  double kappa_a = -22.0;
  double sigma_a = 0.8;
};

namespace detail {

struct EdgeField {
  Image strength;
  Image orientation;
};

inline EdgeField edges(const Image& img) {
  const auto [gx, gy] = sobel(img);
  EdgeField e{Image(gx.height(), gx.width()), Image(gx.height(), gx.width())};
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double x = gx.data()[i], y = gy.data()[i];
    e.strength.data()[i] = std::sqrt(x * x + y * y);
    e.orientation.data()[i] = x == 0.0 ? std::numbers::pi / 2 : std::atan(y / x);
  }
  return e;
}

inline double preservation(double gs, double as, double gf, double af, const QabfConstants& k) {
  double ratio;
  if (gs > gf) ratio = gf / gs;
  else if (gs < gf) ratio = gs / gf;
  else ratio = 1.0;
  const double align = 1.0 - std::abs(as - af) / (std::numbers::pi / 2);
  const double qg = k.gamma_g / (1.0 + std::exp(k.kappa_g * (ratio - k.sigma_g)));
  const double qa = k.gamma_a / (1.0 + std::exp(k.kappa_a * (align - k.sigma_a)));
  return qg * qa;
}

}  // namespace detail

// Edge-information preservation (Xydeas-Petrovic).
[[nodiscard]] inline double qabf(const Image& f, const Image& a, const Image& b,
                                 const QabfConstants& k = {}) {
  detail::require_triple(f, a, b, "qabf");
  const auto ef = detail::edges(f), ea = detail::edges(a), eb = detail::edges(b);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ef.strength.size(); ++i) {
    const double ga = ea.strength.data()[i], gb = eb.strength.data()[i];
    const double gf = ef.strength.data()[i];
    num += detail::preservation(ga, ea.orientation.data()[i], gf, ef.orientation.data()[i], k) * ga;
    num += detail::preservation(gb, eb.orientation.data()[i], gf, ef.orientation.data()[i], k) * gb;
    den += ga + gb;
  }
  if (den <= 0.0) throw DomainError("qabf: no edge content in either source");
  return num / den;
}

// corr(F - A, B) + corr(F - B, A).
[[nodiscard]] inline double scd(const Image& f, const Image& a, const Image& b) {
  detail::require_triple(f, a, b, "scd");
  const Image lf = to_luminance(f), la = to_luminance(a), lb = to_luminance(b);
  std::vector<double> fa(lf.size()), fb(lf.size());
  for (std::size_t i = 0; i < lf.size(); ++i) {
    fa[i] = lf.data()[i] - la.data()[i];
    fb[i] = lf.data()[i] - lb.data()[i];
  }
  return detail::pearson(fa, lb.data()) + detail::pearson(fb, la.data());
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Mean single-scale SSIM over valid 11x11 Gaussian windows, dynamic range 1.
[[nodiscard]] inline double ssim(const Image& f_in, const Image& r_in) {
  const Image f = to_luminance(f_in), r = to_luminance(r_in);
  require_same_shape(f, r, "ssim");
  if (f.height() < kSsimWindow || f.width() < kSsimWindow) {
    throw DimensionError("ssim needs both sides >= 11, got " + f.shape_string());
  }
  static const Kernel win = Kernel::gaussian(kSsimWindow, kSsimSigma);
  const Image mf = detail::filter_valid(f, win);
  const Image mr = detail::filter_valid(r, win);
  const Image eff = detail::filter_valid(detail::multiply(f, f), win);
  const Image err = detail::filter_valid(detail::multiply(r, r), win);
  const Image efr = detail::filter_valid(detail::multiply(f, r), win);
  constexpr double c1 = kSsimK1 * kSsimK1;
  constexpr double c2 = kSsimK2 * kSsimK2;
  double acc = 0.0;
  for (std::size_t i = 0; i < mf.size(); ++i) {
    const double m1 = mf.data()[i], m2 = mr.data()[i];
    const double s1 = eff.data()[i] - m1 * m1;
    const double s2 = err.data()[i] - m2 * m2;
    const double s12 = efr.data()[i] - m1 * m2;
    acc += ((2 * m1 * m2 + c1) * (2 * s12 + c2)) / ((m1 * m1 + m2 * m2 + c1) * (s1 + s2 + c2));
  }
  return acc / static_cast<double>(mf.size());
}

// The fusion-task SSIM: mean similarity of F to both sources.
[[nodiscard]] inline double fusion_ssim(const Image& f, const Image& a, const Image& b) {
  return 0.5 * (ssim(f, a) + ssim(f, b));
}

[[nodiscard]] inline double compute(Metric m, const Image& f, const Image& a, const Image& b) {
  switch (m) {
    case Metric::EN: return entropy(f);
    case Metric::SD: return std_dev(f);
    case Metric::SF: return spatial_frequency(f);
    case Metric::AG: return average_gradient(f);
    case Metric::VIF: return vif(f, a, b);
    case Metric::Qabf: return qabf(f, a, b);
    case Metric::SCD: return scd(f, a, b);
    case Metric::SSIM: return fusion_ssim(f, a, b);
  }
  return 0.0;
}

[[nodiscard]] inline MetricReport evaluate(const Image& f, const Image& a, const Image& b) {
  MetricReport r;
  r.en = entropy(f);
  r.sd = std_dev(f);
  r.sf = spatial_frequency(f);
  r.ag = average_gradient(f);
  r.vif = vif(f, a, b);
  r.qabf = qabf(f, a, b);
  r.scd = scd(f, a, b);
  r.ssim = fusion_ssim(f, a, b);
  return r;
}

}  // namespace fusionfm::metrics
