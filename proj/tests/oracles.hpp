#pragma once

// Slow, literal reimplementations used as test oracles. Nothing here calls the
// library's own filtering or metric code.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "fusionfm/image.hpp"
#include "fusionfm/random.hpp"

namespace oracle {

using fusionfm::Image;

inline Image random_image(int h, int w, std::uint64_t seed, int channels = 1) {
  fusionfm::Rng rng(seed);
  Image img(h, w, channels);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

// Explicitly padded copy, reflect-101 (dcb|abcd|cba).
inline std::vector<std::vector<double>> padded(const Image& img, int r) {
  const int h = img.height(), w = img.width();
  std::vector<std::vector<double>> p(h + 2 * r, std::vector<double>(w + 2 * r));
  auto mirror = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  for (int y = -r; y < h + r; ++y)
    for (int x = -r; x < w + r; ++x) p[y + r][x + r] = img.at(mirror(y, h), mirror(x, w));
  return p;
}

// True convolution: out(y,x) = sum k(i,j) * in(y - i, x - j), kernel centred.
inline Image convolve(const Image& img, const std::vector<double>& k, int side) {
  const int r = side / 2;
  const auto p = padded(img, r);
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) acc += k[(i + r) * side + (j + r)] * p[y - i + r][x - j + r];
      out.at(y, x) = acc;
    }
  return out;
}

struct SobelPair {
  Image gx, gy;
};

inline SobelPair sobel_xy(const Image& img) {
  const auto p = padded(img, 1);
  SobelPair s{Image(img.height(), img.width()), Image(img.height(), img.width())};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const int Y = y + 1, X = x + 1;
      s.gx.at(y, x) = (p[Y - 1][X + 1] + 2 * p[Y][X + 1] + p[Y + 1][X + 1]) -
                      (p[Y - 1][X - 1] + 2 * p[Y][X - 1] + p[Y + 1][X - 1]);
      s.gy.at(y, x) = (p[Y + 1][X - 1] + 2 * p[Y + 1][X] + p[Y + 1][X + 1]) -
                      (p[Y - 1][X - 1] + 2 * p[Y - 1][X] + p[Y - 1][X + 1]);
    }
  return s;
}

inline Image sobel_magnitude(const Image& img) {
  const auto s = sobel_xy(img);
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(y, x) = std::sqrt(s.gx.at(y, x) * s.gx.at(y, x) + s.gy.at(y, x) * s.gy.at(y, x));
  return out;
}

inline std::vector<double> histogram(const Image& img) {
  std::vector<double> counts(256, 0.0);
  for (double v : img.data()) {
    for (int b = 0; b < 256; ++b) {
      const bool last = b == 255;
      if (v >= b / 256.0 && (v < (b + 1) / 256.0 || (last && v <= 1.0))) {
        counts[b] += 1.0;
        break;
      }
    }
  }
  for (double& c : counts) c /= static_cast<double>(img.size());
  return counts;
}

inline double std_dev255(const Image& img) {
  double sum = 0.0;
  for (double v : img.data()) sum += 255.0 * v;
  const double m = sum / img.size();
  double ss = 0.0;
  for (double v : img.data()) ss += (255.0 * v - m) * (255.0 * v - m);
  return std::sqrt(ss / img.size());
}

inline double spatial_frequency255(const Image& img) {
  const int h = img.height(), w = img.width();
  double rf = 0.0, cf = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const double d = 255.0 * (img.at(y, x + 1) - img.at(y, x));
      rf += d * d;
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = 255.0 * (img.at(y + 1, x) - img.at(y, x));
      cf += d * d;
    }
  return std::sqrt(rf / (h * (w - 1.0)) + cf / ((h - 1.0) * w));
}

inline double average_gradient255(const Image& img) {
  double acc = 0.0;
  for (int y = 0; y + 1 < img.height(); ++y)
    for (int x = 0; x + 1 < img.width(); ++x) {
      const double gx = 255.0 * (img.at(y, x + 1) - img.at(y, x));
      const double gy = 255.0 * (img.at(y + 1, x) - img.at(y, x));
      acc += std::sqrt(0.5 * (gx * gx + gy * gy));
    }
  return acc / ((img.height() - 1.0) * (img.width() - 1.0));
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

inline double scd(const Image& f, const Image& a, const Image& b) {
  std::vector<double> fa, fb, va, vb;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fa.push_back(f.data()[i] - a.data()[i]);
    fb.push_back(f.data()[i] - b.data()[i]);
    va.push_back(a.data()[i]);
    vb.push_back(b.data()[i]);
  }
  return pearson(fa, vb) + pearson(fb, va);
}

// Sliding-window SSIM: for each valid 11x11 placement, Gaussian-weighted
// moments computed directly from the window pixels.
inline double ssim(const Image& f, const Image& r) {
  const int n = 11;
  const double sigma = 1.5;
  std::vector<double> g(n * n);
  double gs = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      g[i * n + j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
      gs += g[i * n + j];
    }
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + n <= f.height(); ++y)
    for (int x = 0; x + n <= f.width(); ++x) {
      double mf = 0, mr = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          mf += g[i * n + j] * f.at(y + i, x + j);
          mr += g[i * n + j] * r.at(y + i, x + j);
        }
      double vf = 0, vr = 0, cfr = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double df = f.at(y + i, x + j) - mf, dr = r.at(y + i, x + j) - mr;
          vf += g[i * n + j] * df * df;
          vr += g[i * n + j] * dr * dr;
          cfr += g[i * n + j] * df * dr;
        }
      total += ((2 * mf * mr + c1) * (2 * cfr + c2)) / ((mf * mf + mr * mr + c1) * (vf + vr + c2));
      ++count;
    }
  return total / count;
}

// Xydeas-Petrovic, written out from the published formulation.
inline double qabf(const Image& f, const Image& a, const Image& b) {
  const double Tg = 0.9994, kg = -15, Dg = 0.5, Ta = 0.9879, ka = -22, Da = 0.8;
  const auto sf = sobel_xy(f), sa = sobel_xy(a), sb = sobel_xy(b);
  auto strength = [](const SobelPair& s, int i) {
    return std::sqrt(s.gx.data()[i] * s.gx.data()[i] + s.gy.data()[i] * s.gy.data()[i]);
  };
  auto angle = [](const SobelPair& s, int i) {
    const double gx = s.gx.data()[i], gy = s.gy.data()[i];
    return gx == 0.0 ? std::numbers::pi / 2 : std::atan(gy / gx);
  };
  auto q = [&](const SobelPair& src, int i) {
    const double gs = strength(src, i), gf = strength(sf, i);
    const double G = gs > gf ? gf / gs : (gs < gf ? gs / gf : 1.0);
    const double A = 1.0 - std::abs(angle(src, i) - angle(sf, i)) / (std::numbers::pi / 2);
    return Tg / (1 + std::exp(kg * (G - Dg))) * (Ta / (1 + std::exp(ka * (A - Da))));
  };
  double num = 0, den = 0;
  for (int i = 0; i < static_cast<int>(f.size()); ++i) {
    num += q(sa, i) * strength(sa, i) + q(sb, i) * strength(sb, i);
    den += strength(sa, i) + strength(sb, i);
  }
  return num / den;
}

// Minimum mean |a_i - b_pi(i)| (and mean squared gap) over all permutations.
struct Transport {
  double w1, w2;
};

inline Transport brute_force_transport(std::vector<double> a, const std::vector<double>& b) {
  std::vector<int> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best1 = 1e300, best2 = 1e300;
  do {
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[perm[i]];
      s1 += std::abs(d);
      s2 += d * d;
    }
    best1 = std::min(best1, s1 / a.size());
    best2 = std::min(best2, s2 / a.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best1, std::sqrt(best2)};
}

}  // namespace oracle
