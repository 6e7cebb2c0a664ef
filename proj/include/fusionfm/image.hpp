#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fusionfm/errors.hpp"

namespace fusionfm {

// H x W x C intensities, interleaved row-major (HWC). Values are nominally
// in [0,1]; intermediate results (high-pass residuals, fields) may leave it.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0) {
      throw DimensionError("image dimensions must be positive, got " + std::to_string(height) +
                           "x" + std::to_string(width));
    }
    if (channels != 1 && channels != 3) {
      throw DimensionError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] double& at(int y, int x, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  [[nodiscard]] double at(int y, int x, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  [[nodiscard]] std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
  }

  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// Entry points of the fusion pipeline accept nothing smaller than 8x8.
inline void require_pipeline_shape(const Image& img, const char* what) {
  if (img.height() < 8 || img.width() < 8) {
    throw DimensionError(std::string(what) + ": image must be at least 8x8, got " +
                         img.shape_string());
  }
}

inline void require_finite(const Image& img, const char* what) {
  for (double v : img.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite pixel value");
  }
}

inline Image clamp01(Image img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// Odd-sided square filter.
class Kernel {
 public:
  Kernel(int side, std::vector<double> weights, bool sum_to_one = false)
      : side_(side), weights_(std::move(weights)), sum_to_one_(sum_to_one) {
    if (side <= 0 || side % 2 == 0) {
      throw DimensionError("kernel side must be odd and positive, got " + std::to_string(side));
    }
    if (weights_.size() != static_cast<std::size_t>(side) * side) {
      throw DimensionError("kernel weight count does not match side^2");
    }
    if (sum_to_one_) {
      const double s = std::accumulate(weights_.begin(), weights_.end(), 0.0);
      if (std::abs(s - 1.0) > 1e-9) throw DomainError("sum-to-one kernel sums to " + std::to_string(s));
    }
  }

  static Kernel box(int side) {
    const double w = 1.0 / (static_cast<double>(side) * side);
    return Kernel(side, std::vector<double>(static_cast<std::size_t>(side) * side, w), true);
  }

  static Kernel identity(int side = 3) {
    std::vector<double> w(static_cast<std::size_t>(side) * side, 0.0);
    w[w.size() / 2] = 1.0;
    return Kernel(side, std::move(w), true);
  }

  static Kernel gaussian(int side, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(side) * side);
    const int r = side / 2;
    double s = 0.0;
    for (int y = -r; y <= r; ++y) {
      for (int x = -r; x <= r; ++x) {
        const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
        w[static_cast<std::size_t>(y + r) * side + (x + r)] = v;
        s += v;
      }
    }
    for (double& v : w) v /= s;
    // Renormalisation leaves rounding residue well inside the 1e-9 tolerance.
    return Kernel(side, std::move(w), true);
  }

  [[nodiscard]] int side() const noexcept { return side_; }
  [[nodiscard]] int radius() const noexcept { return side_ / 2; }
  [[nodiscard]] bool sum_to_one() const noexcept { return sum_to_one_; }
  [[nodiscard]] double at(int y, int x) const noexcept {
    return weights_[static_cast<std::size_t>(y) * side_ + x];
  }
  [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }

 private:
  int side_;
  std::vector<double> weights_;
  bool sum_to_one_;
};

// Reflect-101 index mapping: -1 -> 1, n -> n-2.
[[nodiscard]] inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

namespace detail {

// Correlation with reflect padding; the kernel is not flipped.
inline Image correlate(const Image& img, const Kernel& k) {
  if (k.side() > std::min(img.height(), img.width())) {
    throw DimensionError("kernel side " + std::to_string(k.side()) + " exceeds image " +
                         img.shape_string());
  }
  Image out(img.height(), img.width(), img.channels());
  const int r = k.radius();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect_index(y + dy, img.height());
          for (int dx = -r; dx <= r; ++dx) {
            acc += k.at(dy + r, dx + r) * img.at(yy, reflect_index(x + dx, img.width()), c);
          }
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

inline Kernel flipped(const Kernel& k) {
  std::vector<double> w(k.weights().rbegin(), k.weights().rend());
  return Kernel(k.side(), std::move(w), false);
}

}  // namespace detail

// 2-D convolution with reflect padding; same output shape as the input.
[[nodiscard]] inline Image convolve(const Image& img, const Kernel& k) {
  return detail::correlate(img, detail::flipped(k));
}

[[nodiscard]] inline Image to_luminance(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw DimensionError("to_luminance: channels must be 1 or 3");
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    }
  }
  return out;
}

struct Gradient {
  Image gx;
  Image gy;
};

// 3x3 Sobel derivatives (x: left-to-right, y: top-to-bottom), reflect padding.
[[nodiscard]] inline Gradient sobel(const Image& img) {
  const Image lum = to_luminance(img);
  static const Kernel kx(3, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
  static const Kernel ky(3, {-1, -2, -1, 0, 0, 0, 1, 2, 1});
  return {detail::correlate(lum, kx), detail::correlate(lum, ky)};
}

[[nodiscard]] inline Image gradient_magnitude(const Image& img) {
  auto [gx, gy] = sobel(img);
  Image out(gx.height(), gx.width(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::hypot(gx.data()[i], gy.data()[i]);
  }
  return out;
}

// Bin b covers [b/256, (b+1)/256); the last bin is closed at 1.
[[nodiscard]] inline std::array<double, 256> histogram256(const Image& img) {
  std::array<std::size_t, 256> counts{};
  for (double v : img.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("histogram256: value " + std::to_string(v) + " outside [0,1]");
    }
    counts[std::min<std::size_t>(255, static_cast<std::size_t>(v * 256.0))] += 1;
  }
  std::array<double, 256> p{};
  const double n = static_cast<double>(img.size());
  for (std::size_t b = 0; b < 256; ++b) p[b] = static_cast<double>(counts[b]) / n;
  return p;
}

[[nodiscard]] inline double mean(const Image& img) {
  return std::accumulate(img.data().begin(), img.data().end(), 0.0) / static_cast<double>(img.size());
}

[[nodiscard]] inline Image mirror_horizontal(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
  return out;
}

[[nodiscard]] inline Image crop(const Image& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > img.height() || left + width > img.width()) {
    throw DimensionError("crop window exceeds image " + img.shape_string());
  }
  Image out(height, width, img.channels());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

[[nodiscard]] inline Image channel(const Image& img, int c) {
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(y, x) = img.at(y, x, c);
  return out;
}

[[nodiscard]] inline Image replicate_to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x);
  return out;
}

// BT.601 full-range YCbCr, chroma centred on 0.5.
struct YCbCr {
  Image y;
  Image cb;
  Image cr;
};

[[nodiscard]] inline YCbCr to_ycbcr(const Image& rgb) {
  if (rgb.channels() != 3) throw DimensionError("to_ycbcr: expected 3 channels");
  YCbCr out{to_luminance(rgb), Image(rgb.height(), rgb.width()), Image(rgb.height(), rgb.width())};
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      const double lum = out.y.at(y, x);
      out.cb.at(y, x) = 0.5 + (rgb.at(y, x, 2) - lum) / 1.772;
      out.cr.at(y, x) = 0.5 + (rgb.at(y, x, 0) - lum) / 1.402;
    }
  }
  return out;
}

[[nodiscard]] inline Image from_ycbcr(const Image& lum, const Image& cb, const Image& cr) {
  require_same_shape(lum, cb, "from_ycbcr");
  require_same_shape(lum, cr, "from_ycbcr");
  Image out(lum.height(), lum.width(), 3);
  for (int y = 0; y < lum.height(); ++y) {
    for (int x = 0; x < lum.width(); ++x) {
      const double l = lum.at(y, x);
      const double r = l + 1.402 * (cr.at(y, x) - 0.5);
      const double b = l + 1.772 * (cb.at(y, x) - 0.5);
      const double g = (l - 0.299 * r - 0.114 * b) / 0.587;
      out.at(y, x, 0) = std::clamp(r, 0.0, 1.0);
      out.at(y, x, 1) = std::clamp(g, 0.0, 1.0);
      out.at(y, x, 2) = std::clamp(b, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace fusionfm
