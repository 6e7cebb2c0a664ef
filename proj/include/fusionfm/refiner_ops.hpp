#pragma once

#include <algorithm>
#include <cmath>

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"

// Deterministic part of the fusion refiner: high-frequency extraction, the
// adaptive weight map, the protection mask and detail injection.
namespace fusionfm::refiner {

struct RefinerParams {
  double alpha_a = 0.5;
  double alpha_b = 0.5;
  double threshold = 0.10;  // c, on the raw Sobel-magnitude scale of [0,1] images
  int kernel_side = 5;
  double sigmoid_slope = 6.0;

  [[nodiscard]] Kernel kernel() const { return Kernel::box(kernel_side); }
};

// I - I * H
[[nodiscard]] inline Image high_pass(const Image& img, const Kernel& h) {
  if (!h.sum_to_one()) throw DomainError("high_pass needs a sum-to-one low-pass kernel");
  const Image low = convolve(img, h);
  Image out = img;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= low.data()[i];
  return out;
}

[[nodiscard]] inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Sobel gradient energy gx^2 + gy^2, min-max normalised (0/0 := 0).
[[nodiscard]] inline Image edge_energy(const Image& part) {
  const auto [gx, gy] = sobel(part);
  Image e(gx.height(), gx.width());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e.data()[i] = gx.data()[i] * gx.data()[i] + gy.data()[i] * gy.data()[i];
  }
  const auto [lo, hi] = std::minmax_element(e.data().begin(), e.data().end());
  const double min = *lo, range = *hi - *lo;
  for (double& v : e.data()) v = range > 0.0 ? (v - min) / range : 0.0;
  return e;
}

// W = sigmoid(slope * (part - mean(part))) * normalised edge energy; W in [0,1].
[[nodiscard]] inline Image weight_map(const Image& part, double slope = 6.0) {
  if (part.channels() != 1) throw DimensionError("weight_map expects a single-channel image");
  const double m = mean(part);
  Image w = edge_energy(part);
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] *= sigmoid(slope * (part.data()[i] - m));
  return w;
}

// P = ReLU(|grad part| - c)
[[nodiscard]] inline Image protection_mask(const Image& part, double c) {
  Image p = gradient_magnitude(part);
  for (double& v : p.data()) v = std::max(0.0, v - c);
  return p;
}

// (W * source^d + (1 - W) * part^d) * P, the term scaled by alpha.
[[nodiscard]] inline Image injection_term(const Image& part, const Image& source, double c,
                                          const Kernel& h, double slope = 6.0) {
  require_same_shape(part, source, "refine_component");
  Image out(part.height(), part.width(), part.channels());
  for (int ch = 0; ch < part.channels(); ++ch) {
    const Image p = part.channels() == 1 ? part : channel(part, ch);
    const Image s = source.channels() == 1 ? source : channel(source, ch);
    const Image pd = high_pass(p, h);
    const Image sd = high_pass(s, h);
    const Image w = weight_map(p, slope);
    const Image mask = protection_mask(p, c);
    for (int y = 0; y < p.height(); ++y) {
      for (int x = 0; x < p.width(); ++x) {
        const double wv = w.at(y, x);
        const double detail = wv * sd.at(y, x) + (1.0 - wv) * pd.at(y, x);
        out.at(y, x, ch) = detail * mask.at(y, x);
      }
    }
  }
  return out;
}

// I_part^+ = I_f^+ + alpha * I_detail * P
[[nodiscard]] inline Image refine_component(const Image& fused, const Image& part, const Image& source,
                                            double alpha, double c, const Kernel& h,
                                            double slope = 6.0) {
  require_same_shape(fused, part, "refine_component");
  const Image term = injection_term(part, source, c, h, slope);
  Image out = fused;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += alpha * term.data()[i];
  return out;
}

}  // namespace fusionfm::refiner
