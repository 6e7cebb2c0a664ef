#pragma once

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/random.hpp"
#include "fusionfm/wasserstein.hpp"

// Flow matching between the coupled sources x0 and the fused target x1:
// x_t ~ N(t x1 + (1-t) x0, sigma_min^2 I), u = x1 - x0, L1 regression loss.
namespace fusionfm::flow {

enum class Coupling { Average, Sum, Noise };

[[nodiscard]] inline std::string coupling_name(Coupling c) {
  switch (c) {
    case Coupling::Average: return "average";
    case Coupling::Sum: return "sum";
    case Coupling::Noise: return "noise";
  }
  return "?";
}

[[nodiscard]] inline Coupling parse_coupling(std::string_view s) {
  if (s == "average") return Coupling::Average;
  if (s == "sum") return Coupling::Sum;
  if (s == "noise") return Coupling::Noise;
  throw ConfigError("unknown coupling '" + std::string(s) + "' (expected average, sum or noise)");
}

struct FlowConfig {
  double sigma_min = 1e-4;
  Coupling coupling = Coupling::Average;
  int n_sample_steps = 1;

  void validate() const {
    if (!(sigma_min >= 0.0) || !std::isfinite(sigma_min)) throw ConfigError("flow.sigma_min must be >= 0");
    if (n_sample_steps < 1) throw ConfigError("flow.n_sample_steps must be >= 1");
  }
};

// x0 from the source pair. Average stays in [0,1]; sum may exceed 1; noise
// ignores the sources and draws a standard normal field.
[[nodiscard]] inline torch::Tensor couple(const torch::Tensor& xa, const torch::Tensor& xb, Coupling mode,
                                          torch::Generator gen = {}) {
  if (!xa.sizes().equals(xb.sizes())) throw DimensionError("couple: source shapes differ");
  switch (mode) {
    case Coupling::Average: return (xa + xb) / 2.0;
    case Coupling::Sum: return xa + xb;
    case Coupling::Noise:
      return gen.defined() ? torch::randn(xa.sizes(), gen, xa.options()) : torch::randn(xa.sizes(), xa.options());
  }
  throw ConfigError("unknown coupling");
}

[[nodiscard]] inline Image couple(const Image& xa, const Image& xb, Coupling mode, Rng* rng = nullptr) {
  require_same_shape(xa, xb, "couple");
  Image out(xa.height(), xa.width(), xa.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = xa.data()[i], b = xb.data()[i];
    switch (mode) {
      case Coupling::Average: out.data()[i] = (a + b) / 2.0; break;
      case Coupling::Sum: out.data()[i] = a + b; break;
      case Coupling::Noise:
        if (!rng) throw ConfigError("noise coupling needs a random stream");
        out.data()[i] = rng->normal();
        break;
    }
  }
  return out;
}

struct PathPoint {
  torch::Tensor xt;
  torch::Tensor u_target;
};

// t broadcasts per batch item ([N]) or is a scalar tensor.
[[nodiscard]] inline PathPoint sample_path(const torch::Tensor& x0, const torch::Tensor& x1, torch::Tensor t,
                                           double sigma_min, torch::Generator gen = {}) {
  if (!x0.sizes().equals(x1.sizes())) throw DimensionError("sample_path: x0 and x1 shapes differ");
  if ((t < 0).any().item<bool>() || (t > 1).any().item<bool>()) throw DomainError("sample_path: t outside [0,1]");
  t = t.to(x0.scalar_type());
  if (t.dim() == 1) {
    std::vector<std::int64_t> shape(static_cast<std::size_t>(x0.dim()), 1);
    shape[0] = t.size(0);
    t = t.reshape(shape);
  }
  auto xt = t * x1 + (1.0 - t) * x0;
  if (sigma_min > 0.0) {
    auto eps = gen.defined() ? torch::randn(x0.sizes(), gen, x0.options()) : torch::randn(x0.sizes(), x0.options());
    xt = xt + sigma_min * eps;
  }
  return {xt, x1 - x0};
}

struct FlowSample {
  torch::Tensor x0a, x0b, x0, x1, t, xt, u_target;
};

[[nodiscard]] inline FlowSample make_flow_sample(const torch::Tensor& x0a, const torch::Tensor& x0b,
                                                 const torch::Tensor& x1, const torch::Tensor& t,
                                                 const FlowConfig& cfg, torch::Generator gen = {}) {
  FlowSample s{x0a, x0b, couple(x0a, x0b, cfg.coupling, gen), x1, t, {}, {}};
  auto p = sample_path(s.x0, x1, t, cfg.sigma_min, gen);
  s.xt = std::move(p.xt);
  s.u_target = std::move(p.u_target);
  return s;
}

// Mean absolute error over every element of the batch.
[[nodiscard]] inline torch::Tensor fm_loss(const torch::Tensor& v_pred, const torch::Tensor& u_target) {
  if (!v_pred.sizes().equals(u_target.sizes())) throw DimensionError("fm_loss: shape mismatch");
  return (v_pred - u_target).abs().mean();
}

// Fixed-step Euler integration of dx = v(t, x; x0A, x0B) dt from x0 at t=0.
// Iterates are formed as x_k = x0 + t_k * mean(v_0..v_{k-1}), which equals the
// usual Euler recursion for uniform steps and reproduces x0 + c exactly for a
// constant field c at any step count. The result is clamped to [0,1].
template <class Field>
[[nodiscard]] torch::Tensor sample(Field&& field, const torch::Tensor& x0a, const torch::Tensor& x0b,
                                   const FlowConfig& cfg, torch::Generator gen = {}) {
  cfg.validate();
  torch::NoGradGuard guard;
  const auto x0 = couple(x0a, x0b, cfg.coupling, gen);
  auto x = x0;
  torch::Tensor mean_v;
  const int n = cfg.n_sample_steps;
  for (int k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / n;
    auto tt = torch::full({x0.size(0)}, t, x0.options());
    auto v = field(tt, x, x0a, x0b);
    if (!torch::isfinite(v).all().template item<bool>()) {
      throw NumericError("sampler: non-finite vector field at step " + std::to_string(k));
    }
    mean_v = k == 0 ? v : mean_v + (v - mean_v) / static_cast<double>(k + 1);
    const double t_next = k + 1 == n ? 1.0 : static_cast<double>(k + 1) / n;
    x = x0 + t_next * mean_v;
  }
  return x.clamp(0.0, 1.0);
}

struct CouplingRow {
  Coupling coupling;
  double mean_w1 = 0.0;
  double mean_w2 = 0.0;
  double mean_w2_squared = 0.0;
};

struct CouplingPair {
  Image a;
  Image b;
  Image target;
};

// Mean 1-D Wasserstein distances between the pixel-intensity distributions of
// the coupled source x0 and the target, per coupling mode.
[[nodiscard]] inline std::vector<CouplingRow> coupling_experiment(const std::vector<CouplingPair>& pairs,
                                                                  const std::vector<Coupling>& modes,
                                                                  std::uint64_t seed) {
  if (pairs.empty()) throw DataError("coupling experiment needs at least one pair");
  std::vector<CouplingRow> rows;
  for (Coupling mode : modes) {
    CouplingRow row{mode};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      Rng rng(derive_seed(seed, i));
      const Image x0 = couple(pairs[i].a, pairs[i].b, mode, &rng);
      const auto w = wasserstein_1d(x0.data(), pairs[i].target.data());
      row.mean_w1 += w.w1;
      row.mean_w2 += w.w2;
      row.mean_w2_squared += w.w2 * w.w2;
    }
    const double n = static_cast<double>(pairs.size());
    row.mean_w1 /= n;
    row.mean_w2 /= n;
    row.mean_w2_squared /= n;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fusionfm::flow
