#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusionfm/dataset.hpp"
#include "fusionfm/flow.hpp"
#include "fusionfm/optim.hpp"
#include "fusionfm/random.hpp"
#include "fusionfm/synthetic.hpp"
#include "fusionfm/training.hpp"
#include "fusionfm/unet.hpp"

namespace support {

inline const bool kSingleThread = (torch::set_num_threads(1), true);

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fusionfm_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Generated dataset whose pseudo labels are the analytic ideal fusions.
inline fusionfm::FusionDataset ideal_dataset(const std::filesystem::path& root, fusionfm::synth::Flavor flavor,
                                             std::size_t n_pairs, int size, std::uint64_t seed) {
  fusionfm::synth::GenerateOptions g;
  g.n_pairs = n_pairs;
  g.size = size;
  g.seed = seed;
  g.flavor = flavor;
  fusionfm::synth::generate(root, g);
  auto ds = fusionfm::FusionDataset::load(root, fusionfm::synth::flavor_task(flavor));
  for (const auto& p : ds.pairs()) ds.set_pseudo(p.id, *p.reference);
  return ds;
}

struct GradCheck {
  int checked = 0;
  int within = 0;
  double worst = 0.0;
};

// Central differences of the flow-matching loss against autograd on randomly
// drawn scalar parameters. The output layer is randomised first so every
// parameter receives gradient. Works in float64.
inline GradCheck fm_gradient_check(const fusionfm::net::NetSpec& spec, int side, int n_params, double eps,
                                   double tolerance, std::uint64_t seed) {
  using namespace fusionfm;
  auto model = net::make_net(spec, seed, torch::kFloat64);
  {
    torch::NoGradGuard g;
    torch::manual_seed(seed + 1);
    model->out_conv->weight.normal_(0.0, 0.05);
    model->out_conv->bias.normal_(0.0, 0.05);
  }
  auto gen = make_generator(seed + 2);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto a = torch::rand({2, spec.image_channels, side, side}, gen, opts);
  const auto b = torch::rand({2, spec.image_channels, side, side}, gen, opts);
  const auto x1 = torch::rand({2, spec.image_channels, side, side}, gen, opts);
  const auto t = torch::rand({2}, gen, opts);
  flow::FlowConfig fc;
  const auto s = flow::make_flow_sample(a, b, x1, t, fc, gen);
  auto loss_fn = [&] { return flow::fm_loss(model->forward(s.t, s.xt, s.x0a, s.x0b), s.u_target); };

  model->zero_grad();
  loss_fn().backward();
  auto params = named_parameters(*model);
  std::int64_t total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  Rng rng(seed + 3);
  GradCheck out;
  torch::NoGradGuard guard;
  for (int k = 0; k < n_params; ++k) {
    auto flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
    std::size_t pi = 0;
    while (flat >= params[pi].tensor.numel()) flat -= params[pi++].tensor.numel();
    auto view = params[pi].tensor.view({-1});
    const double analytic = params[pi].tensor.grad().view({-1})[flat].item<double>();
    const double orig = view[flat].item<double>();
    view[flat] = orig + eps;
    const double up = loss_fn().item<double>();
    view[flat] = orig - eps;
    const double down = loss_fn().item<double>();
    view[flat] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale > 0.0 ? std::abs(analytic - numeric) / scale : 0.0;
    ++out.checked;
    if (rel < tolerance) ++out.within;
    out.worst = std::max(out.worst, rel);
  }
  return out;
}

}  // namespace support
