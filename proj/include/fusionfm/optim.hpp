#pragma once

#include <torch/torch.h>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fusionfm/errors.hpp"

namespace fusionfm {

struct NamedParameter {
  std::string name;
  torch::Tensor tensor;
};

[[nodiscard]] inline std::vector<NamedParameter> named_parameters(const torch::nn::Module& m,
                                                                  const std::string& prefix = "") {
  std::vector<NamedParameter> out;
  for (const auto& item : m.named_parameters()) out.push_back({prefix + item.key(), item.value()});
  return out;
}

struct AdamOptions {
  double learning_rate = 8e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t total_steps = 0;  // > 0 enables cosine decay to zero over this many steps
};

// Adam with optional cosine learning-rate decay. The moment buffers are
// exposed so checkpoints can carry them.
class Adam {
 public:
  Adam(std::vector<NamedParameter> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      m_.push_back(torch::zeros_like(p.tensor));
      v_.push_back(torch::zeros_like(p.tensor));
    }
  }

  [[nodiscard]] double current_lr() const {
    if (opts_.total_steps <= 0) return opts_.learning_rate;
    const double progress = std::min(1.0, static_cast<double>(step_) / static_cast<double>(opts_.total_steps));
    return opts_.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }

  void zero_grad() {
    for (auto& p : params_) {
      if (p.tensor.grad().defined()) p.tensor.mutable_grad().zero_();
    }
  }

  void step() {
    const double lr = current_lr();
    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    torch::NoGradGuard guard;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i].tensor.grad();
      if (!g.defined()) continue;
      m_[i].mul_(opts_.beta1).add_(g, 1.0 - opts_.beta1);
      v_[i].mul_(opts_.beta2).addcmul_(g, g, 1.0 - opts_.beta2);
      auto denom = (v_[i] / bc2).sqrt_().add_(opts_.eps);
      params_[i].tensor.addcdiv_(m_[i], denom, -lr / bc1);
    }
  }

  [[nodiscard]] std::int64_t steps_taken() const noexcept { return step_; }
  void set_steps_taken(std::int64_t s) noexcept { step_ = s; }
  [[nodiscard]] const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::vector<torch::Tensor>& first_moments() noexcept { return m_; }
  [[nodiscard]] std::vector<torch::Tensor>& second_moments() noexcept { return v_; }

 private:
  std::vector<NamedParameter> params_;
  AdamOptions opts_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  std::int64_t step_ = 0;
};

}  // namespace fusionfm
