#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fusionfm/checkpoint.hpp"
#include "fusionfm/errors.hpp"
#include "fusionfm/optim.hpp"
#include "fusionfm/random.hpp"

// Elastic weight consolidation, experience replay and transfer measures for
// sequential training over tasks.
namespace fusionfm::continual {

using ParamMap = std::map<std::string, torch::Tensor>;

struct TaskSnapshot {
  std::string task_id;
  ParamMap theta_star;
  ParamMap fisher;

  void validate() const {
    if (theta_star.size() != fisher.size()) throw ConfigError("snapshot '" + task_id + "': key sets differ");
    for (const auto& [name, f] : fisher) {
      const auto it = theta_star.find(name);
      if (it == theta_star.end()) throw ConfigError("snapshot '" + task_id + "': no theta* for '" + name + "'");
      if (!it->second.sizes().equals(f.sizes())) throw ConfigError("snapshot '" + task_id + "': shape mismatch for '" + name + "'");
      if (!torch::isfinite(f).all().item<bool>() || (f < 0).any().item<bool>()) {
        throw NumericError("snapshot '" + task_id + "': Fisher for '" + name + "' is negative or non-finite");
      }
    }
  }
};

struct ContinualConfig {
  double lambda = 1000.0;
  std::size_t memory_size = 100;
  int fisher_batches = 64;
  int fisher_batch_size = 4;
  bool use_ewc = true;
  bool use_replay = true;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("continual.lambda must be finite and >= 0");
    if (fisher_batches < 1) throw ConfigError("continual.fisher_batches must be >= 1");
    if (fisher_batch_size < 1) throw ConfigError("continual.fisher_batch_size must be >= 1");
  }
};

[[nodiscard]] inline ParamMap detach_params(const std::vector<NamedParameter>& params) {
  ParamMap out;
  for (const auto& p : params) out[p.name] = p.tensor.detach().clone();
  return out;
}

// Mean over batches of squared loss gradients. `batch_loss(i)` returns the
// scalar loss of batch i at the current parameters.
template <class BatchLoss>
[[nodiscard]] ParamMap compute_fisher(const std::vector<NamedParameter>& params, BatchLoss&& batch_loss, int n_batches) {
  if (n_batches < 1) throw ConfigError("compute_fisher: need at least one batch");
  ParamMap fisher;
  for (const auto& p : params) fisher[p.name] = torch::zeros_like(p.tensor).detach();
  for (int i = 0; i < n_batches; ++i) {
    for (const auto& p : params) {
      if (p.tensor.grad().defined()) p.tensor.mutable_grad().zero_();
    }
    torch::Tensor loss = batch_loss(i);
    loss.backward();
    torch::NoGradGuard g;
    for (const auto& p : params) {
      if (p.tensor.grad().defined()) fisher[p.name].add_(p.tensor.grad() * p.tensor.grad());
    }
  }
  for (const auto& p : params) {
    if (p.tensor.grad().defined()) p.tensor.mutable_grad().zero_();
  }
  for (auto& [name, f] : fisher) f.div_(static_cast<double>(n_batches));
  return fisher;
}

// sum_k sum_i lambda F_k,i (theta_i - theta*_k,i)^2, differentiable in theta.
[[nodiscard]] inline torch::Tensor ewc_penalty(const ParamMap& theta, const std::vector<TaskSnapshot>& snapshots,
                                               double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("ewc_penalty: lambda must be >= 0");
  torch::Tensor total;
  for (const auto& snap : snapshots) {
    for (const auto& [name, f] : snap.fisher) {
      const auto it = theta.find(name);
      if (it == theta.end()) throw ConfigError("ewc_penalty: parameter '" + name + "' missing from the model");
      const auto d = it->second - snap.theta_star.at(name);
      auto term = (f * d * d).sum();
      total = total.defined() ? total + term : term;
    }
  }
  if (!total.defined()) return torch::zeros({}, torch::kFloat64);
  return lambda * total;
}

[[nodiscard]] inline torch::Tensor ewc_penalty(const std::vector<NamedParameter>& params,
                                               const std::vector<TaskSnapshot>& snapshots, double lambda) {
  ParamMap theta;
  for (const auto& p : params) theta[p.name] = p.tensor;
  return ewc_penalty(theta, snapshots, lambda);
}

// fm + penalty. With lambda = 0 or no snapshots the penalty is not built at
// all, so the autograd graph (and every gradient bit) matches plain training.
[[nodiscard]] inline torch::Tensor unified_loss(const torch::Tensor& fm, const std::vector<NamedParameter>& params,
                                                const std::vector<TaskSnapshot>& snapshots, double lambda) {
  if (lambda == 0.0 || snapshots.empty()) return fm;
  return fm + ewc_penalty(params, snapshots, lambda).to(fm.scalar_type());
}

struct ReplayItem {
  std::string task_id;
  std::string sample_id;
  bool operator==(const ReplayItem&) const = default;
  auto operator<=>(const ReplayItem&) const = default;
};

struct TaskMemory {
  std::string task_id;
  std::vector<std::string> samples;
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t memory_size, std::vector<TaskMemory> memories)
      : memory_size_(memory_size), memories_(std::move(memories)) {}

  [[nodiscard]] std::size_t memory_size() const noexcept { return memory_size_; }
  [[nodiscard]] const std::vector<TaskMemory>& memories() const noexcept { return memories_; }

  // Union of all memories except the current task's.
  [[nodiscard]] std::vector<ReplayItem> union_excluding(const std::string& current_task) const {
    std::vector<ReplayItem> out;
    for (const auto& m : memories_) {
      if (m.task_id == current_task) continue;
      for (const auto& s : m.samples) out.push_back({m.task_id, s});
    }
    return out;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["memory_size"] = memory_size_;
    j["memories"] = nlohmann::json::array();
    for (const auto& m : memories_) j["memories"].push_back({{"task", m.task_id}, {"samples", m.samples}});
    return j;
  }

  static ReplayBuffer from_json(const nlohmann::json& j) {
    std::vector<TaskMemory> ms;
    for (const auto& m : j.at("memories")) {
      ms.push_back({m.at("task").get<std::string>(), m.at("samples").get<std::vector<std::string>>()});
    }
    return ReplayBuffer(j.at("memory_size").get<std::size_t>(), std::move(ms));
  }

 private:
  std::size_t memory_size_ = 0;
  std::vector<TaskMemory> memories_;
};

// Uniform sampling without replacement of min(|D_k|, memory_size) samples per
// completed task, sorted; task k draws from a stream derived from (seed, k).
[[nodiscard]] inline std::vector<std::string> sample_memory(std::vector<std::string> ids, std::size_t memory_size,
                                                            std::uint64_t stream_seed) {
  std::sort(ids.begin(), ids.end());
  const std::size_t m = std::min(ids.size(), memory_size);
  Rng rng(stream_seed);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

[[nodiscard]] inline ReplayBuffer build_replay(const std::vector<std::pair<std::string, std::vector<std::string>>>& completed,
                                               std::size_t memory_size, std::uint64_t seed) {
  std::vector<TaskMemory> ms;
  for (std::size_t k = 0; k < completed.size(); ++k) {
    ms.push_back({completed[k].first, sample_memory(completed[k].second, memory_size, derive_seed(seed, k))});
  }
  return ReplayBuffer(memory_size, std::move(ms));
}

struct Transfer {
  double bwt = std::numeric_limits<double>::quiet_NaN();
  double fwt = std::numeric_limits<double>::quiet_NaN();
};

// R[j][i]: score on task i after training task j (0-based). baseline[i]: score
// of an untrained model on task i. Both means are NaN when T < 2.
[[nodiscard]] inline Transfer bwt_fwt(const std::vector<std::vector<double>>& r, const std::vector<double>& baseline) {
  const std::size_t t = r.size();
  for (const auto& row : r) {
    if (row.size() != t) throw DimensionError("bwt_fwt: R must be square");
  }
  if (!baseline.empty() && baseline.size() != t) throw DimensionError("bwt_fwt: baseline needs one entry per task");
  Transfer out;
  if (t < 2) return out;
  double b = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) b += r[t - 1][i] - r[i][i];
  out.bwt = b / static_cast<double>(t - 1);
  if (!baseline.empty()) {
    double f = 0.0;
    for (std::size_t i = 1; i < t; ++i) f += r[i - 1][i] - baseline[i];
    out.fwt = f / static_cast<double>(t - 1);
  }
  return out;
}

// Continual bundle: current parameters, every snapshot, replay index (ids).
inline void save_continual(const std::filesystem::path& path, const net::VectorFieldNet& model, std::int64_t step,
                           std::uint64_t seed, const std::vector<TaskSnapshot>& snapshots, const ReplayBuffer& replay,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  TensorArchive ar;
  ar.meta["kind"] = "continual";
  ar.meta["spec"] = model->spec;
  ar.meta["step"] = step;
  ar.meta["seed"] = seed;
  ar.meta["extra"] = extra;
  ar.meta["replay"] = replay.to_json();
  ar.meta["snapshots"] = nlohmann::json::array();
  store_module(ar, *model, "model/");
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    ar.meta["snapshots"].push_back(snapshots[k].task_id);
    const std::string pre = "snapshot/" + std::to_string(k) + "/";
    for (const auto& [name, t] : snapshots[k].theta_star) ar.add(pre + "theta/" + name, t);
    for (const auto& [name, t] : snapshots[k].fisher) ar.add(pre + "fisher/" + name, t);
  }
  ar.save(path);
}

struct ContinualBundle {
  ModelCheckpoint model;
  std::vector<TaskSnapshot> snapshots;
  ReplayBuffer replay;
};

[[nodiscard]] inline ContinualBundle load_continual(const std::filesystem::path& path) {
  const auto ar = TensorArchive::load(path);
  if (ar.meta.value("kind", "") != "continual") throw DataError("'" + path.string() + "' is not a continual checkpoint");
  ContinualBundle b;
  b.model.spec = ar.meta.at("spec").get<net::NetSpec>();
  b.model.step = ar.meta.at("step").get<std::int64_t>();
  b.model.seed = ar.meta.at("seed").get<std::uint64_t>();
  b.model.extra = ar.meta.value("extra", nlohmann::json::object());
  b.model.model = net::VectorFieldNet(b.model.spec);
  b.model.model->to(ar.at("model/out_conv.weight").scalar_type());
  restore_module(ar, *b.model.model, "model/");
  b.model.model->eval();
  b.replay = ReplayBuffer::from_json(ar.meta.at("replay"));
  const auto ids = ar.meta.at("snapshots").get<std::vector<std::string>>();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    TaskSnapshot s{ids[k], {}, {}};
    const std::string theta_pre = "snapshot/" + std::to_string(k) + "/theta/";
    const std::string fisher_pre = "snapshot/" + std::to_string(k) + "/fisher/";
    for (const auto& [name, t] : ar.tensors) {
      if (name.rfind(theta_pre, 0) == 0) s.theta_star[name.substr(theta_pre.size())] = t;
      if (name.rfind(fisher_pre, 0) == 0) s.fisher[name.substr(fisher_pre.size())] = t;
    }
    s.validate();
    b.snapshots.push_back(std::move(s));
  }
  return b;
}

}  // namespace fusionfm::continual
