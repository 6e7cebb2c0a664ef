#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/selector.hpp"
#include "fusionfm/synthetic.hpp"
#include "fusionfm/training.hpp"

// Run configuration: a JSON document whose every key is known. A profile
// ("full", "desk", "smoke") supplies defaults that the sections override.
namespace fusionfm {

struct SyntheticConfig {
  std::size_t n_pairs = 100;
  int size = 80;
  synth::Flavor flavor = synth::Flavor::IvfLike;
  double val_fraction = 0.2;
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace config_detail

struct RunConfig {
  std::filesystem::path dataset_root = "data";
  std::optional<TaskKind> task;
  std::filesystem::path output_dir = "runs/latest";
  TrainConfig train = TrainConfig::full();
  std::optional<selector::MetricWeights> selector_weights;
  SyntheticConfig synthetic;

  [[nodiscard]] selector::MetricWeights weights_for(TaskKind t) const {
    return selector_weights ? *selector_weights : selector::MetricWeights::for_task(t);
  }

  [[nodiscard]] TaskKind require_task() const {
    if (!task) throw ConfigError("config field 'task' is required for this command");
    return *task;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    using config_detail::check_keys;
    using config_detail::read;
    check_keys(j, {"dataset_root", "task", "output_dir", "seed", "profile", "train", "flow", "continual", "net",
                   "refiner", "selector_weights", "synthetic"},
               "config");
    RunConfig c;
    std::string profile = "full";
    read(j, "profile", profile, "config");
    c.train = TrainConfig::for_profile(profile);

    std::string s;
    if (j.contains("dataset_root")) {
      read(j, "dataset_root", s, "config");
      c.dataset_root = s;
    }
    if (j.contains("output_dir")) {
      read(j, "output_dir", s, "config");
      c.output_dir = s;
    }
    if (j.contains("task")) {
      read(j, "task", s, "config");
      c.task = parse_task(s);
    }
    read(j, "seed", c.train.seed, "config");

    auto& t = c.train;
    if (j.contains("train")) {
      const auto& jt = j.at("train");
      check_keys(jt, {"iterations", "batch_size", "crop_size", "learning_rate", "lambda", "memory_size",
                      "task_sequence", "color_mode", "pseudo_source", "eval_pairs"},
                 "config.train");
      read(jt, "iterations", t.iterations, "config.train");
      read(jt, "batch_size", t.batch_size, "config.train");
      read(jt, "crop_size", t.crop_size, "config.train");
      read(jt, "learning_rate", t.learning_rate, "config.train");
      read(jt, "lambda", t.continual.lambda, "config.train");
      read(jt, "memory_size", t.continual.memory_size, "config.train");
      read(jt, "eval_pairs", t.eval_pairs, "config.train");
      if (jt.contains("task_sequence")) {
        std::vector<std::string> names;
        read(jt, "task_sequence", names, "config.train");
        t.task_sequence.clear();
        for (const auto& n : names) t.task_sequence.push_back(parse_task(n));
      }
      if (jt.contains("color_mode")) {
        read(jt, "color_mode", s, "config.train");
        t.color_mode = parse_color_mode(s);
      }
      if (jt.contains("pseudo_source")) {
        read(jt, "pseudo_source", s, "config.train");
        t.pseudo_source = parse_pseudo_source(s);
      }
    }
    if (j.contains("flow")) {
      const auto& jf = j.at("flow");
      check_keys(jf, {"sigma_min", "coupling", "n_sample_steps"}, "config.flow");
      read(jf, "sigma_min", t.flow.sigma_min, "config.flow");
      read(jf, "n_sample_steps", t.flow.n_sample_steps, "config.flow");
      if (jf.contains("coupling")) {
        read(jf, "coupling", s, "config.flow");
        t.flow.coupling = flow::parse_coupling(s);
      }
    }
    if (j.contains("continual")) {
      const auto& jc = j.at("continual");
      check_keys(jc, {"fisher_batches", "fisher_batch_size", "use_ewc", "use_replay", "baseline_seeds"},
                 "config.continual");
      read(jc, "fisher_batches", t.continual.fisher_batches, "config.continual");
      read(jc, "fisher_batch_size", t.continual.fisher_batch_size, "config.continual");
      read(jc, "use_ewc", t.continual.use_ewc, "config.continual");
      read(jc, "use_replay", t.continual.use_replay, "config.continual");
      read(jc, "baseline_seeds", t.baseline_seeds, "config.continual");
    }
    if (j.contains("net")) {
      const auto& jn = j.at("net");
      check_keys(jn, {"base_channels", "channel_multipliers", "down_stages", "up_stages", "image_channels",
                      "time_embed_dim", "groups"},
                 "config.net");
      read(jn, "base_channels", t.net.base_channels, "config.net");
      read(jn, "channel_multipliers", t.net.channel_multipliers, "config.net");
      read(jn, "down_stages", t.net.down_stages, "config.net");
      read(jn, "up_stages", t.net.up_stages, "config.net");
      read(jn, "image_channels", t.net.image_channels, "config.net");
      read(jn, "time_embed_dim", t.net.time_embed_dim, "config.net");
      read(jn, "groups", t.net.groups, "config.net");
    }
    if (j.contains("refiner")) {
      const auto& jr = j.at("refiner");
      check_keys(jr, {"iterations", "batch_size", "learning_rate", "alpha_init", "threshold", "kernel_side",
                      "sigmoid_slope", "loss"},
                 "config.refiner");
      auto& r = t.refiner;
      read(jr, "iterations", r.iterations, "config.refiner");
      read(jr, "batch_size", r.batch_size, "config.refiner");
      read(jr, "learning_rate", r.learning_rate, "config.refiner");
      double alpha = r.params.alpha_a;
      read(jr, "alpha_init", alpha, "config.refiner");
      r.params.alpha_a = r.params.alpha_b = alpha;
      read(jr, "threshold", r.params.threshold, "config.refiner");
      read(jr, "kernel_side", r.params.kernel_side, "config.refiner");
      read(jr, "sigmoid_slope", r.params.sigmoid_slope, "config.refiner");
      if (jr.contains("loss")) {
        const auto& jl = jr.at("loss");
        check_keys(jl, {"ssim", "texture", "intensity", "gamma"}, "config.refiner.loss");
        read(jl, "ssim", r.loss.ssim, "config.refiner.loss");
        read(jl, "texture", r.loss.texture, "config.refiner.loss");
        read(jl, "intensity", r.loss.intensity, "config.refiner.loss");
        read(jl, "gamma", r.loss.gamma, "config.refiner.loss");
      }
      if (r.params.threshold < 0.0) throw ConfigError("config.refiner.threshold must be >= 0");
      if (r.params.kernel_side < 1 || r.params.kernel_side % 2 == 0) {
        throw ConfigError("config.refiner.kernel_side must be odd and positive");
      }
    }
    if (t.color_mode == ColorMode::Rgb && !(j.contains("net") && j.at("net").contains("image_channels"))) {
      t.net.image_channels = 3;
    }
    if (j.contains("selector_weights")) {
      c.selector_weights = selector::MetricWeights::from_json(j.at("selector_weights"));
    }
    if (j.contains("synthetic")) {
      const auto& js = j.at("synthetic");
      check_keys(js, {"n_pairs", "size", "flavor", "val_fraction"}, "config.synthetic");
      read(js, "n_pairs", c.synthetic.n_pairs, "config.synthetic");
      read(js, "size", c.synthetic.size, "config.synthetic");
      read(js, "val_fraction", c.synthetic.val_fraction, "config.synthetic");
      if (js.contains("flavor")) {
        read(js, "flavor", s, "config.synthetic");
        c.synthetic.flavor = synth::parse_flavor(s);
      }
    }
    t.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    try {
      return from_json(j);
    } catch (const ConfigError& e) {
      throw ConfigError("'" + path.string() + "': " + e.what());
    }
  }

  // Effective configuration; from_json(to_json()) reproduces it.
  [[nodiscard]] nlohmann::json to_json() const {
    const auto& t = train;
    nlohmann::json j;
    j["dataset_root"] = dataset_root.string();
    if (task) j["task"] = task_name(*task);
    j["output_dir"] = output_dir.string();
    j["seed"] = t.seed;
    j["profile"] = t.profile;
    std::vector<std::string> seq;
    for (auto k : t.task_sequence) seq.push_back(task_name(k));
    j["train"] = {{"iterations", t.iterations},
                  {"batch_size", t.batch_size},
                  {"crop_size", t.crop_size},
                  {"learning_rate", t.learning_rate},
                  {"lambda", t.continual.lambda},
                  {"memory_size", t.continual.memory_size},
                  {"task_sequence", seq},
                  {"color_mode", color_mode_name(t.color_mode)},
                  {"pseudo_source", pseudo_source_name(t.pseudo_source)},
                  {"eval_pairs", t.eval_pairs}};
    j["flow"] = {{"sigma_min", t.flow.sigma_min},
                 {"coupling", flow::coupling_name(t.flow.coupling)},
                 {"n_sample_steps", t.flow.n_sample_steps}};
    j["continual"] = {{"fisher_batches", t.continual.fisher_batches},
                      {"fisher_batch_size", t.continual.fisher_batch_size},
                      {"use_ewc", t.continual.use_ewc},
                      {"use_replay", t.continual.use_replay},
                      {"baseline_seeds", t.baseline_seeds}};
    j["net"] = t.net;
    const auto& r = t.refiner;
    j["refiner"] = {{"iterations", r.iterations},
                    {"batch_size", r.batch_size},
                    {"learning_rate", r.learning_rate},
                    {"alpha_init", r.params.alpha_a},
                    {"threshold", r.params.threshold},
                    {"kernel_side", r.params.kernel_side},
                    {"sigmoid_slope", r.params.sigmoid_slope},
                    {"loss", {{"ssim", r.loss.ssim}, {"texture", r.loss.texture}, {"intensity", r.loss.intensity},
                              {"gamma", r.loss.gamma}}}};
    if (selector_weights) j["selector_weights"] = selector_weights->to_json();
    j["synthetic"] = {{"n_pairs", synthetic.n_pairs},
                      {"size", synthetic.size},
                      {"flavor", synth::flavor_name(synthetic.flavor)},
                      {"val_fraction", synthetic.val_fraction}};
    return j;
  }
};

}  // namespace fusionfm
