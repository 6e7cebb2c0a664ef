#pragma once

#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fusionfm/ablation.hpp"
#include "fusionfm/checkpoint.hpp"
#include "fusionfm/config.hpp"
#include "fusionfm/continual.hpp"
#include "fusionfm/dataset.hpp"
#include "fusionfm/errors.hpp"
#include "fusionfm/flow.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/pipeline.hpp"
#include "fusionfm/png_io.hpp"
#include "fusionfm/synthetic.hpp"
#include "fusionfm/training.hpp"

// Command-line front end. Exit status: 0 ok, 2 config, 3 data, 4 numeric,
// 1 anything else.
namespace fusionfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

[[nodiscard]] inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[nodiscard]] inline std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Timestamped lines go to <run>/run.log only; stdout gets the bare message.
class RunLog {
 public:
  void open(const fs::path& file) {
    fs::create_directories(file.parent_path());
    os_.open(file, std::ios::app);
  }

  void operator()(const std::string& msg) {
    std::cout << msg << "\n" << std::flush;
    if (!os_) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    os_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n' << std::flush;
  }

 private:
  std::ofstream os_;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string task;
  std::string profile;
  std::optional<int> iterations;
  std::optional<int> steps;
  std::string flavor;
  std::optional<std::size_t> n_pairs;
  std::optional<int> size;
  std::optional<double> val_fraction;
  std::string checkpoint;
  std::string input_a;
  std::string input_b;
  std::string fused;
  std::vector<std::string> tasks;
  std::string teacher = "blur";
  bool all_pairs = false;
};

// Config file, then command-line overrides, validated as one document.
[[nodiscard]] inline RunConfig resolve(const Options& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot read config file '" + o.config + "'");
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("'" + o.config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("'" + o.config + "' must hold a JSON object");
  }
  if (o.seed) j["seed"] = *o.seed;
  if (!o.out.empty()) j["output_dir"] = o.out;
  if (!o.data.empty()) j["dataset_root"] = o.data;
  if (!o.task.empty()) j["task"] = o.task;
  if (!o.profile.empty()) j["profile"] = o.profile;
  if (o.iterations) j["train"]["iterations"] = *o.iterations;
  if (o.steps) j["flow"]["n_sample_steps"] = *o.steps;
  if (!o.flavor.empty()) j["synthetic"]["flavor"] = o.flavor;
  if (o.n_pairs) j["synthetic"]["n_pairs"] = *o.n_pairs;
  if (o.size) j["synthetic"]["size"] = *o.size;
  if (o.val_fraction) j["synthetic"]["val_fraction"] = *o.val_fraction;
  try {
    return RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    if (o.config.empty()) throw;
    throw ConfigError("'" + o.config + "': " + e.what());
  }
}

struct Run {
  RunConfig cfg;
  fs::path dir;
  RunLog log;
};

inline void start(Run& run, const Options& o, const std::string& command, const fs::path& dir) {
  run.cfg = resolve(o);
  run.dir = dir;
  fs::create_directories(run.dir);
  json frozen = run.cfg.to_json();
  frozen["command"] = command;
  write_json(run.dir / "config.json", frozen);
  run.log.open(run.dir / "run.log");
  run.log(command + ": seed " + std::to_string(run.cfg.train.seed) + ", output " + run.dir.string());
}

[[nodiscard]] inline std::vector<TaskKind> task_list(const Options& o, const RunConfig& cfg) {
  if (o.tasks.empty()) return cfg.train.task_sequence;
  std::vector<TaskKind> out;
  for (const auto& t : o.tasks) out.push_back(parse_task(t));
  return out;
}

[[nodiscard]] inline std::string loss_csv(const std::vector<LossRecord>& log, const std::string& task = {}) {
  std::ostringstream os;
  if (task.empty()) {
    os << "iteration,loss,fm,penalty,lr\n";
  }
  for (const auto& r : log) {
    if (!task.empty()) os << task << ',';
    os << r.iteration << ',' << num(r.loss) << ',' << num(r.fm) << ',' << num(r.penalty) << ',' << num(r.lr) << '\n';
  }
  return os.str();
}

[[nodiscard]] inline double window_mean(const std::vector<LossRecord>& log, bool head, std::size_t n = 100) {
  if (log.empty()) return 0.0;
  n = std::min(n, log.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += log[head ? i : log.size() - n + i].fm;
  return s / static_cast<double>(n);
}

// A vector-field or continual checkpoint.
[[nodiscard]] inline net::VectorFieldNet load_any_model(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint '" + path.string() + "' does not exist");
  const auto kind = TensorArchive::load(path).meta.value("kind", "");
  if (kind == "vector_field") return load_model(path).model;
  if (kind == "continual") return continual::load_continual(path).model.model;
  throw DataError("'" + path.string() + "' is neither a vector-field nor a continual checkpoint");
}

[[nodiscard]] inline ColorMode mode_of(const net::VectorFieldNet& m) {
  return m->spec.image_channels == 3 ? ColorMode::Rgb : ColorMode::Luminance;
}

// ---- subcommands -------------------------------------------------------------

inline int gen_synth(const Options& o) {
  const RunConfig probe = resolve(o);
  const fs::path root = o.out.empty() ? probe.dataset_root : fs::path(o.out);
  Run run;
  start(run, o, "gen-synth", root / task_name(synth::flavor_task(probe.synthetic.flavor)));
  synth::GenerateOptions g;
  g.n_pairs = run.cfg.synthetic.n_pairs;
  g.size = run.cfg.synthetic.size;
  g.seed = run.cfg.train.seed;
  g.flavor = run.cfg.synthetic.flavor;
  g.val_fraction = run.cfg.synthetic.val_fraction;
  const auto dir = synth::generate(root, g);
  run.log("wrote " + std::to_string(g.n_pairs) + " " + synth::flavor_name(g.flavor) + " pairs to " + dir.string());
  return kExitOk;
}

inline int select_pseudo_cmd(const Options& o) {
  Run run;
  start(run, o, "select-pseudo", resolve(o).output_dir);
  const TaskKind task = run.cfg.require_task();
  const auto ds = FusionDataset::load(run.cfg.dataset_root, task);
  const auto labels = select_pseudo(ds, run.cfg.weights_for(task));
  write_pseudo(ds.dir(), labels);
  std::ostringstream csv;
  csv << "pair_id,teacher,score\n";
  for (const auto& l : labels) {
    double score = 0.0;
    for (const auto& c : l.selection.provenance.at("candidates")) {
      if (c.at("teacher") == l.selection.teacher) score = c.at("score").get<double>();
    }
    csv << l.id << ',' << l.selection.teacher << ',' << num(score) << '\n';
  }
  write_text(run.dir / "selection.csv", csv.str());
  run.log("selected pseudo labels for " + std::to_string(labels.size()) + " pairs into " + (ds.dir() / "pseudo").string());
  return kExitOk;
}

inline int refine_cmd(const Options& o) {
  Run run;
  start(run, o, "refine", resolve(o).output_dir);
  const TaskKind task = run.cfg.require_task();
  const auto ds = FusionDataset::load(run.cfg.dataset_root, task, PseudoSource::Selected, true);
  run.log("training refiner on " + std::to_string(ds.split().train.size()) + " pairs");
  auto fit = fit_refiner(ds, run.cfg.train);
  save_refiner(run.dir / "refiner.ffm", fit.refiner, derive_seed(run.cfg.train.seed, 0x750), {{"task", task_name(task)}});
  std::ostringstream s1, s2;
  s1 << "iteration,du_loss,fi_loss\n";
  for (std::size_t i = 0; i < fit.stage1.du_loss.size(); ++i) {
    s1 << i << ',' << num(fit.stage1.du_loss[i]) << ',' << num(fit.stage1.fi_loss[i]) << '\n';
  }
  s2 << "iteration,loss,alpha_a,alpha_b\n";
  for (std::size_t i = 0; i < fit.stage2.loss.size(); ++i) {
    s2 << i << ',' << num(fit.stage2.loss[i]) << ',' << num(fit.stage2.alpha_a[i]) << ',' << num(fit.stage2.alpha_b[i])
       << '\n';
  }
  write_text(run.dir / "refiner_stage1.csv", s1.str());
  write_text(run.dir / "refiner_stage2.csv", s2.str());
  const auto refined = refine_all(ds, fit.refiner);
  for (const auto& [id, img] : refined) save_png(ds.dir() / "pseudo_refined" / (id + ".png"), img, 16);
  const auto p = fit.refiner.current_params();
  write_json(run.dir / "summary.json", {{"task", task_name(task)},
                                        {"pairs_refined", refined.size()},
                                        {"alpha_a", p.alpha_a},
                                        {"alpha_b", p.alpha_b},
                                        {"du_hash_before_stage2", hex(fit.stage2.du_hash_before)},
                                        {"du_hash_after_stage2", hex(fit.stage2.du_hash_after)}});
  run.log("wrote " + std::to_string(refined.size()) + " refined labels to " + (ds.dir() / "pseudo_refined").string());
  return kExitOk;
}

inline int train_cmd(const Options& o) {
  Run run;
  start(run, o, "train", resolve(o).output_dir);
  const TaskKind task = run.cfg.require_task();
  const auto& cfg = run.cfg.train;
  const auto ds = FusionDataset::load(run.cfg.dataset_root, task, cfg.pseudo_source);
  auto model = net::make_net(cfg.net, cfg.seed);
  run.log("training " + task_name(task) + " for " + std::to_string(cfg.iterations) + " iterations, " +
          std::to_string(net::parameter_count(*model)) + " parameters");
  const auto log = train_fm(ds, model, cfg);
  save_model(run.dir / "model.ffm", model, cfg.iterations, cfg.seed, nullptr,
             {{"task", task_name(task)}, {"profile", cfg.profile}});
  write_text(run.dir / "loss.csv", loss_csv(log));
  json summary = {{"task", task_name(task)},
                  {"iterations", cfg.iterations},
                  {"initial_fm_loss", window_mean(log, true)},
                  {"final_fm_loss", window_mean(log, false)}};
  if (!ds.split().val.empty()) {
    const auto ids = eval_ids(ds, cfg.eval_pairs);
    assert_disjoint(ds, ids);
    summary["val_pairs"] = ids.size();
    summary["val_composite"] = evaluate_composite(model, ds, ids, cfg);
  }
  write_json(run.dir / "summary.json", summary);
  run.log("final fm loss " + num(summary["final_fm_loss"].get<double>()));
  return kExitOk;
}

inline int train_seq_cmd(const Options& o) {
  Run run;
  start(run, o, "train-seq", resolve(o).output_dir);
  const auto& cfg = run.cfg.train;
  std::vector<FusionDataset> datasets;
  for (auto t : task_list(o, run.cfg)) datasets.push_back(FusionDataset::load(run.cfg.dataset_root, t, cfg.pseudo_source));
  std::vector<const FusionDataset*> ptrs;
  for (const auto& d : datasets) ptrs.push_back(&d);
  auto model = net::make_net(cfg.net, cfg.seed);
  auto res = train_sequence(ptrs, model, cfg, [&](const std::string& m) { run.log(m); });
  continual::save_continual(run.dir / "continual.ffm", model,
                            static_cast<std::int64_t>(cfg.iterations) * static_cast<std::int64_t>(ptrs.size()),
                            cfg.seed, res.state.snapshots, res.state.replay, {{"tasks", res.tasks}});
  std::ostringstream loss;
  loss << "task,iteration,loss,fm,penalty,lr\n";
  for (std::size_t j = 0; j < res.logs.size(); ++j) loss << loss_csv(res.logs[j], res.tasks[j]);
  write_text(run.dir / "loss.csv", loss.str());
  std::ostringstream r;
  r << "after_task";
  for (const auto& t : res.tasks) r << ',' << t;
  r << '\n';
  for (std::size_t j = 0; j < res.r.size(); ++j) {
    r << res.tasks[j];
    for (double v : res.r[j]) r << ',' << num(v);
    r << '\n';
  }
  write_text(run.dir / "r_matrix.csv", r.str());
  json transfer = {{"tasks", res.tasks}, {"baseline", res.baseline}, {"r", res.r}};
  transfer["bwt"] = std::isnan(res.transfer.bwt) ? json() : json(res.transfer.bwt);
  transfer["fwt"] = std::isnan(res.transfer.fwt) ? json() : json(res.transfer.fwt);
  write_json(run.dir / "transfer.json", transfer);
  run.log("BWT " + num(res.transfer.bwt) + ", FWT " + num(res.transfer.fwt));
  return kExitOk;
}

inline int fuse_cmd(const Options& o) {
  Run run;
  start(run, o, "fuse", resolve(o).output_dir);
  if (o.checkpoint.empty()) throw ConfigError("fuse: --checkpoint is required");
  if (o.input_a.empty() || o.input_b.empty()) throw ConfigError("fuse: --a and --b are required");
  auto model = load_any_model(o.checkpoint);
  const auto mode = mode_of(model);
  const auto seed = derive_seed(run.cfg.train.seed, 0x600);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  std::vector<std::string> names;
  const fs::path a(o.input_a), b(o.input_b);
  if (fs::is_directory(a)) {
    if (!fs::is_directory(b)) throw DataError("'" + b.string() + "' is not a directory");
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().extension() == ".png") names.push_back(e.path().stem().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no PNG files in '" + a.string() + "'");
    for (const auto& n : names) {
      const auto fb = b / (n + ".png");
      if (!fs::exists(fb)) throw DataError("'" + fb.string() + "' is missing");
      jobs.emplace_back(a / (n + ".png"), fb);
    }
  } else {
    for (const auto& p : {a, b}) {
      if (!fs::exists(p)) throw DataError("input '" + p.string() + "' does not exist");
    }
    names.push_back("fused");
    jobs.emplace_back(a, b);
  }
  json manifest = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Image f = fuse(model, clamp01(load_png(jobs[i].first)), clamp01(load_png(jobs[i].second)),
                         run.cfg.train.flow, mode, seed);
    const auto file = run.dir / (names[i] + ".png");
    save_png(file, f, 16);
    manifest.push_back({{"a", jobs[i].first.string()}, {"b", jobs[i].second.string()}, {"fused", file.filename().string()}});
  }
  write_json(run.dir / "fused.json", {{"checkpoint", o.checkpoint},
                                      {"n_sample_steps", run.cfg.train.flow.n_sample_steps},
                                      {"outputs", manifest}});
  run.log("fused " + std::to_string(jobs.size()) + " pair(s)");
  return kExitOk;
}

inline constexpr const char* kMetricHeader = "pair_id,EN,SD,SF,AG,VIF,Qabf,SCD,SSIM";

[[nodiscard]] inline std::string metric_row(const std::string& id, const metrics::MetricReport& m) {
  return id + ',' + num(m.en) + ',' + num(m.sd) + ',' + num(m.sf) + ',' + num(m.ag) + ',' + num(m.vif) + ',' +
         num(m.qabf) + ',' + num(m.scd) + ',' + num(m.ssim);
}

[[nodiscard]] inline json report_json(const metrics::MetricReport& m) {
  json j = json::object();
  for (auto k : metrics::kAllMetrics) j[std::string(metrics::name(k))] = m.get(k);
  return j;
}

inline int eval_cmd(const Options& o) {
  Run run;
  start(run, o, "eval", resolve(o).output_dir);
  const TaskKind task = run.cfg.require_task();
  const auto ds = FusionDataset::load(run.cfg.dataset_root, task);
  if (o.fused.empty() == o.checkpoint.empty()) throw ConfigError("eval: give exactly one of --fused or --checkpoint");
  std::vector<std::string> ids;
  if (o.all_pairs) {
    for (const auto& p : ds.pairs()) ids.push_back(p.id);
  } else {
    ids = eval_ids(ds, 0);
    assert_disjoint(ds, ids);
  }
  net::VectorFieldNet model{nullptr};
  if (!o.checkpoint.empty()) model = load_any_model(o.checkpoint);
  std::ostringstream csv;
  csv << kMetricHeader << '\n';
  std::vector<metrics::MetricReport> rs;
  for (const auto& id : ids) {
    const auto& r = ds.pair(id);
    Image f;
    if (model) {
      f = fuse(model, r.a, r.b, run.cfg.train.flow, mode_of(model), derive_seed(run.cfg.train.seed, 0x600));
    } else {
      const auto file = fs::path(o.fused) / (id + ".png");
      if (!fs::exists(file)) throw DataError("fused image '" + file.string() + "' is missing");
      f = clamp01(load_png(file));
    }
    rs.push_back(metrics::evaluate(to_luminance(f), to_luminance(r.a), to_luminance(r.b)));
    csv << metric_row(id, rs.back()) << '\n';
  }
  write_text(run.dir / "metrics.csv", csv.str());
  write_json(run.dir / "metrics.json", {{"task", task_name(task)}, {"pairs", ids.size()}, {"mean", report_json(mean_report(rs))}});
  run.log("evaluated " + std::to_string(ids.size()) + " pairs");
  return kExitOk;
}

inline int coupling_cmd(const Options& o) {
  Run run;
  start(run, o, "coupling-exp", resolve(o).output_dir);
  const auto& s = run.cfg.synthetic;
  std::vector<flow::CouplingPair> pairs;
  for (std::size_t i = 0; i < s.n_pairs; ++i) {
    const auto p = synth::make_pair(i, s.size, run.cfg.train.seed, s.flavor);
    pairs.push_back({p.a, p.b, p.f_star});
  }
  const auto rows = flow::coupling_experiment(
      pairs, {flow::Coupling::Average, flow::Coupling::Sum, flow::Coupling::Noise}, derive_seed(run.cfg.train.seed, 0xc0));
  std::ostringstream csv;
  csv << "coupling,mean_w1,mean_w2,mean_w2_squared\n";
  for (const auto& r : rows) {
    csv << flow::coupling_name(r.coupling) << ',' << num(r.mean_w1) << ',' << num(r.mean_w2) << ','
        << num(r.mean_w2_squared) << '\n';
  }
  write_text(run.dir / "coupling.csv", csv.str());
  write_json(run.dir / "coupling.json", {{"pairs", pairs.size()},
                                         {"noise_over_average_w1", rows[2].mean_w1 / rows[0].mean_w1},
                                         {"noise_over_average_w2", rows[2].mean_w2 / rows[0].mean_w2}});
  run.log("noise/average W1 ratio " + num(rows[2].mean_w1 / rows[0].mean_w1));
  return kExitOk;
}

inline int ablate_cmd(const Options& o) {
  Run run;
  start(run, o, "ablate", resolve(o).output_dir);
  std::vector<FusionDataset> datasets;
  for (auto t : task_list(o, run.cfg)) datasets.push_back(FusionDataset::load(run.cfg.dataset_root, t));
  const auto report = ablation_suite(datasets, run.cfg.train, o.teacher, [&](const std::string& m) { run.log(m); });
  write_text(run.dir / "ablation_metrics.csv", report.metrics_csv());
  write_text(run.dir / "ablation_transfer.csv", report.transfer_csv());
  json r = json::object();
  for (const auto& row : report.rows) r[row.variant] = {{"description", row.description}, {"r", row.sequence.r}};
  write_json(run.dir / "ablation_r.json", r);
  run.log("ablation finished: " + std::to_string(report.rows.size()) + " variants");
  return kExitOk;
}

// ---- entry point -------------------------------------------------------------

inline void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--out", o.out, "Output directory");
}

inline void add_dataset(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Dataset root");
  sub->add_option("--task", o.task, "Task: IVF, MIF, MEF or MFF");
}

inline void add_training(CLI::App* sub, Options& o) {
  sub->add_option("--profile", o.profile, "Training profile: full, desk or smoke");
  sub->add_option("--iterations", o.iterations, "Training iterations per task");
}

inline int run(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"fusionfm: flow-matching multi-modal image fusion"};
  app.require_subcommand(1);
  Options o;
  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset with known ideal fusions");
  add_common(gen, o);
  gen->add_option("--flavor", o.flavor, "ivf-like, mef-like or mff-like");
  gen->add_option("--n-pairs", o.n_pairs, "Number of pairs");
  gen->add_option("--size", o.size, "Image side in pixels");
  gen->add_option("--val-fraction", o.val_fraction, "Held-out fraction");
  gen->callback([&] { action = [&] { return gen_synth(o); }; });

  auto* sel = app.add_subcommand("select-pseudo", "Pick a pseudo label per pair from teacher candidates");
  add_common(sel, o);
  add_dataset(sel, o);
  sel->callback([&] { action = [&] { return select_pseudo_cmd(o); }; });

  auto* ref = app.add_subcommand("refine", "Train the refiner and write refined pseudo labels");
  add_common(ref, o);
  add_dataset(ref, o);
  add_training(ref, o);
  ref->callback([&] { action = [&] { return refine_cmd(o); }; });

  auto* tr = app.add_subcommand("train", "Train the vector field on one task");
  add_common(tr, o);
  add_dataset(tr, o);
  add_training(tr, o);
  tr->callback([&] { action = [&] { return train_cmd(o); }; });

  auto* seq = app.add_subcommand("train-seq", "Continual training over a task sequence");
  add_common(seq, o);
  add_dataset(seq, o);
  add_training(seq, o);
  seq->add_option("--tasks", o.tasks, "Task sequence (overrides the config)")->delimiter(',');
  seq->callback([&] { action = [&] { return train_seq_cmd(o); }; });

  auto* fu = app.add_subcommand("fuse", "Fuse a pair or two directories of pairs");
  add_common(fu, o);
  fu->add_option("--checkpoint", o.checkpoint, "Model or continual checkpoint");
  fu->add_option("--a", o.input_a, "Source A image or directory");
  fu->add_option("--b", o.input_b, "Source B image or directory");
  fu->add_option("--steps", o.steps, "Euler steps");
  fu->callback([&] { action = [&] { return fuse_cmd(o); }; });

  auto* ev = app.add_subcommand("eval", "Metric table of fused images or of a checkpoint");
  add_common(ev, o);
  add_dataset(ev, o);
  ev->add_option("--fused", o.fused, "Directory of fused <pair_id>.png");
  ev->add_option("--checkpoint", o.checkpoint, "Model or continual checkpoint");
  ev->add_option("--steps", o.steps, "Euler steps");
  ev->add_flag("--all", o.all_pairs, "Evaluate every pair instead of the held-out split");
  ev->callback([&] { action = [&] { return eval_cmd(o); }; });

  auto* ce = app.add_subcommand("coupling-exp", "Wasserstein distances of source couplings to the ideal fusion");
  add_common(ce, o);
  ce->add_option("--flavor", o.flavor, "ivf-like, mef-like or mff-like");
  ce->add_option("--n-pairs", o.n_pairs, "Number of pairs");
  ce->add_option("--size", o.size, "Image side in pixels");
  ce->callback([&] { action = [&] { return coupling_cmd(o); }; });

  auto* ab = app.add_subcommand("ablate", "Ablation variants I-VII and the full method");
  add_common(ab, o);
  add_dataset(ab, o);
  add_training(ab, o);
  ab->add_option("--tasks", o.tasks, "Task sequence (overrides the config)")->delimiter(',');
  ab->add_option("--teacher", o.teacher, "Fixed teacher of variant II");
  ab->callback([&] { action = [&] { return ablate_cmd(o); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace fusionfm::cli
