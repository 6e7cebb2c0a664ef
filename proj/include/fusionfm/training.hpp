#pragma once

#include <torch/torch.h>
#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/continual.hpp"
#include "fusionfm/dataset.hpp"
#include "fusionfm/errors.hpp"
#include "fusionfm/flow.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/optim.hpp"
#include "fusionfm/random.hpp"
#include "fusionfm/refiner_nets.hpp"
#include "fusionfm/refiner_ops.hpp"
#include "fusionfm/selector.hpp"
#include "fusionfm/tensor_bridge.hpp"
#include "fusionfm/unet.hpp"

namespace fusionfm {

enum class ColorMode { Luminance, Rgb };

[[nodiscard]] inline ColorMode parse_color_mode(std::string_view s) {
  if (s == "luminance") return ColorMode::Luminance;
  if (s == "rgb") return ColorMode::Rgb;
  throw ConfigError("unknown color_mode '" + std::string(s) + "' (expected luminance or rgb)");
}

[[nodiscard]] inline std::string color_mode_name(ColorMode m) {
  return m == ColorMode::Luminance ? "luminance" : "rgb";
}

struct RefinerTrainConfig {
  int iterations = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  refiner::AutoencoderSpec du;
  refiner::IntegratorSpec fi;
  refiner::RefinerParams params;
  refiner::FusionLossWeights loss;
};

struct TrainConfig {
  std::string profile = "full";
  int iterations = 25000;
  int batch_size = 32;
  int crop_size = 128;
  double learning_rate = 8e-4;
  std::uint64_t seed = 0;
  std::vector<TaskKind> task_sequence = {TaskKind::IVF, TaskKind::MEF, TaskKind::MFF};
  ColorMode color_mode = ColorMode::Luminance;
  PseudoSource pseudo_source = PseudoSource::Auto;
  int eval_pairs = 0;  // 0: every held-out pair
  int baseline_seeds = 3;
  net::NetSpec net = net::NetSpec::full();
  flow::FlowConfig flow;
  continual::ContinualConfig continual;
  RefinerTrainConfig refiner;

  static TrainConfig full() { return {}; }

  // 64x64 crops, batch 16, 2000 iterations, base-32 network.
  static TrainConfig desk() {
    TrainConfig c;
    c.profile = "desk";
    c.iterations = 2000;
    c.batch_size = 16;
    c.crop_size = 64;
    c.net = net::NetSpec::desk();
    c.refiner.iterations = 400;
    c.eval_pairs = 32;
    return c;
  }

  // Minutes-scale end-to-end runs.
  static TrainConfig smoke() {
    TrainConfig c;
    c.profile = "smoke";
    c.iterations = 40;
    c.batch_size = 4;
    c.crop_size = 32;
    c.net.base_channels = 8;
    c.net.time_embed_dim = 32;
    c.net.groups = 4;
    c.continual.fisher_batches = 4;
    c.continual.fisher_batch_size = 2;
    c.refiner.iterations = 20;
    c.refiner.batch_size = 4;
    c.eval_pairs = 4;
    c.baseline_seeds = 1;
    return c;
  }

  static TrainConfig for_profile(std::string_view name) {
    if (name == "full") return full();
    if (name == "desk") return desk();
    if (name == "smoke") return smoke();
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected full, desk or smoke)");
  }

  void validate() const {
    if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (crop_size < 16) throw ConfigError("train.crop_size must be >= 16");
    if (crop_size % net.spatial_multiple() != 0) {
      throw ConfigError("train.crop_size must be a multiple of " + std::to_string(net.spatial_multiple()));
    }
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (task_sequence.empty()) throw ConfigError("train.task_sequence must not be empty");
    if (baseline_seeds < 1) throw ConfigError("continual.baseline_seeds must be >= 1");
    if (refiner.iterations < 1 || refiner.batch_size < 1) throw ConfigError("refiner iterations and batch_size must be >= 1");
    const int want = color_mode == ColorMode::Rgb ? 3 : 1;
    if (net.image_channels != want) {
      throw ConfigError("net.image_channels must be " + std::to_string(want) + " for color_mode " +
                        color_mode_name(color_mode));
    }
    net.validate();
    flow.validate();
    continual.validate();
  }
};

[[nodiscard]] inline torch::Generator make_generator(std::uint64_t seed) {
  return at::detail::createCPUGenerator(seed);
}

[[nodiscard]] inline Image prepare(const Image& img, ColorMode mode) {
  return mode == ColorMode::Luminance ? to_luminance(img) : replicate_to_rgb(img);
}

[[nodiscard]] inline std::uint64_t module_hash(const torch::nn::Module& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : m.named_parameters()) {
    for (char c : p.key()) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    const auto t = p.value().detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
    for (std::int64_t i = 0; i < t.numel() * static_cast<std::int64_t>(t.element_size()); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ULL;
    }
  }
  return h;
}

[[nodiscard]] inline net::VectorFieldNet copy_net(const net::VectorFieldNet& src) {
  net::VectorFieldNet dst(src->spec);
  dst->to(src->out_conv->weight.scalar_type());
  torch::NoGradGuard g;
  auto sp = src->named_parameters();
  for (auto& p : dst->named_parameters()) p.value().copy_(sp[p.key()]);
  return dst;
}

// ---- batches ---------------------------------------------------------------

struct PoolItem {
  std::string task_id;
  const PairRecord* pair = nullptr;
};

struct Batch {
  torch::Tensor a, b, target;  // [N, C, crop, crop]
  torch::Tensor t;             // [N]
  std::vector<std::string> ids;
};

[[nodiscard]] inline Image crop_image(const Image& img, int top, int left, int side) {
  return crop(img, top, left, side, side);
}

// Uniform draws (with replacement) from the pool, random crop per item and a
// uniform t per item, all from one seeded stream.
[[nodiscard]] inline Batch draw_batch(const std::vector<PoolItem>& pool, int batch_size, int crop, ColorMode mode,
                                      Rng& rng) {
  if (pool.empty()) throw ConfigError("cannot draw a batch from an empty dataset");
  std::vector<Image> as, bs, ts;
  std::vector<double> times;
  Batch out;
  for (int i = 0; i < batch_size; ++i) {
    const auto& item = pool[static_cast<std::size_t>(rng.below(pool.size()))];
    const PairRecord& r = *item.pair;
    if (!r.pseudo) throw DataError("pair '" + r.id + "' has no pseudo label");
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.a.height() - crop + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.a.width() - crop + 1)));
    as.push_back(crop_image(prepare(r.a, mode), top, left, crop));
    bs.push_back(crop_image(prepare(r.b, mode), top, left, crop));
    ts.push_back(crop_image(prepare(*r.pseudo, mode), top, left, crop));
    times.push_back(rng.uniform());
    out.ids.push_back(item.task_id + "/" + r.id);
  }
  out.a = stack_images(as);
  out.b = stack_images(bs);
  out.target = stack_images(ts);
  out.t = torch::tensor(times, torch::kFloat64).to(torch::kFloat32);
  return out;
}

[[nodiscard]] inline std::vector<PoolItem> pool_of(const FusionDataset& ds, int crop) {
  std::vector<PoolItem> pool;
  for (const auto* r : ds.trainable(crop)) pool.push_back({task_name(ds.task()), r});
  return pool;
}

// ---- flow-matching training ------------------------------------------------

struct LossRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double fm = 0.0;
  double penalty = 0.0;
  double lr = 0.0;
};

// Random streams of one task's run; plain and continual trainers share them.
struct TaskStreams {
  Rng batches;
  torch::Generator noise;
  TaskStreams(std::uint64_t seed, std::size_t task_index)
      : batches(derive_seed(seed, 0x100 + task_index)), noise(make_generator(derive_seed(seed, 0x200 + task_index))) {}
};

inline torch::Tensor batch_fm_loss(net::VectorFieldNet& model, const Batch& batch, const flow::FlowConfig& fc,
                                   torch::Generator& gen) {
  const auto s = flow::make_flow_sample(batch.a, batch.b, batch.target, batch.t, fc, gen);
  const auto v = model->forward(s.t, s.xt, s.x0a, s.x0b);
  return flow::fm_loss(v, s.u_target);
}

// Single-task trainer: fm loss only, no snapshots, no replay.
inline std::vector<LossRecord> train_fm(const FusionDataset& ds, net::VectorFieldNet& model, const TrainConfig& cfg,
                                        std::size_t task_index = 0) {
  cfg.validate();
  const auto pool = pool_of(ds, cfg.crop_size);
  TaskStreams streams(cfg.seed, task_index);
  Adam opt(named_parameters(*model), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.iterations});
  model->train();
  std::vector<LossRecord> log;
  for (int it = 0; it < cfg.iterations; ++it) {
    const Batch batch = draw_batch(pool, cfg.batch_size, cfg.crop_size, cfg.color_mode, streams.batches);
    auto loss = batch_fm_loss(model, batch, cfg.flow, streams.noise);
    const double lr = opt.current_lr();
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double l = loss.item<double>();
    if (!std::isfinite(l)) throw NumericError("training loss became non-finite at iteration " + std::to_string(it));
    log.push_back({it, l, l, 0.0, lr});
  }
  return log;
}

struct ContinualState {
  std::vector<continual::TaskSnapshot> snapshots;
  continual::ReplayBuffer replay;
  std::vector<std::pair<std::string, std::vector<std::string>>> completed;
  std::map<std::string, const FusionDataset*> datasets;
};

struct TaskRun {
  std::vector<LossRecord> log;
  std::optional<continual::TaskSnapshot> snapshot;
};

[[nodiscard]] inline std::vector<PoolItem> replay_pool(const ContinualState& state, const std::string& current) {
  std::vector<PoolItem> out;
  for (const auto& item : state.replay.union_excluding(current)) {
    const auto it = state.datasets.find(item.task_id);
    if (it == state.datasets.end()) throw DataError("replay refers to unknown task '" + item.task_id + "'");
    out.push_back({item.task_id, &it->second->pair(item.sample_id)});
  }
  return out;
}

inline void assert_no_leak(const std::vector<PoolItem>& replay, const std::string& current) {
  for (const auto& r : replay) {
    if (r.task_id == current) throw StateError("replay buffer contains current-task sample '" + r.pair->id + "'");
  }
}

// One task of sequential training: unified loss over current + replay
// batches, then Fisher, snapshot and replay-memory update.
inline TaskRun train_fm_task(const FusionDataset& ds, net::VectorFieldNet& model, const TrainConfig& cfg,
                             ContinualState& state, std::size_t task_index) {
  cfg.validate();
  const std::string task_id = task_name(ds.task());
  state.datasets[task_id] = &ds;
  auto pool = pool_of(ds, cfg.crop_size);
  const std::size_t n_current = pool.size();
  std::vector<PoolItem> replay;
  if (cfg.continual.use_replay) {
    replay = replay_pool(state, task_id);
    for (const auto& r : replay) {
      if (r.pair->a.height() >= cfg.crop_size && r.pair->a.width() >= cfg.crop_size) pool.push_back(r);
    }
  }
  const double lambda = cfg.continual.use_ewc ? cfg.continual.lambda : 0.0;
  const auto params = named_parameters(*model);
  TaskStreams streams(cfg.seed, task_index);
  Adam opt(params, {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.iterations});
  model->train();
  TaskRun run;
  const int epoch = std::max<int>(1, static_cast<int>(pool.size()) / cfg.batch_size);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it % epoch == 0) assert_no_leak(replay, task_id);
    const Batch batch = draw_batch(pool, cfg.batch_size, cfg.crop_size, cfg.color_mode, streams.batches);
    auto fm = batch_fm_loss(model, batch, cfg.flow, streams.noise);
    auto loss = continual::unified_loss(fm, params, state.snapshots, lambda);
    const double lr = opt.current_lr();
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double l = loss.item<double>(), f = fm.item<double>();
    if (!std::isfinite(l)) throw NumericError("training loss became non-finite at iteration " + std::to_string(it));
    run.log.push_back({it, l, f, l - f, lr});
  }

  std::vector<PoolItem> current(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_current));
  if (cfg.continual.use_ewc) {
    if (current.empty()) throw ConfigError("compute_fisher: task '" + task_id + "' has no training data");
    Rng rng(derive_seed(cfg.seed, 0x300 + task_index));
    auto gen = make_generator(derive_seed(cfg.seed, 0x400 + task_index));
    auto fisher = continual::compute_fisher(
        params,
        [&](int) {
          const Batch b = draw_batch(current, cfg.continual.fisher_batch_size, cfg.crop_size, cfg.color_mode, rng);
          return batch_fm_loss(model, b, cfg.flow, gen);
        },
        cfg.continual.fisher_batches);
    continual::TaskSnapshot snap{task_id, continual::detach_params(params), std::move(fisher)};
    snap.validate();
    state.snapshots.push_back(snap);
    run.snapshot = std::move(snap);
  }
  std::vector<std::string> ids;
  for (const auto& p : current) ids.push_back(p.pair->id);
  state.completed.emplace_back(task_id, std::move(ids));
  state.replay = continual::build_replay(state.completed, cfg.continual.use_replay ? cfg.continual.memory_size : 0,
                                         derive_seed(cfg.seed, 0x500));
  return run;
}

// ---- inference and evaluation ---------------------------------------------

// Fuses one pair: luminance (or RGB) through the sampler, padded by edge
// replication to the network's spatial multiple. In luminance mode a colour
// source contributes its chroma (B preferred).
[[nodiscard]] inline Image fuse(net::VectorFieldNet& model, const Image& a, const Image& b, const flow::FlowConfig& fc,
                                ColorMode mode, std::uint64_t seed = 0) {
  require_same_shape(to_luminance(a), to_luminance(b), "fuse");
  const Image pa = prepare(a, mode), pb = prepare(b, mode);
  const int h = pa.height(), w = pa.width();
  const int m = model->spec.spatial_multiple();
  const int ph = (m - h % m) % m, pw = (m - w % m) % m;
  const auto dtype = model->out_conv->weight.scalar_type();
  auto ta = to_tensor(pa, dtype).unsqueeze(0);
  auto tb = to_tensor(pb, dtype).unsqueeze(0);
  if (ph || pw) {
    namespace F = torch::nn::functional;
    ta = F::pad(ta, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
    tb = F::pad(tb, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  }
  model->eval();
  auto gen = make_generator(seed);
  auto field = [&](const torch::Tensor& t, const torch::Tensor& x, const torch::Tensor& x0a, const torch::Tensor& x0b) {
    return model->forward(t, x, x0a, x0b);
  };
  auto out = flow::sample(field, ta, tb, fc, gen);
  out = out.index({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(0, h),
                   torch::indexing::Slice(0, w)});
  Image fused = to_image(out);
  if (mode == ColorMode::Luminance && (a.channels() == 3 || b.channels() == 3)) {
    const auto c = to_ycbcr(b.channels() == 3 ? b : a);
    return from_ycbcr(fused, c.cb, c.cr);
  }
  return fused;
}

[[nodiscard]] inline std::vector<std::string> eval_ids(const FusionDataset& ds, int limit) {
  auto ids = ds.split().val;
  if (ids.empty()) throw DataError("no held-out pairs in '" + (ds.dir() / "split.json").string() + "'");
  if (limit > 0 && static_cast<std::size_t>(limit) < ids.size()) ids.resize(static_cast<std::size_t>(limit));
  return ids;
}

// Mean over pairs of the task's weighted raw-metric aggregate.
[[nodiscard]] inline double evaluate_composite(net::VectorFieldNet& model, const FusionDataset& ds,
                                               const std::vector<std::string>& ids, const TrainConfig& cfg) {
  const auto w = selector::MetricWeights::for_task(ds.task());
  double total = 0.0;
  for (const auto& id : ids) {
    const auto& r = ds.pair(id);
    const Image f = to_luminance(fuse(model, r.a, r.b, cfg.flow, cfg.color_mode, derive_seed(cfg.seed, 0x600)));
    const Image a = to_luminance(r.a), b = to_luminance(r.b);
    total += selector::composite_score(selector::raw_metrics(f, a, b, w), w);
  }
  return total / static_cast<double>(ids.size());
}

[[nodiscard]] inline metrics::MetricReport mean_report(const std::vector<metrics::MetricReport>& rs) {
  metrics::MetricReport m{};
  for (const auto& r : rs) {
    m.en += r.en; m.sd += r.sd; m.sf += r.sf; m.ag += r.ag;
    m.vif += r.vif; m.qabf += r.qabf; m.scd += r.scd; m.ssim += r.ssim;
  }
  const double n = static_cast<double>(rs.size());
  m.en /= n; m.sd /= n; m.sf /= n; m.ag /= n; m.vif /= n; m.qabf /= n; m.scd /= n; m.ssim /= n;
  return m;
}

// ---- refiner training ------------------------------------------------------

struct RefinerBatch {
  std::vector<Image> a, b, pseudo;
  torch::Tensor ta, tb, tp;
};

[[nodiscard]] inline RefinerBatch draw_refiner_batch(const std::vector<PoolItem>& pool, int batch_size, int crop,
                                                     Rng& rng) {
  RefinerBatch out;
  for (int i = 0; i < batch_size; ++i) {
    const auto& r = *pool[static_cast<std::size_t>(rng.below(pool.size()))].pair;
    if (!r.pseudo) throw DataError("pair '" + r.id + "' has no pseudo label");
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.a.height() - crop + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(r.a.width() - crop + 1)));
    out.a.push_back(crop_image(to_luminance(r.a), top, left, crop));
    out.b.push_back(crop_image(to_luminance(r.b), top, left, crop));
    out.pseudo.push_back(crop_image(to_luminance(*r.pseudo), top, left, crop));
  }
  out.ta = stack_images(out.a);
  out.tb = stack_images(out.b);
  out.tp = stack_images(out.pseudo);
  return out;
}

struct Stage1Log {
  std::vector<double> du_loss;
  std::vector<double> fi_loss;
};

// DU: L1 reconstruction of (A, B) from I_f^+. FI: hybrid loss on raw sources.
inline Stage1Log train_refiner_stage1(const FusionDataset& ds, refiner::Refiner& r, const TrainConfig& cfg) {
  const auto& rc = cfg.refiner;
  const auto pool = pool_of(ds, cfg.crop_size);
  Rng rng(derive_seed(cfg.seed, 0x700));
  Adam du_opt(named_parameters(*r.du, "du/"), {rc.learning_rate, 0.9, 0.999, 1e-8, rc.iterations});
  Adam fi_opt(named_parameters(*r.fi, "fi/"), {rc.learning_rate, 0.9, 0.999, 1e-8, rc.iterations});
  r.du->train();
  r.fi->train();
  Stage1Log log;
  for (int it = 0; it < rc.iterations; ++it) {
    const auto batch = draw_refiner_batch(pool, rc.batch_size, cfg.crop_size, rng);
    auto [pa, pb] = r.du->forward(batch.tp);
    auto du_loss = (pa - batch.ta).abs().mean() + (pb - batch.tb).abs().mean();
    du_opt.zero_grad();
    du_loss.backward();
    du_opt.step();
    auto f = r.fi->forward(batch.ta, batch.tb);
    auto fi_loss = refiner::hybrid_loss(f, batch.ta, batch.tb, batch.tp, rc.loss);
    fi_opt.zero_grad();
    fi_loss.backward();
    fi_opt.step();
    log.du_loss.push_back(du_loss.item<double>());
    log.fi_loss.push_back(fi_loss.item<double>());
    if (!std::isfinite(log.du_loss.back()) || !std::isfinite(log.fi_loss.back())) {
      throw NumericError("refiner stage 1: non-finite loss at iteration " + std::to_string(it));
    }
  }
  r.du->mark_trained();
  r.fi->mark_trained();
  return log;
}

struct Stage2Log {
  std::vector<double> loss;
  std::vector<double> alpha_a;
  std::vector<double> alpha_b;
  std::uint64_t du_hash_before = 0;
  std::uint64_t du_hash_after = 0;
};

// (W * src^d + (1-W) * part^d) * P for every item, as a [N,1,H,W] tensor.
[[nodiscard]] inline torch::Tensor injection_batch(const torch::Tensor& parts, const std::vector<Image>& sources,
                                                   const refiner::RefinerParams& p) {
  std::vector<Image> terms;
  const Kernel h = p.kernel();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Image part = to_image(parts[static_cast<std::int64_t>(i)]);
    terms.push_back(refiner::injection_term(part, sources[i], p.threshold, h, p.sigmoid_slope));
  }
  return stack_images(terms);
}

// DU frozen; FI and (alpha_A, alpha_B) trained on the refined components.
inline Stage2Log train_refiner_stage2(const FusionDataset& ds, refiner::Refiner& r, const TrainConfig& cfg) {
  if (!r.du->is_trained()) throw StateError("refiner stage 2 needs a trained decomposition unit");
  const auto& rc = cfg.refiner;
  const auto pool = pool_of(ds, cfg.crop_size);
  Rng rng(derive_seed(cfg.seed, 0x800));
  Stage2Log log;
  log.du_hash_before = module_hash(*r.du);
  for (auto& p : r.du->parameters()) p.set_requires_grad(false);
  r.du->eval();
  r.fi->train();
  auto params = named_parameters(*r.fi, "fi/");
  params.push_back({"alpha_a", r.alpha_a});
  params.push_back({"alpha_b", r.alpha_b});
  Adam opt(params, {rc.learning_rate, 0.9, 0.999, 1e-8, rc.iterations});
  for (int it = 0; it < rc.iterations; ++it) {
    const auto batch = draw_refiner_batch(pool, rc.batch_size, cfg.crop_size, rng);
    torch::Tensor ia, ib;
    {
      torch::NoGradGuard g;
      auto [pa, pb] = r.du->forward(batch.tp);
      ia = injection_batch(pa, batch.a, rc.params);
      ib = injection_batch(pb, batch.b, rc.params);
    }
    auto part_a_plus = batch.tp + r.alpha_a * ia;
    auto part_b_plus = batch.tp + r.alpha_b * ib;
    auto f = r.fi->forward(part_a_plus, part_b_plus);
    auto loss = refiner::hybrid_loss(f, batch.ta, batch.tb, batch.tp, rc.loss);
    opt.zero_grad();
    loss.backward();
    opt.step();
    log.loss.push_back(loss.item<double>());
    log.alpha_a.push_back(r.alpha_a.item<double>());
    log.alpha_b.push_back(r.alpha_b.item<double>());
    if (!std::isfinite(log.loss.back()) || !std::isfinite(log.alpha_a.back()) || !std::isfinite(log.alpha_b.back())) {
      throw NumericError("refiner stage 2: non-finite value at iteration " + std::to_string(it));
    }
  }
  for (auto& p : r.du->parameters()) p.set_requires_grad(true);
  log.du_hash_after = module_hash(*r.du);
  r.fi->mark_trained();
  return log;
}

// Refines one selected pseudo label; colour labels are refined on luminance
// and keep their chroma.
[[nodiscard]] inline Image refine_pseudo(const Image& pseudo, const Image& a, const Image& b, refiner::Refiner& r) {
  const Image la = to_luminance(a), lb = to_luminance(b);
  if (pseudo.channels() == 1) return refiner::refine(pseudo, la, lb, r);
  const auto c = to_ycbcr(pseudo);
  return from_ycbcr(refiner::refine(c.y, la, lb, r), c.cb, c.cr);
}

// ---- sequences --------------------------------------------------------------

struct SequenceResult {
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> r;  // r[j][i]: after task j, evaluated on task i
  std::vector<double> baseline;
  continual::Transfer transfer;
  std::vector<std::vector<LossRecord>> logs;
  ContinualState state;
};

[[nodiscard]] inline std::vector<double> untrained_baseline(const std::vector<const FusionDataset*>& datasets,
                                                            const TrainConfig& cfg) {
  std::vector<double> out;
  for (const auto* ds : datasets) {
    const auto ids = eval_ids(*ds, cfg.eval_pairs);
    double s = 0.0;
    for (int k = 0; k < cfg.baseline_seeds; ++k) {
      auto m = net::make_net(cfg.net, derive_seed(cfg.seed, 0x900 + static_cast<std::uint64_t>(k)));
      s += evaluate_composite(m, *ds, ids, cfg);
    }
    out.push_back(s / cfg.baseline_seeds);
  }
  return out;
}

inline SequenceResult train_sequence(const std::vector<const FusionDataset*>& datasets, net::VectorFieldNet& model,
                                     const TrainConfig& cfg,
                                     const std::function<void(const std::string&)>& progress = {}) {
  cfg.validate();
  if (datasets.empty()) throw ConfigError("train_sequence: no tasks");
  SequenceResult res;
  std::set<std::string> seen;
  for (const auto* ds : datasets) {
    res.tasks.push_back(task_name(ds->task()));
    if (!seen.insert(res.tasks.back()).second) throw ConfigError("task '" + res.tasks.back() + "' appears twice");
  }
  res.baseline = untrained_baseline(datasets, cfg);
  for (std::size_t j = 0; j < datasets.size(); ++j) {
    if (progress) progress("training task " + res.tasks[j]);
    auto run = train_fm_task(*datasets[j], model, cfg, res.state, j);
    res.logs.push_back(std::move(run.log));
    std::vector<double> row;
    for (const auto* ds : datasets) row.push_back(evaluate_composite(model, *ds, eval_ids(*ds, cfg.eval_pairs), cfg));
    res.r.push_back(std::move(row));
  }
  res.transfer = continual::bwt_fwt(res.r, res.baseline);
  return res;
}

}  // namespace fusionfm
