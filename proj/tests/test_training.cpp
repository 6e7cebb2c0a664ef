#include <gtest/gtest.h>

#include <set>

#include "fusionfm/training.hpp"
#include "torch_support.hpp"

using namespace fusionfm;

namespace {

TrainConfig tiny_config(int iterations) {
  TrainConfig c = TrainConfig::smoke();
  c.iterations = iterations;
  c.seed = 11;
  c.continual.memory_size = 3;
  c.continual.fisher_batches = 2;
  c.eval_pairs = 2;
  return c;
}

bool same_log(const std::vector<LossRecord>& x, const std::vector<LossRecord>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].iteration != y[i].iteration || x[i].loss != y[i].loss || x[i].fm != y[i].fm || x[i].lr != y[i].lr) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(TrainFm, SeededRunsAreIdentical) {
  const auto root = support::fresh_dir("train_det");
  const auto ds = support::ideal_dataset(root, synth::Flavor::IvfLike, 8, 32, 1);
  const auto cfg = tiny_config(5);
  auto m1 = net::make_net(cfg.net, cfg.seed), m2 = net::make_net(cfg.net, cfg.seed);
  const auto l1 = train_fm(ds, m1, cfg), l2 = train_fm(ds, m2, cfg);
  EXPECT_TRUE(same_log(l1, l2));
  EXPECT_EQ(module_hash(*m1), module_hash(*m2));
  ASSERT_EQ(l1.size(), 5u);
  for (const auto& r : l1) {
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_EQ(r.penalty, 0.0);
  }
  auto m3 = net::make_net(cfg.net, cfg.seed);
  auto other = cfg;
  other.seed = 12;
  EXPECT_FALSE(same_log(train_fm(ds, m3, other), l1));
}

TEST(TrainFmTask, WithoutEwcAndReplayEqualsPlainTraining) {
  const auto root = support::fresh_dir("train_plain");
  const auto ds = support::ideal_dataset(root, synth::Flavor::IvfLike, 8, 32, 2);
  auto cfg = tiny_config(5);
  cfg.continual.use_ewc = false;
  cfg.continual.use_replay = false;
  auto plain = net::make_net(cfg.net, cfg.seed), cont = net::make_net(cfg.net, cfg.seed);
  const auto log = train_fm(ds, plain, cfg, 1);
  ContinualState state;
  const auto run = train_fm_task(ds, cont, cfg, state, 1);
  EXPECT_TRUE(same_log(log, run.log));
  EXPECT_EQ(module_hash(*plain), module_hash(*cont));
  EXPECT_FALSE(run.snapshot.has_value());
  EXPECT_TRUE(state.snapshots.empty());
  EXPECT_TRUE(state.replay.union_excluding("MEF").empty());
}

TEST(TrainFmTask, FirstTaskWithEwcTrainsLikePlainAndSnapshots) {
  const auto root = support::fresh_dir("train_first");
  const auto ds = support::ideal_dataset(root, synth::Flavor::IvfLike, 8, 32, 3);
  const auto cfg = tiny_config(4);
  auto plain = net::make_net(cfg.net, cfg.seed), cont = net::make_net(cfg.net, cfg.seed);
  const auto log = train_fm(ds, plain, cfg);
  ContinualState state;
  const auto run = train_fm_task(ds, cont, cfg, state, 0);
  EXPECT_TRUE(same_log(log, run.log));
  EXPECT_EQ(module_hash(*plain), module_hash(*cont));
  ASSERT_TRUE(run.snapshot.has_value());
  const auto& snap = *run.snapshot;
  EXPECT_EQ(snap.task_id, "IVF");
  std::set<std::string> names;
  for (const auto& p : named_parameters(*cont)) {
    names.insert(p.name);
    ASSERT_TRUE(snap.fisher.count(p.name)) << p.name;
    EXPECT_EQ(snap.fisher.at(p.name).sizes(), p.tensor.sizes());
    EXPECT_GE(snap.fisher.at(p.name).min().item<double>(), 0.0);
    EXPECT_TRUE(torch::equal(snap.theta_star.at(p.name), p.tensor.detach()));
  }
  EXPECT_EQ(names.size(), snap.fisher.size());
  double total = 0.0;
  for (const auto& [name, f] : snap.fisher) total += f.sum().item<double>();
  EXPECT_GT(total, 0.0);
}

TEST(TrainFmTask, SecondTaskPenaltyStartsAtZeroAndReplayNeverLeaks) {
  const auto root = support::fresh_dir("train_two");
  const auto ivf = support::ideal_dataset(root, synth::Flavor::IvfLike, 8, 32, 4);
  const auto mef = support::ideal_dataset(root, synth::Flavor::MefLike, 8, 32, 5);
  const auto cfg = tiny_config(4);
  auto model = net::make_net(cfg.net, cfg.seed);
  ContinualState state;
  (void)train_fm_task(ivf, model, cfg, state, 0);

  const auto mem = state.replay.union_excluding("MEF");
  ASSERT_EQ(mem.size(), 3u);
  const auto& train_ids = ivf.split().train;
  for (const auto& item : mem) {
    EXPECT_EQ(item.task_id, "IVF");
    EXPECT_NE(std::find(train_ids.begin(), train_ids.end(), item.sample_id), train_ids.end()) << item.sample_id;
  }
  EXPECT_TRUE(state.replay.union_excluding("IVF").empty());
  const auto pool = replay_pool(state, "MEF");
  EXPECT_NO_THROW(assert_no_leak(pool, "MEF"));
  EXPECT_THROW(assert_no_leak(pool, "IVF"), StateError);

  const auto run = train_fm_task(mef, model, cfg, state, 1);
  EXPECT_EQ(run.log.front().penalty, 0.0);
  for (const auto& r : run.log) {
    EXPECT_GE(r.penalty, 0.0);
    EXPECT_DOUBLE_EQ(r.loss, r.fm + r.penalty);
  }
  EXPECT_EQ(state.snapshots.size(), 2u);
  ASSERT_EQ(state.replay.memories().size(), 2u);
  for (const auto& item : state.replay.union_excluding("MFF")) {
    const auto& ds = item.task_id == "IVF" ? ivf : mef;
    const auto& val = ds.split().val;
    EXPECT_EQ(std::find(val.begin(), val.end(), item.sample_id), val.end()) << "held-out pair in replay";
  }
}

TEST(Evaluation, HeldOutIdsAreDisjointFromTraining) {
  const auto root = support::fresh_dir("train_eval_ids");
  const auto ds = support::ideal_dataset(root, synth::Flavor::MffLike, 10, 32, 6);
  const auto all = eval_ids(ds, 0);
  EXPECT_EQ(all, ds.split().val);
  EXPECT_FALSE(all.empty());
  const std::set<std::string> train(ds.split().train.begin(), ds.split().train.end());
  for (const auto& id : all) EXPECT_FALSE(train.count(id)) << id;
  EXPECT_EQ(eval_ids(ds, 1).size(), 1u);
  EXPECT_EQ(eval_ids(ds, 1).front(), all.front());
}

TEST(Fuse, ShapeRangeAndColour) {
  auto cfg = tiny_config(1);
  auto model = net::make_net(cfg.net, 7);
  {
    torch::NoGradGuard g;
    model->out_conv->weight.normal_(0.0, 0.5);
  }
  Rng rng(8);
  const Image a = synth::detail::smooth_field(27, rng, 0.0, 1.0, 3);
  const Image b = synth::detail::smooth_field(27, rng, 0.0, 1.0, 3);
  flow::FlowConfig fc;
  fc.n_sample_steps = 3;
  const Image f = fuse(model, a, b, fc, ColorMode::Luminance, 9);
  EXPECT_EQ(f.width(), 27);
  EXPECT_EQ(f.height(), 27);
  EXPECT_EQ(f.channels(), 1);
  for (double v : f.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(f, fuse(model, a, b, fc, ColorMode::Luminance, 9));

  Image colour(27, 27, 3, 0.0);
  for (int y = 0; y < 27; ++y) {
    for (int x = 0; x < 27; ++x) {
      colour.at(y, x, 0) = b.at(y, x, 0);
      colour.at(y, x, 1) = 0.5 * b.at(y, x, 0);
      colour.at(y, x, 2) = 0.25;
    }
  }
  const Image fc3 = fuse(model, a, colour, fc, ColorMode::Luminance, 9);
  EXPECT_EQ(fc3.channels(), 3);
  // Luminance comes from the sampler, chroma from the colour source.
  const auto chroma = to_ycbcr(colour);
  EXPECT_EQ(fc3, from_ycbcr(fuse(model, a, to_luminance(colour), fc, ColorMode::Luminance, 9), chroma.cb, chroma.cr));
}

TEST(TrainSequence, TransferMatchesItsMatrix) {
  const auto root = support::fresh_dir("train_seq");
  const auto ivf = support::ideal_dataset(root, synth::Flavor::IvfLike, 8, 32, 13);
  const auto mef = support::ideal_dataset(root, synth::Flavor::MefLike, 8, 32, 14);
  const auto cfg = tiny_config(3);
  auto model = net::make_net(cfg.net, cfg.seed);
  std::vector<std::string> progress;
  const auto res = train_sequence({&ivf, &mef}, model, cfg, [&](const std::string& s) { progress.push_back(s); });
  EXPECT_EQ(res.tasks, (std::vector<std::string>{"IVF", "MEF"}));
  EXPECT_EQ(progress.size(), 2u);
  ASSERT_EQ(res.r.size(), 2u);
  ASSERT_EQ(res.r[0].size(), 2u);
  ASSERT_EQ(res.baseline.size(), 2u);
  EXPECT_DOUBLE_EQ(res.transfer.bwt, res.r[1][0] - res.r[0][0]);
  EXPECT_DOUBLE_EQ(res.transfer.fwt, res.r[0][1] - res.baseline[1]);
  for (const auto& row : res.r) {
    for (double v : row) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(res.logs.size(), 2u);
  EXPECT_EQ(res.state.snapshots.size(), 2u);
  EXPECT_THROW((void)train_sequence({&ivf, &ivf}, model, cfg), ConfigError);
}
