#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "fusionfm/png_io.hpp"
#include "fusionfm/selector.hpp"
#include "oracles.hpp"

using namespace fusionfm;
using namespace fusionfm::selector;
using metrics::Metric;

namespace {

Image noisy(const Image& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Image out = img;
  for (double& v : out.data()) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

CandidateSet make_set(std::vector<std::pair<std::string, Image>> items) {
  CandidateSet cs;
  cs.pair_id = "p";
  for (auto& [name, img] : items) cs.candidates.push_back({name, std::move(img), {}});
  return cs;
}

// Independent re-ranking: raw metrics from the metric functions, min-max
// normalisation and the weighted sum written out here.
std::string brute_force_winner(const CandidateSet& cs, const Image& a, const Image& b, const MetricWeights& w) {
  std::vector<std::map<Metric, double>> raw;
  for (const auto& c : cs.candidates) {
    std::map<Metric, double> r;
    for (const auto& [m, wt] : w.entries()) r[m] = metrics::compute(m, c.image, a, b);
    raw.push_back(r);
  }
  std::vector<double> score(raw.size(), 0.0);
  for (const auto& [m, wt] : w.entries()) {
    double lo = raw[0][m], hi = raw[0][m];
    for (auto& r : raw) {
      lo = std::min(lo, r[m]);
      hi = std::max(hi, r[m]);
    }
    for (std::size_t i = 0; i < raw.size(); ++i) score[i] += wt * (hi > lo ? (raw[i][m] - lo) / (hi - lo) : 1.0);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (score[i] > score[best] || (score[i] == score[best] && cs.candidates[i].teacher < cs.candidates[best].teacher))
      best = i;
  }
  return cs.candidates[best].teacher;
}

}  // namespace

TEST(Weights, TaskTables) {
  const auto ivf = MetricWeights::for_task(TaskKind::IVF).entries();
  EXPECT_EQ(ivf, (std::map<Metric, double>{{Metric::EN, 1}, {Metric::VIF, 1}, {Metric::Qabf, 2}, {Metric::SSIM, 3}}));
  EXPECT_EQ(MetricWeights::for_task(TaskKind::MIF).entries(), ivf);
  const auto mef = MetricWeights::for_task(TaskKind::MEF).entries();
  EXPECT_EQ(mef, (std::map<Metric, double>{
                     {Metric::EN, 1}, {Metric::VIF, 5}, {Metric::Qabf, 6}, {Metric::SD, 1}, {Metric::SF, 2}}));
  EXPECT_EQ(MetricWeights::for_task(TaskKind::MFF).entries(), mef);
}

TEST(Weights, Validation) {
  EXPECT_THROW(MetricWeights::from_json({{"PSNR", 1.0}}), ConfigError);
  EXPECT_THROW(MetricWeights::from_json({{"EN", -1.0}}), ConfigError);
  EXPECT_THROW(MetricWeights::from_json({{"EN", 0.0}, {"SD", 0.0}}), ConfigError);
  EXPECT_THROW(MetricWeights::from_json({{"EN", "one"}}), ConfigError);
  const auto w = MetricWeights::from_json({{"EN", 2.0}, {"Qabf", 1.5}});
  EXPECT_EQ(MetricWeights::from_json(w.to_json()).entries(), w.entries());
}

TEST(Score, DominanceHitsEndpoints) {
  const MetricWeights w({{Metric::EN, 1}, {Metric::Qabf, 2}, {Metric::SSIM, 3}});
  const std::vector<MetricValues> raw = {{{Metric::EN, 7.0}, {Metric::Qabf, 0.8}, {Metric::SSIM, 0.9}},
                                         {{Metric::EN, 6.0}, {Metric::Qabf, 0.5}, {Metric::SSIM, 0.7}}};
  const auto s = score_set(raw, w);
  EXPECT_EQ(s[0].score, 6.0);
  EXPECT_EQ(s[1].score, 0.0);
}

TEST(Score, HandComputedThreeCandidates) {
  // EN:     7, 6, 5      -> 1, 0.5, 0
  // Qabf:   0.5, 0.7, 0.6 -> 0, 1, 0.5
  // SF:     10, 10, 10   -> 1, 1, 1   (no spread)
  const MetricWeights w({{Metric::EN, 1}, {Metric::Qabf, 2}, {Metric::SF, 0.5}});
  const std::vector<MetricValues> raw = {{{Metric::EN, 7}, {Metric::Qabf, 0.5}, {Metric::SF, 10}},
                                         {{Metric::EN, 6}, {Metric::Qabf, 0.7}, {Metric::SF, 10}},
                                         {{Metric::EN, 5}, {Metric::Qabf, 0.6}, {Metric::SF, 10}}};
  const auto s = score_set(raw, w);
  EXPECT_NEAR(s[0].score, 1.5, 1e-9);
  EXPECT_NEAR(s[1].score, 3.0, 1e-9);
  EXPECT_NEAR(s[2].score, 1.5, 1e-9);
  EXPECT_NEAR(s[1].normalized.at(Metric::Qabf), 1.0, 1e-12);
  // The aggregate is recomputable from the stored normalised values.
  for (const auto& sv : s) {
    double acc = 0.0;
    for (const auto& [m, wt] : w.entries()) acc += wt * sv.normalized.at(m);
    EXPECT_EQ(acc, sv.score);
  }
}

TEST(Score, SingleCandidateScoresWeightSum) {
  const Image a = oracle::random_image(16, 16, 1), b = oracle::random_image(16, 16, 2);
  const auto w = MetricWeights::for_task(TaskKind::MEF);
  EXPECT_EQ(score(a, a, b, w).score, w.total());
}

TEST(Select, SingleCandidate) {
  const Image a = oracle::random_image(16, 16, 3), b = oracle::random_image(16, 16, 4);
  auto cs = make_set({{"only", a}});
  const auto sel = select(cs, a, b, TaskKind::IVF);
  EXPECT_EQ(sel.teacher, "only");
  EXPECT_EQ(sel.provenance["winner"], "only");
}

TEST(Select, IdenticalCandidatesTieLexicographically) {
  const Image a = oracle::random_image(16, 16, 5), b = oracle::random_image(16, 16, 6);
  const Image f = oracle::random_image(16, 16, 7);
  auto cs = make_set({{"zeta", f}, {"alpha", f}, {"mid", f}});
  const auto sel = select(cs, a, b, TaskKind::IVF);
  EXPECT_EQ(sel.teacher, "alpha");
  EXPECT_EQ(cs.candidates[0].scores.score, cs.candidates[1].scores.score);
}

TEST(Select, SsimOnlyWeightsPickSourceCopy) {
  const Image a = oracle::random_image(24, 24, 8), b = oracle::random_image(24, 24, 9);
  auto cs = make_set({{"n1", oracle::random_image(24, 24, 10)}, {"copy", a}, {"n2", oracle::random_image(24, 24, 11)}});
  const auto sel = select(cs, a, b, MetricWeights({{Metric::SSIM, 1.0}}));
  EXPECT_EQ(sel.teacher, "copy");
}

TEST(Select, MatchesBruteForceReRanking) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const Image a = oracle::random_image(24, 24, 20 + s), b = oracle::random_image(24, 24, 30 + s);
    Image mix = a;
    for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = 0.5 * (a.data()[i] + b.data()[i]);
    auto cs = make_set({{"t1", noisy(mix, 0.05, 40 + s)}, {"t2", noisy(mix, 0.2, 50 + s)}, {"t3", mix}});
    for (TaskKind t : kAllTasks) {
      const auto w = MetricWeights::for_task(t);
      auto copy = cs;
      EXPECT_EQ(select(copy, a, b, w).teacher, brute_force_winner(cs, a, b, w));
    }
  }
}

TEST(Select, ProvenanceRecordsEverything) {
  const Image a = oracle::random_image(16, 16, 60), b = oracle::random_image(16, 16, 61);
  auto cs = make_set({{"x", a}, {"y", b}});
  const auto sel = select(cs, a, b, TaskKind::MEF);
  const auto& p = sel.provenance;
  EXPECT_EQ(p["pair_id"], "p");
  EXPECT_EQ(p["task"], "MEF");
  EXPECT_EQ(p["candidates"].size(), 2u);
  EXPECT_TRUE(p["candidates"][0].contains("raw"));
  EXPECT_TRUE(p["candidates"][0].contains("normalized"));
  EXPECT_EQ(p["weights"]["Qabf"], 6.0);
}

TEST(Select, EmptySetIsRejected) {
  const Image a(16, 16);
  CandidateSet cs;
  cs.pair_id = "empty";
  EXPECT_THROW((void)select(cs, a, a, TaskKind::IVF), DataError);
}

TEST(SelectorProperties, PermutationAndScalingInvariance) {
  const Image a = oracle::random_image(20, 20, 70), b = oracle::random_image(20, 20, 71);
  auto cs = make_set({{"a", noisy(a, 0.1, 72)}, {"b", noisy(b, 0.1, 73)}, {"c", noisy(a, 0.3, 74)}, {"d", b}});
  const auto w = MetricWeights::for_task(TaskKind::IVF);
  auto base = cs;
  const std::string winner = select(base, a, b, w).teacher;
  std::vector<std::size_t> order = {0, 1, 2, 3};
  do {
    CandidateSet p;
    p.pair_id = "p";
    for (auto i : order) p.candidates.push_back(cs.candidates[i]);
    EXPECT_EQ(select(p, a, b, w).teacher, winner);
  } while (std::next_permutation(order.begin(), order.end()));
  for (double k : {1e-3, 0.5, 7.0, 1e4}) {
    auto c = cs;
    EXPECT_EQ(select(c, a, b, w.scaled(k)).teacher, winner);
  }
}

TEST(SelectorProperties, DominatedCandidateInsideRangeNeverWins) {
  // A candidate whose metric values lie inside the existing per-metric ranges
  // and below the winner's leaves every normalisation untouched.
  Rng rng(80);
  for (int trial = 0; trial < 200; ++trial) {
    const MetricWeights w({{Metric::EN, rng.uniform(0.1, 2)}, {Metric::Qabf, rng.uniform(0.1, 2)},
                           {Metric::SSIM, rng.uniform(0.1, 2)}});
    std::vector<MetricValues> raw;
    for (int i = 0; i < 4; ++i) {
      raw.push_back({{Metric::EN, rng.uniform(5, 8)}, {Metric::Qabf, rng.uniform()}, {Metric::SSIM, rng.uniform()}});
    }
    auto scored = score_set(raw, w);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scored.size(); ++i)
      if (scored[i].score > scored[best].score) best = i;
    MetricValues dominated;
    for (const auto& [m, wt] : w.entries()) {
      double lo = raw[0].at(m);
      for (const auto& r : raw) lo = std::min(lo, r.at(m));
      dominated[m] = lo + rng.uniform(0.0, 1.0) * (raw[best].at(m) - lo);
    }
    raw.push_back(dominated);
    const auto rescored = score_set(raw, w);
    std::size_t best2 = 0;
    for (std::size_t i = 1; i < rescored.size(); ++i)
      if (rescored[i].score > rescored[best2].score) best2 = i;
    EXPECT_EQ(best2, best);
  }
}

class IngestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = std::filesystem::temp_directory_path() / "fusionfm_ingest_test";
    std::filesystem::remove_all(root_);
    std::filesystem::create_directories(root_ / "candidates");
  }
  void TearDown() override { std::filesystem::remove_all(root_); }
  std::filesystem::path root_;
};

TEST_F(IngestTest, LoadsSortedAndRejectsMisshapen) {
  const Image a = oracle::random_image(16, 16, 90), b = oracle::random_image(16, 16, 91);
  save_png(root_ / "candidates" / "zz" / "p1.png", a, 16);
  save_png(root_ / "candidates" / "aa" / "p1.png", b, 16);
  save_png(root_ / "candidates" / "bad" / "p1.png", oracle::random_image(12, 16, 92), 16);
  const auto cs = ingest_candidates(root_, "p1", a, b);
  ASSERT_EQ(cs.candidates.size(), 2u);
  EXPECT_EQ(cs.candidates[0].teacher, "aa");
  EXPECT_EQ(cs.candidates[1].teacher, "zz");
  ASSERT_EQ(cs.warnings.size(), 1u);
  EXPECT_NE(cs.warnings[0].find("bad"), std::string::npos);
}

TEST_F(IngestTest, NoValidCandidatesIsFatal) {
  const Image a(16, 16);
  try {
    (void)ingest_candidates(root_, "p1", a, a);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find((root_ / "candidates").string()), std::string::npos);
  }
  EXPECT_THROW((void)ingest_candidates(root_ / "missing", "p1", a, a), DataError);
}

TEST(TaskKind, Names) {
  for (TaskKind t : kAllTasks) EXPECT_EQ(parse_task(task_name(t)), t);
  EXPECT_THROW((void)parse_task("XYZ"), ConfigError);
}
