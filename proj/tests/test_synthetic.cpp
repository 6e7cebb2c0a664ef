#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "fusionfm/dataset.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/selector.hpp"
#include "fusionfm/synthetic.hpp"
#include "fusionfm/wasserstein.hpp"
#include "oracles.hpp"

using namespace fusionfm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Local high-frequency energy over a 7x7 neighbourhood.
Image sharpness(const Image& img) {
  const Image d = oracle::convolve(img, std::vector<double>(25, 1.0 / 25), 5);
  Image e(img.height(), img.width());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double r = img.data()[i] - d.data()[i];
    e.data()[i] = r * r;
  }
  return oracle::convolve(e, std::vector<double>(49, 1.0), 7);
}

}  // namespace

TEST(Synthetic, SameSeedIsBitIdentical) {
  for (auto flavor : {synth::Flavor::IvfLike, synth::Flavor::MefLike, synth::Flavor::MffLike}) {
    const auto p = synth::make_pair(3, 40, 11, flavor), q = synth::make_pair(3, 40, 11, flavor);
    EXPECT_EQ(p.a, q.a);
    EXPECT_EQ(p.b, q.b);
    EXPECT_EQ(p.f_star, q.f_star);
    const auto r = synth::make_pair(3, 40, 12, flavor);
    EXPECT_NE(p.a, r.a);
  }
}

TEST(Synthetic, ValuesInUnitRangeAndIdealFormula) {
  for (auto flavor : {synth::Flavor::IvfLike, synth::Flavor::MefLike, synth::Flavor::MffLike}) {
    for (std::size_t i = 0; i < 5; ++i) {
      const auto p = synth::make_pair(i, 40, 1, flavor);
      for (const Image* img : {&p.a, &p.b, &p.f_star}) {
        for (double v : img->data()) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
        }
      }
      for (std::size_t k = 0; k < p.a.size(); ++k) {
        const double x = p.a.data()[k], y = p.b.data()[k];
        EXPECT_EQ(p.f_star.data()[k], std::clamp(0.5 * std::max(x, y) + 0.25 * (x + y), 0.0, 1.0));
      }
    }
  }
}

TEST(Synthetic, MultiFocusCompositeRecoversScene) {
  for (std::size_t i = 0; i < 6; ++i) {
    const auto p = synth::make_pair(i, 64, 5, synth::Flavor::MffLike);
    ASSERT_FALSE(p.mask.empty());
    const Image sa = sharpness(p.a), sb = sharpness(p.b);
    const Image seam = gradient_magnitude(convolve(p.mask, Kernel::box(11)));
    int checked = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (seam.at(y, x) > 0.0) continue;
        const double m = p.mask.at(y, x);
        const double scene = m * p.a.at(y, x) + (1.0 - m) * p.b.at(y, x);
        const double composite = sa.at(y, x) >= sb.at(y, x) ? p.a.at(y, x) : p.b.at(y, x);
        EXPECT_NEAR(composite, scene, 1e-6) << "pair " << i << " at " << y << "," << x;
        ++checked;
      }
    EXPECT_GT(checked, 64 * 64 / 4);
  }
}

TEST(Synthetic, IdealBeatsSourcesOnQabf) {
  for (auto flavor : {synth::Flavor::IvfLike, synth::Flavor::MefLike, synth::Flavor::MffLike}) {
    for (std::size_t i = 0; i < 100; ++i) {
      const auto p = synth::make_pair(i, 48, 21, flavor);
      const double q = metrics::qabf(p.f_star, p.a, p.b);
      EXPECT_GT(q, metrics::qabf(p.a, p.a, p.b)) << synth::flavor_name(flavor) << " " << i;
      EXPECT_GT(q, metrics::qabf(p.b, p.a, p.b)) << synth::flavor_name(flavor) << " " << i;
    }
  }
}

TEST(Synthetic, IdealOutscoresEveryDegradedTeacher) {
  for (auto flavor : {synth::Flavor::IvfLike, synth::Flavor::MefLike, synth::Flavor::MffLike}) {
    for (std::size_t i = 0; i < 20; ++i) {
      const auto p = synth::make_pair(i, 48, 31, flavor);
      selector::CandidateSet cs;
      cs.pair_id = p.id;
      for (auto& t : synth::teachers(p)) cs.candidates.push_back({t.name, t.image, {}});
      cs.candidates.push_back({std::string(synth::kIdealTeacher), p.f_star, {}});
      for (TaskKind task : kAllTasks) {
        auto copy = cs;
        const auto sel = selector::select(copy, p.a, p.b, task);
        EXPECT_EQ(sel.teacher, synth::kIdealTeacher) << synth::flavor_name(flavor) << " " << i << " " << task_name(task);
        const double ideal = copy.candidates.back().scores.score;
        for (std::size_t k = 0; k + 1 < copy.candidates.size(); ++k) EXPECT_LT(copy.candidates[k].scores.score, ideal);
      }
    }
  }
}

TEST(Synthetic, GenerateWritesLayoutDeterministically) {
  const auto root1 = fs::temp_directory_path() / "fusionfm_gen1";
  const auto root2 = fs::temp_directory_path() / "fusionfm_gen2";
  fs::remove_all(root1);
  fs::remove_all(root2);
  synth::GenerateOptions opt;
  opt.n_pairs = 10;
  opt.size = 32;
  opt.seed = 9;
  opt.flavor = synth::Flavor::MefLike;
  const auto dir = synth::generate(root1, opt);
  synth::generate(root2, opt);
  EXPECT_EQ(dir, root1 / "MEF");
  for (const char* sub : {"modA", "modB", "reference", "candidates/ideal", "candidates/blur", "candidates/contrast",
                          "candidates/noise"}) {
    for (std::size_t i = 0; i < 10; ++i) {
      const auto f = fs::path(sub) / (synth::pair_id(i) + ".png");
      ASSERT_TRUE(fs::exists(dir / f)) << f;
      EXPECT_EQ(slurp(dir / f), slurp(root2 / "MEF" / f));
    }
  }
  EXPECT_EQ(slurp(dir / "split.json"), slurp(root2 / "MEF" / "split.json"));
  const auto ds = FusionDataset::load(root1, TaskKind::MEF);
  EXPECT_EQ(ds.pairs().size(), 10u);
  EXPECT_EQ(ds.split().val.size(), 2u);
  EXPECT_EQ(ds.split().train.size(), 8u);
  for (const auto& v : ds.split().val) {
    EXPECT_EQ(std::count(ds.split().train.begin(), ds.split().train.end(), v), 0);
  }
  fs::remove_all(root1);
  fs::remove_all(root2);
}

TEST(Wasserstein, TrivialCases) {
  const std::vector<double> a = {0.1, 0.5, 0.3, 0.9};
  auto w = flow::wasserstein_1d(a, a);
  EXPECT_EQ(w.w1, 0.0);
  EXPECT_EQ(w.w2, 0.0);
  const std::vector<double> zeros(5, 0.0), ones(5, 1.0);
  w = flow::wasserstein_1d(zeros, ones);
  EXPECT_EQ(w.w1, 1.0);
  EXPECT_EQ(w.w2, 1.0);
  EXPECT_THROW((void)flow::wasserstein_1d(a, ones), DimensionError);
}

TEST(Wasserstein, MatchesBruteForceTransport) {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.normal();
    const auto w = flow::wasserstein_1d(a, b);
    const auto ref = oracle::brute_force_transport(a, b);
    EXPECT_NEAR(w.w1, ref.w1, 1e-12);
    EXPECT_NEAR(w.w2, ref.w2, 1e-12);
  }
}

TEST(Wasserstein, SymmetricAndTriangle) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30), c(30);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.normal();
    for (auto& v : c) v = rng.uniform(-2, 2);
    const auto ab = flow::wasserstein_1d(a, b), ba = flow::wasserstein_1d(b, a);
    const auto ac = flow::wasserstein_1d(a, c), cb = flow::wasserstein_1d(c, b);
    EXPECT_EQ(ab.w1, ba.w1);
    EXPECT_EQ(ab.w2, ba.w2);
    EXPECT_LE(ab.w1, ac.w1 + cb.w1 + 1e-12);
    EXPECT_LE(ab.w2, ac.w2 + cb.w2 + 1e-12);
  }
}
