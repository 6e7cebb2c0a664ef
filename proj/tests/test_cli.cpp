#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fusionfm/metrics.hpp"
#include "fusionfm/png_io.hpp"
#include "torch_support.hpp"

using namespace fusionfm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

Result cli(const std::string& args, const fs::path& scratch) {
  const auto err_file = scratch / "stderr.txt";
  const std::string cmd = std::string(FUSIONFM_CLI_PATH) + " " + args + " > /dev/null 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string gen(const fs::path& root, const fs::path& scratch, int n = 4) {
  const auto r = cli("gen-synth --out " + root.string() + " --n-pairs " + std::to_string(n) + " --size 32 --seed 3",
                     scratch);
  return r.code == 0 ? "" : r.err;
}

}  // namespace

TEST(Cli, BadFlagIsAConfigError) {
  const auto dir = support::fresh_dir("cli_flag");
  EXPECT_EQ(cli("train --no-such-flag", dir).code, 2);
  EXPECT_EQ(cli("no-such-command", dir).code, 2);
  EXPECT_EQ(cli("gen-synth --out " + (dir / "d").string() + " --flavor pinhole", dir).code, 2);
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  const auto dir = support::fresh_dir("cli_config");
  std::ofstream(dir / "c.json") << R"({"train": {"iteratons": 5}})";
  const auto r = cli("gen-synth --out " + (dir / "d").string() + " --config " + (dir / "c.json").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown key 'iteratons' in config.train"), std::string::npos) << r.err;
}

TEST(Cli, MissingCandidatesIsADataErrorNamingTheDirectory) {
  const auto dir = support::fresh_dir("cli_nocand");
  ASSERT_EQ(gen(dir / "data", dir), "");
  const auto cand = dir / "data" / "IVF" / "candidates";
  fs::remove_all(cand);
  fs::create_directories(cand);
  const auto r = cli("select-pseudo --data " + (dir / "data").string() + " --task IVF --out " + (dir / "run").string(),
                     dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find(cand.string()), std::string::npos) << r.err;
  fs::remove_all(cand);
  const auto gone = cli("select-pseudo --data " + (dir / "data").string() + " --task IVF --out " + (dir / "run").string(),
                        dir);
  EXPECT_EQ(gone.code, 3);
  EXPECT_NE(gone.err.find("candidates"), std::string::npos) << gone.err;
}

TEST(Cli, MissingCheckpointIsADataError) {
  const auto dir = support::fresh_dir("cli_nockpt");
  ASSERT_EQ(gen(dir / "data", dir), "");
  const auto r = cli("eval --data " + (dir / "data").string() + " --task IVF --checkpoint " + (dir / "none.ffm").string() +
                         " --out " + (dir / "run").string(),
                     dir);
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, EvalCsvMatchesInProcessMetrics) {
  const auto dir = support::fresh_dir("cli_eval");
  ASSERT_EQ(gen(dir / "data", dir, 5), "");
  const auto ref = dir / "data" / "IVF" / "reference";
  const auto r = cli("eval --data " + (dir / "data").string() + " --task IVF --all --fused " + ref.string() + " --out " +
                         (dir / "run").string(),
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "run" / "metrics.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "pair_id,EN,SD,SF,AG,VIF,Qabf,SCD,SSIM");
  const auto ds = FusionDataset::load(dir / "data", TaskKind::IVF);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, cell;
    std::getline(ss, id, ',');
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
    ASSERT_EQ(vals.size(), 8u);
    const auto& p = ds.pair(id);
    const auto m = metrics::evaluate(to_luminance(clamp01(load_png(ref / (id + ".png")))), to_luminance(p.a),
                                     to_luminance(p.b));
    std::size_t k = 0;
    for (auto metric : metrics::kAllMetrics) EXPECT_EQ(vals[k++], m.get(metric)) << id << " " << metrics::name(metric);
    ++rows;
  }
  EXPECT_EQ(rows, 5u);
  const auto summary = nlohmann::json::parse(slurp(dir / "run" / "metrics.json"));
  EXPECT_EQ(summary.at("pairs"), 5);
  EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "run.log"));
}

TEST(Cli, GenerationIsByteReproducible) {
  const auto dir = support::fresh_dir("cli_repro");
  ASSERT_EQ(gen(dir / "data", dir), "");
  fs::rename(dir / "data", dir / "first");
  ASSERT_EQ(gen(dir / "data", dir), "");
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "first")) {
    if (!e.is_regular_file() || e.path().filename() == "run.log") continue;
    const auto rel = fs::relative(e.path(), dir / "first");
    ASSERT_TRUE(fs::exists(dir / "data" / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "data" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 4u * 4u);
  const auto cfg = nlohmann::json::parse(slurp(dir / "data" / "IVF" / "config.json"));
  EXPECT_EQ(cfg.at("seed"), 3);
  EXPECT_EQ(cfg.at("command"), "gen-synth");
}
