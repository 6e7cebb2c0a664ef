#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/png_io.hpp"

namespace fusionfm {

enum class TaskKind { IVF, MIF, MEF, MFF };

inline constexpr std::array<TaskKind, 4> kAllTasks = {TaskKind::IVF, TaskKind::MIF, TaskKind::MEF,
                                                      TaskKind::MFF};

[[nodiscard]] inline std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::IVF: return "IVF";
    case TaskKind::MIF: return "MIF";
    case TaskKind::MEF: return "MEF";
    case TaskKind::MFF: return "MFF";
  }
  return "?";
}

[[nodiscard]] inline TaskKind parse_task(std::string_view s) {
  for (TaskKind t : kAllTasks) {
    const std::string n = task_name(t);
    if (n.size() == s.size() &&
        std::equal(n.begin(), n.end(), s.begin(), [](char a, char b) {
          return std::toupper(static_cast<unsigned char>(a)) == std::toupper(static_cast<unsigned char>(b));
        })) {
      return t;
    }
  }
  throw ConfigError("unknown task '" + std::string(s) + "' (expected IVF, MIF, MEF or MFF)");
}

namespace selector {

using metrics::Metric;
using MetricValues = std::map<Metric, double>;

// Non-negative per-metric weights with at least one positive entry.
class MetricWeights {
 public:
  MetricWeights() = default;
  explicit MetricWeights(std::map<Metric, double> w) : weights_(std::move(w)) { validate(); }

  static MetricWeights for_task(TaskKind task) {
    switch (task) {
      case TaskKind::IVF:
      case TaskKind::MIF:
        return MetricWeights({{Metric::EN, 1}, {Metric::VIF, 1}, {Metric::Qabf, 2}, {Metric::SSIM, 3}});
      case TaskKind::MEF:
      case TaskKind::MFF:
        return MetricWeights(
            {{Metric::EN, 1}, {Metric::VIF, 5}, {Metric::Qabf, 6}, {Metric::SD, 1}, {Metric::SF, 2}});
    }
    throw ConfigError("unknown task");
  }

  static MetricWeights from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("metric weights must be a JSON object");
    std::map<Metric, double> w;
    for (const auto& [key, value] : j.items()) {
      const auto m = metrics::parse_metric(key);
      if (!m) throw ConfigError("unknown metric name '" + key + "' in weights");
      if (!value.is_number()) throw ConfigError("weight for '" + key + "' must be a number");
      w[*m] = value.get<double>();
    }
    return MetricWeights(std::move(w));
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [m, v] : weights_) j[std::string(metrics::name(m))] = v;
    return j;
  }

  [[nodiscard]] const std::map<Metric, double>& entries() const noexcept { return weights_; }
  [[nodiscard]] double total() const {
    double s = 0.0;
    for (const auto& [m, v] : weights_) s += v;
    return s;
  }
  [[nodiscard]] MetricWeights scaled(double factor) const {
    auto w = weights_;
    for (auto& [m, v] : w) v *= factor;
    return MetricWeights(std::move(w));
  }

 private:
  void validate() const {
    bool positive = false;
    for (const auto& [m, v] : weights_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError("weight for " + std::string(metrics::name(m)) + " must be finite and >= 0");
      }
      positive = positive || v > 0.0;
    }
    if (!positive) throw ConfigError("metric weights need at least one positive entry");
  }

  std::map<Metric, double> weights_;
};

[[nodiscard]] inline MetricValues raw_metrics(const Image& f, const Image& a, const Image& b,
                                              const MetricWeights& w) {
  MetricValues out;
  for (const auto& [m, weight] : w.entries()) out[m] = metrics::compute(m, f, a, b);
  return out;
}

// Table-weighted sum of raw (unnormalised) metric values.
[[nodiscard]] inline double composite_score(const MetricValues& raw, const MetricWeights& w) {
  double s = 0.0;
  for (const auto& [m, weight] : w.entries()) s += weight * raw.at(m);
  return s;
}

struct ScoredValues {
  MetricValues raw;
  MetricValues normalized;
  double score = 0.0;
};

// Min-max normalises every weighted metric across the set, then forms the
// weighted sum. A metric with no spread (including single-candidate sets)
// normalises to 1 for every candidate.
[[nodiscard]] inline std::vector<ScoredValues> score_set(const std::vector<MetricValues>& raw,
                                                         const MetricWeights& w) {
  std::vector<ScoredValues> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i].raw = raw[i];
  for (const auto& [m, weight] : w.entries()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : raw) {
      const auto it = r.find(m);
      if (it == r.end()) throw ConfigError("candidate is missing metric " + std::string(metrics::name(m)));
      lo = std::min(lo, it->second);
      hi = std::max(hi, it->second);
    }
    for (auto& s : out) {
      const double n = hi > lo ? (s.raw.at(m) - lo) / (hi - lo) : 1.0;
      s.normalized[m] = n;
      s.score += weight * n;
    }
  }
  return out;
}

// Score of a lone candidate: every normalised metric is 1, score = sum of weights.
[[nodiscard]] inline ScoredValues score(const Image& f, const Image& a, const Image& b,
                                        const MetricWeights& w) {
  return score_set({raw_metrics(f, a, b, w)}, w).front();
}

struct Candidate {
  std::string teacher;
  Image image;
  ScoredValues scores;
};

struct CandidateSet {
  std::string pair_id;
  std::vector<Candidate> candidates;
  std::size_t selected = 0;
  std::vector<std::string> warnings;
};

struct Selection {
  Image image;
  std::string teacher;
  nlohmann::json provenance;
};

[[nodiscard]] inline std::size_t argmax_with_ties(const std::vector<Candidate>& cs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cs.size(); ++i) {
    const double s = cs[i].scores.score, bs = cs[best].scores.score;
    if (s > bs || (s == bs && cs[i].teacher < cs[best].teacher)) best = i;
  }
  return best;
}

[[nodiscard]] inline nlohmann::json values_json(const MetricValues& v) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [m, x] : v) j[std::string(metrics::name(m))] = x;
  return j;
}

// Scores every candidate against the source pair and returns the argmax.
// Ties go to the lexicographically smallest teacher name.
inline Selection select(CandidateSet& cs, const Image& a, const Image& b, const MetricWeights& w) {
  if (cs.candidates.empty()) {
    throw DataError("empty candidate set for pair '" + cs.pair_id + "'");
  }
  std::vector<MetricValues> raw;
  raw.reserve(cs.candidates.size());
  for (const auto& c : cs.candidates) {
    if (!to_luminance(c.image).same_shape(to_luminance(a))) {
      throw DimensionError("candidate '" + c.teacher + "' for pair '" + cs.pair_id +
                           "' does not match the source shape");
    }
    raw.push_back(raw_metrics(c.image, a, b, w));
  }
  const auto scored = score_set(raw, w);
  for (std::size_t i = 0; i < scored.size(); ++i) cs.candidates[i].scores = scored[i];
  cs.selected = argmax_with_ties(cs.candidates);

  nlohmann::json prov;
  prov["pair_id"] = cs.pair_id;
  prov["weights"] = w.to_json();
  prov["candidates"] = nlohmann::json::array();
  for (const auto& c : cs.candidates) {
    prov["candidates"].push_back({{"teacher", c.teacher},
                                  {"raw", values_json(c.scores.raw)},
                                  {"normalized", values_json(c.scores.normalized)},
                                  {"score", c.scores.score}});
  }
  const auto& winner = cs.candidates[cs.selected];
  prov["winner"] = winner.teacher;
  if (!cs.warnings.empty()) prov["warnings"] = cs.warnings;
  return {winner.image, winner.teacher, std::move(prov)};
}

inline Selection select(CandidateSet& cs, const Image& a, const Image& b, TaskKind task) {
  auto sel = select(cs, a, b, MetricWeights::for_task(task));
  sel.provenance["task"] = task_name(task);
  return sel;
}

// Loads <task_root>/candidates/<teacher>/<pair_id>.png for every teacher.
// Candidates whose shape disagrees with the sources are dropped with a warning.
[[nodiscard]] inline CandidateSet ingest_candidates(const std::filesystem::path& task_root,
                                                    const std::string& pair_id, const Image& a,
                                                    const Image& b) {
  namespace fs = std::filesystem;
  const fs::path dir = task_root / "candidates";
  if (!fs::is_directory(dir)) throw DataError("candidates directory '" + dir.string() + "' does not exist");
  std::vector<std::string> teachers;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) teachers.push_back(entry.path().filename().string());
  }
  std::sort(teachers.begin(), teachers.end());

  CandidateSet cs;
  cs.pair_id = pair_id;
  for (const auto& t : teachers) {
    const fs::path file = dir / t / (pair_id + ".png");
    if (!fs::exists(file)) continue;
    Image img = clamp01(load_png(file));
    if (!to_luminance(img).same_shape(to_luminance(a)) || !a.same_shape(b)) {
      cs.warnings.push_back("rejected '" + file.string() + "': shape " + img.shape_string() +
                            " does not match source " + a.shape_string());
      continue;
    }
    cs.candidates.push_back({t, std::move(img), {}});
  }
  if (cs.candidates.empty()) {
    throw DataError("no valid candidates for pair '" + pair_id + "' under '" + dir.string() + "'");
  }
  return cs;
}

}  // namespace selector
}  // namespace fusionfm
