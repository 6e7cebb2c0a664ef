#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/png_io.hpp"
#include "fusionfm/selector.hpp"

// Dataset layout:
//   <root>/<task>/modA/<id>.png, modB/<id>.png
//   <root>/<task>/candidates/<teacher>/<id>.png
//   <root>/<task>/pseudo/<id>.png, pseudo_refined/<id>.png
//   <root>/<task>/reference/<id>.png     (optional ideal fusion, synthetic data)
//   <root>/<task>/split.json             {"train": [...], "val": [...]}
namespace fusionfm {

enum class PseudoSource { Auto, Selected, Refined };

[[nodiscard]] inline PseudoSource parse_pseudo_source(std::string_view s) {
  if (s == "auto") return PseudoSource::Auto;
  if (s == "selected") return PseudoSource::Selected;
  if (s == "refined") return PseudoSource::Refined;
  throw ConfigError("unknown pseudo source '" + std::string(s) + "' (expected auto, selected or refined)");
}

[[nodiscard]] inline std::string pseudo_source_name(PseudoSource p) {
  switch (p) {
    case PseudoSource::Auto: return "auto";
    case PseudoSource::Selected: return "selected";
    case PseudoSource::Refined: return "refined";
  }
  return "?";
}

struct PairRecord {
  std::string id;
  Image a;
  Image b;
  std::optional<Image> pseudo;
  std::optional<Image> reference;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

[[nodiscard]] inline Split read_split(const std::filesystem::path& task_dir, const std::vector<std::string>& all_ids) {
  const auto file = task_dir / "split.json";
  Split s;
  if (!std::filesystem::exists(file)) {
    s.train = all_ids;
    return s;
  }
  nlohmann::json j;
  try {
    std::ifstream in(file);
    j = nlohmann::json::parse(in);
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.value("val", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + file.string() + "': " + e.what());
  }
  const std::set<std::string> known(all_ids.begin(), all_ids.end());
  std::set<std::string> seen;
  for (const auto* list : {&s.train, &s.val}) {
    for (const auto& id : *list) {
      if (!known.count(id)) throw DataError("'" + file.string() + "' lists unknown pair '" + id + "'");
      if (!seen.insert(id).second) throw DataError("'" + file.string() + "' lists pair '" + id + "' twice");
    }
  }
  return s;
}

// Registered source pairs of one task, loaded into memory.
class FusionDataset {
 public:
  static FusionDataset load(const std::filesystem::path& root, TaskKind task,
                            PseudoSource pseudo = PseudoSource::Auto, bool require_pseudo = false) {
    namespace fs = std::filesystem;
    FusionDataset ds;
    ds.root_ = root;
    ds.task_ = task;
    ds.dir_ = root / task_name(task);
    const fs::path dir_a = ds.dir_ / "modA";
    const fs::path dir_b = ds.dir_ / "modB";
    if (!fs::is_directory(dir_a)) throw DataError("source directory '" + dir_a.string() + "' does not exist");
    if (!fs::is_directory(dir_b)) throw DataError("source directory '" + dir_b.string() + "' does not exist");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir_a)) {
      if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw DataError("no PNG sources in '" + dir_a.string() + "'");

    for (const auto& id : ids) {
      PairRecord r;
      r.id = id;
      const fs::path fb = dir_b / (id + ".png");
      if (!fs::exists(fb)) throw DataError("pair '" + id + "' has no counterpart '" + fb.string() + "'");
      r.a = clamp01(load_png(dir_a / (id + ".png")));
      r.b = clamp01(load_png(fb));
      if (!r.a.same_shape(r.b)) {
        throw DimensionError("pair '" + id + "' is not registered: " + r.a.shape_string() + " vs " +
                             r.b.shape_string());
      }
      if (auto p = ds.pseudo_path(id, pseudo)) {
        r.pseudo = clamp01(load_png(*p));
        if (!r.pseudo->same_shape(r.a)) throw DimensionError("pseudo label '" + p->string() + "' has the wrong shape");
      } else if (require_pseudo) {
        throw DataError("pair '" + id + "' has no pseudo label under '" + ds.dir_.string() + "'");
      }
      const fs::path ref = ds.dir_ / "reference" / (id + ".png");
      if (fs::exists(ref)) r.reference = clamp01(load_png(ref));
      ds.index_[id] = ds.pairs_.size();
      ds.pairs_.push_back(std::move(r));
    }
    ds.split_ = read_split(ds.dir_, ids);
    return ds;
  }

  [[nodiscard]] std::optional<std::filesystem::path> pseudo_path(const std::string& id, PseudoSource src) const {
    const auto refined = dir_ / "pseudo_refined" / (id + ".png");
    const auto selected = dir_ / "pseudo" / (id + ".png");
    switch (src) {
      case PseudoSource::Refined:
        if (std::filesystem::exists(refined)) return refined;
        return std::nullopt;
      case PseudoSource::Selected:
        if (std::filesystem::exists(selected)) return selected;
        return std::nullopt;
      case PseudoSource::Auto:
        if (std::filesystem::exists(refined)) return refined;
        if (std::filesystem::exists(selected)) return selected;
        return std::nullopt;
    }
    return std::nullopt;
  }

  [[nodiscard]] const PairRecord& pair(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown pair '" + id + "' in " + dir_.string());
    return pairs_[it->second];
  }

  [[nodiscard]] std::vector<const PairRecord*> subset(const std::vector<std::string>& ids) const {
    std::vector<const PairRecord*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(&pair(id));
    return out;
  }

  // Replaces a pair's pseudo label in memory (ablation variants).
  void set_pseudo(const std::string& id, Image img) {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown pair '" + id + "' in " + dir_.string());
    if (!img.same_shape(pairs_[it->second].a) && !to_luminance(img).same_shape(to_luminance(pairs_[it->second].a))) {
      throw DimensionError("pseudo label for '" + id + "' has the wrong shape");
    }
    pairs_[it->second].pseudo = std::move(img);
  }

  [[nodiscard]] const std::vector<PairRecord>& pairs() const noexcept { return pairs_; }
  [[nodiscard]] const Split& split() const noexcept { return split_; }
  [[nodiscard]] TaskKind task() const noexcept { return task_; }
  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
  [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

  // Training pairs that carry a pseudo label and are at least crop x crop.
  [[nodiscard]] std::vector<const PairRecord*> trainable(int crop) const {
    std::vector<const PairRecord*> out;
    for (const auto* r : subset(split_.train)) {
      if (!r->pseudo) throw DataError("training pair '" + r->id + "' has no pseudo label");
      if (r->a.height() < crop || r->a.width() < crop) continue;
      out.push_back(r);
    }
    if (out.empty()) throw DataError("no training pair in '" + dir_.string() + "' fits a crop of " + std::to_string(crop));
    return out;
  }

 private:
  std::filesystem::path root_;
  std::filesystem::path dir_;
  TaskKind task_ = TaskKind::IVF;
  std::vector<PairRecord> pairs_;
  std::map<std::string, std::size_t> index_;
  Split split_;
};

}  // namespace fusionfm
