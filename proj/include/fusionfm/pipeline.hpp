#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/dataset.hpp"
#include "fusionfm/png_io.hpp"
#include "fusionfm/refiner_nets.hpp"
#include "fusionfm/selector.hpp"
#include "fusionfm/training.hpp"

// Stage glue shared by the CLI and the ablation harness.
namespace fusionfm {

struct PseudoLabel {
  std::string id;
  selector::Selection selection;
};

// Selector over <task>/candidates for every pair of the dataset, in id order.
[[nodiscard]] inline std::vector<PseudoLabel> select_pseudo(const FusionDataset& ds, const selector::MetricWeights& w) {
  std::vector<PseudoLabel> out;
  for (const auto& r : ds.pairs()) {
    auto cs = selector::ingest_candidates(ds.dir(), r.id, r.a, r.b);
    auto sel = selector::select(cs, to_luminance(r.a), to_luminance(r.b), w);
    sel.provenance["task"] = task_name(ds.task());
    out.push_back({r.id, std::move(sel)});
  }
  return out;
}

// pseudo/<id>.png plus pseudo/manifest.json (per-pair provenance).
inline void write_pseudo(const std::filesystem::path& task_dir, const std::vector<PseudoLabel>& labels) {
  const auto dir = task_dir / "pseudo";
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& l : labels) {
    save_png(dir / (l.id + ".png"), l.selection.image, 16);
    prov.push_back(l.selection.provenance);
  }
  std::ofstream(dir / "manifest.json") << prov.dump(2) << "\n";
}

struct RefinerFit {
  refiner::Refiner refiner;
  Stage1Log stage1;
  Stage2Log stage2;
};

[[nodiscard]] inline refiner::Refiner make_refiner(const TrainConfig& cfg) {
  return refiner::Refiner(cfg.refiner.du, cfg.refiner.fi, cfg.refiner.params, derive_seed(cfg.seed, 0x750));
}

// Both refiner stages on the dataset's current pseudo labels (I_f^+).
[[nodiscard]] inline RefinerFit fit_refiner(const FusionDataset& ds, const TrainConfig& cfg) {
  RefinerFit fit{make_refiner(cfg), {}, {}};
  fit.stage1 = train_refiner_stage1(ds, fit.refiner, cfg);
  fit.stage2 = train_refiner_stage2(ds, fit.refiner, cfg);
  return fit;
}

// I_f^{++} for every pair that carries a pseudo label.
[[nodiscard]] inline std::map<std::string, Image> refine_all(const FusionDataset& ds, refiner::Refiner& r) {
  std::map<std::string, Image> out;
  for (const auto& p : ds.pairs()) {
    if (p.pseudo) out[p.id] = refine_pseudo(*p.pseudo, p.a, p.b, r);
  }
  return out;
}

// Evaluation pairs never appear in training or replay.
inline void assert_disjoint(const FusionDataset& ds, const std::vector<std::string>& eval) {
  const std::set<std::string> train(ds.split().train.begin(), ds.split().train.end());
  for (const auto& id : eval) {
    if (train.count(id)) throw DataError("pair '" + id + "' of " + task_name(ds.task()) + " is both train and eval");
  }
}

// Mean metric report of the model's fusions over the given pairs (luminance).
[[nodiscard]] inline metrics::MetricReport evaluate_model(net::VectorFieldNet& model, const FusionDataset& ds,
                                                         const std::vector<std::string>& ids, const TrainConfig& cfg) {
  std::vector<metrics::MetricReport> rs;
  for (const auto& id : ids) {
    const auto& r = ds.pair(id);
    const Image f = to_luminance(fuse(model, r.a, r.b, cfg.flow, cfg.color_mode, derive_seed(cfg.seed, 0x600)));
    rs.push_back(metrics::evaluate(f, to_luminance(r.a), to_luminance(r.b)));
  }
  return mean_report(rs);
}

}  // namespace fusionfm
