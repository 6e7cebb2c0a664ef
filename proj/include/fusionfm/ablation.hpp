#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fusionfm/pipeline.hpp"
#include "fusionfm/training.hpp"

namespace fusionfm {

enum class LabelSource { Refined, Selected, FixedTeacher, RefinedUnprotected };

struct AblationVariant {
  std::string name;
  std::string description;
  flow::Coupling coupling = flow::Coupling::Average;
  LabelSource labels = LabelSource::Refined;
  bool use_ewc = true;
  bool use_replay = true;
};

// Exp. I-VII and the full method.
[[nodiscard]] inline std::vector<AblationVariant> ablation_variants() {
  using flow::Coupling;
  return {
      {"I", "noise coupling", Coupling::Noise, LabelSource::Refined, true, true},
      {"II", "single fixed teacher, selector bypassed", Coupling::Average, LabelSource::FixedTeacher, true, true},
      {"III", "no refiner", Coupling::Average, LabelSource::Selected, true, true},
      {"IV", "refiner without protection mask (c = 0)", Coupling::Average, LabelSource::RefinedUnprotected, true, true},
      {"V", "no EWC", Coupling::Average, LabelSource::Refined, false, true},
      {"VI", "no replay", Coupling::Average, LabelSource::Refined, true, false},
      {"VII", "neither EWC nor replay", Coupling::Average, LabelSource::Refined, false, false},
      {"full", "full method", Coupling::Average, LabelSource::Refined, true, true},
  };
}

struct AblationRow {
  std::string variant;
  std::string description;
  std::map<std::string, metrics::MetricReport> per_task;  // final model, held-out pairs
  SequenceResult sequence;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  // One line per (variant, task) plus the variant's BWT/FWT.
  [[nodiscard]] std::string metrics_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "variant,task,EN,SD,SF,AG,VIF,Qabf,SCD,SSIM\n";
    for (const auto& r : rows) {
      for (const auto& [task, m] : r.per_task) {
        os << r.variant << ',' << task << ',' << m.en << ',' << m.sd << ',' << m.sf << ',' << m.ag << ',' << m.vif
           << ',' << m.qabf << ',' << m.scd << ',' << m.ssim << '\n';
      }
    }
    return os.str();
  }

  [[nodiscard]] std::string transfer_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "variant,BWT,FWT\n";
    for (const auto& r : rows) os << r.variant << ',' << r.sequence.transfer.bwt << ',' << r.sequence.transfer.fwt << '\n';
    return os.str();
  }
};

struct TaskLabels {
  std::map<std::string, Image> selected;
  std::map<std::string, Image> teacher;
  std::map<std::string, Image> refined;
  std::map<std::string, Image> unprotected;
};

// Pseudo-label variants for one task: selector output, a fixed teacher, and
// the refiner applied with the configured c and with c = 0.
[[nodiscard]] inline TaskLabels ablation_labels(FusionDataset ds, const TrainConfig& cfg, const std::string& teacher) {
  TaskLabels out;
  for (auto& l : select_pseudo(ds, selector::MetricWeights::for_task(ds.task()))) {
    out.selected[l.id] = l.selection.image;
  }
  for (const auto& r : ds.pairs()) {
    const auto file = ds.dir() / "candidates" / teacher / (r.id + ".png");
    if (!std::filesystem::exists(file)) throw DataError("fixed teacher has no output '" + file.string() + "'");
    out.teacher[r.id] = clamp01(load_png(file));
  }
  for (const auto& [id, img] : out.selected) ds.set_pseudo(id, img);
  auto fit = fit_refiner(ds, cfg);
  out.refined = refine_all(ds, fit.refiner);
  fit.refiner.params.threshold = 0.0;
  out.unprotected = refine_all(ds, fit.refiner);
  return out;
}

inline AblationReport ablation_suite(const std::vector<FusionDataset>& datasets, const TrainConfig& base,
                                     const std::string& fixed_teacher = "blur",
                                     const std::function<void(const std::string&)>& progress = {}) {
  base.validate();
  std::vector<TaskLabels> labels;
  for (const auto& ds : datasets) {
    if (progress) progress("preparing pseudo labels for " + task_name(ds.task()));
    labels.push_back(ablation_labels(ds, base, fixed_teacher));
  }
  AblationReport report;
  for (const auto& v : ablation_variants()) {
    if (progress) progress("variant " + v.name + ": " + v.description);
    TrainConfig cfg = base;
    cfg.flow.coupling = v.coupling;
    cfg.continual.use_ewc = v.use_ewc;
    cfg.continual.use_replay = v.use_replay;
    std::vector<FusionDataset> local = datasets;
    for (std::size_t k = 0; k < local.size(); ++k) {
      const auto& src = v.labels == LabelSource::Refined              ? labels[k].refined
                        : v.labels == LabelSource::Selected           ? labels[k].selected
                        : v.labels == LabelSource::FixedTeacher       ? labels[k].teacher
                                                                      : labels[k].unprotected;
      for (const auto& [id, img] : src) local[k].set_pseudo(id, img);
    }
    std::vector<const FusionDataset*> ptrs;
    for (const auto& ds : local) ptrs.push_back(&ds);
    auto model = net::make_net(cfg.net, cfg.seed);
    AblationRow row{v.name, v.description, {}, train_sequence(ptrs, model, cfg, progress)};
    for (const auto* ds : ptrs) {
      const auto ids = eval_ids(*ds, cfg.eval_pairs);
      assert_disjoint(*ds, ids);
      row.per_task[task_name(ds->task())] = evaluate_model(model, *ds, ids, cfg);
    }
    row.sequence.state.datasets.clear();
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace fusionfm
