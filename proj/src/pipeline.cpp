#include "crtmle/pipeline.hpp"

#include <algorithm>

#include "crtmle/errors.hpp"

namespace crtmle {

NuisanceDesigns NuisanceDesigns::without(const std::string& name) const {
  NuisanceDesigns out = *this;
  for (auto* v : {&out.outcome, &out.interactions, &out.treatment, &out.censoring}) {
    std::erase(*v, name);
  }
  return out;
}

DesignSpec pooled_outcome_design(const NuisanceDesigns& d) {
  return DesignSpec{d.outcome, true, d.interactions};
}

DesignSpec arm_outcome_design(const NuisanceDesigns& d) { return DesignSpec{d.outcome, false, {}}; }

FineGrayOptions outcome_options(const CohortDataset& data, const CensoringModel& cens,
                                const DesignSpec& spec, const PipelineConfig& cfg) {
  FineGrayOptions opt;
  opt.l1_penalty = cfg.l1_penalty;
  if (cfg.cross_validate_penalty && spec.width() > 0) {
    opt.l1_penalty = select_lambda_cv(data, cens, spec, cfg.cv_seed, cfg.cv_folds).best;
  }
  return opt;
}

CensoringModel fit_censoring_model(const CohortDataset& data, const PipelineConfig& cfg) {
  return fit_censoring(data, cfg.censoring_kind, cfg.designs.censoring,
                       cfg.censoring_uses_treatment, cfg.truncation);
}

SubgroupFit fit_subgroup(const CohortDataset& subgroup, double t0, const PipelineConfig& cfg,
                         SubgroupKey key, std::string label) {
  if (subgroup.empty()) throw DataError("empty subgroup " + label);
  SubgroupFit fit;
  fit.key = std::move(key);
  fit.label = std::move(label);
  fit.censoring = fit_censoring_model(subgroup, cfg);
  fit.propensity = fit_propensity(subgroup, cfg.designs.treatment, cfg.truncation);
  fit.problem = make_targeting_problem(subgroup, fit.propensity, fit.censoring, t0, cfg.truncation);

  if (cfg.initial == InitialLearner::S) {
    const DesignSpec spec = pooled_outcome_design(cfg.designs);
    fit.outcome0 = fit_fine_gray(subgroup, fit.censoring, spec,
                                 outcome_options(subgroup, fit.censoring, spec, cfg));
    fit.outcome1 = fit.outcome0;
  } else {
    const DesignSpec spec = arm_outcome_design(cfg.designs);
    for (int a = 0; a < 2; ++a) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < subgroup.size(); ++i) {
        if (subgroup[i].treatment == a) rows.push_back(i);
      }
      CohortDataset arm = subgroup.subset(rows);
      auto model = fit_fine_gray(arm, fit.censoring, spec,
                                 outcome_options(arm, fit.censoring, spec, cfg));
      (a == 0 ? fit.outcome0 : fit.outcome1) = std::move(model);
    }
  }
  fit.initial = initial_state(fit.problem, subgroup, fit.outcome0, fit.outcome1);
  fit.targeted = target(fit.problem, fit.initial, cfg.targeting);
  fit.estimate = estimate_cate(fit.problem, fit.targeted, t0, fit.key, fit.label);
  return fit;
}

std::vector<SubgroupFit> run_tmle(const CohortDataset& data, double t0,
                                  const PipelineConfig& cfg) {
  std::vector<SubgroupFit> out;
  for (const auto& key : data.subgroups()) {
    const auto& rows = data.members(key);
    auto fit = fit_subgroup(data.subset(rows), t0, cfg, key, data.subgroup_label(key));
    fit.rows = rows;
    out.push_back(std::move(fit));
  }
  return out;
}

std::vector<double> individual_effects(const CohortDataset& data,
                                       const std::vector<SubgroupFit>& fits) {
  std::vector<double> tau(data.size(), 0.0);
  std::vector<char> seen(data.size(), 0);
  for (const auto& f : fits) {
    for (std::size_t j = 0; j < f.rows.size(); ++j) {
      tau[f.rows[j]] = f.targeted.cif_at_horizon(1, j) - f.targeted.cif_at_horizon(0, j);
      seen[f.rows[j]] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError("individual effects: fits do not cover every subject");
  }
  return tau;
}

}  // namespace crtmle
