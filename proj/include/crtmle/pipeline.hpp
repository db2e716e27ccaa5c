#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crtmle/censoring.hpp"
#include "crtmle/cohort.hpp"
#include "crtmle/design.hpp"
#include "crtmle/fine_gray.hpp"
#include "crtmle/propensity.hpp"
#include "crtmle/targeting.hpp"
#include "crtmle/truncation.hpp"

namespace crtmle {

// Initial outcome model: one pooled fit with treatment columns (S) or one fit
// per arm (T).
enum class InitialLearner { S, T };

struct NuisanceDesigns {
  // Outcome covariates; with InitialLearner::S the design also gets the
  // treatment main effect and treatment x `interactions`.
  std::vector<std::string> outcome;
  std::vector<std::string> interactions;
  std::vector<std::string> treatment;
  std::vector<std::string> censoring;

  // All three designs on the same covariates, interactions with all of them.
  static NuisanceDesigns uniform(const std::vector<std::string>& covariates) {
    return {covariates, covariates, covariates, covariates};
  }
  NuisanceDesigns without(const std::string& name) const;
};

struct PipelineConfig {
  NuisanceDesigns designs;
  CensoringKind censoring_kind = CensoringKind::CoxPH;
  bool censoring_uses_treatment = true;
  InitialLearner initial = InitialLearner::S;
  double l1_penalty = 0.0;
  bool cross_validate_penalty = false;
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
  Truncation truncation;
  TargetingOptions targeting;
};

DesignSpec pooled_outcome_design(const NuisanceDesigns& d);
DesignSpec arm_outcome_design(const NuisanceDesigns& d);

FineGrayOptions outcome_options(const CohortDataset& data, const CensoringModel& cens,
                                const DesignSpec& spec, const PipelineConfig& cfg);

CensoringModel fit_censoring_model(const CohortDataset& data, const PipelineConfig& cfg);

struct SubgroupFit {
  SubgroupKey key;
  std::string label;
  std::vector<std::size_t> rows;  // positions in the full dataset
  PropensityModel propensity;
  CensoringModel censoring;
  SubdistributionModel outcome0;  // arm-0 model (T) or the pooled model (S)
  SubdistributionModel outcome1;
  TargetingProblem problem;
  TargetingState initial;
  TargetingState targeted;
  CateEstimate estimate;
};

// Nuisance fit, targeting and plug-in estimate for one subgroup dataset.
SubgroupFit fit_subgroup(const CohortDataset& subgroup, double t0, const PipelineConfig& cfg,
                         SubgroupKey key = {}, std::string label = "all");

// Runs every subgroup of `data` independently.
std::vector<SubgroupFit> run_tmle(const CohortDataset& data, double t0, const PipelineConfig& cfg);

// Per-subject targeted F(t0|1) - F(t0|0), in dataset row order.
std::vector<double> individual_effects(const CohortDataset& data,
                                       const std::vector<SubgroupFit>& fits);

}  // namespace crtmle
