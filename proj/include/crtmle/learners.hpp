#pragma once

#include <cstdint>
#include <utility>

#include "crtmle/cohort.hpp"
#include "crtmle/fine_gray.hpp"
#include "crtmle/pipeline.hpp"

namespace crtmle {

enum class LearnerKind { SLearner, TLearner };

// Pooled Fine-Gray fit with treatment and treatment x covariate columns.
SubdistributionModel fit_s_learner(const CohortDataset& subgroup, const PipelineConfig& cfg);
// Per-arm Fine-Gray fits (first: arm 0), sharing one censoring model.
std::pair<SubdistributionModel, SubdistributionModel> fit_t_learner(const CohortDataset& subgroup,
                                                                    const PipelineConfig& cfg);

// Mean over subjects of F(t0 | 1, L_i) - F(t0 | 0, L_i).
double s_learner_cate(const SubdistributionModel& model, const CohortDataset& subgroup,
                      double t0);
double t_learner_cate(const SubdistributionModel& model0, const SubdistributionModel& model1,
                      const CohortDataset& subgroup, double t0);

double learner_cate(LearnerKind kind, const CohortDataset& subgroup, double t0,
                    const PipelineConfig& cfg);

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> replicates;
};

// Percentile interval over nonparametric resamples of the subgroup.
// Resamples with a single arm (or whose fit fails) are redrawn, at most 10
// times per replicate.
BootstrapInterval bootstrap_ci(LearnerKind kind, const CohortDataset& subgroup, double t0,
                               const PipelineConfig& cfg, std::uint64_t seed,
                               int replicates = 500, double level = 0.95);

// Percentile interval of stored replicate values.
std::pair<double, double> percentile_interval(std::vector<double> values, double level);

}  // namespace crtmle
