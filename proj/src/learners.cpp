#include "crtmle/learners.hpp"

#include <array>
#include <random>
#include <string>

#include "crtmle/errors.hpp"

namespace crtmle {

namespace {

void require_both_arms(const CohortDataset& data) {
  std::size_t treated = 0;
  for (const auto& s : data.subjects()) treated += static_cast<std::size_t>(s.treatment);
  if (treated == 0 || treated == data.size()) {
    throw DataError("learner needs subjects in both treatment arms");
  }
}

}  // namespace

SubdistributionModel fit_s_learner(const CohortDataset& subgroup, const PipelineConfig& cfg) {
  require_both_arms(subgroup);
  const CensoringModel cens = fit_censoring_model(subgroup, cfg);
  const DesignSpec spec = pooled_outcome_design(cfg.designs);
  return fit_fine_gray(subgroup, cens, spec, outcome_options(subgroup, cens, spec, cfg));
}

std::pair<SubdistributionModel, SubdistributionModel> fit_t_learner(const CohortDataset& subgroup,
                                                                    const PipelineConfig& cfg) {
  require_both_arms(subgroup);
  const CensoringModel cens = fit_censoring_model(subgroup, cfg);
  const DesignSpec spec = arm_outcome_design(cfg.designs);
  std::array<SubdistributionModel, 2> models;
  for (int a = 0; a < 2; ++a) {
    std::vector<std::size_t> rows;
    bool has_event = false;
    for (std::size_t i = 0; i < subgroup.size(); ++i) {
      if (subgroup[i].treatment != a) continue;
      rows.push_back(i);
      has_event |= subgroup[i].event == EventType::Main;
    }
    if (!has_event) {
      throw DataError("T-learner: arm " + std::to_string(a) + " has no main events");
    }
    CohortDataset arm = subgroup.subset(rows);
    models[static_cast<std::size_t>(a)] =
        fit_fine_gray(arm, cens, spec, outcome_options(arm, cens, spec, cfg));
  }
  return {std::move(models[0]), std::move(models[1])};
}

double s_learner_cate(const SubdistributionModel& model, const CohortDataset& subgroup,
                      double t0) {
  return t_learner_cate(model, model, subgroup, t0);
}

double t_learner_cate(const SubdistributionModel& model0, const SubdistributionModel& model1,
                      const CohortDataset& subgroup, double t0) {
  if (subgroup.empty()) throw DataError("learner CATE of an empty subgroup");
  double sum = 0.0;
  for (const auto& s : subgroup.subjects()) {
    sum += model1.cif(1, s.covariates, t0) - model0.cif(0, s.covariates, t0);
  }
  return sum / static_cast<double>(subgroup.size());
}

double learner_cate(LearnerKind kind, const CohortDataset& subgroup, double t0,
                    const PipelineConfig& cfg) {
  if (kind == LearnerKind::SLearner) {
    return s_learner_cate(fit_s_learner(subgroup, cfg), subgroup, t0);
  }
  auto [m0, m1] = fit_t_learner(subgroup, cfg);
  return t_learner_cate(m0, m1, subgroup, t0);
}

std::pair<double, double> percentile_interval(std::vector<double> values, double level) {
  const double alpha = 1.0 - level;
  const double lo = sample_quantile(values, alpha / 2.0);
  const double hi = sample_quantile(std::move(values), 1.0 - alpha / 2.0);
  return {lo, hi};
}

BootstrapInterval bootstrap_ci(LearnerKind kind, const CohortDataset& subgroup, double t0,
                               const PipelineConfig& cfg, std::uint64_t seed, int replicates,
                               double level) {
  if (replicates < 100) throw DataError("bootstrap needs at least 100 replicates");
  if (!(level > 0.0 && level < 1.0)) throw DataError("bootstrap level must lie in (0, 1)");
  if (subgroup.empty()) throw DataError("bootstrap of an empty subgroup");
  constexpr int kMaxRedraws = 10;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, subgroup.size() - 1);
  BootstrapInterval out;
  std::vector<std::size_t> rows(subgroup.size());
  for (int b = 0; b < replicates; ++b) {
    bool done = false;
    for (int attempt = 0; attempt <= kMaxRedraws && !done; ++attempt) {
      for (auto& r : rows) r = pick(rng);
      CohortDataset resample = subgroup.subset(rows);
      try {
        out.replicates.push_back(learner_cate(kind, resample, t0, cfg));
        done = true;
      } catch (const DataError&) {
      } catch (const NumericalError&) {
      }
    }
    if (!done) {
      throw NumericalError("bootstrap replicate " + std::to_string(b) +
                           " failed after 10 redraws");
    }
  }
  auto [lo, hi] = percentile_interval(out.replicates, level);
  out.lo = lo;
  out.hi = hi;
  return out;
}

}  // namespace crtmle
