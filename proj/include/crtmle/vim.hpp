#pragma once

#include <span>
#include <string>
#include <vector>

#include "crtmle/cohort.hpp"
#include "crtmle/pipeline.hpp"

namespace crtmle {

enum class VimKind { Predictive, Prognostic };

struct VimEntry {
  std::string variable;
  std::string subgroup;  // "all" for predictive entries
  double value = 0.0;
};

struct VimReport {
  VimKind kind = VimKind::Predictive;
  std::vector<VimEntry> entries;
  // var(tau) of the full run (predictive) or unused (prognostic).
  double baseline_variance = 0.0;
};

double population_variance(std::span<const double> x);

// |var(tau) - var(tau_-j)| / var(tau) where tau_-j comes from a run
// stratified on the predictive set without `variable`.
double vim_predictive(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                      const std::string& variable);
VimReport vim_predictive(const CohortDataset& data, double t0, const PipelineConfig& cfg);

// psi_m(all) - psi_m(without `variable`), one value per subgroup in subgroup
// order. The variable is dropped from every nuisance design.
std::vector<double> vim_prognostic(const CohortDataset& data, double t0,
                                   const PipelineConfig& cfg, const std::string& variable);
VimReport vim_prognostic(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                         const std::vector<std::string>& variables);

}  // namespace crtmle
