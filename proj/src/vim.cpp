#include "crtmle/vim.hpp"

#include <algorithm>
#include <cmath>

#include "crtmle/errors.hpp"

namespace crtmle {

double population_variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size());
}

namespace {

double effect_variance(const CohortDataset& data, double t0, const PipelineConfig& cfg) {
  const auto fits = run_tmle(data, t0, cfg);
  const auto tau = individual_effects(data, fits);
  return population_variance(tau);
}

std::vector<std::string> without_name(std::vector<std::string> names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DataError("'" + name + "' is not a predictive variable");
  names.erase(it);
  return names;
}

double relative_change(double full, double reduced) {
  if (!(full > 0.0)) throw NumericalError("no heterogeneity: var(tau) is zero");
  return std::abs(full - reduced) / full;
}

}  // namespace

double vim_predictive(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                      const std::string& variable) {
  const auto names = data.predictive_names();
  if (names.size() < 2) throw DataError("predictive importance needs at least 2 predictive variables");
  const double full = effect_variance(data, t0, cfg);
  const auto reduced_names = without_name(names, variable);
  const double reduced = effect_variance(data.with_predictive(reduced_names), t0, cfg);
  return relative_change(full, reduced);
}

VimReport vim_predictive(const CohortDataset& data, double t0, const PipelineConfig& cfg) {
  const auto names = data.predictive_names();
  if (names.size() < 2) throw DataError("predictive importance needs at least 2 predictive variables");
  VimReport rep;
  rep.kind = VimKind::Predictive;
  rep.baseline_variance = effect_variance(data, t0, cfg);
  for (const auto& v : names) {
    const double reduced = effect_variance(data.with_predictive(without_name(names, v)), t0, cfg);
    rep.entries.push_back({v, "all", relative_change(rep.baseline_variance, reduced)});
  }
  return rep;
}

namespace {

std::vector<double> subgroup_psi(const CohortDataset& data, double t0, const PipelineConfig& cfg) {
  std::vector<double> out;
  for (const auto& f : run_tmle(data, t0, cfg)) out.push_back(f.estimate.psi_hat);
  return out;
}

std::vector<double> difference(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t m = 0; m < a.size(); ++m) out[m] = a[m] - b[m];
  return out;
}

}  // namespace

std::vector<double> vim_prognostic(const CohortDataset& data, double t0,
                                   const PipelineConfig& cfg, const std::string& variable) {
  data.covariate_index(variable);
  PipelineConfig reduced = cfg;
  reduced.designs = cfg.designs.without(variable);
  return difference(subgroup_psi(data, t0, cfg), subgroup_psi(data, t0, reduced));
}

VimReport vim_prognostic(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                         const std::vector<std::string>& variables) {
  VimReport rep;
  rep.kind = VimKind::Prognostic;
  const auto full = subgroup_psi(data, t0, cfg);
  for (const auto& v : variables) {
    data.covariate_index(v);
    PipelineConfig reduced = cfg;
    reduced.designs = cfg.designs.without(v);
    const auto diff = difference(full, subgroup_psi(data, t0, reduced));
    for (std::size_t m = 0; m < diff.size(); ++m) {
      rep.entries.push_back({v, data.subgroup_label(data.subgroups()[m]), diff[m]});
    }
  }
  return rep;
}

}  // namespace crtmle
