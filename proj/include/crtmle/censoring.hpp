#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crtmle/cohort.hpp"
#include "crtmle/design.hpp"
#include "crtmle/truncation.hpp"

namespace crtmle {

enum class CensoringKind { KaplanMeier, CoxPH };

// Censoring survival G(t | a, x) = Pr(C > t | A = a, X = x). Kaplan-Meier is
// marginal; the Cox model has design `spec` (no interactions). All
// evaluations are floored.
class CensoringModel {
 public:
  CensoringModel() = default;
  // KM: `baseline` holds survival values after each jump time. Cox: it holds
  // the cumulative baseline hazard after each jump time.
  CensoringModel(CensoringKind kind, DesignSpec spec, const std::vector<std::string>& layout,
                 std::vector<double> jump_times, std::vector<double> baseline,
                 Eigen::VectorXd coefficients, double floor, int iterations = 0);

  CensoringKind kind() const noexcept { return kind_; }
  const DesignSpec& spec() const noexcept { return design_.spec(); }
  const std::vector<std::string>& layout() const noexcept { return design_.layout(); }
  const std::vector<double>& jump_times() const noexcept { return times_; }
  const std::vector<double>& baseline() const noexcept { return baseline_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  double floor() const noexcept { return floor_; }
  int iterations() const noexcept { return iterations_; }

  double survival(double t, int a, std::span<const double> x) const;
  // Left limit G(t-).
  double survival_before(double t, int a, std::span<const double> x) const;

  // Split evaluation for repeated use on one subject: G = combine(level, rr)
  // with level = baseline_level(t) and rr = relative_risk(a, x).
  double baseline_level(double t, bool left_limit) const;
  double relative_risk(int a, std::span<const double> x) const;
  double combine(double level, double rr) const;

 private:
  CensoringKind kind_ = CensoringKind::KaplanMeier;
  ResolvedDesign design_;
  std::vector<double> times_;
  std::vector<double> baseline_;
  Eigen::VectorXd coef_;
  double floor_ = 0.05;
  int iterations_ = 0;
};

// KM: product-limit estimate with censoring (event code 0) as the event and
// risk set {observed time >= t}. Cox: partial likelihood with Breslow
// baseline, design = covariates (+ treatment when include_treatment).
CensoringModel fit_censoring(const CohortDataset& data, CensoringKind kind,
                             const std::vector<std::string>& covariates,
                             bool include_treatment = true, const Truncation& trunc = {});

// IPCW weights w_i(t) = 1(C_i >= T_i ^ t) G(t- | i) / G((T_i ^ t)- | i) on a
// fixed set of time points.
class IpcwWeights {
 public:
  IpcwWeights() = default;
  IpcwWeights(const CohortDataset& data, const CensoringModel& cens, std::vector<double> times);

  std::size_t num_subjects() const noexcept { return obs_time_.size(); }
  std::size_t num_times() const noexcept { return times_.size(); }
  const std::vector<double>& times() const noexcept { return times_; }

  double operator()(std::size_t i, std::size_t k) const;
  // G(t_k- | A_i, X_i), floored.
  double censoring_before(std::size_t i, std::size_t k) const;

 private:
  std::vector<double> times_;
  std::vector<double> level_;  // baseline level just before each time
  std::vector<double> rr_;
  std::vector<double> obs_time_;
  std::vector<EventType> event_;
  std::vector<double> g_at_obs_;  // G(T_i- | i)
  CensoringKind kind_ = CensoringKind::KaplanMeier;
  double floor_ = 0.05;
};

IpcwWeights compute_ipcw(const CohortDataset& data, const CensoringModel& cens,
                         const TimeGrid& grid);

}  // namespace crtmle
