#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crtmle/censoring.hpp"
#include "crtmle/cohort.hpp"
#include "crtmle/design.hpp"
#include "crtmle/detail/risk_set.hpp"

namespace crtmle {

struct FineGrayOptions {
  double l1_penalty = 0.0;
  // Per-column penalty multipliers; empty means 1 everywhere except the
  // treatment main effect, which is left unpenalized.
  std::vector<double> penalty_factors;
  double newton_tol = 1e-8;
  int newton_max_iter = 100;
  double lasso_tol = 1e-6;
  int lasso_max_iter = 20000;
};

// Fine-Gray model: coefficients plus Breslow baseline jumps of the
// subdistribution hazard for the main event.
class SubdistributionModel {
 public:
  SubdistributionModel() = default;
  SubdistributionModel(DesignSpec spec, const std::vector<std::string>& layout,
                       Eigen::VectorXd coefficients, std::vector<double> jump_times,
                       std::vector<double> jumps, int iterations = 0, double l1_penalty = 0.0);

  const DesignSpec& spec() const noexcept { return design_.spec(); }
  const ResolvedDesign& design() const noexcept { return design_; }
  const std::vector<std::string>& layout() const noexcept { return design_.layout(); }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  const std::vector<double>& jump_times() const noexcept { return times_; }
  const std::vector<double>& jumps() const noexcept { return jumps_; }
  int iterations() const noexcept { return iterations_; }
  double l1_penalty() const noexcept { return l1_penalty_; }

  double linear_predictor(int a, std::span<const double> x) const {
    return design_.linear_predictor(coef_, x, a);
  }
  // Lambda_10(t), right-continuous.
  double cumulative_baseline(double t) const;
  // dLambda_10 at exactly t (0 when t is not a jump time).
  double jump_at(double t) const;
  // 1 - exp(-exp(eta) Lambda_10(t)), capped.
  double cif(int a, std::span<const double> x, double t, double cap = 1.0 - 1e-8) const;

 private:
  ResolvedDesign design_;
  Eigen::VectorXd coef_;
  std::vector<double> times_;
  std::vector<double> jumps_;
  std::vector<double> cumulative_;
  int iterations_ = 0;
  double l1_penalty_ = 0.0;
};

double predict_cif(const SubdistributionModel& model, int a, std::span<const double> x, double t,
                   double cap = 1.0 - 1e-8);

// IPCW-weighted Fine-Gray partial likelihood for one dataset and design.
// Competing-event subjects stay in the risk set after their event time with
// weight G(t- | i) / G(T_i- | i).
detail::RiskSetLikelihood fine_gray_likelihood(const CohortDataset& data,
                                               const CensoringModel& cens,
                                               const DesignSpec& spec);

double fine_gray_log_partial_likelihood(const CohortDataset& data, const CensoringModel& cens,
                                        const DesignSpec& spec, const Eigen::VectorXd& beta);

SubdistributionModel fit_fine_gray(const CohortDataset& data, const CensoringModel& cens,
                                   const DesignSpec& spec, const FineGrayOptions& options = {});

// Penalty multipliers used when FineGrayOptions::penalty_factors is empty.
std::vector<double> default_penalty_factors(const DesignSpec& spec);

// Smallest penalty at which every penalized coefficient is zero.
double lambda_max(const CohortDataset& data, const CensoringModel& cens, const DesignSpec& spec,
                  const std::vector<double>& penalty_factors);

struct LambdaSelection {
  std::vector<double> path;  // decreasing
  std::vector<double> cv_score;
  double best = 0.0;
};

// K-fold cross-validation of the weighted partial likelihood over a
// log-spaced path from lambda_max down to ratio * lambda_max. The fold score
// is l_full(beta_-k) - l_train(beta_-k).
LambdaSelection select_lambda_cv(const CohortDataset& data, const CensoringModel& cens,
                                 const DesignSpec& spec, std::uint64_t seed, int folds = 5,
                                 int n_lambda = 20, double ratio = 0.01,
                                 const FineGrayOptions& options = {});

}  // namespace crtmle
