#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crtmle/cohort.hpp"
#include "crtmle/truncation.hpp"

namespace crtmle {

// Logistic model for Pr(A = 1 | L). Coefficients are (intercept, slopes...)
// in the order of `covariates`.
class PropensityModel {
 public:
  PropensityModel() = default;
  PropensityModel(std::vector<std::string> covariates, const std::vector<std::string>& layout,
                  Eigen::VectorXd coefficients, double lo, double hi, int iterations = 0);

  const std::vector<std::string>& covariates() const noexcept { return covariates_; }
  const std::vector<std::string>& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  double lower_bound() const noexcept { return lo_; }
  double upper_bound() const noexcept { return hi_; }
  int iterations() const noexcept { return iterations_; }

  // Truncated Pr(A = 1 | x).
  double prob_treated(std::span<const double> x) const;
  // Truncated Pr(A = a | x); the two arms sum to one.
  double prob(int a, std::span<const double> x) const;

 private:
  std::vector<std::string> covariates_;
  std::vector<std::string> layout_;
  std::vector<std::size_t> idx_;
  Eigen::VectorXd coef_;
  double lo_ = 0.01;
  double hi_ = 0.99;
  int iterations_ = 0;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  int iterations = 0;
};

// Newton-Raphson maximum likelihood for a logistic regression with design X
// (no implicit intercept) and 0/1 response. Stops when max |score| < tol.
// Throws NumericalError on separation, singular information or
// non-convergence.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tol = 1e-8,
                         int max_iter = 100);

PropensityModel fit_propensity(const CohortDataset& data,
                               const std::vector<std::string>& covariates,
                               const Truncation& trunc = {});

}  // namespace crtmle
