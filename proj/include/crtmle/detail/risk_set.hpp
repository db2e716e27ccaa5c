#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace crtmle::detail {

// Breslow partial likelihood over the distinct event times of a sample.
// The risk set at event time t_k holds every subject with observed time
// >= t_k (weight one) plus "tail" subjects that left before t_k but are kept
// with an explicit weight, as the Fine-Gray risk set keeps competing-event
// subjects with IPCW weights. Without tails this is the Cox partial
// likelihood.
class RiskSetLikelihood {
 public:
  struct Evaluation {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd information;  // negative Hessian, filled on request
    Eigen::VectorXd s0;           // sum of weight * exp(eta) per event time (shifted)
    double shift = 0.0;           // s0 is scaled by exp(-shift)
  };

  // times/is_event/X describe all subjects. tail_weights is K x m, column j
  // belonging to subject tail_rows[j]; entries for event times the subject
  // is still under observation must be zero. Event times are the distinct
  // times of subjects with is_event set.
  RiskSetLikelihood(const std::vector<double>& times, const std::vector<char>& is_event,
                    Eigen::MatrixXd X, Eigen::MatrixXd tail_weights = {},
                    std::vector<std::size_t> tail_rows = {});

  std::size_t num_subjects() const noexcept { return times_.size(); }
  std::size_t num_parameters() const noexcept { return static_cast<std::size_t>(X_.cols()); }
  const std::vector<double>& event_times() const noexcept { return grid_; }
  const Eigen::VectorXd& event_counts() const noexcept { return d_; }

  Evaluation evaluate(const Eigen::VectorXd& beta, bool with_information) const;
  double loglik(const Eigen::VectorXd& beta) const { return evaluate(beta, false).loglik; }
  // Breslow baseline hazard increments at event_times().
  Eigen::VectorXd baseline_jumps(const Eigen::VectorXd& beta) const;

 private:
  std::vector<double> times_;  // sorted
  Eigen::MatrixXd X_;          // rows in sorted order
  std::vector<double> grid_;
  Eigen::VectorXd d_;
  Eigen::VectorXd event_x_sum_;
  std::vector<std::size_t> start_;     // first sorted subject with time >= t_k
  std::vector<std::size_t> grid_le_;   // number of event times <= time of sorted subject
  std::vector<Eigen::Index> event_rows_;
  Eigen::MatrixXd tail_weights_;       // K x m
  Eigen::MatrixXd tail_X_;             // m x p
  std::vector<std::size_t> tail_sorted_;  // sorted position of each tail subject
};

struct NewtonResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  double loglik = 0.0;
};

// Newton-Raphson with step halving on the partial likelihood. Converged when
// max |gradient| < tol. Throws NumericalError on rank deficiency, divergence
// or non-convergence (carrying the last iterate).
NewtonResult maximize_partial_likelihood(const RiskSetLikelihood& problem, double tol,
                                         int max_iter, const char* what);

}  // namespace crtmle::detail
