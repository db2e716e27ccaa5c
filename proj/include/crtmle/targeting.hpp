#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "crtmle/censoring.hpp"
#include "crtmle/cohort.hpp"
#include "crtmle/fine_gray.hpp"
#include "crtmle/propensity.hpp"
#include "crtmle/truncation.hpp"

namespace crtmle {

// Observed-data quantities of one subgroup on the grid of main-event times
// up to the horizon (K0 = grid.horizon_index() columns). Rows are subjects.
struct TargetingProblem {
  TimeGrid grid;
  std::vector<int> treatment;
  std::vector<int> event_index;  // grid column of the subject's main event, or -1
  Eigen::MatrixXd at_risk;       // Y_i(t_k)
  Eigen::MatrixXd weight;        // w_i(t_k)
  // 1 / (pi(a | L_i) G(t_k- | a, L_i)) for a = 0, 1.
  std::array<Eigen::MatrixXd, 2> inverse_weight;
  double cif_cap = 1.0 - 1e-8;

  std::size_t num_subjects() const noexcept { return treatment.size(); }
  std::size_t num_times() const noexcept { return grid.horizon_index(); }
};

TargetingProblem make_targeting_problem(const CohortDataset& subgroup,
                                        const PropensityModel& propensity,
                                        const CensoringModel& censoring, double t0,
                                        const Truncation& trunc = {});

// Per-subject, per-arm hazard increments and CIF on the problem's grid.
struct TargetingState {
  std::array<Eigen::MatrixXd, 2> hazard;
  std::array<Eigen::MatrixXd, 2> cif;
  int iteration = 0;
  double last_epsilon = 0.0;
  bool converged = false;

  // F(t0 | a, L_i); zero when no grid time precedes t0.
  double cif_at_horizon(int a, std::size_t i) const {
    const Eigen::Index K = cif[static_cast<std::size_t>(a)].cols();
    return K == 0 ? 0.0 : cif[static_cast<std::size_t>(a)](static_cast<Eigen::Index>(i), K - 1);
  }
};

// Builds the CIF from hazard increments (1 - exp(-cumsum), capped).
TargetingState make_state(std::array<Eigen::MatrixXd, 2> hazard, double cap);

// Initial hazards from a pooled model (both arms from one fit).
TargetingState initial_state(const TargetingProblem& problem, const CohortDataset& subgroup,
                             const SubdistributionModel& model);
// Initial hazards from per-arm models.
TargetingState initial_state(const TargetingProblem& problem, const CohortDataset& subgroup,
                             const SubdistributionModel& model0,
                             const SubdistributionModel& model1);

// h(t_k, a, L_i).
double clever_covariate(const TargetingProblem& problem, const TargetingState& state,
                        std::size_t i, int a, std::size_t k);
double clever_covariate(double pi, double g_before, double cif_t0, double cif_t, int a);

// Score of the fluctuation model at epsilon, observed arms only.
double score_at_epsilon(const TargetingProblem& problem, const TargetingState& state,
                        double epsilon);

// Root of the score in epsilon. Throws NumericalError("epsilon unbounded")
// when the score does not change sign on [-64, 64].
double solve_epsilon(const TargetingProblem& problem, const TargetingState& state);

TargetingState apply_fluctuation(const TargetingProblem& problem, const TargetingState& state,
                                 double epsilon);

struct TargetingOptions {
  double s_n = 1e-3;
  int max_iter = 20;
  int stall_limit = 3;
};

TargetingState target(const TargetingProblem& problem, TargetingState state,
                      const TargetingOptions& options = {});

struct EifTerms {
  Eigen::VectorXd martingale;  // sum_k w h (dN - Y dLambda) at the observed arm
  Eigen::VectorXd difference;  // F(t0|1) - F(t0|0)
  Eigen::VectorXd eif;         // martingale + difference - psi, centred
  double psi = 0.0;
};

EifTerms eif_terms(const TargetingProblem& problem, const TargetingState& state);

struct CateEstimate {
  SubgroupKey subgroup;
  std::string label;
  double horizon = 0.0;
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  std::size_t n_subgroup = 0;
  int iterations = 0;
  bool converged = false;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

// Two-sided normal p-value for psi / se.
double wald_p_value(double psi, double se);

CateEstimate estimate_cate(const TargetingProblem& problem, const TargetingState& state,
                           double t0, const SubgroupKey& subgroup, std::string label = {});

}  // namespace crtmle
