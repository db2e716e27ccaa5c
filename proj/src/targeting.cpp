#include "crtmle/targeting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "crtmle/errors.hpp"

namespace crtmle {

TargetingProblem make_targeting_problem(const CohortDataset& subgroup,
                                        const PropensityModel& propensity,
                                        const CensoringModel& censoring, double t0,
                                        const Truncation& trunc) {
  if (subgroup.empty()) throw DataError("targeting: empty subgroup");
  if (!(t0 > 0.0)) throw DataError("targeting: horizon must be positive");
  TargetingProblem pr;
  pr.grid = TimeGrid::from_main_events(subgroup, t0);
  pr.cif_cap = trunc.cif_cap;
  const std::size_t n = subgroup.size();
  const std::size_t K = pr.grid.horizon_index();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(K);
  std::vector<double> times(pr.grid.times().begin(), pr.grid.times().begin() + cols);

  IpcwWeights w(subgroup, censoring, times);
  pr.treatment.resize(n);
  pr.event_index.assign(n, -1);
  pr.at_risk.resize(rows, cols);
  pr.weight.resize(rows, cols);
  pr.inverse_weight[0].resize(rows, cols);
  pr.inverse_weight[1].resize(rows, cols);

  std::vector<double> level(K);
  for (std::size_t k = 0; k < K; ++k) level[k] = censoring.baseline_level(times[k], true);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = subgroup[i];
    const auto r = static_cast<Eigen::Index>(i);
    pr.treatment[i] = s.treatment;
    if (s.event == EventType::Main && s.time <= t0) {
      pr.event_index[i] = static_cast<int>(pr.grid.find(s.time));
    }
    const double p1 = propensity.prob_treated(s.covariates);
    const std::array<double, 2> pi{1.0 - p1, p1};
    const std::array<double, 2> rr{censoring.relative_risk(0, s.covariates),
                                   censoring.relative_risk(1, s.covariates)};
    for (std::size_t k = 0; k < K; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      pr.at_risk(r, c) = at_risk_y(s, times[k]);
      pr.weight(r, c) = w(i, k);
      for (int a = 0; a < 2; ++a) {
        const double g = censoring.combine(level[k], rr[static_cast<std::size_t>(a)]);
        pr.inverse_weight[static_cast<std::size_t>(a)](r, c) =
            1.0 / (pi[static_cast<std::size_t>(a)] * g);
      }
    }
  }
  return pr;
}

TargetingState make_state(std::array<Eigen::MatrixXd, 2> hazard, double cap) {
  TargetingState st;
  for (std::size_t a = 0; a < 2; ++a) {
    const Eigen::MatrixXd& h = hazard[a];
    Eigen::MatrixXd f(h.rows(), h.cols());
    Eigen::VectorXd cum = Eigen::VectorXd::Zero(h.rows());
    for (Eigen::Index k = 0; k < h.cols(); ++k) {
      cum += h.col(k);
      f.col(k) = cum.unaryExpr([cap](double c) { return std::min(cap, -std::expm1(-c)); });
    }
    st.cif[a] = std::move(f);
  }
  st.hazard = std::move(hazard);
  return st;
}

namespace {

Eigen::MatrixXd model_hazard(const TargetingProblem& problem, const CohortDataset& subgroup,
                             const SubdistributionModel& model, int a) {
  const std::size_t n = subgroup.size();
  const std::size_t K = problem.num_times();
  Eigen::VectorXd jumps(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    jumps[static_cast<Eigen::Index>(k)] = model.jump_at(problem.grid[k]);
  }
  Eigen::VectorXd rr(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    rr[static_cast<Eigen::Index>(i)] = std::exp(model.linear_predictor(a, subgroup[i].covariates));
  }
  return rr * jumps.transpose();
}

}  // namespace

TargetingState initial_state(const TargetingProblem& problem, const CohortDataset& subgroup,
                             const SubdistributionModel& model) {
  return initial_state(problem, subgroup, model, model);
}

TargetingState initial_state(const TargetingProblem& problem, const CohortDataset& subgroup,
                             const SubdistributionModel& model0,
                             const SubdistributionModel& model1) {
  if (subgroup.size() != problem.num_subjects()) {
    throw DataError("initial state: subgroup does not match targeting problem");
  }
  return make_state({model_hazard(problem, subgroup, model0, 0),
                     model_hazard(problem, subgroup, model1, 1)},
                    problem.cif_cap);
}

double clever_covariate(double pi, double g_before, double cif_t0, double cif_t, int a) {
  const double sign = a == 1 ? 1.0 : -1.0;
  return sign / (pi * g_before) * (1.0 - cif_t0) / (1.0 - cif_t);
}

double clever_covariate(const TargetingProblem& problem, const TargetingState& state,
                        std::size_t i, int a, std::size_t k) {
  const auto r = static_cast<Eigen::Index>(i);
  const auto au = static_cast<std::size_t>(a);
  const double sign = a == 1 ? 1.0 : -1.0;
  return sign * problem.inverse_weight[au](r, static_cast<Eigen::Index>(k)) *
         (1.0 - state.cif_at_horizon(a, i)) /
         (1.0 - state.cif[au](r, static_cast<Eigen::Index>(k)));
}

namespace {

// Clever covariate matrix for arm a.
Eigen::MatrixXd clever_matrix(const TargetingProblem& problem, const TargetingState& state,
                              int a) {
  const auto au = static_cast<std::size_t>(a);
  const Eigen::MatrixXd& f = state.cif[au];
  const Eigen::Index K = f.cols();
  Eigen::MatrixXd h(f.rows(), K);
  if (K == 0) return h;
  const double sign = a == 1 ? 1.0 : -1.0;
  Eigen::ArrayXd num = sign * (1.0 - f.col(K - 1).array());
  h = problem.inverse_weight[au].array().colwise() * num;
  h.array() /= (1.0 - f.array());
  return h;
}

// Score pieces at the observed arm: score(eps) = event - sum c h exp(eps h).
struct ScoreTerms {
  double event = 0.0;
  std::vector<double> c;
  std::vector<double> h;

  double value(double eps) const {
    double s = event;
    for (std::size_t j = 0; j < c.size(); ++j) s -= c[j] * h[j] * std::exp(eps * h[j]);
    return s;
  }
  double derivative(double eps) const {
    double d = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) d -= c[j] * h[j] * h[j] * std::exp(eps * h[j]);
    return d;
  }
};

ScoreTerms score_terms(const TargetingProblem& problem, const TargetingState& state) {
  ScoreTerms t;
  const std::array<Eigen::MatrixXd, 2> h{clever_matrix(problem, state, 0),
                                         clever_matrix(problem, state, 1)};
  const auto K = static_cast<Eigen::Index>(problem.num_times());
  for (std::size_t i = 0; i < problem.num_subjects(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto a = static_cast<std::size_t>(problem.treatment[i]);
    if (problem.event_index[i] >= 0) {
      const auto k = static_cast<Eigen::Index>(problem.event_index[i]);
      t.event += problem.weight(r, k) * h[a](r, k);
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      const double c = problem.weight(r, k) * problem.at_risk(r, k) * state.hazard[a](r, k);
      if (c > 0.0 && h[a](r, k) != 0.0) {
        t.c.push_back(c);
        t.h.push_back(h[a](r, k));
      }
    }
  }
  return t;
}

}  // namespace

double score_at_epsilon(const TargetingProblem& problem, const TargetingState& state,
                        double epsilon) {
  return score_terms(problem, state).value(epsilon);
}

double solve_epsilon(const TargetingProblem& problem, const TargetingState& state) {
  const ScoreTerms terms = score_terms(problem, state);
  constexpr double kTol = 1e-10;
  const double s0 = terms.value(0.0);
  if (s0 == 0.0) return 0.0;
  if (std::abs(s0) < kTol) return 0.0;

  // The score is decreasing, so the root lies on the side of sign(s0).
  const double dir = s0 > 0.0 ? 1.0 : -1.0;
  double lo = 0.0;
  double hi = 0.0;
  double s_hi = s0;
  for (double B = 1.0; B <= 64.0; B *= 2.0) {
    hi = dir * B;
    s_hi = terms.value(hi);
    if (s_hi * dir <= 0.0) break;
    lo = hi;
  }
  if (s_hi * dir > 0.0) throw NumericalError("epsilon unbounded");
  if (s_hi == 0.0) return hi;

  // Safeguarded Newton on the bracket [lo, hi] (in the direction dir).
  double x = lo;
  double sx = terms.value(x);
  for (int it = 0; it < 500; ++it) {
    if (std::abs(sx) < kTol) return x;
    const double d = terms.derivative(x);
    double next = x - sx / d;
    const double a = std::min(lo, hi);
    const double b = std::max(lo, hi);
    if (!std::isfinite(next) || next <= a || next >= b) next = 0.5 * (lo + hi);
    const double s_next = terms.value(next);
    if (s_next * dir > 0.0) {
      lo = next;
    } else {
      hi = next;
    }
    x = next;
    sx = s_next;
    const double width = std::abs(hi - lo);
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      // Bracket collapsed to adjacent doubles; the score cannot get closer to 0.
      return x;
    }
  }
  return x;
}

TargetingState apply_fluctuation(const TargetingProblem& problem, const TargetingState& state,
                                 double epsilon) {
  if (!std::isfinite(epsilon)) throw NumericalError("fluctuation with non-finite epsilon");
  std::array<Eigen::MatrixXd, 2> haz = state.hazard;
  if (epsilon != 0.0) {
    for (int a = 0; a < 2; ++a) {
      const Eigen::MatrixXd h = clever_matrix(problem, state, a);
      haz[static_cast<std::size_t>(a)].array() *= (epsilon * h.array()).exp();
    }
  }
  TargetingState next = make_state(std::move(haz), problem.cif_cap);
  next.iteration = state.iteration + 1;
  next.last_epsilon = epsilon;
  return next;
}

EifTerms eif_terms(const TargetingProblem& problem, const TargetingState& state) {
  const std::size_t n = problem.num_subjects();
  const auto K = static_cast<Eigen::Index>(problem.num_times());
  const std::array<Eigen::MatrixXd, 2> h{clever_matrix(problem, state, 0),
                                         clever_matrix(problem, state, 1)};
  EifTerms out;
  out.martingale = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  out.difference.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto a = static_cast<std::size_t>(problem.treatment[i]);
    double m = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double dn = problem.event_index[i] == k ? 1.0 : 0.0;
      m += problem.weight(r, k) * h[a](r, k) *
           (dn - problem.at_risk(r, k) * state.hazard[a](r, k));
    }
    out.martingale[r] = m;
    out.difference[r] = state.cif_at_horizon(1, i) - state.cif_at_horizon(0, i);
  }
  out.psi = n == 0 ? 0.0 : out.difference.mean();
  out.eif = out.martingale + out.difference;
  out.eif.array() -= out.psi;
  // The martingale mean is only solved to the targeting tolerance.
  if (n > 0) out.eif.array() -= out.eif.mean();
  return out;
}

TargetingState target(const TargetingProblem& problem, TargetingState state,
                      const TargetingOptions& options) {
  const double n = static_cast<double>(problem.num_subjects());
  const double eif_bound = 10.0 * options.s_n / std::sqrt(n);
  state.converged = false;
  double prev_abs = INFINITY;
  int stalled = 0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    double eps = 0.0;
    try {
      eps = solve_epsilon(problem, state);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at targeting iteration " +
                               std::to_string(iter),
                           e.last_iterate(), iter);
    }
    state = apply_fluctuation(problem, state, eps);
    const double abs_eps = std::abs(eps);
    if (abs_eps <= options.s_n) {
      const double mart_mean = score_at_epsilon(problem, state, 0.0) / n;
      if (std::abs(mart_mean) <= eif_bound) {
        state.converged = true;
        break;
      }
    }
    stalled = abs_eps >= prev_abs ? stalled + 1 : 0;
    if (stalled >= options.stall_limit) break;
    prev_abs = abs_eps;
  }
  return state;
}

double wald_p_value(double psi, double se) {
  if (se <= 0.0) return psi == 0.0 ? 1.0 : 0.0;
  return std::erfc(std::abs(psi / se) / std::sqrt(2.0));
}

CateEstimate estimate_cate(const TargetingProblem& problem, const TargetingState& state,
                           double t0, const SubgroupKey& subgroup, std::string label) {
  const std::size_t n = problem.num_subjects();
  if (n == 0) throw DataError("estimate_cate: empty subgroup");
  const EifTerms eif = eif_terms(problem, state);
  CateEstimate est;
  est.subgroup = subgroup;
  est.label = std::move(label);
  est.horizon = t0;
  est.psi_hat = std::clamp(eif.psi, -1.0, 1.0);
  const double sigma2 = eif.eif.squaredNorm() / static_cast<double>(n);
  est.se = std::sqrt(sigma2 / static_cast<double>(n));
  est.ci_lo = est.psi_hat - kNormalQuantile975 * est.se;
  est.ci_hi = est.psi_hat + kNormalQuantile975 * est.se;
  est.p_value = wald_p_value(est.psi_hat, est.se);
  est.n_subgroup = n;
  est.iterations = state.iteration;
  est.converged = state.converged;
  return est;
}

}  // namespace crtmle
