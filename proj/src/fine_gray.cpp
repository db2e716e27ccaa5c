#include "crtmle/fine_gray.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "crtmle/errors.hpp"

namespace crtmle {

SubdistributionModel::SubdistributionModel(DesignSpec spec, const std::vector<std::string>& layout,
                                           Eigen::VectorXd coefficients,
                                           std::vector<double> jump_times,
                                           std::vector<double> jumps, int iterations,
                                           double l1_penalty)
    : design_(std::move(spec), layout),
      coef_(std::move(coefficients)),
      times_(std::move(jump_times)),
      jumps_(std::move(jumps)),
      iterations_(iterations),
      l1_penalty_(l1_penalty) {
  if (coef_.size() != static_cast<Eigen::Index>(design_.width())) {
    throw DataError("subdistribution model: coefficient count does not match design");
  }
  if (times_.size() != jumps_.size()) {
    throw DataError("subdistribution model: jump times and jumps differ in length");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < jumps_.size(); ++k) {
    if (!(jumps_[k] >= 0.0)) throw DataError("subdistribution model: negative baseline jump");
    if (k > 0 && !(times_[k] > times_[k - 1])) {
      throw DataError("subdistribution model: jump times must be strictly increasing");
    }
    acc += jumps_[k];
    cumulative_.push_back(acc);
  }
}

double SubdistributionModel::cumulative_baseline(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0.0;
  return cumulative_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double SubdistributionModel::jump_at(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end() || *it != t) return 0.0;
  return jumps_[static_cast<std::size_t>(it - times_.begin())];
}

double SubdistributionModel::cif(int a, std::span<const double> x, double t, double cap) const {
  const double lam = cumulative_baseline(t);
  if (lam <= 0.0) return 0.0;
  const double f = -std::expm1(-std::exp(linear_predictor(a, x)) * lam);
  return std::min(f, cap);
}

double predict_cif(const SubdistributionModel& model, int a, std::span<const double> x, double t,
                   double cap) {
  return model.cif(a, x, t, cap);
}

detail::RiskSetLikelihood fine_gray_likelihood(const CohortDataset& data,
                                               const CensoringModel& cens,
                                               const DesignSpec& spec) {
  const std::size_t n = data.size();
  ResolvedDesign design(spec, data.covariate_names());
  const auto p = static_cast<Eigen::Index>(design.width());
  std::vector<double> times(n);
  std::vector<char> is_event(n);
  std::vector<double> grid;
  std::vector<std::size_t> competing;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data[i];
    times[i] = s.time;
    is_event[i] = s.event == EventType::Main;
    if (is_event[i]) grid.push_back(s.time);
    if (s.event == EventType::Competing) competing.push_back(i);
    X.row(static_cast<Eigen::Index>(i)) = design.row(s.covariates, s.treatment).transpose();
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const auto K = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd tails = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(competing.size()));
  if (!competing.empty() && K > 0) {
    IpcwWeights w(data, cens, grid);
    for (std::size_t j = 0; j < competing.size(); ++j) {
      const std::size_t i = competing[j];
      const auto first = static_cast<std::size_t>(
          std::upper_bound(grid.begin(), grid.end(), data[i].time) - grid.begin());
      for (std::size_t k = first; k < grid.size(); ++k) {
        tails(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = w(i, k);
      }
    }
  }
  return detail::RiskSetLikelihood(times, is_event, std::move(X), std::move(tails),
                                   std::move(competing));
}

double fine_gray_log_partial_likelihood(const CohortDataset& data, const CensoringModel& cens,
                                        const DesignSpec& spec, const Eigen::VectorXd& beta) {
  return fine_gray_likelihood(data, cens, spec).loglik(beta);
}

std::vector<double> default_penalty_factors(const DesignSpec& spec) {
  std::vector<double> pf(spec.width(), 1.0);
  if (spec.treatment) pf[spec.treatment_column()] = 0.0;
  return pf;
}

namespace {

// Newton-Raphson over the coordinates in `free`; the others stay at zero.
Eigen::VectorXd maximize_on_subset(const detail::RiskSetLikelihood& problem,
                                   const std::vector<Eigen::Index>& free, double tol, int max_iter) {
  const auto p = static_cast<Eigen::Index>(problem.num_parameters());
  const auto q = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (q == 0) return beta;
  auto ev = problem.evaluate(beta, true);
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd g(q);
    Eigen::MatrixXd info(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      g[a] = ev.gradient[free[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < q; ++b) {
        info(a, b) = ev.information(free[static_cast<std::size_t>(a)],
                                    free[static_cast<std::size_t>(b)]);
      }
    }
    if (g.cwiseAbs().maxCoeff() < tol) return beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
      throw NumericalError("Fine-Gray model: singular information for unpenalized columns", beta,
                           iter);
    }
    Eigen::VectorXd step = ldlt.solve(g);
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      Eigen::VectorXd cand = beta;
      for (Eigen::Index a = 0; a < q; ++a) cand[free[static_cast<std::size_t>(a)]] += scale * step[a];
      auto ev_new = problem.evaluate(cand, true);
      if (ev_new.loglik >= ev.loglik - 1e-12 * (1.0 + std::abs(ev.loglik))) {
        beta = std::move(cand);
        ev = std::move(ev_new);
        break;
      }
      scale *= 0.5;
    }
  }
  return beta;
}

struct ProximalResult {
  Eigen::VectorXd beta;
  int iterations = 0;
};

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Proximal gradient (ISTA) with backtracking on -l(beta)/n + lambda sum pf_j |beta_j|.
ProximalResult proximal_gradient(const detail::RiskSetLikelihood& problem, double lambda,
                                 const std::vector<double>& pf, Eigen::VectorXd beta, double tol,
                                 int max_iter) {
  const double n = static_cast<double>(problem.num_subjects());
  const Eigen::Index p = beta.size();
  auto ev = problem.evaluate(beta, false);
  double f = -ev.loglik / n;
  Eigen::VectorXd g = -ev.gradient / n;
  double step = 1.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd next(p);
    double f_next = 0.0;
    Eigen::VectorXd diff;
    detail::RiskSetLikelihood::Evaluation ev_next;
    for (int bt = 0;; ++bt) {
      for (Eigen::Index j = 0; j < p; ++j) {
        next[j] = soft_threshold(beta[j] - step * g[j],
                                 step * lambda * pf[static_cast<std::size_t>(j)]);
      }
      ev_next = problem.evaluate(next, false);
      f_next = -ev_next.loglik / n;
      diff = next - beta;
      const double bound = f + g.dot(diff) + diff.squaredNorm() / (2.0 * step);
      if (std::isfinite(f_next) && f_next <= bound + 1e-14 * (1.0 + std::abs(f))) break;
      step *= 0.5;
      if (bt > 60) {
        throw NumericalError("penalized Fine-Gray model: backtracking failed", beta, iter);
      }
    }
    beta = std::move(next);
    f = f_next;
    g = -ev_next.gradient / n;
    if (diff.cwiseAbs().maxCoeff() < tol) return {beta, iter};
    step = std::min(step * 2.0, 1e4);
  }
  throw NumericalError("penalized Fine-Gray model did not converge", beta, max_iter);
}

std::vector<double> resolve_penalty(const DesignSpec& spec, const FineGrayOptions& options) {
  std::vector<double> pf =
      options.penalty_factors.empty() ? default_penalty_factors(spec) : options.penalty_factors;
  if (pf.size() != spec.width()) throw DataError("penalty factor count does not match design");
  for (double v : pf) {
    if (!(v >= 0.0)) throw DataError("penalty factors must be non-negative");
  }
  return pf;
}

std::vector<Eigen::Index> unpenalized_columns(const std::vector<double>& pf) {
  std::vector<Eigen::Index> out;
  for (std::size_t j = 0; j < pf.size(); ++j) {
    if (pf[j] == 0.0) out.push_back(static_cast<Eigen::Index>(j));
  }
  return out;
}

void require_main_event(const CohortDataset& data) {
  for (const auto& s : data.subjects()) {
    if (s.event == EventType::Main) return;
  }
  throw DataError("Fine-Gray model needs at least one main event");
}

SubdistributionModel finish(const detail::RiskSetLikelihood& problem, const CohortDataset& data,
                            const DesignSpec& spec, Eigen::VectorXd beta, int iterations,
                            double lambda) {
  Eigen::VectorXd jumps = problem.baseline_jumps(beta);
  std::vector<double> j(jumps.data(), jumps.data() + jumps.size());
  return SubdistributionModel(spec, data.covariate_names(), std::move(beta),
                              problem.event_times(), std::move(j), iterations, lambda);
}

}  // namespace

SubdistributionModel fit_fine_gray(const CohortDataset& data, const CensoringModel& cens,
                                   const DesignSpec& spec, const FineGrayOptions& options) {
  require_main_event(data);
  if (options.l1_penalty < 0.0) throw DataError("l1 penalty must be non-negative");
  auto problem = fine_gray_likelihood(data, cens, spec);
  if (options.l1_penalty == 0.0) {
    auto fit = detail::maximize_partial_likelihood(problem, options.newton_tol,
                                                   options.newton_max_iter, "Fine-Gray model");
    return finish(problem, data, spec, std::move(fit.beta), fit.iterations, 0.0);
  }
  const auto pf = resolve_penalty(spec, options);
  Eigen::VectorXd start =
      maximize_on_subset(problem, unpenalized_columns(pf), options.newton_tol,
                         options.newton_max_iter);
  auto fit = proximal_gradient(problem, options.l1_penalty, pf, std::move(start),
                               options.lasso_tol, options.lasso_max_iter);
  return finish(problem, data, spec, std::move(fit.beta), fit.iterations, options.l1_penalty);
}

double lambda_max(const CohortDataset& data, const CensoringModel& cens, const DesignSpec& spec,
                  const std::vector<double>& penalty_factors) {
  require_main_event(data);
  auto problem = fine_gray_likelihood(data, cens, spec);
  Eigen::VectorXd beta =
      maximize_on_subset(problem, unpenalized_columns(penalty_factors), 1e-8, 100);
  Eigen::VectorXd g = problem.evaluate(beta, false).gradient / static_cast<double>(data.size());
  double out = 0.0;
  for (std::size_t j = 0; j < penalty_factors.size(); ++j) {
    if (penalty_factors[j] > 0.0) {
      out = std::max(out, std::abs(g[static_cast<Eigen::Index>(j)]) / penalty_factors[j]);
    }
  }
  return out;
}

LambdaSelection select_lambda_cv(const CohortDataset& data, const CensoringModel& cens,
                                 const DesignSpec& spec, std::uint64_t seed, int folds,
                                 int n_lambda, double ratio, const FineGrayOptions& options) {
  if (folds < 2) throw DataError("cross-validation needs at least 2 folds");
  if (n_lambda < 1) throw DataError("lambda path needs at least one value");
  const auto pf = resolve_penalty(spec, options);
  const double top = lambda_max(data, cens, spec, pf);

  LambdaSelection sel;
  for (int l = 0; l < n_lambda; ++l) {
    const double frac = n_lambda == 1 ? 0.0 : static_cast<double>(l) / (n_lambda - 1);
    sel.path.push_back(top * std::pow(ratio, frac));
  }
  sel.cv_score.assign(sel.path.size(), 0.0);
  if (top == 0.0) {
    sel.best = 0.0;
    return sel;
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto full = fine_gray_likelihood(data, cens, spec);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (static_cast<int>(r % static_cast<std::size_t>(folds)) != f) train.push_back(order[r]);
    }
    std::sort(train.begin(), train.end());
    CohortDataset train_data = data.subset(train);
    bool has_event = false;
    for (const auto& s : train_data.subjects()) has_event |= s.event == EventType::Main;
    if (!has_event) continue;
    const auto problem = fine_gray_likelihood(train_data, cens, spec);
    Eigen::VectorXd beta = maximize_on_subset(problem, unpenalized_columns(pf),
                                              options.newton_tol, options.newton_max_iter);
    for (std::size_t l = 0; l < sel.path.size(); ++l) {
      beta = proximal_gradient(problem, sel.path[l], pf, beta, options.lasso_tol,
                               options.lasso_max_iter)
                 .beta;
      sel.cv_score[l] += full.loglik(beta) - problem.loglik(beta);
    }
  }
  const auto best = std::max_element(sel.cv_score.begin(), sel.cv_score.end());
  sel.best = sel.path[static_cast<std::size_t>(best - sel.cv_score.begin())];
  return sel;
}

}  // namespace crtmle
