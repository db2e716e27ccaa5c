#include "crtmle/detail/risk_set.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "crtmle/errors.hpp"

namespace crtmle::detail {

namespace {
// Coefficients this large on the log-hazard scale signal a monotone
// likelihood (no finite maximizer).
constexpr double kDivergenceBound = 50.0;
}  // namespace

RiskSetLikelihood::RiskSetLikelihood(const std::vector<double>& times,
                                     const std::vector<char>& is_event, Eigen::MatrixXd X,
                                     Eigen::MatrixXd tail_weights,
                                     std::vector<std::size_t> tail_rows) {
  const std::size_t n = times.size();
  const Eigen::Index p = X.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<std::size_t> rank(n);
  times_.resize(n);
  X_.resize(static_cast<Eigen::Index>(n), p);
  for (std::size_t r = 0; r < n; ++r) {
    rank[order[r]] = r;
    times_[r] = times[order[r]];
    X_.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(order[r]));
  }

  event_x_sum_ = Eigen::VectorXd::Zero(p);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    if (!is_event[i]) continue;
    if (grid_.empty() || grid_.back() != times_[r]) grid_.push_back(times_[r]);
    event_rows_.push_back(static_cast<Eigen::Index>(r));
    event_x_sum_ += X_.row(static_cast<Eigen::Index>(r)).transpose();
  }
  const std::size_t K = grid_.size();
  d_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  for (Eigen::Index r : event_rows_) {
    auto k = std::lower_bound(grid_.begin(), grid_.end(), times_[static_cast<std::size_t>(r)]) -
             grid_.begin();
    d_[k] += 1.0;
  }
  start_.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    start_[k] = static_cast<std::size_t>(
        std::lower_bound(times_.begin(), times_.end(), grid_[k]) - times_.begin());
  }
  grid_le_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    grid_le_[r] = static_cast<std::size_t>(
        std::upper_bound(grid_.begin(), grid_.end(), times_[r]) - grid_.begin());
  }

  if (!tail_rows.empty()) {
    if (tail_weights.rows() != static_cast<Eigen::Index>(K) ||
        tail_weights.cols() != static_cast<Eigen::Index>(tail_rows.size())) {
      throw DataError("risk-set tail weight matrix has the wrong shape");
    }
    tail_weights_ = std::move(tail_weights);
    tail_X_.resize(static_cast<Eigen::Index>(tail_rows.size()), p);
    for (std::size_t j = 0; j < tail_rows.size(); ++j) {
      tail_sorted_.push_back(rank[tail_rows[j]]);
      tail_X_.row(static_cast<Eigen::Index>(j)) = X.row(static_cast<Eigen::Index>(tail_rows[j]));
    }
  }
}

RiskSetLikelihood::Evaluation RiskSetLikelihood::evaluate(const Eigen::VectorXd& beta,
                                                          bool with_information) const {
  const auto n = static_cast<Eigen::Index>(times_.size());
  const Eigen::Index p = X_.cols();
  const auto K = static_cast<Eigen::Index>(grid_.size());
  Evaluation ev;

  Eigen::VectorXd eta = X_ * beta;
  ev.shift = n > 0 ? eta.maxCoeff() : 0.0;
  Eigen::VectorXd e = (eta.array() - ev.shift).exp().matrix();

  // Reverse cumulative sums over the time-sorted subjects.
  Eigen::VectorXd cum0(n + 1);
  Eigen::MatrixXd cum1(p, n + 1);
  cum0[n] = 0.0;
  cum1.col(n).setZero();
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    cum0[r] = cum0[r + 1] + e[r];
    cum1.col(r) = cum1.col(r + 1) + e[r] * X_.row(r).transpose();
  }

  Eigen::VectorXd s0(K);
  Eigen::MatrixXd s1(p, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto st = static_cast<Eigen::Index>(start_[static_cast<std::size_t>(k)]);
    s0[k] = cum0[st];
    s1.col(k) = cum1.col(st);
  }
  Eigen::VectorXd e_tail;
  if (!tail_sorted_.empty()) {
    e_tail.resize(static_cast<Eigen::Index>(tail_sorted_.size()));
    for (std::size_t j = 0; j < tail_sorted_.size(); ++j) {
      e_tail[static_cast<Eigen::Index>(j)] = e[static_cast<Eigen::Index>(tail_sorted_[j])];
    }
    s0 += tail_weights_ * e_tail;
    s1 += (tail_weights_ * (e_tail.asDiagonal() * tail_X_)).transpose();
  }

  double ll = 0.0;
  for (Eigen::Index r : event_rows_) ll += eta[r] - ev.shift;
  for (Eigen::Index k = 0; k < K; ++k) ll -= d_[k] * std::log(s0[k]);
  ev.loglik = ll;

  Eigen::VectorXd d_over_s0 = d_.cwiseQuotient(s0);
  ev.gradient = event_x_sum_ - s1 * d_over_s0;

  if (with_information) {
    // sum_k d_k S2_k / S0_k = sum_j e_j c_j x_j x_j', c_j = sum_k d_k w_jk R_jk / S0_k
    Eigen::VectorXd prefix(K + 1);
    prefix[0] = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) prefix[k + 1] = prefix[k] + d_over_s0[k];
    Eigen::VectorXd c(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      c[r] = prefix[static_cast<Eigen::Index>(grid_le_[static_cast<std::size_t>(r)])];
    }
    if (!tail_sorted_.empty()) {
      Eigen::VectorXd tail_c = tail_weights_.transpose() * d_over_s0;
      for (std::size_t j = 0; j < tail_sorted_.size(); ++j) {
        c[static_cast<Eigen::Index>(tail_sorted_[j])] += tail_c[static_cast<Eigen::Index>(j)];
      }
    }
    Eigen::VectorXd ec = e.cwiseProduct(c);
    ev.information = X_.transpose() * ec.asDiagonal() * X_;
    Eigen::VectorXd d_over_s0sq = d_over_s0.cwiseQuotient(s0);
    ev.information.noalias() -= s1 * d_over_s0sq.asDiagonal() * s1.transpose();
  }
  ev.s0 = std::move(s0);
  return ev;
}

Eigen::VectorXd RiskSetLikelihood::baseline_jumps(const Eigen::VectorXd& beta) const {
  Evaluation ev = evaluate(beta, false);
  Eigen::VectorXd jumps(d_.size());
  const double scale = std::exp(-ev.shift);
  for (Eigen::Index k = 0; k < d_.size(); ++k) jumps[k] = d_[k] * scale / ev.s0[k];
  return jumps;
}

NewtonResult maximize_partial_likelihood(const RiskSetLikelihood& problem, double tol,
                                         int max_iter, const char* what) {
  const auto p = static_cast<Eigen::Index>(problem.num_parameters());
  NewtonResult res;
  res.beta = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    res.loglik = problem.loglik(res.beta);
    return res;
  }
  auto ev = problem.evaluate(res.beta, true);
  for (int iter = 0; iter <= max_iter; ++iter) {
    res.iterations = iter;
    res.loglik = ev.loglik;
    if (ev.gradient.cwiseAbs().maxCoeff() < tol) return res;
    if (iter == max_iter) break;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
      throw NumericalError(std::string(what) + ": rank-deficient design (singular information)",
                           res.beta, iter);
    }
    Eigen::VectorXd step = ldlt.solve(ev.gradient);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      Eigen::VectorXd candidate = res.beta + scale * step;
      auto cand = problem.evaluate(candidate, true);
      if (std::isfinite(cand.loglik) &&
          cand.loglik >= ev.loglik - 1e-12 * (1.0 + std::abs(ev.loglik))) {
        res.beta = std::move(candidate);
        ev = std::move(cand);
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // Rounding floor: no representable improvement is left.
      if (ev.gradient.cwiseAbs().maxCoeff() < 1e-6) {
        res.loglik = ev.loglik;
        return res;
      }
      throw NumericalError(std::string(what) + ": line search failed", res.beta, iter);
    }
    if (res.beta.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw NumericalError(std::string(what) + ": diverging coefficients (monotone likelihood)",
                           res.beta, iter + 1);
    }
  }
  throw NumericalError(std::string(what) + ": did not converge", res.beta, max_iter);
}

}  // namespace crtmle::detail
