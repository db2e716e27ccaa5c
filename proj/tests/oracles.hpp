#pragma once

// Brute-force reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's likelihood, targeting or solver code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crtmle/censoring.hpp"
#include "crtmle/cohort.hpp"
#include "crtmle/propensity.hpp"
#include "crtmle/targeting.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Product-limit censoring survival; censoring (code 0) is the event and the
// risk set at c is {time >= c}.
struct KaplanMeier {
  std::vector<double> times;
  std::vector<double> values;
  double floor = 0.0;

  KaplanMeier(const std::vector<double>& time, const std::vector<int>& code, double floor_ = 0.0)
      : floor(floor_) {
    std::vector<double> cens;
    for (std::size_t i = 0; i < time.size(); ++i) {
      if (code[i] == 0) cens.push_back(time[i]);
    }
    std::sort(cens.begin(), cens.end());
    cens.erase(std::unique(cens.begin(), cens.end()), cens.end());
    double g = 1.0;
    for (double c : cens) {
      double d = 0.0;
      double r = 0.0;
      for (std::size_t i = 0; i < time.size(); ++i) {
        if (time[i] >= c) r += 1.0;
        if (time[i] == c && code[i] == 0) d += 1.0;
      }
      g *= (r - d) / r;
      times.push_back(c);
      values.push_back(g);
    }
  }

  double at(double t) const {
    double g = 1.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] <= t) g = values[j];
    }
    return std::max(floor, g);
  }
  double before(double t) const {
    double g = 1.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] < t) g = values[j];
    }
    return std::max(floor, g);
  }
};

inline double dot(const std::vector<double>& x, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * b[static_cast<Eigen::Index>(j)];
  return s;
}

// Weighted Breslow log partial likelihood over distinct main-event times.
// weight(j, t) is subject j's risk-set weight at event time t.
inline double weighted_loglik(const std::vector<double>& time, const std::vector<int>& code,
                              const Matrix& x, const Eigen::VectorXd& beta,
                              const std::function<double(std::size_t, double)>& weight) {
  const std::size_t n = time.size();
  std::vector<double> ev;
  for (std::size_t i = 0; i < n; ++i) {
    if (code[i] == 1) ev.push_back(time[i]);
  }
  std::sort(ev.begin(), ev.end());
  ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
  double ll = 0.0;
  for (double t : ev) {
    double denom = 0.0;
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      denom += weight(j, t) * std::exp(dot(x[j], beta));
      if (time[j] == t && code[j] == 1) {
        ll += dot(x[j], beta);
        d += 1.0;
      }
    }
    ll -= d * std::log(denom);
  }
  return ll;
}

// Cox partial likelihood: risk set {time >= t}.
inline double cox_loglik(const std::vector<double>& time, const std::vector<int>& code,
                         const Matrix& x, const Eigen::VectorXd& beta) {
  return weighted_loglik(time, code, x, beta,
                         [&](std::size_t j, double t) { return time[j] >= t ? 1.0 : 0.0; });
}

// Fine-Gray weighted likelihood: competing-event subjects stay in the risk
// set after their event time with weight G(t-) / G(T_j-).
inline double fine_gray_loglik(const std::vector<double>& time, const std::vector<int>& code,
                               const Matrix& x, const Eigen::VectorXd& beta,
                               const KaplanMeier& g) {
  return weighted_loglik(time, code, x, beta, [&](std::size_t j, double t) {
    if (time[j] >= t) return 1.0;
    if (code[j] == 2) return g.before(t) / g.before(time[j]);
    return 0.0;
  });
}

// Cox MLE by Newton-Raphson on brute-force gradient and Hessian.
inline Eigen::VectorXd cox_mle(const std::vector<double>& time, const std::vector<int>& code,
                               const Matrix& x) {
  const std::size_t n = time.size();
  const auto p = static_cast<Eigen::Index>(x.front().size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < n; ++i) {
      if (code[i] != 1) continue;
      double s0 = 0.0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
      for (std::size_t j = 0; j < n; ++j) {
        if (time[j] < time[i]) continue;
        const double e = std::exp(dot(x[j], beta));
        Eigen::VectorXd xj = Eigen::Map<const Eigen::VectorXd>(x[j].data(), p);
        s0 += e;
        s1 += e * xj;
        s2 += e * xj * xj.transpose();
      }
      Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(x[i].data(), p);
      grad += xi - s1 / s0;
      hess -= s2 / s0 - (s1 / s0) * (s1 / s0).transpose();
    }
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    beta -= step;
    if (step.cwiseAbs().maxCoeff() < 1e-13) break;
  }
  return beta;
}

// Nelder-Mead minimizer restarted from its own optimum until the simplex
// stops improving.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd x0, double step = 0.5, double tol = 1e-12,
                                   int max_iter = 20000) {
  const Eigen::Index p = x0.size();
  for (int restart = 0; restart < 8; ++restart) {
    std::vector<Eigen::VectorXd> s(static_cast<std::size_t>(p + 1), x0);
    for (Eigen::Index j = 0; j < p; ++j) s[static_cast<std::size_t>(j + 1)][j] += step;
    std::vector<double> fv(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) fv[j] = f(s[j]);
    for (int it = 0; it < max_iter; ++it) {
      std::vector<std::size_t> ord(s.size());
      for (std::size_t j = 0; j < ord.size(); ++j) ord[j] = j;
      std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
      std::vector<Eigen::VectorXd> s2;
      std::vector<double> f2;
      for (auto j : ord) {
        s2.push_back(s[j]);
        f2.push_back(fv[j]);
      }
      s = s2;
      fv = f2;
      double size = 0.0;
      for (std::size_t j = 1; j < s.size(); ++j) size = std::max(size, (s[j] - s[0]).cwiseAbs().maxCoeff());
      if (size < tol) break;
      Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
      for (std::size_t j = 0; j + 1 < s.size(); ++j) c += s[j];
      c /= static_cast<double>(p);
      const Eigen::VectorXd& worst = s.back();
      Eigen::VectorXd xr = c + (c - worst);
      const double fr = f(xr);
      if (fr < fv.front()) {
        Eigen::VectorXd xe = c + 2.0 * (c - worst);
        const double fe = f(xe);
        if (fe < fr) {
          s.back() = xe;
          fv.back() = fe;
        } else {
          s.back() = xr;
          fv.back() = fr;
        }
      } else if (fr < fv[fv.size() - 2]) {
        s.back() = xr;
        fv.back() = fr;
      } else {
        Eigen::VectorXd xc = fr < fv.back() ? Eigen::VectorXd(c + 0.5 * (xr - c))
                                            : Eigen::VectorXd(c + 0.5 * (worst - c));
        const double fc = f(xc);
        if (fc < std::min(fr, fv.back())) {
          s.back() = xc;
          fv.back() = fc;
        } else {
          for (std::size_t j = 1; j < s.size(); ++j) {
            s[j] = s[0] + 0.5 * (s[j] - s[0]);
            fv[j] = f(s[j]);
          }
        }
      }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    const double moved = (s[best] - x0).cwiseAbs().maxCoeff();
    x0 = s[best];
    step = std::max(1e-3, moved);
    if (moved < 1e-10) break;
  }
  return x0;
}

inline double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& b) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(b);
    ll += y[i] * eta - std::log1p(std::exp(eta));
  }
  return ll;
}

// Two-parameter logistic MLE by exhaustive grid search on [lo, hi]^2,
// refined by zooming around the best cell.
inline Eigen::Vector2d grid_search_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            double lo = -5.0, double hi = 5.0) {
  Eigen::Vector2d best(0.0, 0.0);
  double h = 0.05;
  Eigen::Vector2d a(lo, lo);
  Eigen::Vector2d b(hi, hi);
  while (h > 1e-6) {
    double fbest = -std::numeric_limits<double>::infinity();
    for (double u = a[0]; u <= b[0] + 1e-12; u += h) {
      for (double v = a[1]; v <= b[1] + 1e-12; v += h) {
        const Eigen::Vector2d c(u, v);
        const double f = logistic_loglik(X, y, c);
        if (f > fbest) {
          fbest = f;
          best = c;
        }
      }
    }
    a = (best.array() - 5.0 * h).matrix();
    b = (best.array() + 5.0 * h).matrix();
    h /= 10.0;
  }
  return best;
}

// IPCW weight w_i(t) = 1(C_i >= T_i ^ t) G(t- | i) / G((T_i ^ t)- | i).
inline double ipcw(const crtmle::SubjectRecord& s, const crtmle::CensoringModel& cens, double t) {
  if (t <= s.time) return 1.0;
  if (s.event == crtmle::EventType::Censored) return 0.0;
  return cens.survival_before(t, s.treatment, s.covariates) /
         cens.survival_before(s.time, s.treatment, s.covariates);
}

// Per-subject martingale part of the efficient influence function,
// sum over grid times t_k <= t0 of w h (dN - Y dLambda) at the observed arm,
// from the models and raw records.
inline std::vector<double> eif_martingale(const crtmle::CohortDataset& sub,
                                          const crtmle::PropensityModel& prop,
                                          const crtmle::CensoringModel& cens,
                                          const std::vector<double>& grid,
                                          const crtmle::TargetingState& st) {
  std::vector<double> out(sub.size(), 0.0);
  const std::size_t K = grid.size();
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto& s = sub[i];
    const int a = s.treatment;
    const auto r = static_cast<Eigen::Index>(i);
    const auto& F = st.cif[static_cast<std::size_t>(a)];
    const auto& lam = st.hazard[static_cast<std::size_t>(a)];
    const double f0 = K == 0 ? 0.0 : F(r, static_cast<Eigen::Index>(K - 1));
    const double pi = prop.prob(a, s.covariates);
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      const double t = grid[k];
      const double g = cens.survival_before(t, a, s.covariates);
      const double h = (a == 1 ? 1.0 : -1.0) / (pi * g) * (1.0 - f0) / (1.0 - F(r, c));
      const double dN = (s.event == crtmle::EventType::Main && s.time == t) ? 1.0 : 0.0;
      const double n_before = (s.event == crtmle::EventType::Main && s.time < t) ? 1.0 : 0.0;
      const double Y = 1.0 - n_before;
      acc += ipcw(s, cens, t) * h * (dN - Y * lam(r, c));
    }
    out[i] = acc;
  }
  return out;
}

// Score of the fluctuation model by direct summation over the problem's
// matrices: sum_i sum_k w h (dN - Y lambda exp(eps h)) at the observed arm.
inline double score_sum(const crtmle::TargetingProblem& pr, const crtmle::TargetingState& st,
                        double eps) {
  double total = 0.0;
  const std::size_t K = pr.num_times();
  for (std::size_t i = 0; i < pr.num_subjects(); ++i) {
    const int a = pr.treatment[i];
    const auto au = static_cast<std::size_t>(a);
    const auto r = static_cast<Eigen::Index>(i);
    const double f0 = K == 0 ? 0.0 : st.cif[au](r, static_cast<Eigen::Index>(K - 1));
    for (std::size_t k = 0; k < K; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      const double h = (a == 1 ? 1.0 : -1.0) * pr.inverse_weight[au](r, c) * (1.0 - f0) /
                       (1.0 - st.cif[au](r, c));
      const double dN = pr.event_index[i] == static_cast<int>(k) ? 1.0 : 0.0;
      total += pr.weight(r, c) * h *
               (dN - pr.at_risk(r, c) * st.hazard[au](r, c) * std::exp(eps * h));
    }
  }
  return total;
}

// Subject factory for hand-built cohorts: covariates listed in order.
inline crtmle::SubjectRecord subject(std::string id, double time, int code, int a,
                                     std::vector<double> x) {
  crtmle::SubjectRecord s;
  s.id = std::move(id);
  s.time = time;
  s.event = static_cast<crtmle::EventType>(code);
  s.treatment = a;
  s.covariates = std::move(x);
  return s;
}

}  // namespace oracle
