#include "crtmle/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "crtmle/errors.hpp"

namespace crtmle {

namespace {

// Coefficients beyond this magnitude on the logit scale mean the likelihood
// has no finite maximizer.
constexpr double kSeparationBound = 30.0;
constexpr double kPerfectFit = 1e-6;

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) without overflow
    const double softplus = eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i]))
                                       : std::log1p(std::exp(eta[i]));
    ll += y[i] * eta[i] - softplus;
  }
  return ll;
}

double expit(double eta) {
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tol,
                         int max_iter) {
  const Eigen::Index p = X.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = X * beta;
  double ll = log_likelihood(eta, y);

  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd score = X.transpose() * (y - mu);
    if (score.cwiseAbs().maxCoeff() < tol) {
      // every observation fitted with probability ~1
      if (ll > -kPerfectFit) {
        throw NumericalError("logistic regression: complete separation", beta, iter - 1);
      }
      return {beta, iter - 1};
    }

    Eigen::VectorXd w = mu.cwiseProduct(Eigen::VectorXd::Ones(mu.size()) - mu);
    Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.rcond() < 1e-14) {
      throw NumericalError("logistic regression: singular information matrix (separation or "
                           "collinear design)",
                           beta, iter);
    }
    Eigen::VectorXd step = ldlt.solve(score);

    double scale = 1.0;
    Eigen::VectorXd candidate;
    double ll_new = -INFINITY;
    for (int half = 0; half < 30; ++half) {
      candidate = beta + scale * step;
      eta = X * candidate;
      ll_new = log_likelihood(eta, y);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
      scale *= 0.5;
    }
    beta = std::move(candidate);
    ll = ll_new;
    if (beta.cwiseAbs().maxCoeff() > kSeparationBound) {
      throw NumericalError("logistic regression: complete separation (diverging coefficients)",
                           beta, iter);
    }
  }
  Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
  if ((X.transpose() * (y - mu)).cwiseAbs().maxCoeff() < tol) {
    if (ll > -kPerfectFit) {
      throw NumericalError("logistic regression: complete separation", beta, max_iter);
    }
    return {beta, max_iter};
  }
  throw NumericalError("logistic regression did not converge", beta, max_iter);
}

PropensityModel::PropensityModel(std::vector<std::string> covariates,
                                 const std::vector<std::string>& layout,
                                 Eigen::VectorXd coefficients, double lo, double hi,
                                 int iterations)
    : covariates_(std::move(covariates)),
      layout_(layout),
      coef_(std::move(coefficients)),
      lo_(lo),
      hi_(hi),
      iterations_(iterations) {
  if (!(lo_ > 0.0 && lo_ <= hi_ && hi_ < 1.0)) {
    throw DataError("propensity truncation bounds must satisfy 0 < lo <= hi < 1");
  }
  if (coef_.size() != static_cast<Eigen::Index>(covariates_.size() + 1)) {
    throw DataError("propensity coefficient count does not match covariates");
  }
  for (const auto& c : covariates_) {
    auto it = std::find(layout_.begin(), layout_.end(), c);
    if (it == layout_.end()) throw DataError("propensity covariate '" + c + "' not in layout");
    idx_.push_back(static_cast<std::size_t>(it - layout_.begin()));
  }
}

double PropensityModel::prob_treated(std::span<const double> x) const {
  double eta = coef_[0];
  for (std::size_t j = 0; j < idx_.size(); ++j) {
    eta += coef_[static_cast<Eigen::Index>(j + 1)] * x[idx_[j]];
  }
  return std::clamp(expit(eta), lo_, hi_);
}

double PropensityModel::prob(int a, std::span<const double> x) const {
  const double p1 = prob_treated(x);
  return a == 1 ? p1 : 1.0 - p1;
}

PropensityModel fit_propensity(const CohortDataset& data,
                               const std::vector<std::string>& covariates,
                               const Truncation& trunc) {
  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<std::size_t> idx;
  for (const auto& c : covariates) idx.push_back(data.covariate_index(c));

  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(idx.size() + 1));
  Eigen::VectorXd y(n);
  std::size_t treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      X(i, static_cast<Eigen::Index>(j + 1)) = s.covariates[idx[j]];
    }
    y[i] = s.treatment;
    treated += static_cast<std::size_t>(s.treatment);
  }
  if (treated == 0 || treated == data.size()) {
    throw NumericalError("propensity model: treatment is constant in the fitting data");
  }
  LogisticFit fit = fit_logistic(X, y);
  return PropensityModel(covariates, data.covariate_names(), std::move(fit.coefficients),
                         trunc.propensity_lo, trunc.propensity_hi, fit.iterations);
}

}  // namespace crtmle
