#include "crtmle/censoring.hpp"

#include <algorithm>
#include <cmath>

#include "crtmle/detail/risk_set.hpp"
#include "crtmle/errors.hpp"

namespace crtmle {

CensoringModel::CensoringModel(CensoringKind kind, DesignSpec spec,
                               const std::vector<std::string>& layout,
                               std::vector<double> jump_times, std::vector<double> baseline,
                               Eigen::VectorXd coefficients, double floor, int iterations)
    : kind_(kind),
      design_(std::move(spec), layout),
      times_(std::move(jump_times)),
      baseline_(std::move(baseline)),
      coef_(std::move(coefficients)),
      floor_(floor),
      iterations_(iterations) {
  if (times_.size() != baseline_.size()) {
    throw DataError("censoring model: jump times and baseline differ in length");
  }
  if (!(floor_ >= 0.0 && floor_ < 1.0)) throw DataError("censoring floor must lie in [0, 1)");
  if (kind_ == CensoringKind::CoxPH &&
      coef_.size() != static_cast<Eigen::Index>(design_.width())) {
    throw DataError("censoring model: coefficient count does not match design");
  }
}

double CensoringModel::baseline_level(double t, bool left_limit) const {
  auto it = left_limit ? std::lower_bound(times_.begin(), times_.end(), t)
                       : std::upper_bound(times_.begin(), times_.end(), t);
  const auto idx = static_cast<std::size_t>(it - times_.begin());
  if (idx == 0) return kind_ == CensoringKind::KaplanMeier ? 1.0 : 0.0;
  return baseline_[idx - 1];
}

double CensoringModel::relative_risk(int a, std::span<const double> x) const {
  if (kind_ == CensoringKind::KaplanMeier) return 1.0;
  return std::exp(design_.linear_predictor(coef_, x, a));
}

double CensoringModel::combine(double level, double rr) const {
  const double g = kind_ == CensoringKind::KaplanMeier ? level : std::exp(-level * rr);
  return std::max(floor_, g);
}

double CensoringModel::survival(double t, int a, std::span<const double> x) const {
  return combine(baseline_level(t, false), relative_risk(a, x));
}

double CensoringModel::survival_before(double t, int a, std::span<const double> x) const {
  return combine(baseline_level(t, true), relative_risk(a, x));
}

namespace {

CensoringModel fit_kaplan_meier(const CohortDataset& data, const Truncation& trunc) {
  std::vector<double> obs;
  std::vector<double> cens_times;
  for (const auto& s : data.subjects()) {
    obs.push_back(s.time);
    if (s.event == EventType::Censored) cens_times.push_back(s.time);
  }
  std::sort(obs.begin(), obs.end());
  std::sort(cens_times.begin(), cens_times.end());

  std::vector<double> times;
  std::vector<double> surv;
  double g = 1.0;
  for (std::size_t i = 0; i < cens_times.size();) {
    const double t = cens_times[i];
    std::size_t j = i;
    while (j < cens_times.size() && cens_times[j] == t) ++j;
    const double d = static_cast<double>(j - i);
    const auto at_risk = static_cast<double>(
        obs.end() - std::lower_bound(obs.begin(), obs.end(), t));
    g *= 1.0 - d / at_risk;
    times.push_back(t);
    surv.push_back(g);
    i = j;
  }
  return CensoringModel(CensoringKind::KaplanMeier, DesignSpec{}, data.covariate_names(),
                        std::move(times), std::move(surv), Eigen::VectorXd{}, trunc.censoring_floor);
}

CensoringModel fit_cox_censoring(const CohortDataset& data, DesignSpec spec,
                                 const Truncation& trunc) {
  const std::size_t n = data.size();
  ResolvedDesign design(spec, data.covariate_names());
  const auto p = static_cast<Eigen::Index>(design.width());
  std::vector<double> times(n);
  std::vector<char> is_event(n);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), p);
  std::size_t events = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data[i];
    times[i] = s.time;
    is_event[i] = s.event == EventType::Censored;
    events += static_cast<std::size_t>(is_event[i]);
    X.row(static_cast<Eigen::Index>(i)) = design.row(s.covariates, s.treatment).transpose();
  }
  if (events == 0) throw DataError("Cox censoring model needs at least one censored subject");

  detail::RiskSetLikelihood problem(times, is_event, std::move(X));
  auto fit = detail::maximize_partial_likelihood(problem, 1e-8, 100, "censoring Cox model");
  Eigen::VectorXd jumps = problem.baseline_jumps(fit.beta);
  std::vector<double> cumulative(static_cast<std::size_t>(jumps.size()));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < jumps.size(); ++k) {
    acc += jumps[k];
    cumulative[static_cast<std::size_t>(k)] = acc;
  }
  return CensoringModel(CensoringKind::CoxPH, std::move(spec), data.covariate_names(),
                        problem.event_times(), std::move(cumulative), std::move(fit.beta),
                        trunc.censoring_floor, fit.iterations);
}

}  // namespace

CensoringModel fit_censoring(const CohortDataset& data, CensoringKind kind,
                             const std::vector<std::string>& covariates, bool include_treatment,
                             const Truncation& trunc) {
  if (data.empty()) throw DataError("censoring model: empty data");
  if (kind == CensoringKind::KaplanMeier) return fit_kaplan_meier(data, trunc);
  DesignSpec spec{covariates, include_treatment, {}};
  return fit_cox_censoring(data, std::move(spec), trunc);
}

IpcwWeights::IpcwWeights(const CohortDataset& data, const CensoringModel& cens,
                         std::vector<double> times)
    : times_(std::move(times)), kind_(cens.kind()), floor_(cens.floor()) {
  level_.reserve(times_.size());
  for (double t : times_) level_.push_back(cens.baseline_level(t, true));
  const std::size_t n = data.size();
  rr_.resize(n);
  obs_time_.resize(n);
  event_.resize(n);
  g_at_obs_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data[i];
    rr_[i] = cens.relative_risk(s.treatment, s.covariates);
    obs_time_[i] = s.time;
    event_[i] = s.event;
    g_at_obs_[i] = cens.combine(cens.baseline_level(s.time, true), rr_[i]);
  }
}

double IpcwWeights::censoring_before(std::size_t i, std::size_t k) const {
  const double g = kind_ == CensoringKind::KaplanMeier ? level_[k] : std::exp(-level_[k] * rr_[i]);
  return std::max(floor_, g);
}

double IpcwWeights::operator()(std::size_t i, std::size_t k) const {
  if (times_[k] <= obs_time_[i]) return 1.0;
  if (event_[i] == EventType::Censored) return 0.0;
  return censoring_before(i, k) / g_at_obs_[i];
}

IpcwWeights compute_ipcw(const CohortDataset& data, const CensoringModel& cens,
                         const TimeGrid& grid) {
  return IpcwWeights(data, cens, grid.times());
}

}  // namespace crtmle
