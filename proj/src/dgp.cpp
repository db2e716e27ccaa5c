#include "crtmle/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "crtmle/errors.hpp"

namespace crtmle {

Scenario parse_scenario(const std::string& s) {
  if (s.size() == 2 && (s[0] == 'S' || s[0] == 's') && s[1] >= '1' && s[1] <= '5') {
    return static_cast<Scenario>(s[1] - '0');
  }
  throw DataError("unknown scenario '" + s + "' (expected S1..S5)");
}

std::string scenario_name(Scenario s) { return "S" + std::to_string(static_cast<int>(s)); }

DgpModel DgpModel::standard(bool high_dim) {
  DgpModel m;
  m.high_dim = high_dim;
  m.effect = {{"V1", -0.8}, {"V2", 0.6}};
  if (!high_dim) {
    m.treatment = {{"V1", -0.2}, {"V2", -0.1}, {"L1", 1.5}, {"L3", 0.1}};
    m.prognostic = {{"V1", 0.2}, {"L1", -0.9}, {"L2", -0.1}};
    m.censoring = {{"V1", 0.1}, {"V2", -0.2}, {"L1", -0.1}, {"L4", 0.05}};
  } else {
    m.treatment = {{"V1", -0.2}, {"V2", -0.1}, {"L1", 1.5}, {"L2", -0.1},
                   {"L3", 0.4},  {"L9", -0.1}, {"L10", -0.1}};
    m.prognostic = {{"V1", 0.2}, {"L1", -0.9}, {"L2", -0.15}, {"L9", 0.2}, {"L10", -0.2}};
    m.censoring = {{"V1", 0.1}, {"V2", -0.2}, {"L1", -0.1}, {"L9", 0.1}, {"L10", -0.1}};
  }
  return m;
}

DgpModel DgpModel::null_effect() const {
  DgpModel m = *this;
  m.effect.clear();
  m.shift = 0.0;
  return m;
}

std::vector<std::string> DgpModel::covariate_names() const {
  std::vector<std::string> names{"V1", "V2"};
  const int q = high_dim ? 28 : 4;
  for (int j = 1; j <= q; ++j) names.push_back("L" + std::to_string(j));
  return names;
}

std::size_t DgpModel::binary_count() const { return high_dim ? 10 : 3; }

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Terms resolved to covariate positions.
struct Resolved {
  std::vector<std::pair<std::size_t, double>> terms;

  Resolved(const std::vector<LinearTerm>& t, const std::vector<std::string>& names) {
    for (const auto& term : t) {
      auto it = std::find(names.begin(), names.end(), term.covariate);
      if (it == names.end()) throw DataError("DGP term on unknown covariate " + term.covariate);
      terms.emplace_back(static_cast<std::size_t>(it - names.begin()), term.coef);
    }
  }
  double operator()(const std::vector<double>& x) const {
    double s = 0.0;
    for (const auto& [j, c] : terms) s += c * x[j];
    return s;
  }
};

double uniform01(std::mt19937_64& rng) {
  // (0, 1): avoids log(0) in the inverse transforms.
  double u;
  do {
    u = std::generate_canonical<double, 64>(rng);
  } while (u <= 0.0);
  return u;
}

}  // namespace

double outcome_predictor(const DgpModel& model, const std::vector<std::string>& names,
                         const std::vector<double>& x, int a) {
  return Resolved(model.prognostic, names)(x) + a * Resolved(model.effect, names)(x) +
         model.shift * (a - 0.5);
}

double dgp_cif(double t, double y, double p) {
  // 1 - (1 - p (1 - e^-t))^exp(y)
  const double base = std::log1p(p * std::expm1(-t));
  return -std::expm1(std::exp(y) * base);
}

double dgp_main_time(double u, double y, double p) {
  const double f_inf = -std::expm1(std::exp(y) * std::log1p(-p));
  const double x = -std::expm1(std::exp(-y) * std::log1p(-u * f_inf)) / p;
  return -std::log1p(-x);
}

namespace {

struct Sampler {
  const DgpModel& model;
  std::vector<std::string> names;
  std::size_t binary;
  Resolved treat, prog, effect, cens;

  explicit Sampler(const DgpModel& m)
      : model(m),
        names(m.covariate_names()),
        binary(m.binary_count()),
        treat(m.treatment, names),
        prog(m.prognostic, names),
        effect(m.effect, names),
        cens(m.censoring, names) {}

  LatentSubject draw(std::mt19937_64& rng) const {
    LatentSubject s;
    s.covariates.resize(names.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < names.size(); ++j) {
      s.covariates[j] = j < binary ? (uniform01(rng) < 0.5 ? 1.0 : 0.0) : normal(rng);
    }
    s.treatment = uniform01(rng) < expit(treat(s.covariates)) ? 1 : 0;
    const double y = prog(s.covariates) + s.treatment * effect(s.covariates) +
                     model.shift * (s.treatment - 0.5);
    const double p_competing = std::exp(std::exp(y) * std::log1p(-model.p));
    const double u_cause = uniform01(rng);
    const double u_time = uniform01(rng);
    if (u_cause < p_competing) {
      s.cause = EventType::Competing;
      s.event_time = -std::log(u_time) / std::exp(model.competing_scale * y);
    } else {
      s.cause = EventType::Main;
      s.event_time = dgp_main_time(u_time, y, model.p);
    }
    s.unit_exponential = -std::log(uniform01(rng));
    s.censoring_lp = cens(s.covariates);
    return s;
  }
};

SubjectRecord observe(const LatentSubject& s, double lambda0, std::size_t id) {
  SubjectRecord r;
  r.id = std::to_string(id);
  const double c = s.unit_exponential / (lambda0 * std::exp(s.censoring_lp));
  if (c < s.event_time) {
    r.time = c;
    r.event = EventType::Censored;
  } else {
    r.time = s.event_time;
    r.event = s.cause;
  }
  r.treatment = s.treatment;
  r.covariates = s.covariates;
  return r;
}

}  // namespace

LatentSubject draw_subject(const DgpModel& model, std::mt19937_64& rng) {
  return Sampler(model).draw(rng);
}

CohortDataset simulate(const ScenarioConfig& config, const DgpModel& model) {
  if (config.n == 0) throw DataError("simulate: n must be positive");
  const double lambda0 =
      config.lambda0 > 0.0 ? config.lambda0 : calibrated_lambda0(model.high_dim);
  Sampler sampler(model);
  std::mt19937_64 rng(config.seed);
  std::vector<SubjectRecord> rows;
  rows.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    rows.push_back(observe(sampler.draw(rng), lambda0, i + 1));
  }
  const auto names = sampler.names;
  std::vector<std::size_t> prog;
  for (std::size_t j = 2; j < names.size(); ++j) prog.push_back(j);
  return CohortDataset(std::move(rows), names, {0, 1}, std::move(prog));
}

CohortDataset simulate(const ScenarioConfig& config) {
  return simulate(config, DgpModel::standard(config.high_dim));
}

double calibrate_lambda0(const DgpModel& model, double target, std::size_t draws,
                         std::uint64_t seed) {
  if (!(target > 0.0 && target < 1.0)) {
    throw DataError("censoring target unreachable: must lie in (0, 1)");
  }
  Sampler sampler(model);
  std::mt19937_64 rng(seed);
  std::vector<double> ratio(draws);  // censoring occurs iff lambda0 > ratio
  for (auto& r : ratio) {
    const LatentSubject s = sampler.draw(rng);
    r = s.unit_exponential / (std::exp(s.censoring_lp) * s.event_time);
  }
  auto share = [&](double lambda0) {
    std::size_t c = 0;
    for (double r : ratio) c += static_cast<std::size_t>(lambda0 > r);
    return static_cast<double>(c) / static_cast<double>(draws);
  };
  double lo = 1e-4;
  double hi = 10.0;
  if (share(lo) > target + 0.005 || share(hi) < target - 0.005) {
    throw DataError("censoring target unreachable for lambda0 in [1e-4, 10]");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = share(mid);
    if (s < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-10 * hi) break;
  }
  const double out = 0.5 * (lo + hi);
  if (std::abs(share(out) - target) > 0.005) {
    throw DataError("censoring target unreachable within tolerance");
  }
  return out;
}

double calibrated_lambda0(bool high_dim) {
  static std::mutex mu;
  static std::map<bool, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(high_dim);
  if (it != cache.end()) return it->second;
  const double v = calibrate_lambda0(DgpModel::standard(high_dim));
  cache.emplace(high_dim, v);
  return v;
}

CateOracle::CateOracle(const DgpModel& model, std::size_t draws, std::uint64_t seed)
    : model_(model) {
  // Only the prognostic L terms vary within a subgroup.
  std::vector<LinearTerm> l_terms;
  for (const auto& t : model.prognostic) {
    if (t.covariate[0] == 'L') l_terms.push_back(t);
  }
  for (const auto& t : model.effect) {
    if (t.covariate[0] == 'L') throw DataError("oracle needs effect terms on V only");
  }
  const auto names = model.covariate_names();
  Resolved eta(l_terms, names);
  const std::size_t binary = model.binary_count();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(names.size(), 0.0);
  exp_eta_.resize(draws);
  for (auto& e : exp_eta_) {
    for (std::size_t j = 2; j < names.size(); ++j) {
      x[j] = j < binary ? (uniform01(rng) < 0.5 ? 1.0 : 0.0) : normal(rng);
    }
    e = std::exp(eta(x));
  }
}

std::vector<SubgroupTruth> CateOracle::truth(double t0) const {
  if (!(t0 > 0.0)) throw DataError("oracle horizon must be positive");
  const auto names = model_.covariate_names();
  const double log_q = std::log1p(model_.p * std::expm1(-t0));
  std::vector<SubgroupTruth> out;
  for (int v1 = 0; v1 <= 1; ++v1) {
    for (int v2 = 0; v2 <= 1; ++v2) {
      std::vector<double> x(names.size(), 0.0);
      x[0] = v1;
      x[1] = v2;
      // V part of Y1 for each arm (L set to zero, so prognostic L terms drop).
      std::vector<LinearTerm> v_terms;
      for (const auto& t : model_.prognostic) {
        if (t.covariate[0] == 'V') v_terms.push_back(t);
      }
      const double base = Resolved(v_terms, names)(x);
      const double eff = Resolved(model_.effect, names)(x);
      const double c1 = std::exp(base + eff + model_.shift * 0.5);
      const double c0 = std::exp(base - model_.shift * 0.5);
      double sum = 0.0;
      double sum2 = 0.0;
      for (double e : exp_eta_) {
        const double d = std::expm1(log_q * c0 * e) - std::expm1(log_q * c1 * e);
        sum += d;
        sum2 += d * d;
      }
      const double m = static_cast<double>(exp_eta_.size());
      SubgroupTruth t;
      t.label = "V1=" + std::to_string(v1) + ";V2=" + std::to_string(v2);
      t.psi = sum / m;
      const double var = std::max(0.0, sum2 / m - t.psi * t.psi);
      t.se = std::sqrt(var / m);
      out.push_back(t);
    }
  }
  return out;
}

std::vector<SubgroupTruth> true_cate(const DgpModel& model, double t0, std::size_t draws,
                                     std::uint64_t seed) {
  return CateOracle(model, draws, seed).truth(t0);
}

NuisanceDesigns misspecified_designs(Scenario scenario, bool high_dim) {
  const bool bad_outcome = scenario == Scenario::S2;
  const bool bad_treatment = scenario == Scenario::S3 || scenario == Scenario::S5;
  const bool bad_censoring = scenario == Scenario::S4 || scenario == Scenario::S5;

  auto pick = [high_dim](std::vector<std::string> correct, std::vector<std::string> dropped,
                         std::vector<std::string> added, bool misspecified) {
    if (high_dim) {
      std::vector<std::string> all;
      for (int j = 1; j <= 28; ++j) all.push_back("L" + std::to_string(j));
      correct = all;
    }
    if (!misspecified) return correct;
    std::vector<std::string> out;
    for (const auto& c : correct) {
      if (std::find(dropped.begin(), dropped.end(), c) == dropped.end()) out.push_back(c);
    }
    for (const auto& c : added) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  };

  NuisanceDesigns d;
  d.outcome = pick({"L1", "L2"}, {"L1", "L2"}, {"L3", "L4"}, bad_outcome);
  d.interactions = d.outcome;
  d.treatment = pick({"L1", "L3"}, {"L1", "L3"}, {"L2", "L4"}, bad_treatment);
  d.censoring = pick({"L1", "L4"}, {"L1", "L4"}, {"L2", "L3"}, bad_censoring);
  return d;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace crtmle
