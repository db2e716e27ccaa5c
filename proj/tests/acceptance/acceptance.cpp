// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "crtmle/censoring.hpp"
#include "crtmle/dgp.hpp"
#include "crtmle/errors.hpp"
#include "crtmle/fine_gray.hpp"
#include "crtmle/harness.hpp"
#include "crtmle/pipeline.hpp"
#include "crtmle/targeting.hpp"
#include "crtmle/vim.hpp"
#include "oracles.hpp"

using namespace crtmle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

CohortDataset sim(std::size_t n, std::uint64_t seed, bool null_effect = false) {
  ScenarioConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return null_effect ? simulate(cfg, DgpModel::standard().null_effect()) : simulate(cfg);
}

PipelineConfig config_for(Scenario s) {
  PipelineConfig cfg;
  cfg.designs = misspecified_designs(s);
  return cfg;
}

const SubgroupSummary* find_group(const McSummary& s, const std::string& label) {
  for (const auto& g : s.subgroups) {
    if (g.subgroup == label) return &g;
  }
  return nullptr;
}

const McSummary& cell(const McResult& r, Scenario s, McLearner l) {
  for (const auto& m : r.summaries) {
    if (m.scenario == s && m.learner == l) return m;
  }
  throw DataError("missing Monte Carlo cell");
}

Outcome coverage_s1() {
  McOptions o;
  o.scenarios = {Scenario::S1};
  o.sample_sizes = {1500};
  o.replicates = 200;
  o.learners = {McLearner::Tmle};
  o.seed = 20240101;
  const McResult r = run_mc(o);
  Outcome out{true, "coverage"};
  for (const auto& g : r.summaries.at(0).subgroups) {
    out.pass = out.pass && g.coverage >= 0.91 && g.coverage <= 0.98;
    out.detail += fmt(" %s=%.3f", g.subgroup.c_str(), g.coverage);
  }
  out.detail += fmt(" (failed replicates %d)", r.summaries.at(0).failed_replicates);
  return out;
}

// Shared n = 3000, B = 100 run for the robustness and contrast criteria.
const McResult& robustness_run() {
  static const McResult r = [] {
    McOptions o;
    o.sample_sizes = {3000};
    o.replicates = 100;
    o.learners = {McLearner::Tmle, McLearner::S};
    o.seed = 20240202;
    return run_mc(o);
  }();
  return r;
}

Outcome double_robustness() {
  const McResult& r = robustness_run();
  const McSummary& s1 = cell(r, Scenario::S1, McLearner::Tmle);
  Outcome out{true, ""};
  for (Scenario s : {Scenario::S2, Scenario::S3, Scenario::S4, Scenario::S5}) {
    const McSummary& c = cell(r, s, McLearner::Tmle);
    out.detail += (out.detail.empty() ? "" : " ") + scenario_name(s) + ":";
    for (const auto& g : c.subgroups) {
      const SubgroupSummary* base = find_group(s1, g.subgroup);
      const double bound = 2.0 * std::abs(base->bias) + 0.005;
      const bool ok = std::abs(g.bias) <= bound;
      out.pass = out.pass && ok;
      out.detail += fmt(" %.4f%s%.4f", std::abs(g.bias), ok ? "<=" : ">", bound);
    }
  }
  return out;
}

Outcome misspecification_contrast() {
  const McResult& r = robustness_run();
  const McSummary& t = cell(r, Scenario::S2, McLearner::Tmle);
  const McSummary& s = cell(r, Scenario::S2, McLearner::S);
  int hits = 0;
  Outcome out{false, ""};
  for (const auto& g : t.subgroups) {
    const SubgroupSummary* sg = find_group(s, g.subgroup);
    const bool ok = std::abs(sg->bias) >= 2.0 * std::abs(g.bias);
    hits += ok;
    out.detail += fmt(" %s s=%.4f tmle=%.4f", g.subgroup.c_str(), std::abs(sg->bias), std::abs(g.bias));
  }
  out.pass = hits >= 3;
  out.detail = fmt("%d/4 subgroups;", hits) + out.detail;
  return out;
}

Outcome eif_equation() {
  int fits = 0;
  int converged = 0;
  int bad = 0;
  double worst_ratio = 0.0;
  double worst_mean = 0.0;
  const Scenario all[] = {Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4, Scenario::S5};
  for (std::uint64_t b = 0; b < 25; ++b) {
    const Scenario sc = all[b % 5];
    CohortDataset d = sim(1500, derive_seed(400, b));
    const double t0 = event_time_quantile(d, 0.5);
    const PipelineConfig cfg = config_for(sc);
    for (const SubgroupFit& fit : run_tmle(d, t0, cfg)) {
      ++fits;
      if (!fit.estimate.converged) continue;
      ++converged;
      const EifTerms eif = eif_terms(fit.problem, fit.targeted);
      const double n = static_cast<double>(fit.estimate.n_subgroup);
      const double bound = 10.0 * cfg.targeting.s_n / std::sqrt(n);
      const double m = std::abs(eif.martingale.mean());
      const double full = std::abs(eif.eif.mean());
      worst_ratio = std::max(worst_ratio, m / bound);
      worst_mean = std::max(worst_mean, full);
      bad += m > bound || full >= 1e-12;
    }
  }
  return {bad == 0 && converged > 0,
          fmt("%d/%d converged fits checked; max |mean martingale|/bound=%.3f; max |mean EIF|=%.2e",
              converged, fits, worst_ratio, worst_mean)};
}

Outcome score_identity() {
  std::mt19937_64 rng(500);
  std::uniform_int_distribution<std::size_t> size(500, 2000);
  std::uniform_int_distribution<int> scen(1, 5);
  std::uniform_real_distribution<double> q(0.25, 0.75);
  int states = 0;
  double worst = 0.0;
  while (states < 50) {
    CohortDataset d = sim(size(rng), rng());
    const double t0 = event_time_quantile(d, q(rng));
    const auto keys = d.subgroups();
    const SubgroupKey key = keys[rng() % keys.size()];
    const CohortDataset sub = d.subgroup(key);
    const PipelineConfig cfg = config_for(static_cast<Scenario>(scen(rng)));
    const SubgroupFit fit = fit_subgroup(sub, t0, cfg, key, d.subgroup_label(key));
    const std::vector<double> grid(
        fit.problem.grid.times().begin(),
        fit.problem.grid.times().begin() + static_cast<long>(fit.problem.num_times()));
    const TargetingState& st = states % 2 == 0 ? fit.initial : fit.targeted;
    const auto mart = oracle::eif_martingale(sub, fit.propensity, fit.censoring, grid, st);
    double mean = 0.0;
    for (double v : mart) mean += v;
    mean /= static_cast<double>(mart.size());
    const double score = score_at_epsilon(fit.problem, st, 0.0) / static_cast<double>(sub.size());
    worst = std::max(worst, std::abs(score - mean));
    ++states;
  }
  return {worst < 1e-12, fmt("50 fitted states; max |score(0)/n - oracle mean| = %.2e", worst)};
}

struct Toy {
  std::vector<double> time;
  std::vector<int> code;
  oracle::Matrix x;
};

Toy random_toy(std::mt19937_64& rng, std::size_t n, std::size_t p, double p_cens, double p_comp) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> beta(p);
  for (auto& b : beta) b = 0.8 * z(rng);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(p);
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      x[j] = z(rng);
      eta += beta[j] * x[j];
    }
    t.x.push_back(x);
    t.time.push_back(-std::log(u(rng)) / std::exp(eta));
    const double v = u(rng);
    t.code.push_back(v < p_cens ? 0 : (v < p_cens + p_comp ? 2 : 1));
  }
  return t;
}

std::pair<CohortDataset, DesignSpec> toy_dataset(const Toy& t) {
  std::vector<SubjectRecord> s;
  for (std::size_t i = 0; i < t.time.size(); ++i) {
    s.push_back(oracle::subject(std::to_string(i), t.time[i], t.code[i], 0, t.x[i]));
  }
  std::vector<std::string> names;
  std::vector<std::size_t> prog;
  for (std::size_t j = 0; j < t.x.front().size(); ++j) {
    names.push_back("X" + std::to_string(j + 1));
    prog.push_back(j);
  }
  DesignSpec spec{names, false, {}};
  return {CohortDataset(std::move(s), names, {}, prog), spec};
}

Outcome fine_gray_oracles() {
  std::mt19937_64 rng(600);
  double cox_err = 0.0;
  double nm_err = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 50 + rng() % 151;
    const std::size_t p = 1 + rng() % 3;
    Toy t = random_toy(rng, n, p, 0.0, 0.0);
    auto [d, spec] = toy_dataset(t);
    const CensoringModel g = fit_censoring(d, CensoringKind::KaplanMeier, {});
    const Eigen::VectorXd fg = fit_fine_gray(d, g, spec).coefficients();
    const Eigen::VectorXd cox = oracle::cox_mle(t.time, t.code, t.x);
    cox_err = std::max(cox_err, (fg - cox).cwiseAbs().maxCoeff());
  }
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 20 + rng() % 11;
    const std::size_t p = 1 + rng() % 2;
    Toy t = random_toy(rng, n, p, 0.2, 0.3);
    auto [d, spec] = toy_dataset(t);
    const CensoringModel g = fit_censoring(d, CensoringKind::KaplanMeier, {});
    const oracle::KaplanMeier km(t.time, t.code, g.floor());
    const Eigen::VectorXd fg = fit_fine_gray(d, g, spec).coefficients();
    auto f = [&](const Eigen::VectorXd& b) {
      return -oracle::fine_gray_loglik(t.time, t.code, t.x, b, km);
    };
    const Eigen::VectorXd nm = oracle::nelder_mead(f, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p)));
    nm_err = std::max(nm_err, (fg - nm).cwiseAbs().maxCoeff());
  }
  return {cox_err < 1e-6 && nm_err < 1e-4,
          fmt("max |beta - Cox oracle| = %.2e (20 instances, n<=200); max |beta - Nelder-Mead| = "
              "%.2e (20 instances, n<=30)",
              cox_err, nm_err)};
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n),
                  std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

Outcome dgp_fidelity() {
  CohortDataset d = sim(100000, 700);
  double share[3] = {0, 0, 0};
  for (const auto& s : d.subjects()) share[static_cast<int>(s.event)] += 1.0;
  for (double& s : share) s *= 100.0 / 1e5;
  const bool shares_ok = std::abs(share[1] - 42.0) <= 2.0 && std::abs(share[2] - 33.0) <= 2.0 &&
                         std::abs(share[0] - 25.0) <= 2.0;
  std::mt19937_64 rng(701);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  double ks = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const double y = z(rng);
    std::vector<double> s(100000);
    for (auto& v : s) v = dgp_main_time(u(rng), y);
    const double f_inf = dgp_cif(1e3, y);
    ks = std::max(ks, ks_distance(s, [&](double t) { return dgp_cif(t, y) / f_inf; }));
  }
  return {shares_ok && ks < 0.01,
          fmt("main %.1f%% competing %.1f%% censored %.1f%% (target 42/33/25 +-2); max KS = %.4f",
              share[1], share[2], share[0], ks)};
}

Outcome coefficient_recovery() {
  const DesignSpec spec{{"V1", "V2", "L1", "L2"}, true, {"V1", "V2"}};
  const auto cols = spec.column_names();
  const auto l1 = std::find(cols.begin(), cols.end(), "L1") - cols.begin();
  const auto av1 = std::find(cols.begin(), cols.end(), "a:V1") - cols.begin();
  std::vector<double> b_l1, b_av1;
  for (std::uint64_t b = 0; b < 20; ++b) {
    CohortDataset d = sim(10000, derive_seed(800, b));
    const CensoringModel g = fit_censoring(d, CensoringKind::CoxPH, {"V1", "V2", "L1", "L4"});
    const Eigen::VectorXd c = fit_fine_gray(d, g, spec).coefficients();
    b_l1.push_back(c[l1]);
    b_av1.push_back(c[av1]);
  }
  auto check = [](const std::vector<double>& v, double truth, double& mean, double& se) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return std::abs(mean - truth) <= 3.0 * se;
  };
  double m1, s1, m2, s2;
  const bool ok1 = check(b_l1, -0.9, m1, s1);
  const bool ok2 = check(b_av1, -0.8, m2, s2);
  return {ok1 && ok2, fmt("L1 %.4f (MC SE %.4f, truth -0.9); a:V1 %.4f (MC SE %.4f, truth -0.8)",
                          m1, s1, m2, s2)};
}

Outcome vim_orderings() {
  const PipelineConfig cfg = config_for(Scenario::S1);
  const int reps = 50;
  int pred_hits = 0;
  std::map<std::string, int> prog_hits;
  for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(reps); ++b) {
    CohortDataset d = sim(3000, derive_seed(900, b));
    const double t0 = event_time_quantile(d, 0.5);
    const VimReport pred = vim_predictive(d, t0, cfg);
    pred_hits += pred.entries.at(0).value > pred.entries.at(1).value;
    const VimReport prog = vim_prognostic(d, t0, cfg, std::vector<std::string>{"L1", "L4"});
    for (std::size_t m = 0; m < 4; ++m) {
      const auto& e1 = prog.entries.at(m);
      const auto& e4 = prog.entries.at(m + 4);
      prog_hits[e1.subgroup] += std::abs(e1.value) > std::abs(e4.value);
    }
  }
  const int need = static_cast<int>(std::ceil(0.9 * reps));
  bool ok = pred_hits >= need;
  std::string detail = fmt("VIM1(V1)>VIM1(V2) %d/%d; |VIM2(L1)|>|VIM2(L4)|", pred_hits, reps);
  for (const auto& [g, h] : prog_hits) {
    ok = ok && h >= need;
    detail += fmt(" %s %d/%d", g.c_str(), h, reps);
  }
  return {ok, detail};
}

bool monotone_capped(const TargetingState& st, double cap) {
  for (const auto& f : st.cif) {
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      for (Eigen::Index k = 0; k < f.cols(); ++k) {
        if (!(f(i, k) >= 0.0 && f(i, k) <= cap)) return false;
        if (k > 0 && f(i, k) < f(i, k - 1)) return false;
      }
    }
  }
  return true;
}

Outcome substitution_bound() {
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<std::size_t> size(120, 600);
  std::uniform_int_distribution<int> scen(1, 5);
  std::uniform_real_distribution<double> q(0.1, 0.9);
  std::bernoulli_distribution coin(0.5);
  int fits = 0;
  int errors = 0;
  int violations = 0;
  while (fits + errors < 10000) {
    CohortDataset d = sim(size(rng), rng(), coin(rng));
    const double t0 = event_time_quantile(d, q(rng));
    PipelineConfig cfg = config_for(static_cast<Scenario>(scen(rng)));
    cfg.initial = coin(rng) ? InitialLearner::S : InitialLearner::T;
    for (const auto& key : d.subgroups()) {
      if (fits + errors >= 10000) break;
      try {
        const SubgroupFit fit = fit_subgroup(d.subgroup(key), t0, cfg, key);
        ++fits;
        const double psi = fit.estimate.psi_hat;
        const bool ok = psi >= -1.0 && psi <= 1.0 && monotone_capped(fit.initial, fit.problem.cif_cap) &&
                        monotone_capped(fit.targeted, fit.problem.cif_cap);
        violations += !ok;
      } catch (const DataError&) {
        ++errors;
      } catch (const NumericalError&) {
        ++errors;
      }
    }
  }
  return {violations == 0,
          fmt("%d fits, %d violations (%d fits stopped with a reported error)", fits, violations,
              errors)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"coverage, S1 n=1500 B=200", coverage_s1},
      {"double robustness, S2-S5 n=3000 B=100", double_robustness},
      {"S-learner contrast, S2 n=3000 B=100", misspecification_contrast},
      {"EIF equation solved", eif_equation},
      {"score equals EIF martingale mean", score_identity},
      {"Fine-Gray oracle equivalence", fine_gray_oracles},
      {"simulator fidelity", dgp_fidelity},
      {"coefficient recovery n=1e4", coefficient_recovery},
      {"variable importance orderings", vim_orderings},
      {"substitution bound", substitution_bound},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    if (!selected.empty() && !selected.count(c + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2zu %s: %s [%.0fs]\n", o.pass ? "PASS" : "FAIL", c + 1,
                criteria[c].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
