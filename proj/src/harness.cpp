#include "crtmle/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "crtmle/errors.hpp"
#include "crtmle/learners.hpp"
#include "crtmle/pipeline.hpp"

namespace crtmle {

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string learner_name(McLearner l) {
  switch (l) {
    case McLearner::Tmle: return "tmle";
    case McLearner::TmleT: return "tmle-t";
    case McLearner::S: return "s";
    case McLearner::T: return "t";
  }
  return "?";
}

McLearner parse_learner(const std::string& s) {
  if (s == "tmle") return McLearner::Tmle;
  if (s == "tmle-t") return McLearner::TmleT;
  if (s == "s") return McLearner::S;
  if (s == "t") return McLearner::T;
  throw DataError("unknown learner '" + s + "' (expected tmle, tmle-t, s or t)");
}

McOptions desk_profile() { return McOptions{}; }

McOptions full_profile() {
  McOptions o;
  o.replicates = 500;
  o.sample_sizes = {800, 1500, 3000};
  return o;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PipelineConfig scenario_config(const McOptions& opt, Scenario s, McLearner learner) {
  PipelineConfig cfg;
  cfg.designs = misspecified_designs(s, opt.high_dim);
  cfg.initial = learner == McLearner::TmleT || learner == McLearner::T ? InitialLearner::T
                                                                        : InitialLearner::S;
  cfg.cross_validate_penalty = opt.lasso;
  return cfg;
}

ReplicateRecord fit_one(const McOptions& opt, const CohortDataset& sub, double t0, Scenario s,
                        McLearner learner, std::uint64_t boot_seed) {
  ReplicateRecord r;
  const PipelineConfig cfg = scenario_config(opt, s, learner);
  if (learner == McLearner::Tmle || learner == McLearner::TmleT) {
    const SubgroupFit fit = fit_subgroup(sub, t0, cfg);
    r.psi = fit.estimate.psi_hat;
    r.se = fit.estimate.se;
    r.ci_lo = fit.estimate.ci_lo;
    r.ci_hi = fit.estimate.ci_hi;
    r.p_value = fit.estimate.p_value;
    r.iterations = fit.estimate.iterations;
    if (!fit.estimate.converged) {
      r.failed = true;
      r.error = "targeting did not converge";
    }
    return r;
  }
  const LearnerKind kind = learner == McLearner::S ? LearnerKind::SLearner : LearnerKind::TLearner;
  r.psi = learner_cate(kind, sub, t0, cfg);
  r.se = kNaN;
  r.p_value = kNaN;
  r.ci_lo = kNaN;
  r.ci_hi = kNaN;
  if (opt.bootstrap) {
    auto ci = bootstrap_ci(kind, sub, t0, cfg, boot_seed, opt.bootstrap_replicates);
    r.ci_lo = ci.lo;
    r.ci_hi = ci.hi;
  }
  return r;
}

std::vector<ReplicateRecord> run_replicate(const McOptions& opt, const CateOracle& oracle,
                                           std::size_t n, int b) {
  ScenarioConfig sc;
  sc.n = n;
  sc.high_dim = opt.high_dim;
  sc.t0_quantile = opt.t0_quantile;
  sc.seed = derive_seed(derive_seed(opt.seed, n), static_cast<std::uint64_t>(b));
  const CohortDataset data = simulate(sc);
  const double t0 = event_time_quantile(data, opt.t0_quantile);
  const auto truth = oracle.truth(t0);

  std::map<std::string, SubgroupKey> keys;
  for (const auto& k : data.subgroups()) keys.emplace(data.subgroup_label(k), k);

  std::vector<ReplicateRecord> out;
  std::uint64_t cell = 0;
  for (Scenario s : opt.scenarios) {
    for (McLearner l : opt.learners) {
      for (const auto& tr : truth) {
        ++cell;
        ReplicateRecord r;
        auto it = keys.find(tr.label);
        try {
          if (it == keys.end()) throw DataError("empty subgroup");
          r = fit_one(opt, data.subgroup(it->second), t0, s, l, derive_seed(sc.seed, cell));
        } catch (const std::exception& e) {
          r = ReplicateRecord{};
          r.failed = true;
          r.error = e.what();
        }
        r.scenario = s;
        r.n = n;
        r.learner = l;
        r.replicate = b;
        r.subgroup = tr.label;
        r.t0 = t0;
        r.truth = tr.psi;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace

McSummary summarize(const std::vector<ReplicateRecord>& records, Scenario scenario,
                    McLearner learner, std::size_t n, int replicates) {
  McSummary sum;
  sum.scenario = scenario;
  sum.learner = learner;
  sum.n = n;
  sum.replicates = replicates;
  std::map<std::string, std::size_t> index;
  struct Acc {
    double truth = 0, err = 0, err2 = 0, cover = 0, reject = 0, iters = 0;
    int intervals = 0, tests = 0;
  };
  std::vector<Acc> acc;
  std::map<int, bool> failed_rep;
  for (const auto& r : records) {
    if (r.scenario != scenario || r.learner != learner || r.n != n) continue;
    auto [it, inserted] = index.emplace(r.subgroup, sum.subgroups.size());
    if (inserted) {
      sum.subgroups.push_back(SubgroupSummary{});
      sum.subgroups.back().subgroup = r.subgroup;
      acc.emplace_back();
    }
    SubgroupSummary& s = sum.subgroups[it->second];
    Acc& a = acc[it->second];
    failed_rep[r.replicate] = failed_rep[r.replicate] || r.failed;
    if (r.failed) {
      ++s.failures;
      continue;
    }
    ++s.used;
    const double e = r.psi - r.truth;
    a.truth += r.truth;
    a.err += e;
    a.err2 += e * e;
    a.iters += r.iterations;
    if (!std::isnan(r.ci_lo)) {
      ++a.intervals;
      a.cover += (r.ci_lo <= r.truth && r.truth <= r.ci_hi) ? 1.0 : 0.0;
    }
    if (!std::isnan(r.p_value)) {
      ++a.tests;
      a.reject += r.p_value < 0.05 ? 1.0 : 0.0;
    } else if (!std::isnan(r.ci_lo)) {
      ++a.tests;
      a.reject += (r.ci_lo > 0.0 || r.ci_hi < 0.0) ? 1.0 : 0.0;
    }
  }
  for (std::size_t m = 0; m < sum.subgroups.size(); ++m) {
    SubgroupSummary& s = sum.subgroups[m];
    const Acc& a = acc[m];
    const double u = s.used;
    s.truth = s.used ? a.truth / u : kNaN;
    s.bias = s.used ? a.err / u : kNaN;
    s.rmse = s.used ? std::sqrt(a.err2 / u) : kNaN;
    s.mean_iterations = s.used ? a.iters / u : kNaN;
    s.coverage = a.intervals ? a.cover / a.intervals : kNaN;
    s.rejection = a.tests ? a.reject / a.tests : kNaN;
  }
  for (const auto& [rep, f] : failed_rep) sum.failed_replicates += f ? 1 : 0;
  sum.unreliable = replicates > 0 && sum.failed_replicates > 0.05 * replicates;
  return sum;
}

McResult run_mc(const McOptions& opt) {
  if (opt.replicates < 1) throw DataError("need at least one replicate");
  if (opt.scenarios.empty() || opt.learners.empty() || opt.sample_sizes.empty()) {
    throw DataError("empty scenario, learner or sample-size list");
  }
  const CateOracle oracle(DgpModel::standard(opt.high_dim), opt.oracle_draws);
  calibrated_lambda0(opt.high_dim);  // warm the cache before threads start
  McResult result;
  for (std::size_t n : opt.sample_sizes) {
    std::vector<std::vector<ReplicateRecord>> per(static_cast<std::size_t>(opt.replicates));
    parallel_for(per.size(), opt.jobs, [&](std::size_t b) {
      per[b] = run_replicate(opt, oracle, n, static_cast<int>(b));
    });
    for (auto& v : per) {
      for (auto& r : v) result.records.push_back(std::move(r));
    }
    for (Scenario s : opt.scenarios) {
      for (McLearner l : opt.learners) {
        result.summaries.push_back(summarize(result.records, s, l, n, opt.replicates));
      }
    }
  }
  return result;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string quote_free(std::string s) {
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace

void emit_report(const McResult& result, const std::string& out_dir, bool dump_replicates) {
  if (result.summaries.empty()) throw DataError("no summaries to report");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path dir(out_dir);

  {
    auto out = open_out(dir / "coverage.csv");
    out << "scenario,subgroup,n,learner,coverage\n";
    for (const auto& s : result.summaries) {
      for (const auto& g : s.subgroups) {
        if (std::isnan(g.coverage)) continue;
        out << scenario_name(s.scenario) << ',' << g.subgroup << ',' << s.n << ','
            << learner_name(s.learner) << ',' << num(g.coverage) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "bias_rmse.csv");
    out << "learner,scenario,n,subgroup,truth,bias,rmse,coverage,rejection,mean_iterations,"
           "failures,used\n";
    for (const auto& s : result.summaries) {
      for (const auto& g : s.subgroups) {
        out << learner_name(s.learner) << ',' << scenario_name(s.scenario) << ',' << s.n << ','
            << g.subgroup << ',' << num(g.truth) << ',' << num(g.bias) << ',' << num(g.rmse)
            << ',' << num(g.coverage) << ',' << num(g.rejection) << ','
            << num(g.mean_iterations) << ',' << g.failures << ',' << g.used << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "summary.txt");
    for (const auto& s : result.summaries) {
      out << scenario_name(s.scenario) << "  learner=" << learner_name(s.learner)
          << "  n=" << s.n << "  B=" << s.replicates
          << "  failed replicates=" << s.failed_replicates;
      if (s.unreliable) out << "  UNRELIABLE (>5% failures)";
      out << '\n';
      out << "  subgroup        truth      bias      rmse  coverage  reject  iters\n";
      for (const auto& g : s.subgroups) {
        char line[200];
        std::snprintf(line, sizeof line, "  %-12s %8s %9s %9s %9s %7s %6s\n",
                      g.subgroup.c_str(), fixed(g.truth, 4).c_str(), fixed(g.bias, 4).c_str(),
                      fixed(g.rmse, 4).c_str(), fixed(g.coverage, 3).c_str(),
                      fixed(g.rejection, 3).c_str(), fixed(g.mean_iterations, 1).c_str());
        out << line;
      }
      out << '\n';
    }
  }
  if (dump_replicates) {
    auto out = open_out(dir / "replicates.csv");
    out << "scenario,n,learner,replicate,subgroup,t0,truth,psi,se,ci_lo,ci_hi,p,iterations,"
           "failed,error\n";
    for (const auto& r : result.records) {
      out << scenario_name(r.scenario) << ',' << r.n << ',' << learner_name(r.learner) << ','
          << r.replicate << ',' << r.subgroup << ',' << num(r.t0) << ',' << num(r.truth) << ','
          << (r.failed ? "" : num(r.psi)) << ',' << (r.failed ? "" : num(r.se)) << ','
          << (r.failed ? "" : num(r.ci_lo)) << ',' << (r.failed ? "" : num(r.ci_hi)) << ','
          << (r.failed ? "" : num(r.p_value)) << ',' << r.iterations << ','
          << (r.failed ? 1 : 0) << ",\"" << quote_free(r.error) << "\"\n";
    }
  }
}

}  // namespace crtmle
