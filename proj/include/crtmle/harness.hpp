#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crtmle/dgp.hpp"

namespace crtmle {

// Runs fn(0..count-1) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

enum class McLearner { Tmle, TmleT, S, T };

std::string learner_name(McLearner l);
McLearner parse_learner(const std::string& s);

struct McOptions {
  std::vector<Scenario> scenarios{Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4,
                                  Scenario::S5};
  std::vector<std::size_t> sample_sizes{1500};
  int replicates = 200;
  std::vector<McLearner> learners{McLearner::Tmle, McLearner::S, McLearner::T};
  bool high_dim = false;
  bool lasso = false;  // cross-validated L1 penalty on the outcome model
  double t0_quantile = 0.5;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool bootstrap = false;  // percentile intervals for the S/T learners
  int bootstrap_replicates = 200;
  std::size_t oracle_draws = 1000000;
};

// Desk-scale defaults, or the full profile (B = 500, n in {800, 1500, 3000}).
McOptions desk_profile();
McOptions full_profile();

struct ReplicateRecord {
  Scenario scenario = Scenario::S1;
  std::size_t n = 0;
  McLearner learner = McLearner::Tmle;
  int replicate = 0;
  std::string subgroup;
  double t0 = 0.0;
  double truth = 0.0;
  double psi = 0.0;
  double se = 0.0;  // NaN when not available
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 0.0;
  int iterations = 0;
  bool failed = false;
  std::string error;
};

struct SubgroupSummary {
  std::string subgroup;
  double truth = 0.0;  // mean over replicates (t0 varies by replicate)
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;   // NaN without intervals
  double rejection = 0.0;  // NaN without p-values or intervals
  double mean_iterations = 0.0;
  int failures = 0;
  int used = 0;
};

struct McSummary {
  Scenario scenario = Scenario::S1;
  McLearner learner = McLearner::Tmle;
  std::size_t n = 0;
  int replicates = 0;
  std::vector<SubgroupSummary> subgroups;
  int failed_replicates = 0;
  bool unreliable = false;
};

struct McResult {
  std::vector<McSummary> summaries;
  std::vector<ReplicateRecord> records;
};

McResult run_mc(const McOptions& options);

// Aggregates records of one (scenario, learner, n) cell, in record order.
McSummary summarize(const std::vector<ReplicateRecord>& records, Scenario scenario,
                    McLearner learner, std::size_t n, int replicates);

// Writes coverage.csv, bias_rmse.csv, summary.txt and, when requested,
// replicates.csv into out_dir.
void emit_report(const McResult& result, const std::string& out_dir, bool dump_replicates);

}  // namespace crtmle
