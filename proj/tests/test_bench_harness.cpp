#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "crtmle/errors.hpp"
#include "crtmle/harness.hpp"

using namespace crtmle;
namespace fs = std::filesystem;

namespace {

McOptions small_options() {
  McOptions o;
  o.scenarios = {Scenario::S1, Scenario::S2};
  o.sample_sizes = {400};
  o.replicates = 3;
  o.learners = {McLearner::Tmle, McLearner::S};
  o.oracle_draws = 20000;
  o.seed = 11;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("crtmle_harness_" + name);
  fs::remove_all(p);
  return p;
}

ReplicateRecord record(int b, const std::string& g, double truth, double psi, double lo, double hi,
                       double p, bool failed = false) {
  ReplicateRecord r;
  r.replicate = b;
  r.subgroup = g;
  r.n = 100;
  r.truth = truth;
  r.psi = psi;
  r.ci_lo = lo;
  r.ci_hi = hi;
  r.p_value = p;
  r.failed = failed;
  return r;
}

}  // namespace

TEST_CASE("parallel_for visits every index once and propagates errors") {
  for (int jobs : {1, 3}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(5, 2,
                               [](std::size_t i) {
                                 if (i == 3) throw DataError("boom");
                               }),
                  DataError);
}

TEST_CASE("learner names round trip") {
  for (auto l : {McLearner::Tmle, McLearner::TmleT, McLearner::S, McLearner::T}) {
    CHECK(parse_learner(learner_name(l)) == l);
  }
  CHECK_THROWS_AS(parse_learner("x"), DataError);
}

TEST_CASE("single replicate has rmse equal to absolute bias") {
  std::vector<ReplicateRecord> r{record(0, "g", 0.10, 0.13, 0.0, 0.2, 0.3),
                                 record(0, "h", -0.2, -0.25, -0.3, -0.22, 0.01)};
  McSummary s = summarize(r, Scenario::S1, McLearner::Tmle, 100, 1);
  REQUIRE(s.subgroups.size() == 2);
  for (const auto& g : s.subgroups) CHECK(g.rmse == doctest::Approx(std::abs(g.bias)).epsilon(1e-15));
  CHECK(s.subgroups[0].coverage == 1.0);
  CHECK(s.subgroups[1].coverage == 0.0);
  CHECK(s.subgroups[0].rejection == 0.0);
  CHECK(s.subgroups[1].rejection == 1.0);
}

TEST_CASE("summary arithmetic") {
  std::vector<ReplicateRecord> r{record(0, "g", 0.0, 0.1, -0.1, 0.3, 0.2),
                                 record(1, "g", 0.0, -0.3, -0.5, -0.1, 0.01),
                                 record(2, "g", 0.0, 0.2, 0.1, 0.3, 0.04)};
  McSummary s = summarize(r, Scenario::S1, McLearner::Tmle, 100, 3);
  const auto& g = s.subgroups.at(0);
  CHECK(g.bias == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(g.rmse == doctest::Approx(std::sqrt((0.01 + 0.09 + 0.04) / 3.0)).epsilon(1e-15));
  CHECK(g.coverage == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(g.rejection == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // other cells are ignored
  CHECK(summarize(r, Scenario::S2, McLearner::Tmle, 100, 3).subgroups.empty());
}

TEST_CASE("failures are excluded and flag unreliable cells") {
  std::vector<ReplicateRecord> r;
  for (int b = 0; b < 20; ++b) r.push_back(record(b, "g", 0.0, 0.1, 0.0, 0.2, 0.5, b == 4));
  McSummary ok = summarize(r, Scenario::S1, McLearner::Tmle, 100, 20);
  CHECK(ok.failed_replicates == 1);
  CHECK(ok.subgroups[0].failures == 1);
  CHECK(ok.subgroups[0].used == 19);
  CHECK_FALSE(ok.unreliable);
  r[7].failed = true;
  McSummary bad = summarize(r, Scenario::S1, McLearner::Tmle, 100, 20);
  CHECK(bad.failed_replicates == 2);
  CHECK(bad.unreliable);
}

TEST_CASE("missing intervals leave coverage undefined") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<ReplicateRecord> r{record(0, "g", 0.0, 0.1, nan, nan, nan)};
  r[0].learner = McLearner::S;
  McSummary s = summarize(r, Scenario::S1, McLearner::S, 100, 1);
  REQUIRE(s.subgroups.size() == 1);
  CHECK(std::isnan(s.subgroups[0].coverage));
  CHECK(std::isnan(s.subgroups[0].rejection));
}

TEST_CASE("Monte Carlo runs are deterministic across thread counts") {
  McOptions o = small_options();
  const McResult a = run_mc(o);
  o.jobs = 2;
  const McResult b = run_mc(o);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(a.records.size() == 3u * 2u * 2u * 4u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].subgroup == b.records[i].subgroup);
    CHECK(a.records[i].failed == b.records[i].failed);
    if (!a.records[i].failed) CHECK(a.records[i].psi == b.records[i].psi);
  }

  const fs::path d1 = temp_dir("a");
  const fs::path d2 = temp_dir("b");
  emit_report(a, d1.string(), true);
  emit_report(b, d2.string(), true);
  for (const char* f : {"coverage.csv", "bias_rmse.csv", "summary.txt", "replicates.csv"}) {
    CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(!slurp(d1 / f).empty());
  }

  // S-learner rows have no intervals without the bootstrap
  CHECK(read_csv(d1 / "coverage.csv").size() == 2u * 4u);

  // aggregates are recomputable from the dumped replicates
  std::map<std::string, std::pair<double, int>> err;
  for (const auto& row : read_csv(d1 / "replicates.csv")) {
    if (row[13] == "1") continue;
    auto& e = err[row[0] + "|" + row[2] + "|" + row[1] + "|" + row[4]];
    e.first += std::stod(row[7]) - std::stod(row[6]);
    e.second += 1;
  }
  const auto agg = read_csv(d1 / "bias_rmse.csv");
  CHECK(agg.size() == 2u * 2u * 4u);
  for (const auto& row : agg) {
    const auto it = err.find(row[1] + "|" + row[0] + "|" + row[2] + "|" + row[3]);
    REQUIRE(it != err.end());
    CHECK(std::abs(it->second.first / it->second.second - std::stod(row[5])) < 1e-12);
    CHECK(std::stoi(row[11]) == it->second.second);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("bootstrap intervals give S-learner coverage rows") {
  McOptions o = small_options();
  o.scenarios = {Scenario::S1};
  o.learners = {McLearner::S};
  o.replicates = 1;
  o.bootstrap = true;
  o.bootstrap_replicates = 100;
  const McResult r = run_mc(o);
  const fs::path d = temp_dir("boot");
  emit_report(r, d.string(), false);
  CHECK(read_csv(d / "coverage.csv").size() == 4u);
  CHECK_FALSE(fs::exists(d / "replicates.csv"));
  fs::remove_all(d);
}

TEST_CASE("invalid Monte Carlo options") {
  McOptions o = small_options();
  o.replicates = 0;
  CHECK_THROWS_AS(run_mc(o), DataError);
  o = small_options();
  o.learners.clear();
  CHECK_THROWS_AS(run_mc(o), DataError);
  CHECK_THROWS_AS(emit_report(McResult{}, temp_dir("none").string(), false), DataError);
}

TEST_CASE("profiles") {
  CHECK(desk_profile().replicates == 200);
  CHECK(full_profile().replicates == 500);
  CHECK(full_profile().sample_sizes == std::vector<std::size_t>{800, 1500, 3000});
}
