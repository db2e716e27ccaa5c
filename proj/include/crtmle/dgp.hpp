#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crtmle/cohort.hpp"
#include "crtmle/pipeline.hpp"

namespace crtmle {

enum class Scenario { S1 = 1, S2, S3, S4, S5 };

Scenario parse_scenario(const std::string& s);
std::string scenario_name(Scenario s);

struct LinearTerm {
  std::string covariate;
  double coef = 0.0;
};

// Simulation model. Y1 = sum(prognostic) + A * sum(effect) + shift (A - 0.5);
// Pr(main) = 1 - (1 - p)^exp(Y1), main times from the unit exponential
// mixture, competing times exponential with rate exp(competing_scale * Y1),
// censoring exponential with rate lambda0 * exp(censoring terms).
struct DgpModel {
  bool high_dim = false;
  std::vector<LinearTerm> treatment;
  std::vector<LinearTerm> prognostic;
  std::vector<LinearTerm> effect;
  double shift = 0.5;
  std::vector<LinearTerm> censoring;
  double p = 0.7;
  double competing_scale = 0.5;

  static DgpModel standard(bool high_dim = false);
  // Treatment removed from Y1.
  DgpModel null_effect() const;

  std::vector<std::string> covariate_names() const;
  // Number of leading covariates drawn as Bernoulli(0.5); the rest are N(0,1).
  std::size_t binary_count() const;
};

struct ScenarioConfig {
  std::size_t n = 1500;
  Scenario scenario = Scenario::S1;
  bool high_dim = false;
  double t0_quantile = 0.5;
  std::uint64_t seed = 1;
  double lambda0 = 0.0;  // <= 0: calibrated to 25% censoring
};

// Latent draw of one subject before censoring is applied.
struct LatentSubject {
  std::vector<double> covariates;
  int treatment = 0;
  double event_time = 0.0;
  EventType cause = EventType::Main;
  double unit_exponential = 0.0;  // censoring time = this / rate
  double censoring_lp = 0.0;
};

LatentSubject draw_subject(const DgpModel& model, std::mt19937_64& rng);

// Linear predictor Y1 for given covariates and treatment.
double outcome_predictor(const DgpModel& model, const std::vector<std::string>& names,
                         const std::vector<double>& x, int a);

CohortDataset simulate(const ScenarioConfig& config, const DgpModel& model);
CohortDataset simulate(const ScenarioConfig& config);

// Closed-form F1(t) for linear predictor y.
double dgp_cif(double t, double y, double p = 0.7);
// Inverse of F1(t) / F1(inf) at probability u.
double dgp_main_time(double u, double y, double p = 0.7);

// lambda0 giving the target censoring share over `draws` draws (common random
// numbers across the bisection). Throws DataError when unreachable in
// [1e-4, 10].
double calibrate_lambda0(const DgpModel& model, double target = 0.25, std::size_t draws = 100000,
                         std::uint64_t seed = 20240601);
// Memoized calibration for the standard models at 25% censoring.
double calibrated_lambda0(bool high_dim);

struct SubgroupTruth {
  std::string label;
  double psi = 0.0;
  double se = 0.0;
};

// True subgroup CATE by averaging the closed-form CIF difference over fixed
// prognostic-covariate draws (L is independent of V).
class CateOracle {
 public:
  CateOracle(const DgpModel& model, std::size_t draws = 1000000, std::uint64_t seed = 987654321);

  std::vector<SubgroupTruth> truth(double t0) const;

 private:
  DgpModel model_;
  std::vector<double> exp_eta_;  // exp(prognostic L part of Y1) per draw
};

std::vector<SubgroupTruth> true_cate(const DgpModel& model, double t0,
                                     std::size_t draws = 1000000, std::uint64_t seed = 987654321);

// Outcome/treatment/censoring designs of a scenario.
NuisanceDesigns misspecified_designs(Scenario scenario, bool high_dim = false);

// Independent per-replicate seed (splitmix64 of master and index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace crtmle
