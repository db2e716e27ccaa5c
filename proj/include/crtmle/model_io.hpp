#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crtmle/pipeline.hpp"

namespace crtmle {

inline constexpr int kModelFormatVersion = 1;

// Nuisance models and estimate of one subgroup, as stored on disk.
struct StoredSubgroup {
  std::string label;
  std::vector<double> key;
  InitialLearner initial = InitialLearner::S;
  SubdistributionModel outcome0;
  SubdistributionModel outcome1;
  PropensityModel propensity;
  CensoringModel censoring;
  CateEstimate estimate;
};

struct StoredModel {
  int version = kModelFormatVersion;
  double t0 = 0.0;
  std::vector<std::string> covariate_names;
  std::vector<std::string> predictive;
  std::vector<std::string> prognostic;
  Truncation truncation;
  std::vector<StoredSubgroup> subgroups;
};

StoredModel make_stored_model(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                              const std::vector<SubgroupFit>& fits);

void write_model(std::ostream& out, const StoredModel& model);
// Throws DataError on malformed documents or unsupported versions.
StoredModel read_model(std::istream& in);

// F(t | a, x) of the stored subgroup's initial outcome model.
double stored_cif(const StoredSubgroup& sg, int a, std::span<const double> x, double t,
                  double cap);

}  // namespace crtmle
