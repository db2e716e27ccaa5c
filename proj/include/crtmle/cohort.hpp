#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace crtmle {

enum class EventType : int { Censored = 0, Main = 1, Competing = 2 };

// One row of observed data: observed time min(T, C), observed event code,
// binary treatment and the baseline covariate vector.
struct SubjectRecord {
  std::string id;
  double time = 0.0;
  EventType event = EventType::Censored;
  int treatment = 0;
  std::vector<double> covariates;
};

// Levels of the predictive covariates that define one subgroup.
struct SubgroupKey {
  std::vector<double> values;

  auto operator<=>(const SubgroupKey&) const = default;
};

// Validated collection of subjects with predictive (stratifying) and
// prognostic covariate designations. Immutable after construction.
class CohortDataset {
 public:
  static constexpr std::size_t kDefaultMaxLevels = 10;

  CohortDataset(std::vector<SubjectRecord> subjects, std::vector<std::string> covariate_names,
                std::vector<std::size_t> predictive_idx, std::vector<std::size_t> prognostic_idx,
                std::size_t max_levels = kDefaultMaxLevels);

  std::size_t size() const noexcept { return subjects_.size(); }
  bool empty() const noexcept { return subjects_.empty(); }
  const SubjectRecord& operator[](std::size_t i) const { return subjects_[i]; }
  const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const std::vector<std::size_t>& predictive_idx() const noexcept { return predictive_idx_; }
  const std::vector<std::size_t>& prognostic_idx() const noexcept { return prognostic_idx_; }
  std::size_t max_levels() const noexcept { return max_levels_; }

  std::vector<std::string> predictive_names() const;
  std::vector<std::string> prognostic_names() const;

  // Throws DataError when the name is not a covariate column.
  std::size_t covariate_index(const std::string& name) const;

  // Subgroups in lexicographic order of their level tuples.
  const std::vector<SubgroupKey>& subgroups() const noexcept { return keys_; }
  const SubgroupKey& subgroup_of(std::size_t i) const { return keys_[membership_[i]]; }
  const std::vector<std::size_t>& members(const SubgroupKey& key) const;
  std::string subgroup_label(const SubgroupKey& key) const;

  // Rows in the given order; designations are kept.
  CohortDataset subset(std::span<const std::size_t> rows) const;
  CohortDataset subgroup(const SubgroupKey& key) const { return subset(members(key)); }
  // Same rows, re-stratified on a different predictive set (given by name).
  CohortDataset with_predictive(const std::vector<std::string>& names) const;

 private:
  std::vector<SubjectRecord> subjects_;
  std::vector<std::string> covariate_names_;
  std::vector<std::size_t> predictive_idx_;
  std::vector<std::size_t> prognostic_idx_;
  std::size_t max_levels_;
  std::vector<SubgroupKey> keys_;
  std::vector<std::size_t> membership_;
  std::vector<std::vector<std::size_t>> members_;
};

// Header plus string cells, as read from a CSV file.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

// Columns id,time,event,a,<covariates...>. Covariates named in v_names become
// predictive; l_names prognostic (all remaining covariates when empty).
CohortDataset validate_cohort(const RawTable& raw, const std::vector<std::string>& v_names,
                              const std::vector<std::string>& l_names,
                              std::size_t max_levels = CohortDataset::kDefaultMaxLevels);

void write_cohort_csv(std::ostream& out, const CohortDataset& data);

// 1 iff the subject is in the subdistribution risk set at t: still event free
// (observed time >= t) or already had a competing event. Censoring removal is
// handled by the IPCW weights.
int subdist_risk_indicator(const SubjectRecord& s, double t);
// N(t) = 1(observed time <= t, main event).
int counting_process(const SubjectRecord& s, double t);
// Y(t) = 1 - N(t-).
int at_risk_y(const SubjectRecord& s, double t);

// Distinct main-event times of a cohort plus the analysis horizon.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(std::vector<double> times, double horizon);
  static TimeGrid from_main_events(const CohortDataset& data, double horizon);

  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  double operator[](std::size_t k) const { return times_[k]; }
  const std::vector<double>& times() const noexcept { return times_; }
  double horizon() const noexcept { return horizon_; }
  // Number of grid times <= horizon.
  std::size_t horizon_index() const noexcept { return horizon_count_; }
  // First k with times[k] > t.
  std::size_t upper_index(double t) const;
  // k with times[k] == t, or size() when absent.
  std::size_t find(double t) const;

 private:
  std::vector<double> times_;
  double horizon_ = 0.0;
  std::size_t horizon_count_ = 0;
};

// Empirical quantile (linear interpolation between order statistics) of the
// observed times with a non-censored event code.
double event_time_quantile(const CohortDataset& data, double q);

// Linear-interpolation sample quantile of an unsorted sample.
double sample_quantile(std::vector<double> values, double q);

}  // namespace crtmle
