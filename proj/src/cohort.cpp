#include "crtmle/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "crtmle/errors.hpp"

namespace crtmle {

namespace {

std::string format_level(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::ostringstream os;
    os << static_cast<long long>(v);
    return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError("row " + std::to_string(row + 1) + ": column '" + column +
                    "' is not a finite number: '" + cell + "'");
  }
  return value;
}

}  // namespace

CohortDataset::CohortDataset(std::vector<SubjectRecord> subjects,
                             std::vector<std::string> covariate_names,
                             std::vector<std::size_t> predictive_idx,
                             std::vector<std::size_t> prognostic_idx, std::size_t max_levels)
    : subjects_(std::move(subjects)),
      covariate_names_(std::move(covariate_names)),
      predictive_idx_(std::move(predictive_idx)),
      prognostic_idx_(std::move(prognostic_idx)),
      max_levels_(max_levels) {
  const std::size_t p = covariate_names_.size();
  for (std::size_t j : predictive_idx_) {
    if (j >= p) throw DataError("predictive index out of range");
  }
  for (std::size_t j : prognostic_idx_) {
    if (j >= p) throw DataError("prognostic index out of range");
    if (std::find(predictive_idx_.begin(), predictive_idx_.end(), j) != predictive_idx_.end()) {
      throw DataError("covariate '" + covariate_names_[j] +
                      "' is designated both predictive and prognostic");
    }
  }
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    const auto& s = subjects_[i];
    if (!(s.time >= 0.0) || !std::isfinite(s.time)) {
      throw DataError("subject '" + s.id + "': negative time");
    }
    const int code = static_cast<int>(s.event);
    if (code < 0 || code > 2) throw DataError("subject '" + s.id + "': invalid event code");
    if (s.treatment != 0 && s.treatment != 1) {
      throw DataError("subject '" + s.id + "': non-binary treatment");
    }
    if (s.covariates.size() != p) {
      throw DataError("subject '" + s.id + "': covariate vector length mismatch");
    }
  }

  std::vector<std::set<double>> levels(predictive_idx_.size());
  for (const auto& s : subjects_) {
    for (std::size_t v = 0; v < predictive_idx_.size(); ++v) {
      levels[v].insert(s.covariates[predictive_idx_[v]]);
    }
  }
  for (std::size_t v = 0; v < predictive_idx_.size(); ++v) {
    if (levels[v].size() > max_levels_) {
      throw DataError("predictive covariate '" + covariate_names_[predictive_idx_[v]] + "' has " +
                      std::to_string(levels[v].size()) + " levels (max " +
                      std::to_string(max_levels_) + ")");
    }
  }

  std::map<SubgroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    SubgroupKey key;
    key.values.reserve(predictive_idx_.size());
    for (std::size_t j : predictive_idx_) key.values.push_back(subjects_[i].covariates[j]);
    groups[key].push_back(i);
  }
  membership_.assign(subjects_.size(), 0);
  for (auto& [key, rows] : groups) {
    for (std::size_t i : rows) membership_[i] = keys_.size();
    keys_.push_back(key);
    members_.push_back(std::move(rows));
  }
}

std::vector<std::string> CohortDataset::predictive_names() const {
  std::vector<std::string> out;
  for (std::size_t j : predictive_idx_) out.push_back(covariate_names_[j]);
  return out;
}

std::vector<std::string> CohortDataset::prognostic_names() const {
  std::vector<std::string> out;
  for (std::size_t j : prognostic_idx_) out.push_back(covariate_names_[j]);
  return out;
}

std::size_t CohortDataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end()) throw DataError("unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names_.begin());
}

const std::vector<std::size_t>& CohortDataset::members(const SubgroupKey& key) const {
  auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key) throw DataError("unknown subgroup " + subgroup_label(key));
  return members_[static_cast<std::size_t>(it - keys_.begin())];
}

std::string CohortDataset::subgroup_label(const SubgroupKey& key) const {
  if (predictive_idx_.empty()) return "all";
  std::string out;
  for (std::size_t v = 0; v < predictive_idx_.size() && v < key.values.size(); ++v) {
    if (v) out += ';';
    out += covariate_names_[predictive_idx_[v]] + "=" + format_level(key.values[v]);
  }
  return out;
}

CohortDataset CohortDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<SubjectRecord> picked;
  picked.reserve(rows.size());
  for (std::size_t i : rows) picked.push_back(subjects_.at(i));
  return CohortDataset(std::move(picked), covariate_names_, predictive_idx_, prognostic_idx_,
                       max_levels_);
}

CohortDataset CohortDataset::with_predictive(const std::vector<std::string>& names) const {
  std::vector<std::size_t> pred;
  for (const auto& n : names) pred.push_back(covariate_index(n));
  std::vector<std::size_t> prog;
  for (std::size_t j : prognostic_idx_) {
    if (std::find(pred.begin(), pred.end(), j) == pred.end()) prog.push_back(j);
  }
  return CohortDataset(subjects_, covariate_names_, std::move(pred), std::move(prog),
                       max_levels_);
}

RawTable read_csv(std::istream& in) {
  RawTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError("row " + std::to_string(table.rows.size() + 1) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError("missing CSV header");
  return table;
}

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

CohortDataset validate_cohort(const RawTable& raw, const std::vector<std::string>& v_names,
                              const std::vector<std::string>& l_names, std::size_t max_levels) {
  if (raw.rows.empty()) throw DataError("no data rows");
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(raw.header.begin(), raw.header.end(), name);
    if (it == raw.header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - raw.header.begin());
  };
  const std::size_t c_id = column("id");
  const std::size_t c_time = column("time");
  const std::size_t c_event = column("event");
  const std::size_t c_a = column("a");

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    if (c == c_id || c == c_time || c == c_event || c == c_a) continue;
    cov_cols.push_back(c);
    cov_names.push_back(raw.header[c]);
  }
  auto cov_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(cov_names.begin(), cov_names.end(), name);
    if (it == cov_names.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - cov_names.begin());
  };
  std::vector<std::size_t> pred;
  for (const auto& v : v_names) pred.push_back(cov_index(v));
  std::vector<std::size_t> prog;
  if (l_names.empty()) {
    for (std::size_t j = 0; j < cov_names.size(); ++j) {
      if (std::find(pred.begin(), pred.end(), j) == pred.end()) prog.push_back(j);
    }
  } else {
    for (const auto& l : l_names) prog.push_back(cov_index(l));
  }

  std::vector<SubjectRecord> subjects;
  subjects.reserve(raw.rows.size());
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const auto& row = raw.rows[r];
    SubjectRecord s;
    s.id = row[c_id];
    s.time = parse_double(row[c_time], r, "time");
    if (s.time < 0.0) throw DataError("row " + std::to_string(r + 1) + ": negative time");
    const double ev = parse_double(row[c_event], r, "event");
    if (ev != 0.0 && ev != 1.0 && ev != 2.0) {
      throw DataError("row " + std::to_string(r + 1) + ": event code must be 0, 1 or 2");
    }
    s.event = static_cast<EventType>(static_cast<int>(ev));
    const double a = parse_double(row[c_a], r, "a");
    if (a != 0.0 && a != 1.0) {
      throw DataError("row " + std::to_string(r + 1) + ": non-binary treatment");
    }
    s.treatment = static_cast<int>(a);
    s.covariates.reserve(cov_cols.size());
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      s.covariates.push_back(parse_double(row[cov_cols[j]], r, cov_names[j]));
    }
    subjects.push_back(std::move(s));
  }
  return CohortDataset(std::move(subjects), std::move(cov_names), std::move(pred),
                       std::move(prog), max_levels);
}

void write_cohort_csv(std::ostream& out, const CohortDataset& data) {
  out << "id,time,event,a";
  for (const auto& n : data.covariate_names()) out << ',' << n;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& s : data.subjects()) {
    out << s.id << ',' << s.time << ',' << static_cast<int>(s.event) << ',' << s.treatment;
    for (double x : s.covariates) out << ',' << x;
    out << '\n';
  }
}

int subdist_risk_indicator(const SubjectRecord& s, double t) {
  if (s.time >= t) return 1;
  return s.event == EventType::Competing ? 1 : 0;
}

int counting_process(const SubjectRecord& s, double t) {
  return (s.event == EventType::Main && s.time <= t) ? 1 : 0;
}

int at_risk_y(const SubjectRecord& s, double t) {
  return (s.event == EventType::Main && s.time < t) ? 0 : 1;
}

TimeGrid::TimeGrid(std::vector<double> times, double horizon)
    : times_(std::move(times)), horizon_(horizon) {
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (!(times_[k] > 0.0)) throw DataError("time grid must be positive");
    if (k > 0 && !(times_[k] > times_[k - 1])) {
      throw DataError("time grid must be strictly increasing");
    }
  }
  horizon_count_ = upper_index(horizon_);
}

TimeGrid TimeGrid::from_main_events(const CohortDataset& data, double horizon) {
  std::vector<double> t;
  for (const auto& s : data.subjects()) {
    if (s.event == EventType::Main) {
      if (s.time <= 0.0) throw DataError("main event at time 0 for subject '" + s.id + "'");
      t.push_back(s.time);
    }
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return TimeGrid(std::move(t), horizon);
}

std::size_t TimeGrid::upper_index(double t) const {
  return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) -
                                  times_.begin());
}

std::size_t TimeGrid::find(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it != times_.end() && *it == t) return static_cast<std::size_t>(it - times_.begin());
  return times_.size();
}

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (q < 0.0 || q > 1.0) throw DataError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double event_time_quantile(const CohortDataset& data, double q) {
  std::vector<double> t;
  for (const auto& s : data.subjects()) {
    if (s.event != EventType::Censored) t.push_back(s.time);
  }
  return sample_quantile(std::move(t), q);
}

}  // namespace crtmle
