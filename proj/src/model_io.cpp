#include "crtmle/model_io.hpp"

#include <istream>
#include <ostream>

#include "crtmle/errors.hpp"
#include "json.hpp"

namespace crtmle {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json design_json(const DesignSpec& d) {
  return {{"covariates", d.covariates}, {"treatment", d.treatment},
          {"interactions", d.interactions}};
}

DesignSpec design_from(const json& j) {
  return DesignSpec{j.at("covariates").get<std::vector<std::string>>(),
                    j.at("treatment").get<bool>(),
                    j.at("interactions").get<std::vector<std::string>>()};
}

json outcome_json(const SubdistributionModel& m) {
  return {{"design", design_json(m.spec())},
          {"coefficients", vec(m.coefficients())},
          {"jump_times", m.jump_times()},
          {"jumps", m.jumps()},
          {"l1_penalty", m.l1_penalty()},
          {"iterations", m.iterations()}};
}

SubdistributionModel outcome_from(const json& j, const std::vector<std::string>& layout) {
  return SubdistributionModel(design_from(j.at("design")), layout, to_eigen(j.at("coefficients")),
                              j.at("jump_times").get<std::vector<double>>(),
                              j.at("jumps").get<std::vector<double>>(),
                              j.value("iterations", 0), j.value("l1_penalty", 0.0));
}

json censoring_json(const CensoringModel& c) {
  return {{"kind", c.kind() == CensoringKind::CoxPH ? "cox" : "km"},
          {"design", design_json(c.spec())},
          {"jump_times", c.jump_times()},
          {"baseline", c.baseline()},
          {"coefficients", vec(c.coefficients())},
          {"floor", c.floor()}};
}

CensoringModel censoring_from(const json& j, const std::vector<std::string>& layout) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "cox" && kind != "km") throw DataError("unknown censoring kind '" + kind + "'");
  return CensoringModel(kind == "cox" ? CensoringKind::CoxPH : CensoringKind::KaplanMeier,
                        design_from(j.at("design")), layout,
                        j.at("jump_times").get<std::vector<double>>(),
                        j.at("baseline").get<std::vector<double>>(),
                        to_eigen(j.at("coefficients")), j.at("floor").get<double>());
}

json estimate_json(const CateEstimate& e) {
  return {{"psi", e.psi_hat},  {"se", e.se}, {"ci_lo", e.ci_lo},           {"ci_hi", e.ci_hi},
          {"p", e.p_value},    {"n", e.n_subgroup}, {"iterations", e.iterations},
          {"converged", e.converged}};
}

CateEstimate estimate_from(const json& j) {
  CateEstimate e;
  e.psi_hat = j.at("psi").get<double>();
  e.se = j.at("se").get<double>();
  e.ci_lo = j.at("ci_lo").get<double>();
  e.ci_hi = j.at("ci_hi").get<double>();
  e.p_value = j.at("p").get<double>();
  e.n_subgroup = j.at("n").get<std::size_t>();
  e.iterations = j.at("iterations").get<int>();
  e.converged = j.at("converged").get<bool>();
  return e;
}

}  // namespace

StoredModel make_stored_model(const CohortDataset& data, double t0, const PipelineConfig& cfg,
                              const std::vector<SubgroupFit>& fits) {
  StoredModel m;
  m.t0 = t0;
  m.covariate_names = data.covariate_names();
  m.predictive = data.predictive_names();
  m.prognostic = data.prognostic_names();
  m.truncation = cfg.truncation;
  for (const auto& f : fits) {
    StoredSubgroup sg;
    sg.label = f.label;
    sg.key = f.key.values;
    sg.initial = cfg.initial;
    sg.outcome0 = f.outcome0;
    sg.outcome1 = f.outcome1;
    sg.propensity = f.propensity;
    sg.censoring = f.censoring;
    sg.estimate = f.estimate;
    m.subgroups.push_back(std::move(sg));
  }
  return m;
}

void write_model(std::ostream& out, const StoredModel& model) {
  json doc;
  doc["format"] = "crtmle-model";
  doc["version"] = model.version;
  doc["t0"] = model.t0;
  doc["covariates"] = model.covariate_names;
  doc["predictive"] = model.predictive;
  doc["prognostic"] = model.prognostic;
  doc["truncation"] = {{"propensity_lo", model.truncation.propensity_lo},
                       {"propensity_hi", model.truncation.propensity_hi},
                       {"censoring_floor", model.truncation.censoring_floor},
                       {"cif_cap", model.truncation.cif_cap}};
  json groups = json::array();
  for (const auto& sg : model.subgroups) {
    json g;
    g["label"] = sg.label;
    g["key"] = sg.key;
    g["initial"] = sg.initial == InitialLearner::S ? "s" : "t";
    g["outcome0"] = outcome_json(sg.outcome0);
    if (sg.initial == InitialLearner::T) g["outcome1"] = outcome_json(sg.outcome1);
    g["propensity"] = {{"covariates", sg.propensity.covariates()},
                       {"coefficients", vec(sg.propensity.coefficients())}};
    g["censoring"] = censoring_json(sg.censoring);
    g["estimate"] = estimate_json(sg.estimate);
    groups.push_back(std::move(g));
  }
  doc["subgroups"] = std::move(groups);
  out << doc.dump(2) << '\n';
}

StoredModel read_model(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("format", std::string{}) != "crtmle-model") {
      throw DataError("not a crtmle model document");
    }
    StoredModel m;
    m.version = doc.at("version").get<int>();
    if (m.version != kModelFormatVersion) {
      throw DataError("unsupported model version " + std::to_string(m.version));
    }
    m.t0 = doc.at("t0").get<double>();
    m.covariate_names = doc.at("covariates").get<std::vector<std::string>>();
    m.predictive = doc.at("predictive").get<std::vector<std::string>>();
    m.prognostic = doc.at("prognostic").get<std::vector<std::string>>();
    const json& tr = doc.at("truncation");
    m.truncation.propensity_lo = tr.at("propensity_lo").get<double>();
    m.truncation.propensity_hi = tr.at("propensity_hi").get<double>();
    m.truncation.censoring_floor = tr.at("censoring_floor").get<double>();
    m.truncation.cif_cap = tr.at("cif_cap").get<double>();
    for (const json& g : doc.at("subgroups")) {
      StoredSubgroup sg;
      sg.label = g.at("label").get<std::string>();
      sg.key = g.at("key").get<std::vector<double>>();
      sg.initial = g.at("initial").get<std::string>() == "t" ? InitialLearner::T : InitialLearner::S;
      sg.outcome0 = outcome_from(g.at("outcome0"), m.covariate_names);
      sg.outcome1 = sg.initial == InitialLearner::T ? outcome_from(g.at("outcome1"), m.covariate_names)
                                                    : sg.outcome0;
      sg.propensity = PropensityModel(
          g.at("propensity").at("covariates").get<std::vector<std::string>>(), m.covariate_names,
          to_eigen(g.at("propensity").at("coefficients")), m.truncation.propensity_lo,
          m.truncation.propensity_hi);
      sg.censoring = censoring_from(g.at("censoring"), m.covariate_names);
      sg.estimate = estimate_from(g.at("estimate"));
      sg.estimate.label = sg.label;
      sg.estimate.subgroup = SubgroupKey{sg.key};
      sg.estimate.horizon = m.t0;
      m.subgroups.push_back(std::move(sg));
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

double stored_cif(const StoredSubgroup& sg, int a, std::span<const double> x, double t,
                  double cap) {
  return (a == 1 ? sg.outcome1 : sg.outcome0).cif(a, x, t, cap);
}

}  // namespace crtmle
