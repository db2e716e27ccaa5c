// crtmle command line: simulate, truth, fit, predict, vim, mc.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crtmle/cohort.hpp"
#include "crtmle/dgp.hpp"
#include "crtmle/errors.hpp"
#include "crtmle/harness.hpp"
#include "crtmle/learners.hpp"
#include "crtmle/model_io.hpp"
#include "crtmle/pipeline.hpp"
#include "crtmle/vim.hpp"
#include "json.hpp"

using namespace crtmle;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

// JSON config files: top-level keys are global options, nested objects are
// subcommands, e.g. {"seed": 7, "fit": {"data": "c.csv", "v": ["V1", "V2"]}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j = dump(app, default_also);
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        collect(*it, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      items.push_back(std::move(item));
    }
  }

  static nlohmann::json dump(const CLI::App* app, bool default_also) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      const auto results = opt->results();
      if (!results.empty()) {
        if (results.size() == 1) {
          j[name] = results[0];
        } else {
          j[name] = results;
        }
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      nlohmann::json s = dump(sub, default_also);
      if (!s.empty()) j[sub->get_name()] = s;
    }
    return j;
  }
};

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir;
};

// Output stream: explicit path (relative paths land in out_dir when given),
// a default file name inside out_dir, or stdout.
class Output {
 public:
  Output(const Globals& g, const std::string& path, const std::string& default_name) {
    std::filesystem::path p;
    if (!path.empty()) {
      p = path;
      if (!g.out_dir.empty() && p.is_relative()) p = std::filesystem::path(g.out_dir) / p;
    } else if (!g.out_dir.empty()) {
      p = std::filesystem::path(g.out_dir) / default_name;
    }
    if (p.empty()) return;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    file_.open(p, std::ios::binary);
    if (!file_) throw DataError("cannot write " + p.string());
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct DataOptions {
  std::string path;
  std::vector<std::string> v;
  std::vector<std::string> l;
  std::size_t max_levels = CohortDataset::kDefaultMaxLevels;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool require_v) {
  cmd->add_option("--data", d.path, "cohort CSV (id,time,event,a,covariates...)")->required();
  auto* v = cmd->add_option("--v", d.v, "predictive covariates defining subgroups")->delimiter(',');
  if (require_v) v->required();
  cmd->add_option("--l", d.l, "prognostic covariates (default: all non-predictive)")
      ->delimiter(',');
  cmd->add_option("--max-levels", d.max_levels, "maximum levels per predictive covariate");
}

CohortDataset load(const DataOptions& d) {
  return validate_cohort(read_csv_file(d.path), d.v, d.l, d.max_levels);
}

struct HorizonOptions {
  std::optional<double> t0;
  double quantile = 0.5;
};

void add_horizon_options(CLI::App* cmd, HorizonOptions& h) {
  cmd->add_option("--t0", h.t0, "analysis horizon");
  cmd->add_option("--t0-quantile", h.quantile,
                  "horizon as a quantile of observed event times (used when --t0 is absent)")
      ->check(CLI::Range(0.0, 1.0));
}

double resolve_t0(const HorizonOptions& h, const CohortDataset& data) {
  if (h.t0) {
    if (!(*h.t0 > 0.0)) throw DataError("--t0 must be positive");
    return *h.t0;
  }
  return event_time_quantile(data, h.quantile);
}

struct ModelOptions {
  std::vector<std::string> outcome, interactions, treatment, censoring;
  bool interactions_set = false;
  std::string censoring_kind = "cox";
  bool censoring_no_treatment = false;
  std::string initial = "s";
  double lambda = 0.0;
  bool cv_lambda = false;
  double pi_lo = 0.01, pi_hi = 0.99, g_floor = 0.05;
  double s_n = 1e-3;
  int max_iter = 20;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--outcome-covariates", m.outcome, "outcome model covariates (default: all L)")
      ->delimiter(',');
  cmd->add_option("--interactions", m.interactions,
                  "treatment x covariate terms of the pooled outcome model (default: outcome "
                  "covariates)")
      ->delimiter(',');
  cmd->add_option("--treatment-covariates", m.treatment, "propensity covariates (default: all L)")
      ->delimiter(',');
  cmd->add_option("--censoring-covariates", m.censoring,
                  "censoring Cox covariates (default: all L)")
      ->delimiter(',');
  cmd->add_option("--censoring", m.censoring_kind, "censoring model")
      ->check(CLI::IsMember({"cox", "km"}));
  cmd->add_flag("--censoring-no-treatment", m.censoring_no_treatment,
                "do not condition the censoring model on treatment");
  cmd->add_option("--initial", m.initial, "initial outcome model: pooled (s) or per arm (t)")
      ->check(CLI::IsMember({"s", "t"}));
  cmd->add_option("--lambda", m.lambda, "L1 penalty of the outcome model")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--cv-lambda", m.cv_lambda, "choose the L1 penalty by 5-fold cross-validation");
  cmd->add_option("--pi-lo", m.pi_lo, "lower propensity truncation");
  cmd->add_option("--pi-hi", m.pi_hi, "upper propensity truncation");
  cmd->add_option("--g-floor", m.g_floor, "censoring survival floor");
  cmd->add_option("--s-n", m.s_n, "targeting stop threshold on |epsilon|");
  cmd->add_option("--max-iter", m.max_iter, "maximum targeting iterations");
}

PipelineConfig make_config(const ModelOptions& m, const CohortDataset& data, std::uint64_t seed,
                           const CLI::App* cmd) {
  const auto l = data.prognostic_names();
  PipelineConfig cfg;
  cfg.designs.outcome = m.outcome.empty() ? l : m.outcome;
  cfg.designs.interactions =
      cmd->count("--interactions") > 0 ? m.interactions : cfg.designs.outcome;
  cfg.designs.treatment = m.treatment.empty() ? l : m.treatment;
  cfg.designs.censoring = m.censoring.empty() ? l : m.censoring;
  for (const auto* names : {&cfg.designs.outcome, &cfg.designs.interactions,
                            &cfg.designs.treatment, &cfg.designs.censoring}) {
    for (const auto& n : *names) data.covariate_index(n);
  }
  cfg.censoring_kind = m.censoring_kind == "km" ? CensoringKind::KaplanMeier : CensoringKind::CoxPH;
  cfg.censoring_uses_treatment = !m.censoring_no_treatment;
  cfg.initial = m.initial == "t" ? InitialLearner::T : InitialLearner::S;
  cfg.l1_penalty = m.lambda;
  cfg.cross_validate_penalty = m.cv_lambda;
  cfg.cv_seed = seed;
  cfg.truncation.propensity_lo = m.pi_lo;
  cfg.truncation.propensity_hi = m.pi_hi;
  cfg.truncation.censoring_floor = m.g_floor;
  cfg.targeting.s_n = m.s_n;
  cfg.targeting.max_iter = m.max_iter;
  return cfg;
}

const char* kEstimateHeader = "subgroup,t0,psi,se,ci_lo,ci_hi,p,n,iters,converged\n";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted estimation of conditional treatment effects on the cumulative incidence "
               "of a main event with competing risks"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values");

  Globals g;
  app.add_option("--seed", g.seed, "master random seed");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "directory for output files");

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a cohort from the simulation model");
  std::string sim_scenario = "S1";
  std::size_t sim_n = 3000;
  bool sim_high_dim = false, sim_null = false;
  double sim_lambda0 = 0.0;
  std::string sim_out;
  sim->add_option("--scenario", sim_scenario, "scenario S1..S5 (designs only; data are shared)");
  sim->add_option("--n", sim_n, "sample size")->check(CLI::PositiveNumber);
  sim->add_flag("--high-dim", sim_high_dim, "28 prognostic covariates");
  sim->add_flag("--null-effect", sim_null, "remove treatment from the outcome model");
  sim->add_option("--lambda0", sim_lambda0, "censoring rate scale (default: calibrated to 25%)");
  sim->add_option("--out", sim_out, "output CSV");

  // truth
  auto* tru = app.add_subcommand("truth", "true subgroup effects of the simulation model");
  HorizonOptions tru_h;
  std::size_t tru_n = 3000, tru_draws = 1000000;
  bool tru_high_dim = false, tru_null = false;
  std::string tru_data, tru_out;
  add_horizon_options(tru, tru_h);
  tru->add_option("--n", tru_n, "cohort size used to locate the horizon quantile");
  tru->add_option("--data", tru_data, "cohort CSV used to locate the horizon quantile");
  tru->add_option("--draws", tru_draws, "oracle covariate draws");
  tru->add_flag("--high-dim", tru_high_dim, "28 prognostic covariates");
  tru->add_flag("--null-effect", tru_null, "remove treatment from the outcome model");
  tru->add_option("--out", tru_out, "output CSV");

  // fit
  auto* fit = app.add_subcommand("fit", "estimate subgroup effects");
  DataOptions fit_d;
  HorizonOptions fit_h;
  ModelOptions fit_m;
  std::string fit_learner = "tmle", fit_out, fit_model_out;
  int fit_boot = 0;
  add_data_options(fit, fit_d, false);
  add_horizon_options(fit, fit_h);
  add_model_options(fit, fit_m);
  fit->add_option("--learner", fit_learner, "estimator")->check(CLI::IsMember({"tmle", "s", "t"}));
  fit->add_option("--bootstrap", fit_boot, "bootstrap replicates for s/t intervals (>= 100)");
  fit->add_option("--out", fit_out, "estimates CSV");
  fit->add_option("--model-out", fit_model_out, "write fitted models as JSON (tmle only)");

  // predict
  auto* pred = app.add_subcommand("predict", "cumulative incidence from a saved model");
  std::string pred_model, pred_data, pred_out;
  std::optional<double> pred_t;
  pred->add_option("--model", pred_model, "model JSON from fit --model-out")->required();
  pred->add_option("--data", pred_data, "cohort CSV")->required();
  pred->add_option("--t", pred_t, "time point (default: the model horizon)");
  pred->add_option("--out", pred_out, "output CSV");

  // vim
  auto* vim = app.add_subcommand("vim", "variable importance");
  DataOptions vim_d;
  HorizonOptions vim_h;
  ModelOptions vim_m;
  std::string vim_kind = "predictive", vim_out;
  std::vector<std::string> vim_vars;
  add_data_options(vim, vim_d, true);
  add_horizon_options(vim, vim_h);
  add_model_options(vim, vim_m);
  vim->add_option("--kind", vim_kind, "importance measure")
      ->check(CLI::IsMember({"predictive", "prognostic"}));
  vim->add_option("--vars", vim_vars, "prognostic variables to drop (default: all L)")
      ->delimiter(',');
  vim->add_option("--out", vim_out, "output CSV");

  // mc
  auto* mc = app.add_subcommand("mc", "Monte Carlo study over the simulation scenarios");
  std::vector<std::string> mc_scen, mc_learners;
  std::vector<std::size_t> mc_n;
  int mc_b = 0;
  bool mc_full = false, mc_high_dim = false, mc_lasso = false, mc_boot = false, mc_dump = false;
  double mc_q = 0.5;
  std::size_t mc_draws = 1000000;
  mc->add_option("--scenarios", mc_scen, "scenarios (default S1..S5)")->delimiter(',');
  mc->add_option("--n", mc_n, "sample sizes")->delimiter(',');
  mc->add_option("--B", mc_b, "replicates per cell");
  mc->add_option("--learners", mc_learners, "tmle, tmle-t, s, t (default tmle,s,t)")
      ->delimiter(',');
  mc->add_flag("--full", mc_full, "B=500, n in {800,1500,3000}");
  mc->add_flag("--high-dim", mc_high_dim, "28 prognostic covariates");
  mc->add_flag("--lasso", mc_lasso, "cross-validated L1 penalty on the outcome model");
  mc->add_option("--t0-quantile", mc_q, "horizon quantile")->check(CLI::Range(0.0, 1.0));
  mc->add_flag("--bootstrap", mc_boot, "bootstrap intervals for the s/t learners");
  mc->add_option("--oracle-draws", mc_draws, "draws for the true effects");
  mc->add_flag("--dump-replicates", mc_dump, "write replicates.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) {
      ScenarioConfig sc;
      sc.scenario = parse_scenario(sim_scenario);
      sc.n = sim_n;
      sc.high_dim = sim_high_dim;
      sc.seed = g.seed;
      sc.lambda0 = sim_lambda0;
      DgpModel model = DgpModel::standard(sim_high_dim);
      if (sim_null) model = model.null_effect();
      const CohortDataset data = simulate(sc, model);
      Output out(g, sim_out, "cohort.csv");
      write_cohort_csv(out.stream(), data);
    } else if (*tru) {
      DgpModel model = DgpModel::standard(tru_high_dim);
      if (tru_null) model = model.null_effect();
      double t0 = 0.0;
      if (tru_h.t0) {
        t0 = *tru_h.t0;
      } else if (!tru_data.empty()) {
        t0 = event_time_quantile(validate_cohort(read_csv_file(tru_data), {}, {}), tru_h.quantile);
      } else {
        ScenarioConfig sc;
        sc.n = tru_n;
        sc.high_dim = tru_high_dim;
        sc.seed = g.seed;
        t0 = event_time_quantile(simulate(sc, model), tru_h.quantile);
      }
      const auto truth = true_cate(model, t0, tru_draws, derive_seed(g.seed, 0xC0FFEE));
      Output out(g, tru_out, "truth.csv");
      out.stream() << "subgroup,t0,psi_true,oracle_se\n";
      for (const auto& t : truth) {
        out.stream() << t.label << ',' << num(t0) << ',' << num(t.psi) << ',' << num(t.se) << '\n';
      }
    } else if (*fit) {
      const CohortDataset data = load(fit_d);
      const double t0 = resolve_t0(fit_h, data);
      const PipelineConfig cfg = make_config(fit_m, data, g.seed, fit);
      Output out(g, fit_out, "estimates.csv");
      auto& os = out.stream();
      os << kEstimateHeader;
      if (fit_learner == "tmle") {
        const auto fits = run_tmle(data, t0, cfg);
        for (const auto& f : fits) {
          const auto& e = f.estimate;
          os << e.label << ',' << num(t0) << ',' << num(e.psi_hat) << ',' << num(e.se) << ','
             << num(e.ci_lo) << ',' << num(e.ci_hi) << ',' << num(e.p_value) << ','
             << e.n_subgroup << ',' << e.iterations << ',' << (e.converged ? "true" : "false")
             << '\n';
        }
        if (!fit_model_out.empty()) {
          Output mo(g, fit_model_out, "model.json");
          write_model(mo.stream(), make_stored_model(data, t0, cfg, fits));
        }
      } else {
        const LearnerKind kind = fit_learner == "s" ? LearnerKind::SLearner : LearnerKind::TLearner;
        std::uint64_t k = 0;
        for (const auto& key : data.subgroups()) {
          const CohortDataset sub = data.subgroup(key);
          const double psi = learner_cate(kind, sub, t0, cfg);
          std::string lo, hi;
          if (fit_boot > 0) {
            auto ci = bootstrap_ci(kind, sub, t0, cfg, derive_seed(g.seed, k), fit_boot);
            lo = num(ci.lo);
            hi = num(ci.hi);
          }
          os << data.subgroup_label(key) << ',' << num(t0) << ',' << num(psi) << ",," << lo << ','
             << hi << ",," << sub.size() << ",,\n";
          ++k;
        }
      }
    } else if (*pred) {
      std::ifstream in(pred_model);
      if (!in) throw DataError("cannot read " + pred_model);
      const StoredModel model = read_model(in);
      const CohortDataset data =
          validate_cohort(read_csv_file(pred_data), model.predictive, model.prognostic);
      if (data.covariate_names() != model.covariate_names) {
        throw DataError("cohort covariates do not match the model");
      }
      const double t = pred_t.value_or(model.t0);
      Output out(g, pred_out, "predictions.csv");
      auto& os = out.stream();
      os << "id,subgroup,t,cif1,cif0,difference\n";
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        const SubgroupKey& key = data.subgroup_of(i);
        const StoredSubgroup* sg = nullptr;
        for (const auto& c : model.subgroups) {
          if (c.key == key.values) sg = &c;
        }
        if (!sg) throw DataError("subject " + s.id + " falls in a subgroup the model has not seen");
        const double f1 = stored_cif(*sg, 1, s.covariates, t, model.truncation.cif_cap);
        const double f0 = stored_cif(*sg, 0, s.covariates, t, model.truncation.cif_cap);
        os << s.id << ',' << sg->label << ',' << num(t) << ',' << num(f1) << ',' << num(f0) << ','
           << num(f1 - f0) << '\n';
      }
    } else if (*vim) {
      const CohortDataset data = load(vim_d);
      const double t0 = resolve_t0(vim_h, data);
      const PipelineConfig cfg = make_config(vim_m, data, g.seed, vim);
      const VimReport rep =
          vim_kind == "predictive"
              ? vim_predictive(data, t0, cfg)
              : vim_prognostic(data, t0, cfg, vim_vars.empty() ? data.prognostic_names() : vim_vars);
      Output out(g, vim_out, "vim.csv");
      out.stream() << "variable,subgroup,value\n";
      for (const auto& e : rep.entries) {
        out.stream() << e.variable << ',' << e.subgroup << ',' << num(e.value) << '\n';
      }
    } else if (*mc) {
      McOptions opt = mc_full ? full_profile() : desk_profile();
      if (!mc_scen.empty()) {
        opt.scenarios.clear();
        for (const auto& s : mc_scen) opt.scenarios.push_back(parse_scenario(s));
      }
      if (!mc_n.empty()) opt.sample_sizes = mc_n;
      if (mc_b > 0) opt.replicates = mc_b;
      if (!mc_learners.empty()) {
        opt.learners.clear();
        for (const auto& l : mc_learners) opt.learners.push_back(parse_learner(l));
      }
      opt.high_dim = mc_high_dim;
      opt.lasso = mc_lasso;
      opt.t0_quantile = mc_q;
      opt.bootstrap = mc_boot;
      opt.oracle_draws = mc_draws;
      opt.seed = g.seed;
      opt.jobs = g.jobs;
      const McResult result = run_mc(opt);
      const std::string dir = g.out_dir.empty() ? "." : g.out_dir;
      emit_report(result, dir, mc_dump);
      std::ifstream summary(std::filesystem::path(dir) / "summary.txt");
      std::cout << summary.rdbuf();
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
