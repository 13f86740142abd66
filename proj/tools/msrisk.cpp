// msrisk: command-line front end.

#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "msrisk/msrisk.hpp"

namespace {

using namespace msrisk;
namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Registers a string flag that becomes a configuration override.
void add_override(CLI::App* app, CommonFlags& flags, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&flags, key](const std::string& v) { flags.overrides.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config, "INI-style key = value configuration file");
  add_override(app, flags, "--input", "input", "input CSV file");
  add_override(app, flags, "--date-column", "date_column", "name of the date column");
  add_override(app, flags, "--assets", "assets", "comma-separated asset columns");
  add_override(app, flags, "--market", "market", "market index column (attribution target)");
  add_override(app, flags, "--seed", "seed", "random seed");
  add_override(app, flags, "--out", "output_dir", "output directory");
  add_override(app, flags, "--family", "family", "gaussian, t, or a comma list for selection");
  add_override(app, flags, "--states", "states", "state count L, a range 1-3 or a list 1,2,3");
  add_override(app, flags, "--tau1", "tau1", "tail level of the target");
  add_override(app, flags, "--tau2", "tau2", "distress level of the conditioning set");
  add_override(app, flags, "--dof-convention", "dof_convention", "paper or standard");
  add_override(app, flags, "--measures", "measures", "comma list of VaR,ES,MCoVaR,MCoES,DeltaMCoVaR,DeltaMCoES");
  add_override(app, flags, "--restarts", "restarts", "EM random restarts");
  add_override(app, flags, "--horizon", "horizon", "predictive horizon h");
  add_override(app, flags, "--max-iter", "max_iter", "EM iteration cap");
  add_override(app, flags, "--probabilities", "probabilities", "filtered or smoothed state probabilities");
  add_override(app, flags, "--shapley-values", "shapley_values", "absolute or signed subset values");
  app->add_flag_callback("--to-returns", [&flags] { flags.overrides.emplace_back("to_returns", "true"); },
                         "input holds prices; convert to log returns");
}

RunConfig resolve(const CommonFlags& flags) {
  std::map<std::string, std::string> file;
  if (!flags.config.empty()) file = read_config_file(flags.config);
  auto cfg = make_config(file, flags.overrides);
  cfg.validate();
  return cfg;
}

FittedModel load_model(const std::string& path) {
  try {
    return model_from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadConfig, "cannot parse model '" + path + "': " + e.what());
  }
}

void check_model_matches(const FittedModel& model, const ReturnPanel& panel) {
  require(model.T() == panel.T() && model.params.p() == panel.p(), ErrorCode::BadConfig,
          "model dimensions do not match the input panel");
}

int run_describe(const CommonFlags& flags, const std::string& out_file) {
  auto cfg = make_config(flags.config.empty() ? std::map<std::string, std::string>{} : read_config_file(flags.config),
                         flags.overrides);
  const auto panel = load_panel(cfg);
  const auto text = describe_csv(describe(panel));
  if (out_file.empty()) std::cout << text;
  else write_atomic(out_file, text);
  return kExitOk;
}

int run_fit(const CommonFlags& flags, bool selection) {
  auto cfg = resolve(flags);
  const auto panel = load_panel(cfg);
  ArtifactWriter out(cfg.output_dir);
  try {
    std::optional<SelectionTable> table;
    const auto model = fit_configured(cfg, panel, &table);
    if (selection && table) out.write("selection.csv", selection_csv(*table));
    out.write("model.json", dump(to_json(model)));
    std::cout << "family=" << to_string(model.family) << " L=" << model.L() << " loglik=" << format_double(model.loglik)
              << " aic=" << format_double(model.aic) << " bic=" << format_double(model.bic) << "\n";
  } catch (...) {
    out.rollback();
    throw;
  }
  return kExitOk;
}

int run_decode(const CommonFlags& flags, const std::string& model_path) {
  auto cfg = resolve(flags);
  const auto panel = load_panel(cfg);
  const auto model = load_model(model_path);
  check_model_matches(model, panel);
  ArtifactWriter out(cfg.output_dir);
  out.write("states.csv", states_csv(model, viterbi(panel, model.params, model.family), panel.timestamps()));
  return kExitOk;
}

int run_risk(const CommonFlags& flags, const std::string& model_path) {
  auto cfg = resolve(flags);
  const auto panel = load_panel(cfg);
  const auto model = load_model(model_path);
  check_model_matches(model, panel);
  RiskPathOptions ropts;
  ropts.horizon = cfg.horizon;
  ropts.use_smoothed = cfg.use_smoothed;
  ropts.risk.convention = cfg.dof_convention;
  std::string text = risk_path_header();
  for (auto measure : cfg.measures) {
    const bool conditional = measure != RiskMeasure::VaR && measure != RiskMeasure::ES;
    const auto assets = conditional ? target_assets(cfg, panel) : target_assets(RunConfig{}, panel);
    for (Index a : assets) {
      if (conditional && panel.p() < 2) continue;
      ConditioningSpec spec;
      spec.target = a;
      spec.tau1 = cfg.tau1;
      spec.tau2 = cfg.tau2;
      for (Index j = 0; j < panel.p(); ++j)
        if (j != a) spec.distressed.push_back(j);
      append_risk_path(text, risk_path(model, spec, measure, ropts), panel);
    }
  }
  ArtifactWriter out(cfg.output_dir);
  out.write("risk_path.csv", text);
  return kExitOk;
}

int run_shapley(const CommonFlags& flags, const std::string& model_path) {
  auto cfg = resolve(flags);
  const auto panel = load_panel(cfg);
  const auto model = load_model(model_path);
  check_model_matches(model, panel);
  require(panel.p() >= 2, ErrorCode::BadConfig, "Shapley attribution needs at least two assets");
  const auto states = viterbi(panel, model.params, model.family);
  ShapleyOptions sopts;
  sopts.mode = cfg.value_mode;
  sopts.risk.convention = cfg.dof_convention;
  std::string text = shapley_path_header();
  Json summary = Json::array();
  for (auto measure : cfg.measures) {
    if (measure != RiskMeasure::DeltaMCoVaR && measure != RiskMeasure::DeltaMCoES) continue;
    for (Index a : target_assets(cfg, panel)) {
      const auto ap = attribution_path(model, a, measure, cfg.tau1, cfg.tau2, states, cfg.horizon, sopts);
      append_shapley_path(text, ap, panel);
      summary.push_back(attribution_summary(ap, panel));
    }
  }
  ArtifactWriter out(cfg.output_dir);
  try {
    out.write("shapley_path.csv", text);
    out.write("summary.json", dump(Json{{"attribution", summary}}));
  } catch (...) {
    out.rollback();
    throw;
  }
  return kExitOk;
}

int run_simulate(const CommonFlags& flags, const std::string& params_path, long long T, const std::string& out_file) {
  auto cfg = make_config(flags.config.empty() ? std::map<std::string, std::string>{} : read_config_file(flags.config),
                         flags.overrides);
  require(T >= 2, ErrorCode::BadConfig, "--T must be >= 2");
  Json j;
  try {
    j = Json::parse(read_file(params_path));
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadConfig, "cannot parse parameters '" + params_path + "': " + e.what());
  }
  MsmParams params;
  ModelFamily family;
  if (j.contains("params")) {
    params = params_from_json(j.at("params"));
    family = parse_family(j.at("family").get<std::string>());
  } else {
    params = params_from_json(j);
    family = params.has_nu() ? ModelFamily::StudentT : ModelFamily::Gaussian;
  }
  const auto sim = simulate(params, family, static_cast<Index>(T), cfg.seed);
  const auto text = panel_to_csv(sim.panel, cfg.date_column);
  if (out_file.empty()) std::cout << text;
  else write_atomic(out_file, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-switching tail-risk estimation and attribution"};
  app.require_subcommand(1);

  CommonFlags describe_flags, fit_flags, select_flags, decode_flags, risk_flags, shapley_flags, sim_flags,
      pipeline_flags;
  std::string describe_out, model_path_decode, model_path_risk, model_path_shapley, sim_params, sim_out;
  long long sim_T = 500;

  auto* c_describe = app.add_subcommand("describe", "summary statistics of each asset");
  add_common(c_describe, describe_flags);
  c_describe->add_option("--output", describe_out, "write the table to this file instead of stdout");

  auto* c_fit = app.add_subcommand("fit", "fit a Markov-switching model and write model.json");
  add_common(c_fit, fit_flags);

  auto* c_select = app.add_subcommand("select", "fit candidate models and write selection.csv");
  add_common(c_select, select_flags);

  auto* c_decode = app.add_subcommand("decode", "Viterbi path and smoothed probabilities (states.csv)");
  add_common(c_decode, decode_flags);
  c_decode->add_option("--model", model_path_decode, "fitted model.json")->required();

  auto* c_risk = app.add_subcommand("risk", "risk measure paths (risk_path.csv)");
  add_common(c_risk, risk_flags);
  c_risk->add_option("--model", model_path_risk, "fitted model.json")->required();

  auto* c_shapley = app.add_subcommand("shapley", "Shapley attribution paths (shapley_path.csv, summary.json)");
  add_common(c_shapley, shapley_flags);
  c_shapley->add_option("--model", model_path_shapley, "fitted model.json")->required();

  auto* c_sim = app.add_subcommand("simulate", "simulate a return panel from parameters");
  add_common(c_sim, sim_flags);
  c_sim->add_option("--params", sim_params, "MsmParams or model JSON")->required();
  c_sim->add_option("--T", sim_T, "number of observations");
  c_sim->add_option("--output", sim_out, "write the CSV to this file instead of stdout");

  auto* c_pipeline = app.add_subcommand("pipeline", "run fit, decode, risk and attribution end to end");
  add_common(c_pipeline, pipeline_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (*c_describe) return run_describe(describe_flags, describe_out);
    if (*c_fit) return run_fit(fit_flags, false);
    if (*c_select) return run_fit(select_flags, true);
    if (*c_decode) return run_decode(decode_flags, model_path_decode);
    if (*c_risk) return run_risk(risk_flags, model_path_risk);
    if (*c_shapley) return run_shapley(shapley_flags, model_path_shapley);
    if (*c_sim) return run_simulate(sim_flags, sim_params, sim_T, sim_out);
    if (*c_pipeline) {
      const auto res = run_pipeline(resolve(pipeline_flags));
      for (const auto& a : res.artifacts) std::cout << a << "\n";
      return kExitOk;
    }
  } catch (const msrisk::Error& e) {
    std::cerr << "msrisk: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "msrisk: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
