#pragma once

// Batch pipeline: ingest -> fit/select -> decode -> risk paths -> Shapley
// attribution, with plot-ready CSV / JSON artifacts.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "msrisk/core.hpp"
#include "msrisk/inference.hpp"
#include "msrisk/io.hpp"
#include "msrisk/json_io.hpp"
#include "msrisk/risk.hpp"
#include "msrisk/shapley.hpp"

#ifndef MSRISK_GIT_DESCRIBE
#define MSRISK_GIT_DESCRIBE "unknown"
#endif

namespace msrisk {

// ---------------------------------------------------------------------------
// Exit codes

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitBadConfig = 2,
  kExitIo = 3,
  kExitMalformedCsv = 4,
  kExitMissingColumn = 5,
  kExitNonMonotoneDates = 6,
  kExitMissingValue = 7,
  kExitNumerical = 8,
  kExitInsufficientData = 9,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::InvalidArgument: return kExitBadConfig;
    case ErrorCode::Io: return kExitIo;
    case ErrorCode::MalformedCsv: return kExitMalformedCsv;
    case ErrorCode::MissingColumn: return kExitMissingColumn;
    case ErrorCode::NonMonotoneDates: return kExitNonMonotoneDates;
    case ErrorCode::MissingValue: return kExitMissingValue;
    case ErrorCode::InsufficientData: return kExitInsufficientData;
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NumericalFailure:
    case ErrorCode::DegenerateState:
    case ErrorCode::FitFailure:
    case ErrorCode::UnsupportedDimension:
    case ErrorCode::DivergentTail:
    case ErrorCode::Underflow:
    case ErrorCode::BracketFailure:
    case ErrorCode::InfeasibleSlab:
    case ErrorCode::IncompleteTable: return kExitNumerical;
  }
  return kExitInternal;
}

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  std::string input_path;
  std::string date_column = "date";
  std::vector<std::string> asset_columns;
  std::optional<std::string> market_column;
  bool to_returns = false;
  std::vector<ModelFamily> families = {ModelFamily::StudentT};
  std::vector<int> states = {2};
  double tau1 = 0.05;
  double tau2 = 0.05;
  int horizon = 1;
  std::vector<RiskMeasure> measures = {RiskMeasure::VaR, RiskMeasure::ES, RiskMeasure::DeltaMCoVaR,
                                       RiskMeasure::DeltaMCoES};
  int restarts = 20;
  std::uint64_t seed = 1;
  DofConvention dof_convention = DofConvention::PaperDof;
  std::string output_dir = "msrisk-out";
  int max_iter = 1000;
  double loglik_tol = 1e-5;
  bool use_smoothed = false;
  ValueMode value_mode = ValueMode::Absolute;

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::BadConfig, m); };
    if (!(tau1 > 0.0 && tau1 < 0.5)) bad("tau1 must lie in (0, 0.5)");
    if (!(tau2 > 0.0 && tau2 < 0.5)) bad("tau2 must lie in (0, 0.5)");
    if (horizon < 1) bad("horizon must be >= 1");
    if (restarts < 1) bad("restarts must be >= 1");
    if (max_iter < 1) bad("max_iter must be >= 1");
    if (!(loglik_tol > 0.0)) bad("loglik_tol must be > 0");
    if (states.empty()) bad("states must name at least one state count");
    for (int L : states)
      if (L < 1) bad("state counts must be >= 1");
    if (families.empty()) bad("family must be set");
    if (measures.empty()) bad("measures must be nonempty");
    if (output_dir.empty()) bad("output_dir must be set");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) fail(ErrorCode::BadConfig, key + ": '" + v + "' is not a number");
  return *d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::BadConfig, key + ": '" + v + "' is not an integer");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorCode::BadConfig, key + ": '" + v + "' is not a boolean");
}

/// "2", "1-3" or "1,2,4".
inline std::vector<int> parse_states(const std::string& v) {
  std::vector<int> out;
  const std::string s = trim(v);
  const auto dash = s.find('-');
  if (dash != std::string::npos && s.find(',') == std::string::npos) {
    const auto a = parse_int("states", s.substr(0, dash));
    const auto b = parse_int("states", s.substr(dash + 1));
    if (a < 1 || b < a || b > 50) fail(ErrorCode::BadConfig, "states: bad range '" + v + "'");
    for (long long L = a; L <= b; ++L) out.push_back(static_cast<int>(L));
    return out;
  }
  for (const auto& item : split_list(s)) out.push_back(static_cast<int>(parse_int("states", item)));
  return out;
}

}  // namespace detail

/// Applies one key = value setting; unknown keys are configuration errors.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  try {
    if (key == "input") cfg.input_path = trim(value);
    else if (key == "date_column") cfg.date_column = trim(value);
    else if (key == "assets") cfg.asset_columns = split_list(value);
    else if (key == "market") {
      const auto m = trim(value);
      if (m.empty()) cfg.market_column.reset();
      else cfg.market_column = m;
    } else if (key == "to_returns") cfg.to_returns = parse_bool(key, value);
    else if (key == "family") {
      cfg.families.clear();
      for (const auto& f : split_list(value)) cfg.families.push_back(parse_family(f));
    } else if (key == "states") cfg.states = parse_states(value);
    else if (key == "tau1") cfg.tau1 = parse_real(key, value);
    else if (key == "tau2") cfg.tau2 = parse_real(key, value);
    else if (key == "horizon") cfg.horizon = static_cast<int>(parse_int(key, value));
    else if (key == "measures") {
      cfg.measures.clear();
      for (const auto& m : split_list(value)) cfg.measures.push_back(parse_measure(m));
    } else if (key == "restarts") cfg.restarts = static_cast<int>(parse_int(key, value));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "dof_convention") cfg.dof_convention = parse_dof_convention(trim(value));
    else if (key == "output_dir") cfg.output_dir = trim(value);
    else if (key == "max_iter") cfg.max_iter = static_cast<int>(parse_int(key, value));
    else if (key == "loglik_tol") cfg.loglik_tol = parse_real(key, value);
    else if (key == "probabilities") {
      const auto v = trim(value);
      if (v != "filtered" && v != "smoothed") fail(ErrorCode::BadConfig, "probabilities must be filtered or smoothed");
      cfg.use_smoothed = v == "smoothed";
    } else if (key == "shapley_values") {
      const auto v = trim(value);
      if (v != "absolute" && v != "signed") fail(ErrorCode::BadConfig, "shapley_values must be absolute or signed");
      cfg.value_mode = v == "signed" ? ValueMode::Signed : ValueMode::Absolute;
    } else {
      fail(ErrorCode::BadConfig, "unknown configuration key '" + key + "'");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadConfig) throw;
    fail(ErrorCode::BadConfig, key + ": " + e.what());
  }
}

/// Flat key = value file (sections are not used).
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "config file '" + path.string() + "' not found");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::BadConfig, std::string("cannot parse config: ") + e.what());
  }
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : tree) {
    if (!v.empty()) fail(ErrorCode::BadConfig, "config sections are not supported ('" + k + "')");
    out[k] = v.data();
  }
  return out;
}

/// Defaults, then the file, then command-line overrides.
inline RunConfig make_config(const std::map<std::string, std::string>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  for (const auto& [k, v] : file) apply_setting(cfg, k, v);
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  return cfg;
}

inline Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["input"] = cfg.input_path;
  j["date_column"] = cfg.date_column;
  j["assets"] = cfg.asset_columns;
  j["market"] = cfg.market_column ? Json(*cfg.market_column) : Json(nullptr);
  j["to_returns"] = cfg.to_returns;
  Json fam = Json::array();
  for (auto f : cfg.families) fam.push_back(std::string(to_string(f)));
  j["family"] = std::move(fam);
  j["states"] = cfg.states;
  j["tau1"] = cfg.tau1;
  j["tau2"] = cfg.tau2;
  j["horizon"] = cfg.horizon;
  Json ms = Json::array();
  for (auto m : cfg.measures) ms.push_back(std::string(to_string(m)));
  j["measures"] = std::move(ms);
  j["restarts"] = cfg.restarts;
  j["seed"] = cfg.seed;
  j["dof_convention"] = std::string(to_string(cfg.dof_convention));
  j["output_dir"] = cfg.output_dir;
  j["max_iter"] = cfg.max_iter;
  j["loglik_tol"] = cfg.loglik_tol;
  j["probabilities"] = cfg.use_smoothed ? "smoothed" : "filtered";
  j["shapley_values"] = cfg.value_mode == ValueMode::Signed ? "signed" : "absolute";
  return j;
}

inline FitOptions fit_options(const RunConfig& cfg) {
  FitOptions o;
  o.restarts = cfg.restarts;
  o.max_iter = cfg.max_iter;
  o.loglik_tol = cfg.loglik_tol;
  o.seed = cfg.seed;
  return o;
}

inline ReturnPanel load_panel(const RunConfig& cfg) {
  if (cfg.input_path.empty()) fail(ErrorCode::BadConfig, "no input file given");
  IngestOptions io;
  io.date_column = cfg.date_column;
  io.asset_columns = cfg.asset_columns;
  if (!io.asset_columns.empty() && cfg.market_column &&
      std::find(io.asset_columns.begin(), io.asset_columns.end(), *cfg.market_column) == io.asset_columns.end())
    io.asset_columns.push_back(*cfg.market_column);
  io.to_returns = cfg.to_returns;
  return ingest(cfg.input_path, io);
}

/// Target assets: the market column when set, otherwise every asset.
inline std::vector<Index> target_assets(const RunConfig& cfg, const ReturnPanel& panel) {
  if (cfg.market_column) {
    const auto m = panel.asset_index(*cfg.market_column);
    if (!m) fail(ErrorCode::MissingColumn, "market column '" + *cfg.market_column + "' not found");
    return {*m};
  }
  std::vector<Index> out;
  for (Index j = 0; j < panel.p(); ++j) out.push_back(j);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact formatting

inline std::string selection_csv(const SelectionTable& table) {
  std::string out = "family,L,loglik,n_params,aic,bic,best_aic,best_bic,error\n";
  for (const auto& r : table.rows) {
    out += std::string(to_string(r.family)) + "," + std::to_string(r.L) + "," + format_double(r.loglik) + "," +
           std::to_string(r.n_params) + "," + format_double(r.aic) + "," + format_double(r.bic) + "," +
           (r.best_aic ? "1" : "0") + "," + (r.best_bic ? "1" : "0") + "," + csv_escape(r.error) + "\n";
  }
  return out;
}

inline std::string states_csv(const FittedModel& model, const std::vector<int>& path,
                              const std::vector<std::string>& dates) {
  std::string out = "t,date,state";
  for (int l = 0; l < model.L(); ++l) out += ",smoothed_" + std::to_string(l + 1);
  out += "\n";
  for (Index t = 0; t < model.T(); ++t) {
    out += std::to_string(t + 1) + "," + csv_escape(dates[static_cast<std::size_t>(t)]) + "," +
           std::to_string(path[static_cast<std::size_t>(t)] + 1);
    for (int l = 0; l < model.L(); ++l) out += "," + format_double(model.smoothed(t, l));
    out += "\n";
  }
  return out;
}

inline std::string risk_path_header() { return "t,date,asset,measure,value\n"; }

inline void append_risk_path(std::string& out, const std::vector<RiskPoint>& path, const ReturnPanel& panel) {
  for (const auto& pt : path) {
    out += std::to_string(pt.t + 1) + "," + csv_escape(panel.timestamps()[static_cast<std::size_t>(pt.t)]) + "," +
           csv_escape(panel.assets()[static_cast<std::size_t>(pt.asset)]) + "," + std::string(to_string(pt.measure)) +
           "," + (pt.value ? format_double(*pt.value) : std::string()) + "\n";
  }
}

inline std::string shapley_path_header() { return "t,date,target,measure,institution,share,share_pct,total\n"; }

inline void append_shapley_path(std::string& out, const AttributionPath& path, const ReturnPanel& panel) {
  const auto& target = panel.assets()[static_cast<std::size_t>(path.target)];
  for (const auto& pt : path.points) {
    if (!pt.report) continue;
    for (std::size_t k = 0; k < path.players.size(); ++k) {
      out += std::to_string(pt.t + 1) + "," + csv_escape(panel.timestamps()[static_cast<std::size_t>(pt.t)]) + "," +
             csv_escape(target) + "," + std::string(to_string(path.measure)) + "," +
             csv_escape(panel.assets()[static_cast<std::size_t>(path.players[k])]) + "," +
             format_double(pt.report->shares[k]) + "," + format_double(pt.share_pct[k]) + "," +
             format_double(pt.report->total) + "\n";
    }
  }
}

inline Json attribution_summary(const AttributionPath& path, const ReturnPanel& panel) {
  Json j;
  j["target"] = panel.assets()[static_cast<std::size_t>(path.target)];
  j["measure"] = std::string(to_string(path.measure));
  Json players = Json::array();
  for (Index p : path.players) players.push_back(panel.assets()[static_cast<std::size_t>(p)]);
  j["institutions"] = std::move(players);
  std::size_t gaps = 0;
  for (const auto& pt : path.points) gaps += pt.report ? 0 : 1;
  j["gaps"] = gaps;
  Json states = Json::array();
  for (const auto& s : path.by_state) {
    Json js;
    js["state"] = s.state + 1;
    js["count"] = s.count;
    Json mean = Json::object(), var = Json::object();
    for (std::size_t k = 0; k < path.players.size(); ++k) {
      const auto& name = panel.assets()[static_cast<std::size_t>(path.players[k])];
      mean[name] = detail::number_or_null(s.mean_pct[k]);
      var[name] = detail::number_or_null(s.var_pct[k]);
    }
    js["mean_share_pct"] = std::move(mean);
    js["var_share_pct"] = std::move(var);
    states.push_back(std::move(js));
  }
  j["by_state"] = std::move(states);
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Collects written artifacts so a failed run leaves nothing half-done behind.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::Io, "cannot create output directory '" + dir_.string() + "'");
  }

  void write(const std::string& name, const std::string& content) {
    write_atomic(dir_ / name, content);
    written_.push_back(dir_ / name);
  }

  void rollback() {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    written_.clear();
  }

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

struct PipelineResult {
  FittedModel model;
  std::vector<std::string> artifacts;
};

/// Fits the configured model (selecting by BIC when several candidates are
/// given); `table` receives the selection rows when a selection ran.
inline FittedModel fit_configured(const RunConfig& cfg, const ReturnPanel& panel,
                                  std::optional<SelectionTable>* table = nullptr) {
  const auto opts = fit_options(cfg);
  if (cfg.states.size() == 1 && cfg.families.size() == 1) return fit(panel, cfg.states[0], cfg.families[0], opts);
  auto sel = select_model(panel, cfg.states, cfg.families, opts, true);
  const auto* best = sel.best_by_bic();
  if (!best) fail(ErrorCode::FitFailure, "every candidate model failed to fit");
  FittedModel m = *best->model;
  if (table) {
    for (auto& r : sel.rows) r.model.reset();
    *table = std::move(sel);
  }
  return m;
}

inline PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto panel = load_panel(cfg);
  const auto targets = target_assets(cfg, panel);
  ArtifactWriter out(cfg.output_dir);
  try {
    std::optional<SelectionTable> table;
    auto model = fit_configured(cfg, panel, &table);
    if (table) out.write("selection.csv", selection_csv(*table));
    out.write("model.json", dump(to_json(model)));

    const auto path = viterbi(panel, model.params, model.family);
    out.write("states.csv", states_csv(model, path, panel.timestamps()));

    RiskPathOptions ropts;
    ropts.horizon = cfg.horizon;
    ropts.use_smoothed = cfg.use_smoothed;
    ropts.risk.convention = cfg.dof_convention;
    std::string risk = risk_path_header();
    for (auto measure : cfg.measures) {
      const bool conditional = measure != RiskMeasure::VaR && measure != RiskMeasure::ES;
      const std::vector<Index> assets =
          conditional ? targets : target_assets(RunConfig{}, panel);  // marginal measures for every asset
      for (Index a : assets) {
        if (conditional && panel.p() < 2) continue;
        ConditioningSpec spec;
        spec.target = a;
        spec.tau1 = cfg.tau1;
        spec.tau2 = cfg.tau2;
        for (Index j = 0; j < panel.p(); ++j)
          if (j != a) spec.distressed.push_back(j);
        append_risk_path(risk, risk_path(model, spec, measure, ropts), panel);
      }
    }
    out.write("risk_path.csv", risk);

    ShapleyOptions sopts;
    sopts.mode = cfg.value_mode;
    sopts.risk.convention = cfg.dof_convention;
    std::string shap = shapley_path_header();
    Json attributions = Json::array();
    if (panel.p() >= 2) {
      for (auto measure : cfg.measures) {
        if (measure != RiskMeasure::DeltaMCoVaR && measure != RiskMeasure::DeltaMCoES) continue;
        for (Index a : targets) {
          const auto ap = attribution_path(model, a, measure, cfg.tau1, cfg.tau2, path, cfg.horizon, sopts);
          append_shapley_path(shap, ap, panel);
          attributions.push_back(attribution_summary(ap, panel));
        }
      }
    }
    out.write("shapley_path.csv", shap);

    Json summary;
    summary["family"] = std::string(to_string(model.family));
    summary["L"] = model.L();
    summary["T"] = panel.T();
    summary["loglik"] = model.loglik;
    summary["aic"] = model.aic;
    summary["bic"] = model.bic;
    Json counts = Json::array();
    for (int l = 0; l < model.L(); ++l)
      counts.push_back(static_cast<Index>(std::count(path.begin(), path.end(), l)));
    summary["viterbi_state_counts"] = std::move(counts);
    summary["attribution"] = std::move(attributions);
    out.write("summary.json", dump(summary));

    Json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["git_describe"] = MSRISK_GIT_DESCRIBE;
    manifest["seed"] = cfg.seed;
    Json names = Json::array();
    for (const auto& p : out.written()) names.push_back(p.filename().string());
    names.push_back("run_manifest.json");
    manifest["artifacts"] = std::move(names);
    out.write("run_manifest.json", dump(manifest));

    PipelineResult res;
    res.model = std::move(model);
    for (const auto& p : out.written()) res.artifacts.push_back(p.string());
    return res;
  } catch (...) {
    out.rollback();
    throw;
  }
}

}  // namespace msrisk
