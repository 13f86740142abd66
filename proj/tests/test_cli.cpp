#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include "support.hpp"

using namespace msrisk;
using namespace msrisk::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msrisk-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MSRISK_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorCode ingest_error(const std::string& text, const IngestOptions& opts = {}) {
  try {
    panel_from_csv(parse_csv(text), opts);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return ErrorCode::InvalidArgument;
}

MsmParams two_state_gaussian() {
  MsmParams p;
  p.delta = Vector::Constant(2, 0.5);
  p.Q = Matrix(2, 2);
  p.Q << 0.95, 0.05, 0.1, 0.9;
  Matrix a(3, 3), b(3, 3);
  a << 1.0, 0.3, 0.4, 0.3, 1.0, 0.2, 0.4, 0.2, 1.0;
  b << 4.0, 2.4, 2.8, 2.4, 4.0, 2.0, 2.8, 2.0, 4.0;
  p.mu = {Vector::Constant(3, 0.1), Vector::Constant(3, -0.3)};
  p.Sigma = {a, b};
  return p;
}

}  // namespace

TEST(Ingest, ToyFileWithAndWithoutReturns) {
  const std::string text = "date,A,B\n2020-01-03,100,50\n2020-01-10,110,55\n2020-01-17,99,60\n";
  const auto raw = panel_from_csv(parse_csv(text));
  EXPECT_EQ(raw.T(), 3);
  EXPECT_EQ(raw.p(), 2);
  IngestOptions o;
  o.to_returns = true;
  const auto r = panel_from_csv(parse_csv(text), o);
  ASSERT_EQ(r.T(), 2);
  EXPECT_NEAR(r.values()(0, 0), 0.0953102, 1e-7);
  EXPECT_NEAR(r.values()(1, 0), -0.1053605, 1e-7);
  EXPECT_EQ(r.timestamps().front(), "2020-01-10");
}

TEST(Ingest, QuotedFieldsAndColumnSelection) {
  const std::string text = "\"date\",\"x, y\",B\r\n2020-01-03,\"1.5\",2\r\n2020-01-04,3,\"4\"\r\n";
  IngestOptions o;
  o.asset_columns = {"B"};
  const auto p = panel_from_csv(parse_csv(text), o);
  EXPECT_EQ(p.p(), 1);
  EXPECT_EQ(p.values()(1, 0), 4.0);
  const auto all = panel_from_csv(parse_csv(text));
  EXPECT_EQ(all.assets()[0], "x, y");
  EXPECT_EQ(all.values()(0, 0), 1.5);
}

TEST(Ingest, ErrorsAreDistinct) {
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-02,2\n"), ErrorCode::NonMonotoneDates);
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-03,2\n"), ErrorCode::NonMonotoneDates);
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-04,\n"), ErrorCode::MissingValue);
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-04,abc\n"), ErrorCode::MalformedCsv);
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-04,\"2\n"), ErrorCode::MalformedCsv);
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1,7\n2020-01-04,2\n"), ErrorCode::MalformedCsv);
  EXPECT_EQ(ingest_error("when,A\n2020-01-03,1\n2020-01-04,2\n"), ErrorCode::MissingColumn);
  IngestOptions o;
  o.asset_columns = {"Z"};
  EXPECT_EQ(ingest_error("date,A\n2020-01-03,1\n2020-01-04,2\n", o), ErrorCode::MissingColumn);
  try {
    panel_from_csv(parse_csv("date,A,B\n2020-01-03,1,2\n2020-01-04,2,\n"));
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'B'"), std::string::npos) << msg;
  }
}

TEST(Ingest, CsvRoundTripIsLossless) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  Matrix Y(50, 3);
  for (Index t = 0; t < 50; ++t)
    for (Index j = 0; j < 3; ++j) Y(t, j) = z(gen) * std::pow(10.0, static_cast<double>(j * 3 - 4));
  const auto p = panel_of(Y);
  const auto back = panel_from_csv(parse_csv(panel_to_csv(p)));
  EXPECT_TRUE((back.values().array() == p.values().array()).all());
  EXPECT_EQ(back.timestamps(), p.timestamps());
  EXPECT_EQ(panel_to_csv(back), panel_to_csv(p));
  EXPECT_EQ(csv_escape("a,\"b\""), "\"a,\"\"b\"\"\"");
}

TEST(Describe, FixedFixture) {
  Matrix Y(10, 1);
  Y << 0.012, -0.034, 0.005, 0.021, -0.008, 0.044, -0.061, 0.003, 0.017, -0.002;
  const auto s = describe(panel_of(Y)).at(0);
  EXPECT_DOUBLE_EQ(s.min, -0.061);
  EXPECT_DOUBLE_EQ(s.max, 0.044);
  EXPECT_NEAR(s.mean_x1e3, -0.3, 1e-12);
  EXPECT_NEAR(s.std, 0.029416737488111157, 1e-15);
  EXPECT_NEAR(s.skewness, -0.7295236008936063, 1e-12);
  EXPECT_NEAR(s.kurtosis, 3.138984562006692, 1e-12);
  EXPECT_NEAR(s.q01, -0.05857, 1e-15);
  EXPECT_NEAR(s.jarque_bera, 0.8950564356330364, 1e-12);
}

TEST(Describe, GaussianSampleAndErrors) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> z;
  const Index T = 100000;
  Matrix Y(T, 1);
  for (Index t = 0; t < T; ++t) Y(t, 0) = z(gen);
  const auto s = describe(panel_of(Y)).at(0);
  EXPECT_LT(std::abs(s.skewness), 4.0 * std::sqrt(6.0 / T));
  EXPECT_LT(std::abs(s.kurtosis - 3.0), 4.0 * std::sqrt(24.0 / T));
  EXPECT_LT(s.jarque_bera, 13.8);  // chi2(2) 0.999 quantile
  EXPECT_THROW(describe(panel_of(Matrix::Constant(20, 1, 0.01))), Error);
  EXPECT_THROW(describe(panel_of(Matrix::Ones(7, 1))), Error);
}

TEST(Config, PrecedenceAndValidation) {
  const auto cfg = make_config({{"tau1", "0.1"}, {"states", "1-3"}, {"family", "gaussian,t"}}, {{"tau1", "0.02"}});
  EXPECT_EQ(cfg.tau1, 0.02);
  EXPECT_EQ(cfg.states, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(cfg.families.size(), 2u);
  auto bad = make_config({}, {{"tau1", "0.7"}});
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(make_config({{"nonsense", "1"}}, {}), Error);
  EXPECT_THROW(make_config({{"restarts", "2.5"}}, {}), Error);
  EXPECT_EQ(exit_code_for(ErrorCode::BadConfig), kExitBadConfig);
  EXPECT_EQ(exit_code_for(ErrorCode::MissingColumn), kExitMissingColumn);
  EXPECT_EQ(exit_code_for(ErrorCode::NonMonotoneDates), kExitNonMonotoneDates);
}

TEST(Cli, ExitCodesForBadInput) {
  const auto dir = scratch("exit-codes");
  write(dir / "unsorted.csv", "date,A\n2020-01-03,1\n2020-01-02,2\n");
  write(dir / "blank.csv", "date,A\n2020-01-03,1\n2020-01-04,\n");
  write(dir / "ok.csv", "date,A,B\n2020-01-03,1,2\n2020-01-04,2,3\n");
  EXPECT_EQ(run("describe --input " + (dir / "unsorted.csv").string(), dir / "log"), kExitNonMonotoneDates);
  EXPECT_EQ(run("describe --input " + (dir / "blank.csv").string(), dir / "log"), kExitMissingValue);
  EXPECT_NE(slurp(dir / "log").find("line 3"), std::string::npos);
  EXPECT_EQ(run("describe --input " + (dir / "ok.csv").string() + " --assets Z", dir / "log"), kExitMissingColumn);
  EXPECT_EQ(run("describe --input " + (dir / "missing.csv").string(), dir / "log"), kExitIo);
  EXPECT_EQ(run("fit --input " + (dir / "ok.csv").string() + " --tau1 0.7", dir / "log"), kExitBadConfig);
  EXPECT_EQ(run("frobnicate", dir / "log"), kExitBadConfig);
}

TEST(Cli, SimulateThenPipeline) {
  const auto dir = scratch("pipeline");
  write(dir / "params.json", dump(to_json(two_state_gaussian())));
  ASSERT_EQ(run("simulate --params " + (dir / "params.json").string() + " --T 240 --seed 4 --output " +
                    (dir / "data.csv").string(),
                dir / "log"),
            0)
      << slurp(dir / "log");
  ASSERT_EQ(run("describe --input " + (dir / "data.csv").string(), dir / "desc"), 0);
  EXPECT_EQ(slurp(dir / "desc").rfind("asset,min,max,mean_x1e3,std,skewness,kurtosis,q01,jarque_bera\n", 0), 0u);

  write(dir / "run.ini",
        "input = " + (dir / "data.csv").string() +
            "\nfamily = gaussian\nstates = 1-2\nrestarts = 2\nmarket = A1\n"
            "measures = VaR,ES,MCoVaR,MCoES,DeltaMCoVaR,DeltaMCoES\nseed = 9\n");
  const std::string base = "pipeline --config " + (dir / "run.ini").string();
  ASSERT_EQ(run(base + " --out " + (dir / "a").string(), dir / "log"), 0) << slurp(dir / "log");
  for (const char* f : {"model.json", "selection.csv", "states.csv", "risk_path.csv", "shapley_path.csv",
                        "summary.json", "run_manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;

  // schemas
  const auto model = model_from_json(Json::parse(slurp(dir / "a" / "model.json")));
  EXPECT_EQ(model.L(), 2);
  EXPECT_EQ(model.T(), 240);
  const auto sel = parse_csv(slurp(dir / "a" / "selection.csv"));
  EXPECT_EQ(sel.rows.size(), 2u);
  const auto states = parse_csv(slurp(dir / "a" / "states.csv"));
  EXPECT_EQ(states.header, (std::vector<std::string>{"t", "date", "state", "smoothed_1", "smoothed_2"}));
  EXPECT_EQ(states.rows.size(), 240u);
  const auto risk = parse_csv(slurp(dir / "a" / "risk_path.csv"));
  EXPECT_EQ(risk.header, (std::vector<std::string>{"t", "date", "asset", "measure", "value"}));
  // VaR and ES for 3 assets plus 4 conditional measures for the market target
  EXPECT_EQ(risk.rows.size(), 240u * (3 * 2 + 4));

  // file-level efficiency: shares per (t, measure) sum to the total
  const auto sh = parse_csv(slurp(dir / "a" / "shapley_path.csv"));
  ASSERT_EQ(sh.header.size(), 8u);
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> groups;
  for (const auto& r : sh.rows) {
    auto& g = groups[{r[0], r[3]}];
    g.first += std::stod(r[5]);
    g.second = std::stod(r[7]);
  }
  EXPECT_EQ(groups.size(), 480u);
  for (const auto& [k, g] : groups) EXPECT_NEAR(g.first, g.second, 1e-8 * std::max(1.0, std::abs(g.second)));
  const auto summary = Json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_EQ(summary.at("attribution").size(), 2u);

  // determinism
  ASSERT_EQ(run(base + " --out " + (dir / "b").string(), dir / "log"), 0);
  for (const char* f : {"model.json", "selection.csv", "states.csv", "risk_path.csv", "shapley_path.csv",
                        "summary.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;

  // a failing run leaves no artifacts behind
  EXPECT_EQ(run(base + " --market NOPE --out " + (dir / "c").string(), dir / "log"), kExitMissingColumn);
  EXPECT_TRUE(!fs::exists(dir / "c") || fs::is_empty(dir / "c"));
  EXPECT_EQ(run(base + " --tau1 0.7 --out " + (dir / "d").string(), dir / "log"), kExitBadConfig);
}
