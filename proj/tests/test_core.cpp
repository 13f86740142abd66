#include <gtest/gtest.h>

#include "msrisk/core.hpp"
#include "msrisk/json_io.hpp"
#include "msrisk/rng.hpp"

using namespace msrisk;

namespace {

MsmParams two_state() {
  MsmParams p;
  p.delta = Vector::Constant(2, 0.5);
  p.Q.resize(2, 2);
  p.Q << 0.9, 0.1, 0.2, 0.8;
  p.mu = {Vector::Zero(2), Vector::Ones(2)};
  Matrix s(2, 2);
  s << 1.0, 0.3, 0.3, 2.0;
  p.Sigma = {s, 2.0 * s};
  return p;
}

bool has_message(const std::vector<Violation>& v, const std::string& text) {
  for (const auto& x : v)
    if (x.message.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Validate, SingleStateIsValid) {
  MsmParams p;
  p.delta = Vector::Ones(1);
  p.Q = Matrix::Ones(1, 1);
  p.mu = {Vector::Zero(1)};
  p.Sigma = {Matrix::Identity(1, 1)};
  EXPECT_TRUE(validate(p).empty());
}

TEST(Validate, DeltaSumReported) {
  auto p = two_state();
  p.delta << 0.6, 0.6;
  const auto v = validate(p);
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(has_message(v, "delta sums to 1.2"));
}

TEST(Validate, IndefiniteSigmaReported) {
  auto p = two_state();
  // eigenvalues 1 and -1e-3 by construction
  Matrix U(2, 2);
  const double c = std::cos(0.4), s = std::sin(0.4);
  U << c, -s, s, c;
  Vector ev(2);
  ev << 1.0, -1e-3;
  p.Sigma[0] = U * ev.asDiagonal() * U.transpose();
  EXPECT_TRUE(has_message(validate(p), "Sigma_1 not PD"));
}

TEST(Validate, BadTransitionRowAndNu) {
  auto p = two_state();
  p.Q(1, 1) = 0.5;
  p.nu = {1.5, 10.0};
  const auto v = validate(p);
  EXPECT_TRUE(has_message(v, "row 2 of Q sums to 0.7"));
  EXPECT_TRUE(has_message(v, "nu_1 = 1.5 outside [2.1, 200]"));
}

TEST(Validate, AsymmetricSigma) {
  auto p = two_state();
  p.Sigma[1](0, 1) += 1e-6;
  EXPECT_TRUE(has_message(validate(p), "Sigma_2 not symmetric"));
}

TEST(RequireValid, FamilyMismatch) {
  auto p = two_state();
  EXPECT_NO_THROW(require_valid(p, ModelFamily::Gaussian));
  EXPECT_THROW(require_valid(p, ModelFamily::StudentT), Error);
}

TEST(ReturnPanel, Invariants) {
  Matrix v = Matrix::Zero(3, 2);
  EXPECT_NO_THROW(ReturnPanel({"2020-01-01", "2020-01-02", "2020-01-03"}, {"a", "b"}, v));
  try {
    ReturnPanel({"2020-01-01", "2020-01-03", "2020-01-02"}, {"a", "b"}, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotoneDates);
  }
  try {
    ReturnPanel({"2020-01-01", "2020-01-02", "2020-01-03"}, {"a", "a"}, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  v(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    ReturnPanel({"2020-01-01", "2020-01-02", "2020-01-03"}, {"a", "b"}, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingValue);
  }
  EXPECT_THROW(ReturnPanel({"x"}, {"a"}, Matrix::Zero(1, 1)), Error);
}

TEST(Decompose, LambdaOmegaView) {
  Matrix s(2, 2);
  s << 4.0, 1.2, 1.2, 9.0;
  const auto d = decompose(s);
  EXPECT_DOUBLE_EQ(d.scales(0), 2.0);
  EXPECT_DOUBLE_EQ(d.scales(1), 3.0);
  EXPECT_NEAR(d.correlation(0, 1), 0.2, 1e-15);
  EXPECT_NEAR((d.scales.asDiagonal() * d.correlation * d.scales.asDiagonal() - s).norm(), 0.0, 1e-14);
}

TEST(Cholesky, ThrowsOnIndefinite) {
  Matrix s(2, 2);
  s << 1.0, 2.0, 2.0, 1.0;
  try {
    cholesky(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPositiveDefinite);
  }
}

TEST(ParameterCount, StandardCount) {
  // L p + L p(p+1)/2 + L(L-1) + (L-1) (+ L for t)
  EXPECT_EQ(count_parameters(1, 1, ModelFamily::Gaussian), 2);
  EXPECT_EQ(count_parameters(2, 3, ModelFamily::Gaussian), 6 + 12 + 2 + 1);
  EXPECT_EQ(count_parameters(3, 5, ModelFamily::StudentT), 15 + 45 + 6 + 2 + 3);
}

TEST(ConditioningSpec, Validation) {
  ConditioningSpec s;
  s.target = 0;
  s.distressed = {1, 2};
  EXPECT_NO_THROW(s.validate(4));
  EXPECT_EQ(s.normal_set(4), std::vector<Index>{3});
  s.distressed = {0};
  EXPECT_THROW(s.validate(4), Error);
  s.distressed = {1, 1};
  EXPECT_THROW(s.validate(4), Error);
  s.distressed = {1};
  s.tau1 = 1.0;
  EXPECT_THROW(s.validate(4), Error);
}

TEST(Json, ParamsRoundTripIsByteIdentical) {
  RandomStream rng(7, "json");
  for (int rep = 0; rep < 20; ++rep) {
    auto p = two_state();
    for (auto& m : p.mu)
      for (Index i = 0; i < m.size(); ++i) m(i) = rng.uniform() * 1e-3 - 7e-4;
    p.Sigma[0](0, 0) = 1.0 + rng.uniform() / 3.0;
    p.nu = {2.1 + rng.uniform() * 10.0, 1.0 / 3.0 + 100.0};
    const std::string a = to_json(p).dump();
    const auto parsed = params_from_json(Json::parse(a));
    const std::string b = to_json(parsed).dump();
    EXPECT_EQ(a, b);
    EXPECT_EQ(parsed.mu[1](0), p.mu[1](0));
    EXPECT_EQ(parsed.nu[0], p.nu[0]);
  }
}

TEST(Json, FieldOrderIsCanonical) {
  const auto j = to_json(two_state());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"L", "delta", "Q", "mu", "Sigma", "nu"}));
  EXPECT_TRUE(j["nu"].is_null());
}

TEST(RandomStream, StreamsAreDeterministicAndDistinct) {
  RandomStream a(1, "x", 0), b(1, "x", 0), c(1, "x", 1), d(1, "y", 0);
  for (int i = 0; i < 10; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    EXPECT_NE(va, d());
  }
  RandomStream u(3, "u");
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
    s += x;
  }
  EXPECT_NEAR(s / 100000.0, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / 100000.0));
}
