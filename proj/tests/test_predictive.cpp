#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "support.hpp"

using namespace msrisk;
using namespace msrisk::testing;

namespace {

Matrix random_stochastic(int L, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix Q(L, L);
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < L; ++k) Q(l, k) = u(gen);
    Q.row(l) /= Q.row(l).sum();
  }
  return Q;
}

MixtureDistribution mixture_of(const MsmParams& prm, ModelFamily fam, std::vector<double> w) {
  return mixture_from_params(prm, fam, Vector::Map(w.data(), static_cast<Index>(w.size())));
}

double mixture_pdf_oracle(const MixtureDistribution& mix, const Vector& y) {
  double s = 0.0;
  for (Index l = 0; l < mix.size(); ++l) {
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    s += mix.weights(l) * std::exp(oracle_logpdf(y, c.mu, c.Sigma, c.nu));
  }
  return s;
}

}  // namespace

TEST(PredictiveWeights, Definition) {
  std::mt19937_64 gen(1);
  const Matrix Q = random_stochastic(3, gen);
  for (int j = 0; j < 3; ++j) {
    const Vector e = Vector::Unit(3, j);
    EXPECT_LT((predictive_weights(e, Q, 1) - Q.row(j).transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
  Vector f(3);
  f << 0.2, 0.5, 0.3;
  for (int h : {1, 2, 7}) EXPECT_LT((predictive_weights(f, Matrix::Identity(3, 3), h) - f).norm(), 1e-15);
  // explicit cube by repeated multiplication
  const Matrix Q3 = Q * Q * Q;
  EXPECT_LT((predictive_weights(f, Q, 3) - (f.transpose() * Q3).transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(predictive_weights(f, Q, 0), Error);
}

TEST(PredictiveWeights, NormalizedAndChapmanKolmogorov) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 50; ++rep) {
    const int L = 2 + rep % 4;
    const Matrix Q = random_stochastic(L, gen);
    Vector f(L);
    for (int l = 0; l < L; ++l) f(l) = u(gen);
    f /= f.sum();
    for (int h = 1; h <= 5; ++h) EXPECT_NEAR(predictive_weights(f, Q, h).sum(), 1.0, 1e-12);
    const Vector once = predictive_weights(f, Q, 1);
    EXPECT_LT((predictive_weights(f, Q, 2) - predictive_weights(once, Q, 1)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(PredictiveMixture, UsesFilteredRow) {
  std::mt19937_64 gen(3);
  FittedModel m;
  m.family = ModelFamily::StudentT;
  m.params = random_params(2, 2, ModelFamily::StudentT, gen);
  m.filtered = Matrix(3, 2);
  m.filtered << 1.0, 0.0, 0.4, 0.6, 0.0, 1.0;
  const auto mix = predictive_mixture(m, {1, 1});
  EXPECT_LT((mix.weights - (m.filtered.row(1) * m.params.Q).transpose()).norm(), 1e-15);
  EXPECT_EQ(*mix.components[1].nu, m.params.nu[1]);
  EXPECT_EQ(mix.components[0].Sigma, m.params.Sigma[0]);
  EXPECT_THROW(predictive_mixture(m, {3, 1}), Error);
}

TEST(Marginalize, TrivialCases) {
  std::mt19937_64 gen(4);
  const auto prm = random_params(2, 3, ModelFamily::Gaussian, gen);
  const auto mix = mixture_of(prm, ModelFamily::Gaussian, {0.3, 0.7});
  const auto all = marginalize(mix, {0, 1, 2});
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(all.components[l].mu, mix.components[l].mu);
    EXPECT_EQ(all.components[l].Sigma, mix.components[l].Sigma);
  }
  const auto one = mixture_of(prm, ModelFamily::Gaussian, {1.0, 0.0});
  const auto m2 = marginalize(one, {1});
  EXPECT_EQ(m2.components[0].mu(0), prm.mu[0](1));
  EXPECT_EQ(m2.components[0].Sigma(0, 0), prm.Sigma[0](1, 1));
  EXPECT_THROW(marginalize(mix, {}), Error);
  EXPECT_THROW(marginalize(mix, {3}), Error);
  EXPECT_THROW(marginalize(mix, {1, 1}), Error);
}

TEST(Marginalize, StudentMixtureMatchesIntegratedJoint) {
  std::mt19937_64 gen(5);
  const auto prm = random_params(2, 3, ModelFamily::StudentT, gen, 0.5);
  const auto mix = mixture_of(prm, ModelFamily::StudentT, {0.45, 0.55});
  const auto marg = marginalize(mix, {0, 2});
  boost::math::quadrature::tanh_sinh<double> ts;
  std::normal_distribution<double> z;
  for (int k = 0; k < 50; ++k) {
    const double a = z(gen), b = z(gen);
    const double oracle = ts.integrate(
        [&](double x) {
          Vector y(3);
          y << a, x, b;
          return mixture_pdf_oracle(mix, y);
        },
        -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    Vector y2(2);
    y2 << a, b;
    EXPECT_NEAR(std::exp(mixture_logpdf(marg, y2)), oracle, 1e-9 * oracle + 1e-14);
  }
}

TEST(Condition, TextbookGaussian) {
  MixtureDistribution mix;
  mix.family = ModelFamily::Gaussian;
  mix.weights = Vector::Ones(1);
  Matrix s(2, 2);
  s << 1.0, 0.5, 0.5, 1.0;
  mix.components = {{Vector::Zero(2), s, std::nullopt}};
  const auto c = condition(mix, {1}, Vector::Constant(1, 1.0));
  EXPECT_NEAR(c.components[0].mu(0), 0.5, 1e-15);
  EXPECT_NEAR(c.components[0].Sigma(0, 0), 0.75, 1e-15);
}

TEST(Condition, BlockDiagonalReducesToMarginal) {
  std::mt19937_64 gen(6);
  auto prm = random_params(3, 3, ModelFamily::Gaussian, gen);
  for (auto& S : prm.Sigma) {
    S(0, 2) = S(2, 0) = 0.0;
    S(1, 2) = S(2, 1) = 0.0;
  }
  const auto mix = mixture_of(prm, ModelFamily::Gaussian, {0.2, 0.3, 0.5});
  const Vector y2 = Vector::Constant(1, 0.4);
  const auto c = condition(mix, {2}, y2);
  const auto free = marginalize(mix, {0, 1});
  Vector w(3);
  for (int l = 0; l < 3; ++l) {
    EXPECT_LT((c.components[l].mu - free.components[l].mu).norm(), 1e-14);
    EXPECT_LT((c.components[l].Sigma - free.components[l].Sigma).norm(), 1e-14);
    w(l) = mix.weights(l) * normal_pdf((0.4 - prm.mu[l](2)) / std::sqrt(prm.Sigma[l](2, 2))) /
           std::sqrt(prm.Sigma[l](2, 2));
  }
  EXPECT_LT((c.weights - w / w.sum()).norm(), 1e-13);
}

TEST(Condition, BayesConsistency) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> z;
  for (auto fam : {ModelFamily::Gaussian, ModelFamily::StudentT}) {
    const auto prm = random_params(2, 3, fam, gen, 0.6);
    const auto mix = mixture_of(prm, fam, {0.35, 0.65});
    for (int rep = 0; rep < 20; ++rep) {
      Vector y(3);
      y << z(gen), z(gen), z(gen);
      const std::vector<Index> given = {rep % 3};
      const auto cond = condition(mix, given, select(y, given), DofConvention::StandardDof);
      const auto free = complement(3, given);
      const double lhs = std::exp(mixture_logpdf(cond, select(y, free)) + mixture_logpdf(marginalize(mix, given), select(y, given)));
      const double rhs = std::exp(mixture_logpdf(mix, y));
      EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
    }
  }
}

TEST(Condition, ConditionalDensityIntegratesToOne) {
  std::mt19937_64 gen(8);
  const auto prm = random_params(2, 3, ModelFamily::StudentT, gen, 0.5);
  const auto mix = mixture_of(prm, ModelFamily::StudentT, {0.5, 0.5});
  boost::math::quadrature::tanh_sinh<double> ts;
  const double inf = std::numeric_limits<double>::infinity();
  for (auto conv : {DofConvention::PaperDof, DofConvention::StandardDof}) {
    // one free coordinate
    const auto c1 = condition(mix, {0, 2}, Vector::Constant(2, -1.5), conv);
    const double i1 =
        ts.integrate([&](double x) { return std::exp(mixture_logpdf(c1, Vector::Constant(1, x))); }, -inf, inf);
    EXPECT_NEAR(i1, 1.0, 1e-6);
    // two free coordinates
    const auto c2 = condition(mix, {1}, Vector::Constant(1, 0.7), conv);
    const double i2 = ts.integrate(
        [&](double a) {
          return ts.integrate(
              [&](double b) {
                Vector y(2);
                y << a, b;
                return std::exp(mixture_logpdf(c2, y));
              },
              -inf, inf);
        },
        -inf, inf);
    EXPECT_NEAR(i2, 1.0, 1e-6);
  }
}

TEST(Condition, DofConventions) {
  std::mt19937_64 gen(9);
  const auto prm = random_params(1, 3, ModelFamily::StudentT, gen);
  const auto mix = mixture_of(prm, ModelFamily::StudentT, {1.0});
  const Vector y2 = Vector::Constant(2, -0.3);
  const auto paper = condition(mix, {1, 2}, y2, DofConvention::PaperDof);
  const auto standard = condition(mix, {1, 2}, y2, DofConvention::StandardDof);
  const double nu = prm.nu[0];
  EXPECT_DOUBLE_EQ(*paper.components[0].nu, 1.0 + nu);
  EXPECT_DOUBLE_EQ(*standard.components[0].nu, nu + 2.0);
  EXPECT_EQ(paper.components[0].mu, standard.components[0].mu);
  // scale inflation (nu + m2) / (nu + p2) for the classical result
  const Matrix S22 = select(prm.Sigma[0], {1, 2}, {1, 2});
  const Vector r = y2 - select(prm.mu[0], {1, 2});
  const double m2 = r.dot(S22.inverse() * r);
  const Matrix S12 = select(prm.Sigma[0], {0}, {1, 2});
  const double schur = prm.Sigma[0](0, 0) - (S12 * S22.inverse() * S12.transpose())(0, 0);
  EXPECT_NEAR(standard.components[0].Sigma(0, 0), schur * (nu + m2) / (nu + 2.0), 1e-12);
  EXPECT_NEAR(paper.components[0].Sigma(0, 0), schur * (nu + m2) / (nu + 1.0), 1e-12);
  EXPECT_EQ(parse_dof_convention("paper"), DofConvention::PaperDof);
  EXPECT_EQ(parse_dof_convention("standard"), DofConvention::StandardDof);
  EXPECT_THROW(parse_dof_convention("other"), Error);
}

TEST(Condition, DeepTailWeightsStayFinite) {
  std::mt19937_64 gen(10);
  const auto prm = random_params(3, 2, ModelFamily::Gaussian, gen);
  const auto mix = mixture_of(prm, ModelFamily::Gaussian, {0.2, 0.3, 0.5});
  const auto c = condition(mix, {1}, Vector::Constant(1, -60.0));
  EXPECT_TRUE(c.weights.allFinite());
  EXPECT_NEAR(c.weights.sum(), 1.0, 1e-14);
}

TEST(Condition, Errors) {
  std::mt19937_64 gen(11);
  const auto prm = random_params(1, 2, ModelFamily::Gaussian, gen);
  const auto mix = mixture_of(prm, ModelFamily::Gaussian, {1.0});
  EXPECT_THROW(condition(mix, {0, 1}, Vector::Zero(2)), Error);
  EXPECT_THROW(condition(mix, {0}, Vector::Zero(2)), Error);
  EXPECT_THROW(condition(mix, {0}, Vector::Constant(1, std::nan(""))), Error);
}
