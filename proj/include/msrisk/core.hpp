#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "msrisk/error.hpp"

namespace msrisk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kNuMin = 2.1;
inline constexpr double kNuMax = 200.0;
inline constexpr double kProbabilityTol = 1e-12;
inline constexpr double kSymmetryTol = 1e-10;

enum class ModelFamily { Gaussian, StudentT };

inline std::string_view to_string(ModelFamily f) {
  return f == ModelFamily::Gaussian ? "gaussian" : "t";
}

inline ModelFamily parse_family(std::string_view s) {
  if (s == "gaussian" || s == "normal" || s == "Gaussian") return ModelFamily::Gaussian;
  if (s == "t" || s == "student-t" || s == "studentt" || s == "StudentT") return ModelFamily::StudentT;
  fail(ErrorCode::InvalidArgument, "unknown model family '" + std::string(s) + "'");
}

enum class RiskMeasure { VaR, ES, MCoVaR, MCoES, DeltaMCoVaR, DeltaMCoES };

inline std::string_view to_string(RiskMeasure m) {
  switch (m) {
    case RiskMeasure::VaR: return "VaR";
    case RiskMeasure::ES: return "ES";
    case RiskMeasure::MCoVaR: return "MCoVaR";
    case RiskMeasure::MCoES: return "MCoES";
    case RiskMeasure::DeltaMCoVaR: return "DeltaMCoVaR";
    case RiskMeasure::DeltaMCoES: return "DeltaMCoES";
  }
  return "?";
}

inline RiskMeasure parse_measure(std::string_view s) {
  for (auto m : {RiskMeasure::VaR, RiskMeasure::ES, RiskMeasure::MCoVaR, RiskMeasure::MCoES,
                 RiskMeasure::DeltaMCoVaR, RiskMeasure::DeltaMCoES}) {
    if (s == to_string(m)) return m;
  }
  fail(ErrorCode::InvalidArgument, "unknown risk measure '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Small dense linear-algebra helpers shared by every module.

inline double max_asymmetry(const Matrix& m) {
  return m.rows() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Cholesky factor of a symmetric matrix; throws NotPositiveDefinite on failure.
inline Eigen::LLT<Matrix> cholesky(const Matrix& sigma, const std::string& context = "Sigma") {
  Eigen::LLT<Matrix> llt(sigma);
  const auto diag = llt.matrixLLT().diagonal();
  if (llt.info() != Eigen::Success || !diag.allFinite() || (diag.array() <= 0.0).any()) {
    fail(ErrorCode::NotPositiveDefinite, context + " is not positive definite");
  }
  return llt;
}

inline double log_det_from_cholesky(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Sigma + eps * tr(Sigma)/p * I.
inline Matrix add_jitter(const Matrix& sigma, double eps) {
  const double scale = sigma.trace() / static_cast<double>(sigma.rows());
  return sigma + Matrix::Identity(sigma.rows(), sigma.cols()) * (eps * std::max(scale, 1e-300));
}

/// Sigma = Lambda * Omega * Lambda, with Lambda the diagonal of standard
/// deviations and Omega the implied correlation matrix.
struct ScaleCorrelation {
  Vector scales;
  Matrix correlation;
};

inline ScaleCorrelation decompose(const Matrix& sigma) {
  ScaleCorrelation out;
  out.scales = sigma.diagonal().array().sqrt();
  const Vector inv = out.scales.cwiseInverse();
  out.correlation = inv.asDiagonal() * sigma * inv.asDiagonal();
  out.correlation.diagonal().setOnes();
  return out;
}

inline Matrix select(const Matrix& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

inline Vector select(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

inline std::vector<Index> complement(Index n, const std::vector<Index>& idx) {
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Index i : idx) used[static_cast<std::size_t>(i)] = true;
  std::vector<Index> out;
  for (Index i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// ReturnPanel

/// T x p matrix of asset returns with ordered date labels.
class ReturnPanel {
 public:
  ReturnPanel(std::vector<std::string> timestamps, std::vector<std::string> assets, Matrix values)
      : timestamps_(std::move(timestamps)), assets_(std::move(assets)), values_(std::move(values)) {
    require(values_.rows() >= 2, ErrorCode::InsufficientData, "a return panel needs T >= 2 rows");
    require(values_.cols() >= 1, ErrorCode::InvalidArgument, "a return panel needs p >= 1 assets");
    require(static_cast<Index>(timestamps_.size()) == values_.rows(), ErrorCode::InvalidArgument,
            "timestamp count does not match the number of rows");
    require(static_cast<Index>(assets_.size()) == values_.cols(), ErrorCode::InvalidArgument,
            "asset label count does not match the number of columns");
    for (Index t = 0; t < values_.rows(); ++t)
      for (Index j = 0; j < values_.cols(); ++j)
        require(std::isfinite(values_(t, j)), ErrorCode::MissingValue,
                "missing or non-finite value at row " + std::to_string(t + 1) + ", asset '" +
                    assets_[static_cast<std::size_t>(j)] + "'");
    for (std::size_t t = 1; t < timestamps_.size(); ++t)
      require(timestamps_[t - 1] < timestamps_[t], ErrorCode::NonMonotoneDates,
              "timestamps not strictly increasing at '" + timestamps_[t] + "'");
    std::set<std::string> seen(assets_.begin(), assets_.end());
    require(seen.size() == assets_.size(), ErrorCode::InvalidArgument, "asset labels are not unique");
  }

  Index T() const { return values_.rows(); }
  Index p() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const std::vector<std::string>& timestamps() const { return timestamps_; }
  const std::vector<std::string>& assets() const { return assets_; }
  Vector row(Index t) const { return values_.row(t).transpose(); }

  std::optional<Index> asset_index(std::string_view label) const {
    for (std::size_t j = 0; j < assets_.size(); ++j)
      if (assets_[j] == label) return static_cast<Index>(j);
    return std::nullopt;
  }

 private:
  std::vector<std::string> timestamps_;
  std::vector<std::string> assets_;
  Matrix values_;
};

// ---------------------------------------------------------------------------
// MsmParams

/// Full parameter set of an L-state Markov-switching model. `nu` is empty
/// for the Gaussian family and holds one entry per state for Student-t.
struct MsmParams {
  Vector delta;
  Matrix Q;
  std::vector<Vector> mu;
  std::vector<Matrix> Sigma;
  std::vector<double> nu;

  int L() const { return static_cast<int>(delta.size()); }
  Index p() const { return mu.empty() ? 0 : mu.front().size(); }
  bool has_nu() const { return !nu.empty(); }
};

struct Violation {
  std::string field;
  std::string message;
};

namespace detail {
inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace detail

/// Diagnostic check of every structural invariant. Empty result means valid.
inline std::vector<Violation> validate(const MsmParams& params) {
  std::vector<Violation> out;
  const int L = params.L();
  if (L < 1) {
    out.push_back({"L", "state count must be >= 1"});
    return out;
  }
  if ((params.delta.array() < 0.0).any() || !params.delta.allFinite())
    out.push_back({"delta", "delta has negative or non-finite entries"});
  const double dsum = params.delta.sum();
  if (std::abs(dsum - 1.0) > kProbabilityTol)
    out.push_back({"delta", "delta sums to " + detail::fmt_num(dsum)});

  if (params.Q.rows() != L || params.Q.cols() != L) {
    out.push_back({"Q", "Q must be " + std::to_string(L) + "x" + std::to_string(L)});
  } else {
    for (int l = 0; l < L; ++l) {
      const auto row = params.Q.row(l);
      if ((row.array() < 0.0).any() || !row.allFinite())
        out.push_back({"Q", "row " + std::to_string(l + 1) + " of Q has negative or non-finite entries"});
      const double rs = row.sum();
      if (std::abs(rs - 1.0) > kProbabilityTol)
        out.push_back({"Q", "row " + std::to_string(l + 1) + " of Q sums to " + detail::fmt_num(rs)});
    }
  }

  if (static_cast<int>(params.mu.size()) != L)
    out.push_back({"mu", "expected " + std::to_string(L) + " mean vectors"});
  if (static_cast<int>(params.Sigma.size()) != L)
    out.push_back({"Sigma", "expected " + std::to_string(L) + " scale matrices"});
  const Index p = params.p();
  if (p < 1) out.push_back({"mu", "dimension p must be >= 1"});
  for (std::size_t l = 0; l < params.mu.size(); ++l) {
    if (params.mu[l].size() != p) out.push_back({"mu", "mu_" + std::to_string(l + 1) + " has wrong length"});
    else if (!params.mu[l].allFinite()) out.push_back({"mu", "mu_" + std::to_string(l + 1) + " not finite"});
  }
  for (std::size_t l = 0; l < params.Sigma.size(); ++l) {
    const auto& s = params.Sigma[l];
    const std::string name = "Sigma_" + std::to_string(l + 1);
    if (s.rows() != p || s.cols() != p) {
      out.push_back({"Sigma", name + " has wrong shape"});
      continue;
    }
    if (!s.allFinite()) {
      out.push_back({"Sigma", name + " not finite"});
      continue;
    }
    const double asym = max_asymmetry(s);
    if (asym > kSymmetryTol) out.push_back({"Sigma", name + " not symmetric (asymmetry " + detail::fmt_num(asym) + ")"});
    if (!(min_eigenvalue(s) > 0.0)) out.push_back({"Sigma", name + " not PD"});
  }

  if (params.has_nu()) {
    if (static_cast<int>(params.nu.size()) != L) out.push_back({"nu", "expected " + std::to_string(L) + " dof values"});
    for (std::size_t l = 0; l < params.nu.size(); ++l) {
      const double v = params.nu[l];
      if (!(v >= kNuMin && v <= kNuMax))
        out.push_back({"nu", "nu_" + std::to_string(l + 1) + " = " + detail::fmt_num(v) + " outside [2.1, 200]"});
    }
  }
  return out;
}

/// Throws InvalidArgument when `params` violates an invariant or does not
/// match `family`.
inline void require_valid(const MsmParams& params, ModelFamily family) {
  auto v = validate(params);
  if (family == ModelFamily::StudentT && !params.has_nu()) v.push_back({"nu", "Student-t family needs nu"});
  if (family == ModelFamily::Gaussian && params.has_nu()) v.push_back({"nu", "Gaussian family takes no nu"});
  if (v.empty()) return;
  std::string msg = "invalid parameters:";
  for (const auto& x : v) msg += " [" + x.field + "] " + x.message + ";";
  fail(ErrorCode::InvalidArgument, msg);
}

/// Number of free parameters: means, covariances, transition rows, initial
/// distribution and (Student-t) one dof per state.
inline int count_parameters(int L, Index p, ModelFamily family) {
  const int pi = static_cast<int>(p);
  int k = L * pi + L * pi * (pi + 1) / 2 + L * (L - 1) + (L - 1);
  if (family == ModelFamily::StudentT) k += L;
  return k;
}

// ---------------------------------------------------------------------------
// MixtureDistribution

struct MixtureComponent {
  Vector mu;
  Matrix Sigma;
  std::optional<double> nu;
};

/// Weighted finite mixture of Gaussian or Student-t laws in any dimension.
struct MixtureDistribution {
  ModelFamily family = ModelFamily::Gaussian;
  Vector weights;
  std::vector<MixtureComponent> components;

  Index dim() const { return components.empty() ? 0 : components.front().mu.size(); }
  Index size() const { return static_cast<Index>(components.size()); }

  void validate() const {
    require(!components.empty(), ErrorCode::InvalidArgument, "mixture has no components");
    require(weights.size() == size(), ErrorCode::InvalidArgument, "mixture weight count mismatch");
    require((weights.array() >= 0.0).all() && weights.allFinite(), ErrorCode::InvalidArgument,
            "mixture weights must be non-negative");
    require(std::abs(weights.sum() - 1.0) <= kProbabilityTol, ErrorCode::InvalidArgument,
            "mixture weights sum to " + detail::fmt_num(weights.sum()));
    const Index d = dim();
    require(d >= 1, ErrorCode::InvalidArgument, "mixture dimension must be >= 1");
    for (const auto& c : components) {
      require(c.mu.size() == d && c.Sigma.rows() == d && c.Sigma.cols() == d, ErrorCode::InvalidArgument,
              "mixture components do not share a dimension");
      if (family == ModelFamily::StudentT)
        require(c.nu.has_value() && *c.nu > 0.0, ErrorCode::InvalidArgument,
                "Student-t mixture component needs nu > 0");
      else
        require(!c.nu.has_value(), ErrorCode::InvalidArgument, "Gaussian mixture component carries nu");
    }
  }
};

/// Mixture over all p coordinates with the state laws of `params`.
inline MixtureDistribution mixture_from_params(const MsmParams& params, ModelFamily family, const Vector& weights) {
  MixtureDistribution mix;
  mix.family = family;
  mix.weights = weights;
  for (int l = 0; l < params.L(); ++l) {
    MixtureComponent c{params.mu[static_cast<std::size_t>(l)], params.Sigma[static_cast<std::size_t>(l)], std::nullopt};
    if (family == ModelFamily::StudentT) c.nu = params.nu[static_cast<std::size_t>(l)];
    mix.components.push_back(std::move(c));
  }
  return mix;
}

// ---------------------------------------------------------------------------
// FittedModel

struct FittedModel {
  MsmParams params;
  ModelFamily family = ModelFamily::Gaussian;
  double loglik = 0.0;
  int n_params = 0;
  double aic = 0.0;
  double bic = 0.0;
  Matrix filtered;                     // T x L, P(S_t = l | y_1..y_t)
  Matrix smoothed;                     // T x L
  std::vector<Matrix> smoothed_pairs;  // T-1 matrices L x L
  Matrix w_hat;                        // T x L, Student-t only (empty for Gaussian)
  bool converged = false;
  int iterations = 0;
  std::vector<double> restart_logliks;  // NaN marks a failed restart

  Index T() const { return filtered.rows(); }
  int L() const { return params.L(); }
};

inline void set_information_criteria(FittedModel& m, Index T) {
  m.n_params = count_parameters(m.params.L(), m.params.p(), m.family);
  m.aic = -2.0 * m.loglik + 2.0 * m.n_params;
  m.bic = -2.0 * m.loglik + m.n_params * std::log(static_cast<double>(T));
}

// ---------------------------------------------------------------------------
// ConditioningSpec

/// Target asset i, distressed set J_d (held at tau2 levels) and the normal
/// set J_n = everything else (held at the median level).
struct ConditioningSpec {
  Index target = 0;
  std::vector<Index> distressed;
  double tau1 = 0.05;
  double tau2 = 0.05;
  double normal_level = 0.5;

  void validate(Index p) const {
    require(target >= 0 && target < p, ErrorCode::InvalidArgument, "target index out of range");
    require(!distressed.empty(), ErrorCode::InvalidArgument, "distressed set must be nonempty");
    std::set<Index> seen;
    for (Index j : distressed) {
      require(j >= 0 && j < p, ErrorCode::InvalidArgument, "distressed index out of range");
      require(j != target, ErrorCode::InvalidArgument, "distressed set contains the target");
      require(seen.insert(j).second, ErrorCode::InvalidArgument, "distressed indices not unique");
    }
    require(tau1 > 0.0 && tau1 < 1.0, ErrorCode::InvalidArgument, "tau1 must lie in (0,1)");
    require(tau2 > 0.0 && tau2 < 1.0, ErrorCode::InvalidArgument, "tau2 must lie in (0,1)");
  }

  /// J_n: every asset other than the target and the distressed set.
  std::vector<Index> normal_set(Index p) const {
    std::vector<Index> out;
    for (Index j = 0; j < p; ++j)
      if (j != target && std::find(distressed.begin(), distressed.end(), j) == distressed.end()) out.push_back(j);
    return out;
  }
};

// ---------------------------------------------------------------------------
// ShapleyReport

/// Per-institution shares of the target's total risk. Subsets of players are
/// encoded as bitmasks over `players` (bit k set <=> players[k] in H).
struct ShapleyReport {
  Index target = 0;
  RiskMeasure measure = RiskMeasure::DeltaMCoVaR;
  std::vector<Index> players;
  std::vector<double> subset_values;
  std::vector<double> shares;
  double total = 0.0;
};

}  // namespace msrisk
