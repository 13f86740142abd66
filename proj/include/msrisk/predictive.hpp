#pragma once

// h-step predictive mixtures and their marginal / conditional laws.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "msrisk/core.hpp"
#include "msrisk/dist.hpp"

namespace msrisk {

/// Degrees of freedom of a conditional Student-t component. PaperDof keeps
/// p1 + nu (p1 free coordinates); StandardDof is the classical nu + p2
/// (p2 conditioning coordinates).
enum class DofConvention { PaperDof, StandardDof };

inline std::string_view to_string(DofConvention c) { return c == DofConvention::PaperDof ? "paper" : "standard"; }

inline DofConvention parse_dof_convention(std::string_view s) {
  if (s == "paper") return DofConvention::PaperDof;
  if (s == "standard") return DofConvention::StandardDof;
  fail(ErrorCode::InvalidArgument, "unknown dof convention '" + std::string(s) + "'");
}

/// origin_t is a zero-based row of the panel.
struct PredictiveSpec {
  Index origin_t = 0;
  int horizon_h = 1;
};

/// pi^(h) = filtered_row * Q^h.
inline Vector predictive_weights(const Vector& filtered_row, const Matrix& Q, int h) {
  require(h >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  Eigen::RowVectorXd w = filtered_row.transpose();
  for (int k = 0; k < h; ++k) w = w * Q;
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w.transpose();
}

inline MixtureDistribution predictive_mixture(const FittedModel& model, const PredictiveSpec& spec) {
  require(spec.origin_t >= 0 && spec.origin_t < model.T(), ErrorCode::InvalidArgument, "origin_t out of range");
  require(spec.horizon_h >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  const Vector w = predictive_weights(model.filtered.row(spec.origin_t).transpose(), model.params.Q, spec.horizon_h);
  return mixture_from_params(model.params, model.family, w);
}

inline void check_indices(const std::vector<Index>& idx, Index d, const char* what) {
  require(!idx.empty(), ErrorCode::InvalidArgument, std::string(what) + " index set is empty");
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  for (Index i : idx) {
    require(i >= 0 && i < d, ErrorCode::InvalidArgument, std::string(what) + " index out of range");
    require(!seen[static_cast<std::size_t>(i)], ErrorCode::InvalidArgument, std::string(what) + " index repeated");
    seen[static_cast<std::size_t>(i)] = true;
  }
}

/// Law of the coordinates `keep` (in the given order).
inline MixtureDistribution marginalize(const MixtureDistribution& mix, const std::vector<Index>& keep) {
  check_indices(keep, mix.dim(), "marginal");
  MixtureDistribution out;
  out.family = mix.family;
  out.weights = mix.weights;
  for (const auto& c : mix.components) out.components.push_back({select(c.mu, keep), select(c.Sigma, keep, keep), c.nu});
  return out;
}

/// Law of the free coordinates (ascending order) given Y_given = values.
inline MixtureDistribution condition(const MixtureDistribution& mix, const std::vector<Index>& given,
                                     const Vector& values, DofConvention convention = DofConvention::PaperDof) {
  const Index d = mix.dim();
  check_indices(given, d, "conditioning");
  require(static_cast<Index>(given.size()) < d, ErrorCode::InvalidArgument, "conditioning set must be a proper subset");
  require(values.size() == static_cast<Index>(given.size()), ErrorCode::InvalidArgument,
          "conditioning values dimension mismatch");
  require(values.allFinite(), ErrorCode::InvalidArgument, "conditioning values must be finite");
  const auto free = complement(d, given);
  const double p1 = static_cast<double>(free.size());
  const double p2 = static_cast<double>(given.size());

  MixtureDistribution out;
  out.family = mix.family;
  Vector logw(mix.size());
  for (Index l = 0; l < mix.size(); ++l) {
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const Matrix S22 = select(c.Sigma, given, given);
    const Matrix S12 = select(c.Sigma, free, given);
    const Matrix S11 = select(c.Sigma, free, free);
    const auto llt = cholesky(S22, "conditioning block of component " + std::to_string(l + 1));
    const Vector r = values - select(c.mu, given);
    const Vector alpha = llt.solve(r);
    const Vector mu = select(c.mu, free) + S12 * alpha;
    Matrix S = S11 - S12 * llt.solve(S12.transpose());
    S = 0.5 * (S + S.transpose());
    const double m2 = r.dot(alpha);
    const double ld = log_det_from_cholesky(llt);
    MixtureComponent comp{mu, S, std::nullopt};
    double lf;
    if (c.nu) {
      const double nu = *c.nu;
      lf = mvt_logpdf_from_m2(m2, ld, p2, nu);
      if (convention == DofConvention::PaperDof) {
        comp.nu = p1 + nu;
        comp.Sigma = S * ((nu + m2) / (p1 + nu));
      } else {
        comp.nu = nu + p2;
        comp.Sigma = S * ((nu + m2) / (nu + p2));
      }
    } else {
      lf = -0.5 * m2 - 0.5 * ld - p2 * kLogSqrt2Pi;
    }
    logw(l) = mix.weights(l) > 0.0 ? std::log(mix.weights(l)) + lf : -std::numeric_limits<double>::infinity();
    out.components.push_back(std::move(comp));
  }
  const double mx = logw.maxCoeff();
  require(std::isfinite(mx), ErrorCode::Underflow, "all conditional mixture weights vanish");
  out.weights = (logw.array() - mx).exp().matrix();
  out.weights /= out.weights.sum();
  return out;
}

}  // namespace msrisk
