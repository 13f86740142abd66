#pragma once

// VaR, ES and the multiple conditional measures on predictive mixtures.
// Lower-tail convention throughout: P(Y <= VaR_tau) = tau.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "msrisk/core.hpp"
#include "msrisk/dist.hpp"
#include "msrisk/inference.hpp"
#include "msrisk/predictive.hpp"

namespace msrisk {

/// tau-quantile of a univariate mixture.
inline double var_mixture(const MixtureDistribution& mix, double tau) {
  require(mix.dim() == 1, ErrorCode::InvalidArgument, "var_mixture needs a univariate mixture");
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  double qlo = std::numeric_limits<double>::infinity(), qhi = -qlo, smax = 0.0;
  for (Index l = 0; l < mix.size(); ++l) {
    if (mix.weights(l) <= 0.0) continue;
    const auto& c = mix.components[static_cast<std::size_t>(l)];
    const double s = std::sqrt(c.Sigma(0, 0));
    const double q = c.mu(0) + s * (c.nu ? t_std_quantile(tau, *c.nu) : normal_quantile(tau));
    qlo = std::min(qlo, q);
    qhi = std::max(qhi, q);
    smax = std::max(smax, s);
  }
  if (qlo == qhi) return qlo;
  auto f = [&](double y) { return mixture_cdf_uni(mix, y) - tau; };
  double lo = qlo - 6.0 * smax, hi = qhi + 6.0 * smax;
  double flo = f(lo), fhi = f(hi);
  if (!(flo <= 0.0 && fhi >= 0.0))
    fail(ErrorCode::BracketFailure, "could not bracket the " + std::to_string(tau) + "-quantile");
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  std::uintmax_t iters = 200;
  boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  const double a = r.first, b = r.second;
  const double q = std::abs(f(a)) <= std::abs(f(b)) ? a : b;
  require(std::isfinite(q), ErrorCode::NumericalFailure, "quantile search produced a non-finite value");
  return q;
}

/// E[Y | Y <= VaR_tau].
inline double es_mixture(const MixtureDistribution& mix, double tau) {
  return tce_mixture_uni(mix, var_mixture(mix, tau));
}

// ---------------------------------------------------------------------------
// Conditional measures

/// Per-asset marginal levels of one joint mixture, computed on demand.
class MarginalLevels {
 public:
  explicit MarginalLevels(const MixtureDistribution& joint) : joint_(joint) {
    const auto p = static_cast<std::size_t>(joint.dim());
    marg_.resize(p);
    var_.resize(p);
    es_.resize(p);
  }

  double var(Index j, double tau) { return get(var_, j, tau, false); }
  double es(Index j, double tau) { return get(es_, j, tau, true); }

 private:
  using Cache = std::vector<std::vector<std::pair<double, double>>>;

  const MixtureDistribution& marginal(Index j) {
    auto& m = marg_[static_cast<std::size_t>(j)];
    if (!m) m = marginalize(joint_, {j});
    return *m;
  }

  double get(Cache& cache, Index j, double tau, bool es) {
    auto& slot = cache[static_cast<std::size_t>(j)];
    for (const auto& [t, v] : slot)
      if (t == tau) return v;
    const double v = es ? es_mixture(marginal(j), tau) : var_mixture(marginal(j), tau);
    slot.emplace_back(tau, v);
    return v;
  }

  const MixtureDistribution& joint_;
  std::vector<std::optional<MixtureDistribution>> marg_;
  Cache var_;
  Cache es_;
};

struct RiskOptions {
  DofConvention convention = DofConvention::PaperDof;
};

namespace detail {

enum class ConditionalKind { CoVaR, CoES };

/// Conditions on every asset but the target: distressed assets at their
/// tau2-level, the rest at the normal level, or every asset at the normal
/// level when `baseline` is set.
inline double conditional_measure(const MixtureDistribution& mix, const ConditioningSpec& spec, ConditionalKind kind,
                                  bool baseline, MarginalLevels& levels, const RiskOptions& opts) {
  mix.validate();
  const Index p = mix.dim();
  require(p >= 2, ErrorCode::InvalidArgument, "conditional measures need at least two assets");
  spec.validate(p);
  std::vector<Index> given;
  for (Index j = 0; j < p; ++j)
    if (j != spec.target) given.push_back(j);
  Vector values(static_cast<Index>(given.size()));
  for (std::size_t k = 0; k < given.size(); ++k) {
    const Index j = given[k];
    const bool distressed =
        !baseline && std::find(spec.distressed.begin(), spec.distressed.end(), j) != spec.distressed.end();
    const double level = distressed ? spec.tau2 : spec.normal_level;
    values(static_cast<Index>(k)) = kind == ConditionalKind::CoVaR ? levels.var(j, level) : levels.es(j, level);
  }
  const auto cond = condition(mix, given, values, opts.convention);
  const double q = var_mixture(cond, spec.tau1);
  return kind == ConditionalKind::CoVaR ? q : tce_mixture_uni(cond, q);
}

}  // namespace detail

inline double mcovar(const MixtureDistribution& mix, const ConditioningSpec& spec, const RiskOptions& opts = {}) {
  MarginalLevels levels(mix);
  return detail::conditional_measure(mix, spec, detail::ConditionalKind::CoVaR, false, levels, opts);
}

inline double mcoes(const MixtureDistribution& mix, const ConditioningSpec& spec, const RiskOptions& opts = {}) {
  MarginalLevels levels(mix);
  return detail::conditional_measure(mix, spec, detail::ConditionalKind::CoES, false, levels, opts);
}

inline double delta_mcovar(const MixtureDistribution& mix, const ConditioningSpec& spec, MarginalLevels& levels,
                           const RiskOptions& opts = {}) {
  using detail::ConditionalKind;
  return detail::conditional_measure(mix, spec, ConditionalKind::CoVaR, false, levels, opts) -
         detail::conditional_measure(mix, spec, ConditionalKind::CoVaR, true, levels, opts);
}

inline double delta_mcoes(const MixtureDistribution& mix, const ConditioningSpec& spec, MarginalLevels& levels,
                          const RiskOptions& opts = {}) {
  using detail::ConditionalKind;
  return detail::conditional_measure(mix, spec, ConditionalKind::CoES, false, levels, opts) -
         detail::conditional_measure(mix, spec, ConditionalKind::CoES, true, levels, opts);
}

inline double delta_mcovar(const MixtureDistribution& mix, const ConditioningSpec& spec, const RiskOptions& opts = {}) {
  MarginalLevels levels(mix);
  return delta_mcovar(mix, spec, levels, opts);
}

inline double delta_mcoes(const MixtureDistribution& mix, const ConditioningSpec& spec, const RiskOptions& opts = {}) {
  MarginalLevels levels(mix);
  return delta_mcoes(mix, spec, levels, opts);
}

/// Any of the six measures for the target asset of `spec`. VaR and ES use tau1.
inline double evaluate_measure(const MixtureDistribution& mix, RiskMeasure measure, const ConditioningSpec& spec,
                               MarginalLevels& levels, const RiskOptions& opts = {}) {
  using detail::ConditionalKind;
  switch (measure) {
    case RiskMeasure::VaR: return levels.var(spec.target, spec.tau1);
    case RiskMeasure::ES: return levels.es(spec.target, spec.tau1);
    case RiskMeasure::MCoVaR:
      return detail::conditional_measure(mix, spec, ConditionalKind::CoVaR, false, levels, opts);
    case RiskMeasure::MCoES: return detail::conditional_measure(mix, spec, ConditionalKind::CoES, false, levels, opts);
    case RiskMeasure::DeltaMCoVaR: return delta_mcovar(mix, spec, levels, opts);
    case RiskMeasure::DeltaMCoES: return delta_mcoes(mix, spec, levels, opts);
  }
  fail(ErrorCode::InvalidArgument, "unknown measure");
}

// ---------------------------------------------------------------------------
// Time paths

struct RiskPoint {
  Index t = 0;
  Index asset = 0;
  RiskMeasure measure = RiskMeasure::VaR;
  std::optional<double> value;  // empty marks a gap
  std::string error;
  std::optional<ConditioningSpec> spec;
};

struct RiskPathOptions {
  int horizon = 1;
  bool use_smoothed = false;
  RiskOptions risk;
  int threads = 0;
};

/// Mixture for Y_{t+h} built from the filtered (or smoothed) row at t.
inline MixtureDistribution mixture_at(const FittedModel& model, Index t, int h, bool use_smoothed) {
  const Matrix& probs = use_smoothed ? model.smoothed : model.filtered;
  require(t >= 0 && t < probs.rows(), ErrorCode::InvalidArgument, "time index out of range");
  const Vector w = predictive_weights(probs.row(t).transpose(), model.params.Q, h);
  return mixture_from_params(model.params, model.family, w);
}

inline std::vector<RiskPoint> risk_path(const FittedModel& model, const ConditioningSpec& spec, RiskMeasure measure,
                                        const RiskPathOptions& opts = {}) {
  const Index T = model.T();
  const bool conditional = measure != RiskMeasure::VaR && measure != RiskMeasure::ES;
  if (conditional) spec.validate(model.params.p());
  std::vector<RiskPoint> out(static_cast<std::size_t>(T));
  parallel_for(static_cast<int>(T), worker_count(opts.threads), [&](int ti) {
    auto& pt = out[static_cast<std::size_t>(ti)];
    pt.t = ti;
    pt.asset = spec.target;
    pt.measure = measure;
    if (conditional) pt.spec = spec;
    try {
      const auto mix = mixture_at(model, ti, opts.horizon, opts.use_smoothed);
      MarginalLevels levels(mix);
      const double v = evaluate_measure(mix, measure, spec, levels, opts.risk);
      if (std::isfinite(v)) pt.value = v;
      else pt.error = "non-finite value";
    } catch (const Error& e) {
      pt.error = e.what();
    }
  });
  return out;
}

}  // namespace msrisk
