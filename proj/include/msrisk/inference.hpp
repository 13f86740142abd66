#pragma once

// EM estimation of Gaussian / Student-t Markov-switching models.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>

#include "msrisk/core.hpp"
#include "msrisk/dist.hpp"
#include "msrisk/rng.hpp"

namespace msrisk {

enum class NuUpdate { Shoham, Bisection };

struct FitOptions {
  int restarts = 20;
  int max_iter = 1000;
  double loglik_tol = 1e-5;
  double rel_tol = 1e-10;
  std::uint64_t seed = 1;
  NuUpdate nu_update = NuUpdate::Shoham;
  double jitter = 1e-8;
  int threads = 0;  // 0: MSRISK_THREADS or hardware concurrency
  /// Called after every E-step with (restart, iteration, loglik). May be
  /// invoked from worker threads; calls are serialized.
  std::function<void(int, int, double)> observer;

  void validate() const {
    require(restarts >= 1, ErrorCode::InvalidArgument, "restarts must be >= 1");
    require(max_iter >= 1, ErrorCode::InvalidArgument, "max_iter must be >= 1");
    require(loglik_tol > 0.0, ErrorCode::InvalidArgument, "loglik_tol must be > 0");
    require(jitter >= 0.0, ErrorCode::InvalidArgument, "jitter must be >= 0");
  }
};

/// Number of worker threads: MSRISK_THREADS when set, else the hardware count.
inline int worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MSRISK_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs body(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

struct SufficientStats {
  Matrix zhat;               // T x L
  std::vector<Matrix> zzhat;  // T-1 matrices L x L
  Matrix what;               // T x L, ones for Gaussian
};

struct ForwardResult {
  double loglik = 0.0;
  Matrix filtered;  // T x L
};

namespace detail {

struct Emissions {
  Matrix logf;  // T x L log densities
  Matrix m2;    // T x L squared Mahalanobis distances
};

inline Emissions emissions(const ReturnPanel& panel, const MsmParams& params, ModelFamily family) {
  require(params.p() == panel.p(), ErrorCode::InvalidArgument, "parameter dimension does not match the panel");
  const Index T = panel.T();
  const int L = params.L();
  const double p = static_cast<double>(panel.p());
  Emissions e{Matrix(T, L), Matrix(T, L)};
  for (int l = 0; l < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto llt = cholesky(params.Sigma[ul], "Sigma_" + std::to_string(l + 1));
    const double ld = log_det_from_cholesky(llt);
    const Matrix centered = panel.values().transpose().colwise() - params.mu[ul];
    const Matrix r = llt.matrixL().solve(centered);
    for (Index t = 0; t < T; ++t) {
      const double m2 = r.col(t).squaredNorm();
      e.m2(t, l) = m2;
      const double v = family == ModelFamily::StudentT
                           ? mvt_logpdf_from_m2(m2, ld, p, params.nu[ul])
                           : -0.5 * m2 - 0.5 * ld - p * kLogSqrt2Pi;
      if (!std::isfinite(v))
        fail(ErrorCode::NumericalFailure, "non-finite density at t=" + std::to_string(t + 1) + ", state " +
                                              std::to_string(l + 1));
      e.logf(t, l) = v;
    }
  }
  return e;
}

/// Scaled forward pass. ftilde(t, l) = exp(logf(t, l) - m_t); alpha rows are
/// normalized and c_t are the normalizers.
struct ForwardPass {
  Matrix ftilde;
  Matrix alpha;
  Vector c;
  double loglik = 0.0;
};

inline ForwardPass forward_pass(const Emissions& e, const MsmParams& params) {
  const Index T = e.logf.rows();
  const Index L = e.logf.cols();
  ForwardPass fp{Matrix(T, L), Matrix(T, L), Vector(T), 0.0};
  for (Index t = 0; t < T; ++t) {
    const double m = e.logf.row(t).maxCoeff();
    fp.ftilde.row(t) = (e.logf.row(t).array() - m).exp();
    Eigen::RowVectorXd a = t == 0 ? Eigen::RowVectorXd(params.delta.transpose())
                                  : Eigen::RowVectorXd(fp.alpha.row(t - 1) * params.Q);
    a = a.cwiseProduct(fp.ftilde.row(t));
    const double c = a.sum();
    if (!(c > 0.0) || !std::isfinite(c))
      fail(ErrorCode::NumericalFailure, "forward recursion underflow at t=" + std::to_string(t + 1));
    fp.alpha.row(t) = a / c;
    fp.c(t) = c;
    fp.loglik += std::log(c) + m;
  }
  return fp;
}

}  // namespace detail

inline ForwardResult forward_loglik(const ReturnPanel& panel, const MsmParams& params, ModelFamily family) {
  require_valid(params, family);
  const auto e = detail::emissions(panel, params, family);
  auto fp = detail::forward_pass(e, params);
  return {fp.loglik, std::move(fp.alpha)};
}

namespace detail {

struct EStepResult {
  SufficientStats stats;
  Matrix filtered;
  double loglik = 0.0;
};

inline EStepResult e_step_full(const ReturnPanel& panel, const MsmParams& params, ModelFamily family) {
  const auto e = emissions(panel, params, family);
  const auto fp = forward_pass(e, params);
  const Index T = panel.T();
  const int L = params.L();
  Matrix beta = Matrix::Ones(T, L);
  for (Index t = T - 2; t >= 0; --t) {
    const Vector fb = fp.ftilde.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
    beta.row(t) = (params.Q * fb).transpose() / fp.c(t + 1);
  }
  EStepResult out;
  out.loglik = fp.loglik;
  out.filtered = fp.alpha;
  out.stats.zhat = fp.alpha.cwiseProduct(beta);
  for (Index t = 0; t < T; ++t) out.stats.zhat.row(t) /= out.stats.zhat.row(t).sum();
  out.stats.zzhat.resize(static_cast<std::size_t>(std::max<Index>(T - 1, 0)));
  for (Index t = 0; t + 1 < T; ++t) {
    const Eigen::RowVectorXd fb = fp.ftilde.row(t + 1).cwiseProduct(beta.row(t + 1));
    Matrix xi = (fp.alpha.row(t).transpose() * fb).cwiseProduct(params.Q);
    xi /= xi.sum();
    out.stats.zzhat[static_cast<std::size_t>(t)] = std::move(xi);
  }
  out.stats.what = Matrix::Ones(T, L);
  if (family == ModelFamily::StudentT) {
    const double p = static_cast<double>(panel.p());
    for (int l = 0; l < L; ++l) {
      const double nu = params.nu[static_cast<std::size_t>(l)];
      out.stats.what.col(l) = ((nu + p) / (nu + e.m2.col(l).array())).matrix();
    }
  }
  return out;
}

}  // namespace detail

inline SufficientStats e_step(const ReturnPanel& panel, const MsmParams& params, ModelFamily family) {
  require_valid(params, family);
  return detail::e_step_full(panel, params, family).stats;
}

// ---------------------------------------------------------------------------
// Degrees-of-freedom update

inline constexpr double kShohamA0 = 0.0416;
inline constexpr double kShohamA1 = 0.6594;
inline constexpr double kShohamA2 = 2.1971;

/// Approximate root of log(nu/2) - psi(nu/2) = h - 1.
inline double update_nu_shoham(double h) {
  const double y = h + std::log(h) - 1.0;
  require(h > 0.0 && y > 0.0, ErrorCode::InvalidArgument, "Shoham update needs h + ln h > 1");
  return 2.0 / y + kShohamA0 * (1.0 + std::erf(kShohamA1 * std::log(kShohamA2 / y)));
}

/// Root of log(nu/2) - psi(nu/2) = h - 1 on [lo, hi], clamped to the ends.
inline double solve_nu_equation(double h, double lo = kNuMin, double hi = kNuMax) {
  auto g = [h](double nu) { return std::log(0.5 * nu) - boost::math::digamma(0.5 * nu) - (h - 1.0); };
  if (g(lo) <= 0.0) return lo;
  if (g(hi) >= 0.0) return hi;
  boost::math::tools::eps_tolerance<double> tol(50);
  const auto r = boost::math::tools::bisect(g, lo, hi, tol);
  return 0.5 * (r.first + r.second);
}

/// nu-part of the expected complete-data log-likelihood per unit weight.
inline double nu_objective(double nu, double h) {
  return 0.5 * nu * std::log(0.5 * nu) - std::lgamma(0.5 * nu) - 0.5 * nu * h;
}

// ---------------------------------------------------------------------------
// M-step

inline MsmParams m_step(const ReturnPanel& panel, const SufficientStats& stats, const MsmParams& prev,
                        ModelFamily family, const FitOptions& opts) {
  const Index T = panel.T();
  const Index p = panel.p();
  const int L = prev.L();
  require(stats.zhat.rows() == T && stats.zhat.cols() == L, ErrorCode::InvalidArgument, "stats do not match the panel");
  MsmParams next;
  next.delta = stats.zhat.row(0).transpose();
  next.delta /= next.delta.sum();

  Matrix trans = Matrix::Zero(L, L);
  for (const auto& xi : stats.zzhat) trans += xi;
  next.Q = Matrix(L, L);
  for (int l = 0; l < L; ++l) {
    const double rs = trans.row(l).sum();
    next.Q.row(l) = rs > 1e-300 ? Eigen::RowVectorXd(trans.row(l) / rs) : Eigen::RowVectorXd(prev.Q.row(l));
  }

  const Matrix& Y = panel.values();
  for (int l = 0; l < L; ++l) {
    const Vector z = stats.zhat.col(l);
    const double nz = z.sum();
    if (nz < 1e-8) fail(ErrorCode::DegenerateState, "state " + std::to_string(l + 1) + " has no responsibility");
    const Vector zw = z.cwiseProduct(stats.what.col(l));
    const Vector mu = Y.transpose() * zw / zw.sum();
    const Matrix centered = Y.rowwise() - mu.transpose();
    Matrix S = centered.transpose() * zw.asDiagonal() * centered / nz;
    S = 0.5 * (S + S.transpose());
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success || (llt.matrixLLT().diagonal().array() <= 0.0).any()) {
      S = add_jitter(S, opts.jitter);
      llt.compute(S);
      if (llt.info() != Eigen::Success || (llt.matrixLLT().diagonal().array() <= 0.0).any() ||
          !(min_eigenvalue(S) > 0.0))
        fail(ErrorCode::DegenerateState, "Sigma_" + std::to_string(l + 1) + " collapsed");
    }
    next.mu.push_back(mu);
    next.Sigma.push_back(std::move(S));
    (void)p;
  }

  if (family == ModelFamily::StudentT) {
    const double pd = static_cast<double>(p);
    for (int l = 0; l < L; ++l) {
      const double nu_old = prev.nu[static_cast<std::size_t>(l)];
      const Vector z = stats.zhat.col(l);
      const double nz = z.sum();
      const Vector w = stats.what.col(l);
      const double avg = (z.array() * (w.array().log() - w.array())).sum() / nz;
      const double h = -(boost::math::digamma(0.5 * (nu_old + pd)) - std::log(0.5 * (nu_old + pd)) + avg);
      double nu = 0.0;
      if (opts.nu_update == NuUpdate::Shoham && h + std::log(h) > 1.0) {
        nu = std::clamp(update_nu_shoham(h), kNuMin, kNuMax);
        // The approximation can miss the exact maximizer; fall back when it
        // would not improve on the previous value.
        if (nu_objective(nu, h) < nu_objective(nu_old, h)) nu = solve_nu_equation(h);
      } else {
        nu = solve_nu_equation(h);
      }
      next.nu.push_back(nu);
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Viterbi

inline std::vector<int> viterbi(const ReturnPanel& panel, const MsmParams& params, ModelFamily family) {
  require_valid(params, family);
  const auto e = detail::emissions(panel, params, family);
  const Index T = panel.T();
  const int L = params.L();
  const Matrix logQ = params.Q.array().log().matrix();
  Matrix score(T, L);
  Eigen::MatrixXi back(T, L);
  for (int l = 0; l < L; ++l) score(0, l) = std::log(params.delta(l)) + e.logf(0, l);
  for (Index t = 1; t < T; ++t) {
    for (int k = 0; k < L; ++k) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int l = 0; l < L; ++l) {
        const double v = score(t - 1, l) + logQ(l, k);
        if (v > best) {
          best = v;
          arg = l;
        }
      }
      score(t, k) = best + e.logf(t, k);
      back(t, k) = arg;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(T));
  int s = 0;
  for (int l = 1; l < L; ++l)
    if (score(T - 1, l) > score(T - 1, s)) s = l;
  for (Index t = T - 1; t >= 0; --t) {
    path[static_cast<std::size_t>(t)] = s;
    if (t > 0) s = back(t, s);
  }
  return path;
}

/// Joint log-probability log p(y, s) of a state path.
inline double path_log_probability(const ReturnPanel& panel, const MsmParams& params, ModelFamily family,
                                   const std::vector<int>& path) {
  const auto e = detail::emissions(panel, params, family);
  double v = std::log(params.delta(path[0])) + e.logf(0, path[0]);
  for (Index t = 1; t < panel.T(); ++t) {
    const auto a = path[static_cast<std::size_t>(t - 1)], b = path[static_cast<std::size_t>(t)];
    v += std::log(params.Q(a, b)) + e.logf(t, b);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Initialization and EM driver

/// Moment-based random start: L observations are drawn as seeds, every
/// observation joins its nearest seed (standardized Euclidean distance), and
/// each state's mean and covariance are the moments of its group.
inline MsmParams initial_params(const ReturnPanel& panel, int L, ModelFamily family, RandomStream& rng) {
  const Index T = panel.T();
  const Index p = panel.p();
  const Matrix& Y = panel.values();
  const Vector mean = Y.colwise().mean().transpose();
  const Matrix centered = Y.rowwise() - mean.transpose();
  Matrix pooled = centered.transpose() * centered / static_cast<double>(T);
  pooled = add_jitter(pooled, 1e-6);
  const Vector inv_sd = pooled.diagonal().cwiseSqrt().cwiseInverse();

  std::vector<Index> seeds;
  std::uniform_int_distribution<Index> pick(0, T - 1);
  while (static_cast<int>(seeds.size()) < L) {
    const Index c = pick(rng);
    if (std::find(seeds.begin(), seeds.end(), c) == seeds.end() || T < L) seeds.push_back(c);
  }
  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(L));
  for (Index t = 0; t < T; ++t) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int l = 0; l < L; ++l) {
      const double d =
          (Y.row(t) - Y.row(seeds[static_cast<std::size_t>(l)])).transpose().cwiseProduct(inv_sd).squaredNorm();
      if (d < bd) {
        bd = d;
        best = l;
      }
    }
    groups[static_cast<std::size_t>(best)].push_back(t);
  }

  MsmParams init;
  init.delta = Vector::Constant(L, 1.0 / L);
  init.Q = L == 1 ? Matrix::Ones(1, 1) : Matrix::Constant(L, L, 0.1 / (L - 1));
  if (L > 1) init.Q.diagonal().setConstant(0.9);
  for (int l = 0; l < L; ++l) {
    const auto& g = groups[static_cast<std::size_t>(l)];
    if (static_cast<Index>(g.size()) <= p) {
      init.mu.push_back(Y.row(seeds[static_cast<std::size_t>(l)]).transpose());
      init.Sigma.push_back(pooled);
      continue;
    }
    Vector m = Vector::Zero(p);
    for (Index t : g) m += Y.row(t).transpose();
    m /= static_cast<double>(g.size());
    Matrix S = Matrix::Zero(p, p);
    for (Index t : g) S += (Y.row(t).transpose() - m) * (Y.row(t) - m.transpose());
    S /= static_cast<double>(g.size());
    S = 0.5 * (S + S.transpose());
    if (!(min_eigenvalue(S) > 1e-10 * pooled.trace() / static_cast<double>(p))) S = pooled;
    init.mu.push_back(m);
    init.Sigma.push_back(S);
  }
  if (family == ModelFamily::StudentT) init.nu.assign(static_cast<std::size_t>(L), 10.0);
  return init;
}

struct EmRun {
  MsmParams params;
  detail::EStepResult estep;
  std::vector<double> trace;  // loglik after every E-step
  int iterations = 0;
  bool converged = false;
};

/// EM from a given starting point. The returned statistics belong to the
/// returned parameters.
inline EmRun run_em(const ReturnPanel& panel, MsmParams params, ModelFamily family, const FitOptions& opts,
                    const std::function<void(int, double)>& on_iter = {}) {
  EmRun run;
  for (int it = 0;; ++it) {
    auto es = detail::e_step_full(panel, params, family);
    run.trace.push_back(es.loglik);
    if (on_iter) on_iter(it, es.loglik);
    run.iterations = it;
    bool stop = false;
    if (it > 0) {
      const double prev = run.trace[run.trace.size() - 2];
      const double diff = std::abs(es.loglik - prev);
      if (diff < opts.loglik_tol || diff < opts.rel_tol * std::abs(prev)) {
        run.converged = true;
        stop = true;
      }
    }
    if (it >= opts.max_iter) stop = true;
    if (stop) {
      run.params = std::move(params);
      run.estep = std::move(es);
      return run;
    }
    params = m_step(panel, es.stats, params, family, opts);
  }
}

namespace detail {

/// Reorders states so that trace(Sigma_l) is ascending.
inline void relabel_by_trace(FittedModel& m) {
  const int L = m.params.L();
  std::vector<int> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return m.params.Sigma[static_cast<std::size_t>(a)].trace() < m.params.Sigma[static_cast<std::size_t>(b)].trace();
  });
  MsmParams q;
  q.delta.resize(L);
  q.Q.resize(L, L);
  auto perm_cols = [&](const Matrix& x) {
    if (x.size() == 0) return x;
    Matrix y(x.rows(), x.cols());
    for (int k = 0; k < L; ++k) y.col(k) = x.col(order[static_cast<std::size_t>(k)]);
    return y;
  };
  for (int a = 0; a < L; ++a) {
    const auto oa = order[static_cast<std::size_t>(a)];
    q.delta(a) = m.params.delta(oa);
    for (int b = 0; b < L; ++b) q.Q(a, b) = m.params.Q(oa, order[static_cast<std::size_t>(b)]);
    q.mu.push_back(m.params.mu[static_cast<std::size_t>(oa)]);
    q.Sigma.push_back(m.params.Sigma[static_cast<std::size_t>(oa)]);
    if (m.params.has_nu()) q.nu.push_back(m.params.nu[static_cast<std::size_t>(oa)]);
  }
  m.params = std::move(q);
  m.filtered = perm_cols(m.filtered);
  m.smoothed = perm_cols(m.smoothed);
  m.w_hat = perm_cols(m.w_hat);
  for (auto& xi : m.smoothed_pairs) {
    Matrix y(L, L);
    for (int a = 0; a < L; ++a)
      for (int b = 0; b < L; ++b) y(a, b) = xi(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
    xi = std::move(y);
  }
}

}  // namespace detail

/// Best-of-restarts maximum-likelihood fit.
inline FittedModel fit(const ReturnPanel& panel, int L, ModelFamily family, const FitOptions& opts = {}) {
  opts.validate();
  require(L >= 1, ErrorCode::InvalidArgument, "L must be >= 1");
  require(panel.T() > static_cast<Index>(L) * panel.p(), ErrorCode::InsufficientData,
          "need T > L*p observations to fit " + std::to_string(L) + " states");
  const int R = opts.restarts;
  std::vector<std::optional<EmRun>> runs(static_cast<std::size_t>(R));
  std::vector<std::string> errors(static_cast<std::size_t>(R));
  std::mutex observer_mutex;
  parallel_for(R, worker_count(opts.threads), [&](int r) {
    try {
      RandomStream rng(opts.seed, "restart", static_cast<std::uint64_t>(r));
      auto init = initial_params(panel, L, family, rng);
      std::function<void(int, double)> cb;
      if (opts.observer)
        cb = [&, r](int it, double ll) {
          std::lock_guard<std::mutex> lock(observer_mutex);
          opts.observer(r, it, ll);
        };
      runs[static_cast<std::size_t>(r)] = run_em(panel, std::move(init), family, opts, cb);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  });

  int best = -1;
  FittedModel out;
  out.family = family;
  for (int r = 0; r < R; ++r) {
    const auto& run = runs[static_cast<std::size_t>(r)];
    if (!run || !std::isfinite(run->estep.loglik)) {
      out.restart_logliks.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.restart_logliks.push_back(run->estep.loglik);
    if (best < 0 || run->estep.loglik > runs[static_cast<std::size_t>(best)]->estep.loglik) best = r;
  }
  if (best < 0) {
    std::string msg = "all " + std::to_string(R) + " restarts failed:";
    for (int r = 0; r < R; ++r) msg += " [" + std::to_string(r + 1) + "] " + errors[static_cast<std::size_t>(r)] + ";";
    fail(ErrorCode::FitFailure, msg);
  }
  auto& run = *runs[static_cast<std::size_t>(best)];
  out.params = std::move(run.params);
  out.loglik = run.estep.loglik;
  out.filtered = std::move(run.estep.filtered);
  out.smoothed = std::move(run.estep.stats.zhat);
  out.smoothed_pairs = std::move(run.estep.stats.zzhat);
  if (family == ModelFamily::StudentT) out.w_hat = std::move(run.estep.stats.what);
  out.converged = run.converged;
  out.iterations = run.iterations;
  detail::relabel_by_trace(out);
  set_information_criteria(out, panel.T());
  return out;
}

// ---------------------------------------------------------------------------
// Model selection

struct SelectionRow {
  ModelFamily family = ModelFamily::Gaussian;
  int L = 1;
  bool ok = false;
  std::string error;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int n_params = 0;
  double aic = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  bool best_aic = false;
  bool best_bic = false;
  std::optional<FittedModel> model;
};

struct SelectionTable {
  std::vector<SelectionRow> rows;

  const SelectionRow* best_by_bic() const {
    for (const auto& r : rows)
      if (r.best_bic) return &r;
    return nullptr;
  }
  const SelectionRow* best_by_aic() const {
    for (const auto& r : rows)
      if (r.best_aic) return &r;
    return nullptr;
  }
};

/// Fits every (family, L) pair; failures are recorded per row.
inline SelectionTable select_model(const ReturnPanel& panel, const std::vector<int>& L_range,
                                   const std::vector<ModelFamily>& families, const FitOptions& opts = {},
                                   bool keep_models = false) {
  require(!L_range.empty() && !families.empty(), ErrorCode::InvalidArgument, "selection ranges must be nonempty");
  SelectionTable table;
  for (auto fam : families) {
    for (int L : L_range) {
      SelectionRow row;
      row.family = fam;
      row.L = L;
      row.n_params = count_parameters(L, panel.p(), fam);
      try {
        auto m = fit(panel, L, fam, opts);
        row.ok = true;
        row.loglik = m.loglik;
        row.aic = m.aic;
        row.bic = m.bic;
        if (keep_models) row.model = std::move(m);
      } catch (const Error& e) {
        row.error = e.what();
      }
      table.rows.push_back(std::move(row));
    }
  }
  int ia = -1, ib = -1;
  for (int i = 0; i < static_cast<int>(table.rows.size()); ++i) {
    const auto& r = table.rows[static_cast<std::size_t>(i)];
    if (!r.ok) continue;
    if (ia < 0 || r.aic < table.rows[static_cast<std::size_t>(ia)].aic) ia = i;
    if (ib < 0 || r.bic < table.rows[static_cast<std::size_t>(ib)].bic) ib = i;
  }
  if (ia >= 0) table.rows[static_cast<std::size_t>(ia)].best_aic = true;
  if (ib >= 0) table.rows[static_cast<std::size_t>(ib)].best_bic = true;
  return table;
}

}  // namespace msrisk
