#ifndef NMF_ENERGY_NMF_HPP
#define NMF_ENERGY_NMF_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "instance.hpp"
#include "matrix.hpp"
#include "quardp.hpp"
#include "random.hpp"
#include "solver.hpp"

namespace nmf_energy {

struct SvdResult {
  Matrix U;               // n x p, orthonormal columns
  std::vector<double> S;  // p values, non-increasing
  Matrix Vt;              // p x m, orthonormal rows
};

namespace detail {

/// Cyclic Jacobi eigen-decomposition of a small symmetric matrix. Returns
/// eigenvalues sorted descending and eigenvectors as matching columns.
inline void symmetric_eigen(Matrix a, std::vector<double>& values,
                            Matrix& vectors) {
  const std::size_t n = a.rows();
  vectors = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors(k, p);
          const double vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a(x, x) > a(y, y);
  });
  values.resize(n);
  Matrix sorted(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) sorted(r, c) = vectors(r, order[c]);
  }
  vectors = std::move(sorted);
}

/// Modified Gram-Schmidt on the columns of q, in place. Columns that vanish
/// are replaced by the first unit vectors not yet in the span.
inline void orthonormalize_columns(Matrix& q) {
  const std::size_t d = q.rows();
  const std::size_t k = q.cols();
  std::size_t next_unit = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double original = 0.0;
    for (std::size_t r = 0; r < d; ++r) original += q(r, c) * q(r, c);
    original = std::sqrt(original);
    for (int attempt = 0;; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t prev = 0; prev < c; ++prev) {
          double dot = 0.0;
          for (std::size_t r = 0; r < d; ++r) dot += q(r, prev) * q(r, c);
          for (std::size_t r = 0; r < d; ++r) q(r, c) -= dot * q(r, prev);
        }
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < d; ++r) norm += q(r, c) * q(r, c);
      norm = std::sqrt(norm);
      if (norm > 1e-10 * std::max(original, 1e-300) && norm > 1e-300) {
        for (std::size_t r = 0; r < d; ++r) q(r, c) /= norm;
        break;
      }
      if (next_unit >= d)
        throw NonConvergence("orthonormalize_columns: cannot complete basis");
      for (std::size_t r = 0; r < d; ++r) q(r, c) = r == next_unit ? 1.0 : 0.0;
      ++next_unit;
      original = 1.0;
    }
  }
}

}  // namespace detail

/// Top-p singular triplets by subspace iteration on the smaller Gram matrix
/// with a Rayleigh-Ritz step. The start block is the first p identity
/// columns, so the result needs no RNG.
inline SvdResult truncated_svd(const Matrix& v, std::size_t p,
                               std::size_t max_iter = 20000) {
  const std::size_t n = v.rows();
  const std::size_t m = v.cols();
  if (p == 0 || p > std::min(n, m))
    throw InvalidArgument("truncated_svd: need 0 < p <= min(n, m)");

  // Work on the Gram matrix of the shorter side.
  const bool right = m <= n;
  const Matrix g = right ? matmul(v.transpose(), v) : matmul(v, v.transpose());
  const std::size_t d = g.rows();

  Matrix q(d, p);
  for (std::size_t c = 0; c < p; ++c) q(c, c) = 1.0;
  detail::orthonormalize_columns(q);

  std::vector<double> lambda;
  double g_scale = 0.0;
  for (double x : g.values()) g_scale = std::max(g_scale, std::abs(x));
  bool converged = false;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix z = matmul(g, q);
    detail::orthonormalize_columns(z);
    const Matrix b = matmul(z.transpose(), matmul(g, z));
    Matrix y;
    detail::symmetric_eigen(b, lambda, y);
    q = matmul(z, y);
    // Residual ||G q - q diag(lambda)||_F.
    const Matrix gq = matmul(g, q);
    double residual = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < p; ++c) {
        const double e = gq(r, c) - lambda[c] * q(r, c);
        residual += e * e;
      }
    if (std::sqrt(residual) <= 1e-13 * std::max(g_scale, 1e-300) ||
        g_scale == 0.0) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NonConvergence("truncated_svd: no convergence after " +
                         std::to_string(max_iter) + " iterations");

  SvdResult out;
  out.S.resize(p);
  for (std::size_t c = 0; c < p; ++c) out.S[c] = std::sqrt(std::max(lambda[c], 0.0));

  // The other side: columns of V q (or V^T q), orthonormalized.
  Matrix other = right ? matmul(v, q) : matmul(v.transpose(), q);
  detail::orthonormalize_columns(other);
  if (right) {
    out.U = std::move(other);
    out.Vt = q.transpose();
  } else {
    out.U = std::move(q);
    out.Vt = other.transpose();
  }
  return out;
}

/// Fills each zero entry of an NNDSVD start with mean(V).
inline FactorPair nndsvda_init(const Matrix& v, std::size_t p) {
  if (!v.is_nonnegative())
    throw InvalidArgument("nndsvda_init: V must be non-negative");
  const SvdResult svd = truncated_svd(v, p);
  const std::size_t n = v.rows();
  const std::size_t m = v.cols();
  FactorPair f{Matrix(n, p), Matrix(p, m)};

  const double s0 = std::sqrt(svd.S[0]);
  for (std::size_t i = 0; i < n; ++i) f.W(i, 0) = s0 * std::abs(svd.U(i, 0));
  for (std::size_t j = 0; j < m; ++j) f.H(0, j) = s0 * std::abs(svd.Vt(0, j));

  auto norm = [](const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
  };

  for (std::size_t c = 1; c < p; ++c) {
    std::vector<double> xp(n), xn(n), yp(m), yn(m);
    for (std::size_t i = 0; i < n; ++i) {
      xp[i] = std::max(svd.U(i, c), 0.0);
      xn[i] = std::max(-svd.U(i, c), 0.0);
    }
    for (std::size_t j = 0; j < m; ++j) {
      yp[j] = std::max(svd.Vt(c, j), 0.0);
      yn[j] = std::max(-svd.Vt(c, j), 0.0);
    }
    const double xpn = norm(xp), ypn = norm(yp), xnn = norm(xn), ynn = norm(yn);
    const double mp = xpn * ypn;
    const double mn = xnn * ynn;
    const bool use_positive = mp > mn;
    const double sigma = use_positive ? mp : mn;
    if (sigma == 0.0) continue;  // left at zero, filled with the mean below
    const auto& x = use_positive ? xp : xn;
    const auto& y = use_positive ? yp : yn;
    const double xnorm = use_positive ? xpn : xnn;
    const double ynorm = use_positive ? ypn : ynn;
    const double scale = std::sqrt(svd.S[c] * sigma);
    for (std::size_t i = 0; i < n; ++i) f.W(i, c) = scale * x[i] / xnorm;
    for (std::size_t j = 0; j < m; ++j) f.H(c, j) = scale * y[j] / ynorm;
  }

  constexpr double eps = 1e-6;
  const double avg = v.mean();
  for (double& w : f.W.values()) w = w < eps ? avg : w;
  for (double& h : f.H.values()) h = h < eps ? avg : h;
  return f;
}

struct InitNndsvda {};
struct InitRandom {
  std::uint64_t seed = 0;
};
/// Every entry of W and H equals mean(V).
struct InitConstantMean {};
struct InitGiven {
  FactorPair factors;
};

using InitStrategy = std::variant<InitNndsvda, InitRandom, InitConstantMean, InitGiven>;

inline FactorPair initialize(const Matrix& v, std::size_t p,
                             const InitStrategy& init) {
  const std::size_t n = v.rows();
  const std::size_t m = v.cols();
  if (std::holds_alternative<InitNndsvda>(init)) return nndsvda_init(v, p);
  if (const auto* r = std::get_if<InitRandom>(&init)) {
    Rng rng(derive_seed(r->seed, "hals-random-init"));
    const double avg = std::sqrt(v.mean() / static_cast<double>(p));
    FactorPair f{Matrix(n, p), Matrix(p, m)};
    for (double& w : f.W.values()) w = avg * std::abs(standard_normal(rng));
    for (double& h : f.H.values()) h = avg * std::abs(standard_normal(rng));
    return f;
  }
  if (std::holds_alternative<InitConstantMean>(init)) {
    const double c = v.mean();
    return {Matrix(n, p, c), Matrix(p, m, c)};
  }
  const auto& given = std::get<InitGiven>(init).factors;
  if (given.W.rows() != n || given.W.cols() != p || given.H.rows() != p ||
      given.H.cols() != m)
    throw DimensionMismatch("InitGiven: factor shapes do not match V and p");
  if (!given.W.is_nonnegative() || !given.H.is_nonnegative())
    throw InvalidArgument("InitGiven: factors must be non-negative");
  return given;
}

/// A block subsolver minimizes over W with H fixed, and over H with W fixed.
template <typename S>
concept BlockSubsolver = requires(const S& s, const Matrix& v, Matrix& a,
                                  const Matrix& b) {
  s.update_w(v, a, b);
  s.update_h(v, b, a);
};

inline constexpr double kHalsDenominatorFloor = 1e-12;

/// Column-wise HALS: each column of W (row of H) gets the closed-form
/// non-negative least-squares update with the others held fixed.
struct HalsSubsolver {
  void update_w(const Matrix& v, Matrix& w, const Matrix& h) const {
    const Matrix hht = matmul(h, h.transpose());
    const Matrix vht = matmul(v, h.transpose());
    const std::size_t n = w.rows();
    const std::size_t p = w.cols();
    for (std::size_t k = 0; k < p; ++k) {
      const double denom = std::max(hht(k, k), kHalsDenominatorFloor);
      for (std::size_t i = 0; i < n; ++i) {
        double grad = vht(i, k);
        for (std::size_t l = 0; l < p; ++l) grad -= w(i, l) * hht(l, k);
        w(i, k) = std::max(0.0, w(i, k) + grad / denom);
      }
    }
  }

  void update_h(const Matrix& v, const Matrix& w, Matrix& h) const {
    const Matrix wtw = matmul(w.transpose(), w);
    const Matrix wtv = matmul(w.transpose(), v);
    const std::size_t p = h.rows();
    const std::size_t m = h.cols();
    for (std::size_t k = 0; k < p; ++k) {
      const double denom = std::max(wtw(k, k), kHalsDenominatorFloor);
      for (std::size_t j = 0; j < m; ++j) {
        double grad = wtv(k, j);
        for (std::size_t l = 0; l < p; ++l) grad -= wtw(k, l) * h(l, j);
        h(k, j) = std::max(0.0, h(k, j) + grad / denom);
      }
    }
  }
};

struct BcdResult {
  FactorPair factors;
  std::size_t iterations = 0;
};

/// Generic control loop: alternate W and H updates while ||V - WH||_F > tol
/// and fewer than maxcnt rounds have run.
template <BlockSubsolver Sub = HalsSubsolver>
BcdResult bcd_loop(const Matrix& v, std::size_t p, double tol,
                   std::size_t maxcnt, const Sub& subsolver = {},
                   const InitStrategy& init = InitNndsvda{}) {
  BcdResult out;
  out.factors = initialize(v, p, init);
  auto& [w, h] = out.factors;
  std::size_t i = 1;
  while (error_metrics(v, matmul(w, h)).absolute > tol && i <= maxcnt) {
    subsolver.update_w(v, w, h);
    subsolver.update_h(v, w, h);
    ++i;
  }
  out.iterations = i - 1;
  return out;
}

struct HalsParams {
  std::size_t max_iter = 500;
  double tol = 1e-6;
};

struct FitResult {
  FactorPair factors;
  std::vector<double> objective_history;  // ||V - WH||_F, index 0 = start
  std::size_t iterations = 0;
  bool converged = false;

  double final_objective() const { return objective_history.back(); }
};

/// HALS sweeps until the Frobenius objective changes by less than tol or
/// max_iter sweeps have run.
inline FitResult hals_fit(const Matrix& v, std::size_t p,
                          const InitStrategy& init, const HalsParams& params = {}) {
  if (!v.is_nonnegative()) throw InvalidArgument("hals_fit: V must be non-negative");
  FitResult out;
  out.factors = initialize(v, p, init);
  auto& [w, h] = out.factors;
  const HalsSubsolver sub;
  double prev = error_metrics(v, matmul(w, h)).absolute;
  out.objective_history.push_back(prev);
  for (std::size_t it = 0; it < params.max_iter; ++it) {
    sub.update_w(v, w, h);
    sub.update_h(v, w, h);
    const double obj = error_metrics(v, matmul(w, h)).absolute;
    out.objective_history.push_back(obj);
    ++out.iterations;
    if (std::abs(prev - obj) < params.tol) {
      out.converged = true;
      break;
    }
    prev = obj;
  }
  return out;
}

/// Index of the value closest to the lower-middle median; distance ties go
/// to the lower value, then the lower index.
inline std::size_t select_median_index(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("select_median_index: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[(sorted.size() - 1) / 2];
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double di = std::abs(values[i] - median);
    const double db = std::abs(values[best] - median);
    if (di < db || (di == db && values[i] < values[best])) best = i;
  }
  return best;
}

struct FusionResult {
  FitResult fit;
  std::size_t selected_run = 0;
  FactorPair warm_start;
  double warm_start_objective = 0.0;
};

/// Warm-starts HALS from the solver run whose energy is closest to the median
/// energy of all runs.
inline FusionResult fusion_pipeline(const ProblemInstance& inst,
                                    const VariableLayout& layout,
                                    std::span<const SolverRun> runs,
                                    const HalsParams& params = {}) {
  if (runs.empty()) throw InvalidArgument("fusion_pipeline: no solver runs");
  std::vector<double> energies;
  energies.reserve(runs.size());
  for (const auto& r : runs) energies.push_back(r.best_energy);

  FusionResult out;
  out.selected_run = select_median_index(energies);
  out.warm_start = layout.decode(runs[out.selected_run].best_x);
  for (double& x : out.warm_start.W.values()) x = std::max(x, 0.0);
  for (double& x : out.warm_start.H.values()) x = std::max(x, 0.0);
  out.warm_start_objective = error_metrics(inst.V, out.warm_start).absolute;
  out.fit = hals_fit(inst.V, inst.p, InitGiven{out.warm_start}, params);
  return out;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_NMF_HPP
