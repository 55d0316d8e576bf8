#ifndef NMF_ENERGY_INTEGER_SOLVER_HPP
#define NMF_ENERGY_INTEGER_SOLVER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "instance.hpp"
#include "matrix.hpp"
#include "quardp.hpp"
#include "random.hpp"

namespace nmf_energy {

enum class IntObjective { AbsDiff, SqDiff };

inline std::string_view to_string(IntObjective o) {
  return o == IntObjective::AbsDiff ? "abs" : "sq";
}

inline IntObjective parse_int_objective(std::string_view s) {
  if (s == "abs") return IntObjective::AbsDiff;
  if (s == "sq") return IntObjective::SqDiff;
  throw InvalidArgument("unknown integer objective '" + std::string(s) + "'");
}

inline double residual_cost(double r, IntObjective o) {
  return o == IntObjective::AbsDiff ? std::abs(r) : r * r;
}

/// Sum over cells of |V - WH| or (V - WH)^2.
inline double int_objective_value(const Matrix& v, const FactorPair& f,
                                  IntObjective o) {
  const Matrix wh = matmul(f.W, f.H);
  require_same_shape(v, wh, "int_objective_value");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += residual_cost(v.values()[i] - wh.values()[i], o);
  return s;
}

struct IntSolution {
  FactorPair factors;
  double value = 0.0;
  std::size_t iterations = 0;
};

inline constexpr std::uint64_t kBruteForceLimit = 10'000'000;

namespace detail {

inline int integer_levels(const ProblemInstance& inst, const char* who) {
  if (!inst.domain.is_integer() || inst.domain.levels < 1)
    throw InvalidArgument(std::string(who) + ": instance must have an integer domain");
  return inst.domain.levels;
}

}  // namespace detail

/// Exhaustive search over all integer W, H. Points are visited in
/// lexicographic order of the layout encoding and only strict improvements
/// replace the incumbent, so ties resolve to the smallest encoding.
inline IntSolution brute_force_optimum(const ProblemInstance& inst,
                                       IntObjective objective,
                                       std::uint64_t max_points = kBruteForceLimit) {
  const int levels = detail::integer_levels(inst, "brute_force_optimum");
  const VariableLayout layout(inst.n, inst.m, inst.p, /*with_slack=*/false);
  const std::size_t vars = layout.entry_count();

  std::uint64_t space = 1;
  for (std::size_t i = 0; i < vars; ++i) {
    if (space > max_points / static_cast<std::uint64_t>(levels))
      throw SearchSpaceTooLarge("brute_force_optimum: " + std::to_string(levels) +
                                "^" + std::to_string(vars) + " points exceed " +
                                std::to_string(max_points));
    space *= static_cast<std::uint64_t>(levels);
  }

  std::vector<double> x(vars, 0.0);
  IntSolution best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::uint64_t point = 0; point < space; ++point) {
    const FactorPair f = layout.decode(x);
    const double val = int_objective_value(inst.V, f, objective);
    if (val < best.value) {
      best.value = val;
      best.factors = f;
    }
    ++best.iterations;
    // Odometer, last variable fastest.
    for (std::size_t pos = vars; pos-- > 0;) {
      if (x[pos] + 1.0 < levels) {
        x[pos] += 1.0;
        break;
      }
      x[pos] = 0.0;
    }
  }
  return best;
}

/// Either a logical iteration budget (deterministic) or a wall-clock limit.
struct SearchBudget {
  double time_limit = 1.0;  // seconds, wall-clock mode
  std::uint64_t seed = 0;
  std::size_t restarts = 4;
  std::optional<std::size_t> logical_iterations;

  void validate() const {
    if (!logical_iterations && !(time_limit > 0.0))
      throw InvalidArgument("SearchBudget: time_limit must be positive");
    if (restarts == 0) throw InvalidArgument("SearchBudget: restarts must be positive");
  }
};

/// Multi-restart local search over integer factors: single-entry +-1 moves,
/// occasional random resets of one entry, and a kick of several entries when
/// progress stalls. Stops as soon as the objective reaches zero.
inline IntSolution heuristic_search(const ProblemInstance& inst,
                                    IntObjective objective,
                                    const SearchBudget& budget) {
  budget.validate();
  const int levels = detail::integer_levels(inst, "heuristic_search");
  const std::size_t n = inst.n, m = inst.m, p = inst.p;
  const std::size_t vars = n * p + p * m;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  IntSolution best;
  best.value = std::numeric_limits<double>::infinity();
  std::size_t used = 0;

  for (std::size_t r = 0; r < budget.restarts; ++r) {
    Rng rng(derive_seed(budget.seed, {0x1D7ULL, r}));
    std::size_t restart_iters = 0;
    if (budget.logical_iterations) {
      const std::size_t total = *budget.logical_iterations;
      restart_iters = total / budget.restarts + (r < total % budget.restarts ? 1 : 0);
    }
    const double restart_deadline =
        budget.time_limit * static_cast<double>(r + 1) /
        static_cast<double>(budget.restarts);

    FactorPair f{Matrix(n, p), Matrix(p, m)};
    for (double& w : f.W.values()) w = static_cast<double>(uniform_below(rng, levels));
    for (double& h : f.H.values()) h = static_cast<double>(uniform_below(rng, levels));
    Matrix residual = inst.V;
    {
      const Matrix wh = matmul(f.W, f.H);
      for (std::size_t i = 0; i < residual.size(); ++i)
        residual.values()[i] -= wh.values()[i];
    }
    double current = 0.0;
    for (double rv : residual.values()) current += residual_cost(rv, objective);

    auto record = [&] {
      if (current < best.value) {
        best.value = current;
        best.factors = f;
      }
    };
    record();

    // Cost change when W(i,k) += d (row i of the residual shifts by -d*H(k,:)).
    auto delta_w = [&](std::size_t i, std::size_t k, double d) {
      double change = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double rv = residual(i, j);
        change += residual_cost(rv - d * f.H(k, j), objective) -
                  residual_cost(rv, objective);
      }
      return change;
    };
    auto delta_h = [&](std::size_t k, std::size_t j, double d) {
      double change = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double rv = residual(i, j);
        change += residual_cost(rv - d * f.W(i, k), objective) -
                  residual_cost(rv, objective);
      }
      return change;
    };
    auto apply = [&](std::size_t var, double d) {
      if (var < n * p) {
        const std::size_t i = var / p, k = var % p;
        for (std::size_t j = 0; j < m; ++j) residual(i, j) -= d * f.H(k, j);
        f.W(i, k) += d;
      } else {
        const std::size_t k = (var - n * p) / m, j = (var - n * p) % m;
        for (std::size_t i = 0; i < n; ++i) residual(i, j) -= d * f.W(i, k);
        f.H(k, j) += d;
      }
    };
    auto value_of = [&](std::size_t var) {
      return var < n * p ? f.W(var / p, var % p) : f.H((var - n * p) / m, (var - n * p) % m);
    };
    auto delta_of = [&](std::size_t var, double d) {
      if (var < n * p) return delta_w(var / p, var % p, d);
      return delta_h((var - n * p) / m, (var - n * p) % m, d);
    };

    const std::size_t stall_limit = 64 * vars;
    std::size_t since_improvement = 0;
    double restart_best = current;
    for (std::size_t it = 0;; ++it) {
      if (best.value == 0.0) break;
      if (budget.logical_iterations) {
        if (it >= restart_iters) break;
      } else if ((it & 255U) == 0 && elapsed() >= restart_deadline) {
        break;
      }
      ++used;

      if (since_improvement >= stall_limit) {
        // Kick: reset a few random entries and accept unconditionally.
        const std::size_t kicks = 1 + uniform_below(rng, std::max<std::size_t>(1, vars / 4));
        for (std::size_t c = 0; c < kicks; ++c) {
          const std::size_t var = uniform_below(rng, vars);
          const double target = static_cast<double>(uniform_below(rng, levels));
          const double d = target - value_of(var);
          if (d == 0.0) continue;
          current += delta_of(var, d);
          apply(var, d);
        }
        since_improvement = 0;
        restart_best = current;
        continue;
      }

      const std::size_t var = uniform_below(rng, vars);
      const double v0 = value_of(var);
      double target;
      if (uniform01(rng) < 0.1) {
        target = static_cast<double>(uniform_below(rng, levels));
      } else {
        target = v0 + ((rng() & 1U) ? 1.0 : -1.0);
        if (target < 0.0 || target > levels - 1) target = v0 - (target - v0);
      }
      if (target < 0.0 || target > levels - 1 || target == v0) {
        ++since_improvement;
        continue;
      }
      const double d = target - v0;
      const double change = delta_of(var, d);
      if (change <= 0.0) {
        apply(var, d);
        current += change;
        if (current < restart_best) {
          restart_best = current;
          since_improvement = 0;
        } else {
          ++since_improvement;
        }
        if (current < best.value) {
          // Recompute exactly so the reported value is not accumulated drift.
          current = int_objective_value(inst.V, f, objective);
          record();
        }
      } else {
        ++since_improvement;
      }
    }
    if (best.value == 0.0) break;
  }
  best.iterations = used;
  best.value = int_objective_value(inst.V, best.factors, objective);
  return best;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_INTEGER_SOLVER_HPP
