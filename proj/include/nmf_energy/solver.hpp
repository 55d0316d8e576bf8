#ifndef NMF_ENERGY_SOLVER_HPP
#define NMF_ENERGY_SOLVER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "polynomial.hpp"
#include "quardp.hpp"
#include "qubo.hpp"
#include "random.hpp"

namespace nmf_energy {

/// Effort profile of the emulated solver. Iterations and restarts are config,
/// not device facts; schedule 1 is the cheapest and 3 the most thorough.
struct RelaxationSchedule {
  int id = 1;
  std::size_t iterations = 20000;  // per restart
  std::size_t restarts = 4;
  double noise_start = 1.0;
  double noise_end = 1e-3;

  /// Geometric decay from noise_start to noise_end over one restart.
  double noise_curve(std::size_t t) const {
    if (iterations <= 1) return noise_end;
    const double frac =
        static_cast<double>(t) / static_cast<double>(iterations - 1);
    return noise_start * std::pow(noise_end / noise_start, frac);
  }

  std::size_t total_iterations() const noexcept { return iterations * restarts; }

  static RelaxationSchedule standard(int id) {
    switch (id) {
      case 1: return {1, 20000, 4};
      case 2: return {2, 100000, 8};
      case 3: return {3, 500000, 16};
      default:
        throw InvalidArgument("relaxation schedule must be 1, 2 or 3, got " +
                              std::to_string(id));
    }
  }
};

struct SolverLimits {
  std::size_t max_quartic_vars = kMaxQuarticVars;
  std::size_t max_discrete_levels = kMaxDiscreteLevels;
};

enum class SolverMode { Continuous, Discrete, Qubo };

inline std::string_view to_string(SolverMode m) {
  switch (m) {
    case SolverMode::Continuous: return "continuous";
    case SolverMode::Discrete: return "discrete";
    case SolverMode::Qubo: return "qubo";
  }
  return "?";
}

inline SolverMode parse_solver_mode(std::string_view s) {
  if (s == "continuous") return SolverMode::Continuous;
  if (s == "discrete") return SolverMode::Discrete;
  if (s == "qubo") return SolverMode::Qubo;
  throw InvalidArgument("unknown solver mode '" + std::string(s) + "'");
}

inline constexpr std::size_t kGridLevels = 10000;

struct SolverRun {
  SolverMode mode = SolverMode::Continuous;
  std::vector<double> best_x;
  double best_energy = 0.0;
  /// Best-so-far energy sampled every `trace_stride` iterations across all
  /// restarts in order; non-increasing.
  std::vector<double> trace;
  std::size_t trace_stride = 1;
  std::size_t iterations = 0;
  double elapsed = 0.0;  // wall-clock seconds
  std::uint64_t seed = 0;
  int schedule = 0;
  std::size_t best_restart = 0;
  // Continuous mode.
  double R = 0.0;
  std::size_t grid_levels = kGridLevels;
  // Discrete mode.
  std::vector<std::size_t> levels;
};

/// Euclidean projection of v onto {x >= 0, sum x = R}.
inline std::vector<double> simplex_project(std::span<const double> v,
                                           double R) {
  if (!(R > 0.0)) throw InvalidArgument("simplex_project: R must be positive");
  const std::size_t n = v.size();
  if (n == 0) throw InvalidArgument("simplex_project: empty vector");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cumulative += u[j];
    const double t = (cumulative - R) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::max(v[i] - theta, 0.0);
  return x;
}

/// Largest-remainder rounding of a simplex point to integer grid counts
/// summing to `grid_steps`. Ties go to the lower index.
inline std::vector<std::int64_t> snap_to_grid(std::span<const double> x,
                                              double R,
                                              std::int64_t grid_steps) {
  const std::size_t n = x.size();
  std::vector<std::int64_t> k(n);
  std::vector<std::pair<double, std::size_t>> rem(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled =
        std::max(0.0, x[i]) * static_cast<double>(grid_steps) / R;
    k[i] = static_cast<std::int64_t>(std::floor(scaled));
    rem[i] = {scaled - static_cast<double>(k[i]), i};
    total += k[i];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  std::size_t r = 0;
  while (total < grid_steps) {
    ++k[rem[r % n].second];
    ++total;
    ++r;
  }
  while (total > grid_steps) {
    // Only reachable through rounding noise in x; trim from the largest.
    auto it = std::max_element(k.begin(), k.end());
    --*it;
    --total;
  }
  return k;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Records best-so-far energies at a fixed stride.
class TraceRecorder {
 public:
  TraceRecorder(std::size_t total_iterations, std::size_t max_points = 512)
      : stride_(std::max<std::size_t>(1, total_iterations / max_points)) {}

  void tick(std::size_t iteration, double best) {
    if (iteration % stride_ == 0) points_.push_back(best);
  }
  void finish(double best) {
    if (points_.empty() || points_.back() != best) points_.push_back(best);
  }

  std::size_t stride() const noexcept { return stride_; }
  std::vector<double> take() { return std::move(points_); }

 private:
  std::size_t stride_;
  std::vector<double> points_;
};

inline bool metropolis_accept(double delta, double temperature, Rng& rng) {
  if (delta <= 0.0) return true;
  if (temperature <= 0.0) return false;
  return uniform01(rng) < std::exp(-delta / temperature);
}

/// Relative excess of the current energy over the best one, in [0, 1].
/// Higher-energy candidates get larger perturbations.
inline double energy_signal(double current, double best) {
  const double gap = current - best;
  if (!(gap > 0.0)) return 0.0;
  const double scale = std::abs(current) + std::abs(best);
  if (scale == 0.0) return 0.0;
  return std::clamp(gap / scale, 0.0, 1.0);
}

inline constexpr double kSignalFloor = 0.25;

}  // namespace detail

/// Continuous mode: variables live on the grid i * R / 9999 and always sum to
/// exactly R.
///
/// Each restart starts from a random simplex point. Every iteration perturbs
/// the candidate with a magnitude proportional to noise_curve(t) times a
/// normalized energy signal, so worse candidates move further. Most moves
/// transfer grid mass between two variables (one of them often the slack);
/// occasionally every coordinate is perturbed, re-projected onto the simplex
/// and snapped back to the grid. Moves are accepted with a Metropolis rule at
/// a temperature that decays with the schedule.
inline SolverRun solve_continuous(const QuardpModel& model,
                                  const RelaxationSchedule& schedule,
                                  std::uint64_t seed,
                                  const SolverLimits& limits = {}) {
  if (auto budget = check_device_budget(model, limits.max_quartic_vars); !budget)
    throw BudgetViolation("solve_continuous: " + budget.detail);
  if (!(model.R > 0.0)) throw InvalidArgument("solve_continuous: R must be positive");

  const auto start = detail::Clock::now();
  const std::size_t n = model.layout.total_vars();
  const auto grid = static_cast<std::int64_t>(kGridLevels - 1);
  const double step = model.R / static_cast<double>(grid);
  const std::optional<std::size_t> slack = model.layout.slack_index();
  CompiledPoly poly(model.poly);

  // Largest transfer, in grid steps, at noise 1 and full energy signal.
  const double base_amplitude =
      std::max(1.0, static_cast<double>(grid) / (4.0 * static_cast<double>(n)));

  SolverRun run;
  run.mode = SolverMode::Continuous;
  run.seed = seed;
  run.schedule = schedule.id;
  run.R = model.R;
  run.best_energy = std::numeric_limits<double>::infinity();
  detail::TraceRecorder trace(schedule.total_iterations());
  std::vector<std::int64_t> best_k;
  std::size_t global_iter = 0;

  auto to_x = [&](const std::vector<std::int64_t>& k, std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(k[i]) * step;
  };

  for (std::size_t r = 0; r < schedule.restarts; ++r) {
    Rng rng(derive_seed(seed, {0xC0A7ULL, r}));

    std::vector<double> x(n);
    {
      double sum = 0.0;
      for (double& v : x) {
        v = -std::log(1.0 - uniform01(rng));
        sum += v;
      }
      for (double& v : x) v *= model.R / sum;
    }
    std::vector<std::int64_t> k = snap_to_grid(x, model.R, grid);
    to_x(k, x);
    double energy = poly.evaluate(x);
    double restart_best = energy;

    auto consider_best = [&](double candidate) {
      if (candidate < run.best_energy) {
        const double exact = poly.evaluate(x);
        energy = exact;
        restart_best = std::min(restart_best, exact);
        if (exact < run.best_energy) {
          run.best_energy = exact;
          best_k = k;
          run.best_restart = r;
        }
      } else if (candidate < restart_best) {
        restart_best = candidate;
      }
    };
    consider_best(energy);

    // Temperature scale from the typical size of an early move.
    double t0 = 0.0;
    {
      int samples = 0;
      for (int s = 0; s < 32 && n >= 2; ++s) {
        const auto i = static_cast<VarIndex>(uniform_below(rng, n));
        auto j = static_cast<VarIndex>(uniform_below(rng, n - 1));
        if (j >= i) ++j;
        const std::int64_t d = std::min<std::int64_t>(
            k[i], static_cast<std::int64_t>(base_amplitude));
        if (d == 0) continue;
        t0 += std::abs(poly.delta(x, i, x[i] - d * step, j, x[j] + d * step));
        ++samples;
      }
      t0 = samples > 0 ? t0 / samples : 0.0;
      if (!(t0 > 0.0)) t0 = std::max(1e-12, std::abs(energy));
    }
    const double t_end = t0 * 1e-6;

    for (std::size_t t = 0; t < schedule.iterations; ++t, ++global_iter) {
      trace.tick(global_iter, run.best_energy);
      if (n < 2) continue;
      const double frac =
          schedule.iterations > 1
              ? static_cast<double>(t) / static_cast<double>(schedule.iterations - 1)
              : 1.0;
      const double temperature = t0 * std::pow(t_end / t0, frac);
      const double signal =
          detail::kSignalFloor + (1.0 - detail::kSignalFloor) *
                                     detail::energy_signal(energy, restart_best);
      const double amplitude = schedule.noise_curve(t) * signal * base_amplitude;

      if (t % 4096 == 4095) energy = poly.evaluate(x);

      if (uniform01(rng) < 1.0 / 16.0) {
        // Whole-vector perturbation, re-projected and snapped to the grid.
        std::vector<double> y(x);
        for (double& v : y) v += amplitude * step * standard_normal(rng);
        std::vector<double> projected = simplex_project(y, model.R);
        std::vector<std::int64_t> k_new = snap_to_grid(projected, model.R, grid);
        std::vector<double> x_new(n);
        to_x(k_new, x_new);
        const double e_new = poly.evaluate(x_new);
        if (detail::metropolis_accept(e_new - energy, temperature, rng)) {
          k = std::move(k_new);
          x = std::move(x_new);
          energy = e_new;
          consider_best(energy);
        }
        continue;
      }

      VarIndex from;
      VarIndex to;
      if (slack && uniform01(rng) < 0.5) {
        const auto e = static_cast<VarIndex>(uniform_below(rng, n - 1));
        const auto s = static_cast<VarIndex>(*slack);
        const VarIndex entry = e >= s ? e + 1 : e;
        if (uniform01(rng) < 0.5) {
          from = s;
          to = entry;
        } else {
          from = entry;
          to = s;
        }
      } else {
        from = static_cast<VarIndex>(uniform_below(rng, n));
        to = static_cast<VarIndex>(uniform_below(rng, n - 1));
        if (to >= from) ++to;
      }
      const auto d = std::min<std::int64_t>(
          k[from], 1 + static_cast<std::int64_t>(
                           std::floor(std::abs(standard_normal(rng)) * amplitude)));
      if (d == 0) continue;
      const double xf = static_cast<double>(k[from] - d) * step;
      const double xt = static_cast<double>(k[to] + d) * step;
      const double delta = poly.delta(x, from, xf, to, xt);
      if (detail::metropolis_accept(delta, temperature, rng)) {
        k[from] -= d;
        k[to] += d;
        x[from] = xf;
        x[to] = xt;
        energy += delta;
        consider_best(energy);
      }
    }
  }

  run.iterations = global_iter;
  run.best_x.assign(n, 0.0);
  if (!best_k.empty()) to_x(best_k, run.best_x);
  run.best_energy = poly.evaluate(run.best_x);
  trace.finish(run.best_energy);
  run.trace = trace.take();
  run.trace_stride = trace.stride();
  run.elapsed = detail::seconds_since(start);
  return run;
}

/// Discrete mode: variable i takes integers 0..levels[i]-1. Annealed local
/// search with +-1 steps and occasional random resets of one variable.
inline SolverRun solve_discrete(const MultilinearPoly& model,
                                std::span<const std::size_t> levels,
                                const RelaxationSchedule& schedule,
                                std::uint64_t seed,
                                const SolverLimits& limits = {}) {
  if (levels.size() != model.num_vars())
    throw DimensionMismatch("solve_discrete: expected " +
                            std::to_string(model.num_vars()) +
                            " level counts, got " + std::to_string(levels.size()));
  std::size_t total_levels = 0;
  for (auto l : levels) {
    if (l == 0) throw InvalidArgument("solve_discrete: every variable needs >= 1 level");
    total_levels += l;
  }
  if (total_levels > limits.max_discrete_levels)
    throw BudgetViolation("solve_discrete: " + std::to_string(total_levels) +
                          " levels exceed the limit of " +
                          std::to_string(limits.max_discrete_levels));

  const auto start = detail::Clock::now();
  const std::size_t n = model.num_vars();
  CompiledPoly poly(model);
  std::vector<VarIndex> active;
  for (std::size_t i = 0; i < n; ++i)
    if (levels[i] >= 2) active.push_back(static_cast<VarIndex>(i));

  SolverRun run;
  run.mode = SolverMode::Discrete;
  run.seed = seed;
  run.schedule = schedule.id;
  run.levels.assign(levels.begin(), levels.end());
  run.best_energy = std::numeric_limits<double>::infinity();
  detail::TraceRecorder trace(schedule.total_iterations());
  std::vector<double> best_x(n, 0.0);
  std::size_t global_iter = 0;

  for (std::size_t r = 0; r < schedule.restarts; ++r) {
    Rng rng(derive_seed(seed, {0xD15CULL, r}));
    std::vector<double> x(n, 0.0);
    for (VarIndex v : active)
      x[v] = static_cast<double>(uniform_below(rng, levels[v]));
    double energy = poly.evaluate(x);
    double restart_best = energy;

    auto consider_best = [&](double candidate) {
      restart_best = std::min(restart_best, candidate);
      if (candidate < run.best_energy) {
        const double exact = poly.evaluate(x);
        energy = exact;
        if (exact < run.best_energy) {
          run.best_energy = exact;
          best_x = x;
          run.best_restart = r;
        }
      }
    };
    consider_best(energy);

    auto propose = [&](VarIndex v, double amplitude) {
      const auto L = static_cast<std::int64_t>(levels[v]);
      const auto cur = static_cast<std::int64_t>(x[v]);
      std::int64_t next;
      if (uniform01(rng) < 0.1) {
        next = static_cast<std::int64_t>(uniform_below(rng, L - 1));
        if (next >= cur) ++next;
      } else {
        const auto span = 1 + static_cast<std::int64_t>(
                                  std::floor(std::abs(standard_normal(rng)) * amplitude));
        next = uniform01(rng) < 0.5 ? cur - span : cur + span;
        next = std::clamp<std::int64_t>(next, 0, L - 1);
        if (next == cur) next = cur > 0 ? cur - 1 : cur + 1;
      }
      return static_cast<double>(next);
    };

    double t0 = 0.0;
    if (!active.empty()) {
      int samples = 0;
      for (int s = 0; s < 32; ++s) {
        const VarIndex v = active[uniform_below(rng, active.size())];
        t0 += std::abs(poly.delta(x, v, propose(v, 1.0)));
        ++samples;
      }
      t0 /= samples;
    }
    if (!(t0 > 0.0)) t0 = std::max(1e-12, std::abs(energy));
    const double t_end = t0 * 1e-4;

    for (std::size_t t = 0; t < schedule.iterations; ++t, ++global_iter) {
      trace.tick(global_iter, run.best_energy);
      if (active.empty()) continue;
      const double frac =
          schedule.iterations > 1
              ? static_cast<double>(t) / static_cast<double>(schedule.iterations - 1)
              : 1.0;
      const double temperature = t0 * std::pow(t_end / t0, frac);
      const double signal =
          detail::kSignalFloor + (1.0 - detail::kSignalFloor) *
                                     detail::energy_signal(energy, restart_best);
      if (t % 4096 == 4095) energy = poly.evaluate(x);

      const VarIndex v = active[uniform_below(rng, active.size())];
      const double amplitude = schedule.noise_curve(t) * signal *
                               static_cast<double>(levels[v]) / 4.0;
      const double value = propose(v, amplitude);
      const double delta = poly.delta(x, v, value);
      if (detail::metropolis_accept(delta, temperature, rng)) {
        x[v] = value;
        energy += delta;
        consider_best(energy);
      }
    }
  }

  run.iterations = global_iter;
  run.best_x = std::move(best_x);
  run.best_energy = poly.evaluate(run.best_x);
  trace.finish(run.best_energy);
  run.trace = trace.take();
  run.trace_stride = trace.stride();
  run.elapsed = detail::seconds_since(start);
  return run;
}

/// Simulated-annealing parameters. Zero betas are derived from the model:
/// the hot end accepts the largest single-flip uphill move with probability
/// one half, the cold end accepts the smallest with probability 1%.
struct QuboParams {
  std::size_t sweeps = 1000;  // per restart
  std::size_t restarts = 4;
  double beta_start = 0.0;
  double beta_end = 0.0;

  static QuboParams from_schedule(const RelaxationSchedule& s) {
    return {std::max<std::size_t>(1, s.iterations / 20), s.restarts, 0.0, 0.0};
  }
};

/// Single-bit-flip simulated annealing with a geometric beta schedule.
inline SolverRun solve_qubo(const QuboModel& q, const QuboParams& params,
                            std::uint64_t seed) {
  const auto start = detail::Clock::now();
  const std::size_t n = q.num_vars;

  struct Edge {
    VarIndex other;
    double v;
  };
  std::vector<std::vector<Edge>> adj(n);
  for (const auto& [key, v] : q.quadratic) {
    adj[key.first].push_back({key.second, v});
    adj[key.second].push_back({key.first, v});
  }

  double beta_start = params.beta_start;
  double beta_end = params.beta_end;
  if (beta_start <= 0.0 || beta_end <= 0.0) {
    double max_delta = 0.0;
    double min_delta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double reach = std::abs(q.linear[i]);
      for (const auto& e : adj[i]) reach += std::abs(e.v);
      max_delta = std::max(max_delta, reach);
      if (q.linear[i] != 0.0) min_delta = std::min(min_delta, std::abs(q.linear[i]));
      for (const auto& e : adj[i]) min_delta = std::min(min_delta, std::abs(e.v));
    }
    if (max_delta == 0.0) max_delta = 1.0;
    if (!std::isfinite(min_delta) || min_delta == 0.0) min_delta = max_delta;
    if (beta_start <= 0.0) beta_start = std::log(2.0) / max_delta;
    if (beta_end <= 0.0) beta_end = std::log(100.0) / min_delta;
    beta_end = std::max(beta_end, beta_start);
  }

  SolverRun run;
  run.mode = SolverMode::Qubo;
  run.seed = seed;
  run.best_energy = std::numeric_limits<double>::infinity();
  detail::TraceRecorder trace(params.sweeps * params.restarts);
  std::vector<std::uint8_t> best_bits(n, 0);
  std::size_t global_sweep = 0;

  for (std::size_t r = 0; r < params.restarts; ++r) {
    Rng rng(derive_seed(seed, {0x5A5AULL, r}));
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1U);
    // field[i] = u_i + sum_j v_ij q_j; flipping i changes energy by
    // (1 - 2 q_i) * field[i].
    std::vector<double> field(q.linear.begin(), q.linear.end());
    for (std::size_t i = 0; i < n; ++i)
      if (bits[i])
        for (const auto& e : adj[i]) field[e.other] += e.v;
    double energy = q.evaluate(bits);

    auto consider_best = [&]() {
      if (energy < run.best_energy) {
        const double exact = q.evaluate(bits);
        energy = exact;
        if (exact < run.best_energy) {
          run.best_energy = exact;
          best_bits = bits;
          run.best_restart = r;
        }
      }
    };
    consider_best();

    for (std::size_t s = 0; s < params.sweeps; ++s, ++global_sweep) {
      trace.tick(global_sweep, run.best_energy);
      const double frac =
          params.sweeps > 1
              ? static_cast<double>(s) / static_cast<double>(params.sweeps - 1)
              : 1.0;
      const double beta = beta_start * std::pow(beta_end / beta_start, frac);
      for (std::size_t i = 0; i < n; ++i) {
        const double delta = bits[i] ? -field[i] : field[i];
        if (delta <= 0.0 || uniform01(rng) < std::exp(-beta * delta)) {
          const double sign = bits[i] ? -1.0 : 1.0;
          bits[i] ^= 1U;
          for (const auto& e : adj[i]) field[e.other] += sign * e.v;
          energy += delta;
          if (delta < 0.0) consider_best();
        }
      }
      if (s % 64 == 63) energy = q.evaluate(bits);
    }
  }

  run.iterations = global_sweep * n;
  run.best_x.assign(best_bits.begin(), best_bits.end());
  run.best_energy = q.evaluate(best_bits);
  trace.finish(run.best_energy);
  run.trace = trace.take();
  run.trace_stride = trace.stride();
  run.elapsed = detail::seconds_since(start);
  return run;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_SOLVER_HPP
