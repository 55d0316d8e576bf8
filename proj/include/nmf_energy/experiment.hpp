#ifndef NMF_ENERGY_EXPERIMENT_HPP
#define NMF_ENERGY_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "instance.hpp"
#include "integer_solver.hpp"
#include "io.hpp"
#include "matrix.hpp"
#include "nmf.hpp"
#include "quardp.hpp"
#include "qubo.hpp"
#include "random.hpp"
#include "solver.hpp"
#include "stats.hpp"

namespace nmf_energy {

inline constexpr std::string_view kToolVersion = "1.0.0";

/// Logical seconds charged per solver iteration when not measuring wall time.
inline constexpr double kLogicalSecondsPerIteration = 1e-6;

enum class ExperimentId { I, II, III, IV };

inline std::string_view to_string(ExperimentId e) {
  switch (e) {
    case ExperimentId::I: return "I";
    case ExperimentId::II: return "II";
    case ExperimentId::III: return "III";
    case ExperimentId::IV: return "IV";
  }
  return "?";
}

inline ExperimentId parse_experiment_id(std::string_view s) {
  if (s == "I" || s == "1") return ExperimentId::I;
  if (s == "II" || s == "2") return ExperimentId::II;
  if (s == "III" || s == "3") return ExperimentId::III;
  if (s == "IV" || s == "4") return ExperimentId::IV;
  throw InvalidArgument("unknown experiment '" + std::string(s) + "'");
}

struct ExperimentConfig {
  ExperimentId experiment = ExperimentId::I;
  std::size_t cases = 100;
  std::vector<std::size_t> sizes{1, 2, 3, 4};  // I and III: n = m = p = size
  std::size_t n = 4, m = 8, p = 3;             // II and IV
  std::vector<int> schedules{1};
  std::size_t runs_per_case = 10;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  SolverLimits solver_limits;
  int levels = 8;         // integer experiments
  int qubo_bits_N = 2;    // III: x = sum_{j<=N} 2^j q_j
  HalsParams hals;
  double histogram_width = 10.0;
  bool wallclock = false;

  void validate() const;
};

inline void to_json(Json& j, const ExperimentConfig& c) {
  j = {{"experiment", to_string(c.experiment)},
       {"cases", c.cases},
       {"sizes", c.sizes},
       {"n", c.n},
       {"m", c.m},
       {"p", c.p},
       {"schedules", c.schedules},
       {"runs_per_case", c.runs_per_case},
       {"seed", c.seed},
       {"output_dir", c.output_dir},
       {"solver_limits",
        {{"max_quartic_vars", c.solver_limits.max_quartic_vars},
         {"max_discrete_levels", c.solver_limits.max_discrete_levels}}},
       {"levels", c.levels},
       {"qubo_bits_N", c.qubo_bits_N},
       {"hals", {{"max_iter", c.hals.max_iter}, {"tol", c.hals.tol}}},
       {"histogram_width", c.histogram_width},
       {"wallclock", c.wallclock}};
}

inline void from_json(const Json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  const Json& e = j.at("experiment");
  c.experiment = parse_experiment_id(e.is_number() ? std::to_string(e.get<int>())
                                                   : e.get<std::string>());
  c.cases = j.value("cases", c.cases);
  c.sizes = j.value("sizes", c.sizes);
  c.n = j.value("n", c.n);
  c.m = j.value("m", c.m);
  c.p = j.value("p", c.p);
  c.schedules = j.value("schedules", c.schedules);
  c.runs_per_case = j.value("runs_per_case", c.runs_per_case);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("solver_limits")) {
    const Json& l = j.at("solver_limits");
    c.solver_limits.max_quartic_vars =
        l.value("max_quartic_vars", c.solver_limits.max_quartic_vars);
    c.solver_limits.max_discrete_levels =
        l.value("max_discrete_levels", c.solver_limits.max_discrete_levels);
  }
  c.levels = j.value("levels", c.levels);
  c.qubo_bits_N = j.value("qubo_bits_N", c.qubo_bits_N);
  if (j.contains("hals")) {
    c.hals.max_iter = j.at("hals").value("max_iter", c.hals.max_iter);
    c.hals.tol = j.at("hals").value("tol", c.hals.tol);
  }
  c.histogram_width = j.value("histogram_width", c.histogram_width);
  c.wallclock = j.value("wallclock", c.wallclock);
}

inline void ExperimentConfig::validate() const {
  if (cases == 0) throw InvalidArgument("config: cases must be positive");
  if (runs_per_case == 0) throw InvalidArgument("config: runs_per_case must be positive");
  if (schedules.empty()) throw InvalidArgument("config: no schedules");
  for (int s : schedules) (void)RelaxationSchedule::standard(s);
  if (!(histogram_width > 0.0))
    throw InvalidArgument("config: histogram_width must be positive");

  const bool square = experiment == ExperimentId::I || experiment == ExperimentId::III;
  const bool integer = experiment == ExperimentId::III || experiment == ExperimentId::IV;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> shapes;
  if (square) {
    if (sizes.empty()) throw InvalidArgument("config: no sizes");
    for (auto s : sizes) shapes.emplace_back(s, s, s);
  } else {
    shapes.emplace_back(n, m, p);
  }
  if (integer) {
    if (levels < 2) throw InvalidArgument("config: levels must be >= 2");
    const BinarizationScheme scheme{qubo_bits_N, 1.0, 0.0};
    scheme.validate();
    if (experiment == ExperimentId::III && !scheme.covers(ValueDomain::integer(levels)))
      throw InvalidArgument("config: qubo_bits_N cannot represent every level");
  }
  for (auto [sn, sm, sp] : shapes) {
    if (sn == 0 || sm == 0 || sp == 0)
      throw InvalidArgument("config: dimensions must be positive");
    if (sp > std::min(sn, sm))
      throw InvalidArgument("config: p must not exceed min(n, m)");
    const std::string shape = std::to_string(sn) + "x" + std::to_string(sm) +
                              "x" + std::to_string(sp);
    if (integer) {
      const std::size_t need =
          static_cast<std::size_t>(levels) * sp * (sn + sm) + 1;
      if (need > solver_limits.max_discrete_levels)
        throw BudgetViolation("config: " + shape + " needs " + std::to_string(need) +
                              " levels, limit " +
                              std::to_string(solver_limits.max_discrete_levels));
    } else if (auto b = check_device_budget(sn, sm, sp, solver_limits.max_quartic_vars);
               !b) {
      throw BudgetViolation("config: " + shape + ": " + b.detail);
    }
  }
}

/// One (case, method, schedule) outcome. `delta` is the selected run's
/// relative error: the best run for I and III, the median run for IV and the
/// single fit for HALS-based methods.
struct CaseRecord {
  std::string experiment;
  std::string set;  // "A", "B" or empty
  std::string case_id;
  std::size_t n = 0, m = 0, p = 0;
  std::string method;
  int schedule = 0;  // 0 for methods without a schedule
  std::string status = "ok";  // ok | skipped
  std::string reason;
  std::size_t runs = 0;
  std::size_t vars = 0;
  double delta = 0.0;
  double epsilon = 0.0;
  double energy = 0.0;
  double elapsed = 0.0;
  std::size_t iterations = 0;

  bool ok() const { return status == "ok"; }
};

struct AggregateRow {
  std::string set;
  std::size_t n = 0, m = 0, p = 0;
  std::string method;
  int schedule = 0;
  std::size_t count = 0;
  std::size_t skipped = 0;
  MedianMad delta;
  MedianMad elapsed;
};

struct ComparisonTable {
  std::string name;
  std::string set;
  int schedule = 0;
  std::string base_method;
  std::string new_method;
  std::vector<ComparisonRecord> records;
  ComparisonSummary summary;
  std::map<long long, std::uint64_t> histogram;  // pct_decrease bins
};

struct VariableCountRow {
  std::size_t n = 0, m = 0, p = 0;
  std::size_t quardp_vars = 0;
  std::size_t qubo_main_bits = 0;
  std::size_t qubo_aux = 0;
  std::size_t qubo_total = 0;
  bool qubo_fits = false;
};

struct CurveFitRow {
  std::string method;
  int schedule = 0;
  std::string kind;
  std::vector<std::pair<double, double>> points;
  std::optional<CurveFit> fit;
  std::string error;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CaseRecord> cases;
  std::vector<AggregateRow> aggregates;
  std::vector<ComparisonTable> comparisons;
  std::vector<VariableCountRow> variable_counts;
  std::vector<CurveFitRow> curve_fits;
  Json provenance;
};

// ---- Work pool ----------------------------------------------------------------

/// Worker count: NMF_ENERGY_THREADS if set to a positive integer, otherwise
/// the hardware concurrency.
inline std::size_t worker_count() {
  std::size_t hw = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NMF_ENERGY_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return hw;
}

/// Runs fn(0..count-1) on a pool; the first exception is rethrown.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                         std::size_t threads = worker_count()) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

// ---- Drivers --------------------------------------------------------------------

namespace detail {

struct CaseSpec {
  std::string set;
  std::string case_id;
  CaseKind kind = CaseKind::ContinuousPlanted;
  std::size_t n = 0, m = 0, p = 0;
};

class CaseContext {
 public:
  CaseContext(const ExperimentConfig& cfg, const CaseSpec& spec)
      : cfg_(cfg), spec_(spec) {
    const ValueDomain dom = (spec.kind == CaseKind::IntegerPlanted ||
                             spec.kind == CaseKind::IntegerRaw)
                                ? ValueDomain::integer(cfg.levels)
                                : ValueDomain::continuous();
    inst = generate_case(spec.kind, spec.n, spec.m, spec.p, dom, cfg.seed, spec.case_id);
  }

  std::uint64_t run_seed(std::string_view method, int schedule, std::size_t run) const {
    return derive_seed(cfg_.seed, spec_.case_id + "|" + std::string(method) + "|s" +
                                      std::to_string(schedule) + "|r" +
                                      std::to_string(run));
  }

  double time_of(const SolverRun& r) const {
    return cfg_.wallclock ? r.elapsed
                          : static_cast<double>(r.iterations) * kLogicalSecondsPerIteration;
  }

  CaseRecord record(std::string method, int schedule) const {
    CaseRecord rec;
    rec.experiment = std::string(to_string(cfg_.experiment));
    rec.set = spec_.set;
    rec.case_id = spec_.case_id;
    rec.n = spec_.n;
    rec.m = spec_.m;
    rec.p = spec_.p;
    rec.method = std::move(method);
    rec.schedule = schedule;
    return rec;
  }

  void fill_metrics(CaseRecord& rec, const FactorPair& f) const {
    const ErrorMetrics e = error_metrics(inst.V, f);
    rec.delta = e.relative;
    rec.epsilon = e.absolute;
  }

  CaseRecord hals_record(std::vector<CaseRecord>& out) const {
    const auto t0 = Clock::now();
    const FitResult fit = hals_fit(inst.V, inst.p, InitNndsvda{}, cfg_.hals);
    CaseRecord rec = record("hals", 0);
    rec.runs = 1;
    rec.vars = inst.p * (inst.n + inst.m);
    fill_metrics(rec, fit.factors);
    rec.energy = rec.epsilon * rec.epsilon;
    rec.iterations = fit.iterations;
    rec.elapsed = cfg_.wallclock ? seconds_since(t0)
                                 : static_cast<double>(fit.iterations) *
                                       kLogicalSecondsPerIteration;
    out.push_back(rec);
    return rec;
  }

  ProblemInstance inst;

 private:
  const ExperimentConfig& cfg_;
  const CaseSpec& spec_;
};

inline std::string case_name(std::string_view exp, std::string_view set,
                             std::size_t n, std::size_t m, std::size_t p,
                             std::size_t index) {
  std::string s = std::string(exp);
  if (!set.empty()) s += "-" + std::string(set);
  s += "-" + std::to_string(n) + "x" + std::to_string(m) + "x" + std::to_string(p);
  char buf[16];
  std::snprintf(buf, sizeof buf, "-c%03zu", index);
  return s + buf;
}

inline std::vector<CaseSpec> enumerate_cases(const ExperimentConfig& cfg) {
  std::vector<CaseSpec> specs;
  const std::string exp(to_string(cfg.experiment));
  switch (cfg.experiment) {
    case ExperimentId::I:
    case ExperimentId::III: {
      const CaseKind kind = cfg.experiment == ExperimentId::I ? CaseKind::ContinuousPlanted
                                                             : CaseKind::IntegerPlanted;
      for (auto s : cfg.sizes)
        for (std::size_t c = 0; c < cfg.cases; ++c)
          specs.push_back({"", case_name(exp, "", s, s, s, c), kind, s, s, s});
      break;
    }
    case ExperimentId::II:
    case ExperimentId::IV: {
      const bool integer = cfg.experiment == ExperimentId::IV;
      const std::pair<std::string, CaseKind> sets[] = {
          {"A", integer ? CaseKind::IntegerRaw : CaseKind::ContinuousRaw},
          {"B", integer ? CaseKind::IntegerPlanted : CaseKind::ContinuousPlanted}};
      for (const auto& [set, kind] : sets)
        for (std::size_t c = 0; c < cfg.cases; ++c)
          specs.push_back({set, case_name(exp, set, cfg.n, cfg.m, cfg.p, c), kind,
                           cfg.n, cfg.m, cfg.p});
      break;
    }
  }
  return specs;
}

/// Exp I: best-of-runs QuarDP continuous per schedule, plus HALS.
inline void run_case_I(const ExperimentConfig& cfg, const CaseContext& ctx,
                       std::vector<CaseRecord>& out) {
  const QuardpModel model = build_quardp(ctx.inst);
  for (int sid : cfg.schedules) {
    const RelaxationSchedule sched = RelaxationSchedule::standard(sid);
    CaseRecord rec = ctx.record("quardp-continuous", sid);
    rec.runs = cfg.runs_per_case;
    rec.vars = model.layout.total_vars();
    rec.delta = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < cfg.runs_per_case; ++r) {
      const SolverRun run = solve_continuous(
          model, sched, ctx.run_seed("quardp-continuous", sid, r), cfg.solver_limits);
      rec.elapsed += ctx.time_of(run);
      rec.iterations += run.iterations;
      const ErrorMetrics e = error_metrics(ctx.inst.V, model.decode(run.best_x));
      if (e.relative < rec.delta) {
        rec.delta = e.relative;
        rec.epsilon = e.absolute;
        rec.energy = run.best_energy;
      }
    }
    out.push_back(rec);
  }
  ctx.hals_record(out);
}

/// Exp II: fusion (median-energy run warm-starts HALS) vs NNDSVDA HALS.
inline void run_case_II(const ExperimentConfig& cfg, const CaseContext& ctx,
                        std::vector<CaseRecord>& out) {
  const QuardpModel model = build_quardp(ctx.inst);
  for (int sid : cfg.schedules) {
    const RelaxationSchedule sched = RelaxationSchedule::standard(sid);
    std::vector<SolverRun> runs;
    CaseRecord rec = ctx.record("fusion", sid);
    rec.runs = cfg.runs_per_case;
    rec.vars = model.layout.total_vars();
    for (std::size_t r = 0; r < cfg.runs_per_case; ++r) {
      runs.push_back(solve_continuous(model, sched, ctx.run_seed("fusion", sid, r),
                                      cfg.solver_limits));
      rec.elapsed += ctx.time_of(runs.back());
      rec.iterations += runs.back().iterations;
    }
    const FusionResult fused = fusion_pipeline(ctx.inst, model.layout, runs, cfg.hals);
    ctx.fill_metrics(rec, fused.fit.factors);
    rec.energy = runs[fused.selected_run].best_energy;
    rec.iterations += fused.fit.iterations;
    if (!cfg.wallclock)
      rec.elapsed += static_cast<double>(fused.fit.iterations) * kLogicalSecondsPerIteration;
    out.push_back(rec);
  }
  ctx.hals_record(out);
}

inline std::vector<std::size_t> discrete_levels(const VariableLayout& layout, int levels) {
  std::vector<std::size_t> lv(layout.total_vars(), static_cast<std::size_t>(levels));
  if (auto s = layout.slack_index()) lv[*s] = 1;
  return lv;
}

struct DiscreteRuns {
  std::vector<SolverRun> runs;
  std::vector<double> deltas;
  std::vector<double> epsilons;
};

inline DiscreteRuns run_discrete(const ExperimentConfig& cfg, const CaseContext& ctx,
                                 const QuardpModel& model, int sid) {
  const RelaxationSchedule sched = RelaxationSchedule::standard(sid);
  const auto levels = discrete_levels(model.layout, cfg.levels);
  DiscreteRuns out;
  for (std::size_t r = 0; r < cfg.runs_per_case; ++r) {
    out.runs.push_back(solve_discrete(model.poly, levels, sched,
                                      ctx.run_seed("quardp-discrete", sid, r),
                                      cfg.solver_limits));
    const ErrorMetrics e = error_metrics(ctx.inst.V, model.decode(out.runs.back().best_x));
    out.deltas.push_back(e.relative);
    out.epsilons.push_back(e.absolute);
  }
  return out;
}

/// Heuristic runs matched run-for-run to the discrete solver's budget.
inline std::vector<IntSolution> run_heuristic(const ExperimentConfig& cfg,
                                              const CaseContext& ctx,
                                              const DiscreteRuns& matched,
                                              IntObjective obj, int sid) {
  std::vector<IntSolution> out;
  const std::string method = "heuristic-" + std::string(to_string(obj));
  for (std::size_t r = 0; r < matched.runs.size(); ++r) {
    SearchBudget budget;
    budget.seed = ctx.run_seed(method, sid, r);
    if (cfg.wallclock)
      budget.time_limit = std::max(matched.runs[r].elapsed, 1e-4);
    else
      budget.logical_iterations = matched.runs[r].iterations;
    out.push_back(heuristic_search(ctx.inst, obj, budget));
  }
  return out;
}

inline double heuristic_time(const ExperimentConfig& cfg, const SolverRun& matched,
                             const IntSolution& s) {
  if (cfg.wallclock) return std::max(matched.elapsed, 1e-4);
  return static_cast<double>(s.iterations) * kLogicalSecondsPerIteration;
}

/// Exp III: best-of-runs QuarDP discrete, QUBO annealing, matched heuristic
/// under both objectives, and the exhaustive oracle when affordable.
inline void run_case_III(const ExperimentConfig& cfg, const CaseContext& ctx,
                         std::vector<CaseRecord>& out) {
  const QuardpModel model = build_quardp(ctx.inst);
  const BinarizationScheme scheme{cfg.qubo_bits_N, 1.0, 0.0};
  const VariableLayout bin_layout(ctx.inst.n, ctx.inst.m, ctx.inst.p, false);
  const QuboModel qubo = build_qubo(ctx.inst, scheme, PenaltyPolicy::local_bound());
  const BudgetCheck qubo_budget =
      check_qubo_budget(qubo.num_vars, cfg.solver_limits.max_discrete_levels);

  for (int sid : cfg.schedules) {
    const RelaxationSchedule sched = RelaxationSchedule::standard(sid);
    const DiscreteRuns disc = run_discrete(cfg, ctx, model, sid);
    {
      CaseRecord rec = ctx.record("quardp-discrete", sid);
      rec.runs = disc.runs.size();
      rec.vars = model.layout.total_vars();
      const auto best = static_cast<std::size_t>(
          std::min_element(disc.deltas.begin(), disc.deltas.end()) - disc.deltas.begin());
      rec.delta = disc.deltas[best];
      rec.epsilon = disc.epsilons[best];
      rec.energy = disc.runs[best].best_energy;
      for (const auto& r : disc.runs) {
        rec.elapsed += ctx.time_of(r);
        rec.iterations += r.iterations;
      }
      out.push_back(rec);
    }
    {
      CaseRecord rec = ctx.record("qubo", sid);
      rec.vars = qubo.num_vars;
      if (!qubo_budget) {
        rec.status = "skipped";
        rec.reason = qubo_budget.detail;
      } else {
        rec.runs = cfg.runs_per_case;
        rec.delta = std::numeric_limits<double>::infinity();
        const QuboParams params = QuboParams::from_schedule(sched);
        for (std::size_t r = 0; r < cfg.runs_per_case; ++r) {
          const SolverRun run = solve_qubo(qubo, params, ctx.run_seed("qubo", sid, r));
          rec.elapsed += ctx.time_of(run);
          rec.iterations += run.iterations;
          const FactorPair f = decode_binary(std::span<const double>(run.best_x), scheme,
                                             bin_layout, qubo.registry);
          const ErrorMetrics e = error_metrics(ctx.inst.V, f);
          if (e.relative < rec.delta) {
            rec.delta = e.relative;
            rec.epsilon = e.absolute;
            rec.energy = run.best_energy;
          }
        }
      }
      out.push_back(rec);
    }
    for (IntObjective obj : {IntObjective::SqDiff, IntObjective::AbsDiff}) {
      const auto sols = run_heuristic(cfg, ctx, disc, obj, sid);
      CaseRecord rec = ctx.record("heuristic-" + std::string(to_string(obj)), sid);
      rec.runs = sols.size();
      rec.vars = bin_layout.entry_count();
      rec.delta = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < sols.size(); ++r) {
        rec.elapsed += heuristic_time(cfg, disc.runs[r], sols[r]);
        rec.iterations += sols[r].iterations;
        const ErrorMetrics e = error_metrics(ctx.inst.V, sols[r].factors);
        if (e.relative < rec.delta) {
          rec.delta = e.relative;
          rec.epsilon = e.absolute;
          rec.energy = sols[r].value;
        }
      }
      out.push_back(rec);
    }
  }

  CaseRecord rec = ctx.record("oracle", 0);
  rec.vars = bin_layout.entry_count();
  try {
    const IntSolution opt = brute_force_optimum(ctx.inst, IntObjective::SqDiff);
    rec.runs = 1;
    ctx.fill_metrics(rec, opt.factors);
    rec.energy = opt.value;
    rec.iterations = opt.iterations;
    rec.elapsed = static_cast<double>(opt.iterations) * kLogicalSecondsPerIteration;
  } catch (const SearchSpaceTooLarge& e) {
    rec.status = "skipped";
    rec.reason = e.what();
  }
  out.push_back(rec);
}

/// Exp IV: median-run QuarDP discrete vs the matched heuristic (median run)
/// under both objectives.
inline void run_case_IV(const ExperimentConfig& cfg, const CaseContext& ctx,
                        std::vector<CaseRecord>& out) {
  const QuardpModel model = build_quardp(ctx.inst);
  for (int sid : cfg.schedules) {
    const DiscreteRuns disc = run_discrete(cfg, ctx, model, sid);
    {
      CaseRecord rec = ctx.record("quardp-discrete", sid);
      rec.runs = disc.runs.size();
      rec.vars = model.layout.total_vars();
      const std::size_t mid = select_median_index(disc.deltas);
      rec.delta = disc.deltas[mid];
      rec.epsilon = disc.epsilons[mid];
      rec.energy = disc.runs[mid].best_energy;
      for (const auto& r : disc.runs) {
        rec.elapsed += ctx.time_of(r);
        rec.iterations += r.iterations;
      }
      out.push_back(rec);
    }
    for (IntObjective obj : {IntObjective::SqDiff, IntObjective::AbsDiff}) {
      const auto sols = run_heuristic(cfg, ctx, disc, obj, sid);
      std::vector<double> deltas;
      CaseRecord rec = ctx.record("heuristic-" + std::string(to_string(obj)), sid);
      rec.runs = sols.size();
      rec.vars = model.layout.entry_count();
      for (std::size_t r = 0; r < sols.size(); ++r) {
        deltas.push_back(error_metrics(ctx.inst.V, sols[r].factors).relative);
        rec.elapsed += heuristic_time(cfg, disc.runs[r], sols[r]);
        rec.iterations += sols[r].iterations;
      }
      const std::size_t mid = select_median_index(deltas);
      ctx.fill_metrics(rec, sols[mid].factors);
      rec.energy = sols[mid].value;
      out.push_back(rec);
    }
  }
}

inline std::vector<AggregateRow> aggregate(const std::vector<CaseRecord>& cases) {
  using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t, std::string, int>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::map<Key, std::size_t> skipped;
  std::vector<Key> order;
  for (const auto& c : cases) {
    const Key k{c.set, c.n, c.m, c.p, c.method, c.schedule};
    if (!groups.count(k) && !skipped.count(k)) order.push_back(k);
    if (c.ok()) {
      groups[k].first.push_back(c.delta);
      groups[k].second.push_back(c.elapsed);
    } else {
      ++skipped[k];
      groups[k];
    }
  }
  std::sort(order.begin(), order.end());
  std::vector<AggregateRow> rows;
  for (const auto& k : order) {
    AggregateRow row;
    std::tie(row.set, row.n, row.m, row.p, row.method, row.schedule) = k;
    const auto& [d, t] = groups[k];
    row.count = d.size();
    row.skipped = skipped.count(k) ? skipped[k] : 0;
    if (!d.empty()) {
      row.delta = median_mad(d);
      row.elapsed = median_mad(t);
    }
    rows.push_back(row);
  }
  return rows;
}

inline ComparisonTable compare_methods(const std::vector<CaseRecord>& cases,
                                       const std::string& set, int schedule,
                                       const std::string& base, int base_schedule,
                                       const std::string& challenger, double width) {
  ComparisonTable t;
  t.set = set;
  t.schedule = schedule;
  t.base_method = base;
  t.new_method = challenger;
  t.name = challenger + "_vs_" + base + (set.empty() ? "" : "_set" + set) + "_s" +
           std::to_string(schedule);
  std::map<std::string, const CaseRecord*> base_by_case;
  for (const auto& c : cases)
    if (c.set == set && c.method == base && c.schedule == base_schedule && c.ok())
      base_by_case[c.case_id] = &c;
  std::vector<double> pct;
  for (const auto& c : cases) {
    if (c.set != set || c.method != challenger || c.schedule != schedule || !c.ok())
      continue;
    auto it = base_by_case.find(c.case_id);
    if (it == base_by_case.end()) continue;
    t.records.push_back(compare_deltas(c.case_id, it->second->delta, c.delta));
    if (it->second->delta > 0.0) pct.push_back(pct_decrease(it->second->delta, c.delta));
  }
  t.summary = summarize(t.records);
  t.histogram = histogram(pct, width);
  return t;
}

inline std::vector<ComparisonTable> build_comparisons(const ExperimentConfig& cfg,
                                                      const std::vector<CaseRecord>& cases) {
  std::vector<ComparisonTable> out;
  const double w = cfg.histogram_width;
  for (int s : cfg.schedules) {
    switch (cfg.experiment) {
      case ExperimentId::I:
        out.push_back(compare_methods(cases, "", s, "hals", 0, "quardp-continuous", w));
        break;
      case ExperimentId::II:
        for (const char* set : {"A", "B"})
          out.push_back(compare_methods(cases, set, s, "hals", 0, "fusion", w));
        break;
      case ExperimentId::III:
        out.push_back(compare_methods(cases, "", s, "heuristic-sq", s, "quardp-discrete", w));
        out.push_back(compare_methods(cases, "", s, "heuristic-abs", s, "quardp-discrete", w));
        out.push_back(compare_methods(cases, "", s, "quardp-discrete", s, "qubo", w));
        break;
      case ExperimentId::IV:
        for (const char* set : {"A", "B"}) {
          out.push_back(compare_methods(cases, set, s, "heuristic-sq", s, "quardp-discrete", w));
          out.push_back(compare_methods(cases, set, s, "heuristic-abs", s, "quardp-discrete", w));
        }
        break;
    }
  }
  return out;
}

inline std::vector<VariableCountRow> variable_counts(const ExperimentConfig& cfg) {
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> shapes;
  for (auto s : cfg.sizes) shapes.emplace_back(s, s, s);
  if (std::find(shapes.begin(), shapes.end(), std::tuple{cfg.n, cfg.m, cfg.p}) == shapes.end())
    shapes.emplace_back(cfg.n, cfg.m, cfg.p);
  const BinarizationScheme scheme{cfg.qubo_bits_N, 1.0, 0.0};
  std::vector<VariableCountRow> rows;
  for (auto [n, m, p] : shapes) {
    // Any V works: the term structure, and so the auxiliary count, depends
    // only on the shape (V enters linear and constant terms).
    const ProblemInstance inst = generate_case(CaseKind::IntegerPlanted, n, m, p,
                                               ValueDomain::integer(cfg.levels),
                                               cfg.seed, "variable-count");
    const QuboModel q = build_qubo(inst, scheme, PenaltyPolicy::local_bound());
    VariableCountRow row;
    row.n = n;
    row.m = m;
    row.p = p;
    row.quardp_vars = VariableLayout(n, m, p, true).total_vars();
    row.qubo_main_bits = q.source_bit_count();
    row.qubo_aux = q.auxiliary_count();
    row.qubo_total = q.num_vars;
    row.qubo_fits = static_cast<bool>(
        check_qubo_budget(q.num_vars, cfg.solver_limits.max_discrete_levels));
    rows.push_back(row);
  }
  return rows;
}

/// log and exp fits of median delta against n^2 (entries of V) per method.
inline std::vector<CurveFitRow> curve_fits(const std::vector<AggregateRow>& rows) {
  std::map<std::pair<std::string, int>, std::vector<std::pair<double, double>>> series;
  for (const auto& r : rows)
    if (r.count > 0)
      series[{r.method, r.schedule}].emplace_back(static_cast<double>(r.n * r.m),
                                                  r.delta.median);
  std::vector<CurveFitRow> out;
  for (const auto& [key, pts] : series) {
    for (CurveKind kind : {CurveKind::Log, CurveKind::Exp}) {
      CurveFitRow row;
      row.method = key.first;
      row.schedule = key.second;
      row.kind = std::string(to_string(kind));
      row.points = pts;
      try {
        row.fit = fit_curve(kind, pts);
      } catch (const InvalidArgument& e) {
        row.error = e.what();
      }
      out.push_back(row);
    }
  }
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  Json j = cfg;
  j.erase("output_dir");
  return hash_string(j.dump());
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  const auto specs = detail::enumerate_cases(cfg);
  std::vector<std::vector<CaseRecord>> per_case(specs.size());
  parallel_for(specs.size(), [&](std::size_t i) {
    const detail::CaseContext ctx(cfg, specs[i]);
    switch (cfg.experiment) {
      case ExperimentId::I: detail::run_case_I(cfg, ctx, per_case[i]); break;
      case ExperimentId::II: detail::run_case_II(cfg, ctx, per_case[i]); break;
      case ExperimentId::III: detail::run_case_III(cfg, ctx, per_case[i]); break;
      case ExperimentId::IV: detail::run_case_IV(cfg, ctx, per_case[i]); break;
    }
  });
  for (auto& v : per_case)
    for (auto& r : v) report.cases.push_back(std::move(r));

  report.aggregates = detail::aggregate(report.cases);
  report.comparisons = detail::build_comparisons(cfg, report.cases);
  if (cfg.experiment == ExperimentId::III) report.variable_counts = detail::variable_counts(cfg);
  if (cfg.experiment == ExperimentId::I || cfg.experiment == ExperimentId::III)
    report.curve_fits = detail::curve_fits(report.aggregates);

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(detail::config_hash(cfg)));
  report.provenance = {
      {"tool", "nmf-energy"},
      {"tool_version", kToolVersion},
      {"config", cfg},
      {"config_hash", hash},
      {"seed", cfg.seed},
      {"case_seed_rule", "derive_seed(seed, case_id)"},
      {"time_mode", cfg.wallclock ? "wallclock" : "logical"},
      {"logical_seconds_per_iteration", kLogicalSecondsPerIteration},
      {"elapsed_note", "solver times are emulator times, not device times"},
      {"calibration", {{"hals_planted_median_delta_threshold", 0.05}}},
      {"schedules",
       [&] {
         Json s = Json::array();
         for (int id : cfg.schedules) {
           const auto r = RelaxationSchedule::standard(id);
           s.push_back({{"id", id}, {"iterations", r.iterations}, {"restarts", r.restarts},
                        {"noise_start", r.noise_start}, {"noise_end", r.noise_end}});
         }
         return s;
       }()}};
  return report;
}

// ---- Rendering --------------------------------------------------------------------

inline const std::vector<std::string>& case_csv_columns() {
  static const std::vector<std::string> cols{
      "experiment", "set",   "case_id", "n",       "m",       "p",
      "method",     "schedule", "status", "reason", "runs",   "vars",
      "delta",      "epsilon", "energy",  "elapsed", "iterations"};
  return cols;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename... Ts>
std::string csv_row(const Ts&... fields) {
  std::string line;
  auto add = [&](const auto& f) {
    if (!line.empty()) line += ',';
    using F = std::decay_t<decltype(f)>;
    if constexpr (std::is_same_v<F, double>) line += format_double(f);
    else if constexpr (std::is_same_v<F, std::string>) line += csv_escape(f);
    else if constexpr (std::is_convertible_v<F, std::string_view>)
      line += csv_escape(std::string(f));
    else line += std::to_string(f);
  };
  (add(fields), ...);
  return line + "\n";
}

}  // namespace detail

inline std::string render_cases_csv(const ExperimentReport& r) {
  std::string out;
  for (std::size_t i = 0; i < case_csv_columns().size(); ++i)
    out += (i ? "," : "") + case_csv_columns()[i];
  out += "\n";
  for (const auto& c : r.cases)
    out += detail::csv_row(c.experiment, c.set, c.case_id, c.n, c.m, c.p, c.method,
                           c.schedule, c.status, c.reason, c.runs, c.vars, c.delta,
                           c.epsilon, c.energy, c.elapsed, c.iterations);
  return out;
}

inline std::string render_comparisons_csv(const ExperimentReport& r) {
  std::string out = "comparison,case_id,delta_base,delta_new,winner,pct_decrease\n";
  for (const auto& t : r.comparisons)
    for (const auto& rec : t.records) {
      const std::string pct =
          rec.delta_base > 0.0 ? format_double(pct_decrease(rec.delta_base, rec.delta_new))
                               : "";
      out += detail::csv_row(t.name, rec.case_id, rec.delta_base, rec.delta_new,
                             to_string(rec.winner), pct);
    }
  return out;
}

inline std::string render_histogram_csv(const ComparisonTable& t, double width) {
  std::string out = "bin_low,bin_high,count\n";
  for (const auto& [k, count] : t.histogram)
    out += detail::csv_row(static_cast<double>(k) * width,
                           static_cast<double>(k + 1) * width, count);
  return out;
}

inline Json summary_json(const ComparisonTable& t) {
  const auto& s = t.summary;
  return {{"name", t.name},
          {"set", t.set},
          {"schedule", t.schedule},
          {"base", t.base_method},
          {"new", t.new_method},
          {"n_b", s.n_b},
          {"n_w", s.n_w},
          {"ties", s.ties},
          {"p_value", s.p_value},
          {"improvement_count", s.improvement_count},
          {"median_improvement", s.median_improvement},
          {"mad_improvement", s.mad_improvement},
          {"best_improvement", s.best_improvement},
          {"worst_improvement", s.worst_improvement}};
}

inline Json render_aggregates_json(const ExperimentReport& r) {
  Json aggs = Json::array();
  for (const auto& a : r.aggregates)
    aggs.push_back({{"set", a.set},
                    {"n", a.n},
                    {"m", a.m},
                    {"p", a.p},
                    {"method", a.method},
                    {"schedule", a.schedule},
                    {"count", a.count},
                    {"skipped", a.skipped},
                    {"delta_median", a.delta.median},
                    {"delta_mad", a.delta.mad},
                    {"elapsed_median", a.elapsed.median},
                    {"elapsed_mad", a.elapsed.mad}});
  Json comps = Json::array();
  for (const auto& t : r.comparisons) comps.push_back(summary_json(t));
  Json j = {{"experiment", to_string(r.config.experiment)},
            {"aggregates", aggs},
            {"comparisons", comps}};
  if (!r.variable_counts.empty()) {
    Json vc = Json::array();
    for (const auto& v : r.variable_counts)
      vc.push_back({{"n", v.n},
                    {"m", v.m},
                    {"p", v.p},
                    {"quardp_vars", v.quardp_vars},
                    {"qubo_main_bits", v.qubo_main_bits},
                    {"qubo_aux", v.qubo_aux},
                    {"qubo_total", v.qubo_total},
                    {"qubo_fits", v.qubo_fits}});
    j["variable_counts"] = vc;
  }
  return j;
}

inline Json render_curve_fits_json(const ExperimentReport& r) {
  Json out = Json::array();
  for (const auto& c : r.curve_fits) {
    Json row = {{"method", c.method}, {"schedule", c.schedule}, {"kind", c.kind},
                {"x", "n*m"}, {"points", c.points}};
    if (c.fit) {
      row["a"] = c.fit->a;
      row["b"] = c.fit->b;
      row["residual"] = c.fit->residual;
    } else {
      row["error"] = c.error;
    }
    out.push_back(row);
  }
  return out;
}

/// Writes cases.csv, aggregates.json, comparisons.csv, histograms/*.csv,
/// provenance.json and (I, III) curve_fits.json.
inline void report_tables(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "histograms");
  write_text_file(dir / "cases.csv", render_cases_csv(r));
  write_json_file(dir / "aggregates.json", render_aggregates_json(r));
  write_text_file(dir / "comparisons.csv", render_comparisons_csv(r));
  for (const auto& t : r.comparisons)
    write_text_file(dir / "histograms" / (t.name + ".csv"),
                    render_histogram_csv(t, r.config.histogram_width));
  write_json_file(dir / "provenance.json", r.provenance);
  if (!r.curve_fits.empty()) write_json_file(dir / "curve_fits.json", render_curve_fits_json(r));
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_EXPERIMENT_HPP
