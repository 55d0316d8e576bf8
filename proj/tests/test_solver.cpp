#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"

using namespace nmf_energy;

namespace {

const RelaxationSchedule kQuick{1, 2000, 2};

void expect_monotone(const SolverRun& run) {
  ASSERT_FALSE(run.trace.empty());
  for (std::size_t i = 1; i < run.trace.size(); ++i) EXPECT_LE(run.trace[i], run.trace[i - 1]);
  EXPECT_EQ(run.trace.back(), run.best_energy);
}

void expect_continuous_contract(const QuardpModel& model, const SolverRun& run) {
  ASSERT_EQ(run.best_x.size(), model.layout.total_vars());
  const double step = model.R / 9999.0;
  double sum = 0.0;
  for (double x : run.best_x) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, model.R);
    EXPECT_NEAR(x / step, std::round(x / step), 1e-6);
    sum += x;
  }
  EXPECT_NEAR(sum, model.R, 1e-9);
  EXPECT_NEAR(oracle::naive_eval(model.poly, run.best_x), run.best_energy, 1e-10);
  expect_monotone(run);
}

void expect_discrete_contract(const MultilinearPoly& poly, const std::vector<std::size_t>& levels,
                              const SolverRun& run) {
  ASSERT_EQ(run.best_x.size(), levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    EXPECT_EQ(run.best_x[i], std::floor(run.best_x[i]));
    EXPECT_GE(run.best_x[i], 0.0);
    EXPECT_LE(run.best_x[i], static_cast<double>(levels[i] - 1));
  }
  EXPECT_NEAR(oracle::naive_eval(poly, run.best_x), run.best_energy, 1e-10);
  expect_monotone(run);
}

void expect_identical(const SolverRun& a, const SolverRun& b) {
  EXPECT_EQ(a.best_x, b.best_x);
  EXPECT_EQ(a.best_energy, b.best_energy);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.iterations, b.iterations);
}

MultilinearPoly random_integer_poly(Rng& rng, std::size_t nv, std::size_t terms) {
  MultilinearPoly p(nv, 0.0);
  for (std::size_t t = 0; t < terms; ++t) {
    const std::size_t d = 1 + uniform_below(rng, 4);
    std::vector<VarIndex> v;
    for (std::size_t k = 0; k < d; ++k) v.push_back(static_cast<VarIndex>(uniform_below(rng, nv)));
    p.add_term(Monomial(std::span<const VarIndex>(v)), 10.0 * uniform01(rng) - 5.0);
  }
  return p;
}

double enumerate_min(const MultilinearPoly& p, const std::vector<std::size_t>& levels) {
  double best = std::numeric_limits<double>::infinity();
  oracle::for_each_point(levels, [&](const std::vector<double>& x) {
    best = std::min(best, oracle::naive_eval(p, x));
  });
  return best;
}

double qubo_enumerate_min(const QuboModel& q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t c = 0; c < (std::uint64_t{1} << q.num_vars); ++c) {
    std::vector<std::uint8_t> x(q.num_vars);
    for (std::size_t i = 0; i < q.num_vars; ++i) x[i] = (c >> i) & 1U;
    best = std::min(best, q.evaluate(x));
  }
  return best;
}

}  // namespace

TEST(Simplex, FeasibleUnchanged) {
  const std::vector<double> v{0.2, 0.3, 0.5};
  const auto x = simplex_project(v, 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], v[i], 1e-15);
}

TEST(Simplex, Boundary) {
  const auto x = simplex_project(std::vector<double>{2, 0}, 1.0);
  EXPECT_EQ(x, (std::vector<double>{1, 0}));
  EXPECT_THROW(simplex_project(std::vector<double>{1}, 0.0), InvalidArgument);
}

TEST(Simplex, MatchesGridSearch) {
  Rng rng(41);
  for (int t = 0; t < 5; ++t) {
    std::vector<double> v(3);
    for (double& x : v) x = 3.0 * uniform01(rng) - 1.0;
    const auto x = simplex_project(v, 1.0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> arg(3);
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; i + j <= 1000; ++j) {
        const double a = i * 1e-3, b = j * 1e-3, c = 1.0 - a - b;
        const double d = (a - v[0]) * (a - v[0]) + (b - v[1]) * (b - v[1]) + (c - v[2]) * (c - v[2]);
        if (d < best) best = d, arg = {a, b, c};
      }
    const double dist = std::hypot(x[0] - arg[0], x[1] - arg[1], x[2] - arg[2]);
    EXPECT_LE(dist, 2e-3);
  }
}

TEST(SnapToGrid, SumsToSteps) {
  EXPECT_EQ(snap_to_grid(std::vector<double>{0.5, 0.5}, 1.0, 9999),
            (std::vector<std::int64_t>{5000, 4999}));
  Rng rng(42);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(7);
    for (double& x : v) x = uniform01(rng);
    const auto x = simplex_project(v, 5.0);
    const auto k = snap_to_grid(x, 5.0, 9999);
    std::int64_t total = 0;
    for (auto c : k) {
      EXPECT_GE(c, 0);
      total += c;
    }
    EXPECT_EQ(total, 9999);
  }
}

TEST(Schedule, Budgets) {
  const auto s1 = RelaxationSchedule::standard(1), s2 = RelaxationSchedule::standard(2),
             s3 = RelaxationSchedule::standard(3);
  EXPECT_EQ(s1.iterations, 20000u);
  EXPECT_EQ(s1.restarts, 4u);
  EXPECT_EQ(s2.iterations, 100000u);
  EXPECT_EQ(s2.restarts, 8u);
  EXPECT_EQ(s3.iterations, 500000u);
  EXPECT_EQ(s3.restarts, 16u);
  EXPECT_THROW(RelaxationSchedule::standard(4), InvalidArgument);
  for (std::size_t t = 1; t < s1.iterations; t += 997)
    EXPECT_LE(s1.noise_curve(t), s1.noise_curve(t - 1));
}

TEST(Continuous, ConstantPoly) {
  QuardpModel model;
  model.poly = MultilinearPoly(3, 2.5);
  model.layout = VariableLayout(1, 1, 1, true);
  model.R = 2.0;
  const SolverRun run = solve_continuous(model, kQuick, 1);
  EXPECT_EQ(run.best_energy, 2.5);
  expect_continuous_contract(model, run);
}

TEST(Continuous, ContractsAndDeterminism) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = generate_case(CaseKind::ContinuousRaw, 2, 3, 2, ValueDomain::continuous(), s, "c");
    const QuardpModel model = build_quardp(inst);
    const SolverRun a = solve_continuous(model, kQuick, s);
    expect_continuous_contract(model, a);
    expect_identical(a, solve_continuous(model, kQuick, s));
  }
}

TEST(Continuous, ScalarPlantedRecovery) {
  int good = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto inst = generate_case(CaseKind::ContinuousPlanted, 1, 1, 1, ValueDomain::continuous(), s, "one");
    const QuardpModel model = build_quardp(inst);
    const SolverRun run = solve_continuous(model, RelaxationSchedule::standard(2), derive_seed(s, {7}));
    expect_continuous_contract(model, run);
    good += error_metrics(inst.V, model.decode(run.best_x)).relative <= 0.05;
  }
  EXPECT_GE(good, 9);
}

TEST(Continuous, BudgetViolation) {
  const auto inst = generate_case(CaseKind::ContinuousRaw, 5, 5, 5, ValueDomain::continuous(), 0, "big");
  EXPECT_THROW(solve_continuous(build_quardp(inst), kQuick, 0), BudgetViolation);
}

TEST(Discrete, SingleLevel) {
  MultilinearPoly p(2, 1.0);
  p.add_term(Monomial{0}, 3.0);
  const std::vector<std::size_t> levels{1, 1};
  const SolverRun run = solve_discrete(p, levels, kQuick, 0);
  EXPECT_EQ(run.best_x, (std::vector<double>{0, 0}));
  EXPECT_EQ(run.best_energy, 1.0);
  expect_discrete_contract(p, levels, run);
}

TEST(Discrete, ContractsAndDeterminism) {
  Rng rng(43);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = random_integer_poly(rng, 5, 12);
    const std::vector<std::size_t> levels{2, 3, 4, 5, 6};
    const SolverRun a = solve_discrete(p, levels, kQuick, s);
    expect_discrete_contract(p, levels, a);
    expect_identical(a, solve_discrete(p, levels, kQuick, s));
  }
}

TEST(Discrete, BestOfTenMatchesEnumeration) {
  Rng rng(44);
  int matches = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto p = random_integer_poly(rng, 6, 14);
    std::vector<std::size_t> levels(6);
    for (auto& l : levels) l = 2 + uniform_below(rng, 3);
    const double want = enumerate_min(p, levels);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t r = 0; r < 10; ++r)
      best = std::min(best, solve_discrete(p, levels, RelaxationSchedule::standard(1),
                                           derive_seed(trial, {r})).best_energy);
    matches += std::abs(best - want) <= 1e-9 * (1 + std::abs(want));
  }
  EXPECT_GE(matches, 16);
}

TEST(Discrete, PlantedReachesZero) {
  const auto inst = generate_case(CaseKind::IntegerPlanted, 2, 2, 2, ValueDomain::integer(8), 3, "pz");
  const QuardpModel model = build_quardp(inst);
  std::vector<std::size_t> levels(model.layout.total_vars(), 8);
  levels.back() = 1;
  bool hit = false;
  for (std::uint64_t r = 0; r < 10 && !hit; ++r) {
    const SolverRun run = solve_discrete(model.poly, levels, RelaxationSchedule::standard(3), r);
    expect_discrete_contract(model.poly, levels, run);
    hit = run.best_energy == 0.0;
  }
  EXPECT_TRUE(hit);
}

TEST(Discrete, BudgetViolation) {
  const MultilinearPoly p(2);
  EXPECT_THROW(solve_discrete(p, std::vector<std::size_t>{500, 455}, kQuick, 0), BudgetViolation);
  EXPECT_NO_THROW(solve_discrete(p, std::vector<std::size_t>{500, 454}, kQuick, 0));
  EXPECT_THROW(solve_discrete(p, std::vector<std::size_t>{3}, kQuick, 0), DimensionMismatch);
}

TEST(Qubo, SingleVariable) {
  QuboModel q(1);
  q.linear[0] = -1.0;
  q.offset = 0.5;
  const SolverRun run = solve_qubo(q, {100, 2}, 0);
  EXPECT_EQ(run.best_x, (std::vector<double>{1}));
  EXPECT_EQ(run.best_energy, -0.5);
}

TEST(Qubo, QuarticExampleMatchesEnumeration) {
  MultilinearPoly p(4);
  p.add_term(Monomial{0, 1, 2, 3}, 1.0);
  p.add_term(Monomial{0}, -0.5);
  p.add_term(Monomial{3}, -0.5);
  const QuboModel q = quadratize(p);
  const SolverRun run = solve_qubo(q, QuboParams::from_schedule(RelaxationSchedule::standard(1)), 3);
  EXPECT_EQ(run.best_energy, qubo_enumerate_min(q));
  std::vector<std::uint8_t> bits(run.best_x.begin(), run.best_x.end());
  EXPECT_EQ(q.evaluate(bits), run.best_energy);
}

TEST(Qubo, FrustratedTriangle) {
  QuboModel q(3);
  q.offset = 2.0;
  for (VarIndex i = 0; i < 3; ++i) q.linear[i] = -1.0;
  q.add_quadratic(0, 1, 1.0);
  q.add_quadratic(0, 2, 1.0);
  q.add_quadratic(1, 2, 1.0);
  const SolverRun run = solve_qubo(q, {200, 4}, 5);
  EXPECT_EQ(run.best_energy, qubo_enumerate_min(q));
  EXPECT_EQ(run.best_energy, 1.0);
}

TEST(Qubo, ContractsAndDeterminism) {
  const auto inst = generate_case(CaseKind::IntegerPlanted, 1, 2, 1, ValueDomain::integer(8), 2, "q");
  const QuboModel q = build_qubo(inst, BinarizationScheme{2, 1.0, 0.0});
  const QuboParams params{300, 3};
  const SolverRun a = solve_qubo(q, params, 9);
  std::vector<std::uint8_t> bits(a.best_x.begin(), a.best_x.end());
  for (double x : a.best_x) EXPECT_TRUE(x == 0.0 || x == 1.0);
  EXPECT_NEAR(q.evaluate(bits), a.best_energy, 1e-10);
  expect_monotone(a);
  expect_identical(a, solve_qubo(q, params, 9));
  EXPECT_EQ(QuboParams::from_schedule(RelaxationSchedule::standard(2)).sweeps, 5000u);
}
