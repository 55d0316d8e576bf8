#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace nmf_energy;

namespace {

ProblemInstance scalar(double v, int levels) {
  ProblemInstance inst;
  inst.V = Matrix::from_rows({{v}});
  inst.n = inst.m = inst.p = 1;
  inst.domain = ValueDomain::integer(levels);
  inst.case_id = "s";
  return inst;
}

SearchBudget logical(std::uint64_t seed, std::size_t iters) {
  SearchBudget b;
  b.seed = seed;
  b.logical_iterations = iters;
  return b;
}

void expect_in_bounds(const FactorPair& f, int levels) {
  for (const Matrix* m : {&f.W, &f.H})
    for (double x : m->values()) {
      EXPECT_EQ(x, std::floor(x));
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, levels - 1);
    }
}

}  // namespace

TEST(IntObjective, Names) {
  EXPECT_EQ(parse_int_objective("abs"), IntObjective::AbsDiff);
  EXPECT_EQ(parse_int_objective("sq"), IntObjective::SqDiff);
  EXPECT_EQ(to_string(IntObjective::SqDiff), "sq");
  EXPECT_THROW(parse_int_objective("l1"), InvalidArgument);
}

TEST(IntObjective, SharedZeroSet) {
  const auto inst = generate_case(CaseKind::IntegerPlanted, 2, 3, 2, ValueDomain::integer(8), 1, "z");
  EXPECT_EQ(int_objective_value(inst.V, *inst.planted, IntObjective::AbsDiff), 0.0);
  EXPECT_EQ(int_objective_value(inst.V, *inst.planted, IntObjective::SqDiff), 0.0);
  FactorPair off = *inst.planted;
  off.W(0, 0) += 1;
  off.H(0, 0) = std::max(off.H(0, 0), 1.0);
  EXPECT_GT(int_objective_value(inst.V, off, IntObjective::AbsDiff), 0.0);
  EXPECT_GT(int_objective_value(inst.V, off, IntObjective::SqDiff), 0.0);
}

TEST(Oracle, FiveWithThreeLevels) {
  const IntSolution s = brute_force_optimum(scalar(5, 3), IntObjective::SqDiff);
  EXPECT_EQ(s.factors.W(0, 0), 2.0);
  EXPECT_EQ(s.factors.H(0, 0), 2.0);
  EXPECT_EQ(s.value, 1.0);
}

TEST(Oracle, NineWithFourLevels) {
  for (auto o : {IntObjective::AbsDiff, IntObjective::SqDiff}) {
    const IntSolution s = brute_force_optimum(scalar(9, 4), o);
    EXPECT_EQ(s.factors.W(0, 0), 3.0);
    EXPECT_EQ(s.factors.H(0, 0), 3.0);
    EXPECT_EQ(s.value, 0.0);
  }
}

TEST(Oracle, TiesGoToSmallestEncoding) {
  // V = 4 with levels 5: (1,4), (2,2), (4,1) all exact; w is encoded first.
  const IntSolution s = brute_force_optimum(scalar(4, 5), IntObjective::SqDiff);
  EXPECT_EQ(s.factors.W(0, 0), 1.0);
  EXPECT_EQ(s.factors.H(0, 0), 4.0);
}

TEST(Oracle, PlantedIsZero) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = generate_case(CaseKind::IntegerPlanted, 2, 2, 2, ValueDomain::integer(4), seed, "p");
    EXPECT_EQ(brute_force_optimum(inst, IntObjective::SqDiff).value, 0.0);
  }
}

TEST(Oracle, MatchesIndependentEnumeration) {
  const auto inst = generate_case(CaseKind::IntegerRaw, 2, 2, 1, ValueDomain::integer(5), 3, "e");
  double best = 1e300;
  oracle::for_each_point({5, 5, 5, 5}, [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const double r = inst.V(i, j) - x[i] * x[2 + j];
        s += r * r;
      }
    best = std::min(best, s);
  });
  EXPECT_EQ(brute_force_optimum(inst, IntObjective::SqDiff).value, best);
}

TEST(Oracle, GuardThrows) {
  const auto inst = generate_case(CaseKind::IntegerPlanted, 2, 2, 2, ValueDomain::integer(8), 0, "g");
  EXPECT_THROW(brute_force_optimum(inst, IntObjective::SqDiff), SearchSpaceTooLarge);
  EXPECT_THROW(brute_force_optimum(scalar(1, 4), IntObjective::SqDiff, 15), SearchSpaceTooLarge);
}

TEST(Heuristic, MatchesOracleMostly) {
  int matches = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto inst = generate_case(CaseKind::IntegerRaw, 2, 3, 1, ValueDomain::integer(6), t, "h");
    const auto o = t % 2 ? IntObjective::AbsDiff : IntObjective::SqDiff;
    const double want = brute_force_optimum(inst, o).value;
    const IntSolution got = heuristic_search(inst, o, logical(t, 20000));
    EXPECT_GE(got.value, want);
    expect_in_bounds(got.factors, 6);
    EXPECT_EQ(got.value, int_objective_value(inst.V, got.factors, o));
    matches += got.value == want;
  }
  EXPECT_GE(matches, 16);
}

TEST(Heuristic, EarlyExitOnZero) {
  const auto inst = generate_case(CaseKind::IntegerPlanted, 1, 2, 1, ValueDomain::integer(4), 2, "x");
  const IntSolution s = heuristic_search(inst, IntObjective::SqDiff, logical(1, 1'000'000));
  EXPECT_EQ(s.value, 0.0);
  EXPECT_LT(s.iterations, 1'000'000u);
}

TEST(Heuristic, Deterministic) {
  const auto inst = generate_case(CaseKind::IntegerRaw, 3, 4, 2, ValueDomain::integer(8), 5, "d");
  const IntSolution a = heuristic_search(inst, IntObjective::AbsDiff, logical(3, 5000));
  const IntSolution b = heuristic_search(inst, IntObjective::AbsDiff, logical(3, 5000));
  EXPECT_EQ(a.factors.W, b.factors.W);
  EXPECT_EQ(a.factors.H, b.factors.H);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.iterations, b.iterations);
  expect_in_bounds(a.factors, 8);
}

TEST(Heuristic, WallClockBudget) {
  const auto inst = generate_case(CaseKind::IntegerRaw, 3, 4, 2, ValueDomain::integer(8), 6, "w");
  SearchBudget b;
  b.time_limit = 0.05;
  const IntSolution s = heuristic_search(inst, IntObjective::SqDiff, b);
  EXPECT_GT(s.iterations, 0u);
  expect_in_bounds(s.factors, 8);
}

TEST(Heuristic, RejectsBadBudget) {
  SearchBudget b;
  b.time_limit = 0.0;
  EXPECT_THROW(heuristic_search(scalar(1, 2), IntObjective::SqDiff, b), InvalidArgument);
  const auto cont = generate_case(CaseKind::ContinuousRaw, 1, 1, 1, ValueDomain::continuous(), 0, "c");
  EXPECT_THROW(heuristic_search(cont, IntObjective::SqDiff, logical(0, 10)), InvalidArgument);
}
