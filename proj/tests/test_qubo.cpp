#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "oracles.hpp"

using namespace nmf_energy;

namespace {

ProblemInstance int_instance(std::vector<std::vector<double>> v, std::size_t p, int levels = 8) {
  ProblemInstance inst;
  inst.V = Matrix::from_rows(v);
  inst.n = inst.V.rows();
  inst.m = inst.V.cols();
  inst.p = p;
  inst.domain = ValueDomain::integer(levels);
  inst.case_id = "q";
  return inst;
}

std::vector<std::uint8_t> to_bits(std::uint64_t code, std::size_t n) {
  std::vector<std::uint8_t> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>((code >> i) & 1U);
  return b;
}

/// Min over auxiliary assignments of the QUBO with the source bits fixed.
double min_over_aux(const QuboModel& q, const std::vector<std::uint8_t>& source) {
  std::vector<std::size_t> aux;
  for (std::size_t i = 0; i < q.num_vars; ++i)
    if (q.registry[i].is_auxiliary()) aux.push_back(i);
  std::vector<std::uint8_t> x(q.num_vars, 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < q.num_vars; ++i)
    if (!q.registry[i].is_auxiliary()) x[i] = source[next++];
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t c = 0; c < (std::uint64_t{1} << aux.size()); ++c) {
    for (std::size_t k = 0; k < aux.size(); ++k) x[aux[k]] = (c >> k) & 1U;
    best = std::min(best, q.evaluate(x));
  }
  return best;
}

MultilinearPoly random_binary_quartic(Rng& rng, std::size_t nv, std::size_t terms) {
  MultilinearPoly p(nv, 2.0 * uniform01(rng) - 1.0);
  for (std::size_t t = 0; t < terms; ++t) {
    const std::size_t d = 1 + uniform_below(rng, 4);
    std::vector<VarIndex> v;
    while (v.size() < d) {
      const auto x = static_cast<VarIndex>(uniform_below(rng, nv));
      if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
    }
    p.add_term(Monomial(std::span<const VarIndex>(v)), std::round(20.0 * uniform01(rng) - 10.0));
  }
  return p;
}

}  // namespace

TEST(Binarization, Ranges) {
  const BinarizationScheme three{2, 1.0, 0.0};
  EXPECT_EQ(three.min_value(), 0.0);
  EXPECT_EQ(three.max_value(), 7.0);
  EXPECT_TRUE(three.covers(ValueDomain::integer(8)));
  EXPECT_FALSE((BinarizationScheme{1, 1.0, 0.0}).covers(ValueDomain::integer(8)));
  // The encoding formula with N = 3, C = -4 spans [-4, 11].
  const BinarizationScheme shifted{3, 1.0, -4.0};
  EXPECT_EQ(shifted.min_value(), -4.0);
  EXPECT_EQ(shifted.max_value(), 11.0);
  EXPECT_THROW((BinarizationScheme{2, 0.0, 0.0}).validate(), InvalidArgument);
}

TEST(Binarization, EncodeDecodeAllCodes) {
  const BinarizationScheme s{2, 1.0, 0.0};
  for (std::uint64_t c = 0; c < 8; ++c) {
    EXPECT_EQ(s.decode(c), static_cast<double>(c));
    EXPECT_EQ(s.encode(static_cast<double>(c)), c);
  }
}

TEST(BinaryQuartic, SingleBitEntries) {
  const auto inst = int_instance({{1}}, 1, 2);
  const BinaryQuartic bq = build_binary_quartic(inst, BinarizationScheme{0, 1.0, 0.0});
  ASSERT_EQ(bq.poly.num_vars(), 2u);
  for (int w = 0; w < 2; ++w)
    for (int h = 0; h < 2; ++h)
      EXPECT_EQ(bq.poly.evaluate(std::vector<double>{double(w), double(h)}),
                (1.0 - w * h) * (1.0 - w * h));
}

TEST(BinaryQuartic, NineExhaustive) {
  const auto inst = int_instance({{9}}, 1);
  const BinarizationScheme s{2, 1.0, 0.0};
  const BinaryQuartic bq = build_binary_quartic(inst, s);
  EXPECT_LE(bq.poly.degree(), 4u);
  for (std::uint64_t code = 0; code < 64; ++code) {
    const auto bits = oracle::bits_of(code, 6);
    const double w = bits[0] + 2 * bits[1] + 4 * bits[2];
    const double h = bits[3] + 2 * bits[4] + 4 * bits[5];
    EXPECT_EQ(bq.poly.evaluate(bits), (9 - w * h) * (9 - w * h));
  }
}

TEST(BinaryQuartic, DomainNotCovered) {
  const auto inst = int_instance({{1}}, 1, 8);
  EXPECT_THROW(build_binary_quartic(inst, BinarizationScheme{1, 1.0, 0.0}), DomainNotCovered);
}

TEST(Quadratize, GoldenQuartic) {
  const double a = 2.5;
  MultilinearPoly p(4);
  p.add_term(Monomial{0, 1, 2, 3}, a);
  for (double lambda : {7.0, 1.0 + a}) {
    const PenaltyPolicy policy =
        lambda == 7.0 ? PenaltyPolicy::global(7.0) : PenaltyPolicy::local_bound();
    const QuboModel q = quadratize(p, policy, {});
    ASSERT_EQ(q.num_vars, 6u);
    ASSERT_EQ(q.auxiliary_count(), 2u);
    // y1 = 4 replaces (q1, q2); y2 = 5 replaces (q3, q4).
    EXPECT_EQ(q.registry[4], BinaryVar::auxiliary(0, 1));
    EXPECT_EQ(q.registry[5], BinaryVar::auxiliary(2, 3));
    EXPECT_EQ(q.aux_penalty, (std::vector<double>{lambda, lambda}));
    EXPECT_EQ(q.quadratic_coeff(4, 5), a);
    EXPECT_EQ(q.linear[4], 3 * lambda);
    EXPECT_EQ(q.linear[5], 3 * lambda);
    EXPECT_EQ(q.quadratic_coeff(0, 1), lambda);
    EXPECT_EQ(q.quadratic_coeff(2, 3), lambda);
    EXPECT_EQ(q.quadratic_coeff(0, 4), -2 * lambda);
    EXPECT_EQ(q.quadratic_coeff(1, 4), -2 * lambda);
    EXPECT_EQ(q.quadratic_coeff(2, 5), -2 * lambda);
    EXPECT_EQ(q.quadratic_coeff(3, 5), -2 * lambda);
    EXPECT_EQ(q.quadratic.size(), 7u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(q.linear[i], 0.0);
    EXPECT_EQ(q.offset, 0.0);
    for (std::uint64_t c = 0; c < 16; ++c) {
      const auto main = to_bits(c, 4);
      const double want = a * main[0] * main[1] * main[2] * main[3];
      EXPECT_EQ(min_over_aux(q, main), want);
    }
  }
}

TEST(Quadratize, QuadraticUnchanged) {
  MultilinearPoly p(3, 1.5);
  p.add_term(Monomial{0}, 2.0);
  p.add_term(Monomial{0, 2}, -3.0);
  const QuboModel q = quadratize(p, PenaltyPolicy::local_bound(), {});
  EXPECT_EQ(q.auxiliary_count(), 0u);
  EXPECT_EQ(q.num_vars, 3u);
  EXPECT_EQ(q.to_poly(), p);
}

TEST(Quadratize, RandomMinEquivalence) {
  Rng rng(31);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_binary_quartic(rng, 8, 10);
    const QuboModel q = quadratize(p, PenaltyPolicy::local_bound(), {});
    ASSERT_LE(q.auxiliary_count(), 12u);
    for (std::uint64_t c = 0; c < 256; ++c) {
      const auto main = to_bits(c, 8);
      const auto x = oracle::bits_of(c, 8);
      EXPECT_NEAR(min_over_aux(q, main), p.evaluate(x), 1e-9);
      EXPECT_NEAR(q.evaluate(q.complete_assignment(main)), p.evaluate(x), 1e-9);
    }
  }
}

TEST(Quadratize, AuxiliariesReferenceEarlierVariables) {
  const auto inst = int_instance({{3, 5}, {2, 7}}, 2);
  const QuboModel q = build_qubo(inst, BinarizationScheme{2, 1.0, 0.0});
  for (std::size_t i = 0; i < q.num_vars; ++i)
    if (q.registry[i].is_auxiliary()) {
      EXPECT_LT(q.registry[i].a, q.registry[i].b);
      EXPECT_LT(q.registry[i].b, i);
    }
  for (const auto& [key, v] : q.quadratic) {
    EXPECT_LT(key.first, key.second);
    EXPECT_NE(v, 0.0);
  }
}

TEST(Quadratize, RejectsHighDegree) {
  MultilinearPoly p(5);
  p.add_term(Monomial{0, 1, 2, 3, 4}, 1.0);
  EXPECT_THROW(quadratize(p, PenaltyPolicy::local_bound(), {}), DegreeOverflow);
}

// Any assignment with some auxiliary different from the product of its pair
// costs at least 1 more than the consistent completion of the same source
// bits (the local-bound lambda exceeds the rewritten coefficient mass by 1).
TEST(Quadratize, PenaltyMargin) {
  for (double v : {0.0, 5.0, 12.0, 49.0}) {
    const auto inst = int_instance({{v}}, 1);
    const QuboModel q = build_qubo(inst, BinarizationScheme{2, 1.0, 0.0});
    const std::size_t main = q.source_bit_count();
    const std::size_t aux = q.auxiliary_count();
    ASSERT_LE(aux, 16u);
    for (std::uint64_t mc = 0; mc < (std::uint64_t{1} << main); ++mc) {
      const auto consistent = q.complete_assignment(to_bits(mc, main));
      const double base = q.evaluate(consistent);
      for (std::uint64_t ac = 0; ac < (std::uint64_t{1} << aux); ++ac) {
        auto x = consistent;
        std::size_t k = 0;
        for (std::size_t i = main; i < q.num_vars; ++i) x[i] = (ac >> k++) & 1U;
        bool inconsistent = false;
        for (std::size_t i = main; i < q.num_vars; ++i)
          inconsistent |= x[i] != (x[q.registry[i].a] & x[q.registry[i].b]);
        if (inconsistent) {
          EXPECT_GE(q.evaluate(x) - base, 1.0 - 1e-9);
        }
      }
    }
  }
}

TEST(Ising, SingleLinear) {
  QuboModel q(1);
  q.linear[0] = 2.0;
  const IsingModel e = qubo_to_ising(q);
  EXPECT_EQ(e.h[0], 1.0);
  EXPECT_EQ(e.offset, 1.0);
}

TEST(Ising, SingleQuadratic) {
  QuboModel q(2);
  q.add_quadratic(0, 1, 4.0);
  const IsingModel e = qubo_to_ising(q);
  EXPECT_EQ(e.J.at({0, 1}), 1.0);
  EXPECT_EQ(e.h[0], 1.0);
  EXPECT_EQ(e.h[1], 1.0);
  EXPECT_EQ(e.offset, 1.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const std::vector<std::uint8_t> qb{std::uint8_t(a), std::uint8_t(b)};
      const std::vector<int> s{2 * a - 1, 2 * b - 1};
      EXPECT_EQ(q.evaluate(qb), e.evaluate(s));
    }
}

TEST(Ising, RoundTripAndValues) {
  Rng rng(32);
  for (int t = 0; t < 5; ++t) {
    QuboModel q(10);
    q.offset = uniform01(rng);
    for (auto& u : q.linear) u = 4 * uniform01(rng) - 2;
    for (VarIndex i = 0; i < 10; ++i)
      for (VarIndex j = i + 1; j < 10; ++j)
        if (uniform01(rng) < 0.4) q.add_quadratic(i, j, 4 * uniform01(rng) - 2);
    const IsingModel e = qubo_to_ising(q);
    const QuboModel back = ising_to_qubo(e);
    EXPECT_NEAR(back.offset, q.offset, 1e-12);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(back.linear[i], q.linear[i], 1e-12);
    for (const auto& [k, v] : q.quadratic) EXPECT_NEAR(back.quadratic_coeff(k.first, k.second), v, 1e-12);
    for (std::uint64_t c = 0; c < 1024; ++c) {
      const auto bits = to_bits(c, 10);
      std::vector<int> s(10);
      for (std::size_t i = 0; i < 10; ++i) s[i] = 2 * bits[i] - 1;
      EXPECT_NEAR(e.evaluate(s), q.evaluate(bits), 1e-10);
    }
  }
}

TEST(DecodeBinary, Basics) {
  const BinarizationScheme s{2, 1.0, 0.0};
  const VariableLayout layout(1, 1, 1, false);
  std::vector<BinaryVar> reg;
  for (std::size_t src = 0; src < 2; ++src)
    for (int j = 0; j < 3; ++j) reg.push_back(BinaryVar::source_bit(src, j));
  const std::vector<std::uint8_t> zeros(6, 0);
  EXPECT_EQ(decode_binary(std::span<const std::uint8_t>(zeros), s, layout, reg).W(0, 0), 0.0);
  const std::vector<std::uint8_t> sevens{1, 1, 1, 0, 1, 0};
  const FactorPair f = decode_binary(std::span<const std::uint8_t>(sevens), s, layout, reg);
  EXPECT_EQ(f.W(0, 0), 7.0);
  EXPECT_EQ(f.H(0, 0), 2.0);
  EXPECT_THROW(decode_binary(std::span<const std::uint8_t>(sevens).first(5), s, layout, reg),
               DimensionMismatch);
}

TEST(DecodeBinary, EncodeRoundTrip) {
  const BinarizationScheme s{2, 1.0, 0.0};
  const auto inst = generate_case(CaseKind::IntegerPlanted, 2, 3, 2, ValueDomain::integer(8), 4, "e");
  const QuboModel q = build_qubo(inst, s);
  const VariableLayout layout(2, 3, 2, false);
  const auto src = encode_binary(*inst.planted, s, layout);
  const auto full = q.complete_assignment(src);
  const FactorPair f = decode_binary(std::span<const std::uint8_t>(full), s, layout, q.registry);
  EXPECT_EQ(f.W, inst.planted->W);
  EXPECT_EQ(f.H, inst.planted->H);
  EXPECT_EQ(q.evaluate(full), 0.0);
}

TEST(QuboBudget, TwoLevelsPerBit) {
  EXPECT_TRUE(check_qubo_budget(477).fits);
  EXPECT_FALSE(check_qubo_budget(478).fits);
}

TEST(QuboCounts, MainBitsClosedForm) {
  for (std::size_t s = 1; s <= 3; ++s) {
    const auto inst = generate_case(CaseKind::IntegerPlanted, s, s, s, ValueDomain::integer(8), 1, "c");
    const QuboModel q = build_qubo(inst, BinarizationScheme{2, 1.0, 0.0});
    EXPECT_EQ(q.source_bit_count(), 3 * s * (s + s));
    EXPECT_EQ(q.num_vars, q.source_bit_count() + q.auxiliary_count());
  }
}
