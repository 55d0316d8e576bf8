#ifndef NMF_ENERGY_INSTANCE_HPP
#define NMF_ENERGY_INSTANCE_HPP

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace nmf_energy {

struct ValueDomain {
  enum class Kind { Continuous, Integer };

  Kind kind = Kind::Continuous;
  double low = 0.0;   // continuous: half-open [low, high)
  double high = 1.0;
  int levels = 0;     // integer: values 0..levels-1

  static ValueDomain continuous(double low = 0.0, double high = 1.0) {
    return {Kind::Continuous, low, high, 0};
  }
  static ValueDomain integer(int levels) {
    return {Kind::Integer, 0.0, 0.0, levels};
  }

  bool is_integer() const noexcept { return kind == Kind::Integer; }

  friend bool operator==(const ValueDomain&, const ValueDomain&) = default;
};

enum class CaseKind { ContinuousPlanted, ContinuousRaw, IntegerPlanted, IntegerRaw };

inline std::string_view to_string(CaseKind k) {
  switch (k) {
    case CaseKind::ContinuousPlanted: return "continuous_planted";
    case CaseKind::ContinuousRaw: return "continuous_raw";
    case CaseKind::IntegerPlanted: return "integer_planted";
    case CaseKind::IntegerRaw: return "integer_raw";
  }
  return "?";
}

inline CaseKind parse_case_kind(std::string_view s) {
  if (s == "continuous_planted") return CaseKind::ContinuousPlanted;
  if (s == "continuous_raw") return CaseKind::ContinuousRaw;
  if (s == "integer_planted") return CaseKind::IntegerPlanted;
  if (s == "integer_raw") return CaseKind::IntegerRaw;
  throw InvalidArgument("unknown case kind '" + std::string(s) + "'");
}

struct ProblemInstance {
  Matrix V;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t p = 0;
  ValueDomain domain;
  std::optional<FactorPair> planted;
  std::string case_id;
  std::uint64_t seed = 0;

  friend bool operator==(const ProblemInstance&,
                         const ProblemInstance&) = default;
};

/// Rounds to two decimals, ties to even (the default FE_TONEAREST mode).
inline double round_hundredth(double x) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(x * 100.0) / 100.0;
  std::fesetround(saved);
  return r;
}

namespace detail {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                            const ValueDomain& dom) {
  Matrix out(rows, cols);
  for (double& v : out.values()) {
    if (dom.is_integer())
      v = static_cast<double>(
          uniform_below(rng, static_cast<std::uint64_t>(dom.levels)));
    else
      v = round_hundredth(dom.low + (dom.high - dom.low) * uniform01(rng));
  }
  return out;
}

}  // namespace detail

/// Builds one test case. The stream depends only on (seed, case_id, kind,
/// dims), so cases can be generated in any order or in parallel.
///
/// Planted kinds draw W and H, round them (continuous) and set V = WH without
/// re-rounding the product. Raw kinds draw V directly.
inline ProblemInstance generate_case(CaseKind kind, std::size_t n,
                                     std::size_t m, std::size_t p,
                                     const ValueDomain& domain,
                                     std::uint64_t seed,
                                     std::string case_id) {
  if (n == 0 || m == 0 || p == 0)
    throw InvalidArgument("generate_case: dimensions must be positive");
  const bool integer_kind =
      kind == CaseKind::IntegerPlanted || kind == CaseKind::IntegerRaw;
  if (integer_kind != domain.is_integer())
    throw InvalidArgument("generate_case: domain does not match case kind");
  if (integer_kind && domain.levels < 2)
    throw InvalidArgument("generate_case: integer kinds need levels >= 2");
  if (!integer_kind && !(domain.high > domain.low))
    throw InvalidArgument("generate_case: empty continuous interval");

  const std::string key = case_id + "|" + std::string(to_string(kind)) + "|" +
                          std::to_string(n) + "x" + std::to_string(m) + "x" +
                          std::to_string(p);
  Rng rng(derive_seed(seed, key));

  ProblemInstance inst;
  inst.n = n;
  inst.m = m;
  inst.p = p;
  inst.domain = domain;
  inst.case_id = std::move(case_id);
  inst.seed = seed;

  if (kind == CaseKind::ContinuousPlanted || kind == CaseKind::IntegerPlanted) {
    FactorPair f;
    f.W = detail::random_matrix(rng, n, p, domain);
    f.H = detail::random_matrix(rng, p, m, domain);
    inst.V = matmul(f.W, f.H);
    inst.planted = std::move(f);
  } else {
    inst.V = detail::random_matrix(rng, n, m, domain);
  }
  return inst;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_INSTANCE_HPP
