#ifndef NMF_ENERGY_QUBO_HPP
#define NMF_ENERGY_QUBO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "error.hpp"
#include "instance.hpp"
#include "polynomial.hpp"
#include "quardp.hpp"

namespace nmf_energy {

/// Bit expansion x = kappa * sum_{j=0..N} 2^j q_j + C. The representable
/// values are C + kappa * t for t = 0 .. 2^(N+1) - 1.
struct BinarizationScheme {
  int N = 2;
  double kappa = 1.0;
  double C = 0.0;

  std::size_t bits() const noexcept { return static_cast<std::size_t>(N) + 1; }
  std::uint64_t code_count() const noexcept { return std::uint64_t{1} << bits(); }
  double min_value() const noexcept { return C; }
  double max_value() const noexcept {
    return C + kappa * static_cast<double>(code_count() - 1);
  }

  void validate() const {
    if (N < 0 || N > 30)
      throw InvalidArgument("BinarizationScheme: N must be in [0, 30]");
    if (!(kappa > 0.0))
      throw InvalidArgument("BinarizationScheme: kappa must be positive");
  }

  double decode(std::uint64_t code) const {
    return kappa * static_cast<double>(code) + C;
  }

  /// Nearest code for a value, clamped to the representable range.
  std::uint64_t encode(double value) const {
    const double t = std::round((value - C) / kappa);
    if (t <= 0.0) return 0;
    const auto top = static_cast<double>(code_count() - 1);
    return static_cast<std::uint64_t>(std::min(t, top));
  }

  bool covers(const ValueDomain& dom) const {
    if (dom.is_integer()) {
      for (int v = 0; v < dom.levels; ++v) {
        const double t = (v - C) / kappa;
        if (t < 0.0 || t > static_cast<double>(code_count() - 1) ||
            std::abs(t - std::round(t)) > 1e-9)
          return false;
      }
      return true;
    }
    return min_value() <= dom.low && max_value() >= dom.high;
  }

  friend bool operator==(const BinarizationScheme&,
                         const BinarizationScheme&) = default;
};

/// Provenance of one binary variable.
struct BinaryVar {
  enum class Kind { SourceBit, Auxiliary };

  Kind kind = Kind::SourceBit;
  std::size_t source = 0;  // SourceBit: layout index of the W/H entry
  int bit = 0;             // SourceBit: bit position j
  VarIndex a = 0;          // Auxiliary: replaced pair (a, b), a < b
  VarIndex b = 0;

  static BinaryVar source_bit(std::size_t source, int bit) {
    return {Kind::SourceBit, source, bit, 0, 0};
  }
  static BinaryVar auxiliary(VarIndex a, VarIndex b) {
    return {Kind::Auxiliary, 0, 0, std::min(a, b), std::max(a, b)};
  }
  bool is_auxiliary() const noexcept { return kind == Kind::Auxiliary; }

  friend bool operator==(const BinaryVar&, const BinaryVar&) = default;
};

struct BinaryQuartic {
  MultilinearPoly poly;
  std::vector<BinaryVar> registry;
  VariableLayout layout;  // no slack
  BinarizationScheme scheme;

  VarIndex bit_var(std::size_t source, int bit) const {
    return static_cast<VarIndex>(source * scheme.bits() +
                                 static_cast<std::size_t>(bit));
  }
};

/// Replaces every W/H entry by its bit expansion, expands the squared
/// Frobenius objective and applies q^k -> q.
inline BinaryQuartic build_binary_quartic(const ProblemInstance& inst,
                                          const BinarizationScheme& scheme) {
  scheme.validate();
  if (!scheme.covers(inst.domain))
    throw DomainNotCovered(
        "build_binary_quartic: scheme range [" +
        std::to_string(scheme.min_value()) + ", " +
        std::to_string(scheme.max_value()) +
        "] does not cover the instance value domain");

  BinaryQuartic out;
  out.scheme = scheme;
  out.layout = VariableLayout(inst.n, inst.m, inst.p, /*with_slack=*/false);
  const std::size_t bits = scheme.bits();
  const std::size_t nv = out.layout.entry_count() * bits;
  out.registry.reserve(nv);
  for (std::size_t s = 0; s < out.layout.entry_count(); ++s)
    for (std::size_t j = 0; j < bits; ++j)
      out.registry.push_back(BinaryVar::source_bit(s, static_cast<int>(j)));

  auto expansion = [&](std::size_t source) {
    MultilinearPoly e = MultilinearPoly::constant(nv, scheme.C);
    for (std::size_t j = 0; j < bits; ++j)
      e.add_term(Monomial{out.bit_var(source, static_cast<int>(j))},
                 scheme.kappa * std::ldexp(1.0, static_cast<int>(j)));
    return e;
  };

  MultilinearPoly total(nv);
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      MultilinearPoly residual = MultilinearPoly::constant(nv, inst.V(i, j));
      for (std::size_t k = 0; k < inst.p; ++k)
        residual -= expansion(out.layout.w_index(i, k)) *
                    expansion(out.layout.h_index(k, j));
      total += idempotent_reduce(square(residual));
    }
  }
  out.poly = idempotent_reduce(total);
  return out;
}

/// Quadratic binary model: offset + sum u_i q_i + sum_{i<j} v_ij q_i q_j.
struct QuboModel {
  using PairKey = std::pair<VarIndex, VarIndex>;

  std::size_t num_vars = 0;
  std::vector<double> linear;
  std::map<PairKey, double> quadratic;  // keys strictly i < j
  double offset = 0.0;
  std::vector<BinaryVar> registry;
  std::vector<double> aux_penalty;  // lambda used for each auxiliary, in order

  QuboModel() = default;
  explicit QuboModel(std::size_t n) : num_vars(n), linear(n, 0.0) {}

  void add_linear(VarIndex i, double c) { linear.at(i) += c; }

  void add_quadratic(VarIndex i, VarIndex j, double c) {
    if (i == j) {
      add_linear(i, c);
      return;
    }
    if (i > j) std::swap(i, j);
    if (j >= num_vars) throw InvalidArgument("add_quadratic: index out of range");
    if (c == 0.0) return;
    auto [it, inserted] = quadratic.try_emplace(PairKey{i, j}, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) quadratic.erase(it);
    }
  }

  double quadratic_coeff(VarIndex i, VarIndex j) const {
    if (i > j) std::swap(i, j);
    auto it = quadratic.find({i, j});
    return it == quadratic.end() ? 0.0 : it->second;
  }

  std::size_t auxiliary_count() const {
    return static_cast<std::size_t>(
        std::count_if(registry.begin(), registry.end(),
                      [](const BinaryVar& v) { return v.is_auxiliary(); }));
  }
  std::size_t source_bit_count() const {
    return registry.size() - auxiliary_count();
  }

  double penalty() const {
    return aux_penalty.empty()
               ? 0.0
               : *std::max_element(aux_penalty.begin(), aux_penalty.end());
  }

  template <typename T>
  double evaluate(std::span<const T> q) const {
    if (q.size() != num_vars)
      throw DimensionMismatch("QuboModel::evaluate: expected " +
                              std::to_string(num_vars) + " values, got " +
                              std::to_string(q.size()));
    double e = offset;
    for (std::size_t i = 0; i < num_vars; ++i)
      if (q[i]) e += linear[i];
    for (const auto& [key, v] : quadratic)
      if (q[key.first] && q[key.second]) e += v;
    return e;
  }
  double evaluate(const std::vector<std::uint8_t>& q) const {
    return evaluate(std::span<const std::uint8_t>(q));
  }

  /// Extends an assignment of the source bits so that every auxiliary equals
  /// the product of its pair. Auxiliaries only reference earlier variables.
  std::vector<std::uint8_t> complete_assignment(
      std::span<const std::uint8_t> source_bits) const {
    std::vector<std::uint8_t> q(num_vars, 0);
    std::size_t next = 0;
    for (std::size_t i = 0; i < num_vars; ++i) {
      if (i < registry.size() && registry[i].is_auxiliary())
        q[i] = q[registry[i].a] & q[registry[i].b];
      else
        q[i] = source_bits[next++];
    }
    return q;
  }

  /// Generic polynomial view (degree <= 2).
  MultilinearPoly to_poly() const {
    MultilinearPoly p(num_vars, offset);
    for (std::size_t i = 0; i < num_vars; ++i)
      p.add_term(Monomial{static_cast<VarIndex>(i)}, linear[i]);
    for (const auto& [key, v] : quadratic)
      p.add_term(Monomial{key.first, key.second}, v);
    return p;
  }
};

/// Ising model: offset + sum h_i s_i + sum_{i<j} J_ij s_i s_j, s in {-1,+1}.
struct IsingModel {
  std::size_t num_vars = 0;
  std::vector<double> h;
  std::map<QuboModel::PairKey, double> J;
  double offset = 0.0;

  double evaluate(std::span<const int> spins) const {
    if (spins.size() != num_vars)
      throw DimensionMismatch("IsingModel::evaluate: wrong spin count");
    double e = offset;
    for (std::size_t i = 0; i < num_vars; ++i) e += h[i] * spins[i];
    for (const auto& [key, c] : J) e += c * spins[key.first] * spins[key.second];
    return e;
  }
};

/// q = (s + 1) / 2, so F(q) equals the Ising energy including its offset.
inline IsingModel qubo_to_ising(const QuboModel& q) {
  IsingModel out;
  out.num_vars = q.num_vars;
  out.h.assign(q.num_vars, 0.0);
  out.offset = q.offset;
  for (std::size_t i = 0; i < q.num_vars; ++i) {
    out.h[i] += q.linear[i] / 2.0;
    out.offset += q.linear[i] / 2.0;
  }
  for (const auto& [key, v] : q.quadratic) {
    const double quarter = v / 4.0;
    out.J[key] += quarter;
    out.h[key.first] += quarter;
    out.h[key.second] += quarter;
    out.offset += quarter;
  }
  return out;
}

/// s = 2q - 1. The registry is not carried by the Ising side.
inline QuboModel ising_to_qubo(const IsingModel& e) {
  QuboModel out(e.num_vars);
  out.offset = e.offset;
  for (std::size_t i = 0; i < e.num_vars; ++i) {
    out.linear[i] += 2.0 * e.h[i];
    out.offset -= e.h[i];
  }
  for (const auto& [key, c] : e.J) {
    out.add_quadratic(key.first, key.second, 4.0 * c);
    out.linear[key.first] -= 2.0 * c;
    out.linear[key.second] -= 2.0 * c;
    out.offset += c;
  }
  return out;
}

struct PenaltyPolicy {
  enum class Mode { LocalBound, Global };

  Mode mode = Mode::LocalBound;
  double global_lambda = 0.0;

  static PenaltyPolicy local_bound() { return {}; }
  static PenaltyPolicy global(double lambda) {
    if (!(lambda > 0.0))
      throw InvalidArgument("PenaltyPolicy: lambda must be positive");
    return {Mode::Global, lambda};
  }
};

namespace detail {

/// Working set for pair substitution over the terms of degree >= 3.
class PairReducer {
 public:
  using Pair = std::pair<VarIndex, VarIndex>;

  struct Term {
    std::vector<VarIndex> vars;  // sorted, distinct
    double coeff = 0.0;
  };

  void add(std::vector<VarIndex> vars, double coeff) {
    const auto id = static_cast<std::uint32_t>(terms_.size());
    terms_.push_back({std::move(vars), coeff});
    attach(id);
  }

  bool empty() const { return ranking_.empty(); }

  /// Most frequent pair; ties go to the lexicographically smallest (a, b).
  Pair best() const {
    const auto& top = *ranking_.begin();
    return {std::get<1>(top), std::get<2>(top)};
  }

  /// Substitutes y for a*b in every live term containing the pair. Terms that
  /// drop to degree 2 are handed to `emit`. Returns the sum of |coeff| of the
  /// rewritten terms.
  template <typename Emit>
  double substitute(Pair pr, VarIndex y, Emit&& emit) {
    const std::vector<std::uint32_t> ids(occurrences_[pr].begin(),
                                         occurrences_[pr].end());
    double mass = 0.0;
    for (auto id : ids) {
      detach(id);
      Term& t = terms_[id];
      mass += std::abs(t.coeff);
      std::vector<VarIndex> next;
      next.reserve(t.vars.size() - 1);
      for (VarIndex v : t.vars)
        if (v != pr.first && v != pr.second) next.push_back(v);
      next.push_back(y);
      std::sort(next.begin(), next.end());
      t.vars = std::move(next);
      if (t.vars.size() <= 2)
        emit(t.vars, t.coeff);
      else
        attach(id);
    }
    return mass;
  }

 private:
  using Rank = std::tuple<long, VarIndex, VarIndex>;

  template <typename F>
  static void for_pairs(const std::vector<VarIndex>& v, F&& f) {
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = i + 1; j < v.size(); ++j) f(Pair{v[i], v[j]});
  }

  void bump(const Pair& pr, std::uint32_t id, bool add) {
    auto& occ = occurrences_[pr];
    if (!occ.empty())
      ranking_.erase(Rank{-static_cast<long>(occ.size()), pr.first, pr.second});
    if (add)
      occ.insert(id);
    else
      occ.erase(id);
    if (!occ.empty())
      ranking_.insert(Rank{-static_cast<long>(occ.size()), pr.first, pr.second});
    else
      occurrences_.erase(pr);
  }

  void attach(std::uint32_t id) {
    for_pairs(terms_[id].vars, [&](const Pair& pr) { bump(pr, id, true); });
  }
  void detach(std::uint32_t id) {
    for_pairs(terms_[id].vars, [&](const Pair& pr) { bump(pr, id, false); });
  }

  std::vector<Term> terms_;
  std::map<Pair, std::set<std::uint32_t>> occurrences_;
  std::set<Rank> ranking_;
};

}  // namespace detail

/// Reduces a binary polynomial of degree <= 4 to a QUBO. While a term of
/// degree >= 3 remains, the most frequent variable pair (a, b) among those
/// terms is replaced by a fresh auxiliary y and the penalty
///   lambda * (q_a q_b - 2 q_a y - 2 q_b y + 3 y)
/// is added. The penalty is zero iff y = q_a q_b and at least 1 otherwise.
///
/// `source_registry` describes the incoming variables; when empty, each is
/// recorded as bit 0 of itself.
inline QuboModel quadratize(const MultilinearPoly& poly,
                            const PenaltyPolicy& policy = {},
                            std::vector<BinaryVar> source_registry = {}) {
  const MultilinearPoly reduced = idempotent_reduce(poly);
  if (reduced.degree() > 4)
    throw DegreeOverflow("quadratize: input degree " +
                         std::to_string(reduced.degree()) + " exceeds 4");
  if (source_registry.empty())
    for (std::size_t i = 0; i < reduced.num_vars(); ++i)
      source_registry.push_back(BinaryVar::source_bit(i, 0));
  if (source_registry.size() != reduced.num_vars())
    throw DimensionMismatch("quadratize: registry size does not match");

  // Low-degree part accumulates as (vars, coeff); packed at the end once the
  // final variable count is known.
  std::vector<std::pair<std::vector<VarIndex>, double>> low;
  detail::PairReducer reducer;
  for (const auto& [mono, c] : reduced.terms()) {
    std::vector<VarIndex> vars(mono.vars().begin(), mono.vars().end());
    if (vars.size() <= 2)
      low.emplace_back(std::move(vars), c);
    else
      reducer.add(std::move(vars), c);
  }

  std::vector<BinaryVar> registry = std::move(source_registry);
  std::vector<double> penalties;
  auto next_var = static_cast<VarIndex>(reduced.num_vars());
  while (!reducer.empty()) {
    const auto pr = reducer.best();
    const VarIndex y = next_var++;
    const double mass = reducer.substitute(
        pr, y, [&](const std::vector<VarIndex>& v, double c) {
          low.emplace_back(v, c);
        });
    const double lambda = policy.mode == PenaltyPolicy::Mode::Global
                              ? policy.global_lambda
                              : 1.0 + mass;
    registry.push_back(BinaryVar::auxiliary(pr.first, pr.second));
    penalties.push_back(lambda);
    low.push_back({{pr.first, pr.second}, lambda});
    low.push_back({{pr.first, y}, -2.0 * lambda});
    low.push_back({{pr.second, y}, -2.0 * lambda});
    low.push_back({{y}, 3.0 * lambda});
  }

  QuboModel out(next_var);
  out.offset = reduced.offset();
  for (const auto& [vars, c] : low) {
    if (vars.size() == 1)
      out.add_linear(vars[0], c);
    else
      out.add_quadratic(vars[0], vars[1], c);
  }
  out.registry = std::move(registry);
  out.aux_penalty = std::move(penalties);
  return out;
}

/// Full pipeline: binarize the instance and quadratize the result.
inline QuboModel build_qubo(const ProblemInstance& inst,
                            const BinarizationScheme& scheme,
                            const PenaltyPolicy& policy = {}) {
  BinaryQuartic quartic = build_binary_quartic(inst, scheme);
  return quadratize(quartic.poly, policy, std::move(quartic.registry));
}

/// Rebuilds (W, H) from the source bits of an assignment; auxiliaries are
/// ignored.
template <typename T>
FactorPair decode_binary(std::span<const T> assignment,
                         const BinarizationScheme& scheme,
                         const VariableLayout& layout,
                         std::span<const BinaryVar> registry) {
  if (assignment.size() != registry.size())
    throw DimensionMismatch("decode_binary: assignment has " +
                            std::to_string(assignment.size()) +
                            " bits, registry has " +
                            std::to_string(registry.size()));
  std::vector<double> values(layout.total_vars(), 0.0);
  std::vector<std::uint64_t> codes(layout.entry_count(), 0);
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const BinaryVar& v = registry[i];
    if (v.is_auxiliary() || !assignment[i]) continue;
    if (v.source >= codes.size())
      throw InvalidArgument("decode_binary: registry source out of range");
    codes[v.source] |= std::uint64_t{1} << v.bit;
  }
  for (std::size_t s = 0; s < codes.size(); ++s)
    values[s] = scheme.decode(codes[s]);
  return layout.decode(values);
}

/// Source-bit assignment (no auxiliaries) encoding the given factors.
inline std::vector<std::uint8_t> encode_binary(const FactorPair& f,
                                               const BinarizationScheme& scheme,
                                               const VariableLayout& layout) {
  const std::vector<double> values = layout.encode(f);
  std::vector<std::uint8_t> bits(layout.entry_count() * scheme.bits(), 0);
  for (std::size_t s = 0; s < layout.entry_count(); ++s) {
    const std::uint64_t code = scheme.encode(values[s]);
    for (std::size_t j = 0; j < scheme.bits(); ++j)
      bits[s * scheme.bits() + j] = static_cast<std::uint8_t>((code >> j) & 1U);
  }
  return bits;
}

/// Each binary variable occupies two levels of the discrete-mode budget.
inline BudgetCheck check_qubo_budget(std::size_t num_vars,
                                     std::size_t max_levels = kMaxDiscreteLevels) {
  BudgetCheck out;
  out.required = 2 * num_vars;
  out.limit = max_levels;
  out.fits = out.required <= max_levels;
  if (!out.fits)
    out.detail = std::to_string(num_vars) + " binary variables need " +
                 std::to_string(out.required) + " levels, limit " +
                 std::to_string(max_levels);
  return out;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_QUBO_HPP
