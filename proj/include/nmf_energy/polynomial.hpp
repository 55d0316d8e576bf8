#ifndef NMF_ENERGY_POLYNOMIAL_HPP
#define NMF_ENERGY_POLYNOMIAL_HPP

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace nmf_energy {

inline constexpr std::size_t kMaxDegree = 5;

using VarIndex = std::uint32_t;

/// Sorted multiset of at most five variable indices. Repeats encode powers,
/// so x0^2 x3 is {0, 0, 3}.
class Monomial {
 public:
  Monomial() = default;

  Monomial(std::initializer_list<VarIndex> vars) {
    for (VarIndex v : vars) push(v);
    normalize();
  }

  explicit Monomial(std::span<const VarIndex> vars) {
    for (VarIndex v : vars) push(v);
    normalize();
  }

  std::size_t degree() const noexcept { return degree_; }
  std::span<const VarIndex> vars() const noexcept {
    return {vars_.data(), degree_};
  }
  VarIndex operator[](std::size_t i) const { return vars_[i]; }

  bool contains(VarIndex v) const noexcept {
    return std::find(vars_.begin(), vars_.begin() + degree_, v) !=
           vars_.begin() + degree_;
  }

  VarIndex max_var() const noexcept {
    return degree_ == 0 ? 0 : vars_[degree_ - 1];
  }

  /// Product of two monomials; the caller checks the degree first.
  friend Monomial operator*(const Monomial& a, const Monomial& b) {
    Monomial out;
    for (VarIndex v : a.vars()) out.push(v);
    for (VarIndex v : b.vars()) out.push(v);
    out.normalize();
    return out;
  }

  /// Same variables with repeats collapsed: q^k -> q for binary q.
  Monomial deduplicated() const {
    Monomial out = *this;
    auto* end = std::unique(out.vars_.begin(), out.vars_.begin() + degree_);
    out.degree_ =
        static_cast<std::uint8_t>(std::distance(out.vars_.begin(), end));
    std::fill(out.vars_.begin() + out.degree_, out.vars_.end(), VarIndex{0});
    return out;
  }

  bool is_multilinear() const noexcept {
    for (std::size_t i = 1; i < degree_; ++i)
      if (vars_[i] == vars_[i - 1]) return false;
    return true;
  }

  friend std::strong_ordering operator<=>(const Monomial& a,
                                          const Monomial& b) {
    if (auto c = a.degree_ <=> b.degree_; c != 0) return c;
    for (std::size_t i = 0; i < a.degree_; ++i)
      if (auto c = a.vars_[i] <=> b.vars_[i]; c != 0) return c;
    return std::strong_ordering::equal;
  }
  friend bool operator==(const Monomial& a, const Monomial& b) {
    return (a <=> b) == 0;
  }

 private:
  void push(VarIndex v) {
    if (degree_ >= kMaxDegree)
      throw DegreeOverflow("monomial degree exceeds " +
                           std::to_string(kMaxDegree));
    vars_[degree_++] = v;
  }
  void normalize() { std::sort(vars_.begin(), vars_.begin() + degree_); }

  std::array<VarIndex, kMaxDegree> vars_{};
  std::uint8_t degree_ = 0;
};

enum class OverflowPolicy { Throw, Truncate };

/// Sparse polynomial of degree <= 5 over indexed variables plus a constant
/// offset. Zero coefficients are never stored.
class MultilinearPoly {
 public:
  using TermMap = std::map<Monomial, double>;

  MultilinearPoly() = default;
  explicit MultilinearPoly(std::size_t num_vars, double offset = 0.0)
      : num_vars_(num_vars), offset_(offset) {}

  static MultilinearPoly constant(std::size_t num_vars, double c) {
    return MultilinearPoly(num_vars, c);
  }

  static MultilinearPoly variable(std::size_t num_vars, VarIndex v,
                                  double coeff = 1.0) {
    MultilinearPoly p(num_vars);
    p.add_term(Monomial{v}, coeff);
    return p;
  }

  std::size_t num_vars() const noexcept { return num_vars_; }
  double offset() const noexcept { return offset_; }
  const TermMap& terms() const noexcept { return terms_; }
  std::size_t term_count() const noexcept { return terms_.size(); }

  void set_offset(double c) noexcept { offset_ = c; }
  void add_offset(double c) noexcept { offset_ += c; }

  /// Widens the variable range; never shrinks it.
  void resize(std::size_t num_vars) {
    if (num_vars < num_vars_)
      throw InvalidArgument("MultilinearPoly::resize cannot drop variables");
    num_vars_ = num_vars;
  }

  void add_term(const Monomial& mono, double coeff) {
    if (mono.degree() == 0) {
      offset_ += coeff;
      return;
    }
    if (mono.max_var() >= num_vars_)
      throw InvalidArgument("term references variable " +
                            std::to_string(mono.max_var()) + " >= num_vars " +
                            std::to_string(num_vars_));
    if (coeff == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(mono, coeff);
    if (!inserted) {
      it->second += coeff;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  double coefficient(const Monomial& mono) const {
    if (mono.degree() == 0) return offset_;
    auto it = terms_.find(mono);
    return it == terms_.end() ? 0.0 : it->second;
  }

  std::size_t degree() const noexcept {
    std::size_t d = 0;
    for (const auto& [mono, c] : terms_) d = std::max(d, mono.degree());
    return d;
  }

  bool uses_variable(VarIndex v) const {
    for (const auto& [mono, c] : terms_)
      if (mono.contains(v)) return true;
    return false;
  }

  double evaluate(std::span<const double> x) const {
    if (x.size() != num_vars_)
      throw DimensionMismatch("evaluate: expected " +
                              std::to_string(num_vars_) + " values, got " +
                              std::to_string(x.size()));
    double sum = offset_;
    for (const auto& [mono, c] : terms_) {
      double prod = c;
      for (VarIndex v : mono.vars()) prod *= x[v];
      sum += prod;
    }
    return sum;
  }

  MultilinearPoly& operator+=(const MultilinearPoly& other) {
    num_vars_ = std::max(num_vars_, other.num_vars_);
    offset_ += other.offset_;
    for (const auto& [mono, c] : other.terms_) add_term(mono, c);
    return *this;
  }

  MultilinearPoly& operator-=(const MultilinearPoly& other) {
    num_vars_ = std::max(num_vars_, other.num_vars_);
    offset_ -= other.offset_;
    for (const auto& [mono, c] : other.terms_) add_term(mono, -c);
    return *this;
  }

  MultilinearPoly& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      offset_ = 0.0;
      return *this;
    }
    offset_ *= s;
    for (auto& [mono, c] : terms_) c *= s;
    return *this;
  }

  friend MultilinearPoly operator+(MultilinearPoly a,
                                   const MultilinearPoly& b) {
    return a += b;
  }
  friend MultilinearPoly operator-(MultilinearPoly a,
                                   const MultilinearPoly& b) {
    return a -= b;
  }
  friend MultilinearPoly operator*(MultilinearPoly a, double s) {
    return a *= s;
  }
  friend MultilinearPoly operator*(double s, MultilinearPoly a) {
    return a *= s;
  }

  friend bool operator==(const MultilinearPoly&,
                         const MultilinearPoly&) = default;

 private:
  std::size_t num_vars_ = 0;
  double offset_ = 0.0;
  TermMap terms_;
};

/// Exact product. Products above degree 5 throw unless `policy` is Truncate,
/// in which case those terms are dropped.
inline MultilinearPoly multiply(const MultilinearPoly& a,
                                const MultilinearPoly& b,
                                OverflowPolicy policy = OverflowPolicy::Throw) {
  MultilinearPoly out(std::max(a.num_vars(), b.num_vars()),
                      a.offset() * b.offset());
  auto accumulate = [&](const Monomial& mono, double c) {
    if (c != 0.0) out.add_term(mono, c);
  };
  if (b.offset() != 0.0)
    for (const auto& [mono, c] : a.terms()) accumulate(mono, c * b.offset());
  if (a.offset() != 0.0)
    for (const auto& [mono, c] : b.terms()) accumulate(mono, c * a.offset());
  for (const auto& [ma, ca] : a.terms()) {
    for (const auto& [mb, cb] : b.terms()) {
      if (ma.degree() + mb.degree() > kMaxDegree) {
        if (policy == OverflowPolicy::Throw)
          throw DegreeOverflow("multiply: product degree " +
                               std::to_string(ma.degree() + mb.degree()) +
                               " exceeds " + std::to_string(kMaxDegree));
        continue;
      }
      accumulate(ma * mb, ca * cb);
    }
  }
  return out;
}

inline MultilinearPoly operator*(const MultilinearPoly& a,
                                 const MultilinearPoly& b) {
  return multiply(a, b);
}

inline MultilinearPoly square(const MultilinearPoly& a) { return a * a; }

/// Binary-variable reduction q^k -> q, merging the terms that collide.
inline MultilinearPoly idempotent_reduce(const MultilinearPoly& poly) {
  MultilinearPoly out(poly.num_vars(), poly.offset());
  for (const auto& [mono, c] : poly.terms())
    out.add_term(mono.deduplicated(), c);
  return out;
}

/// Flat, index-based view of a polynomial for the inner loops of the solvers.
/// Supports full evaluation and incremental deltas for changes of one or two
/// variables.
class CompiledPoly {
 public:
  CompiledPoly() = default;

  explicit CompiledPoly(const MultilinearPoly& poly)
      : num_vars_(poly.num_vars()), offset_(poly.offset()) {
    incidence_.resize(num_vars_);
    for (const auto& [mono, c] : poly.terms()) {
      const auto t = static_cast<std::uint32_t>(coeffs_.size());
      coeffs_.push_back(c);
      starts_.push_back(static_cast<std::uint32_t>(vars_.size()));
      VarIndex prev = static_cast<VarIndex>(-1);
      for (VarIndex v : mono.vars()) {
        vars_.push_back(v);
        if (v != prev) incidence_[v].push_back(t);
        prev = v;
      }
    }
    starts_.push_back(static_cast<std::uint32_t>(vars_.size()));
    stamp_.assign(coeffs_.size(), 0);
  }

  std::size_t num_vars() const noexcept { return num_vars_; }
  std::size_t term_count() const noexcept { return coeffs_.size(); }

  double evaluate(std::span<const double> x) const {
    double sum = offset_;
    for (std::size_t t = 0; t < coeffs_.size(); ++t) sum += term_value(t, x);
    return sum;
  }

  /// Energy change when x[var] becomes `value`; x itself is left unchanged.
  double delta(std::span<double> x, VarIndex var, double value) const {
    const double old = x[var];
    double before = 0.0;
    for (auto t : incidence_[var]) before += term_value(t, x);
    x[var] = value;
    double after = 0.0;
    for (auto t : incidence_[var]) after += term_value(t, x);
    x[var] = old;
    return after - before;
  }

  /// Energy change when x[a] and x[b] change together (a != b).
  double delta(std::span<double> x, VarIndex a, double va, VarIndex b,
               double vb) {
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
    touched_.clear();
    for (auto t : incidence_[a]) {
      stamp_[t] = epoch_;
      touched_.push_back(t);
    }
    for (auto t : incidence_[b])
      if (stamp_[t] != epoch_) touched_.push_back(t);
    const double oa = x[a];
    const double ob = x[b];
    double before = 0.0;
    for (auto t : touched_) before += term_value(t, x);
    x[a] = va;
    x[b] = vb;
    double after = 0.0;
    for (auto t : touched_) after += term_value(t, x);
    x[a] = oa;
    x[b] = ob;
    return after - before;
  }

  std::span<const std::uint32_t> terms_of(VarIndex v) const {
    return incidence_[v];
  }

 private:
  double term_value(std::size_t t, std::span<const double> x) const {
    double prod = coeffs_[t];
    for (auto i = starts_[t]; i < starts_[t + 1]; ++i) prod *= x[vars_[i]];
    return prod;
  }

  std::size_t num_vars_ = 0;
  double offset_ = 0.0;
  std::vector<double> coeffs_;
  std::vector<std::uint32_t> starts_;
  std::vector<VarIndex> vars_;
  std::vector<std::vector<std::uint32_t>> incidence_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> touched_;
  std::uint32_t epoch_ = 0;
};

}  // namespace nmf_energy

#endif  // NMF_ENERGY_POLYNOMIAL_HPP
