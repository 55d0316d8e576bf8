#ifndef NMF_ENERGY_QUARDP_HPP
#define NMF_ENERGY_QUARDP_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "instance.hpp"
#include "matrix.hpp"
#include "polynomial.hpp"

namespace nmf_energy {

enum class FactorSide { W, H };

struct LayoutEntry {
  FactorSide which = FactorSide::W;
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

/// Bijection between solver variables and factor entries. W entries come
/// first in row-major order, then H entries, then the optional slack.
class VariableLayout {
 public:
  VariableLayout() = default;

  VariableLayout(std::size_t n, std::size_t m, std::size_t p, bool with_slack)
      : n_(n), m_(m), p_(p), with_slack_(with_slack) {}

  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t p() const noexcept { return p_; }
  bool with_slack() const noexcept { return with_slack_; }

  std::size_t entry_count() const noexcept { return n_ * p_ + p_ * m_; }
  std::size_t total_vars() const noexcept {
    return entry_count() + (with_slack_ ? 1 : 0);
  }
  std::optional<std::size_t> slack_index() const noexcept {
    if (!with_slack_) return std::nullopt;
    return entry_count();
  }

  std::size_t w_index(std::size_t i, std::size_t k) const { return i * p_ + k; }
  std::size_t h_index(std::size_t k, std::size_t j) const {
    return n_ * p_ + k * m_ + j;
  }

  LayoutEntry entry(std::size_t var) const {
    if (var < n_ * p_) return {FactorSide::W, var / p_, var % p_};
    if (var < entry_count()) {
      const std::size_t r = var - n_ * p_;
      return {FactorSide::H, r / m_, r % m_};
    }
    throw InvalidArgument("VariableLayout::entry: " + std::to_string(var) +
                          " is not a factor entry");
  }

  /// Slack value is dropped; no clipping.
  FactorPair decode(std::span<const double> x) const {
    if (x.size() != total_vars())
      throw DimensionMismatch("decode: expected " +
                              std::to_string(total_vars()) + " values, got " +
                              std::to_string(x.size()));
    FactorPair f{Matrix(n_, p_), Matrix(p_, m_)};
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < p_; ++k) f.W(i, k) = x[w_index(i, k)];
    for (std::size_t k = 0; k < p_; ++k)
      for (std::size_t j = 0; j < m_; ++j) f.H(k, j) = x[h_index(k, j)];
    return f;
  }

  /// Slack (if any) is set to `slack_value`.
  std::vector<double> encode(const FactorPair& f,
                             double slack_value = 0.0) const {
    if (f.W.rows() != n_ || f.W.cols() != p_ || f.H.rows() != p_ ||
        f.H.cols() != m_)
      throw DimensionMismatch("encode: factor shapes do not match layout");
    std::vector<double> x(total_vars(), 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < p_; ++k) x[w_index(i, k)] = f.W(i, k);
    for (std::size_t k = 0; k < p_; ++k)
      for (std::size_t j = 0; j < m_; ++j) x[h_index(k, j)] = f.H(k, j);
    if (with_slack_) x[entry_count()] = slack_value;
    return x;
  }

  friend bool operator==(const VariableLayout&,
                         const VariableLayout&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t p_ = 0;
  bool with_slack_ = true;
};

/// Quartic objective whose value at any encoded (W, H) equals
/// ||V - WH||_F^2, including the constant sum of V_ij^2.
struct QuardpModel {
  MultilinearPoly poly;
  VariableLayout layout;
  double R = 0.0;
  std::string case_id;

  double evaluate(std::span<const double> x) const { return poly.evaluate(x); }
  FactorPair decode(std::span<const double> x) const {
    return layout.decode(x);
  }
};

/// Sum-constraint value: the number of factor entries, p(n + m).
inline double default_R(std::size_t n, std::size_t m, std::size_t p) {
  return static_cast<double>(p * (n + m));
}
inline double default_R(const ProblemInstance& inst) {
  return default_R(inst.n, inst.m, inst.p);
}

/// Symbolically expands sum_ij (V_ij - sum_k W_ik H_kj)^2 cell by cell.
inline QuardpModel build_quardp(const ProblemInstance& inst,
                                std::optional<double> R = std::nullopt) {
  if (inst.n == 0 || inst.m == 0 || inst.p == 0)
    throw InvalidArgument("build_quardp: dimensions must be positive");
  if (inst.V.rows() != inst.n || inst.V.cols() != inst.m)
    throw DimensionMismatch("build_quardp: V shape does not match (n, m)");

  QuardpModel model;
  model.layout = VariableLayout(inst.n, inst.m, inst.p, /*with_slack=*/true);
  model.R = R.value_or(default_R(inst));
  model.case_id = inst.case_id;

  const std::size_t nv = model.layout.total_vars();
  MultilinearPoly total(nv);
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      MultilinearPoly residual = MultilinearPoly::constant(nv, inst.V(i, j));
      for (std::size_t k = 0; k < inst.p; ++k) {
        const auto w = static_cast<VarIndex>(model.layout.w_index(i, k));
        const auto h = static_cast<VarIndex>(model.layout.h_index(k, j));
        residual.add_term(Monomial{w, h}, -1.0);
      }
      total += square(residual);
    }
  }
  model.poly = std::move(total);
  return model;
}

struct BudgetCheck {
  bool fits = true;
  std::size_t required = 0;
  std::size_t limit = 0;
  std::string detail;

  explicit operator bool() const noexcept { return fits; }
};

inline constexpr std::size_t kMaxQuarticVars = 39;
inline constexpr std::size_t kMaxDiscreteLevels = 954;

inline BudgetCheck check_variable_budget(std::size_t total_vars,
                                         std::size_t max_vars) {
  BudgetCheck out;
  out.required = total_vars;
  out.limit = max_vars;
  out.fits = total_vars <= max_vars;
  if (!out.fits)
    out.detail = std::to_string(total_vars) +
                 " variables (including slack) exceed the limit of " +
                 std::to_string(max_vars);
  return out;
}

/// Quartic-mode capacity check: p(n+m) + 1 <= max_vars.
inline BudgetCheck check_device_budget(const QuardpModel& model,
                                       std::size_t max_vars = kMaxQuarticVars) {
  return check_variable_budget(model.layout.total_vars(), max_vars);
}

inline BudgetCheck check_device_budget(std::size_t n, std::size_t m,
                                       std::size_t p,
                                       std::size_t max_vars = kMaxQuarticVars) {
  return check_variable_budget(p * (n + m) + 1, max_vars);
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_QUARDP_HPP
