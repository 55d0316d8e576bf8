#ifndef NMF_ENERGY_STATS_HPP
#define NMF_ENERGY_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "error.hpp"

namespace nmf_energy {

/// Lower-middle element for even counts.
inline double median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("median: empty input");
  std::vector<double> s(values.begin(), values.end());
  const std::size_t mid = (s.size() - 1) / 2;
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid), s.end());
  return s[mid];
}

struct MedianMad {
  double median = 0.0;
  double mad = 0.0;
};

inline MedianMad median_mad(std::span<const double> values) {
  MedianMad out;
  out.median = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - out.median));
  out.mad = median(dev);
  return out;
}

inline constexpr std::uint64_t kExactBinomialLimit = 1000;

/// One-sided sign test: P(X >= n_b) for X ~ Binomial(n_b + n_w, 1/2).
inline double binomial_p(std::uint64_t n_b, std::uint64_t n_w) {
  const std::uint64_t n = n_b + n_w;
  if (n == 0 || n_b == 0) return 1.0;
  if (n <= kExactBinomialLimit) {
    using boost::multiprecision::cpp_int;
    cpp_int c = 1;  // C(n, 0)
    cpp_int tail = 0;
    for (std::uint64_t k = 0; k <= n; ++k) {
      if (k >= n_b) tail += c;
      c = c * (n - k) / (k + 1);
    }
    // Scale down before converting so large tails stay representable.
    const std::uint64_t bits = boost::multiprecision::msb(tail) + 1;
    const std::uint64_t shift = bits > 60 ? bits - 60 : 0;
    const double mantissa = static_cast<double>(tail >> shift);
    return std::ldexp(mantissa, static_cast<int>(shift) - static_cast<int>(n));
  }
  // Log-space log-sum-exp with Kahan summation.
  const double ln2n = static_cast<double>(n) * std::log(2.0);
  auto log_term = [&](std::uint64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0) - ln2n;
  };
  double peak = -INFINITY;
  for (std::uint64_t k = n_b; k <= n; ++k) peak = std::max(peak, log_term(k));
  double sum = 0.0, comp = 0.0;
  for (std::uint64_t k = n_b; k <= n; ++k) {
    const double y = std::exp(log_term(k) - peak) - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return std::min(1.0, std::exp(peak) * sum);
}

/// 100 (base - new) / base; negative means the challenger got worse.
inline double pct_decrease(double delta_base, double delta_new) {
  if (!(delta_base > 0.0))
    throw InvalidArgument("pct_decrease: baseline must be positive, got " +
                          std::to_string(delta_base));
  return 100.0 * (delta_base - delta_new) / delta_base;
}

enum class CurveKind { Log, Exp };

struct CurveFit {
  CurveKind kind = CurveKind::Log;
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;  // in the linearized space

  double operator()(double x) const {
    return kind == CurveKind::Log ? a + b * std::log(x) : a * std::exp(b * x);
  }
};

inline std::string_view to_string(CurveKind k) {
  return k == CurveKind::Log ? "log" : "exp";
}

/// log: y = a + b ln x.  exp: ln y = ln a + b x.
inline CurveFit fit_curve(CurveKind kind,
                          std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw InvalidArgument("fit_curve: need at least 2 points");
  std::vector<double> t, y;
  for (auto [px, py] : points) {
    if (kind == CurveKind::Log) {
      if (!(px > 0.0)) throw InvalidArgument("fit_curve: log fit needs x > 0");
      t.push_back(std::log(px));
      y.push_back(py);
    } else {
      if (!(py > 0.0)) throw InvalidArgument("fit_curve: exp fit needs y > 0");
      t.push_back(px);
      y.push_back(std::log(py));
    }
  }
  const double k = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= k;
  my /= k;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  if (stt == 0.0) throw InvalidArgument("fit_curve: all abscissae coincide");
  const double slope = sty / stt;
  const double intercept = my - slope * mt;

  CurveFit out;
  out.kind = kind;
  out.b = slope;
  out.a = kind == CurveKind::Log ? intercept : std::exp(intercept);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = y[i] - (intercept + slope * t[i]);
    out.residual += r * r;
  }
  return out;
}

/// Sum of squared residuals of (a, b) in the same linearized space fit_curve uses.
inline double curve_residual(CurveKind kind, double a, double b,
                             std::span<const std::pair<double, double>> points) {
  double s = 0.0;
  for (auto [x, y] : points) {
    const double r = kind == CurveKind::Log ? y - (a + b * std::log(x))
                                            : std::log(y) - (std::log(a) + b * x);
    s += r * r;
  }
  return s;
}

enum class Winner { Base, New, Tie };

inline std::string_view to_string(Winner w) {
  switch (w) {
    case Winner::Base: return "base";
    case Winner::New: return "new";
    case Winner::Tie: return "tie";
  }
  return "tie";
}

struct ComparisonRecord {
  std::string case_id;
  double delta_base = 0.0;
  double delta_new = 0.0;
  Winner winner = Winner::Tie;
};

inline ComparisonRecord compare_deltas(std::string case_id, double delta_base,
                                       double delta_new) {
  Winner w = Winner::Tie;
  if (delta_new < delta_base) w = Winner::New;
  else if (delta_base < delta_new) w = Winner::Base;
  return {std::move(case_id), delta_base, delta_new, w};
}

struct ComparisonSummary {
  std::uint64_t n_b = 0;  // challenger wins
  std::uint64_t n_w = 0;  // baseline wins
  std::uint64_t ties = 0;
  double p_value = 1.0;
  // Over records with a positive baseline; pct_decrease is undefined otherwise.
  std::uint64_t improvement_count = 0;
  double median_improvement = 0.0;
  double mad_improvement = 0.0;
  double best_improvement = 0.0;
  double worst_improvement = 0.0;
};

inline ComparisonSummary summarize(std::span<const ComparisonRecord> records) {
  ComparisonSummary s;
  std::vector<double> pct;
  for (const auto& r : records) {
    if (r.winner == Winner::New) ++s.n_b;
    else if (r.winner == Winner::Base) ++s.n_w;
    else ++s.ties;
    if (r.delta_base > 0.0) pct.push_back(pct_decrease(r.delta_base, r.delta_new));
  }
  s.p_value = binomial_p(s.n_b, s.n_w);
  s.improvement_count = pct.size();
  if (!pct.empty()) {
    const MedianMad mm = median_mad(pct);
    s.median_improvement = mm.median;
    s.mad_improvement = mm.mad;
    s.best_improvement = *std::max_element(pct.begin(), pct.end());
    s.worst_improvement = *std::min_element(pct.begin(), pct.end());
  }
  return s;
}

/// Bin k covers [k*width, (k+1)*width). Keys are bin indices.
inline std::map<long long, std::uint64_t> histogram(std::span<const double> values,
                                                    double width) {
  if (!(width > 0.0)) throw InvalidArgument("histogram: width must be positive");
  std::map<long long, std::uint64_t> bins;
  for (double v : values) ++bins[static_cast<long long>(std::floor(v / width))];
  return bins;
}

}  // namespace nmf_energy

#endif  // NMF_ENERGY_STATS_HPP
