#pragma once

// Small statistical kernels used by the missingness diagnostics: the
// regularized incomplete gamma function (chi-square upper tail) and a
// tie-corrected two-sample rank test with normal approximation.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "trialrisk/common.hpp"

namespace trialrisk {

namespace detail {

// Lower regularized incomplete gamma P(a, x) by series expansion; valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 500; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) by continued fraction; valid for x >= a + 1.
inline double gamma_q_cont_fraction(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

inline double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw ConfigError("gamma_q: domain error");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cont_fraction(a, x);
}

inline double gamma_p(double a, double x) { return 1.0 - gamma_q(a, x); }

// P(Chi2_df > x)
inline double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return gamma_q(df / 2.0, x / 2.0);
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool valid = false;
};

// Pearson chi-square on an R x 2 contingency table. Rows with zero total are
// dropped; the result is invalid when fewer than two informative rows or an
// empty column remain.
inline TestResult chi2_independence(const std::vector<std::array<long long, 2>>& table) {
  TestResult res;
  long long col0 = 0, col1 = 0, total = 0;
  int live_rows = 0;
  for (const auto& row : table) {
    col0 += row[0];
    col1 += row[1];
    total += row[0] + row[1];
    if (row[0] + row[1] > 0) ++live_rows;
  }
  if (total == 0 || col0 == 0 || col1 == 0 || live_rows < 2) return res;
  double stat = 0.0;
  for (const auto& row : table) {
    const long long rs = row[0] + row[1];
    if (rs == 0) continue;
    const double e0 = static_cast<double>(rs) * static_cast<double>(col0) / static_cast<double>(total);
    const double e1 = static_cast<double>(rs) * static_cast<double>(col1) / static_cast<double>(total);
    stat += (static_cast<double>(row[0]) - e0) * (static_cast<double>(row[0]) - e0) / e0;
    stat += (static_cast<double>(row[1]) - e1) * (static_cast<double>(row[1]) - e1) / e1;
  }
  const double df = static_cast<double>(live_rows - 1);
  res.statistic = stat;
  res.p_value = chi2_sf(stat, df);
  res.valid = true;
  return res;
}

// Two-sided Mann-Whitney rank-sum test, normal approximation with tie correction.
inline TestResult rank_sum_test(std::vector<double> a, std::vector<double> b) {
  TestResult res;
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  if (na == 0 || nb == 0) return res;
  struct Tagged {
    double value;
    bool from_a;
  };
  std::vector<Tagged> all;
  all.reserve(na + nb);
  for (double v : a) all.push_back({v, true});
  for (double v : b) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Tagged& x, const Tagged& y) { return x.value < y.value; });

  const double n = static_cast<double>(na + nb);
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].value == all[i].value) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k <= j; ++k) {
      if (all[k].from_a) rank_sum_a += avg_rank;
    }
    i = j + 1;
  }
  const double mean = static_cast<double>(na) * (n + 1.0) / 2.0;
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                     ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) return res;  // all values tied
  const double z = (rank_sum_a - mean) / std::sqrt(var);
  res.statistic = z;
  res.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
  res.valid = true;
  return res;
}

}  // namespace trialrisk
