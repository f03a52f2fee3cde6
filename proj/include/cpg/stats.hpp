// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-sided Mann-Whitney U, Bonferroni correction, and the grouped
// comparison tables built from them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpg/error.hpp"
#include "cpg/io.hpp"

namespace cpg {

enum class MwuMethod { kExactEnumeration, kNormalApproximation };
enum class Alternative { kTwoSided };

constexpr const char* to_string(MwuMethod m) noexcept {
  return m == MwuMethod::kExactEnumeration ? "exact" : "normal";
}

struct MWUResult {
  double u_statistic = 0;  // U for the first sample
  double p_value = 1;
  MwuMethod method = MwuMethod::kExactEnumeration;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  bool tie_corrected = false;
};

// Pooled sizes up to this use the exact null distribution (tie-free only).
inline constexpr std::size_t kExactMaxPooled = 12;

// Number of rank assignments giving each U = 0..n1*n2 under the null, from
//   f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u).
inline std::vector<std::uint64_t> exact_u_distribution(std::size_t n1, std::size_t n2) {
  // table[m][n] is the distribution for sizes (m, n).
  std::vector<std::vector<std::vector<std::uint64_t>>> table(
      n1 + 1, std::vector<std::vector<std::uint64_t>>(n2 + 1));
  for (std::size_t m = 0; m <= n1; ++m) {
    for (std::size_t n = 0; n <= n2; ++n) {
      auto& f = table[m][n];
      f.assign(m * n + 1, 0);
      if (m == 0 || n == 0) {
        f[0] = 1;
        continue;
      }
      const auto& drop_a = table[m - 1][n];  // largest value belongs to sample a
      const auto& drop_b = table[m][n - 1];
      for (std::size_t u = 0; u < drop_a.size(); ++u) f[u + n] += drop_a[u];
      for (std::size_t u = 0; u < drop_b.size(); ++u) f[u] += drop_b[u];
    }
  }
  return table[n1][n2];
}

// Two-sided exact p from tail counts: min(1, 2 * min(P[U<=u], P[U>=u])).
inline double exact_two_sided_p(std::uint64_t count_le, std::uint64_t count_ge, std::uint64_t total) {
  const double tail = static_cast<double>(std::min(count_le, count_ge));
  return std::min(1.0, 2.0 * tail / static_cast<double>(total));
}

inline MWUResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                Alternative = Alternative::kTwoSided) {
  if (a.empty() || b.empty()) throw InvalidArgumentError("mann_whitney_u: both samples must be nonempty");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;

  std::vector<std::pair<double, bool>> pooled;  // (value, from_a)
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, true);
  for (double v : b) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  double rank_sum_a = 0;
  double tie_term = 0;  // sum of t^3 - t over tie groups
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) rank_sum_a += mid_rank;
    }
    if (j - i > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j;
  }

  MWUResult r;
  r.n1 = n1;
  r.n2 = n2;
  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
  r.u_statistic = rank_sum_a - dn1 * (dn1 + 1.0) / 2.0;

  if (!ties && n <= kExactMaxPooled) {
    r.method = MwuMethod::kExactEnumeration;
    const auto dist = exact_u_distribution(n1, n2);
    const auto u = static_cast<std::size_t>(std::llround(r.u_statistic));
    std::uint64_t total = 0, le = 0, ge = 0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      total += dist[k];
      if (k <= u) le += dist[k];
      if (k >= u) ge += dist[k];
    }
    r.p_value = exact_two_sided_p(le, ge, total);
    return r;
  }

  r.method = MwuMethod::kNormalApproximation;
  r.tie_corrected = ties;
  const double dn = static_cast<double>(n);
  const double mu = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (var <= 0) {
    r.p_value = 1.0;  // every observation tied
    return r;
  }
  const double z = std::max(std::fabs(r.u_statistic - mu) - 0.5, 0.0) / std::sqrt(var);
  double p = std::erfc(z / std::sqrt(2.0));
  if (p <= 0) p = std::numeric_limits<double>::min();
  r.p_value = std::min(1.0, p);
  return r;
}

inline std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m) {
  if (p_values.empty()) throw InvalidArgumentError("bonferroni: no p-values");
  if (m < p_values.size()) {
    throw InvalidArgumentError("bonferroni: m=" + std::to_string(m) + " is less than the " +
                               std::to_string(p_values.size()) + " tests supplied");
  }
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, p * static_cast<double>(m)));
  return out;
}

// "**" for p < .01, "*" for p < .05.
inline std::string significance_marker(double p) {
  if (std::isnan(p)) return "";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// ".021" style: three decimals, no leading zero.
inline std::string format_p(double p) {
  if (std::isnan(p)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  std::string s = buf;
  if (s.starts_with("0.")) s.erase(0, 1);
  return s;
}

inline std::string format_p_marked(double p) { return format_p(p) + significance_marker(p); }

inline std::string format_fixed(double v, int decimals = 2) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Signed percent delta rounded to one decimal: "+26.1%", "-5.0%".
inline std::string format_percent_delta(double value, double reference) {
  if (std::isnan(value) || std::isnan(reference) || reference == 0) return "n/a";
  double d = std::round((value - reference) / reference * 1000.0) / 10.0;
  if (d == 0) d = 0;  // no "-0.0%"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", d);
  return buf;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct Observation {
  std::string metric;
  int grade = 0;
  std::string condition;
  double value = 0;
};

struct PairwiseTest {
  std::string condition_a;
  std::string condition_b;
  std::optional<MWUResult> test;  // empty when either side has no data
  double p_corrected = std::numeric_limits<double>::quiet_NaN();
  std::string marker;
};

struct ComparisonRow {
  std::string metric;
  std::vector<double> means;  // parallel to ComparisonTable::conditions
  std::vector<std::size_t> counts;
  std::vector<PairwiseTest> tests;  // (0,1), (0,2), ..., (1,2), ...
};

struct ComparisonTable {
  std::vector<std::string> conditions;
  std::size_t bonferroni_m = 1;
  std::vector<ComparisonRow> rows;
};

struct SeriesPoint {
  std::string metric;
  int grade = 0;
  std::string condition;
  double mean = 0;
  std::size_t n = 0;
};

struct AggregateResult {
  ComparisonTable table;
  std::vector<SeriesPoint> series;
};

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Means per (metric, condition) and per (metric, grade, condition); pairwise
// MWU p-values per metric, Bonferroni-corrected with `m`, markers applied
// after correction. Metrics keep first-seen order.
inline AggregateResult aggregate(std::span<const Observation> records,
                                 const std::vector<std::string>& conditions, std::size_t m) {
  if (records.empty()) throw InvalidArgumentError("aggregate: no observations");
  if (conditions.size() < 2) throw InvalidArgumentError("aggregate: need at least two conditions");
  const std::size_t pairs = conditions.size() * (conditions.size() - 1) / 2;
  if (m < pairs) {
    throw InvalidArgumentError("aggregate: bonferroni m=" + std::to_string(m) + " below the " +
                               std::to_string(pairs) + " pairwise tests per metric");
  }

  std::vector<std::string> metrics;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_metric;
  std::map<std::string, std::map<std::pair<int, std::string>, std::vector<double>>> by_grade;
  for (const auto& r : records) {
    if (!by_metric.count(r.metric)) metrics.push_back(r.metric);
    by_metric[r.metric][r.condition].push_back(r.value);
    by_grade[r.metric][{r.grade, r.condition}].push_back(r.value);
  }

  AggregateResult out;
  out.table.conditions = conditions;
  out.table.bonferroni_m = m;
  for (const auto& metric : metrics) {
    ComparisonRow row;
    row.metric = metric;
    auto& values = by_metric[metric];
    for (const auto& c : conditions) {
      const auto& v = values[c];
      row.means.push_back(mean_of(v));
      row.counts.push_back(v.size());
    }
    for (std::size_t i = 0; i < conditions.size(); ++i) {
      for (std::size_t j = i + 1; j < conditions.size(); ++j) {
        PairwiseTest t;
        t.condition_a = conditions[i];
        t.condition_b = conditions[j];
        const auto& a = values[conditions[i]];
        const auto& b = values[conditions[j]];
        if (!a.empty() && !b.empty()) {
          t.test = mann_whitney_u(a, b);
          const double p = t.test->p_value;
          t.p_corrected = bonferroni(std::span<const double>(&p, 1), m).front();
          t.marker = significance_marker(t.p_corrected);
        }
        row.tests.push_back(std::move(t));
      }
    }
    out.table.rows.push_back(std::move(row));

    for (const auto& [key, v] : by_grade[metric]) {
      out.series.push_back({metric, key.first, key.second, mean_of(v), v.size()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string pair_label(const PairwiseTest& t) { return t.condition_a + " vs " + t.condition_b; }

// Delimiter-separated rendering: metric, one column per condition mean, one
// column per pairwise corrected p with its marker.
inline std::string to_tsv(const ComparisonTable& table) {
  std::string out = "metric";
  for (const auto& c : table.conditions) out += "\t" + c;
  if (!table.rows.empty()) {
    for (const auto& t : table.rows.front().tests) {
      out += "\t" + (table.conditions.size() == 2 ? std::string("p") : "p(" + pair_label(t) + ")");
    }
  }
  out += "\n";
  for (const auto& row : table.rows) {
    out += row.metric;
    for (double mval : row.means) out += "\t" + format_fixed(mval);
    for (const auto& t : row.tests) out += "\t" + format_p(t.p_corrected) + t.marker;
    out += "\n";
  }
  return out;
}

inline json to_json(const MWUResult& r) {
  return json{{"u", r.u_statistic}, {"p", r.p_value}, {"method", to_string(r.method)},
              {"n1", r.n1}, {"n2", r.n2}, {"tie_corrected", r.tie_corrected}};
}

inline json to_json(const ComparisonTable& table) {
  json rows = json::array();
  for (const auto& row : table.rows) {
    json means = json::object(), counts = json::object(), tests = json::array();
    for (std::size_t i = 0; i < table.conditions.size(); ++i) {
      means[table.conditions[i]] = std::isnan(row.means[i]) ? json(nullptr) : json(row.means[i]);
      counts[table.conditions[i]] = row.counts[i];
    }
    for (const auto& t : row.tests) {
      json jt{{"pair", {t.condition_a, t.condition_b}},
              {"p_corrected", std::isnan(t.p_corrected) ? json(nullptr) : json(t.p_corrected)},
              {"marker", t.marker}};
      if (t.test) jt["test"] = to_json(*t.test);
      tests.push_back(std::move(jt));
    }
    rows.push_back({{"metric", row.metric}, {"means", means}, {"counts", counts}, {"tests", tests}});
  }
  return json{{"conditions", table.conditions}, {"bonferroni_m", table.bonferroni_m}, {"rows", rows}};
}

inline std::string series_tsv(std::span<const SeriesPoint> series) {
  std::string out = "metric\tgrade\tcondition\tmean\tn\n";
  for (const auto& s : series) {
    out += s.metric + "\t" + std::to_string(s.grade) + "\t" + s.condition + "\t" +
           format_fixed(s.mean, 4) + "\t" + std::to_string(s.n) + "\n";
  }
  return out;
}

// Per-grade means of one metric, each non-reference condition annotated with
// its signed percent delta against `reference`.
struct DeltaRow {
  int grade = 0;
  double reference_mean = 0;
  std::vector<double> means;
  std::vector<std::string> deltas;
};

struct DeltaTable {
  std::string metric;
  std::string reference;
  std::vector<std::string> conditions;
  std::vector<DeltaRow> rows;
};

inline DeltaTable delta_table(std::span<const Observation> records, const std::string& metric,
                              const std::string& reference, const std::vector<std::string>& conditions) {
  std::map<int, std::map<std::string, std::vector<double>>> cells;
  for (const auto& r : records) {
    if (r.metric == metric) cells[r.grade][r.condition].push_back(r.value);
  }
  DeltaTable t{metric, reference, conditions, {}};
  for (auto& [grade, by_cond] : cells) {
    DeltaRow row;
    row.grade = grade;
    row.reference_mean = mean_of(by_cond[reference]);
    for (const auto& c : conditions) {
      const double mval = mean_of(by_cond[c]);
      row.means.push_back(mval);
      row.deltas.push_back(format_percent_delta(mval, row.reference_mean));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string to_tsv(const DeltaTable& t) {
  std::string out = "grade\t" + t.reference;
  for (const auto& c : t.conditions) out += "\t" + c + "\t" + c + "_delta";
  out += "\n";
  for (const auto& row : t.rows) {
    out += std::to_string(row.grade) + "\t" + format_fixed(row.reference_mean, 1);
    for (std::size_t i = 0; i < t.conditions.size(); ++i) {
      out += "\t" + format_fixed(row.means[i], 1) + "\t" + row.deltas[i];
    }
    out += "\n";
  }
  return out;
}

}  // namespace cpg
