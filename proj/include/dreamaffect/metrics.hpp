#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "dreamaffect/csv.hpp"
#include "dreamaffect/emotion.hpp"
#include "dreamaffect/errors.hpp"

namespace dreamaffect {

// ---------------------------------------------------------------------------
// Precision / recall / F1

struct PrfTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PerClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold positives
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  bool zero_division = false;  // some ratio was 0/0 and reported as 0
};

/// Per-class rows followed by the four averaging schemes.
///
/// Conventions: any 0/0 ratio is 0 and sets `zero_division`. In the samples
/// average a sample with empty gold and empty prediction scores 1 on all three
/// measures; empty on exactly one side scores 0.
struct MetricsReport {
  std::vector<PerClassMetrics> per_class;
  PrfTriple macro;
  PrfTriple micro;
  PrfTriple weighted;
  PrfTriple samples;
  std::size_t total_support = 0;
  std::size_t sample_count = 0;
  bool zero_division = false;

  [[nodiscard]] const PerClassMetrics& at(std::string_view label) const {
    for (const auto& c : per_class) {
      if (c.label == label) return c;
    }
    throw std::out_of_range("no class " + std::string(label) + " in metrics report");
  }
};

inline constexpr std::array<std::string_view, 4> kAggregateLabels{"macro avg", "micro avg",
                                                                  "samples avg", "weighted avg"};

namespace detail {

inline double ratio(std::size_t num, std::size_t den, bool& zero_div) {
  if (den == 0) {
    zero_div = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

inline std::vector<std::string> emotion_labels() {
  return {kEmotionCodes.begin(), kEmotionCodes.end()};
}

/// Per-class scores for N-class multi-label data. `labels` names the classes
/// (defaults to "0".."N-1").
template <std::size_t N>
std::vector<PerClassMetrics> prf1_per_class(std::span<const LabelSet<N>> golds,
                                            std::span<const LabelSet<N>> preds,
                                            std::vector<std::string> labels = {}) {
  if (golds.size() != preds.size()) {
    throw DataError("prf1: " + std::to_string(golds.size()) + " gold rows vs " +
                    std::to_string(preds.size()) + " predicted rows");
  }
  if (golds.empty()) throw DataError("prf1: no samples");
  if (labels.empty()) {
    for (std::size_t c = 0; c < N; ++c) labels.push_back(std::to_string(c));
  }
  if (labels.size() != N) throw std::invalid_argument("prf1: label count mismatch");

  std::vector<PerClassMetrics> out(N);
  for (std::size_t c = 0; c < N; ++c) {
    auto& m = out[c];
    m.label = labels[c];
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const bool g = golds[i][c];
      const bool p = preds[i][c];
      m.tp += g && p;
      m.fp += !g && p;
      m.fn += g && !p;
    }
    m.support = m.tp + m.fn;
    m.precision = detail::ratio(m.tp, m.tp + m.fp, m.zero_division);
    m.recall = detail::ratio(m.tp, m.tp + m.fn, m.zero_division);
    m.f1 = detail::harmonic(m.precision, m.recall);
  }
  return out;
}

template <std::size_t N>
MetricsReport aggregate(std::vector<PerClassMetrics> per_class, std::span<const LabelSet<N>> golds,
                        std::span<const LabelSet<N>> preds) {
  MetricsReport rep;
  rep.sample_count = golds.size();
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : per_class) {
    rep.macro.precision += c.precision;
    rep.macro.recall += c.recall;
    rep.macro.f1 += c.f1;
    const auto w = static_cast<double>(c.support);
    rep.weighted.precision += w * c.precision;
    rep.weighted.recall += w * c.recall;
    rep.weighted.f1 += w * c.f1;
    rep.total_support += c.support;
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    rep.zero_division = rep.zero_division || c.zero_division;
  }
  if (!per_class.empty()) {
    const auto k = static_cast<double>(per_class.size());
    rep.macro = {rep.macro.precision / k, rep.macro.recall / k, rep.macro.f1 / k};
  }
  if (rep.total_support > 0) {
    const auto s = static_cast<double>(rep.total_support);
    rep.weighted = {rep.weighted.precision / s, rep.weighted.recall / s, rep.weighted.f1 / s};
  } else {
    rep.weighted = {};
    rep.zero_division = true;
  }

  rep.micro.precision = detail::ratio(tp, tp + fp, rep.zero_division);
  rep.micro.recall = detail::ratio(tp, tp + fn, rep.zero_division);
  rep.micro.f1 = detail::harmonic(rep.micro.precision, rep.micro.recall);

  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto g = golds[i].count();
    const auto p = preds[i].count();
    const auto both = (golds[i] & preds[i]).count();
    if (g == 0 && p == 0) {
      rep.samples.precision += 1.0;
      rep.samples.recall += 1.0;
      rep.samples.f1 += 1.0;
      continue;
    }
    if (g == 0 || p == 0) continue;
    const double sp = static_cast<double>(both) / static_cast<double>(p);
    const double sr = static_cast<double>(both) / static_cast<double>(g);
    rep.samples.precision += sp;
    rep.samples.recall += sr;
    rep.samples.f1 += detail::harmonic(sp, sr);
  }
  if (!golds.empty()) {
    const auto n = static_cast<double>(golds.size());
    rep.samples = {rep.samples.precision / n, rep.samples.recall / n, rep.samples.f1 / n};
  }
  rep.per_class = std::move(per_class);
  return rep;
}

template <std::size_t N>
MetricsReport evaluate(std::span<const LabelSet<N>> golds, std::span<const LabelSet<N>> preds,
                       std::vector<std::string> labels = {}) {
  return aggregate<N>(prf1_per_class<N>(golds, preds, std::move(labels)), golds, preds);
}

inline MetricsReport evaluate_emotions(std::span<const LabelVector> golds,
                                       std::span<const LabelVector> preds) {
  return evaluate<kEmotionCount>(golds, preds, emotion_labels());
}

// ---------------------------------------------------------------------------
// Two-class polarity

enum class Polarity { Negative = 0, Positive = 1 };

inline std::string_view to_string(Polarity p) noexcept {
  return p == Polarity::Positive ? "POSITIVE" : "NEGATIVE";
}

/// Each polarity is scored as its own reference class (rows NEGATIVE, POSITIVE).
inline MetricsReport binary_prf1(std::span<const Polarity> golds, std::span<const Polarity> preds) {
  if (golds.size() != preds.size()) throw DataError("binary_prf1: length mismatch");
  if (golds.empty()) throw DataError("binary_prf1: no samples");
  auto one_hot = [](Polarity p) {
    LabelSet<2> s;
    s.set(static_cast<std::size_t>(p));
    return s;
  };
  std::vector<LabelSet<2>> g, p;
  std::transform(golds.begin(), golds.end(), std::back_inserter(g), one_hot);
  std::transform(preds.begin(), preds.end(), std::back_inserter(p), one_hot);
  return evaluate<2>(g, p, {"NEGATIVE", "POSITIVE"});
}

// ---------------------------------------------------------------------------
// CSV form: rows = classes then aggregates; columns precision, recall, f1, support.

inline csv::Table to_table(const MetricsReport& rep) {
  csv::Table t{{"label", "precision", "recall", "f1", "support"}, {}};
  for (const auto& c : rep.per_class) {
    t.rows.push_back({c.label, csv::fixed(c.precision), csv::fixed(c.recall), csv::fixed(c.f1),
                      std::to_string(c.support)});
  }
  const std::array<const PrfTriple*, 4> aggs{&rep.macro, &rep.micro, &rep.samples, &rep.weighted};
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    t.rows.push_back({std::string(kAggregateLabels[i]), csv::fixed(aggs[i]->precision),
                      csv::fixed(aggs[i]->recall), csv::fixed(aggs[i]->f1),
                      std::to_string(rep.total_support)});
  }
  return t;
}

/// Inverse of to_table (at the persisted precision). Confusion counts are not
/// stored and come back as zero.
inline MetricsReport from_table(const csv::Table& t) {
  MetricsReport rep;
  const auto li = t.column("label"), pi = t.column("precision"), ri = t.column("recall"),
             fi = t.column("f1"), si = t.column("support");
  for (const auto& row : t.rows) {
    const PrfTriple v{csv::to_double(row.at(pi)), csv::to_double(row.at(ri)),
                      csv::to_double(row.at(fi))};
    const auto support = static_cast<std::size_t>(csv::to_double(row.at(si)));
    const auto& label = row.at(li);
    if (label == "macro avg") {
      rep.macro = v;
    } else if (label == "micro avg") {
      rep.micro = v;
    } else if (label == "samples avg") {
      rep.samples = v;
    } else if (label == "weighted avg") {
      rep.weighted = v;
      rep.total_support = support;
    } else {
      PerClassMetrics c;
      c.label = label;
      c.precision = v.precision;
      c.recall = v.recall;
      c.f1 = v.f1;
      c.support = support;
      rep.per_class.push_back(std::move(c));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Spearman rank correlation

struct CorrelationResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Two-sided p for a correlation coefficient from the t approximation
/// t = r * sqrt((n - 2) / (1 - r^2)), n - 2 degrees of freedom. Only an
/// approximation at small n.
inline double correlation_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  if (std::abs(r) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = r * std::sqrt(dof / ((1.0 - r) * (1.0 + r)));
  boost::math::students_t_distribution<double> dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

inline CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DataError("spearman: length mismatch (" + std::to_string(xs.size()) + " vs " +
                    std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 3) throw DataError("spearman: need at least 3 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("spearman: zero variance in ranked input");
  }
  const double rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {rho, correlation_p_value(rho, xs.size()), xs.size()};
}

/// A correlation for one scope (overall, a series, ...) that may be unavailable.
struct ScopedCorrelation {
  std::string scope;
  std::size_t n = 0;
  std::optional<CorrelationResult> result;
  std::string note;  // why `result` is missing
};

}  // namespace dreamaffect
