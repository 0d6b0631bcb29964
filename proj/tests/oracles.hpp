#pragma once

// Slow, obvious reimplementations used to cross-check the library. Nothing
// here calls into dreamaffect beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracle {

struct Counts {
  long tp = 0, fp = 0, fn = 0, support = 0;
};

// golds/preds as plain 0/1 matrices [sample][class].
inline std::vector<Counts> confusion(const std::vector<std::vector<int>>& golds,
                                     const std::vector<std::vector<int>>& preds, std::size_t classes) {
  std::vector<Counts> out(classes);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const int g = golds[i][c], p = preds[i][c];
      if (g == 1 && p == 1) out[c].tp++;
      if (g == 0 && p == 1) out[c].fp++;
      if (g == 1 && p == 0) out[c].fn++;
      if (g == 1) out[c].support++;
    }
  }
  return out;
}

inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }
inline double f1_of(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2 * p * r / (p + r); }

struct Prf {
  double p = 0, r = 0, f = 0;
};

inline Prf per_class(const Counts& c) {
  const double p = safe_div(c.tp, c.tp + c.fp);
  const double r = safe_div(c.tp, c.tp + c.fn);
  return {p, r, f1_of(p, r)};
}

inline Prf macro(const std::vector<Counts>& cs) {
  Prf m;
  for (const auto& c : cs) {
    auto x = per_class(c);
    m.p += x.p;
    m.r += x.r;
    m.f += x.f;
  }
  const double n = static_cast<double>(cs.size());
  return {m.p / n, m.r / n, m.f / n};
}

inline Prf micro(const std::vector<Counts>& cs) {
  Counts t;
  for (const auto& c : cs) {
    t.tp += c.tp;
    t.fp += c.fp;
    t.fn += c.fn;
  }
  return per_class(t);
}

inline Prf weighted(const std::vector<Counts>& cs) {
  double total = 0;
  Prf w;
  for (const auto& c : cs) {
    auto x = per_class(c);
    w.p += x.p * c.support;
    w.r += x.r * c.support;
    w.f += x.f * c.support;
    total += c.support;
  }
  if (total == 0) return {};
  return {w.p / total, w.r / total, w.f / total};
}

// Both sets empty counts as a perfect match; one side empty scores 0.
inline Prf samples(const std::vector<std::vector<int>>& golds, const std::vector<std::vector<int>>& preds) {
  if (golds.empty()) return {};
  Prf s;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    long inter = 0, g = 0, p = 0;
    for (std::size_t c = 0; c < golds[i].size(); ++c) {
      inter += golds[i][c] && preds[i][c];
      g += golds[i][c];
      p += preds[i][c];
    }
    if (g == 0 && p == 0) {
      s.p += 1;
      s.r += 1;
      s.f += 1;
      continue;
    }
    const double pi = safe_div(inter, p), ri = safe_div(inter, g);
    s.p += pi;
    s.r += ri;
    s.f += f1_of(pi, ri);
  }
  const double n = static_cast<double>(golds.size());
  return {s.p / n, s.r / n, s.f / n};
}

// Ranks by counting: rank = 1 + #less + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : xs) {
      if (y < xs[i]) less += 1;
      if (y == xs[i]) equal += 1;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

// Scalar-loop forward pass of a 5-way sigmoid head.
inline std::vector<double> head_probs(const std::vector<double>& w, const std::vector<double>& b,
                                      const std::vector<double>& x) {
  const std::size_t d = x.size();
  std::vector<double> p(b.size());
  for (std::size_t c = 0; c < b.size(); ++c) {
    double z = b[c];
    for (std::size_t j = 0; j < d; ++j) z += w[c * d + j] * x[j];
    p[c] = 1.0 / (1.0 + std::exp(-z));
  }
  return p;
}

inline double bce(const std::vector<double>& p, const std::vector<int>& y) {
  double s = 0;
  for (std::size_t c = 0; c < p.size(); ++c) s += y[c] ? -std::log(p[c]) : -std::log(1 - p[c]);
  return s / static_cast<double>(p.size());
}

}  // namespace oracle
