#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dreamaffect/csv.hpp"

namespace dreamaffect::svg {

struct ChartSpec {
  std::string title;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::vector<double> errors;       // optional, same length as values
  std::optional<double> reference;  // dashed horizontal line
  std::optional<double> y_max;      // default: data maximum (with headroom)
};

namespace detail {

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) { return csv::fixed(v, 2); }

struct Frame {
  double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 90;
  double y_max = 1.0;

  [[nodiscard]] double plot_w() const { return width - left - right; }
  [[nodiscard]] double plot_h() const { return height - top - bottom; }
  [[nodiscard]] double y(double v) const { return top + plot_h() * (1.0 - std::clamp(v / y_max, 0.0, 1.0)); }
};

inline double upper_bound(const ChartSpec& c) {
  if (c.y_max) return *c.y_max;
  double m = 0.0;
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    m = std::max(m, c.values[i] + (i < c.errors.size() ? c.errors[i] : 0.0));
  }
  if (c.reference) m = std::max(m, *c.reference);
  return m > 0.0 ? m * 1.1 : 1.0;
}

inline std::string open(const Frame& f, const ChartSpec& c) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) +
                  "\" height=\"" + num(f.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(f.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(c.title) + "</text>\n";
  s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.top) + "\" x2=\"" + num(f.left) + "\" y2=\"" +
       num(f.top + f.plot_h()) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.top + f.plot_h()) + "\" x2=\"" +
       num(f.left + f.plot_w()) + "\" y2=\"" + num(f.top + f.plot_h()) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = f.y_max * t / 4.0;
    s += "<text x=\"" + num(f.left - 5) + "\" y=\"" + num(f.y(v) + 4) + "\" text-anchor=\"end\">" +
         csv::fixed(v, 2) + "</text>\n";
  }
  s += "<text transform=\"translate(14," + num(f.top + f.plot_h() / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(c.y_label) + "</text>\n";
  return s;
}

inline std::string close(const Frame& f, const ChartSpec& c) {
  std::string s;
  if (c.reference) {
    s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.y(*c.reference)) + "\" x2=\"" +
         num(f.left + f.plot_w()) + "\" y2=\"" + num(f.y(*c.reference)) +
         "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  }
  return s + "</svg>\n";
}

inline std::string x_label(const Frame& f, double x, const std::string& label) {
  return "<text transform=\"translate(" + num(x) + "," + num(f.top + f.plot_h() + 12) +
         ") rotate(35)\" text-anchor=\"start\">" + escape(label) + "</text>\n";
}

}  // namespace detail

/// Vertical bars with optional error whiskers and a dashed reference line.
inline std::string bar_chart(const ChartSpec& c) {
  detail::Frame f;
  f.y_max = detail::upper_bound(c);
  std::string s = detail::open(f, c);
  const double slot = c.values.empty() ? f.plot_w() : f.plot_w() / static_cast<double>(c.values.size());
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    const double x = f.left + slot * static_cast<double>(i) + slot * 0.15;
    const double top = f.y(c.values[i]);
    s += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(top) + "\" width=\"" +
         detail::num(slot * 0.7) + "\" height=\"" + detail::num(f.top + f.plot_h() - top) +
         "\" fill=\"steelblue\"/>\n";
    if (i < c.errors.size() && c.errors[i] > 0.0) {
      const double cx = x + slot * 0.35;
      s += "<line x1=\"" + detail::num(cx) + "\" y1=\"" + detail::num(f.y(c.values[i] - c.errors[i])) +
           "\" x2=\"" + detail::num(cx) + "\" y2=\"" + detail::num(f.y(c.values[i] + c.errors[i])) +
           "\" stroke=\"black\"/>\n";
    }
    if (i < c.labels.size()) s += detail::x_label(f, x + slot * 0.2, c.labels[i]);
  }
  return s + detail::close(f, c);
}

/// Polyline through the values in order, one point per label.
inline std::string line_chart(const ChartSpec& c) {
  detail::Frame f;
  f.y_max = detail::upper_bound(c);
  std::string s = detail::open(f, c);
  const double step = c.values.size() > 1 ? f.plot_w() / static_cast<double>(c.values.size() - 1) : 0.0;
  std::string pts;
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    const double x = f.left + step * static_cast<double>(i);
    if (i) pts += ' ';
    pts += detail::num(x) + "," + detail::num(f.y(c.values[i]));
    s += "<circle cx=\"" + detail::num(x) + "\" cy=\"" + detail::num(f.y(c.values[i])) +
         "\" r=\"3\" fill=\"steelblue\"/>\n";
    if (i < c.labels.size()) s += detail::x_label(f, x, c.labels[i]);
  }
  s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  return s + detail::close(f, c);
}

}  // namespace dreamaffect::svg
