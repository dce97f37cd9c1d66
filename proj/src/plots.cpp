#include "eventformer/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace evf {

namespace {

constexpr double kPlotW = 720;
constexpr double kMarginL = 90;
constexpr double kMarginR = 30;
constexpr double kMarginT = 40;
constexpr double kMarginB = 45;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

void open_svg(std::ostringstream& o, double w, double h, const std::string& title) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\""
    << fmt(h) << "\" viewBox=\"0 0 " << fmt(w) << " " << fmt(h) << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
    << "\" fill=\"#ffffff\"/>\n"
    << "<text x=\"" << fmt(w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
    << " font-size=\"14\">" << escape(title) << "</text>\n";
}

void frame_axis(std::ostringstream& o, double T, double y) {
  o << "<line x1=\"" << fmt(kMarginL) << "\" y1=\"" << fmt(y) << "\" x2=\""
    << fmt(kMarginL + kPlotW) << "\" y2=\"" << fmt(y) << "\" stroke=\"#333333\"/>\n";
  const auto step = std::max<int64_t>(1, static_cast<int64_t>(std::llround(T / 8.0)));
  for (int64_t t = 0; t <= static_cast<int64_t>(T); t += step) {
    const double x = kMarginL + t / T * kPlotW;
    o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(x) << "\" y2=\""
      << fmt(y + 5) << "\" stroke=\"#333333\"/>\n"
      << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << t
      << "</text>\n";
  }
}

}  // namespace

std::string plot_timeline(const std::vector<EventSpan>& gts,
                          const std::vector<DetectionRecord>& dets, int C, double T,
                          const std::string& title) {
  if (C < 1 || T <= 0) throw std::invalid_argument("plot_timeline: bad C or T");
  for (const auto& e : gts)
    if (e.class_id < 1 || e.class_id > C || e.start < 0 || e.end > T || e.start >= e.end)
      throw std::invalid_argument("plot_timeline: ground-truth span out of range");
  for (const auto& d : dets)
    if (d.class_id < 1 || d.class_id > C || d.start < 0 || d.end > T || d.start >= d.end)
      throw std::invalid_argument("plot_timeline: detection out of range");

  const double lane_h = 34;
  const double h = kMarginT + C * lane_h + kMarginB;
  std::ostringstream o;
  open_svg(o, kMarginL + kPlotW + kMarginR, h, title);
  auto x_of = [&](double v) { return kMarginL + v / T * kPlotW; };
  for (int c = 1; c <= C; ++c) {
    const double y = kMarginT + (c - 1) * lane_h;
    o << "<text x=\"" << fmt(kMarginL - 8) << "\" y=\"" << fmt(y + lane_h / 2 + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">class " << c
      << "</text>\n"
      << "<line x1=\"" << fmt(kMarginL) << "\" y1=\"" << fmt(y + lane_h) << "\" x2=\""
      << fmt(kMarginL + kPlotW) << "\" y2=\"" << fmt(y + lane_h)
      << "\" stroke=\"#dddddd\"/>\n";
  }
  for (const auto& e : gts) {
    const double y = kMarginT + (e.class_id - 1) * lane_h + 5;
    o << "<rect class=\"gt\" x=\"" << fmt(x_of(e.start)) << "\" y=\"" << fmt(y) << "\" width=\""
      << fmt((e.end - e.start) / T * kPlotW)
      << "\" height=\"10\" fill=\"none\" stroke=\"#333333\"/>\n";
  }
  for (const auto& d : dets) {
    const double y = kMarginT + (d.class_id - 1) * lane_h + 19;
    o << "<rect class=\"det\" x=\"" << fmt(x_of(d.start)) << "\" y=\"" << fmt(y) << "\" width=\""
      << fmt((d.end - d.start) / T * kPlotW) << "\" height=\"10\" fill=\"#1f77b4\""
      << " fill-opacity=\"" << fmt(std::clamp(d.score, 0.0, 1.0)) << "\"/>\n";
  }
  frame_axis(o, T, kMarginT + C * lane_h + 8);
  o << "</svg>\n";
  return o.str();
}

std::string plot_attention(const Tensor& attn, const std::vector<EventSpan>& gts,
                           const std::vector<std::string>& row_labels,
                           const std::string& title) {
  const int64_t rows = attn.rows();
  const int64_t T = attn.cols();
  if (rows > 0 && T < 1) throw std::invalid_argument("plot_attention: empty frame axis");
  if (!row_labels.empty() && static_cast<int64_t>(row_labels.size()) != rows)
    throw std::invalid_argument("plot_attention: one label per row required");
  double peak = 0;
  for (int64_t r = 0; r < rows; ++r) {
    double sum = 0;
    for (int64_t t = 0; t < T; ++t) {
      const double v = attn.at(r, t);
      if (v < 0) throw std::invalid_argument("plot_attention: negative attention weight");
      sum += v;
      peak = std::max(peak, v);
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("plot_attention: attention row does not sum to 1");
  }

  const double row_h = 18;
  const double h = kMarginT + std::max<int64_t>(rows, 1) * row_h + kMarginB;
  std::ostringstream o;
  open_svg(o, kMarginL + kPlotW + kMarginR, h, title);
  const double cell_w = rows > 0 ? kPlotW / static_cast<double>(T) : 0;
  for (int64_t r = 0; r < rows; ++r) {
    const double y = kMarginT + r * row_h;
    if (!row_labels.empty())
      o << "<text x=\"" << fmt(kMarginL - 8) << "\" y=\"" << fmt(y + row_h / 2 + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << escape(row_labels[r]) << "</text>\n";
    for (int64_t t = 0; t < T; ++t) {
      const double v = attn.at(r, t) / (peak > 0 ? peak : 1.0);
      o << "<rect class=\"cell\" x=\"" << fmt(kMarginL + t * cell_w) << "\" y=\"" << fmt(y)
        << "\" width=\"" << fmt(cell_w) << "\" height=\"" << fmt(row_h - 2)
        << "\" fill=\"#2b5d8a\" fill-opacity=\"" << fmt(v) << "\"/>\n";
    }
  }
  const double body_h = std::max<int64_t>(rows, 1) * row_h;
  for (const auto& e : gts) {
    for (double b : {e.start, e.end}) {
      const double x = kMarginL + b / static_cast<double>(std::max<int64_t>(T, 1)) * kPlotW;
      o << "<line class=\"boundary\" x1=\"" << fmt(x) << "\" y1=\"" << fmt(kMarginT)
        << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(kMarginT + body_h)
        << "\" stroke=\"#d62728\" stroke-dasharray=\"3,2\"/>\n";
    }
  }
  if (rows > 0) frame_axis(o, static_cast<double>(T), kMarginT + body_h + 8);
  o << "</svg>\n";
  return o.str();
}

std::string plot_ar_curve(
    const std::vector<std::pair<std::string, std::vector<double>>>& curves,
    const std::string& title) {
  size_t max_an = 0;
  for (const auto& [label, values] : curves) max_an = std::max(max_an, values.size());
  if (max_an == 0) throw std::invalid_argument("plot_ar_curve: no curve points");
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};

  const double plot_h = 260;
  const double h = kMarginT + plot_h + kMarginB;
  std::ostringstream o;
  open_svg(o, kMarginL + kPlotW + kMarginR, h, title);
  auto x_of = [&](size_t an) {
    return kMarginL + (max_an == 1 ? 0.0 : static_cast<double>(an - 1) / (max_an - 1) * kPlotW);
  };
  auto y_of = [&](double v) { return kMarginT + plot_h - v / 100.0 * plot_h; };
  for (int v = 0; v <= 100; v += 20)
    o << "<line x1=\"" << fmt(kMarginL) << "\" y1=\"" << fmt(y_of(v)) << "\" x2=\""
      << fmt(kMarginL + kPlotW) << "\" y2=\"" << fmt(y_of(v)) << "\" stroke=\"#eeeeee\"/>\n"
      << "<text x=\"" << fmt(kMarginL - 8) << "\" y=\"" << fmt(y_of(v) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << v
      << "</text>\n";
  for (size_t an = 1; an <= max_an; an += (max_an > 20 ? 10 : 1))
    o << "<text x=\"" << fmt(x_of(an)) << "\" y=\"" << fmt(kMarginT + plot_h + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << an
      << "</text>\n";
  size_t ci = 0;
  for (const auto& [label, values] : curves) {
    const char* color = palette[ci % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (size_t i = 0; i < values.size(); ++i) {
      if (std::isnan(values[i])) continue;
      if (!first) o << " ";
      o << fmt(x_of(i + 1)) << "," << fmt(y_of(values[i]));
      first = false;
    }
    o << "\"/>\n"
      << "<text x=\"" << fmt(kMarginL + kPlotW - 6) << "\" y=\""
      << fmt(kMarginT + 14 + 14 * static_cast<double>(ci))
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color
      << "\">" << escape(label) << "</text>\n";
    ++ci;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace evf
