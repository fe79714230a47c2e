#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "pedflow/error.hpp"
#include "pedflow/postprocess.hpp"

namespace pedflow::post {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Linear map from [lo, hi] onto [a, b].
struct Axis {
  double lo, hi, a, b;
  double operator()(double v) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2; }
};

}  // namespace

std::string series_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label,
                       const SignalSchedule* schedule) {
  constexpr double W = 800, H = 320, L = 60, R = 20, T = 30, B = 40;
  double t0 = std::numeric_limits<double>::infinity(), t1 = -t0, ymax = 1.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      t0 = std::min(t0, s.t[i]);
      t1 = std::max(t1, s.t[i]);
      if (i < s.y.size() && s.y[i]) ymax = std::max(ymax, *s.y[i]);
    }
  }
  if (!std::isfinite(t0)) t0 = 0.0, t1 = 1.0;
  const Axis x{t0, t1, L, W - R}, y{0.0, ymax * 1.05, H - B, T};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                    "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (schedule) {
    // Shade red phases on a 0.2 s grid.
    const long n = std::lround((t1 - t0) / 0.2);
    long start = -1;
    for (long k = 0; k <= n + 1; ++k) {
      const double t = t0 + 0.2 * static_cast<double>(k);
      const bool red = k <= n && signal_state(*schedule, t) < 0.5;
      if (red && start < 0) start = k;
      if (!red && start >= 0) {
        const double a = x(t0 + 0.2 * static_cast<double>(start)), b = x(std::min(t, t1));
        svg += "<rect x=\"" + num(a) + "\" y=\"" + num(T) + "\" width=\"" + num(b - a) + "\" height=\"" +
               num(H - B - T) + "\" fill=\"#f4cccc\"/>\n";
        start = -1;
      }
    }
  }
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double tv = t0 + (t1 - t0) * k / 4, yv = ymax * k / 4;
    svg += "<text x=\"" + num(x(tv)) + "\" y=\"" + num(H - B + 16) + "\" font-size=\"11\" text-anchor=\"middle\">" +
           num(tv) + "</text>\n";
    svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(y(yv) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
           num(yv) + "</text>\n";
  }
  svg += "<text x=\"" + num(W / 2) + "\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">" + escape(title) +
         "</text>\n";
  svg += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 6) + "\" font-size=\"12\" text-anchor=\"middle\">t (s)</text>\n";
  svg += "<text x=\"14\" y=\"" + num((T + H - B) / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         num((T + H - B) / 2) + ")\">" + escape(y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = kPalette[s % std::size(kPalette)];
    std::string points;
    auto flush = [&] {
      if (!points.empty())
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.2\" points=\"" + points +
               "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < series[s].t.size(); ++i) {
      if (i >= series[s].y.size() || !series[s].y[i]) {
        flush();
        continue;
      }
      points += (points.empty() ? "" : " ") + num(x(series[s].t[i])) + "," + num(y(*series[s].y[i]));
    }
    flush();
    svg += "<text x=\"" + num(W - R - 4) + "\" y=\"" + num(T + 14 + 14 * static_cast<double>(s)) +
           "\" font-size=\"11\" text-anchor=\"end\" fill=\"" + colour + "\">" + escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string trajectories_svg(const std::vector<Trajectory>& trajs, const Scenario& scenario) {
  constexpr double W = 800, H = 500, M = 20;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto extend = [&](Vec2 p) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  };
  for (const auto& n : scenario.graph.nodes()) {
    extend(n.anchor - Vec2{n.region_radius, n.region_radius});
    extend(n.anchor + Vec2{n.region_radius, n.region_radius});
  }
  for (const auto& traj : trajs)
    for (const auto& r : traj.records) extend(r.p);
  for (const Vec2 v : scenario.crosswalk) extend(v);
  // Equal scale on both axes, y pointing up.
  const double scale = std::min((W - 2 * M) / std::max(x1 - x0, 1e-9), (H - 2 * M) / std::max(y1 - y0, 1e-9));
  auto px = [&](Vec2 p) { return Vec2{M + (p.x - x0) * scale, H - M - (p.y - y0) * scale}; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                    "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string cw;
  for (const Vec2 v : scenario.crosswalk) {
    const Vec2 q = px(v);
    cw += (cw.empty() ? "" : " ") + num(q.x) + "," + num(q.y);
  }
  svg += "<polygon points=\"" + cw + "\" fill=\"#eeeeee\" stroke=\"#999999\"/>\n";
  for (const auto& n : scenario.graph.nodes()) {
    const Vec2 c = px(n.anchor);
    svg += "<circle cx=\"" + num(c.x) + "\" cy=\"" + num(c.y) + "\" r=\"" + num(n.region_radius * scale) +
           "\" fill=\"none\" stroke=\"" + (n.signal_controlled ? "#d62728" : "#555555") + "\" stroke-dasharray=\"4 3\"/>\n";
    svg += "<text x=\"" + num(c.x) + "\" y=\"" + num(c.y + 4) + "\" font-size=\"12\" text-anchor=\"middle\">N" +
           std::to_string(n.id) + "</text>\n";
  }
  for (const auto& traj : trajs) {
    if (traj.empty()) continue;
    const char* colour = traj.flow_id >= 1 ? kPalette[(traj.flow_id - 1) % std::size(kPalette)] : "#7f7f7f";
    std::string points;
    for (const auto& r : traj.records) {
      const Vec2 q = px(r.p);
      points += (points.empty() ? "" : " ") + num(q.x) + "," + num(q.y);
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"0.6\" stroke-opacity=\"0.6\" points=\"" +
           points + "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace pedflow::post
