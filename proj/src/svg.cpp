#include "cycleform/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cycleform/common.hpp"

namespace cycleform::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 20, kTop = 44, kBottom = 52;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;
const char* kPalette[] = {"#4472c4", "#ed7d31", "#70ad47", "#a5a5a5",
                          "#ffc000", "#5b9bd5"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out.push_back(c);
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
         "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
         " " + num(kHeight) +
         "\" font-family=\"monospace\" font-size=\"12\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" +
         num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" +
         esc(title) + "</text>\n";
}

std::string axes(double ylo, double yhi, const std::string& y_label) {
  std::string out;
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
         num(kLeft) + "\" y2=\"" + num(kTop + kPlotH) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + kPlotH) +
         "\" x2=\"" + num(kLeft + kPlotW) + "\" y2=\"" + num(kTop + kPlotH) +
         "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double frac = t / 4.0;
    double y = kTop + kPlotH * (1.0 - frac);
    double v = ylo + (yhi - ylo) * frac;
    out += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(y) + "\" x2=\"" +
           num(kLeft) + "\" y2=\"" + num(y) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) +
           "\" text-anchor=\"end\">" + esc(tick_label(v)) + "</text>\n";
  }
  out += "<text x=\"16\" y=\"" + num(kTop + kPlotH / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + kPlotH / 2) + ")\">" + esc(y_label) + "</text>\n";
  return out;
}

}  // namespace

std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& labels,
                      const std::vector<double>& values,
                      const std::vector<double>& errors,
                      const std::string& y_label) {
  if (labels.size() != values.size() || values.empty())
    throw DataError("bar_chart needs matching non-empty labels and values");
  if (!errors.empty() && errors.size() != values.size())
    throw DataError("bar_chart error whiskers must align with values");

  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double e = errors.empty() ? 0 : errors[i];
    lo = std::min(lo, values[i] - e);
    hi = std::max(hi, values[i] + e);
  }
  if (hi == lo) hi = lo + 1;
  double pad = 0.05 * (hi - lo);
  if (lo < 0) lo -= pad;
  hi += pad;

  auto ypix = [&](double v) {
    return kTop + kPlotH * (1.0 - (v - lo) / (hi - lo));
  };

  std::string out = header(title) + axes(lo, hi, y_label);
  const double slot = kPlotW / static_cast<double>(values.size());
  const double bw = slot * 0.6;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    double top = ypix(std::max(values[i], 0.0));
    double bot = ypix(std::min(values[i], 0.0));
    out += "<rect x=\"" + num(cx - bw / 2) + "\" y=\"" + num(top) +
           "\" width=\"" + num(bw) + "\" height=\"" + num(bot - top) +
           "\" fill=\"" + kPalette[0] + "\"/>\n";
    if (!errors.empty() && errors[i] > 0) {
      double eh = ypix(values[i] + errors[i]);
      double el = ypix(values[i] - errors[i]);
      out += "<line x1=\"" + num(cx) + "\" y1=\"" + num(eh) + "\" x2=\"" +
             num(cx) + "\" y2=\"" + num(el) + "\" stroke=\"black\"/>\n";
      for (double ye : {eh, el})
        out += "<line x1=\"" + num(cx - 4) + "\" y1=\"" + num(ye) +
               "\" x2=\"" + num(cx + 4) + "\" y2=\"" + num(ye) +
               "\" stroke=\"black\"/>\n";
    }
    out += "<text x=\"" + num(cx) + "\" y=\"" + num(kTop + kPlotH + 16) +
           "\" text-anchor=\"middle\">" + esc(labels[i]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string line_chart(const std::string& title,
                       const std::vector<Series>& series,
                       const std::string& x_label, const std::string& y_label) {
  if (series.empty()) throw DataError("line_chart needs at least one series");
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.points.empty()) throw DataError("line_chart series may not be empty");
    for (auto [x, y] : s.points) {
      if (first) {
        xlo = xhi = x;
        ylo = yhi = y;
        first = false;
      }
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  }
  if (xhi == xlo) xhi = xlo + 1;
  if (yhi == ylo) yhi = ylo + 1;
  double ypad = 0.05 * (yhi - ylo);
  ylo -= ypad;
  yhi += ypad;

  auto xpix = [&](double v) { return kLeft + kPlotW * (v - xlo) / (xhi - xlo); };
  auto ypix = [&](double v) {
    return kTop + kPlotH * (1.0 - (v - ylo) / (yhi - ylo));
  };

  std::string out = header(title) + axes(ylo, yhi, y_label);
  for (int t = 0; t <= 4; ++t) {
    double v = xlo + (xhi - xlo) * t / 4.0;
    out += "<text x=\"" + num(xpix(v)) + "\" y=\"" + num(kTop + kPlotH + 16) +
           "\" text-anchor=\"middle\">" + esc(tick_label(v)) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"" +
         num(kHeight - 10) + "\" text-anchor=\"middle\">" + esc(x_label) +
         "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(*kPalette))];
    std::string pts;
    for (auto [x, y] : series[k].points)
      pts += num(xpix(x)) + "," + num(ypix(y)) + " ";
    out += "<polyline points=\"" + pts +
           "\" fill=\"none\" stroke-width=\"1.5\" stroke=\"" + color + "\"/>\n";
    double ly = kTop + 14 * static_cast<double>(k);
    out += "<line x1=\"" + num(kLeft + kPlotW - 110) + "\" y1=\"" + num(ly) +
           "\" x2=\"" + num(kLeft + kPlotW - 90) + "\" y2=\"" + num(ly) +
           "\" stroke-width=\"1.5\" stroke=\"" + color + "\"/>\n";
    out += "<text x=\"" + num(kLeft + kPlotW - 84) + "\" y=\"" + num(ly + 4) +
           "\">" + esc(series[k].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cycleform::svg
