#pragma once
// Static SVG charts for evaluation artifacts: grouped bars with optional
// error whiskers, and multi-series line plots. Output is plain deterministic
// markup with no external references, sized for side-by-side report viewing.

#include <string>
#include <utility>
#include <vector>

namespace cycleform::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// One bar per label; when `errors` is non-empty it must align with `values`
// and draws +/- whiskers around each bar top.
std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& labels,
                      const std::vector<double>& values,
                      const std::vector<double>& errors,
                      const std::string& y_label);

std::string line_chart(const std::string& title,
                       const std::vector<Series>& series,
                       const std::string& x_label, const std::string& y_label);

}  // namespace cycleform::svg
