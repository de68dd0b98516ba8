#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lhz::pipe {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line chart with axis ranges and a legend. Non-finite
// points are skipped.
void write_line_chart(std::ostream& out, const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace lhz::pipe
