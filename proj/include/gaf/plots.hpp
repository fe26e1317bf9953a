#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/tensor.hpp"

namespace gaf {

// Numeric table read from a run log. Empty cells are NaN; "inf" parses.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const;  // throws ContractError
  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // NaN and non-positive-on-log points are skipped
};

struct PlotSpec {
  std::string title;
  std::string x_column = "step";
  std::vector<std::string> series;  // y columns
  std::string x_label = "step";
  std::string y_label;
  bool log_x = false;
  bool log_y = false;

  void validate(const CsvTable& table) const;  // every column must exist
  static PlotSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label, bool log_x = false, bool log_y = false);
std::string render_plot(const PlotSpec& spec, const CsvTable& table);

std::string scatter_svg(const Tensor& samples, const std::vector<std::array<double, 2>>& centers,
                        const std::string& title);

// Diverging colors around zero; cell text shows the value.
std::string heatmap_svg(const std::vector<std::string>& labels, const std::vector<std::vector<double>>& values,
                        const std::string& title);

}  // namespace gaf
