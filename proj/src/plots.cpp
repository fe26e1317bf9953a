#include "gaf/plots.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <sstream>

#include "gaf/errors.hpp"

namespace gaf {

std::size_t CsvTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ContractError("no column named '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const std::size_t c = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(c < r.size() ? r[c] : std::numeric_limits<double>::quiet_NaN());
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ContractError("bad numeric cell '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ContractError("bad numeric cell '" + s + "'");
  }
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ContractError("empty CSV");
  t.columns = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void PlotSpec::validate(const CsvTable& table) const {
  if (series.empty()) throw ContractError("plot spec needs at least one series");
  table.column_index(x_column);
  for (const auto& s : series) table.column_index(s);
}

PlotSpec PlotSpec::from_json(const nlohmann::json& j) {
  PlotSpec p;
  p.title = j.value("title", p.title);
  p.x_column = j.value("x_column", p.x_column);
  p.series = j.at("series").get<std::vector<std::string>>();
  p.x_label = j.value("x_label", p.x_column);
  p.y_label = j.value("y_label", p.y_label);
  p.log_x = j.value("log_x", p.log_x);
  p.log_y = j.value("log_y", p.log_y);
  return p;
}

nlohmann::json PlotSpec::to_json() const {
  return {{"title", title},     {"x_column", x_column}, {"series", series}, {"x_label", x_label},
          {"y_label", y_label}, {"log_x", log_x},       {"log_y", log_y}};
}

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(4) << v;
  return o.str();
}

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;

  double map(double v, double pixel_lo, double pixel_hi) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo, h = log ? std::log10(hi) : hi;
    return pixel_lo + (a - l) / (h - l) * (pixel_hi - pixel_lo);
  }
};

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

Axis fit_axis(const std::vector<Series>& series, bool use_x, bool log) {
  Axis a;
  a.log = log;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], use_x && log) || !usable(s.y[i], !use_x && log)) continue;
      const double v = use_x ? s.x[i] : s.y[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = log ? 1.0 : 0.0;
    hi = log ? 10.0 : 1.0;
  }
  if (hi <= lo) {
    const double pad = log ? lo : std::max(std::abs(lo) * 0.1, 1.0);
    hi = log ? lo * 10.0 : hi + pad;
    lo = log ? lo / 10.0 : lo - pad;
  }
  a.lo = lo;
  a.hi = hi;
  return a;
}

void header(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
}

void axes(std::ostringstream& o, const Axis& ax, const Axis& ay, const std::string& x_label,
          const std::string& y_label) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    const double xv = ax.log ? std::pow(10.0, std::log10(ax.lo) + f * (std::log10(ax.hi) - std::log10(ax.lo)))
                             : ax.lo + f * (ax.hi - ax.lo);
    const double yv = ay.log ? std::pow(10.0, std::log10(ay.lo) + f * (std::log10(ay.hi) - std::log10(ay.lo)))
                             : ay.lo + f * (ay.hi - ay.lo);
    const double px = x0 + f * (x1 - x0), py = y0 + f * (y1 - y0);
    o << "<text x=\"" << px << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    o << "<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (y0 + y1) / 2 << ")\">" << escape(y_label) << "</text>\n";
}

}  // namespace

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label, bool log_x, bool log_y) {
  const Axis ax = fit_axis(series, true, log_x);
  const Axis ay = fit_axis(series, false, log_y);
  std::ostringstream o;
  header(o, title);
  axes(o, ax, ay, x_label, y_label);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const auto& sr = series[s];
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      if (!usable(sr.x[i], log_x) || !usable(sr.y[i], log_y)) continue;
      o << num(ax.map(sr.x[i], kLeft, kWidth - kRight)) << ',' << num(ay.map(sr.y[i], kHeight - kBottom, kTop))
        << ' ';
    }
    o << "\"/>\n";
    o << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << kTop + 14 * (s + 1) << "\" text-anchor=\"end\" fill=\""
      << color << "\">" << escape(sr.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string render_plot(const PlotSpec& spec, const CsvTable& table) {
  spec.validate(table);
  const auto x = table.column(spec.x_column);
  std::vector<Series> series;
  for (const auto& name : spec.series) series.push_back({name, x, table.column(name)});
  return line_plot_svg(series, spec.title, spec.x_label, spec.y_label, spec.log_x, spec.log_y);
}

std::string scatter_svg(const Tensor& samples, const std::vector<std::array<double, 2>>& centers,
                        const std::string& title) {
  if (samples.rank() != 2 || samples.shape()[1] != 2) throw DimensionError("scatter_svg expects [N x 2] samples");
  double extent = 1.0;
  for (const auto& c : centers) extent = std::max({extent, std::abs(c[0]), std::abs(c[1])});
  extent *= 1.5;
  const Axis a{-extent, extent, false};
  std::ostringstream o;
  header(o, title);
  axes(o, a, a, "x", "y");
  // Points outside the frame are drawn on its border.
  auto px = [&](double v) { return a.map(std::clamp(v, -extent, extent), kLeft, kWidth - kRight); };
  auto py = [&](double v) { return a.map(std::clamp(v, -extent, extent), kHeight - kBottom, kTop); };
  for (const auto& c : centers) {
    o << "<circle cx=\"" << num(px(c[0])) << "\" cy=\"" << num(py(c[1])) << "\" r=\"5\" fill=\"none\" stroke=\""
      << kPalette[1] << "\"/>\n";
  }
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    if (!std::isfinite(samples.at(i, 0)) || !std::isfinite(samples.at(i, 1))) continue;
    o << "<circle cx=\"" << num(px(samples.at(i, 0))) << "\" cy=\"" << num(py(samples.at(i, 1)))
      << "\" r=\"1.5\" fill=\"" << kPalette[0] << "\" fill-opacity=\"0.5\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap_svg(const std::vector<std::string>& labels, const std::vector<std::vector<double>>& values,
                        const std::string& title) {
  const std::size_t n = labels.size();
  if (values.size() != n) throw ContractError("heatmap needs one row per label");
  double scale = 0.0;
  for (const auto& row : values) {
    if (row.size() != n) throw ContractError("heatmap needs a square matrix");
    for (double v : row)
      if (std::isfinite(v)) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) scale = 1.0;
  const double cell = 70, left = 130, top = 50;
  const double w = left + cell * static_cast<double>(n) + 20, h = top + cell * static_cast<double>(n) + 20;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    o << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * (static_cast<double>(i) + 0.5) + 4
      << "\" text-anchor=\"end\">" << escape(labels[i]) << "</text>\n";
    o << "<text x=\"" << left + cell * (static_cast<double>(i) + 0.5) << "\" y=\"" << top - 6
      << "\" text-anchor=\"middle\">" << escape(labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i][j];
      const double f = std::isfinite(v) ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
      // Positive: red, negative: blue.
      const int r = f >= 0 ? 255 : static_cast<int>(255 * (1 + f));
      const int b = f <= 0 ? 255 : static_cast<int>(255 * (1 - f));
      const int g = static_cast<int>(255 * (1 - std::abs(f)));
      const double x = left + cell * static_cast<double>(j), y = top + cell * static_cast<double>(i);
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
        << r << ',' << g << ',' << b << ")\" stroke=\"white\"/>\n";
      std::ostringstream cell_text;
      cell_text << std::fixed << std::setprecision(2) << v;
      o << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
        << cell_text.str() << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace gaf
