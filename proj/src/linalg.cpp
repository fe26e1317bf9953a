#include "gaf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace gaf {

SingularSpectrum SingularSpectrum::from_values(std::vector<double> values, std::size_t rows, std::size_t cols) {
  std::sort(values.begin(), values.end(), std::greater<>());
  SingularSpectrum s;
  const double top = values.empty() ? 0.0 : values.front();
  s.rank_tolerance = 1e-12 * top * static_cast<double>(std::max(rows, cols));
  s.values = std::move(values);
  return s;
}

SingularSpectrum singular_values(const Tensor& matrix) {
  if (matrix.rank() != 2) throw DimensionError("singular_values needs a matrix, got " + shape_string(matrix.shape()));
  if (!matrix.all_finite()) throw DomainError("singular_values: matrix has non-finite entries");

  const std::size_t m = matrix.shape()[0], n = matrix.shape()[1];
  // Work on columns of A (rows x cols) with cols = min(m, n); store column-major.
  const bool flip = n > m;
  const std::size_t rows = flip ? n : m;
  const std::size_t cols = flip ? m : n;
  std::vector<double> a(rows * cols);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = matrix.at(i, j);
      if (flip) {
        a[i * rows + j] = v;  // column i of A^T
      } else {
        a[j * rows + i] = v;
      }
    }

  auto col = [&](std::size_t j) { return a.data() + j * rows; };
  constexpr double kEps = 1e-14;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double* cp = col(p);
        double* cq = col(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += cp[i] * cp[i];
          beta += cq[i] * cq[i];
          gamma += cp[i] * cq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double x = cp[i];
          const double y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> values(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double norm = 0.0;
    const double* cj = col(j);
    for (std::size_t i = 0; i < rows; ++i) norm += cj[i] * cj[i];
    values[j] = std::sqrt(norm);
  }
  return SingularSpectrum::from_values(std::move(values), m, n);
}

namespace {

ConditionReading reading_of(const SingularSpectrum& spectrum) {
  ConditionReading r;
  double smallest = 0.0;
  for (double v : spectrum.values) {
    if (v > spectrum.rank_tolerance) {
      ++r.rank;
      smallest = v;
    }
  }
  if (r.rank > 0) r.value = spectrum.values.front() / smallest;
  return r;
}

}  // namespace

ConditionReading condition_number(const SingularSpectrum& spectrum) {
  ConditionReading r = reading_of(spectrum);
  if (r.degenerate()) throw DegenerateMatrixError("condition number undefined: no singular value above tolerance");
  return r;
}

ConditionReading measure_condition(const Tensor& matrix) { return reading_of(singular_values(matrix)); }

}  // namespace gaf
