#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "gaf/tensor.hpp"

namespace gaf {

class DegenerateMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SingularSpectrum {
  std::vector<double> values;  // descending, non-negative, length min(m, n)
  double rank_tolerance = 0.0;

  // Default tolerance is 1e-12 * sigma_max * max(rows, cols).
  static SingularSpectrum from_values(std::vector<double> values, std::size_t rows, std::size_t cols);
};

struct ConditionReading {
  double value = std::numeric_limits<double>::infinity();
  std::size_t rank = 0;

  bool degenerate() const { return rank == 0; }
};

// Singular values by one-sided (Hestenes) Jacobi rotations on the narrower
// orientation of the matrix.
SingularSpectrum singular_values(const Tensor& matrix);

// sigma_max over the smallest singular value above the rank tolerance.
// Throws DegenerateMatrixError when nothing clears the tolerance.
ConditionReading condition_number(const SingularSpectrum& spectrum);

// Same as condition_number but reports a degenerate matrix as rank 0 with an
// infinite value instead of throwing. Used for metric logging.
ConditionReading measure_condition(const Tensor& matrix);

}  // namespace gaf
