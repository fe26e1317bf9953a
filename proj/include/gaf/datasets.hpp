#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/tensor.hpp"

namespace gaf {

enum class DatasetKind { kXor, kGaussianRing, kTwoMoons, kSpiral };

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianRing;
  std::size_t dim = 3;             // xor: number of input bits
  bool signed_inputs = true;       // xor: bits as -1/+1 instead of 0/1
  std::size_t modes = 8;           // gaussian_ring
  double radius = 2.0;             // gaussian_ring
  double sigma = 0.1;             // gaussian_ring std, moons/spiral noise
  std::size_t classes = 3;         // spiral arms
  std::size_t n_samples = 2000;    // ignored for xor (full truth table)
  double train_fraction = 0.9;     // 9:1 train/validation split
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
  // Canonical JSON text; equal fingerprints mean identical splits.
  std::string fingerprint() const;
};

struct Dataset {
  Tensor train_x;
  std::vector<std::size_t> train_y;
  Tensor val_x;  // may be empty (rows == 0 is encoded as has_validation == false)
  std::vector<std::size_t> val_y;
  bool has_validation = false;
  std::size_t classes = 2;
};

// Deterministic in the spec (including its seed). XOR yields the complete
// truth table as training data with labels = parity, and no validation split.
Dataset generate(const DatasetSpec& spec);

std::vector<std::array<double, 2>> ring_centers(const DatasetSpec& spec);

}  // namespace gaf
