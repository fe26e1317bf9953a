#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/autodiff.hpp"
#include "gaf/tensor.hpp"

namespace gaf {

/// How per-tree predictions are merged.
///
/// kAverage: mean of the trees' blended leaf vectors (C outputs per tree).
/// kProduct: multiplicative residual ensemble S = prod_t Q_t with scalar
///           Q_t = exp(sum_l mu_l * lambda_l); the layer emits log S, and the
///           probability is sigmoid(log S) = S / (1 + S).
enum class Combination { kAverage, kProduct };

std::string to_string(Combination c);
Combination combination_from_string(const std::string& s);

struct ForestShape {
  std::size_t trees = 1;
  int depth = 1;
  std::size_t classes = 1;
  double alpha = 1.0;
  Combination combination = Combination::kAverage;

  std::size_t internal_nodes() const { return (std::size_t{1} << depth) - 1; }
  std::size_t leaves_per_tree() const { return std::size_t{1} << depth; }
  std::size_t input_width() const { return trees * internal_nodes(); }
  std::size_t bias_count() const { return trees * internal_nodes(); }
  std::size_t leaf_count() const { return trees * leaves_per_tree() * classes; }
  std::size_t parameter_count() const { return bias_count() + leaf_count(); }
  std::size_t output_width() const { return combination == Combination::kProduct ? 1 : classes; }

  // Throws SpecError on depth < 1, zero trees/classes, alpha <= 0, or a
  // product forest with more than one output.
  void validate() const;

  nlohmann::json to_json() const;
  static ForestShape from_json(const nlohmann::json& j);
};

// sigma(alpha * (x - b)): the share of the input routed to the LEFT subtree.
double soft_decision(double x, double bias, double alpha);

/// Read-only view of one tree's parameters.
///
/// Internal nodes are stored breadth-first (heap order: children of n are
/// 2n+1 on the left and 2n+2 on the right); leaf l holds `classes` values at
/// leaves[l * classes ...].
struct SoftTreeView {
  int depth = 1;
  double alpha = 1.0;
  std::size_t classes = 1;
  std::span<const double> biases;
  std::span<const double> leaves;
};

class SoftTree {
 public:
  SoftTree(int depth, std::vector<double> biases, std::vector<double> leaves, std::size_t classes = 1,
           double alpha = 1.0);

  int depth() const { return depth_; }
  double alpha() const { return alpha_; }
  std::size_t classes() const { return classes_; }
  const std::vector<double>& biases() const { return biases_; }
  const std::vector<double>& leaves() const { return leaves_; }
  SoftTreeView view() const { return {depth_, alpha_, classes_, biases_, leaves_}; }

 private:
  int depth_;
  double alpha_;
  std::size_t classes_;
  std::vector<double> biases_;
  std::vector<double> leaves_;
};

// Blending weights mu_l for every leaf, left to right.
std::vector<double> leaf_blend(const SoftTreeView& tree, std::span<const double> activations);

// sum_l mu_l * q_l, one value per class.
std::vector<double> tree_output(const SoftTreeView& tree, std::span<const double> activations);

/// Ensemble of equally shaped soft trees.
///
/// Tree t reads activations [t * N, (t + 1) * N) where N = 2^depth - 1, node n
/// of that tree reading activation t * N + n. Biases are a [T x N] tensor and
/// leaves a [T x 2^depth x C] tensor.
class SoftForest {
 public:
  explicit SoftForest(ForestShape shape);
  SoftForest(ForestShape shape, Tensor biases, Tensor leaves);
  // Gaussian(0, stddev) biases and leaves.
  static SoftForest random(ForestShape shape, std::mt19937_64& rng, double stddev = 0.02);

  const ForestShape& shape() const { return shape_; }
  Tensor& biases() { return biases_; }
  const Tensor& biases() const { return biases_; }
  Tensor& leaves() { return leaves_; }
  const Tensor& leaves() const { return leaves_; }

  SoftTreeView tree(std::size_t t) const;
  std::span<const double> tree_activations(std::span<const double> activations, std::size_t t) const;

  nlohmann::json to_json() const;
  static SoftForest from_json(const nlohmann::json& j);

 private:
  ForestShape shape_;
  Tensor biases_;
  Tensor leaves_;
};

// Q_t under the forest's leaf parameterization: the blended vector for
// average mode, exp of the blended scalar for product mode.
std::vector<double> tree_value(const SoftForest& forest, std::size_t t, std::span<const double> activations);

// Average mode: (1/T) sum_t Q_t (C values). Product mode: {S}.
std::vector<double> forest_forward(const SoftForest& forest, std::span<const double> activations);

// Product mode only: S / (1 + S), evaluated as sigmoid(sum_t log Q_t).
double forest_probability(const SoftForest& forest, std::span<const double> activations);

// Differentiable forest layer on a batch.
//
// activations: [B x T*N]; biases: [T x N]; leaves: [T x 2^depth x C].
// Returns [B x C] averaged leaf blends (average mode) or [B x 1] log S
// (product mode). Leaves and biases receive gradients in the same pass.
Var forest_layer(Graph& graph, Var activations, Var biases, Var leaves, const ForestShape& shape);

// Convenience: registers the forest's tensors as parameters.
Var forest_layer(Graph& graph, Var activations, SoftForest& forest);

// --- Classic hard-routing forest --------------------------------------------

/// Hard decision tree. Node n sends x to the left child when
/// x[axes[n]] > thresholds[n]; ties and smaller values go right, matching the
/// soft tree's limit as alpha grows.
struct HardTree {
  int depth = 0;
  std::vector<std::size_t> axes;
  std::vector<double> thresholds;
  std::vector<double> leaves;

  std::size_t route(std::span<const double> x) const;
};

struct HardForest {
  std::vector<HardTree> trees;

  double predict(std::span<const double> x) const;
};

struct HardSplits {
  int depth = 0;
  std::vector<std::size_t> axes;
  std::vector<double> thresholds;
};

// Leaf value = mean of the values routed into it. An empty leaf takes the
// mean of its nearest non-empty ancestor.
HardForest hard_forest_fit(const Tensor& data, std::span<const double> values, const std::vector<HardSplits>& splits);

// Chooses splits itself: node at level k of tree t splits axis (t + k) mod F at
// the midpoint of that axis' range among the samples reaching it.
HardForest hard_forest_fit_midpoint(const Tensor& data, std::span<const double> values, std::size_t trees,
                                    int depth);

double hard_forest_predict(const HardForest& forest, std::span<const double> x);

}  // namespace gaf
