#include "gaf/soft_forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace gaf {

std::string to_string(Combination c) { return c == Combination::kProduct ? "product" : "average"; }

Combination combination_from_string(const std::string& s) {
  if (s == "average") return Combination::kAverage;
  if (s == "product") return Combination::kProduct;
  throw SpecError("unknown forest combination '" + s + "'");
}

void ForestShape::validate() const {
  if (depth < 1 || depth > 20) throw SpecError("forest depth must be in [1, 20], got " + std::to_string(depth));
  if (trees == 0) throw SpecError("forest needs at least one tree");
  if (classes == 0) throw SpecError("forest needs at least one output class");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw SpecError("forest steepness alpha must be positive");
  if (combination == Combination::kProduct && classes != 1) {
    throw SpecError("product combination requires scalar tree outputs (classes == 1)");
  }
}

nlohmann::json ForestShape::to_json() const {
  return {{"trees", trees}, {"depth", depth}, {"classes", classes}, {"alpha", alpha},
          {"combination", to_string(combination)}};
}

ForestShape ForestShape::from_json(const nlohmann::json& j) {
  ForestShape s;
  s.trees = j.at("trees").get<std::size_t>();
  s.depth = j.at("depth").get<int>();
  s.classes = j.value("classes", std::size_t{1});
  s.alpha = j.value("alpha", 1.0);
  s.combination = combination_from_string(j.value("combination", std::string("average")));
  return s;
}

double soft_decision(double x, double bias, double alpha) { return stable_sigmoid(alpha * (x - bias)); }

SoftTree::SoftTree(int depth, std::vector<double> biases, std::vector<double> leaves, std::size_t classes,
                   double alpha)
    : depth_(depth), alpha_(alpha), classes_(classes), biases_(std::move(biases)), leaves_(std::move(leaves)) {
  ForestShape shape{1, depth, classes, alpha, Combination::kAverage};
  shape.validate();
  if (biases_.size() != shape.internal_nodes() || leaves_.size() != shape.leaves_per_tree() * classes) {
    throw ContractError("soft tree of depth " + std::to_string(depth) + " needs " +
                        std::to_string(shape.internal_nodes()) + " biases and " +
                        std::to_string(shape.leaves_per_tree() * classes) + " leaf values");
  }
}

namespace {

std::size_t internal_count(int depth) { return (std::size_t{1} << depth) - 1; }

void check_activation_count(const SoftTreeView& tree, std::span<const double> activations) {
  if (activations.size() != internal_count(tree.depth)) {
    throw ContractError("tree of depth " + std::to_string(tree.depth) + " expects " +
                        std::to_string(internal_count(tree.depth)) + " activations, got " +
                        std::to_string(activations.size()));
  }
}

// Fills `decisions` (N) and `reach` (2N + 1, heap order; leaves at N..2N).
void route_soft(std::span<const double> activations, std::span<const double> biases, double alpha,
                std::span<double> decisions, std::span<double> reach) {
  const std::size_t n_internal = decisions.size();
  reach[0] = 1.0;
  for (std::size_t n = 0; n < n_internal; ++n) {
    const double d = soft_decision(activations[n], biases[n], alpha);
    decisions[n] = d;
    reach[2 * n + 1] = reach[n] * d;
    reach[2 * n + 2] = reach[n] * (1.0 - d);
  }
}

}  // namespace

std::vector<double> leaf_blend(const SoftTreeView& tree, std::span<const double> activations) {
  check_activation_count(tree, activations);
  const std::size_t n = internal_count(tree.depth);
  std::vector<double> decisions(n), reach(2 * n + 1);
  route_soft(activations, tree.biases, tree.alpha, decisions, reach);
  return {reach.begin() + static_cast<std::ptrdiff_t>(n), reach.end()};
}

std::vector<double> tree_output(const SoftTreeView& tree, std::span<const double> activations) {
  const std::vector<double> mu = leaf_blend(tree, activations);
  std::vector<double> out(tree.classes, 0.0);
  for (std::size_t l = 0; l < mu.size(); ++l)
    for (std::size_t c = 0; c < tree.classes; ++c) out[c] += mu[l] * tree.leaves[l * tree.classes + c];
  return out;
}

SoftForest::SoftForest(ForestShape shape)
    : SoftForest(shape, Tensor(Shape{shape.trees, shape.internal_nodes()}),
                 Tensor(Shape{shape.trees, shape.leaves_per_tree(), shape.classes})) {}

SoftForest::SoftForest(ForestShape shape, Tensor biases, Tensor leaves)
    : shape_(shape), biases_(std::move(biases)), leaves_(std::move(leaves)) {
  shape_.validate();
  if (biases_.size() != shape_.bias_count() || leaves_.size() != shape_.leaf_count()) {
    throw ContractError("forest parameter tensors do not match shape (" + std::to_string(shape_.bias_count()) +
                        " biases, " + std::to_string(shape_.leaf_count()) + " leaves expected)");
  }
}

SoftForest SoftForest::random(ForestShape shape, std::mt19937_64& rng, double stddev) {
  SoftForest f(shape);
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : f.biases_.data()) v = normal(rng);
  for (double& v : f.leaves_.data()) v = normal(rng);
  return f;
}

SoftTreeView SoftForest::tree(std::size_t t) const {
  const std::size_t nb = shape_.internal_nodes();
  const std::size_t nl = shape_.leaves_per_tree() * shape_.classes;
  return {shape_.depth, shape_.alpha, shape_.classes, biases_.data().subspan(t * nb, nb),
          leaves_.data().subspan(t * nl, nl)};
}

std::span<const double> SoftForest::tree_activations(std::span<const double> activations, std::size_t t) const {
  if (activations.size() != shape_.input_width()) {
    throw ContractError("forest expects " + std::to_string(shape_.input_width()) + " activations, got " +
                        std::to_string(activations.size()));
  }
  return activations.subspan(t * shape_.internal_nodes(), shape_.internal_nodes());
}

nlohmann::json SoftForest::to_json() const {
  nlohmann::json j = shape_.to_json();
  j["biases"] = biases_.values();
  j["leaves"] = leaves_.values();
  return j;
}

SoftForest SoftForest::from_json(const nlohmann::json& j) {
  const ForestShape shape = ForestShape::from_json(j);
  auto biases = j.at("biases").get<std::vector<double>>();
  auto leaves = j.at("leaves").get<std::vector<double>>();
  if (biases.size() != shape.bias_count() || leaves.size() != shape.leaf_count()) {
    throw ContractError("forest checkpoint parameter counts do not match its shape");
  }
  return SoftForest(shape, Tensor(Shape{shape.trees, shape.internal_nodes()}, std::move(biases)),
                    Tensor(Shape{shape.trees, shape.leaves_per_tree(), shape.classes}, std::move(leaves)));
}

std::vector<double> tree_value(const SoftForest& forest, std::size_t t, std::span<const double> activations) {
  std::vector<double> q = tree_output(forest.tree(t), forest.tree_activations(activations, t));
  if (forest.shape().combination == Combination::kProduct) q[0] = std::exp(q[0]);
  return q;
}

namespace {

// Sum over trees of the blended leaf vectors (log Q_t in product mode).
std::vector<double> blended_sum(const SoftForest& forest, std::span<const double> activations) {
  std::vector<double> acc(forest.shape().classes, 0.0);
  for (std::size_t t = 0; t < forest.shape().trees; ++t) {
    const auto q = tree_output(forest.tree(t), forest.tree_activations(activations, t));
    for (std::size_t c = 0; c < q.size(); ++c) acc[c] += q[c];
  }
  return acc;
}

}  // namespace

std::vector<double> forest_forward(const SoftForest& forest, std::span<const double> activations) {
  std::vector<double> acc = blended_sum(forest, activations);
  if (forest.shape().combination == Combination::kProduct) return {std::exp(acc[0])};
  for (double& v : acc) v /= static_cast<double>(forest.shape().trees);
  return acc;
}

double forest_probability(const SoftForest& forest, std::span<const double> activations) {
  if (forest.shape().combination != Combination::kProduct) {
    throw ContractError("forest_probability is defined for product forests");
  }
  return stable_sigmoid(blended_sum(forest, activations)[0]);
}

Var forest_layer(Graph& graph, Var activations, Var biases, Var leaves, const ForestShape& shape) {
  shape.validate();
  const Tensor& act = graph.value(activations);
  const Tensor& bias_t = graph.value(biases);
  const Tensor& leaf_t = graph.value(leaves);
  const std::size_t width = shape.input_width();
  if (act.rank() != 2 || act.shape()[1] != width) {
    throw ContractError("forest layer expects activations [B x " + std::to_string(width) + "], got " +
                        shape_string(act.shape()));
  }
  if (bias_t.size() != shape.bias_count() || leaf_t.size() != shape.leaf_count()) {
    throw ContractError("forest layer parameter tensors do not match the forest shape");
  }

  const std::size_t batch = act.shape()[0];
  const std::size_t n_internal = shape.internal_nodes();
  const std::size_t n_leaves = shape.leaves_per_tree();
  const std::size_t classes = shape.classes;
  const std::size_t out_width = shape.output_width();
  const double tree_scale = shape.combination == Combination::kProduct ? 1.0 : 1.0 / static_cast<double>(shape.trees);

  // Decisions are kept for the backward pass.
  auto decisions = std::make_shared<std::vector<double>>(batch * width);
  Tensor out(Shape{batch, out_width});
  std::vector<double> reach(2 * n_internal + 1);
  auto ad = act.data();
  auto bd = bias_t.data();
  auto ld = leaf_t.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < shape.trees; ++t) {
      std::span<double> dec(decisions->data() + b * width + t * n_internal, n_internal);
      route_soft(ad.subspan(b * width + t * n_internal, n_internal), bd.subspan(t * n_internal, n_internal),
                 shape.alpha, dec, reach);
      const double* leaf = &ld[t * n_leaves * classes];
      for (std::size_t l = 0; l < n_leaves; ++l) {
        const double mu = reach[n_internal + l] * tree_scale;
        for (std::size_t c = 0; c < classes; ++c) out.at(b, c) += mu * leaf[l * classes + c];
      }
    }
  }

  const Tensor* leaf_ptr = &leaf_t;
  auto backward = [=](std::span<const double> g, std::span<const std::span<double>> in_grads) {
    const std::span<double> g_act = in_grads[0];
    const std::span<double> g_bias = in_grads[1];
    const std::span<double> g_leaf = in_grads[2];
    auto lv = leaf_ptr->data();
    std::vector<double> reach_b(2 * n_internal + 1);
    std::vector<double> value(2 * n_internal + 1);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gb = &g[b * out_width];
      for (std::size_t t = 0; t < shape.trees; ++t) {
        const double* dec = decisions->data() + b * width + t * n_internal;
        reach_b[0] = 1.0;
        for (std::size_t n = 0; n < n_internal; ++n) {
          reach_b[2 * n + 1] = reach_b[n] * dec[n];
          reach_b[2 * n + 2] = reach_b[n] * (1.0 - dec[n]);
        }
        const double* leaf = &lv[t * n_leaves * classes];
        for (std::size_t l = 0; l < n_leaves; ++l) {
          double v = 0.0;
          for (std::size_t c = 0; c < classes; ++c) {
            const double gc = gb[c] * tree_scale;
            v += leaf[l * classes + c] * gc;
            if (!g_leaf.empty()) g_leaf[(t * n_leaves + l) * classes + c] += reach_b[n_internal + l] * gc;
          }
          value[n_internal + l] = v;
        }
        if (g_act.empty() && g_bias.empty()) continue;
        for (std::size_t n = n_internal; n-- > 0;) {
          const double d = dec[n];
          const double left = value[2 * n + 1];
          const double right = value[2 * n + 2];
          value[n] = d * left + (1.0 - d) * right;
          const double dd = reach_b[n] * (left - right) * shape.alpha * d * (1.0 - d);
          if (!g_act.empty()) g_act[b * width + t * n_internal + n] += dd;
          if (!g_bias.empty()) g_bias[t * n_internal + n] -= dd;
        }
      }
    }
  };
  return graph.custom("forest", {activations, biases, leaves}, std::move(out), backward);
}

Var forest_layer(Graph& graph, Var activations, SoftForest& forest) {
  const Var b = graph.parameter(forest.biases());
  const Var l = graph.parameter(forest.leaves());
  return forest_layer(graph, activations, b, l, forest.shape());
}

// --- hard forest -------------------------------------------------------------

std::size_t HardTree::route(std::span<const double> x) const {
  std::size_t n = 0;
  for (int level = 0; level < depth; ++level) {
    n = x[axes[n]] > thresholds[n] ? 2 * n + 1 : 2 * n + 2;
  }
  return n - internal_count(depth);
}

double HardForest::predict(std::span<const double> x) const {
  if (trees.empty()) throw ContractError("hard forest has no trees");
  double acc = 0.0;
  for (const HardTree& t : trees) acc += t.leaves[t.route(x)];
  return acc / static_cast<double>(trees.size());
}

double hard_forest_predict(const HardForest& forest, std::span<const double> x) { return forest.predict(x); }

HardForest hard_forest_fit(const Tensor& data, std::span<const double> values, const std::vector<HardSplits>& splits) {
  if (data.rank() != 2 || data.shape()[0] == 0 || values.empty()) {
    throw ContractError("hard_forest_fit needs a non-empty [N x F] dataset");
  }
  if (values.size() != data.shape()[0]) throw ContractError("hard_forest_fit: one value per sample required");
  if (splits.empty()) throw ContractError("hard_forest_fit: at least one tree required");
  const std::size_t features = data.shape()[1];

  HardForest forest;
  for (const HardSplits& s : splits) {
    const std::size_t n_internal = internal_count(s.depth);
    if (s.depth < 0 || s.axes.size() != n_internal || s.thresholds.size() != n_internal) {
      throw ContractError("hard tree split arrays do not match its depth");
    }
    for (std::size_t a : s.axes) {
      if (a >= features) throw ContractError("hard tree split axis out of range");
    }
    HardTree tree{s.depth, s.axes, s.thresholds, {}};
    std::vector<double> sums(2 * n_internal + 1, 0.0);
    std::vector<std::size_t> counts(2 * n_internal + 1, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto x = data.row(i);
      std::size_t n = 0;
      sums[n] += values[i];
      ++counts[n];
      for (int level = 0; level < s.depth; ++level) {
        n = x[s.axes[n]] > s.thresholds[n] ? 2 * n + 1 : 2 * n + 2;
        sums[n] += values[i];
        ++counts[n];
      }
    }
    tree.leaves.resize(n_internal + 1);
    for (std::size_t l = 0; l <= n_internal; ++l) {
      std::size_t n = n_internal + l;
      while (counts[n] == 0) n = (n - 1) / 2;  // the root always has samples
      tree.leaves[l] = sums[n] / static_cast<double>(counts[n]);
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

HardForest hard_forest_fit_midpoint(const Tensor& data, std::span<const double> values, std::size_t trees,
                                    int depth) {
  if (data.rank() != 2 || data.shape()[0] == 0 || values.empty()) {
    throw ContractError("hard_forest_fit_midpoint needs a non-empty [N x F] dataset");
  }
  if (depth < 0) throw ContractError("hard tree depth must be non-negative");
  const std::size_t features = data.shape()[1];
  const std::size_t n_internal = internal_count(depth);
  std::vector<HardSplits> splits;
  for (std::size_t t = 0; t < trees; ++t) {
    HardSplits s{depth, std::vector<std::size_t>(n_internal), std::vector<double>(n_internal, 0.0)};
    std::vector<std::vector<std::size_t>> members(2 * n_internal + 1);
    members[0].resize(data.shape()[0]);
    for (std::size_t i = 0; i < members[0].size(); ++i) members[0][i] = i;
    for (std::size_t n = 0; n < n_internal; ++n) {
      std::size_t level = 0;
      for (std::size_t k = n + 1; k > 1; k /= 2) ++level;
      const std::size_t axis = (t + level) % features;
      s.axes[n] = axis;
      if (!members[n].empty()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i : members[n]) {
          lo = std::min(lo, data.at(i, axis));
          hi = std::max(hi, data.at(i, axis));
        }
        s.thresholds[n] = 0.5 * (lo + hi);
      }
      for (std::size_t i : members[n]) {
        members[data.at(i, axis) > s.thresholds[n] ? 2 * n + 1 : 2 * n + 2].push_back(i);
      }
    }
    splits.push_back(std::move(s));
  }
  return hard_forest_fit(data, values, splits);
}

}  // namespace gaf
