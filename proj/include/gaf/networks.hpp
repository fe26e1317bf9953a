#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/autodiff.hpp"
#include "gaf/soft_forest.hpp"
#include "gaf/tensor.hpp"

namespace gaf {

enum class LayerKind { kAffine, kRelu, kSigmoid, kFcHead, kForestHead };

struct LayerSpec {
  LayerKind kind = LayerKind::kAffine;
  std::size_t in = 0;   // affine only
  std::size_t out = 0;  // affine and fc_head
  ForestShape forest;   // forest_head only

  static LayerSpec affine(std::size_t in, std::size_t out) { return {LayerKind::kAffine, in, out, {}}; }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, {}}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid, 0, 0, {}}; }
  static LayerSpec fc_head(std::size_t out) { return {LayerKind::kFcHead, 0, out, {}}; }
  static LayerSpec forest_head(ForestShape shape) { return {LayerKind::kForestHead, 0, 0, shape}; }
};

// Declarative layer stack. The last layer is the single head (fc_head or
// forest_head); a stack without a head is a plain MLP (used for generators).
struct ModelSpec {
  std::string name;
  std::size_t input_width = 0;
  std::vector<LayerSpec> layers;
  double init_std = 0.02;

  // Width checks and head placement; throws SpecError.
  void validate() const;
  std::size_t output_width() const;
  bool has_head() const;
  std::size_t parameter_count() const;
  std::size_t head_parameter_count() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct PresetOptions {
  std::size_t xor_dim = 3;
  int xor_tree_depth = 2;
  std::size_t classes = 3;
  std::size_t latent_dim = 2;
  double init_std = 0.02;

  nlohmann::json to_json() const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static PresetOptions from_json(const nlohmann::json& j, PresetOptions base);
};

// xor_fc, xor_tree, clf_fc, clf_forest, gan_fc, gan_forest_shallow,
// gan_forest_deep, gan_generator.
ModelSpec preset(const std::string& name, const PresetOptions& options = {});
std::vector<std::string> preset_names();

// Full-scale forest heads used for the parameter budget checks.
ForestShape full_scale_shallow_head();  // 8192 trees, depth 1
ForestShape full_scale_deep_head();     // 16 trees, depth 9

// How a network's tensors enter a graph.
enum class ParamMode { kTrainable, kFrozen };

class Network {
 public:
  static Network build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  // Stable order: layer by layer; affine = {weight [in x out], bias [out]},
  // forest = {biases [T x N], leaves [T x 2^d x C]}.
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  // Index into parameters() where the head's tensors begin.
  std::size_t head_begin() const { return head_begin_; }
  void zero_grad();

  Var forward(Graph& g, Var input, ParamMode mode);
  Var forward(Graph& g, Var input) const;
  Var body(Graph& g, Var input, ParamMode mode);
  Var body(Graph& g, Var input) const;
  Var head(Graph& g, Var features, ParamMode mode);
  Var head(Graph& g, Var features) const;

  // Pure evaluation; no gradients touched.
  Tensor forward(const Tensor& batch) const;
  Tensor features(const Tensor& batch) const;

  nlohmann::json checkpoint() const;
  static Network from_checkpoint(const nlohmann::json& j);

 private:
  Var run_layers(Graph& g, Var x, std::size_t begin, std::size_t end, std::vector<Tensor>* mutable_params) const;

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<Tensor> params_;
  std::vector<std::size_t> layer_param_offset_;
  std::size_t head_begin_ = 0;
};

enum class HeadLoss { kBinary, kSoftmax };

struct JacobianResult {
  Tensor output;                // [B x out] head output
  Tensor jacobian;              // [B x P]
  std::vector<double> losses;   // per-instance L(i)
};

inline constexpr double kRootLossEpsilon = 1e-12;

// Row i holds d sqrt(L(i) + eps) / d theta over the head parameters (or all
// parameters when full_network is set), computed with one backward pass per
// instance on copies of the parameters. Binary targets are 0/1; softmax targets
// are class indices stored as doubles.
JacobianResult with_head_jacobian(const Network& net, const Tensor& batch, std::span<const double> targets,
                                  HeadLoss loss, bool full_network = false);

}  // namespace gaf
