#include "gaf/networks.hpp"

#include <cmath>
#include <random>

#include "gaf/losses.hpp"

namespace gaf {

namespace {

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kAffine: return "affine";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kFcHead: return "fc_head";
    case LayerKind::kForestHead: return "forest_head";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "affine") return LayerKind::kAffine;
  if (s == "relu") return LayerKind::kRelu;
  if (s == "sigmoid") return LayerKind::kSigmoid;
  if (s == "fc_head") return LayerKind::kFcHead;
  if (s == "forest_head") return LayerKind::kForestHead;
  throw SpecError("unknown layer type '" + s + "'");
}

bool is_head(LayerKind k) { return k == LayerKind::kFcHead || k == LayerKind::kForestHead; }

// Parameter tensor shapes of one layer given its input width.
std::vector<Shape> layer_shapes(const LayerSpec& layer, std::size_t width) {
  switch (layer.kind) {
    case LayerKind::kAffine: return {{layer.in, layer.out}, {layer.out}};
    case LayerKind::kFcHead: return {{width, layer.out}, {layer.out}};
    case LayerKind::kForestHead: {
      const ForestShape& f = layer.forest;
      return {{f.trees, f.internal_nodes()}, {f.trees, f.leaves_per_tree(), f.classes}};
    }
    default: return {};
  }
}

std::size_t layer_out_width(const LayerSpec& layer, std::size_t width) {
  switch (layer.kind) {
    case LayerKind::kAffine:
    case LayerKind::kFcHead: return layer.out;
    case LayerKind::kForestHead: return layer.forest.output_width();
    default: return width;
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (input_width == 0) throw SpecError("model '" + name + "' needs a positive input width");
  if (layers.empty()) throw SpecError("model '" + name + "' has no layers");
  std::size_t width = input_width;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (is_head(l.kind) && i + 1 != layers.size()) {
      throw SpecError("model '" + name + "': the head must be the final layer");
    }
    switch (l.kind) {
      case LayerKind::kAffine:
        if (l.in != width || l.out == 0) {
          throw SpecError("model '" + name + "': affine layer " + std::to_string(i) + " expects width " +
                          std::to_string(l.in) + " but receives " + std::to_string(width));
        }
        break;
      case LayerKind::kFcHead:
        if (l.out == 0) throw SpecError("model '" + name + "': fc_head needs a positive output width");
        break;
      case LayerKind::kForestHead:
        l.forest.validate();
        if (l.forest.input_width() != width) {
          throw SpecError("model '" + name + "': forest_head with " + std::to_string(l.forest.trees) +
                          " trees of depth " + std::to_string(l.forest.depth) + " needs input width " +
                          std::to_string(l.forest.input_width()) + ", got " + std::to_string(width));
        }
        break;
      default:
        break;
    }
    width = layer_out_width(l, width);
  }
  if (!(init_std >= 0.0)) throw SpecError("model '" + name + "': init_std must be non-negative");
}

std::size_t ModelSpec::output_width() const {
  std::size_t width = input_width;
  for (const LayerSpec& l : layers) width = layer_out_width(l, width);
  return width;
}

bool ModelSpec::has_head() const { return !layers.empty() && is_head(layers.back().kind); }

std::size_t ModelSpec::parameter_count() const {
  std::size_t total = 0, width = input_width;
  for (const LayerSpec& l : layers) {
    for (const Shape& s : layer_shapes(l, width)) total += shape_size(s);
    width = layer_out_width(l, width);
  }
  return total;
}

std::size_t ModelSpec::head_parameter_count() const {
  if (!has_head()) return 0;
  std::size_t width = input_width;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) width = layer_out_width(layers[i], width);
  std::size_t total = 0;
  for (const Shape& s : layer_shapes(layers.back(), width)) total += shape_size(s);
  return total;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json layers_j = nlohmann::json::array();
  for (const LayerSpec& l : layers) {
    nlohmann::json lj{{"type", kind_name(l.kind)}};
    if (l.kind == LayerKind::kAffine) {
      lj["in"] = l.in;
      lj["out"] = l.out;
    } else if (l.kind == LayerKind::kFcHead) {
      lj["out"] = l.out;
    } else if (l.kind == LayerKind::kForestHead) {
      lj.update(l.forest.to_json());
    }
    layers_j.push_back(std::move(lj));
  }
  return {{"name", name}, {"input_width", input_width}, {"init_std", init_std}, {"layers", layers_j}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.name = j.value("name", std::string("model"));
  s.input_width = j.at("input_width").get<std::size_t>();
  s.init_std = j.value("init_std", 0.02);
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.kind = kind_from_name(lj.at("type").get<std::string>());
    if (l.kind == LayerKind::kAffine) {
      l.in = lj.at("in").get<std::size_t>();
      l.out = lj.at("out").get<std::size_t>();
    } else if (l.kind == LayerKind::kFcHead) {
      l.out = lj.at("out").get<std::size_t>();
    } else if (l.kind == LayerKind::kForestHead) {
      l.forest = ForestShape::from_json(lj);
    }
    s.layers.push_back(l);
  }
  s.validate();
  return s;
}

namespace {

// Desk-scale discriminator/classifier body: in -> 64 -> relu -> 63.
constexpr std::size_t kBodyHidden = 64;
constexpr std::size_t kBodyWidth = 63;

std::vector<LayerSpec> mlp_body(std::size_t in) {
  return {LayerSpec::affine(in, kBodyHidden), LayerSpec::relu(), LayerSpec::affine(kBodyHidden, kBodyWidth)};
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"xor_fc", "xor_tree", "clf_fc", "clf_forest", "gan_fc", "gan_forest_shallow", "gan_forest_deep",
          "gan_generator"};
}

nlohmann::json PresetOptions::to_json() const {
  return {{"xor_dim", xor_dim},
          {"xor_tree_depth", xor_tree_depth},
          {"classes", classes},
          {"latent_dim", latent_dim},
          {"init_std", init_std}};
}

PresetOptions PresetOptions::from_json(const nlohmann::json& j, PresetOptions o) {
  for (const auto& [key, value] : j.items()) {
    if (key == "xor_dim") o.xor_dim = value.get<std::size_t>();
    else if (key == "xor_tree_depth") o.xor_tree_depth = value.get<int>();
    else if (key == "classes") o.classes = value.get<std::size_t>();
    else if (key == "latent_dim") o.latent_dim = value.get<std::size_t>();
    else if (key == "init_std") o.init_std = value.get<double>();
    else throw SpecError("unknown model option '" + key + "'");
  }
  return o;
}

ModelSpec preset(const std::string& name, const PresetOptions& o) {
  ModelSpec s;
  s.name = name;
  s.init_std = o.init_std;
  if (name == "xor_fc" || name == "xor_tree") {
    // Both XOR models share the hidden width 2^depth - 1 (3 for depth 2).
    const std::size_t hidden = (std::size_t{1} << o.xor_tree_depth) - 1;
    s.input_width = o.xor_dim;
    s.layers.push_back(LayerSpec::affine(o.xor_dim, hidden));
    if (name == "xor_fc") {
      s.layers.push_back(LayerSpec::relu());
      s.layers.push_back(LayerSpec::fc_head(1));
    } else {
      s.layers.push_back(LayerSpec::forest_head({1, o.xor_tree_depth, 1, 1.0, Combination::kAverage}));
    }
  } else if (name == "clf_fc" || name == "clf_forest") {
    s.input_width = 2;
    s.layers = mlp_body(2);
    if (name == "clf_fc") {
      s.layers.push_back(LayerSpec::relu());
      s.layers.push_back(LayerSpec::fc_head(o.classes));
    } else {
      s.layers.push_back(LayerSpec::forest_head({21, 2, o.classes, 1.0, Combination::kAverage}));
    }
  } else if (name == "gan_fc" || name == "gan_forest_shallow" || name == "gan_forest_deep") {
    s.input_width = 2;
    s.layers = mlp_body(2);
    if (name == "gan_fc") {
      s.layers.push_back(LayerSpec::relu());
      s.layers.push_back(LayerSpec::fc_head(1));
    } else if (name == "gan_forest_shallow") {
      s.layers.push_back(LayerSpec::forest_head({63, 1, 1, 1.0, Combination::kProduct}));
    } else {
      s.layers.push_back(LayerSpec::forest_head({9, 3, 1, 1.0, Combination::kProduct}));
    }
  } else if (name == "gan_generator") {
    s.input_width = o.latent_dim;
    s.layers = {LayerSpec::affine(o.latent_dim, kBodyHidden), LayerSpec::relu(),
                LayerSpec::affine(kBodyHidden, kBodyHidden), LayerSpec::relu(), LayerSpec::affine(kBodyHidden, 2)};
  } else {
    throw SpecError("unknown preset '" + name + "'");
  }
  s.validate();
  return s;
}

ForestShape full_scale_shallow_head() { return {8192, 1, 1, 1.0, Combination::kProduct}; }
ForestShape full_scale_deep_head() { return {16, 9, 1, 1.0, Combination::kProduct}; }

Network Network::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  net.seed_ = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t width = spec.input_width;
  for (const LayerSpec& l : spec.layers) {
    net.layer_param_offset_.push_back(net.params_.size());
    if (is_head(l.kind)) net.head_begin_ = net.params_.size();
    const auto shapes = layer_shapes(l, width);
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      Tensor t(shapes[k]);
      // Affine biases start at zero; weights and all forest values are Gaussian.
      const bool zero_init = (l.kind == LayerKind::kAffine || l.kind == LayerKind::kFcHead) && k == 1;
      if (!zero_init) {
        for (double& v : t.data()) v = spec.init_std * normal(rng);
      }
      net.params_.push_back(std::move(t));
    }
    width = layer_out_width(l, width);
  }
  if (!spec.has_head()) net.head_begin_ = net.params_.size();
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

void Network::zero_grad() {
  for (Tensor& t : params_) t.zero_grad();
}

Var Network::run_layers(Graph& g, Var x, std::size_t begin, std::size_t end,
                        std::vector<Tensor>* mutable_params) const {
  auto param = [&](std::size_t i) {
    return mutable_params != nullptr ? g.parameter((*mutable_params)[i]) : g.view(params_[i]);
  };
  for (std::size_t li = begin; li < end; ++li) {
    const LayerSpec& l = spec_.layers[li];
    const std::size_t p = layer_param_offset_[li];
    switch (l.kind) {
      case LayerKind::kAffine:
      case LayerKind::kFcHead:
        x = g.add(g.matmul(x, param(p)), param(p + 1));
        break;
      case LayerKind::kRelu:
        x = g.relu(x);
        break;
      case LayerKind::kSigmoid:
        x = g.sigmoid(x);
        break;
      case LayerKind::kForestHead: {
        const Var biases = param(p);
        const Var leaves = param(p + 1);
        x = forest_layer(g, x, biases, leaves, l.forest);
        break;
      }
    }
  }
  return x;
}

namespace {

std::size_t body_end(const ModelSpec& s) { return s.has_head() ? s.layers.size() - 1 : s.layers.size(); }

}  // namespace

Var Network::forward(Graph& g, Var input, ParamMode mode) {
  return run_layers(g, input, 0, spec_.layers.size(), mode == ParamMode::kTrainable ? &params_ : nullptr);
}
Var Network::forward(Graph& g, Var input) const { return run_layers(g, input, 0, spec_.layers.size(), nullptr); }

Var Network::body(Graph& g, Var input, ParamMode mode) {
  return run_layers(g, input, 0, body_end(spec_), mode == ParamMode::kTrainable ? &params_ : nullptr);
}
Var Network::body(Graph& g, Var input) const { return run_layers(g, input, 0, body_end(spec_), nullptr); }

Var Network::head(Graph& g, Var features, ParamMode mode) {
  return run_layers(g, features, body_end(spec_), spec_.layers.size(),
                    mode == ParamMode::kTrainable ? &params_ : nullptr);
}
Var Network::head(Graph& g, Var features) const {
  return run_layers(g, features, body_end(spec_), spec_.layers.size(), nullptr);
}

namespace {

void check_batch(const ModelSpec& spec, const Tensor& batch) {
  if (batch.rank() != 2 || batch.shape()[1] != spec.input_width) {
    throw DimensionError("model '" + spec.name + "' expects [B x " + std::to_string(spec.input_width) +
                         "] input, got " + shape_string(batch.shape()));
  }
}

}  // namespace

Tensor Network::forward(const Tensor& batch) const {
  check_batch(spec_, batch);
  Graph g;
  return g.value(forward(g, g.view(batch)));
}

Tensor Network::features(const Tensor& batch) const {
  check_batch(spec_, batch);
  Graph g;
  return g.value(body(g, g.view(batch)));
}

nlohmann::json Network::checkpoint() const {
  nlohmann::json params = nlohmann::json::array();
  for (const Tensor& t : params_) params.push_back(t.to_json());
  return {{"spec", spec_.to_json()}, {"seed", seed_}, {"parameters", params}};
}

Network Network::from_checkpoint(const nlohmann::json& j) {
  Network net = build(ModelSpec::from_json(j.at("spec")), j.at("seed").get<std::uint64_t>());
  const auto& params = j.at("parameters");
  if (params.size() != net.params_.size()) throw ContractError("checkpoint parameter list does not match its spec");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = Tensor::from_json(params[i]);
    if (t.shape() != net.params_[i].shape()) {
      throw ContractError("checkpoint tensor " + std::to_string(i) + " has shape " + shape_string(t.shape()) +
                          ", spec expects " + shape_string(net.params_[i].shape()));
    }
    net.params_[i] = std::move(t);
  }
  return net;
}

JacobianResult with_head_jacobian(const Network& net, const Tensor& batch, std::span<const double> targets,
                                  HeadLoss loss, bool full_network) {
  check_batch(net.spec(), batch);
  const std::size_t rows = batch.shape()[0];
  if (targets.size() != rows) throw ContractError("with_head_jacobian: one target per batch row required");

  JacobianResult result;
  result.output = net.forward(batch);
  const Tensor inputs = full_network ? batch : net.features(batch);

  Network scratch = net;  // gradients land on the copy
  const std::size_t first = full_network ? 0 : scratch.head_begin();
  std::size_t cols = 0;
  for (std::size_t i = first; i < scratch.parameters().size(); ++i) cols += scratch.parameters()[i].size();
  result.jacobian = Tensor(Shape{rows, std::max<std::size_t>(cols, 1)});
  result.losses.resize(rows);

  for (std::size_t r = 0; r < rows; ++r) {
    scratch.zero_grad();
    Graph g;
    const Var x = g.constant(inputs.rows_slice(r, r + 1));
    const Var out = full_network ? scratch.forward(g, x, ParamMode::kTrainable)
                                 : scratch.head(g, x, ParamMode::kTrainable);
    Var instance_loss;
    if (loss == HeadLoss::kBinary) {
      const double y = targets[r];
      instance_loss = binary_log_loss(g, g.sigmoid(out), std::span<const double>(&y, 1));
    } else {
      const std::size_t label = static_cast<std::size_t>(targets[r]);
      instance_loss = softmax_cross_entropy(g, out, std::span<const std::size_t>(&label, 1));
    }
    instance_loss = g.sum(instance_loss);
    const double l = g.value(instance_loss).item();
    result.losses[r] = l;
    g.backward(instance_loss);
    const double scale = 1.0 / (2.0 * std::sqrt(std::max(l, 0.0) + kRootLossEpsilon));
    std::size_t c = 0;
    for (std::size_t i = first; i < scratch.parameters().size(); ++i) {
      for (double v : scratch.parameters()[i].grad()) result.jacobian.at(r, c++) = v * scale;
    }
  }
  return result;
}

}  // namespace gaf
