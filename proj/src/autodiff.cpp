#include "gaf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gaf {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class Op { kConstant, kParameter, kMatMul, kAdd, kSub, kMul, kNeg, kScale, kSigmoid, kRelu, kLog, kExp,
                kClamp, kSum, kSumAxis, kMean, kLogSoftmax, kCustom };

struct Graph::Node {
  Op op = Op::kConstant;
  std::string name;
  std::vector<std::size_t> inputs;
  Tensor owned;
  const Tensor* ref = nullptr;
  Tensor* param = nullptr;
  bool needs_grad = false;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t axis = 0;
  Backward custom_backward;

  const Tensor& value() const { return ref != nullptr ? *ref : owned; }
};

Graph::Graph(GraphOptions options) : options_(options) {}
Graph::~Graph() = default;
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
  return *nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }
bool Graph::needs_grad(Var v) const { return node(v).needs_grad; }
std::size_t Graph::size() const { return nodes_.size(); }

Var Graph::push(std::unique_ptr<Node> n) {
  for (std::size_t in : n->inputs) {
    if (in >= nodes_.size()) throw ContractError("operation input refers to a later node");
    n->needs_grad = n->needs_grad || nodes_[in]->needs_grad;
  }
  if (options_.check_finite && !n->value().all_finite()) {
    throw NumericalError("non-finite value produced by " + n->name);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->name = "constant";
  n->owned = std::move(value);
  return push(std::move(n));
}

Var Graph::view(const Tensor& value) {
  auto n = std::make_unique<Node>();
  n->name = "view";
  n->ref = &value;
  return push(std::move(n));
}

Var Graph::parameter(Tensor& param) {
  param.enable_grad();
  auto n = std::make_unique<Node>();
  n->op = Op::kParameter;
  n->name = "parameter";
  n->ref = &param;
  n->param = &param;
  n->needs_grad = true;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + shape_string(x.shape()) + " and " + shape_string(y.shape()));
  }
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
  Tensor out(Shape{m, n});
  auto o = out.data();
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xd[i * k + p];
      if (xv == 0.0) continue;
      const double* yr = &yd[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yr[j];
    }
  }
  auto node = std::make_unique<Node>();
  node->op = Op::kMatMul;
  node->name = "matmul";
  node->inputs = {a.id, b.id};
  node->owned = std::move(out);
  return push(std::move(node));
}

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op; throws if neither is a suffix of the other.
const Shape& broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + " cannot broadcast " + shape_string(a.shape()) + " with " +
                       shape_string(b.shape()));
}

}  // namespace

#define GAF_BINARY_OP(method, opcode, label, expr)                                       \
  Var Graph::method(Var a, Var b) {                                                      \
    const Tensor& x = value(a);                                                          \
    const Tensor& y = value(b);                                                          \
    Tensor out(broadcast_shape(x, y, label));                                            \
    auto o = out.data();                                                                 \
    auto xd = x.data();                                                                  \
    auto yd = y.data();                                                                  \
    const std::size_t nx = xd.size(), ny = yd.size();                                    \
    for (std::size_t i = 0; i < o.size(); ++i) {                                         \
      const double u = xd[i % nx];                                                       \
      const double v = yd[i % ny];                                                       \
      o[i] = (expr);                                                                     \
    }                                                                                    \
    auto node = std::make_unique<Node>();                                                \
    node->op = opcode;                                                                   \
    node->name = label;                                                                  \
    node->inputs = {a.id, b.id};                                                         \
    node->owned = std::move(out);                                                        \
    return push(std::move(node));                                                        \
  }

GAF_BINARY_OP(add, Op::kAdd, "add", u + v)
GAF_BINARY_OP(sub, Op::kSub, "sub", u - v)
GAF_BINARY_OP(mul, Op::kMul, "mul", u* v)

#undef GAF_BINARY_OP

namespace {

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto o = out.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xd[i]);
  return out;
}

}  // namespace

#define GAF_UNARY_OP(method, opcode, label, fn)      \
  Var Graph::method(Var x) {                         \
    auto node = std::make_unique<Node>();            \
    node->op = opcode;                               \
    node->name = label;                              \
    node->inputs = {x.id};                           \
    node->owned = map_values(value(x), fn);          \
    return push(std::move(node));                    \
  }

GAF_UNARY_OP(neg, Op::kNeg, "neg", [](double v) { return -v; })
GAF_UNARY_OP(sigmoid, Op::kSigmoid, "sigmoid", stable_sigmoid)
GAF_UNARY_OP(relu, Op::kRelu, "relu", [](double v) { return v > 0.0 ? v : 0.0; })
GAF_UNARY_OP(exp, Op::kExp, "exp", [](double v) { return std::exp(v); })

#undef GAF_UNARY_OP

Var Graph::log(Var x) {
  const Tensor& in = value(x);
  for (double v : in.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  auto node = std::make_unique<Node>();
  node->op = Op::kLog;
  node->name = "log";
  node->inputs = {x.id};
  node->owned = map_values(in, [](double v) { return std::log(v); });
  return push(std::move(node));
}

Var Graph::scale(Var x, double factor) {
  auto node = std::make_unique<Node>();
  node->op = Op::kScale;
  node->name = "scale";
  node->inputs = {x.id};
  node->lo = factor;
  node->owned = map_values(value(x), [factor](double v) { return v * factor; });
  return push(std::move(node));
}

Var Graph::clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp bounds out of order");
  auto node = std::make_unique<Node>();
  node->op = Op::kClamp;
  node->name = "clamp";
  node->inputs = {x.id};
  node->lo = lo;
  node->hi = hi;
  node->owned = map_values(value(x), [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return push(std::move(node));
}

Var Graph::sum(Var x) {
  double total = 0.0;
  for (double v : value(x).data()) total += v;
  auto node = std::make_unique<Node>();
  node->op = Op::kSum;
  node->name = "sum";
  node->inputs = {x.id};
  node->owned = Tensor::scalar(total);
  return push(std::move(node));
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Var Graph::sum(Var x, std::size_t axis) {
  const Tensor& in = value(x);
  if (axis >= in.rank()) {
    throw DimensionError("sum axis " + std::to_string(axis) + " out of range for " + shape_string(in.shape()));
  }
  Shape out_shape = in.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const AxisSplit s = split_axis(in.shape(), axis);
  auto id = in.data();
  auto od = out.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) od[o * s.inner + i] += id[(o * s.extent + e) * s.inner + i];
  auto node = std::make_unique<Node>();
  node->op = Op::kSumAxis;
  node->name = "sum_axis";
  node->inputs = {x.id};
  node->axis = axis;
  node->owned = std::move(out);
  return push(std::move(node));
}

Var Graph::mean(Var x) {
  const Tensor& in = value(x);
  double total = 0.0;
  for (double v : in.data()) total += v;
  auto node = std::make_unique<Node>();
  node->op = Op::kMean;
  node->name = "mean";
  node->inputs = {x.id};
  node->owned = Tensor::scalar(total / static_cast<double>(in.size()));
  return push(std::move(node));
}

Var Graph::log_softmax(Var x) {
  const Tensor& in = value(x);
  const std::size_t width = in.rank() == 0 ? 1 : in.shape().back();
  Tensor out(in.shape());
  auto id = in.data();
  auto od = out.data();
  for (std::size_t r = 0; r < in.size() / width; ++r) {
    const double* row = &id[r * width];
    const double top = *std::max_element(row, row + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += std::exp(row[c] - top);
    const double lse = top + std::log(z);
    for (std::size_t c = 0; c < width; ++c) od[r * width + c] = row[c] - lse;
  }
  auto node = std::make_unique<Node>();
  node->op = Op::kLogSoftmax;
  node->name = "log_softmax";
  node->inputs = {x.id};
  node->axis = width;
  node->owned = std::move(out);
  return push(std::move(node));
}

Var Graph::custom(std::string name, std::vector<Var> inputs, Tensor output, Backward backward) {
  auto node = std::make_unique<Node>();
  node->op = Op::kCustom;
  node->name = std::move(name);
  for (Var v : inputs) node->inputs.push_back(v.id);
  node->owned = std::move(output);
  node->custom_backward = std::move(backward);
  return push(std::move(node));
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(root.value().shape()));
  }
  std::vector<std::vector<double>> grads(loss.id + 1);
  auto grad_of = [&](std::size_t id) -> std::vector<double>& {
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id]->value().size(), 0.0);
    return g;
  };
  grad_of(loss.id)[0] = 1.0;

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = *nodes_[id];
    if (grads[id].empty() || !n.needs_grad) continue;
    const std::vector<double>& g = grads[id];
    const auto& out = n.value().data();

    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParameter: {
        auto pg = n.param->grad();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }
      case Op::kMatMul: {
        const Node& na = *nodes_[n.inputs[0]];
        const Node& nb = *nodes_[n.inputs[1]];
        const auto& ad = na.value().data();
        const auto& bd = nb.value().data();
        const std::size_t m = na.value().shape()[0], k = na.value().shape()[1], c = nb.value().shape()[1];
        if (na.needs_grad) {
          auto& ga = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * bd[p * c + j];
              ga[i * k + p] += acc;
            }
        }
        if (nb.needs_grad) {
          auto& gb = grad_of(n.inputs[1]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = ad[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += av * g[i * c + j];
            }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        const Node& na = *nodes_[n.inputs[0]];
        const Node& nb = *nodes_[n.inputs[1]];
        const auto& ad = na.value().data();
        const auto& bd = nb.value().data();
        const std::size_t sa = ad.size(), sb = bd.size();
        if (na.needs_grad) {
          auto& ga = grad_of(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i % sa] += n.op == Op::kMul ? g[i] * bd[i % sb] : g[i];
          }
        }
        if (nb.needs_grad) {
          auto& gb = grad_of(n.inputs[1]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = n.op == Op::kMul ? g[i] * ad[i % sa] : (n.op == Op::kSub ? -g[i] : g[i]);
            gb[i % sb] += d;
          }
        }
        break;
      }
      default: {
        if (n.op == Op::kCustom) {
          std::vector<std::span<double>> in_grads;
          in_grads.reserve(n.inputs.size());
          for (std::size_t in : n.inputs) {
            if (nodes_[in]->needs_grad) {
              in_grads.emplace_back(grad_of(in));
            } else {
              in_grads.emplace_back();
            }
          }
          n.custom_backward(g, in_grads);
          break;
        }
        const std::size_t in_id = n.inputs[0];
        const Node& src = *nodes_[in_id];
        if (!src.needs_grad) break;
        const auto& xd = src.value().data();
        auto& gx = grad_of(in_id);
        switch (n.op) {
          case Op::kNeg:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
            break;
          case Op::kScale:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.lo;
            break;
          case Op::kSigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out[i] * (1.0 - out[i]);
            break;
          case Op::kRelu:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xd[i] > 0.0 ? g[i] : 0.0;
            break;
          case Op::kLog:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xd[i];
            break;
          case Op::kExp:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out[i];
            break;
          case Op::kClamp:
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (xd[i] >= n.lo && xd[i] <= n.hi) ? g[i] : 0.0;
            break;
          case Op::kSum:
            for (double& v : gx) v += g[0];
            break;
          case Op::kMean: {
            const double share = g[0] / static_cast<double>(gx.size());
            for (double& v : gx) v += share;
            break;
          }
          case Op::kSumAxis: {
            const AxisSplit s = split_axis(src.value().shape(), n.axis);
            for (std::size_t o = 0; o < s.outer; ++o)
              for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
            break;
          }
          case Op::kLogSoftmax: {
            const std::size_t width = n.axis;
            for (std::size_t r = 0; r < g.size() / width; ++r) {
              double gsum = 0.0;
              for (std::size_t c = 0; c < width; ++c) gsum += g[r * width + c];
              for (std::size_t c = 0; c < width; ++c) {
                gx[r * width + c] += g[r * width + c] - std::exp(out[r * width + c]) * gsum;
              }
            }
            break;
          }
          default:
            break;
        }
        break;
      }
    }
  }
}

}  // namespace gaf
