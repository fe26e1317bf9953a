#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gaf/tensor.hpp"

namespace gaf {

// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = 0;
};

struct GraphOptions {
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif
};

/// Reverse-mode tape over a fixed vocabulary of tensor operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// Parameters are registered by reference: backward() accumulates dL/dθ into
/// the referenced tensor's gradient slot (it never resets it, so two calls
/// without zero_grad() sum up). Views and parameters must outlive the graph.
///
/// Binary elementwise ops broadcast the smaller operand when its shape is a
/// trailing suffix of the larger one's (a [3] bias against a [B x 3] batch, or
/// a scalar against anything).
class Graph {
 public:
  // Receives dL/d(output) and accumulates into the gradients of the inputs,
  // in the order the inputs were given to custom(). Spans for inputs that do
  // not need a gradient are empty.
  using Backward = std::function<void(std::span<const double> out_grad, std::span<const std::span<double>> in_grads)>;

  explicit Graph(GraphOptions options = {});
  ~Graph();
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;

  Var constant(Tensor value);
  // Non-owning constant.
  Var view(const Tensor& value);
  Var parameter(Tensor& param);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var x);
  Var scale(Var x, double factor);
  Var sigmoid(Var x);
  Var relu(Var x);
  Var log(Var x);
  Var exp(Var x);
  // Gradient passes through where lo <= x <= hi and is zero outside.
  Var clamp(Var x, double lo, double hi);
  Var sum(Var x);
  Var sum(Var x, std::size_t axis);
  Var mean(Var x);
  // Row-wise log-softmax over the last axis.
  Var log_softmax(Var x);

  Var custom(std::string name, std::vector<Var> inputs, Tensor output, Backward backward);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;
  std::size_t size() const;

  void backward(Var loss);

 private:
  struct Node;
  Var push(std::unique_ptr<Node> node);
  const Node& node(Var v) const;

  GraphOptions options_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

double stable_sigmoid(double x);

}  // namespace gaf
