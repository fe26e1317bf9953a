#include "gaf/losses.hpp"

#include <algorithm>
#include <cmath>

namespace gaf {

double clamp_probability(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

namespace {

double mean_log(std::span<const double> probs, bool complement) {
  if (probs.empty()) throw ContractError("loss over an empty batch");
  double acc = 0.0;
  for (double p : probs) {
    const double q = clamp_probability(p);
    acc += std::log(complement ? 1.0 - q : q);
  }
  return acc / static_cast<double>(probs.size());
}

}  // namespace

double discriminator_loss(std::span<const double> real_probs, std::span<const double> fake_probs) {
  return -mean_log(real_probs, false) - mean_log(fake_probs, true);
}

double generator_loss(std::span<const double> fake_probs) { return -mean_log(fake_probs, false); }

double generator_loss_minimax(std::span<const double> fake_probs) { return mean_log(fake_probs, true); }

double binary_log_loss(double prob, double target) {
  const double p = clamp_probability(prob);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

Var binary_log_loss(Graph& g, Var probs, std::span<const double> targets) {
  const Tensor& p = g.value(probs);
  if (p.size() != targets.size()) throw DimensionError("binary_log_loss: one target per probability required");
  const Var clamped = g.clamp(probs, kProbFloor, 1.0 - kProbFloor);
  const Shape shape = p.shape();
  Tensor y(shape), one_minus_y(shape);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    y[i] = targets[i];
    one_minus_y[i] = 1.0 - targets[i];
  }
  const Var one = g.constant(Tensor::scalar(1.0));
  const Var log_p = g.log(clamped);
  const Var log_q = g.log(g.sub(one, clamped));
  const Var total = g.add(g.mul(g.constant(std::move(y)), log_p), g.mul(g.constant(std::move(one_minus_y)), log_q));
  return g.neg(total);
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = g.value(logits);
  if (z.rank() != 2 || z.shape()[0] != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_string(z.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = z.shape()[1];
  Tensor onehot(z.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ContractError("class label out of range");
    onehot.at(i, labels[i]) = 1.0;
  }
  const Var picked = g.mul(g.constant(std::move(onehot)), g.log_softmax(logits));
  return g.neg(g.sum(picked, 1));
}

Var discriminator_loss(Graph& g, Var real_probs, Var fake_probs) {
  const Var one = g.constant(Tensor::scalar(1.0));
  const Var real_term = g.mean(g.log(g.clamp(real_probs, kProbFloor, 1.0 - kProbFloor)));
  const Var fake_term = g.mean(g.log(g.sub(one, g.clamp(fake_probs, kProbFloor, 1.0 - kProbFloor))));
  return g.neg(g.add(real_term, fake_term));
}

Var generator_loss(Graph& g, Var fake_probs) {
  return g.neg(g.mean(g.log(g.clamp(fake_probs, kProbFloor, 1.0 - kProbFloor))));
}

Var generator_loss_minimax(Graph& g, Var fake_probs) {
  const Var one = g.constant(Tensor::scalar(1.0));
  return g.mean(g.log(g.sub(one, g.clamp(fake_probs, kProbFloor, 1.0 - kProbFloor))));
}

}  // namespace gaf
