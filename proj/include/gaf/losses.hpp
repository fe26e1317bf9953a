#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gaf/autodiff.hpp"

namespace gaf {

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log,
// which bounds every per-sample log term by |log 1e-7| ~= 16.12.
inline constexpr double kProbFloor = 1e-7;

double clamp_probability(double p);

// --- scalar forms --------------------------------------------------------------

// -mean log D(x) - mean log(1 - D(G(z)))
double discriminator_loss(std::span<const double> real_probs, std::span<const double> fake_probs);
// Non-saturating: -mean log D(G(z)).
double generator_loss(std::span<const double> fake_probs);
// Literal minimax form: mean log(1 - D(G(z))) (minimized by the generator).
double generator_loss_minimax(std::span<const double> fake_probs);
// -y log p - (1 - y) log(1 - p), clamped.
double binary_log_loss(double prob, double target);

// --- graph forms ---------------------------------------------------------------

// Per-row binary log loss of probabilities [B x 1] against targets in {0, 1}.
// Returns a [B x 1] tensor of losses.
Var binary_log_loss(Graph& g, Var probs, std::span<const double> targets);
// Per-row softmax cross-entropy of logits [B x C] against class indices; [B].
Var softmax_cross_entropy(Graph& g, Var logits, std::span<const std::size_t> labels);

Var discriminator_loss(Graph& g, Var real_probs, Var fake_probs);
Var generator_loss(Graph& g, Var fake_probs);
Var generator_loss_minimax(Graph& g, Var fake_probs);

}  // namespace gaf
