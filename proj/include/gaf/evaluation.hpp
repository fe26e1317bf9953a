#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/networks.hpp"
#include "gaf/tensor.hpp"

namespace gaf {

/// Cross-evaluation losses. entries[g][d] is the adjusted loss of model d's
/// discriminator on model g's generator: rows are generators, columns are
/// discriminators, and the diagonal is each model against itself.
struct ScoreMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<double>> entries;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return models.size(); }
  void validate() const;

  nlohmann::json to_json() const;
  static ScoreMatrix from_json(const nlohmann::json& j);
};

/// entries[i][j] = M[j][i] - M[i][j]; positive means model j beats model i.
struct DiffMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<double>> entries;

  nlohmann::json to_json() const;
};

DiffMatrix difference_matrix(const ScoreMatrix& scores);

struct Ordering {
  std::vector<std::string> best_to_worst;  // topological order of the "beats" relation
  bool has_cycle = false;
  std::vector<std::string> unresolved;  // models caught in a cycle
};

// j beats i when D[i][j] > 0. Ties in the topological sort go to the earlier
// model in the list. Cycles are reported, not broken.
Ordering rank_models(const DiffMatrix& diff);

std::string render_table(const ScoreMatrix& scores, int precision = 2);
std::string render_table(const DiffMatrix& diff, int precision = 2);

// -(1/N_g) sum log(1 - D_A(G_B(z_i))) - (1/N_v) sum log D_A(x_v), clamped like
// the training losses. z_i ~ N(0, I) drawn from `seed` alone, so every
// generator sees the same latent codes.
double adjusted_loss(const Network& disc_a, const Network& gen_b, const Tensor& validation, std::size_t n_generated,
                     std::uint64_t seed);

struct Contestant {
  std::string name;
  Network discriminator;
  Network generator;
  std::string dataset_fingerprint;  // all contestants must share one split
};

struct TournamentResult {
  ScoreMatrix scores;
  DiffMatrix diff;
  Ordering ordering;

  nlohmann::json to_json() const;
};

// n_generated == 0 means N_g = N_v.
TournamentResult tournament(const std::vector<Contestant>& models, const Tensor& validation,
                            std::size_t n_generated, std::uint64_t seed);

// --- distribution metrics for 2-D synthetic data -----------------------------

struct Coverage {
  std::size_t covered = 0;
  std::vector<std::size_t> histogram;  // samples within radius of each mode
};

// A sample counts toward its nearest center when within `radius`; a mode is
// covered when it holds at least 1% of the samples.
Coverage mode_coverage(const Tensor& samples, const std::vector<std::array<double, 2>>& centers, double radius);

struct GaussianMixture {
  std::vector<std::array<double, 2>> centers;  // equal weights
  double sigma = 0.1;
};

// KL(sample histogram || mixture) on a bins x bins grid covering the centers'
// bounding box padded by 4 sigma, plus one overflow cell for everything
// outside. Mixture cell masses are exact (normal CDF differences); empty
// sample cells contribute nothing; mixture masses are floored at 1e-12.
double kl_to_mixture(const Tensor& samples, const GaussianMixture& mixture, std::size_t bins = 50);

}  // namespace gaf
