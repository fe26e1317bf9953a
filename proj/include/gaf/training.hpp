#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/datasets.hpp"
#include "gaf/networks.hpp"

namespace gaf {

// --- Adam ------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor>& params);
};

// One bias-corrected Adam update of `params` from `grads`.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& config);
// Same, reading each parameter's own gradient slot.
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& config);

// --- configuration and run records ---------------------------------------------

enum class GeneratorObjective { kNonSaturating, kMinimax };

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 0;  // classifier: passes over the training split
  std::size_t steps = 0;   // GAN iterations; classifier: overrides epochs when > 0
  std::uint64_t seed = 0;
  std::size_t latent_dim = 2;
  std::size_t condition_probe_every = 50;  // 0 disables probing
  std::size_t d_steps_per_g = 1;
  GeneratorObjective generator_objective = GeneratorObjective::kNonSaturating;
  std::size_t checkpoint_every = 0;  // 0: initial and final only
  std::size_t snapshot_every = 0;    // 0: no sample snapshots
  std::size_t snapshot_samples = 512;
  bool check_finite = false;
  DatasetSpec dataset;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }

  nlohmann::json to_json() const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
};

inline constexpr double kUnmeasured = std::numeric_limits<double>::quiet_NaN();

struct StepRecord {
  std::size_t step = 0;
  double d_loss = kUnmeasured;
  double g_loss = kUnmeasured;  // classifier runs store their loss here
  double condition = kUnmeasured;
  std::size_t condition_rank = 0;
  double val_loss = kUnmeasured;
};

struct Checkpoint {
  std::size_t step = 0;
  nlohmann::json discriminator;  // the classifier for supervised runs
  nlohmann::json generator;      // null for supervised runs
};

struct Snapshot {
  std::size_t step = 0;
  Tensor samples;
};

struct TrainRun {
  TrainConfig config;
  std::vector<StepRecord> records;
  std::vector<Checkpoint> checkpoints;
  std::vector<Snapshot> snapshots;
  bool aborted = false;
  std::string diagnostic;
  double final_train_loss = kUnmeasured;

  const Checkpoint& final_checkpoint() const { return checkpoints.back(); }
  std::vector<double> condition_series() const;
};

// CSV with header step,d_loss,g_loss,cond,val_loss. Unmeasured cells are
// empty; a degenerate Jacobian is written as inf.
void write_run_csv(const TrainRun& run, std::ostream& out);
std::string format_metric(double v);

// --- training loops -------------------------------------------------------------

// Alternating D/G updates (d_steps_per_g discriminator steps per generator
// step) on the configured dataset's training split. Every
// condition_probe_every iterations the discriminator head's root-loss
// Jacobian condition number on the current D batch is recorded, together with
// D's loss on the withheld validation split. A non-finite loss ends the run
// with aborted = true.
TrainRun train_gan(const TrainConfig& config, const ModelSpec& generator_spec, const ModelSpec& discriminator_spec);

// Supervised training with binary log loss (one output) or softmax
// cross-entropy (several outputs); same logging and probing.
TrainRun train_classifier(const TrainConfig& config, const ModelSpec& spec);

// Mean loss of a classifier over a labelled set.
double classifier_loss(const Network& net, const Tensor& x, const std::vector<std::size_t>& labels);

}  // namespace gaf
