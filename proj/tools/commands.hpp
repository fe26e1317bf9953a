#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/evaluation.hpp"
#include "gaf/networks.hpp"
#include "gaf/training.hpp"

namespace gaf::cli {

// Bad flag values or config contents; the binary maps it to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Training and model settings of one experiment. Config files hold
// {"train": {...}, "model": {...}}; both keys are optional and override the
// command's defaults field by field.
struct ExperimentConfig {
  TrainConfig train;
  PresetOptions model;

  nlohmann::json to_json() const;
  void apply(const nlohmann::json& overrides);  // throws UsageError
};

ExperimentConfig xor_defaults(std::size_t dim);
ExperimentConfig clf_defaults();
ExperimentConfig gan_defaults();

nlohmann::json read_json(const std::filesystem::path& path);  // throws UsageError

struct SeedRun {
  std::uint64_t seed = 0;
  TrainRun run;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception in
// index order is rethrown after all workers finish.
void fan_out(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);
std::size_t default_jobs();

// ---- xor ---------------------------------------------------------------------

inline constexpr double kXorSuccessLoss = 0.01;

struct XorOptions {
  std::string model = "tree";  // tree | fc
  std::size_t seeds = 10;
  std::uint64_t seed = 0;  // first seed
  std::size_t jobs = 1;
  ExperimentConfig config = xor_defaults(3);
};

struct XorResult {
  std::vector<SeedRun> runs;
  double success_rate = 0.0;
  nlohmann::json summary;
};

// Writes <out>/seed_<s>/{config.json,log.csv,checkpoints/,plots/}, plus
// <out>/summary.json and <out>/plots/{loss,cond}.svg. No files when out is empty.
XorResult run_xor(const XorOptions& options, const std::filesystem::path& out);

// ---- clf-cond ------------------------------------------------------------------

inline constexpr double kStressFactor = 10.0;

struct ClfOptions {
  std::string head = "forest";  // forest | fc
  std::size_t seeds = 3;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  ExperimentConfig config = clf_defaults();
};

struct ClfResult {
  std::vector<SeedRun> base;    // at the configured learning rate
  std::vector<SeedRun> stress;  // at kStressFactor times that rate
  nlohmann::json summary;
};

// Runs <out>/lr_<rate>/seed_<s> for both rates and overlays them in <out>/plots.
ClfResult run_clf_cond(const ClfOptions& options, const std::filesystem::path& out);

// ---- gan-train -----------------------------------------------------------------

struct GanOptions {
  std::string preset = "gan_forest_deep";
  std::size_t seeds = 1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t eval_samples = 2000;
  ExperimentConfig config = gan_defaults();
};

struct GanRunSummary {
  std::uint64_t seed = 0;
  bool aborted = false;
  std::size_t covered = 0;  // ring data only
  std::vector<std::size_t> histogram;
  double kl = kUnmeasured;
  double final_condition_median = kUnmeasured;  // over the last 1000 steps
};

struct GanResult {
  std::vector<SeedRun> runs;
  std::vector<GanRunSummary> summaries;
  nlohmann::json summary;
};

GanResult run_gan(const GanOptions& options, const std::filesystem::path& out);

// Samples the final generator of a run with latent codes drawn from eval_seed.
Tensor sample_generator(const Network& generator, std::size_t n, std::uint64_t eval_seed);

// Median of the recorded condition numbers with step > last_step - window.
double tail_condition_median(const TrainRun& run, std::size_t window);

// ---- tournament ----------------------------------------------------------------

struct TournamentOptions {
  std::vector<std::filesystem::path> runs;
  std::optional<std::filesystem::path> matrix;  // fixture instead of runs
  std::string key;                             // sub-object of the fixture
  std::size_t n_generated = 0;                 // 0: N_v
  std::uint64_t seed = 0;
};

// Writes tournament.json, scores.txt, diff.txt and heatmap.svg into out.
nlohmann::json run_tournament(const TournamentOptions& options, const std::filesystem::path& out);

// ---- plot ----------------------------------------------------------------------

// Renders <run>/log.csv with the plot spec into <run>/plots/<spec stem>.svg.
std::filesystem::path run_plot(const std::filesystem::path& run_dir, const std::filesystem::path& spec_file);

}  // namespace gaf::cli
