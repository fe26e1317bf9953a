#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "gaf/datasets.hpp"
#include "gaf/plots.hpp"

namespace gaf::cli {

namespace fs = std::filesystem;

nlohmann::json ExperimentConfig::to_json() const { return {{"train", train.to_json()}, {"model", model.to_json()}}; }

void ExperimentConfig::apply(const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw UsageError("config must be a JSON object");
  try {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "train") {
        nlohmann::json merged = train.to_json();
        for (const auto& [k, v] : value.items()) {
          if (k == "dataset") {
            for (const auto& [dk, dv] : v.items()) merged["dataset"][dk] = dv;
          } else {
            merged[k] = v;
          }
        }
        train = TrainConfig::from_json(merged, train);
      } else if (key == "model") {
        model = PresetOptions::from_json(value, model);
      } else {
        throw UsageError("unknown config section '" + key + "'");
      }
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig xor_defaults(std::size_t dim) {
  ExperimentConfig c;
  c.train.learning_rate = 0.3;
  c.train.epochs = 1000;
  c.train.condition_probe_every = 10;
  c.train.dataset.kind = DatasetKind::kXor;
  c.train.dataset.dim = dim;
  c.train.dataset.signed_inputs = false;
  c.model.xor_dim = dim;
  c.model.xor_tree_depth = static_cast<int>(dim) - 1;
  c.model.init_std = 0.02;
  return c;
}

ExperimentConfig clf_defaults() {
  ExperimentConfig c;
  c.train.learning_rate = 2e-4;
  c.train.steps = 2000;
  c.train.condition_probe_every = 50;
  c.train.dataset.kind = DatasetKind::kSpiral;
  c.train.dataset.classes = 3;
  c.train.dataset.n_samples = 2000;
  c.model.classes = 3;
  return c;
}

ExperimentConfig gan_defaults() {
  ExperimentConfig c;
  c.train.learning_rate = 1e-3;
  c.train.steps = 5000;
  c.train.latent_dim = 8;
  c.train.condition_probe_every = 100;
  c.train.checkpoint_every = 1000;
  c.train.snapshot_every = 1000;
  c.train.snapshot_samples = 512;
  c.train.dataset.kind = DatasetKind::kGaussianRing;
  c.train.dataset.n_samples = 2000;
  c.model.latent_dim = 8;
  return c;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::size_t default_jobs() { return std::max(1U, std::thread::hardware_concurrency()); }

void fan_out(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string step_name(std::size_t step) {
  std::ostringstream o;
  o << std::setw(6) << std::setfill('0') << step;
  return o.str();
}

std::vector<double> record_steps(const TrainRun& run) {
  std::vector<double> x;
  for (const auto& r : run.records) x.push_back(static_cast<double>(r.step));
  return x;
}

template <class Field>
std::vector<double> record_field(const TrainRun& run, Field f) {
  std::vector<double> y;
  for (const auto& r : run.records) y.push_back(f(r));
  return y;
}

Series loss_series(const TrainRun& run, const std::string& label) {
  return {label, record_steps(run), record_field(run, [](const StepRecord& r) { return r.g_loss; })};
}

Series cond_series(const TrainRun& run, const std::string& label) {
  return {label, record_steps(run), record_field(run, [](const StepRecord& r) { return r.condition; })};
}

// config.json, log.csv, cond_rank.csv, checkpoints/ and plots/{loss,cond}.svg
// of one run. cond_rank.csv pairs each probe with the numerical rank its
// truncated condition number was taken over.
void write_run_dir(const fs::path& dir, const nlohmann::json& config, const TrainRun& run, bool gan) {
  write_json(dir / "config.json", config);
  std::ostringstream csv;
  write_run_csv(run, csv);
  write_text(dir / "log.csv", csv.str());
  std::ostringstream ranks;
  ranks << "step,cond,rank\n";
  for (const StepRecord& r : run.records) {
    if (!std::isnan(r.condition)) ranks << r.step << ',' << format_metric(r.condition) << ',' << r.condition_rank << '\n';
  }
  write_text(dir / "cond_rank.csv", ranks.str());
  for (const auto& c : run.checkpoints) {
    const nlohmann::json j = {{"step", c.step}, {"discriminator", c.discriminator}, {"generator", c.generator}};
    write_json(dir / "checkpoints" / ("step_" + step_name(c.step) + ".json"), j);
  }
  if (!run.checkpoints.empty()) {
    const auto& c = run.final_checkpoint();
    write_json(dir / "checkpoints" / "final.json",
               {{"step", c.step}, {"discriminator", c.discriminator}, {"generator", c.generator}});
  }
  std::vector<Series> losses;
  if (gan) {
    losses.push_back({"d_loss", record_steps(run), record_field(run, [](const StepRecord& r) { return r.d_loss; })});
    losses.push_back(loss_series(run, "g_loss"));
  } else {
    losses.push_back(loss_series(run, "loss"));
  }
  losses.push_back({"val_loss", record_steps(run), record_field(run, [](const StepRecord& r) { return r.val_loss; })});
  write_text(dir / "plots" / "loss.svg", line_plot_svg(losses, "loss", "step", "loss"));
  write_text(dir / "plots" / "cond.svg",
             line_plot_svg({cond_series(run, "condition")}, "head Jacobian condition number", "step", "condition",
                           false, true));
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

double last_condition(const TrainRun& run, std::size_t* rank) {
  for (auto it = run.records.rbegin(); it != run.records.rend(); ++it) {
    if (!std::isnan(it->condition)) {
      if (rank != nullptr) *rank = it->condition_rank;
      return it->condition;
    }
  }
  return kUnmeasured;
}

void check_config(const ExperimentConfig& c) {
  try {
    c.train.validate();
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid training config: ") + e.what());
  }
}

ModelSpec checked_preset(const std::string& name, const PresetOptions& o) {
  try {
    return preset(name, o);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return kUnmeasured;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

double tail_condition_median(const TrainRun& run, std::size_t window) {
  if (run.records.empty()) return kUnmeasured;
  const std::size_t last = run.records.back().step;
  std::vector<double> v;
  for (const auto& r : run.records) {
    if (r.step + window > last && !std::isnan(r.condition)) v.push_back(r.condition);
  }
  return median(std::move(v));
}

XorResult run_xor(const XorOptions& o, const fs::path& out) {
  if (o.model != "tree" && o.model != "fc") throw UsageError("--model must be tree or fc");
  if (o.seeds == 0) throw UsageError("--seeds must be positive");
  if (o.config.train.dataset.kind != DatasetKind::kXor) throw UsageError("xor runs need the xor dataset");
  if (o.config.train.dataset.dim < 2) throw UsageError("--dim must be at least 2");
  check_config(o.config);
  const ModelSpec spec = checked_preset(o.model == "tree" ? "xor_tree" : "xor_fc", o.config.model);
  if (spec.input_width != o.config.train.dataset.dim) throw UsageError("model and dataset dimensions differ");

  XorResult result;
  result.runs.resize(o.seeds);
  fan_out(o.seeds, o.jobs, [&](std::size_t i) {
    TrainConfig c = o.config.train;
    c.seed = o.seed + i;
    result.runs[i] = {c.seed, train_classifier(c, spec)};
  });

  nlohmann::json runs = nlohmann::json::array();
  std::size_t successes = 0;
  for (const auto& [seed, run] : result.runs) {
    std::size_t rank = 0;
    const double cond = last_condition(run, &rank);
    const bool success = !run.aborted && run.final_train_loss < kXorSuccessLoss;
    successes += success ? 1 : 0;
    runs.push_back({{"seed", seed},
                    {"aborted", run.aborted},
                    {"final_loss", number_or_null(run.final_train_loss)},
                    {"final_condition", number_or_null(cond)},
                    {"final_condition_rank", rank},
                    {"success", success}});
  }
  result.success_rate = static_cast<double>(successes) / static_cast<double>(o.seeds);
  result.summary = {{"command", "xor"},
                    {"model", o.model},
                    {"dim", o.config.train.dataset.dim},
                    {"success_threshold", kXorSuccessLoss},
                    {"success_rate", result.success_rate},
                    {"runs", runs}};

  if (!out.empty()) {
    std::vector<Series> losses, conds;
    for (const auto& [seed, run] : result.runs) {
      nlohmann::json config = o.config.to_json();
      config["train"]["seed"] = seed;
      config["command"] = "xor";
      config["model_spec"] = spec.to_json();
      write_run_dir(out / seed_dir(seed), config, run, false);
      losses.push_back(loss_series(run, seed_dir(seed)));
      conds.push_back(cond_series(run, seed_dir(seed)));
    }
    write_json(out / "summary.json", result.summary);
    write_text(out / "plots" / "loss.svg", line_plot_svg(losses, "xor " + o.model + ": log loss", "epoch", "loss"));
    write_text(out / "plots" / "cond.svg",
               line_plot_svg(conds, "xor " + o.model + ": condition number", "epoch", "condition", false, true));
  }
  return result;
}

ClfResult run_clf_cond(const ClfOptions& o, const fs::path& out) {
  if (o.head != "forest" && o.head != "fc") throw UsageError("--head must be forest or fc");
  if (o.seeds == 0) throw UsageError("--seeds must be positive");
  check_config(o.config);
  const ModelSpec spec = checked_preset(o.head == "forest" ? "clf_forest" : "clf_fc", o.config.model);

  const double rates[2] = {o.config.train.learning_rate, o.config.train.learning_rate * kStressFactor};
  ClfResult result;
  result.base.resize(o.seeds);
  result.stress.resize(o.seeds);
  fan_out(2 * o.seeds, o.jobs, [&](std::size_t k) {
    const std::size_t r = k / o.seeds, i = k % o.seeds;
    TrainConfig c = o.config.train;
    c.seed = o.seed + i;
    c.learning_rate = rates[r];
    (r == 0 ? result.base : result.stress)[i] = {c.seed, train_classifier(c, spec)};
  });

  nlohmann::json groups = nlohmann::json::array();
  for (int r = 0; r < 2; ++r) {
    const auto& runs = r == 0 ? result.base : result.stress;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [seed, run] : runs) {
      items.push_back({{"seed", seed},
                       {"aborted", run.aborted},
                       {"diagnostic", run.diagnostic},
                       {"final_loss", number_or_null(run.final_train_loss)},
                       {"median_condition", number_or_null(median(run.condition_series()))}});
    }
    groups.push_back({{"learning_rate", rates[r]}, {"runs", items}});
  }
  result.summary = {{"command", "clf-cond"}, {"head", o.head}, {"groups", groups}};

  if (!out.empty()) {
    std::vector<Series> losses, conds;
    for (int r = 0; r < 2; ++r) {
      const auto& runs = r == 0 ? result.base : result.stress;
      const std::string group = "lr_" + format_metric(rates[r]);
      for (const auto& [seed, run] : runs) {
        ExperimentConfig c = o.config;
        c.train.learning_rate = rates[r];
        c.train.seed = seed;
        nlohmann::json config = c.to_json();
        config["command"] = "clf-cond";
        config["model_spec"] = spec.to_json();
        write_run_dir(out / group / seed_dir(seed), config, run, false);
        losses.push_back(loss_series(run, group + " " + seed_dir(seed)));
        conds.push_back(cond_series(run, group + " " + seed_dir(seed)));
      }
    }
    write_json(out / "summary.json", result.summary);
    write_text(out / "plots" / "loss.svg", line_plot_svg(losses, o.head + " head: loss", "step", "loss"));
    write_text(out / "plots" / "cond.svg",
               line_plot_svg(conds, o.head + " head: condition number", "step", "condition", false, true));
  }
  return result;
}

Tensor sample_generator(const Network& generator, std::size_t n, std::uint64_t eval_seed) {
  std::mt19937_64 rng(eval_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z(Shape{n, generator.spec().input_width});
  for (double& v : z.data()) v = normal(rng);
  return generator.forward(z);
}

GanResult run_gan(const GanOptions& o, const fs::path& out) {
  if (o.preset != "gan_fc" && o.preset != "gan_forest_shallow" && o.preset != "gan_forest_deep") {
    throw UsageError("--preset must be gan_fc, gan_forest_shallow or gan_forest_deep");
  }
  if (o.seeds == 0) throw UsageError("--seeds must be positive");
  if (o.config.train.dataset.kind == DatasetKind::kXor) throw UsageError("gan-train needs a 2-D dataset");
  if (o.config.model.latent_dim != o.config.train.latent_dim) {
    throw UsageError("model.latent_dim and train.latent_dim differ");
  }
  check_config(o.config);
  const ModelSpec disc_spec = checked_preset(o.preset, o.config.model);
  const ModelSpec gen_spec = checked_preset("gan_generator", o.config.model);
  const DatasetSpec& data = o.config.train.dataset;
  const bool ring = data.kind == DatasetKind::kGaussianRing;

  GanResult result;
  result.runs.resize(o.seeds);
  result.summaries.resize(o.seeds);
  fan_out(o.seeds, o.jobs, [&](std::size_t i) {
    TrainConfig c = o.config.train;
    c.seed = o.seed + i;
    TrainRun run = train_gan(c, gen_spec, disc_spec);
    GanRunSummary s;
    s.seed = c.seed;
    s.aborted = run.aborted;
    s.final_condition_median = tail_condition_median(run, 1000);
    if (!run.aborted && ring && o.eval_samples >= 100) {
      const Network gen = Network::from_checkpoint(run.final_checkpoint().generator);
      const Tensor samples = sample_generator(gen, o.eval_samples, c.seed);
      const auto centers = ring_centers(data);
      const Coverage cov = mode_coverage(samples, centers, 3.0 * data.sigma);
      s.covered = cov.covered;
      s.histogram = cov.histogram;
      s.kl = kl_to_mixture(samples, {centers, data.sigma});
    }
    result.runs[i] = {c.seed, std::move(run)};
    result.summaries[i] = std::move(s);
  });

  nlohmann::json runs = nlohmann::json::array();
  for (const auto& s : result.summaries) {
    runs.push_back({{"seed", s.seed},
                    {"aborted", s.aborted},
                    {"modes_covered", s.covered},
                    {"mode_histogram", s.histogram},
                    {"kl_to_target", number_or_null(s.kl)},
                    {"final_condition_median", number_or_null(s.final_condition_median)}});
  }
  result.summary = {{"command", "gan-train"},
                    {"preset", o.preset},
                    {"dataset", data.to_json()},
                    {"coverage_radius", ring ? nlohmann::json(3.0 * data.sigma) : nlohmann::json(nullptr)},
                    {"eval_samples", o.eval_samples},
                    {"discriminator_head_parameters", disc_spec.head_parameter_count()},
                    {"runs", runs}};

  if (!out.empty()) {
    const auto centers = ring ? ring_centers(data) : std::vector<std::array<double, 2>>{};
    for (std::size_t i = 0; i < o.seeds; ++i) {
      const auto& [seed, run] = result.runs[i];
      const fs::path dir = out / seed_dir(seed);
      ExperimentConfig c = o.config;
      c.train.seed = seed;
      nlohmann::json config = c.to_json();
      config["command"] = "gan-train";
      config["preset"] = o.preset;
      config["model_spec"] = disc_spec.to_json();
      config["generator_spec"] = gen_spec.to_json();
      write_run_dir(dir, config, run, true);
      for (const auto& snap : run.snapshots) {
        write_text(dir / "plots" / ("samples_" + step_name(snap.step) + ".svg"),
                   scatter_svg(snap.samples, centers, o.preset + " samples at step " + std::to_string(snap.step)));
      }
      write_json(dir / "summary.json", runs[i]);
    }
    write_json(out / "summary.json", result.summary);
  }
  return result;
}

namespace {

// "<sweep>/seed_N": the last two path components, so reports do not depend
// on where the runs were written.
std::string contestant_name(const fs::path& dir) {
  fs::path p = dir.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  const fs::path parent = p.parent_path().filename();
  return parent.empty() ? p.filename().generic_string() : (parent / p.filename()).generic_string();
}

}  // namespace

nlohmann::json run_tournament(const TournamentOptions& o, const fs::path& out) {
  TournamentResult r;
  if (o.matrix) {
    if (!o.runs.empty()) throw UsageError("use either --runs or --matrix");
    nlohmann::json j = read_json(*o.matrix);
    if (!o.key.empty()) {
      if (!j.contains(o.key)) throw UsageError("fixture has no entry '" + o.key + "'");
      j = j.at(o.key);
    }
    try {
      r.scores = ScoreMatrix::from_json(j);
    } catch (const std::exception& e) {
      throw UsageError(std::string("bad score matrix: ") + e.what());
    }
    r.diff = difference_matrix(r.scores);
    r.ordering = rank_models(r.diff);
  } else {
    if (o.runs.size() < 2) throw UsageError("a tournament needs at least two --runs");
    std::vector<Contestant> contestants;
    std::optional<DatasetSpec> data;
    for (const auto& dir : o.runs) {
      const nlohmann::json config = read_json(dir / "config.json");
      const nlohmann::json final_ckpt = read_json(dir / "checkpoints" / "final.json");
      if (!config.contains("train") || final_ckpt.at("generator").is_null()) {
        throw UsageError("'" + dir.string() + "' is not a gan-train run directory");
      }
      const DatasetSpec spec = DatasetSpec::from_json(config.at("train").at("dataset"));
      if (!data) data = spec;
      contestants.push_back({contestant_name(dir), Network::from_checkpoint(final_ckpt.at("discriminator")),
                             Network::from_checkpoint(final_ckpt.at("generator")), spec.fingerprint()});
    }
    const Dataset dataset = generate(*data);
    if (!dataset.has_validation) throw UsageError("the runs' dataset has no validation split");
    r = tournament(contestants, dataset.val_x, o.n_generated, o.seed);
  }

  const nlohmann::json report = r.to_json();
  if (!out.empty()) {
    write_json(out / "tournament.json", report);
    write_text(out / "scores.txt", render_table(r.scores));
    std::string diff = render_table(r.diff);
    diff += "\nordering (best first):";
    for (const auto& m : r.ordering.best_to_worst) diff += " " + m;
    if (r.ordering.has_cycle) {
      diff += "\ncycle among:";
      for (const auto& m : r.ordering.unresolved) diff += " " + m;
    }
    write_text(out / "diff.txt", diff + "\n");
    write_text(out / "heatmap.svg", heatmap_svg(r.diff.models, r.diff.entries, "difference matrix"));
  }
  return report;
}

fs::path run_plot(const fs::path& run_dir, const fs::path& spec_file) {
  std::ifstream in(run_dir / "log.csv");
  if (!in) throw UsageError("no log.csv in '" + run_dir.string() + "'");
  CsvTable table;
  PlotSpec spec;
  try {
    table = read_csv(in);
    spec = PlotSpec::from_json(read_json(spec_file));
    spec.validate(table);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const fs::path target = run_dir / "plots" / (spec_file.stem().string() + ".svg");
  write_text(target, render_plot(spec, table));
  return target;
}

}  // namespace gaf::cli
