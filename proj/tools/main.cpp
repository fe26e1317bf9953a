#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "gaf/errors.hpp"

namespace fs = std::filesystem;
using namespace gaf;
using namespace gaf::cli;

namespace {

struct Global {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string config;
  std::size_t jobs = default_jobs();
};

// Built-in defaults, then the config file, then flags given on the command line.
ExperimentConfig layered(ExperimentConfig base, const Global& g) {
  if (!g.config.empty()) base.apply(read_json(g.config));
  return base;
}

bool given(const CLI::Option* opt) {
  return opt != nullptr && opt->count() > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft decision forest heads, GAN training and conditioning diagnostics"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "first RNG seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--config", g.config, "JSON file with {\"train\": {...}, \"model\": {...}} overrides")
      ->check(CLI::ExistingFile);
  app.add_option("--jobs", g.jobs, "worker threads for multi-seed runs")->check(CLI::PositiveNumber);

  // xor
  auto* xor_cmd = app.add_subcommand("xor", "XOR truth-table experiment (tree vs FC head)");
  std::size_t xor_dim = 3, xor_epochs = 0, xor_seeds = 10;
  int xor_depth = 0;
  double xor_lr = 0.0;
  std::string xor_model = "tree";
  xor_cmd->add_option("--dim", xor_dim, "input dimension")->check(CLI::Range(2, 20))->capture_default_str();
  xor_cmd->add_option("--model", xor_model, "tree or fc")->check(CLI::IsMember({"tree", "fc"}))->capture_default_str();
  auto* xor_epochs_opt = xor_cmd->add_option("--epochs", xor_epochs, "training epochs")->check(CLI::PositiveNumber);
  xor_cmd->add_option("--seeds", xor_seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();
  auto* xor_depth_opt = xor_cmd->add_option("--depth", xor_depth, "tree depth (default dim - 1)")
                            ->check(CLI::Range(1, 12));
  auto* xor_lr_opt = xor_cmd->add_option("--lr", xor_lr, "learning rate")->check(CLI::PositiveNumber);

  // clf-cond
  auto* clf_cmd = app.add_subcommand("clf-cond", "classifier conditioning at lr and 10x lr");
  std::string clf_head = "forest";
  double clf_lr = 0.0;
  std::size_t clf_steps = 0, clf_seeds = 3;
  clf_cmd->add_option("--head", clf_head, "forest or fc")->check(CLI::IsMember({"forest", "fc"}))->capture_default_str();
  auto* clf_lr_opt = clf_cmd->add_option("--lr", clf_lr, "base learning rate")->check(CLI::PositiveNumber);
  auto* clf_steps_opt = clf_cmd->add_option("--steps", clf_steps, "training steps")->check(CLI::PositiveNumber);
  clf_cmd->add_option("--seeds", clf_seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();

  // gan-train
  auto* gan_cmd = app.add_subcommand("gan-train", "adversarial training on 2-D synthetic data");
  std::string gan_preset = "gan_forest_deep", gan_data = "gaussian_ring";
  std::size_t gan_steps = 0, gan_seeds = 1;
  double gan_lr = 0.0;
  gan_cmd->add_option("--preset", gan_preset, "discriminator preset")
      ->check(CLI::IsMember({"gan_fc", "gan_forest_shallow", "gan_forest_deep"}))
      ->capture_default_str();
  auto* gan_data_opt = gan_cmd->add_option("--data", gan_data, "dataset")
                           ->check(CLI::IsMember({"gaussian_ring", "two_moons", "spiral_multiclass"}))
                           ->capture_default_str();
  auto* gan_steps_opt = gan_cmd->add_option("--steps", gan_steps, "training iterations");
  auto* gan_lr_opt = gan_cmd->add_option("--lr", gan_lr, "learning rate")->check(CLI::PositiveNumber);
  gan_cmd->add_option("--seeds", gan_seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();

  // tournament
  auto* tour_cmd = app.add_subcommand("tournament", "cross-evaluate trained GANs or a stored score matrix");
  std::vector<std::string> tour_runs;
  std::string tour_matrix, tour_key;
  std::size_t tour_ng = 0;
  auto* runs_opt = tour_cmd->add_option("--runs", tour_runs, "gan-train run directories");
  auto* matrix_opt = tour_cmd->add_option("--matrix", tour_matrix, "score-matrix JSON fixture")->check(CLI::ExistingFile);
  tour_cmd->add_option("--key", tour_key, "entry of the fixture to load");
  tour_cmd->add_option("--n-generated", tour_ng, "generated samples per generator (default: validation size)");
  runs_opt->excludes(matrix_opt);

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render log.csv columns to SVG");
  std::string plot_run, plot_spec;
  plot_cmd->add_option("--run", plot_run, "run directory")->required()->check(CLI::ExistingDirectory);
  plot_cmd->add_option("--spec", plot_spec, "plot spec JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const fs::path out = g.out;
    if (*xor_cmd) {
      XorOptions o;
      o.model = xor_model;
      o.seeds = xor_seeds;
      o.seed = g.seed;
      o.jobs = g.jobs;
      o.config = layered(xor_defaults(xor_dim), g);
      o.config.train.dataset.dim = xor_dim;
      o.config.model.xor_dim = xor_dim;
      if (given(xor_depth_opt)) o.config.model.xor_tree_depth = xor_depth;
      if (given(xor_epochs_opt)) o.config.train.epochs = xor_epochs;
      if (given(xor_lr_opt)) o.config.train.learning_rate = xor_lr;
      const XorResult r = run_xor(o, out);
      std::cout << "xor " << o.model << " dim " << xor_dim << ": success rate " << r.success_rate << " ("
                << out.string() << "/summary.json)\n";
      for (const auto& run : r.runs)
        if (run.run.aborted) return kExitRuntime;
    } else if (*clf_cmd) {
      ClfOptions o;
      o.head = clf_head;
      o.seeds = clf_seeds;
      o.seed = g.seed;
      o.jobs = g.jobs;
      o.config = layered(clf_defaults(), g);
      if (given(clf_lr_opt)) o.config.train.learning_rate = clf_lr;
      if (given(clf_steps_opt)) o.config.train.steps = clf_steps;
      const ClfResult r = run_clf_cond(o, out);
      bool aborted = false;
      for (const auto* group : {&r.base, &r.stress})
        for (const auto& run : *group) {
          if (run.run.aborted) {
            std::cerr << "divergence abort (seed " << run.seed << ", lr " << run.run.config.learning_rate
                      << "): " << run.run.diagnostic << "\n";
            aborted = true;
          }
        }
      std::cout << "clf-cond " << o.head << ": results in " << out.string() << "/summary.json\n";
      if (aborted) return kExitRuntime;
    } else if (*gan_cmd) {
      GanOptions o;
      o.preset = gan_preset;
      o.seeds = gan_seeds;
      o.seed = g.seed;
      o.jobs = g.jobs;
      o.config = layered(gan_defaults(), g);
      if (given(gan_data_opt)) o.config.train.dataset.kind = dataset_kind_from_string(gan_data);
      if (given(gan_steps_opt)) o.config.train.steps = gan_steps;
      if (given(gan_lr_opt)) o.config.train.learning_rate = gan_lr;
      const GanResult r = run_gan(o, out);
      bool aborted = false;
      for (const auto& s : r.summaries) {
        std::cout << "seed " << s.seed << ": modes covered " << s.covered << ", tail condition median "
                  << format_metric(s.final_condition_median) << (s.aborted ? " (aborted)" : "") << "\n";
        aborted = aborted || s.aborted;
      }
      if (aborted) return kExitRuntime;
    } else if (*tour_cmd) {
      TournamentOptions o;
      for (const auto& r : tour_runs) o.runs.emplace_back(r);
      if (!tour_matrix.empty()) o.matrix = tour_matrix;
      o.key = tour_key;
      o.n_generated = tour_ng;
      o.seed = g.seed;
      const auto report = run_tournament(o, out);
      std::cout << "ordering:";
      for (const auto& m : report.at("ordering")) std::cout << " " << m.get<std::string>();
      std::cout << "\n";
    } else if (*plot_cmd) {
      std::cout << run_plot(plot_run, plot_spec).string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
