#include "gaf/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>

#include "gaf/linalg.hpp"
#include "gaf/losses.hpp"

namespace gaf {

AdamState AdamState::zeros_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.first_moment.emplace_back(p.shape());
    s.second_moment.emplace_back(p.shape());
  }
  return s;
}

namespace {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::size_t t, const AdamConfig& c) {
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

void check_state(const std::vector<Tensor>& params, const AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].shape() != params[i].shape() || state.second_moment[i].shape() != params[i].shape()) {
      throw ContractError("adam state shape mismatch for parameter " + std::to_string(i));
    }
  }
}

}  // namespace

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& config) {
  check_state(params, state);
  if (grads.size() != params.size()) throw ContractError("adam_step: one gradient per parameter required");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ContractError("adam_step: gradient " + std::to_string(i) + " has shape " +
                          shape_string(grads[i].shape()) + ", parameter has " + shape_string(params[i].shape()));
    }
    adam_update(params[i].data(), grads[i].data(), state.first_moment[i].data(), state.second_moment[i].data(),
                state.step, config);
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& config) {
  check_state(params, state);
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;  // untouched by the last backward pass
    adam_update(params[i].data(), params[i].grad(), state.first_moment[i].data(), state.second_moment[i].data(),
                state.step, config);
  }
}

// --- config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 2) throw ContractError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (latent_dim == 0) throw ContractError("latent_dim must be positive");
  if (d_steps_per_g == 0) throw ContractError("d_steps_per_g must be positive");
}

namespace {

std::string objective_name(GeneratorObjective o) {
  return o == GeneratorObjective::kMinimax ? "minimax" : "non_saturating";
}

GeneratorObjective objective_from_name(const std::string& s) {
  if (s == "minimax") return GeneratorObjective::kMinimax;
  if (s == "non_saturating") return GeneratorObjective::kNonSaturating;
  throw ContractError("unknown generator objective '" + s + "'");
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epochs", epochs},
          {"steps", steps},
          {"seed", seed},
          {"latent_dim", latent_dim},
          {"condition_probe_every", condition_probe_every},
          {"d_steps_per_g", d_steps_per_g},
          {"generator_objective", objective_name(generator_objective)},
          {"checkpoint_every", checkpoint_every},
          {"snapshot_every", snapshot_every},
          {"snapshot_samples", snapshot_samples},
          {"check_finite", check_finite},
          {"dataset", dataset.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "steps") c.steps = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "latent_dim") c.latent_dim = value.get<std::size_t>();
    else if (key == "condition_probe_every") c.condition_probe_every = value.get<std::size_t>();
    else if (key == "d_steps_per_g") c.d_steps_per_g = value.get<std::size_t>();
    else if (key == "generator_objective") c.generator_objective = objective_from_name(value.get<std::string>());
    else if (key == "checkpoint_every") c.checkpoint_every = value.get<std::size_t>();
    else if (key == "snapshot_every") c.snapshot_every = value.get<std::size_t>();
    else if (key == "snapshot_samples") c.snapshot_samples = value.get<std::size_t>();
    else if (key == "check_finite") c.check_finite = value.get<bool>();
    else if (key == "dataset") {
      nlohmann::json merged = c.dataset.to_json();
      merged.update(value);
      c.dataset = DatasetSpec::from_json(merged);
    } else {
      throw ContractError("unknown config field '" + key + "'");
    }
  }
  return c;
}

std::vector<double> TrainRun::condition_series() const {
  std::vector<double> out;
  for (const StepRecord& r : records) {
    if (!std::isnan(r.condition)) out.push_back(r.condition);
  }
  return out;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_run_csv(const TrainRun& run, std::ostream& out) {
  out << "step,d_loss,g_loss,cond,val_loss\n";
  for (const StepRecord& r : run.records) {
    out << r.step << ',' << format_metric(r.d_loss) << ',' << format_metric(r.g_loss) << ','
        << format_metric(r.condition) << ',' << format_metric(r.val_loss) << '\n';
  }
}

// --- loops ----------------------------------------------------------------------

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

Tensor gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(Shape{rows, cols});
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t w = x.row_width();
  Tensor out(Shape{idx.size(), w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = x.row(idx[i]);
    std::copy(r.begin(), r.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return out;
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  std::vector<double> data(a.values());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor(Shape{a.rows() + b.rows(), a.row_width()}, std::move(data));
}

std::vector<double> probabilities(const Network& d, const Tensor& x) {
  const Tensor logits = d.forward(x);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = stable_sigmoid(logits[i]);
  return p;
}

void probe_condition(StepRecord& rec, const Network& net, const Tensor& batch, std::span<const double> targets,
                     HeadLoss kind) {
  const JacobianResult jr = with_head_jacobian(net, batch, targets, kind);
  const ConditionReading reading = measure_condition(jr.jacobian);
  rec.condition = reading.value;
  rec.condition_rank = reading.rank;
}

bool finite_losses(const StepRecord& r, bool gan) {
  return std::isfinite(r.g_loss) && (!gan || std::isfinite(r.d_loss));
}

}  // namespace

TrainRun train_gan(const TrainConfig& config, const ModelSpec& generator_spec, const ModelSpec& discriminator_spec) {
  config.validate();
  if (generator_spec.input_width != config.latent_dim) {
    throw SpecError("generator input width " + std::to_string(generator_spec.input_width) +
                    " differs from latent_dim " + std::to_string(config.latent_dim));
  }
  if (generator_spec.output_width() != discriminator_spec.input_width) {
    throw SpecError("generator output width does not match discriminator input width");
  }
  if (discriminator_spec.output_width() != 1) throw SpecError("discriminator must emit a single logit");

  const Dataset data = generate(config.dataset);
  if (data.train_x.row_width() != discriminator_spec.input_width) {
    throw SpecError("dataset width does not match the discriminator input");
  }

  TrainRun run;
  run.config = config;
  Network gen = Network::build(generator_spec, stream(config.seed, 1)());
  Network disc = Network::build(discriminator_spec, stream(config.seed, 2)());
  std::mt19937_64 rng = stream(config.seed, 3);
  std::mt19937_64 snapshot_rng = stream(config.seed, 4);
  const Tensor snapshot_z = gaussian(config.snapshot_samples, config.latent_dim, snapshot_rng);

  AdamState d_state = AdamState::zeros_like(disc.parameters());
  AdamState g_state = AdamState::zeros_like(gen.parameters());
  const AdamConfig adam = config.adam();
  const GraphOptions graph_options{config.check_finite};
  const std::size_t batch = config.batch_size;
  std::uniform_int_distribution<std::size_t> pick(0, data.train_x.rows() - 1);

  auto checkpoint = [&](std::size_t step) { run.checkpoints.push_back({step, disc.checkpoint(), gen.checkpoint()}); };
  auto snapshot = [&](std::size_t step) {
    if (config.snapshot_every > 0 && config.snapshot_samples > 0) {
      run.snapshots.push_back({step, gen.forward(snapshot_z)});
    }
  };
  checkpoint(0);
  snapshot(0);

  std::vector<double> targets(2 * batch, 0.0);
  std::fill(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(batch), 1.0);
  std::vector<std::size_t> idx(batch);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    try {
      for (std::size_t k = 0; k < config.d_steps_per_g; ++k) {
        for (std::size_t& i : idx) i = pick(rng);
        const Tensor real = gather_rows(data.train_x, idx);
        const Tensor fake = gen.forward(gaussian(batch, config.latent_dim, rng));

        const bool probe = k == 0 && config.condition_probe_every > 0 && step % config.condition_probe_every == 0;
        if (probe) {
          probe_condition(rec, disc, stack_rows(real, fake), targets, HeadLoss::kBinary);
          if (data.has_validation) {
            rec.val_loss = generator_loss(probabilities(disc, data.val_x));  // -mean log D(x_val)
          }
        }

        Graph g(graph_options);
        const Var p_real = g.sigmoid(disc.forward(g, g.view(real), ParamMode::kTrainable));
        const Var p_fake = g.sigmoid(disc.forward(g, g.view(fake), ParamMode::kTrainable));
        const Var loss = discriminator_loss(g, p_real, p_fake);
        rec.d_loss = g.value(loss).item();
        if (!std::isfinite(rec.d_loss)) break;
        disc.zero_grad();
        g.backward(loss);
        adam_step(disc.parameters(), d_state, adam);
      }

      if (std::isfinite(rec.d_loss)) {
        const Tensor z = gaussian(batch, config.latent_dim, rng);
        Graph g(graph_options);
        const Var samples = gen.forward(g, g.view(z), ParamMode::kTrainable);
        const Var p_fake = g.sigmoid(std::as_const(disc).forward(g, samples));
        const Var loss = config.generator_objective == GeneratorObjective::kMinimax ? generator_loss_minimax(g, p_fake)
                                                                                    : generator_loss(g, p_fake);
        rec.g_loss = g.value(loss).item();
        if (std::isfinite(rec.g_loss)) {
          gen.zero_grad();
          g.backward(loss);
          adam_step(gen.parameters(), g_state, adam);
        }
      }
    } catch (const NumericalError& e) {
      run.aborted = true;
      run.diagnostic = "step " + std::to_string(step) + ": " + e.what();
    }

    if (!run.aborted && !finite_losses(rec, true)) {
      run.aborted = true;
      run.diagnostic = "step " + std::to_string(step) + ": non-finite " +
                       (std::isfinite(rec.d_loss) ? std::string("g_loss") : std::string("d_loss"));
    }
    run.records.push_back(rec);
    if (run.aborted) break;
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step != config.steps) checkpoint(step);
    if (config.snapshot_every > 0 && step % config.snapshot_every == 0 && step != config.steps) snapshot(step);
  }

  const std::size_t last = run.records.empty() ? 0 : run.records.back().step;
  if (last > 0) {
    checkpoint(last);
    snapshot(last);
  }
  return run;
}

double classifier_loss(const Network& net, const Tensor& x, const std::vector<std::size_t>& labels) {
  const Tensor out = net.forward(x);
  if (out.rows() != labels.size()) throw ContractError("classifier_loss: one label per row required");
  const std::size_t width = out.row_width();
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (width == 1) {
      total += binary_log_loss(stable_sigmoid(out[i]), static_cast<double>(labels[i]));
    } else {
      const auto row = out.row(i);
      const double top = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double v : row) z += std::exp(v - top);
      total += top + std::log(z) - row[labels[i]];
    }
  }
  return total / static_cast<double>(labels.size());
}

TrainRun train_classifier(const TrainConfig& config, const ModelSpec& spec) {
  config.validate();
  const Dataset data = generate(config.dataset);
  if (data.train_x.row_width() != spec.input_width) throw SpecError("dataset width does not match the model input");
  const std::size_t out_width = spec.output_width();
  if (out_width != 1 && out_width != data.classes) {
    throw SpecError("classifier output width must be 1 (binary) or the number of classes");
  }
  const HeadLoss kind = out_width == 1 ? HeadLoss::kBinary : HeadLoss::kSoftmax;

  TrainRun run;
  run.config = config;
  Network net = Network::build(spec, stream(config.seed, 2)());
  std::mt19937_64 rng = stream(config.seed, 3);
  AdamState state = AdamState::zeros_like(net.parameters());
  const AdamConfig adam = config.adam();

  const std::size_t n = data.train_x.rows();
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = config.steps > 0 ? config.steps : config.epochs * per_epoch;

  run.checkpoints.push_back({0, net.checkpoint(), nullptr});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t step = 1; step <= total_steps; ++step) {
    const std::size_t slot = (step - 1) % per_epoch;
    if (slot == 0 && batch < n) std::shuffle(order.begin(), order.end(), rng);
    const std::size_t begin = slot * batch;
    const std::size_t end = std::min(begin + batch, n);
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const Tensor x = gather_rows(data.train_x, idx);
    std::vector<std::size_t> labels(idx.size());
    std::vector<double> targets(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      labels[i] = data.train_y[idx[i]];
      targets[i] = static_cast<double>(labels[i]);
    }

    StepRecord rec;
    rec.step = step;
    try {
      if (config.condition_probe_every > 0 && step % config.condition_probe_every == 0) {
        probe_condition(rec, net, x, targets, kind);
        if (data.has_validation) rec.val_loss = classifier_loss(net, data.val_x, data.val_y);
      }
      Graph g(GraphOptions{config.check_finite});
      const Var out = net.forward(g, g.view(x), ParamMode::kTrainable);
      const Var per_sample = kind == HeadLoss::kBinary ? binary_log_loss(g, g.sigmoid(out), targets)
                                                       : softmax_cross_entropy(g, out, labels);
      const Var loss = g.mean(per_sample);
      rec.g_loss = g.value(loss).item();
      if (std::isfinite(rec.g_loss)) {
        net.zero_grad();
        g.backward(loss);
        adam_step(net.parameters(), state, adam);
      }
    } catch (const NumericalError& e) {
      run.aborted = true;
      run.diagnostic = "step " + std::to_string(step) + ": " + e.what();
    }
    if (!run.aborted && !finite_losses(rec, false)) {
      run.aborted = true;
      run.diagnostic = "step " + std::to_string(step) + ": non-finite loss";
    }
    run.records.push_back(rec);
    if (run.aborted) break;
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step != total_steps) {
      run.checkpoints.push_back({step, net.checkpoint(), nullptr});
    }
  }
  if (!run.records.empty()) run.checkpoints.push_back({run.records.back().step, net.checkpoint(), nullptr});
  if (!run.aborted) run.final_train_loss = classifier_loss(net, data.train_x, data.train_y);
  return run;
}

}  // namespace gaf
