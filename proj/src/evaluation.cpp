#include "gaf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "gaf/losses.hpp"

namespace gaf {

void ScoreMatrix::validate() const {
  const std::size_t n = models.size();
  if (entries.size() != n) throw ContractError("score matrix must be square with one row per model");
  for (const auto& row : entries) {
    if (row.size() != n) throw ContractError("score matrix must be square with one row per model");
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("score matrix entries must be finite and non-negative");
    }
  }
}

nlohmann::json ScoreMatrix::to_json() const {
  return {{"models", models}, {"matrix", entries}, {"metadata", metadata}};
}

ScoreMatrix ScoreMatrix::from_json(const nlohmann::json& j) {
  ScoreMatrix s;
  s.models = j.at("models").get<std::vector<std::string>>();
  s.entries = j.at("matrix").get<std::vector<std::vector<double>>>();
  if (j.contains("metadata")) s.metadata = j.at("metadata");
  s.validate();
  return s;
}

nlohmann::json DiffMatrix::to_json() const { return {{"models", models}, {"matrix", entries}}; }

DiffMatrix difference_matrix(const ScoreMatrix& scores) {
  scores.validate();
  const std::size_t n = scores.size();
  DiffMatrix d{scores.models, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0))};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) d.entries[i][j] = scores.entries[j][i] - scores.entries[i][j];
    }
  return d;
}

Ordering rank_models(const DiffMatrix& diff) {
  const std::size_t n = diff.models.size();
  // beaten_by[i] counts models j that beat i.
  std::vector<std::size_t> beaten_by(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (diff.entries[i][j] > 0.0) ++beaten_by[i];

  Ordering out;
  std::vector<bool> placed(n, false);
  for (std::size_t round = 0; round < n; ++round) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!placed[i] && beaten_by[i] == 0) {
        pick = i;
        break;
      }
    }
    if (pick == n) break;
    placed[pick] = true;
    out.best_to_worst.push_back(diff.models[pick]);
    for (std::size_t i = 0; i < n; ++i)
      if (!placed[i] && diff.entries[i][pick] > 0.0) --beaten_by[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!placed[i]) {
      out.has_cycle = true;
      out.unresolved.push_back(diff.models[i]);
    }
  }
  return out;
}

namespace {

std::string render(const std::vector<std::string>& models, const std::vector<std::vector<double>>& m,
                   const std::string& corner, int precision) {
  std::size_t width = corner.size();
  for (const auto& name : models) width = std::max(width, name.size());
  width += 2;
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << corner;
  for (const auto& name : models) out << std::right << std::setw(static_cast<int>(width)) << name;
  out << '\n';
  for (std::size_t i = 0; i < models.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(width)) << models[i];
    for (double v : m[i]) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(precision) << (std::abs(v) < 0.5 * std::pow(10.0, -precision) ? 0.0 : v);
      out << std::right << std::setw(static_cast<int>(width)) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string render_table(const ScoreMatrix& scores, int precision) {
  return render(scores.models, scores.entries, "gen \\ disc", precision);
}

std::string render_table(const DiffMatrix& diff, int precision) {
  return render(diff.models, diff.entries, "diff", precision);
}

namespace {

Tensor latent_codes(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z(Shape{n, dim});
  for (double& v : z.data()) v = normal(rng);
  return z;
}

double mean_log_term(const Network& disc, const Tensor& x, bool complement) {
  const Tensor logits = disc.forward(x);
  double acc = 0.0;
  for (double logit : logits.data()) {
    const double p = clamp_probability(stable_sigmoid(logit));
    acc += std::log(complement ? 1.0 - p : p);
  }
  return acc / static_cast<double>(logits.size());
}

void check_validation(const Tensor& validation) {
  if (validation.rank() != 2 || validation.rows() == 0) {
    throw ContractError("adjusted loss needs a non-empty validation set");
  }
}

}  // namespace

double adjusted_loss(const Network& disc_a, const Network& gen_b, const Tensor& validation, std::size_t n_generated,
                     std::uint64_t seed) {
  check_validation(validation);
  if (n_generated == 0) throw ContractError("adjusted loss needs at least one generated sample");
  const Tensor fakes = gen_b.forward(latent_codes(n_generated, gen_b.spec().input_width, seed));
  return -mean_log_term(disc_a, fakes, true) - mean_log_term(disc_a, validation, false);
}

nlohmann::json TournamentResult::to_json() const {
  return {{"models", scores.models},
          {"matrix", scores.entries},
          {"diff_matrix", diff.entries},
          {"ordering", ordering.best_to_worst},
          {"ordering_has_cycle", ordering.has_cycle},
          {"ordering_unresolved", ordering.unresolved},
          {"config", scores.metadata}};
}

TournamentResult tournament(const std::vector<Contestant>& models, const Tensor& validation, std::size_t n_generated,
                            std::uint64_t seed) {
  if (models.size() < 2) throw ContractError("a tournament needs at least two models");
  check_validation(validation);
  for (const Contestant& c : models) {
    if (c.dataset_fingerprint != models.front().dataset_fingerprint) {
      throw ContractError("model '" + c.name + "' was trained on a different dataset split than '" +
                          models.front().name + "'");
    }
  }
  const std::size_t n_g = n_generated == 0 ? validation.rows() : n_generated;
  const std::size_t n = models.size();

  TournamentResult r;
  r.scores.models.reserve(n);
  for (const Contestant& c : models) r.scores.models.push_back(c.name);

  // Each generator's fakes and each discriminator's validation term are shared
  // across the row/column they feed.
  std::vector<Tensor> fakes;
  fakes.reserve(n);
  for (const Contestant& c : models) {
    fakes.push_back(c.generator.forward(latent_codes(n_g, c.generator.spec().input_width, seed)));
  }
  std::vector<double> validation_term(n);
  for (std::size_t d = 0; d < n; ++d) validation_term[d] = -mean_log_term(models[d].discriminator, validation, false);

  r.scores.entries.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t g = 0; g < n; ++g)
    for (std::size_t d = 0; d < n; ++d) {
      r.scores.entries[g][d] = -mean_log_term(models[d].discriminator, fakes[g], true) + validation_term[d];
    }
  r.scores.metadata = {{"n_generated", n_g},
                       {"n_validation", validation.rows()},
                       {"seed", seed},
                       {"dataset", models.front().dataset_fingerprint}};
  r.diff = difference_matrix(r.scores);
  r.ordering = rank_models(r.diff);
  return r;
}

Coverage mode_coverage(const Tensor& samples, const std::vector<std::array<double, 2>>& centers, double radius) {
  if (samples.rank() != 2 || samples.shape()[1] != 2) throw DimensionError("mode_coverage expects [N x 2] samples");
  if (samples.rows() < 100) throw ContractError("mode_coverage needs at least 100 samples");
  if (centers.empty()) throw ContractError("mode_coverage needs at least one center");
  Coverage c;
  c.histogram.assign(centers.size(), 0);
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const double x = samples.at(i, 0), y = samples.at(i, 1);
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double dx = x - centers[k][0], dy = y - centers[k][1];
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    if (best_d2 <= r2) ++c.histogram[best];
  }
  const double threshold = 0.01 * static_cast<double>(samples.rows());
  for (std::size_t h : c.histogram) {
    if (static_cast<double>(h) >= threshold) ++c.covered;
  }
  return c;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double kl_to_mixture(const Tensor& samples, const GaussianMixture& mixture, std::size_t bins) {
  if (samples.rank() != 2 || samples.shape()[1] != 2) throw DimensionError("kl_to_mixture expects [N x 2] samples");
  if (samples.rows() < 100) throw ContractError("kl_to_mixture needs at least 100 samples");
  if (mixture.centers.empty() || !(mixture.sigma > 0.0) || bins == 0) {
    throw ContractError("kl_to_mixture needs centers, a positive sigma and at least one bin");
  }
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& c : mixture.centers) {
    lo_x = std::min(lo_x, c[0]);
    hi_x = std::max(hi_x, c[0]);
    lo_y = std::min(lo_y, c[1]);
    hi_y = std::max(hi_y, c[1]);
  }
  const double pad = 4.0 * mixture.sigma;
  lo_x -= pad;
  hi_x += pad;
  lo_y -= pad;
  hi_y += pad;
  const double wx = (hi_x - lo_x) / static_cast<double>(bins);
  const double wy = (hi_y - lo_y) / static_cast<double>(bins);

  // Mixture mass per cell: the Gaussians factor over axes.
  const std::size_t k = mixture.centers.size();
  std::vector<double> mass_x(k * bins), mass_y(k * bins);
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t b = 0; b < bins; ++b) {
      const double x0 = lo_x + wx * static_cast<double>(b), y0 = lo_y + wy * static_cast<double>(b);
      mass_x[m * bins + b] = normal_cdf((x0 + wx - mixture.centers[m][0]) / mixture.sigma) -
                             normal_cdf((x0 - mixture.centers[m][0]) / mixture.sigma);
      mass_y[m * bins + b] = normal_cdf((y0 + wy - mixture.centers[m][1]) / mixture.sigma) -
                             normal_cdf((y0 - mixture.centers[m][1]) / mixture.sigma);
    }

  std::vector<std::size_t> counts(bins * bins + 1, 0);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const double fx = (samples.at(i, 0) - lo_x) / wx;
    const double fy = (samples.at(i, 1) - lo_y) / wy;
    if (fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(bins) && fy < static_cast<double>(bins)) {
      ++counts[static_cast<std::size_t>(fy) * bins + static_cast<std::size_t>(fx)];
    } else {
      ++counts[bins * bins];
    }
  }

  constexpr double kMassFloor = 1e-12;
  const double n = static_cast<double>(samples.rows());
  double inside = 0.0;
  double kl = 0.0;
  for (std::size_t by = 0; by < bins; ++by)
    for (std::size_t bx = 0; bx < bins; ++bx) {
      double q = 0.0;
      for (std::size_t m = 0; m < k; ++m) q += mass_x[m * bins + bx] * mass_y[m * bins + by];
      q /= static_cast<double>(k);
      inside += q;
      const std::size_t c = counts[by * bins + bx];
      if (c > 0) {
        const double p = static_cast<double>(c) / n;
        kl += p * std::log(p / std::max(q, kMassFloor));
      }
    }
  if (counts[bins * bins] > 0) {
    const double p = static_cast<double>(counts[bins * bins]) / n;
    kl += p * std::log(p / std::max(1.0 - inside, kMassFloor));
  }
  return kl;
}

}  // namespace gaf
