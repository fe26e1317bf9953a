#include "gaf/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace gaf {

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kXor: return "xor";
    case DatasetKind::kGaussianRing: return "gaussian_ring";
    case DatasetKind::kTwoMoons: return "two_moons";
    case DatasetKind::kSpiral: return "spiral_multiclass";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "xor") return DatasetKind::kXor;
  if (s == "gaussian_ring") return DatasetKind::kGaussianRing;
  if (s == "two_moons") return DatasetKind::kTwoMoons;
  if (s == "spiral_multiclass" || s == "spiral") return DatasetKind::kSpiral;
  throw ContractError("unknown dataset kind '" + s + "'");
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"kind", to_string(kind)}, {"dim", dim},       {"signed_inputs", signed_inputs},
          {"modes", modes},          {"radius", radius}, {"sigma", sigma},
          {"classes", classes},      {"n_samples", n_samples}, {"train_fraction", train_fraction},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.kind = dataset_kind_from_string(j.value("kind", to_string(s.kind)));
  s.dim = j.value("dim", s.dim);
  s.signed_inputs = j.value("signed_inputs", s.signed_inputs);
  s.modes = j.value("modes", s.modes);
  s.radius = j.value("radius", s.radius);
  s.sigma = j.value("sigma", s.sigma);
  s.classes = j.value("classes", s.classes);
  s.n_samples = j.value("n_samples", s.n_samples);
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::string DatasetSpec::fingerprint() const { return to_json().dump(); }

std::vector<std::array<double, 2>> ring_centers(const DatasetSpec& spec) {
  std::vector<std::array<double, 2>> centers(spec.modes);
  for (std::size_t k = 0; k < spec.modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.modes);
    centers[k] = {spec.radius * std::cos(angle), spec.radius * std::sin(angle)};
  }
  return centers;
}

namespace {

Dataset xor_table(const DatasetSpec& spec) {
  if (spec.dim < 2 || spec.dim > 20) throw ContractError("xor dimension must be in [2, 20]");
  const std::size_t n = std::size_t{1} << spec.dim;
  Dataset d;
  d.classes = 2;
  d.train_x = Tensor(Shape{n, spec.dim});
  d.train_y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t b = 0; b < spec.dim; ++b) {
      const bool bit = ((i >> (spec.dim - 1 - b)) & 1U) != 0;
      ones += bit ? 1 : 0;
      d.train_x.at(i, b) = bit ? 1.0 : (spec.signed_inputs ? -1.0 : 0.0);
    }
    d.train_y[i] = ones % 2;
  }
  return d;
}

void split(const Tensor& x, const std::vector<std::size_t>& y, const DatasetSpec& spec, std::mt19937_64& rng,
           Dataset& out) {
  const std::size_t n = x.shape()[0];
  const std::size_t width = x.shape()[1];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n))), 1, n);
  auto gather = [&](std::size_t begin, std::size_t end, Tensor& tx, std::vector<std::size_t>& ty) {
    tx = Tensor(Shape{end - begin, width});
    ty.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < width; ++c) tx.at(i - begin, c) = x.at(order[i], c);
      ty[i - begin] = y[order[i]];
    }
  };
  gather(0, n_train, out.train_x, out.train_y);
  out.has_validation = n_train < n;
  if (out.has_validation) gather(n_train, n, out.val_x, out.val_y);
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::kXor) return xor_table(spec);
  if (spec.n_samples < 2) throw ContractError("dataset needs at least two samples");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
    throw ContractError("train_fraction must be in (0, 1]");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t n = spec.n_samples;
  Tensor x(Shape{n, 2});
  std::vector<std::size_t> y(n, 0);
  Dataset d;

  switch (spec.kind) {
    case DatasetKind::kGaussianRing: {
      if (spec.modes == 0) throw ContractError("gaussian_ring needs at least one mode");
      const auto centers = ring_centers(spec);
      std::uniform_int_distribution<std::size_t> pick(0, spec.modes - 1);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        x.at(i, 0) = centers[k][0] + spec.sigma * normal(rng);
        x.at(i, 1) = centers[k][1] + spec.sigma * normal(rng);
        y[i] = k;
      }
      d.classes = spec.modes;
      break;
    }
    case DatasetKind::kTwoMoons: {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double t = std::numbers::pi * uniform(rng);
        if (label == 0) {
          x.at(i, 0) = std::cos(t);
          x.at(i, 1) = std::sin(t);
        } else {
          x.at(i, 0) = 1.0 - std::cos(t);
          x.at(i, 1) = 0.5 - std::sin(t);
        }
        x.at(i, 0) += spec.sigma * normal(rng);
        x.at(i, 1) += spec.sigma * normal(rng);
        y[i] = label;
      }
      d.classes = 2;
      break;
    }
    case DatasetKind::kSpiral: {
      if (spec.classes < 2) throw ContractError("spiral needs at least two classes");
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % spec.classes;
        const double r = uniform(rng);
        const double angle = 4.0 * (static_cast<double>(label) + r) + spec.sigma * normal(rng);
        x.at(i, 0) = r * std::sin(angle);
        x.at(i, 1) = r * std::cos(angle);
        y[i] = label;
      }
      d.classes = spec.classes;
      break;
    }
    case DatasetKind::kXor:
      break;
  }
  split(x, y, spec, rng, d);
  return d;
}

}  // namespace gaf
