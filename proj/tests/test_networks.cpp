#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gaf/errors.hpp"
#include "gaf/losses.hpp"
#include "gaf/networks.hpp"
#include "gradcheck.hpp"

using namespace gaf;
using gaf::testing::check_gradients_in_place;
using gaf::testing::kink_free_batch;
using gaf::testing::kKinkedFd;
using gaf::testing::network_stencils;
using gaf::testing::random_tensor;
using gaf::testing::relative_error;
using gaf::testing::weighted_sum;

namespace {

// Re-draws every parameter with a larger spread so finite differences are
// not dominated by round-off on tiny gradients.
void widen(Network& net, std::uint64_t seed, double stddev = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& p : net.parameters())
    for (double& v : p.data()) v = n(rng);
}

ModelSpec single_layer(LayerSpec layer, std::size_t in) {
  ModelSpec s;
  s.name = "probe";
  s.input_width = in;
  s.layers = {LayerSpec::affine(in, layer.kind == LayerKind::kForestHead ? layer.forest.input_width() : 4)};
  if (layer.kind != LayerKind::kAffine) s.layers.push_back(layer);
  return s;
}

}  // namespace

TEST(Presets, XorParameterCounts) {
  EXPECT_EQ(preset("xor_fc").parameter_count(), 16u);
  EXPECT_EQ(preset("xor_tree").parameter_count(), 19u);
  EXPECT_EQ(Network::build(preset("xor_fc"), 1).parameter_count(), 16u);
  EXPECT_EQ(Network::build(preset("xor_tree"), 1).parameter_count(), 19u);
  EXPECT_EQ(preset("xor_tree").head_parameter_count(), 7u);
}

TEST(Presets, FullScaleHeads) {
  const ForestShape shallow = full_scale_shallow_head();
  EXPECT_EQ(shallow.bias_count(), 8192u);
  EXPECT_EQ(shallow.leaf_count(), 16384u);
  const ForestShape deep = full_scale_deep_head();
  EXPECT_EQ(deep.bias_count(), 8176u);
  EXPECT_EQ(deep.leaf_count(), 8192u);
}

TEST(Presets, AllNamedPresetsBuild) {
  for (const auto& name : preset_names()) {
    const ModelSpec s = preset(name);
    const Network net = Network::build(s, 3);
    EXPECT_EQ(net.parameter_count(), s.parameter_count()) << name;
  }
  EXPECT_THROW(preset("resnet"), SpecError);
}

TEST(Presets, ComparisonPairsShareBodies) {
  for (auto [fc, forest] : {std::pair{"clf_fc", "clf_forest"}, std::pair{"gan_fc", "gan_forest_shallow"},
                            std::pair{"gan_fc", "gan_forest_deep"}}) {
    const ModelSpec a = preset(fc), b = preset(forest);
    // Body = every layer before the head, minus the FC model's extra ReLU.
    std::size_t body_a = 0, body_b = 0;
    for (const auto& l : a.layers)
      if (l.kind == LayerKind::kAffine) body_a += l.in * l.out + l.out;
    for (const auto& l : b.layers)
      if (l.kind == LayerKind::kAffine) body_b += l.in * l.out + l.out;
    EXPECT_EQ(body_a, body_b) << fc << " vs " << forest;
    EXPECT_EQ(a.parameter_count() - a.head_parameter_count(), body_a);
  }
}

TEST(Presets, ScaledGanHeadsKeepRatios) {
  // The full-scale heads replace a 8192-input linear unit (8193 parameters);
  // the scaled heads keep the same ratio to gan_fc's 64-parameter head.
  const double full_fc = 8193.0;
  const double full_shallow = static_cast<double>(full_scale_shallow_head().parameter_count());
  const double full_deep = static_cast<double>(full_scale_deep_head().parameter_count());
  const double fc = static_cast<double>(preset("gan_fc").head_parameter_count());
  const double shallow = static_cast<double>(preset("gan_forest_shallow").head_parameter_count());
  const double deep = static_cast<double>(preset("gan_forest_deep").head_parameter_count());
  EXPECT_NEAR((shallow / fc) / (full_shallow / full_fc), 1.0, 0.1);
  EXPECT_NEAR((deep / fc) / (full_deep / full_fc), 1.0, 0.1);
}

TEST(Spec, WidthMismatchIsSpecError) {
  ModelSpec s;
  s.input_width = 3;
  s.layers = {LayerSpec::affine(3, 4), LayerSpec::affine(5, 1)};
  EXPECT_THROW(s.validate(), SpecError);
  EXPECT_THROW(Network::build(s, 0), SpecError);

  ModelSpec forest;
  forest.input_width = 2;
  forest.layers = {LayerSpec::affine(2, 5), LayerSpec::forest_head({2, 2, 1, 1.0, Combination::kAverage})};
  EXPECT_THROW(forest.validate(), SpecError);

  ModelSpec head_not_last;
  head_not_last.input_width = 2;
  head_not_last.layers = {LayerSpec::affine(2, 2), LayerSpec::fc_head(2), LayerSpec::relu()};
  EXPECT_THROW(head_not_last.validate(), SpecError);
}

TEST(Spec, JsonRoundTrip) {
  for (const auto& name : preset_names()) {
    const ModelSpec s = preset(name);
    const ModelSpec back = ModelSpec::from_json(nlohmann::json::parse(s.to_json().dump()));
    EXPECT_EQ(back.to_json(), s.to_json()) << name;
  }
}

TEST(Network, BuildIsDeterministicInSeed) {
  const ModelSpec s = preset("gan_forest_deep");
  const Network a = Network::build(s, 5), b = Network::build(s, 5), c = Network::build(s, 6);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
}

TEST(Network, InitHasRequestedSpread) {
  const Network net = Network::build(preset("gan_fc"), 1);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& p : net.parameters())
    for (double v : p.values()) {
      sum += v;
      sq += v * v;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.002);
  EXPECT_NEAR(sd, 0.02, 0.002);
}

TEST(Network, ForwardIsPureAndMatchesGraph) {
  Network net = Network::build(preset("clf_forest"), 2);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({6, 2}, rng);
  const Tensor a = net.forward(x);
  EXPECT_EQ(net.forward(x), a);
  Graph g;
  EXPECT_EQ(g.value(net.forward(g, g.view(x))), a);
  EXPECT_EQ(a.shape(), (Shape{6, 3}));
  EXPECT_THROW(net.forward(random_tensor({2, 3}, rng)), std::exception);
}

TEST(Network, CheckpointRoundTripIsBitIdentical) {
  for (const auto& name : preset_names()) {
    const Network net = Network::build(preset(name), 11);
    const auto j = net.checkpoint();
    for (const char* key : {"spec", "seed", "parameters"}) EXPECT_TRUE(j.contains(key)) << name;
    const Network back = Network::from_checkpoint(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.parameters(), net.parameters()) << name;
    EXPECT_EQ(back.seed(), net.seed());
  }
}

// ---- gradients -------------------------------------------------------------------

std::vector<Tensor*> all_parameters(Network& net) {
  std::vector<Tensor*> out;
  for (auto& p : net.parameters()) out.push_back(&p);
  return out;
}

class LayerGradient : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradient, EveryLayerKindMatchesFiniteDifferences) {
  const std::uint64_t seed = static_cast<std::uint64_t>(GetParam());
  const std::vector<std::pair<const char*, LayerSpec>> layers = {
      {"affine", LayerSpec::affine(3, 4)},
      {"relu", LayerSpec::relu()},
      {"sigmoid", LayerSpec::sigmoid()},
      {"fc_head", LayerSpec::fc_head(2)},
      {"forest_average", LayerSpec::forest_head({3, 2, 2, 1.0, Combination::kAverage})},
      {"forest_product", LayerSpec::forest_head({3, 2, 1, 1.0, Combination::kProduct})},
  };
  for (const auto& [name, layer] : layers) {
    Network net = Network::build(single_layer(layer, 3), seed);
    widen(net, seed + 1);
    std::mt19937_64 rng(seed + 2);
    Tensor x = kink_free_batch(net, 4, rng, 0.02);
    const Tensor w = random_tensor({4, net.spec().output_width()}, rng);
    auto targets = all_parameters(net);
    targets.push_back(&x);  // the input gradient as well
    auto stencils = network_stencils(net);
    stencils.push_back(kKinkedFd);
    const auto r = check_gradients_in_place(targets, [&](Graph& g) {
      return weighted_sum(g, net.forward(g, g.parameter(x), ParamMode::kTrainable), w);
    }, stencils);
    EXPECT_LT(r.worst, 1e-5) << name << " seed " << seed << " at " << r.where;
  }
}

INSTANTIATE_TEST_SUITE_P(TenSeeds, LayerGradient, ::testing::Range(0, 10));

TEST(NetworkGradient, ComposedXorAndClassifierPresets) {
  for (const char* name : {"xor_fc", "xor_tree", "clf_fc", "clf_forest"}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Network net = Network::build(preset(name), seed);
      widen(net, seed + 40, 0.3);
      std::mt19937_64 rng(seed + 50);
      const Tensor x = kink_free_batch(net, 3, rng, 0.02);
      const Tensor w = random_tensor({3, net.spec().output_width()}, rng);
      const auto r = check_gradients_in_place(all_parameters(net), [&](Graph& g) {
        return weighted_sum(g, net.forward(g, g.view(x), ParamMode::kTrainable), w);
      }, network_stencils(net));
      EXPECT_LT(r.worst, 1e-5) << name << " seed " << seed << " at " << r.where;
    }
  }
}

TEST(NetworkGradient, FrozenModeLeavesParametersUntouched) {
  Network net = Network::build(preset("xor_tree"), 1);
  for (auto& p : net.parameters()) p.enable_grad();
  Tensor x(Shape{2, 3}, 0.5);
  x.enable_grad();
  Graph g;
  g.backward(g.sum(net.forward(g, g.parameter(x), ParamMode::kFrozen)));
  for (const auto& p : net.parameters())
    for (double v : p.grad()) EXPECT_EQ(v, 0.0);
  double total = 0.0;
  for (double v : x.grad()) total += std::abs(v);
  EXPECT_GT(total, 0.0);
}

// ---- head Jacobian -----------------------------------------------------------------

TEST(HeadJacobian, ShapeIsBatchByHeadParameters) {
  const Network net = Network::build(preset("gan_forest_deep"), 3);
  std::mt19937_64 rng(1);
  const std::vector<double> y{1.0};
  const auto jr = with_head_jacobian(net, random_tensor({1, 2}, rng), y, HeadLoss::kBinary);
  EXPECT_EQ(jr.jacobian.shape(), (Shape{1, net.spec().head_parameter_count()}));
  const std::vector<double> y4{1.0, 0.0, 1.0, 0.0};
  const auto full = with_head_jacobian(net, random_tensor({4, 2}, rng), y4, HeadLoss::kBinary, true);
  EXPECT_EQ(full.jacobian.shape(), (Shape{4, net.parameter_count()}));
  EXPECT_THROW(with_head_jacobian(net, random_tensor({4, 2}, rng), y, HeadLoss::kBinary), ContractError);
}

TEST(HeadJacobian, RowsMatchFiniteDifferencesOfRootLoss) {
  struct Case {
    const char* name;
    HeadLoss loss;
    std::vector<double> targets;
  };
  const std::vector<Case> cases = {{"xor_tree", HeadLoss::kBinary, {0, 1, 1}},
                                   {"xor_fc", HeadLoss::kBinary, {1, 0, 1}},
                                   {"clf_forest", HeadLoss::kSoftmax, {0, 2, 1}},
                                   {"clf_fc", HeadLoss::kSoftmax, {2, 1, 0}},
                                   {"gan_forest_shallow", HeadLoss::kBinary, {1, 0, 0}},
                                   {"gan_forest_deep", HeadLoss::kBinary, {1, 0, 0}}};
  for (const auto& c : cases) {
    Network net = Network::build(preset(c.name), 8);
    widen(net, 9, 0.3);
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor({3, net.spec().input_width}, rng);
    const auto jr = with_head_jacobian(net, x, c.targets, c.loss);
    for (std::size_t r = 0; r < 3; ++r) {
      auto root_loss = [&](const Network& n) {
        const Tensor out = n.forward(x.rows_slice(r, r + 1));
        double l;
        if (c.loss == HeadLoss::kBinary) {
          l = binary_log_loss(stable_sigmoid(out[0]), c.targets[r]);
        } else {
          double mx = out[0];
          for (std::size_t k = 1; k < out.size(); ++k) mx = std::max(mx, out[k]);
          double z = 0.0;
          for (std::size_t k = 0; k < out.size(); ++k) z += std::exp(out[k] - mx);
          l = -(out[static_cast<std::size_t>(c.targets[r])] - mx - std::log(z));
        }
        return std::sqrt(l + kRootLossEpsilon);
      };
      std::size_t col = 0;
      double worst = 0.0;
      for (std::size_t p = net.head_begin(); p < net.parameters().size(); ++p) {
        for (std::size_t i = 0; i < net.parameters()[p].size(); ++i, ++col) {
          const double x0 = net.parameters()[p][i];
          net.parameters()[p][i] = x0 + 1e-6;
          const double up = root_loss(net);
          net.parameters()[p][i] = x0 - 1e-6;
          const double down = root_loss(net);
          net.parameters()[p][i] = x0;
          worst = std::max(worst, relative_error(jr.jacobian.at(r, col), (up - down) / 2e-6));
        }
      }
      EXPECT_LT(worst, 1e-4) << c.name << " row " << r;
    }
  }
}

TEST(HeadJacobian, DoesNotTouchTheNetwork) {
  Network net = Network::build(preset("clf_forest"), 2);
  const auto before = net.parameters();
  std::mt19937_64 rng(3);
  const std::vector<double> y{0, 1, 2, 0};
  with_head_jacobian(net, random_tensor({4, 2}, rng), y, HeadLoss::kSoftmax);
  EXPECT_EQ(net.parameters(), before);
  for (const auto& p : net.parameters()) EXPECT_FALSE(p.has_grad());
}

TEST(HeadJacobian, ConfidentCorrectInstanceHasNearZeroRow) {
  // A product forest whose log S is huge on every input: D = 1 - 1e-7 after
  // clamping and the real-label loss sits at the clamp floor.
  Network net = Network::build(preset("gan_forest_shallow"), 4);
  auto& leaves = net.parameters().back();
  for (double& v : leaves.data()) v = 1.0;
  std::mt19937_64 rng(5);
  const std::vector<double> real{1.0};
  const auto jr = with_head_jacobian(net, random_tensor({1, 2}, rng), real, HeadLoss::kBinary);
  EXPECT_LT(jr.losses[0], 1e-6);
  double norm = 0.0;
  for (double v : jr.jacobian.values()) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-6);
}
