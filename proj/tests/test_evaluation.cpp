#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gaf/datasets.hpp"
#include "gaf/errors.hpp"
#include "gaf/evaluation.hpp"
#include "gaf/losses.hpp"
#include "gradcheck.hpp"

using namespace gaf;
using gaf::testing::random_tensor;

namespace {

const double kLn2 = std::log(2.0);

nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(std::string(GAF_TEST_DATA) + "/" + name);
  return nlohmann::json::parse(in);
}

// Rounds to the two decimals the published tables carry.
long cents(double v) { return std::lround(v * 100.0); }

// A discriminator whose logit is x0 (no body) and whose output is therefore
// 0.5 exactly on the line x0 = 0.
Network linear_discriminator(double w0, double w1, double bias) {
  ModelSpec s;
  s.name = "linear_d";
  s.input_width = 2;
  s.layers = {LayerSpec::fc_head(1)};
  Network net = Network::build(s, 0);
  net.parameters()[0] = Tensor(Shape{2, 1}, std::vector<double>{w0, w1});
  net.parameters()[1] = Tensor::vector({bias});
  return net;
}

Network zeroed(Network net) {
  for (auto& p : net.parameters())
    for (double& v : p.data()) v = 0.0;
  return net;
}

Network widened(const std::string& preset_name, std::uint64_t seed, double stddev) {
  Network net = Network::build(preset(preset_name), seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& p : net.parameters())
    for (double& v : p.data()) v = n(rng);
  return net;
}

// Independent per-sample recomputation of the adjusted loss.
double scalar_adjusted_loss(const Network& d, const Network& g, const Tensor& val, std::size_t n_g,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = g.spec().input_width;
  double fake_term = 0.0;
  Tensor z(Shape{n_g, dim});
  for (double& v : z.data()) v = normal(rng);
  for (std::size_t i = 0; i < n_g; ++i) {
    const Tensor x = g.forward(z.rows_slice(i, i + 1));
    const double logit = d.forward(x)[0];
    const double p = std::min(std::max(1.0 / (1.0 + std::exp(-logit)), 1e-7), 1.0 - 1e-7);
    fake_term -= std::log(1.0 - p);
  }
  double val_term = 0.0;
  for (std::size_t i = 0; i < val.rows(); ++i) {
    const double logit = d.forward(val.rows_slice(i, i + 1))[0];
    const double p = std::min(std::max(1.0 / (1.0 + std::exp(-logit)), 1e-7), 1.0 - 1e-7);
    val_term -= std::log(p);
  }
  return fake_term / static_cast<double>(n_g) + val_term / static_cast<double>(val.rows());
}

std::vector<Contestant> toy_contestants(std::size_t n, const std::string& fingerprint = "split-A") {
  std::vector<Contestant> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"model" + std::to_string(i), widened("gan_forest_deep", 10 + i, 0.3),
                   widened("gan_generator", 20 + i, 0.3), fingerprint});
  }
  return out;
}

}  // namespace

// ---- score and difference matrices -----------------------------------------------

TEST(ScoreMatrixSpec, ValidatesShapeAndSign) {
  ScoreMatrix s{{"a", "b"}, {{1.0, 2.0}, {3.0, 4.0}}};
  EXPECT_NO_THROW(s.validate());
  s.entries[0][1] = -0.1;
  EXPECT_THROW(s.validate(), ContractError);
  s.entries = {{1.0, 2.0}};
  EXPECT_THROW(s.validate(), ContractError);
}

TEST(ScoreMatrixSpec, JsonRoundTrip) {
  const ScoreMatrix s{{"a", "b"}, {{1.25, 2.0}, {3.0, 4.5}}, {{"seed", 3}}};
  const ScoreMatrix back = ScoreMatrix::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back.models, s.models);
  EXPECT_EQ(back.entries, s.entries);
  EXPECT_EQ(back.metadata, s.metadata);
}

TEST(DiffMatrixSpec, OxfordFixtureReproducesPublishedDifferences) {
  const auto fixture = load_fixture("table1a.json");
  const auto published = load_fixture("table1b.json");
  const ScoreMatrix m = ScoreMatrix::from_json(fixture.at("oxford"));
  const DiffMatrix d = difference_matrix(m);
  const auto want = published.at("oxford").get<std::vector<std::vector<double>>>();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(cents(d.entries[i][j]), cents(want[i][j])) << i << "," << j;
  EXPECT_EQ(cents(d.entries[0][1]), 8);   // DCGAN vs ABC-GAN: 2.52 - 2.44
  EXPECT_EQ(cents(d.entries[2][3]), -3);  // shallow vs deep
}

TEST(DiffMatrixSpec, CelebaFixtureArithmetic) {
  // D = M^T - M on the two-decimal fixture. Two published entries differ by a
  // cent from this arithmetic (0.83 and 0.28 where the fixture gives 0.82 and
  // 0.27); the acceptance run reports that mismatch. The remaining entries
  // agree exactly.
  const auto fixture = load_fixture("table1a.json");
  const auto published = load_fixture("table1b.json").at("celeba").get<std::vector<std::vector<double>>>();
  const DiffMatrix d = difference_matrix(ScoreMatrix::from_json(fixture.at("celeba")));
  EXPECT_EQ(cents(d.entries[0][1]), 82);
  EXPECT_EQ(cents(d.entries[2][3]), 27);
  for (auto [i, j] : {std::pair{0, 2}, std::pair{0, 3}, std::pair{1, 2}, std::pair{1, 3}}) {
    EXPECT_EQ(cents(d.entries[i][j]), cents(published[i][j])) << i << "," << j;
    EXPECT_EQ(cents(d.entries[j][i]), cents(published[j][i])) << j << "," << i;
  }
}

TEST(DiffMatrixSpec, AntisymmetricWithZeroDiagonal) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (std::size_t n : {2u, 3u, 7u}) {
    ScoreMatrix s;
    for (std::size_t i = 0; i < n; ++i) s.models.push_back("m" + std::to_string(i));
    s.entries.assign(n, std::vector<double>(n));
    for (auto& row : s.entries)
      for (double& v : row) v = u(rng);
    const DiffMatrix d = difference_matrix(s);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(d.entries[i][i], 0.0);
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(d.entries[i][j] + d.entries[j][i], 0.0);
    }
  }
}

TEST(Ordering, PublishedOrders) {
  const auto fixture = load_fixture("table1a.json");
  const Ordering oxford = rank_models(difference_matrix(ScoreMatrix::from_json(fixture.at("oxford"))));
  EXPECT_FALSE(oxford.has_cycle);
  EXPECT_EQ(oxford.best_to_worst, (std::vector<std::string>{"GAF-shallow", "GAF-deep", "ABC-GAN", "DCGAN"}));
  const Ordering celeba = rank_models(difference_matrix(ScoreMatrix::from_json(fixture.at("celeba"))));
  EXPECT_EQ(celeba.best_to_worst, (std::vector<std::string>{"GAF-deep", "GAF-shallow", "ABC-GAN", "DCGAN"}));
}

TEST(Ordering, CycleIsReportedNotBroken) {
  // a beats b, b beats c, c beats a.
  DiffMatrix d{{"a", "b", "c"}, {{0, -1, 1}, {1, 0, -1}, {-1, 1, 0}}};
  const Ordering o = rank_models(d);
  EXPECT_TRUE(o.has_cycle);
  EXPECT_EQ(o.unresolved.size(), 3u);
}

TEST(Ordering, TiesKeepListOrder) {
  DiffMatrix d{{"x", "y"}, {{0, 0}, {0, 0}}};
  EXPECT_EQ(rank_models(d).best_to_worst, (std::vector<std::string>{"x", "y"}));
}

TEST(RenderTable, AlignedTwoDecimalCells) {
  const auto fixture = load_fixture("table1a.json");
  const std::string text = render_table(ScoreMatrix::from_json(fixture.at("oxford")));
  EXPECT_NE(text.find("3.47"), std::string::npos);
  EXPECT_NE(text.find("GAF-deep"), std::string::npos);
  const std::string diff = render_table(difference_matrix(ScoreMatrix::from_json(fixture.at("oxford"))));
  EXPECT_NE(diff.find("-0.03"), std::string::npos);
}

// ---- adjusted loss ---------------------------------------------------------------

TEST(AdjustedLoss, HalfProbabilityAnchor) {
  const Network d = zeroed(Network::build(preset("gan_fc"), 1));
  const Network g = Network::build(preset("gan_generator"), 2);
  std::mt19937_64 rng(3);
  EXPECT_NEAR(adjusted_loss(d, g, random_tensor({50, 2}, rng), 64, 9), 2.0 * kLn2, 1e-12);
}

TEST(AdjustedLoss, PerfectDiscriminatorIsNearZero) {
  // Logit 100 * x0: validation reals sit at x0 = 1, fakes at x0 = -1.
  const Network d = linear_discriminator(100.0, 0.0, 0.0);
  ModelSpec gs;
  gs.name = "constant_g";
  gs.input_width = 2;
  gs.layers = {LayerSpec::affine(2, 2)};
  Network g = Network::build(gs, 0);
  g.parameters()[0] = Tensor(Shape{2, 2}, 0.0);
  g.parameters()[1] = Tensor::vector({-1.0, 0.0});
  const Tensor val(Shape{10, 2}, std::vector<double>(20, 1.0));
  EXPECT_LT(adjusted_loss(d, g, val, 20, 1), 1e-6);
}

TEST(AdjustedLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Network d = widened("gan_forest_shallow", seed, 0.4);
    const Network g = widened("gan_generator", seed + 50, 0.4);
    const Tensor val = random_tensor({37, 2}, rng, 2.0);
    EXPECT_NEAR(adjusted_loss(d, g, val, 23, seed), scalar_adjusted_loss(d, g, val, 23, seed), 1e-12);
  }
}

TEST(AdjustedLoss, WorseValidationAccuracyRaisesScore) {
  const Network d = linear_discriminator(1.0, 0.0, 0.0);
  const Network g = widened("gan_generator", 5, 0.3);
  const Tensor confident(Shape{20, 2}, std::vector<double>(40, 3.0));  // D = sigmoid(3)
  const Tensor coin_flip(Shape{20, 2}, std::vector<double>(40, 0.0));  // D = 0.5 exactly
  EXPECT_GT(adjusted_loss(d, g, coin_flip, 50, 3), adjusted_loss(d, g, confident, 50, 3));
}

TEST(AdjustedLoss, EmptyInputsAreContractErrors) {
  const Network d = Network::build(preset("gan_fc"), 1);
  const Network g = Network::build(preset("gan_generator"), 1);
  EXPECT_THROW(adjusted_loss(d, g, Tensor::vector({1.0, 2.0}), 10, 0), ContractError);
  EXPECT_THROW(adjusted_loss(d, g, Tensor(Shape{3, 2}), 0, 0), ContractError);
}

// ---- tournament ------------------------------------------------------------------

TEST(Tournament, IdenticalCheckpointsGiveZeroDiff) {
  const Network d = widened("gan_fc", 1, 0.2);
  const Network g = widened("gan_generator", 2, 0.2);
  std::mt19937_64 rng(5);
  const auto r = tournament({{"a", d, g, "s"}, {"b", d, g, "s"}}, random_tensor({30, 2}, rng), 0, 7);
  for (const auto& row : r.diff.entries)
    for (double v : row) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.scores.metadata.at("n_generated"), 30);
}

TEST(Tournament, EntriesMatchPairwiseAdjustedLoss) {
  const auto models = toy_contestants(3);
  std::mt19937_64 rng(6);
  const Tensor val = random_tensor({40, 2}, rng, 2.0);
  const auto r = tournament(models, val, 25, 11);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t d = 0; d < 3; ++d) {
      EXPECT_NEAR(r.scores.entries[g][d], adjusted_loss(models[d].discriminator, models[g].generator, val, 25, 11),
                  1e-12);
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.diff.entries[i][j], -r.diff.entries[j][i]);
  EXPECT_NO_THROW(r.scores.validate());
}

TEST(Tournament, PermutationEquivariant) {
  auto models = toy_contestants(3);
  std::mt19937_64 rng(8);
  const Tensor val = random_tensor({30, 2}, rng, 2.0);
  const auto a = tournament(models, val, 0, 4);
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<Contestant> shuffled;
  for (std::size_t p : perm) shuffled.push_back(models[p]);
  const auto b = tournament(shuffled, val, 0, 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(b.scores.entries[i][j], a.scores.entries[perm[i]][perm[j]]);
      EXPECT_EQ(b.diff.entries[i][j], a.diff.entries[perm[i]][perm[j]]);
    }
}

TEST(Tournament, MismatchedSplitsAreRejected) {
  auto models = toy_contestants(2);
  models[1].dataset_fingerprint = "split-B";
  std::mt19937_64 rng(1);
  EXPECT_THROW(tournament(models, random_tensor({10, 2}, rng), 0, 0), ContractError);
  EXPECT_THROW(tournament(toy_contestants(1), random_tensor({10, 2}, rng), 0, 0), ContractError);
}

TEST(Tournament, ReportKeys) {
  std::mt19937_64 rng(2);
  const auto j = tournament(toy_contestants(2), random_tensor({10, 2}, rng), 0, 0).to_json();
  for (const char* key : {"models", "matrix", "diff_matrix", "ordering", "config"}) EXPECT_TRUE(j.contains(key));
}

// ---- distribution metrics --------------------------------------------------------

TEST(ModeCoverage, ExactCentersAndSingleCenter) {
  DatasetSpec spec;
  const auto centers = ring_centers(spec);
  ASSERT_EQ(centers.size(), 8u);
  Tensor all(Shape{800, 2});
  Tensor one(Shape{800, 2});
  for (std::size_t i = 0; i < 800; ++i) {
    all.at(i, 0) = centers[i % 8][0];
    all.at(i, 1) = centers[i % 8][1];
    one.at(i, 0) = centers[3][0];
    one.at(i, 1) = centers[3][1];
  }
  EXPECT_EQ(mode_coverage(all, centers, 0.3).covered, 8u);
  const Coverage c = mode_coverage(one, centers, 0.3);
  EXPECT_EQ(c.covered, 1u);
  EXPECT_EQ(c.histogram[3], 800u);
}

TEST(ModeCoverage, OnePercentThreshold) {
  DatasetSpec spec;
  const auto centers = ring_centers(spec);
  Tensor s(Shape{1000, 2});
  for (std::size_t i = 0; i < 1000; ++i) {
    const std::size_t k = i < 10 ? 1 : (i < 19 ? 2 : 0);  // 10 at mode 1, 9 at mode 2
    s.at(i, 0) = centers[k][0];
    s.at(i, 1) = centers[k][1];
  }
  const Coverage c = mode_coverage(s, centers, 0.3);
  EXPECT_EQ(c.covered, 2u);
  EXPECT_EQ(c.histogram[2], 9u);
}

TEST(ModeCoverage, TooFewSamplesIsContractError) {
  DatasetSpec spec;
  EXPECT_THROW(mode_coverage(Tensor(Shape{99, 2}), ring_centers(spec), 0.3), ContractError);
}

TEST(KlToMixture, OracleDrawsAreClose) {
  DatasetSpec spec;
  spec.n_samples = 10000;
  spec.train_fraction = 1.0;
  const Dataset data = generate(spec);
  const GaussianMixture mix{ring_centers(spec), spec.sigma};
  EXPECT_EQ(mode_coverage(data.train_x, mix.centers, 3 * spec.sigma).covered, 8u);
  EXPECT_LT(kl_to_mixture(data.train_x, mix), 0.05);
}

TEST(KlToMixture, CollapsedSamplesScoreHigh) {
  DatasetSpec spec;
  const auto centers = ring_centers(spec);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.1);
  Tensor s(Shape{2000, 2});
  for (std::size_t i = 0; i < 2000; ++i) {
    s.at(i, 0) = centers[0][0] + n(rng);
    s.at(i, 1) = centers[0][1] + n(rng);
  }
  EXPECT_GT(kl_to_mixture(s, {centers, 0.1}), std::log(8.0) - 0.2);
}
