#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "gaf/datasets.hpp"
#include "gaf/errors.hpp"
#include "gaf/plots.hpp"

using namespace gaf;

namespace {

std::set<std::vector<double>> rows_of(const Tensor& t) {
  std::set<std::vector<double>> out;
  for (std::size_t r = 0; r < t.rows(); ++r) out.emplace(t.row(r).begin(), t.row(r).end());
  return out;
}

}  // namespace

TEST(Datasets, XorIsFullTruthTableWithParityLabels) {
  for (bool signed_inputs : {true, false}) {
    DatasetSpec s;
    s.kind = DatasetKind::kXor;
    s.dim = 4;
    s.signed_inputs = signed_inputs;
    const Dataset d = generate(s);
    ASSERT_EQ(d.train_x.rows(), 16u);
    EXPECT_FALSE(d.has_validation);
    EXPECT_EQ(rows_of(d.train_x).size(), 16u);
    for (std::size_t r = 0; r < 16; ++r) {
      std::size_t ones = 0;
      for (double v : d.train_x.row(r)) ones += v > 0.5 ? 1 : 0;
      EXPECT_EQ(d.train_y[r], ones % 2);
    }
  }
}

TEST(Datasets, XorDimensionBounds) {
  DatasetSpec s;
  s.kind = DatasetKind::kXor;
  s.dim = 1;
  EXPECT_THROW(generate(s), ContractError);
}

TEST(Datasets, DeterministicInSeedAndSplitDisjoint) {
  for (DatasetKind kind : {DatasetKind::kGaussianRing, DatasetKind::kTwoMoons, DatasetKind::kSpiral}) {
    DatasetSpec s;
    s.kind = kind;
    s.n_samples = 500;
    s.seed = 3;
    const Dataset a = generate(s), b = generate(s);
    EXPECT_EQ(a.train_x, b.train_x);
    EXPECT_EQ(a.val_x, b.val_x);
    EXPECT_EQ(a.train_y, b.train_y);
    ASSERT_TRUE(a.has_validation);
    EXPECT_EQ(a.train_x.rows(), 450u);
    EXPECT_EQ(a.val_x.rows(), 50u);
    const auto train = rows_of(a.train_x);
    for (std::size_t r = 0; r < a.val_x.rows(); ++r) {
      EXPECT_EQ(train.count(std::vector<double>(a.val_x.row(r).begin(), a.val_x.row(r).end())), 0u);
    }
    s.seed = 4;
    EXPECT_NE(generate(s).train_x, a.train_x);
  }
}

TEST(Datasets, RingSamplesSitNearCenters) {
  DatasetSpec s;
  s.n_samples = 800;
  const Dataset d = generate(s);
  const auto centers = ring_centers(s);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(std::hypot(centers[k][0], centers[k][1]), s.radius, 1e-12);
  for (std::size_t r = 0; r < d.train_x.rows(); ++r) {
    double best = 1e300;
    for (const auto& c : centers) best = std::min(best, std::hypot(d.train_x.at(r, 0) - c[0], d.train_x.at(r, 1) - c[1]));
    EXPECT_LT(best, 6 * s.sigma);
  }
}

TEST(Datasets, SpecJsonAndFingerprint) {
  DatasetSpec s;
  s.kind = DatasetKind::kSpiral;
  s.classes = 4;
  const DatasetSpec back = DatasetSpec::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back.fingerprint(), s.fingerprint());
  DatasetSpec other = s;
  other.seed = 1;
  EXPECT_NE(other.fingerprint(), s.fingerprint());
  EXPECT_THROW(dataset_kind_from_string("mnist"), ContractError);
}

// ---- plots ---------------------------------------------------------------------

TEST(Csv, ParsesEmptyCellsAndInfinity) {
  std::istringstream in("step,d_loss,g_loss,cond,val_loss\n1,,0.5,,\n2,,0.25,inf,0.1\n");
  const CsvTable t = read_csv(in);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(t.column("d_loss")[0]));
  EXPECT_TRUE(std::isinf(t.column("cond")[1]));
  EXPECT_EQ(t.column("g_loss")[1], 0.25);
  EXPECT_THROW(t.column_index("lr"), ContractError);
}

TEST(Plot, SpecReferencesExistingColumnsOnly) {
  std::istringstream in("step,g_loss,cond\n1,0.5,3\n2,0.4,5\n3,0.3,inf\n");
  const CsvTable t = read_csv(in);
  PlotSpec spec;
  spec.title = "loss";
  spec.series = {"g_loss", "cond"};
  spec.log_y = true;
  EXPECT_NO_THROW(spec.validate(t));
  const std::string svg = render_plot(spec, t);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("polyline"), std::string::npos);
  spec.series.push_back("missing");
  EXPECT_THROW(spec.validate(t), ContractError);
}

TEST(Plot, SpecJsonRoundTrip) {
  PlotSpec spec;
  spec.title = "cond";
  spec.series = {"cond"};
  spec.y_label = "kappa";
  spec.log_y = true;
  EXPECT_EQ(PlotSpec::from_json(spec.to_json()).to_json(), spec.to_json());
}

TEST(Plot, ScatterAndHeatmap) {
  DatasetSpec s;
  s.n_samples = 200;
  const std::string scatter = scatter_svg(generate(s).train_x, ring_centers(s), "ring");
  EXPECT_NE(scatter.find("<circle"), std::string::npos);
  const std::string heat = heatmap_svg({"a", "b"}, {{0.0, 0.08}, {-0.08, 0.0}}, "diff");
  EXPECT_NE(heat.find("0.08"), std::string::npos);
  EXPECT_NE(heat.find("-0.08"), std::string::npos);
}

TEST(Plot, IdenticalInputsGiveIdenticalSvg) {
  const std::vector<Series> series = {{"a", {1, 2, 3}, {1, 4, 9}}, {"b", {1, 2, 3}, {2, 3, 4}}};
  EXPECT_EQ(line_plot_svg(series, "t", "x", "y"), line_plot_svg(series, "t", "x", "y"));
}
