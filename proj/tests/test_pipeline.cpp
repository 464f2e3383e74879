#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"
#include "fsb/pipeline.hpp"

using namespace fsb;
namespace fs = std::filesystem;

namespace {

RunConfig small_bs() {
  RunConfig c = parse_config(R"({"name": "bs100", "grid": {"points": 100}})");
  c.out_dir = fs::temp_directory_path() / "fsb_pipeline_test";
  return c;
}

const BoundTable& bs_table() {
  static const BoundTable t = run_bounds(small_bs());
  return t;
}

// E|Z - k| for Z lognormal with unit mean over tau, by quadrature.
double straddle_oracle(double tau, double sigma, double k) {
  auto f = [&](double z) { return std::abs(z - k) * lognormal_density(tau, sigma, z); };
  return num::integrate(f, 1e-8, k, 1e-13, 1e-11) + num::integrate(f, k, 40.0, 1e-13, 1e-11);
}

}  // namespace

TEST(Config, DefaultsFollowThePaperSetup) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.model.kind, ModelKind::BlackScholes);
  EXPECT_EQ(c.model.bs.sigma, 0.2);
  EXPECT_EQ(c.t, 1.0);
  EXPECT_EQ(c.tau, 0.5);
  ASSERT_EQ(c.kf.size(), 9u);
  ASSERT_EQ(c.kx.size(), 18u);
  EXPECT_DOUBLE_EQ(c.kx.front(), 0.3);
  EXPECT_DOUBLE_EQ(c.kx.back(), 2.0);
  EXPECT_EQ(c.grid.m, 500);
  EXPECT_EQ(c.plan_grid.n, 3000);
  EXPECT_EQ(c.plan_grid.y_domain.hi, 30.0);
}

TEST(Config, OverridesAndRoundTrip) {
  const RunConfig c = parse_config(R"({
    "name": "h", "model": {"kind": "heston", "v0": 0.05, "rho": -0.5},
    "t": 2, "tau": 0.25, "kf": [1.0, 1.2],
    "grid": {"scheme": "legendre", "m": 80, "n": 90, "y_domain": [0, 6]},
    "observed_strikes": {"x": [0.8, 1.2], "y": [0.9]},
    "basis": {"kind": "hats"}, "solve": {"primal": false},
    "table_points": [75], "hn": {"mesh_sizes": [75, 250]}, "out_dir": "o"})");
  EXPECT_EQ(c.model.kind, ModelKind::Heston);
  EXPECT_EQ(c.model.heston.v0, 0.05);
  EXPECT_EQ(c.model.heston.rho, -0.5);
  EXPECT_EQ(c.model.heston.kappa, 1.0);
  EXPECT_EQ(c.grid.scheme, GridScheme::LegendreRoots);
  EXPECT_EQ(c.grid.m, 80);
  EXPECT_EQ(c.grid.n, 90);
  EXPECT_EQ(c.grid.y_domain.hi, 6.0);
  EXPECT_EQ(c.ky, std::vector<double>{0.9});
  EXPECT_TRUE(c.hat_basis);
  EXPECT_FALSE(c.solve_primal);
  EXPECT_TRUE(c.solve_dual);

  const RunConfig back = parse_config(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.kx, c.kx);
  EXPECT_EQ(back.hn_meshes, c.hn_meshes);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("{not json"), DomainError);
  EXPECT_THROW(parse_config(R"({"t": -1})"), DomainError);
  EXPECT_THROW(parse_config(R"({"kf": []})"), DomainError);
  EXPECT_THROW(parse_config(R"({"kf": [1.0, -0.5]})"), DomainError);
  EXPECT_THROW(parse_config(R"({"model": {"kind": "sabr"}})"), DomainError);
  EXPECT_THROW(parse_config(R"({"grid": {"scheme": "chebyshev"}})"), DomainError);
  EXPECT_THROW(parse_config(R"({"grid": {"x_domain": [1]}})"), DomainError);
  EXPECT_THROW(load_config("/nonexistent/fsb.json"), DomainError);
}

TEST(ModelPrice, BlackScholesStraddleMatchesQuadrature) {
  const ModelSpec m;
  for (double kf : {0.6, 1.0, 1.3})
    EXPECT_NEAR(m.forward_straddle(1.0, 0.5, kf), straddle_oracle(0.5, 0.2, kf), 1e-9) << kf;
}

TEST(RunBounds, RowsAreOrderedAndBracketTheModel) {
  const auto& t = bs_table();
  ASSERT_EQ(t.rows.size(), 9u);
  for (const auto& r : t.rows) {
    EXPECT_TRUE(r.ordered()) << r.kf;
    EXPECT_GE(r.model, r.lower) << r.kf;
    EXPECT_LE(r.model, r.upper) << r.kf;
    EXPECT_NEAR(r.vol_model, 0.2, 1e-8);
    EXPECT_GE(r.sub, std::abs(1.0 - r.kf) - 1e-6);
  }
  EXPECT_EQ(t.at(1.0).kf, 1.0);
  EXPECT_THROW(t.at(1.05), std::out_of_range);
}

TEST(RunBounds, AtTheMoneyValues) {
  const auto& r = bs_table().at(1.0);
  // Lower bound near the ODE value, upper bound near the closed-form super-hedge.
  EXPECT_NEAR(r.vol_lower, 0.0695, 1e-3);
  EXPECT_LT(r.upper, 0.141343);
  EXPECT_GT(r.super, r.upper);
}

TEST(RunBounds, ThreadCountDoesNotChangeResults) {
  RunConfig c = small_bs();
  c.kf = {0.9, 1.0, 1.1};
  ::setenv("FSB_THREADS", "3", 1);
  const auto par = run_bounds(c);
  ::unsetenv("FSB_THREADS");
  for (const auto& r : par.rows) {
    const auto& s = bs_table().at(r.kf);
    EXPECT_EQ(r.sub, s.sub);
    EXPECT_EQ(r.lower, s.lower);
    EXPECT_EQ(r.upper, s.upper);
    EXPECT_EQ(r.super, s.super);
  }
}

TEST(RunBounds, SingleNodeRunGivesIntrinsicValues) {
  RunConfig c = small_bs();
  c.grid = GridSpec{GridScheme::Uniform, 1, 1, {0.0, 2.0}, {0.0, 2.0}};
  c.kf = {0.8, 1.0, 1.3};
  const auto t = run_bounds(c);
  for (const auto& r : t.rows) {
    const double intrinsic = std::abs(1.0 - r.kf);
    EXPECT_NEAR(r.sub, intrinsic, 1e-8) << r.kf;
    EXPECT_NEAR(r.lower, intrinsic, 1e-8) << r.kf;
    EXPECT_NEAR(r.upper, intrinsic, 1e-8) << r.kf;
    EXPECT_NEAR(r.super, intrinsic, 1e-8) << r.kf;
  }
}

TEST(RunBounds, ErrorsNameTheStage) {
  RunConfig c = small_bs();
  c.grid.m = c.grid.n = 20;  // too coarse for 18 strikes
  try {
    run_bounds(c);
    FAIL() << "expected a DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("discretize X"), std::string::npos) << e.what();
  }
}

TEST(RunBounds, CsvExport) {
  const auto path = small_bs().out_dir / "bounds.csv";
  write_bound_table_csv(path, bs_table());
  std::vector<std::string> header;
  const auto rows = csv::read(path, &header);
  ASSERT_EQ(rows.size(), 9u);
  ASSERT_EQ(header.size(), 11u);
  EXPECT_EQ(header[1], "sub_hedge");
  EXPECT_EQ(rows[4][2], bs_table().rows[4].lower);
}

TEST(RunBounds, RerunIsByteIdentical) {
  RunConfig c = small_bs();
  c.kf = {1.0};
  const auto a = c.out_dir / "a.csv", b = c.out_dir / "b.csv";
  write_bound_table_csv(a, run_bounds(c));
  write_bound_table_csv(b, run_bounds(c));
  std::ifstream fa(a), fb(b);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(RunTables, RestrictedDualsBracketTheTransportBounds) {
  RunConfig c = small_bs();
  c.kf = {1.0};
  c.table_points = {75};
  const auto g = run_tables(c);
  ASSERT_EQ(g.super.size(), 1u);
  GridSpec spec = c.grid;
  spec.m = spec.n = 75;
  const auto mg = build_marginals(c, spec);
  EXPECT_GE(g.super[0][0], solve_bound({1.0, BoundSense::Upper, mg.px, mg.py}).value - 1e-6);
  EXPECT_LE(g.sub[0][0], solve_bound({1.0, BoundSense::Lower, mg.px, mg.py}).value + 1e-6);
  const auto path = c.out_dir / "super.csv";
  write_golden_csv(path, g, true);
  std::vector<std::string> header;
  const auto rows = csv::read(path, &header);
  EXPECT_EQ(header.at(1), "n75");
  EXPECT_EQ(rows.at(0).at(1), g.super[0][0]);
}

TEST(RunHK, AgreesWithTheTransportLowerBound) {
  const auto hk = run_hk(small_bs());
  EXPECT_NEAR(hk.fwd_vol, 0.0695, 5e-4);
  EXPECT_NEAR(hk.fwd_vol, bs_table().at(1.0).vol_lower, 5e-4);
}

TEST(RunPlans, MapShapes) {
  RunConfig c = small_bs();
  c.plan_grid = GridSpec{GridScheme::Uniform, 100, 200, {0.0, 5.0}, {0.0, 10.0}};
  const auto runs = run_plans(c);
  ASSERT_EQ(runs.size(), 6u);
  auto find = [&](double kf, BoundSense s) {
    for (const auto& r : runs)
      if (r.kf == kf && r.sense == s) return r;
    throw std::out_of_range("missing run");
  };
  // No mass left in place for the ATM upper bound.
  EXPECT_LT(find(1.0, BoundSense::Upper).mass_in_place, 1e-6);
  // ATM lower: the upward map decreases in x.
  EXPECT_LT(find(1.0, BoundSense::Lower).spearman_upper, 0.0);
  // Kf = 0.9 upper keeps mass in place, all of it on the left.
  const auto up09 = find(0.9, BoundSense::Upper);
  EXPECT_GT(up09.mass_in_place, 1e-3);
  ASSERT_TRUE(fs::exists(up09.decomposition_csv));
  for (const auto& row : csv::read(up09.decomposition_csv))
    if (row[0] == 0.0 && row[3] > 1e-6) EXPECT_LT(row[1], 1.0);
}

TEST(RunHN, OneRowPerMesh) {
  RunConfig c = small_bs();
  c.grid.m = 200;
  c.hn_meshes = {75};
  const auto r = run_hn(c);
  EXPECT_NEAR(r.calibration.expected_value, 0.141343, 1e-5);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].n, 75);
  c.model.kind = ModelKind::Heston;
  EXPECT_THROW(run_hn(c), DomainError);
}
