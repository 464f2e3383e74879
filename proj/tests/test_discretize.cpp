#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>

#include "fsb/discretize.hpp"
#include "fsb/errors.hpp"

using namespace fsb;

namespace {

std::vector<double> paper_strikes() {
  std::vector<double> k;
  for (int i = 3; i <= 20; ++i) k.push_back(i / 10.0);
  return k;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace

TEST(Grid, BinomialTwoNodes) {
  const auto g = build_grid(GridScheme::Binomial, 2, {0, 5}, 0.2, 1.0);
  const double j = std::sqrt(std::exp(0.04) - 1.0);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g.nodes[0], 1.0 - j, 1e-15);
  EXPECT_NEAR(g.nodes[1], 1.0 + j, 1e-15);
  EXPECT_NEAR(g.nodes[1], 1.2020, 1e-4);
  EXPECT_NEAR(g.nodes[0], 0.7980, 1e-4);
}

TEST(Grid, BinomialDegenerates) {
  EXPECT_THROW(build_grid(GridScheme::Binomial, 2, {0, 5}, 1.0, 1.0), DomainError);
}

TEST(Grid, UniformMidpoints) {
  const auto g = build_grid(GridScheme::Uniform, 3, {0, 5});
  EXPECT_DOUBLE_EQ(g.nodes[0], 1.25);
  EXPECT_DOUBLE_EQ(g.nodes[1], 2.5);
  EXPECT_DOUBLE_EQ(g.nodes[2], 3.75);
}

TEST(Grid, LegendreFiveRoots) {
  // Roots of (63x^5 - 70x^3 + 15x)/8 in closed form.
  const double a = std::sqrt((70.0 - std::sqrt(4900.0 - 3780.0)) / 126.0);
  const double b = std::sqrt((70.0 + std::sqrt(4900.0 - 3780.0)) / 126.0);
  const double roots[5] = {-b, -a, 0.0, a, b};
  const auto g = build_grid(GridScheme::LegendreRoots, 5, {0, 5});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(g.nodes[i], 2.5 + 2.5 * roots[i], 1e-13);
  EXPECT_NEAR(a, 0.53847, 1e-5);
  EXPECT_NEAR(b, 0.90618, 1e-5);
}

TEST(Grid, GaussHermiteThreeNodes) {
  const auto g = build_grid(GridScheme::GaussHermite, 3, {0, 5}, 0.2, 1.0);
  const double s = 0.2;
  const double h = std::sqrt(1.5);
  EXPECT_NEAR(g.nodes[1], std::exp(-0.5 * s * s), 1e-13);
  EXPECT_NEAR(g.nodes[2], std::exp(-0.5 * s * s + s * std::sqrt(2.0) * h), 1e-13);
  EXPECT_NEAR(g.nodes[0], std::exp(-0.5 * s * s - s * std::sqrt(2.0) * h), 1e-13);
}

TEST(Grid, GaussHermiteStaysInDomain) {
  const auto g = build_grid(GridScheme::GaussHermite, 200, {0, 5}, 0.6, 2.0);
  EXPECT_LE(g.nodes.back(), 5.0 + 1e-12);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g.nodes[i], g.nodes[i - 1]);
}

TEST(Prior, SymmetricDensityGivesSymmetricWeights) {
  MarginalLaw law;
  law.density = [](double x) { return std::exp(-(x - 1.0) * (x - 1.0) / 0.08); };
  law.cdf = [](double x) { return 0.5 * std::erfc(-(x - 1.0) / 0.4); };
  const auto g = build_grid(GridScheme::Uniform, 9, {0, 2});
  for (auto mode : {PriorMode::PointDensity, PriorMode::BucketMass}) {
    const auto q = prior_weights(law, g, mode);
    if (mode == PriorMode::PointDensity)
      for (int i = 0; i < 9; ++i) EXPECT_NEAR(q[i], q[8 - i], 1e-15);
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-15);
  }
}

TEST(Prior, LognormalModeLocation) {
  const auto law = make_bs_law({0.2}, 1.0);
  const auto g = build_grid(GridScheme::Uniform, 500, {0, 5});
  const auto q = prior_weights(law, g, PriorMode::PointDensity);
  const auto imax = std::max_element(q.begin(), q.end()) - q.begin();
  const double mode = std::exp(-1.5 * 0.04);
  double best = 1e9;
  std::size_t closest = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g.nodes[i] - mode) < best) {
      best = std::abs(g.nodes[i] - mode);
      closest = i;
    }
  EXPECT_EQ(static_cast<std::size_t>(imax), closest);
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (i <= closest) EXPECT_GE(q[i], q[i - 1]);
    else EXPECT_LE(q[i], q[i - 1]);
  }
  const auto qb = prior_weights(law, g, PriorMode::BucketMass);
  EXPECT_NEAR(std::accumulate(qb.begin(), qb.end(), 0.0), 1.0, 1e-14);
}

TEST(Prior, AllZeroMassRejected) {
  const auto law = make_bs_law({0.2}, 1.0);
  const auto g = build_grid(GridScheme::Uniform, 5, {60, 80});
  EXPECT_THROW(prior_weights(law, g, PriorMode::PointDensity), DomainError);
}

TEST(KLProjection, NoConstraintsReturnsPrior) {
  const auto g = build_grid(GridScheme::Uniform, 7, {0, 2});
  std::vector<double> q{0.1, 0.2, 0.05, 0.25, 0.1, 0.2, 0.1};
  const auto r = kl_project(q, g, {}, 0, {});
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(r.marginal.weights[i], q[i], 1e-15);
  EXPECT_NEAR(r.report.kl_value, 0.0, 1e-15);
}

TEST(KLProjection, SatisfiedConstraintsKeepPrior) {
  const auto g = build_grid(GridScheme::Uniform, 9, {0, 2});
  std::vector<double> q(9, 1.0 / 9.0);  // symmetric around 1: mean 1
  DiscreteMarginal dq{g, q};
  PriceVector pv{{0.7, 1.1}, {dq.call(0.7), dq.call(1.1)}};
  const auto r = kl_project(q, g, pv, 1, std::vector<double>{1.0});
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r.marginal.weights[i], q[i], 1e-13);
  for (double l : r.report.lambda_star) EXPECT_NEAR(l, 0.0, 1e-10);
}

TEST(KLProjection, LognormalRepricing) {
  const auto law = make_bs_law({0.2}, 1.0);
  const auto g = build_grid(GridScheme::Uniform, 500, {0, 5});
  KLProjectionReport rep;
  const auto ks = paper_strikes();
  const auto d = discretize_law(law, g, ks, PriorMode::PointDensity, 1, &rep);
  for (double k : ks) EXPECT_NEAR(d.call(k), bs_call_price(1.0, k, 0.2), 1e-8) << k;
  EXPECT_NEAR(d.mean(), 1.0, 1e-10);
  EXPECT_NEAR(d.mass(), 1.0, 1e-12);
  for (double r : rep.constraint_residuals) EXPECT_LT(std::abs(r), 1e-8);
  EXPECT_NO_THROW(d.validate());
  // Dominance: positive wherever the prior is.
  const auto q = prior_weights(law, g, PriorMode::PointDensity);
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0) EXPECT_GT(d.weights[i], 0.0);
}

TEST(KLProjection, PerturbationOptimality) {
  const auto law = make_bs_law({0.2}, 1.0);
  const auto g = build_grid(GridScheme::Uniform, 60, {0, 3});
  const std::vector<double> ks{0.6, 0.9, 1.0, 1.2, 1.5};
  const auto q = prior_weights(law, g, PriorMode::BucketMass);
  const auto pv = prices_from_law(law, ks);
  const auto res = kl_project(q, g, pv, 1, std::vector<double>{1.0});
  const auto& p = res.marginal.weights;
  // Null space of [1; x; calls] rows.
  const int m = static_cast<int>(g.size());
  Eigen::MatrixXd c(2 + static_cast<int>(ks.size()), m);
  for (int i = 0; i < m; ++i) {
    c(0, i) = 1.0;
    c(1, i) = g.nodes[i];
    for (std::size_t k = 0; k < ks.size(); ++k) c(2 + k, i) = std::max(g.nodes[i] - ks[k], 0.0);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
  const Eigen::MatrixXd ns = lu.kernel();
  std::mt19937 rng(11);
  std::normal_distribution<double> n01;
  const double base = kl(p, q);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd coef(ns.cols());
    for (int j = 0; j < ns.cols(); ++j) coef[j] = n01(rng);
    Eigen::VectorXd dir = ns * coef;
    // Keep the perturbed weights positive.
    double eps = 1e-3;
    for (int i = 0; i < m; ++i)
      if (dir[i] < 0) eps = std::min(eps, 0.5 * p[i] / -dir[i]);
    std::vector<double> pp(p);
    for (int i = 0; i < m; ++i) pp[i] += eps * dir[i];
    EXPECT_GE(kl(pp, q), base - 1e-15);
  }
}

TEST(KLProjection, InfeasibleTargetsReported) {
  const auto g = build_grid(GridScheme::Uniform, 9, {0, 2});
  std::vector<double> q(9, 1.0 / 9.0);
  PriceVector pv{{1.0}, {0.9}};  // call above what any law on [0.2, 1.8] with mean 1 can pay
  try {
    kl_project(q, g, pv, 1, std::vector<double>{1.0});
    FAIL() << "expected ArbitrageError";
  } catch (const ArbitrageError& e) {
    EXPECT_NE(std::string(e.what()).find("most violated"), std::string::npos);
  }
}

TEST(ExplicitWeights, SingleStrikeWorkedExample) {
  PriceVector pv{{1.0}, {0.05}};
  const auto d = explicit_weights(pv, 0.5, 2.0);
  ASSERT_EQ(d.weights.size(), 3u);
  EXPECT_NEAR(d.weights[2], 0.05, 1e-15);
  EXPECT_NEAR(d.weights[1], 0.85, 1e-15);
  EXPECT_NEAR(d.weights[0], 0.10, 1e-15);
  EXPECT_NEAR(d.mass(), 1.0, 1e-15);
  EXPECT_NEAR(d.mean(), 1.0, 1e-15);
  EXPECT_NEAR(d.call(1.0), 0.05, 1e-15);
}

TEST(ExplicitWeights, ReproducesLognormalPrices) {
  const auto law = make_bs_law({0.2}, 1.0);
  const auto pv = prices_from_law(law, paper_strikes());
  const auto d = explicit_weights(pv, 0.1, 3.0);
  EXPECT_NO_THROW(d.validate(1e-12, 1e-12));
  for (std::size_t i = 0; i < pv.strikes.size(); ++i)
    EXPECT_NEAR(d.call(pv.strikes[i]), pv.prices[i], 1e-13);
}

TEST(ExplicitWeights, BoundaryTopNodeReducesSupport) {
  PriceVector pv{{0.8, 1.0, 1.2}, {0.25, 0.1, 0.03}};
  const double xl = (0.1 * 1.2 - 0.03 * 1.0) / (0.1 - 0.03);
  const auto d = explicit_weights(pv, 0.5, xl);
  // The kink at K_M disappears, so its node carries no mass.
  EXPECT_NEAR(d.weights[3], 0.0, 1e-14);
  EXPECT_GT(d.weights.back(), 0.0);
  for (std::size_t i = 0; i < pv.strikes.size(); ++i) EXPECT_NEAR(d.call(pv.strikes[i]), pv.prices[i], 1e-14);
  EXPECT_THROW(explicit_weights(pv, 0.5, xl - 0.1), DomainError);
}

TEST(ExplicitWeights, ButterflyViolationRejected) {
  PriceVector pv{{0.8, 1.0, 1.2}, {0.25, 0.16, 0.03}};  // slope -0.45 then -0.65: concave
  EXPECT_THROW(explicit_weights(pv, 0.5, 2.0), ArbitrageError);
}

TEST(ConvexOrder, IdenticalLaws) {
  DiscreteMarginal a{build_grid(GridScheme::Uniform, 3, {0, 2}), {0.25, 0.5, 0.25}};
  const auto r = check_convex_order(a, a);
  EXPECT_TRUE(r.ordered);
  for (double g : r.g_values) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(ConvexOrder, TwoPointExample) {
  DiscreteMarginal px{{{0.75, 1.25}}, {0.5, 0.5}};
  DiscreteMarginal py{{{0.5, 1.5}}, {0.5, 0.5}};
  const auto r = check_convex_order(px, py);
  EXPECT_TRUE(r.ordered);
  EXPECT_NEAR(r.min_g, 0.0, 1e-15);
  // Hand values of G at 0, 0.5, 0.75, 1.25, 1.5.
  const double expect[] = {0.0, 0.0, 0.125, 0.125, 0.0};
  ASSERT_EQ(r.g_values.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(r.g_values[i], expect[i], 1e-15);
  EXPECT_FALSE(check_convex_order(py, px).ordered);
}

TEST(ConvexOrder, BlackScholesMaturities) {
  const auto ks = paper_strikes();
  const auto g = build_grid(GridScheme::Uniform, 500, {0, 5});
  const auto px = discretize_law(make_bs_law({0.2}, 1.0), g, ks);
  const auto py = discretize_law(make_bs_law({0.2}, 1.5), g, ks);
  const auto r = check_convex_order(px, py);
  EXPECT_TRUE(r.ordered);
  EXPECT_NEAR(r.g_values.front(), 0.0, 1e-12);
  EXPECT_NEAR(r.g_values.back(), 0.0, 1e-12);
  EXPECT_GE(r.delta_f_min, -1.0);
  EXPECT_LE(r.delta_f_max, 1.0);
  EXPECT_EQ(r.delta_f_sign_changes, 1);
  for (double k : ks) EXPECT_GT(py.call(k), px.call(k));
}

TEST(ConvexOrder, ExplicitAgainstFinerLaterMaturity) {
  const auto ks = paper_strikes();
  const auto px = explicit_weights(prices_from_law(make_bs_law({0.2}, 1.0), ks), 0.2, 2.6);
  const auto g = build_grid(GridScheme::Uniform, 300, {0, 5});
  const auto py = discretize_law(make_bs_law({0.2}, 1.5), g, ks);
  EXPECT_TRUE(check_convex_order(px, py).ordered);
}

TEST(Io, MarginalRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "fsb_discretize_test";
  DiscreteMarginal a{{{0.5, 1.0, 1.7}}, {0.2, 0.5, 0.3}};
  write_marginal(dir / "m.csv", a);
  const auto b = read_marginal(dir / "m.csv");
  EXPECT_EQ(a.grid.nodes, b.grid.nodes);
  EXPECT_EQ(a.weights, b.weights);
  PriceVector pv{{0.9, 1.1}, {0.13, 0.041}};
  write_prices(dir / "p.csv", pv);
  const auto pr = read_prices(dir / "p.csv");
  EXPECT_EQ(pr.strikes, pv.strikes);
  EXPECT_EQ(pr.prices, pv.prices);
  std::filesystem::remove_all(dir);
}
