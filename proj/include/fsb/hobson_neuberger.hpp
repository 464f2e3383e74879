#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fsb/discretize.hpp"
#include "fsb/marginals.hpp"
#include "fsb/primal_transport.hpp"

namespace fsb {

struct HNValues {
  double psi0 = 0.0, psi1 = 0.0, delta = 0.0;
  double total = 0.0;  // psi0 + psi1 + delta (y - x)
};

/// Lognormal at-the-money super-hedge:
///   psi0(x) = -xi x ln x + xi x ln(A sinh(1/xi)) + x coth(1/xi)
///   psi1(y) = xi (y ln y - y ln(A/xi) - y)
///   delta(x) = -xi ln(x / (A sinh(1/xi)))
/// Throws DomainError unless x, y, A and xi are positive.
HNValues hn_portfolio_eval(double A, double xi, double x, double y);

struct HNPortfolio {
  double A = 1.0;
  double xi = 1.0;

  HNValues eval(double x, double y) const { return hn_portfolio_eval(A, xi, x, y); }
  double payoff(double x, double y) const { return eval(x, y).total; }
};

/// E_mu[psi0] + E_nu[psi1] by quadrature of the law densities.
double hn_expected_value(const HNPortfolio& port, const MarginalLaw& mu, const MarginalLaw& nu);

/// min over grid pairs of portfolio - |y - kf x|.
double hn_min_slack(const HNPortfolio& port, const Grid& x, const Grid& y, double kf = 1.0);

struct HNCalibration {
  HNPortfolio portfolio;
  double expected_value = 0.0;
  double min_slack = 0.0;
  int iterations = 0;
};

/// Minimises the expected cost over xi by Nelder-Mead on log xi with a
/// feasibility penalty (violation x 1e4), then a golden-section polish.
/// A only moves cash between psi0 and psi1, so it is fixed at
/// 1 / sinh(1/xi), which puts delta(1) = 0. Throws NumericalError if the
/// optimum is infeasible on the grid by more than 1e-8.
HNCalibration calibrate_hn(const MarginalLaw& mu, const MarginalLaw& nu, const Grid& grid);

struct ConvergenceConfig {
  MarginalLaw mu, nu;
  std::vector<int> mesh_sizes{75, 250, 500, 1000};
  Domain domain{0.0, 5.0};
  GridScheme scheme = GridScheme::Uniform;
  std::vector<double> strikes;  // observed strikes for the discretisation
  int eval_points = 200;        // per axis of the comparison grid
  double quantile_lo = 0.01, quantile_hi = 0.99;  // comparison box
};

struct ConvergenceRow {
  int n = 0;
  double d_n = 0.0;      // largest node gap
  double eps_n = 0.0;    // sup-norm gap between payoff surfaces
  double log_ratio = 0.0;  // log(eps_n) / log(d_n)
  double dual_value = 0.0;
  double hn_value = 0.0;
};

/// For each mesh, solves the node-value super-hedge LP (psi0, psi1 and delta
/// piecewise linear on the nodes) and compares its payoff surface with the
/// closed form on an eval_points^2 grid over the quantile box of mu x nu.
/// The surface does not change under the affine gauge of the hedge, so no
/// alignment is needed. Meshes are solved concurrently; rows follow the
/// input order.
std::vector<ConvergenceRow> convergence_study(const ConvergenceConfig& cfg, const HNCalibration& hn);

void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergenceRow>& rows);

/// Samples of the maps y = f(x) <= x <= g(x) = y. Abscissae increase
/// strictly and so do the values.
struct HNMapsSample {
  std::vector<double> fx, f;
  std::vector<double> gx, g;
};

/// Mean lower and upper targets per source node of an upper-bound plan,
/// made monotone by isotonic regression (tied blocks collapse to one point).
HNMapsSample hn_maps_from_plan(const PlanDecomposition& d, double min_share = 1e-3);

struct IntegralResidualRow {
  double y = 0.0;
  double z_lo = 0.0, z_hi = 0.0;  // g^{-1}(y), f^{-1}(y)
  double residual_mean = 0.0;     // int (g(z) - f^{-1}(y)) / (g(z) - f(z)) dz, target 0
  double residual_mass = 0.0;     // int 1 / (g(z) - f(z)) dz - 1, target 0
  bool valid = false;             // false when y is out of range or the interval is empty
};

/// Evaluates both integral equations at each y by adaptive quadrature on the
/// linear interpolants. Throws DomainError when a map is not strictly
/// increasing.
std::vector<IntegralResidualRow> hn_integral_residual(const HNMapsSample& maps,
                                                      std::span<const double> y_grid);

void write_integral_residual_csv(const std::filesystem::path& path,
                                 const std::vector<IntegralResidualRow>& rows);

}  // namespace fsb
