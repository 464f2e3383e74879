#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fsb/discretize.hpp"
#include "fsb/lp.hpp"
#include "fsb/primal_transport.hpp"

namespace fsb {

/// Functions spanning the discretised delta. Hats are the piecewise-linear
/// nodal basis on `knots`, held flat beyond the end knots.
struct BasisSpec {
  enum class Kind { Monomial, PiecewiseLinearHats } kind = Kind::Monomial;
  int degree = 2;
  std::vector<double> knots;

  static BasisSpec monomials(int degree);
  static BasisSpec hats(std::vector<double> knots);

  std::size_t size() const;
  double eval(std::size_t i, double x) const;
  /// sum_i coef_i phi_i(x)
  double combine(std::span<const double> coef, double x) const;
};

/// Weights (w_0, w_1, ..., w_{l-1}) representing phi on the strikes:
/// phi(S) = w_0 + w_1 (S - K_1) + sum_{i=2}^{l-1} w_i (S - K_i)_+ for S >= K_1.
std::vector<double> replication_weights(std::span<const double> strikes,
                                        std::span<const double> phi_values);

/// Evaluates the representation above at S (linear continuation below K_1).
double replicate(std::span<const double> strikes, std::span<const double> weights, double s);

/// Exact discrete call price sum_i p_i (x_i - K)_+.
double call_on_discrete(const DiscreteMarginal& p, double strike);

/// Static portfolio psi0(x) + psi1(y) + delta(x)(y - x). v is the cash the
/// dual LP prices; it equals w0x + w0y - w1x K1x - w1y K1y.
struct HedgePortfolio {
  std::vector<double> strikes_x, strikes_y;
  std::vector<double> wx, wy;
  std::vector<double> wb;
  BasisSpec basis;

  double cash() const;
  double psi0(double x) const;
  double psi1(double y) const;
  double delta(double x) const;
  double payoff(double x, double y) const;
};

double evaluate_portfolio(const HedgePortfolio& port, double x, double y);

/// Strike vector meeting the first-strike precondition: the smallest grid
/// node, the observed strikes strictly inside the grid, then the largest
/// node, so that every observed strike carries a call.
std::vector<double> prepare_strikes(std::span<const double> observed, const Grid& grid);

enum class DualForm {
  Replication,  // calls at the given strikes, delta in `basis`
  NodeValues    // psi0, psi1 and delta free at every node: the exact LP dual of the transport problem
};

/// Lower is the sub-hedge (maximise, portfolio <= payoff), Upper the super-hedge.
struct DualRequest {
  double kf = 1.0;
  BoundSense sense = BoundSense::Upper;
  DiscreteMarginal px;
  DiscreteMarginal py;
  std::vector<double> strikes_x;
  std::vector<double> strikes_y;
  BasisSpec basis = BasisSpec::monomials(2);
  DualForm form = DualForm::Replication;
};

/// Replication form: free variables (v, w_1^x, calls x, w_1^y, calls y, basis
/// coefficients) and one inequality per grid pair. Throws DomainError when
/// the first strikes sit above the first nodes.
lp::LinearProgram build_dual(const DualRequest& req);

struct DualResult {
  double value = 0.0;
  HedgePortfolio portfolio;
  int iterations = 0;
};

/// Throws NumericalError unless the LP reaches optimality.
DualResult solve_dual(const DualRequest& req, const lp::SolveOptions& opts = {});

struct HedgeReport {
  double max_violation = 0.0;  // worst shortfall (super) or excess (sub) on the grid
  double arg_x = 0.0, arg_y = 0.0;
  std::size_t binding = 0;     // pairs with |slack| < binding_tol
  double refined_violation = 0.0;  // same scan on a grid `refine` times finer
};

HedgeReport verify_hedge(const HedgePortfolio& port, const Grid& x, const Grid& y, double kf,
                         BoundSense sense, int refine = 4, double binding_tol = 1e-7);

void write_portfolio_json(const std::filesystem::path& path, const HedgePortfolio& port);
HedgePortfolio read_portfolio_json(const std::filesystem::path& path);
void write_report_csv(const std::filesystem::path& path, const HedgeReport& r);

}  // namespace fsb
