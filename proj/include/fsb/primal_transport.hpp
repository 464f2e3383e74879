#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsb/discretize.hpp"
#include "fsb/lp.hpp"

namespace fsb {

enum class BoundSense { Lower, Upper };

const char* to_string(BoundSense s);

/// Price bound for the forward-start straddle |Y - kf X|.
struct BoundRequest {
  double kf = 1.0;
  BoundSense sense = BoundSense::Lower;
  DiscreteMarginal px;
  DiscreteMarginal py;

  void validate() const;
};

/// Joint weights zeta(i, j) of (x_i, y_j), stored row-major.
struct TransportPlan {
  Grid x;
  Grid y;
  std::vector<double> zeta;

  std::size_t rows() const { return x.size(); }
  std::size_t cols() const { return y.size(); }
  double operator()(std::size_t i, std::size_t j) const { return zeta[i * y.size() + j]; }
};

struct PlanResiduals {
  double row = 0.0;         // max |sum_j zeta_ij - p^x_i|
  double col = 0.0;         // max |sum_i zeta_ij - p^y_j|
  double martingale = 0.0;  // max |sum_j zeta_ij (y_j - x_i)|
  double negativity = 0.0;  // max(0, -min zeta)

  double max() const;
};

PlanResiduals plan_residuals(const TransportPlan& plan, const DiscreteMarginal& px,
                             const DiscreteMarginal& py);

/// Expected straddle payoff under the plan.
double plan_value(const TransportPlan& plan, double kf);

/// Variables zeta_ij >= 0 in row-major order; m row sums, n column sums and
/// m martingale rows, all equalities.
lp::LinearProgram build_primal(const BoundRequest& req);

struct BoundResult {
  double value = 0.0;
  TransportPlan plan;
  PlanResiduals residuals;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Solves the discrete martingale transport problem. Throws DomainError when
/// the LP is infeasible (marginals not in convex order) and NumericalError on
/// solver failure. A convex-order violation below 1e-8 is first repaired by
/// repair_target and reported in `warnings`.
BoundResult solve_bound(const BoundRequest& req, const lp::SolveOptions& opts = {});

/// L2-closest weights on the same nodes with unit mass, unit mean and no
/// negative entries.
DiscreteMarginal repair_target(const DiscreteMarginal& py);

struct MapPoint {
  double x = 0.0;
  double y = 0.0;
  double weight = 0.0;  // conditional on the source node
};

struct PlanDecomposition {
  std::vector<double> x;
  std::vector<double> mass_in_place;  // absolute mass left at x_i
  std::vector<std::vector<MapPoint>> lower_map;
  std::vector<std::vector<MapPoint>> upper_map;

  /// Rank correlation of the mass-weighted-mean target against the source,
  /// over sources that send at least `min_share` of their mass that way.
  double map_spearman(bool lower, double min_share = 1e-3) const;
  double total_in_place() const;
};

/// Splits each source row into mass kept within half the local y spacing of
/// x_i and mass sent below or above. Entries under `atol` are dropped.
PlanDecomposition decompose_plan(const TransportPlan& plan, double atol = 1e-9);

/// Sparse plan export: i, j, x_i, y_j, zeta_ij for entries above `atol`.
void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan,
                    double atol = 1e-10);

/// Point clouds: kind (0 in place, -1 lower, +1 upper), x, y, weight.
void write_decomposition_csv(const std::filesystem::path& path, const PlanDecomposition& d);

}  // namespace fsb
