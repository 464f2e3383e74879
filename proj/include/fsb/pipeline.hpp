#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsb/discretize.hpp"
#include "fsb/dual_hedge.hpp"
#include "fsb/hobson_klimmek.hpp"
#include "fsb/hobson_neuberger.hpp"
#include "fsb/marginals.hpp"

namespace fsb {

struct ModelSpec {
  ModelKind kind = ModelKind::BlackScholes;
  BSParams bs;
  HestonParams heston;

  /// Volatility used to scale the binomial and Gauss-Hermite grids.
  double atm_vol() const;
  MarginalLaw law(double horizon) const;
  /// E|S_{t+tau} - kf S_t| under the model itself.
  double forward_straddle(double t, double tau, double kf) const;
};

struct GridSpec {
  GridScheme scheme = GridScheme::Uniform;
  int m = 500;  // X nodes
  int n = 500;  // Y nodes
  Domain x_domain{0.0, 5.0};
  Domain y_domain{0.0, 5.0};
};

/// Observed strikes {0.3, 0.4, ..., 2.0}.
std::vector<double> default_observed_strikes();

struct RunConfig {
  std::string name = "run";
  ModelSpec model;
  double t = 1.0, tau = 0.5;
  std::vector<double> kf{0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};
  GridSpec grid;
  std::vector<double> kx = default_observed_strikes();  // observed at t
  std::vector<double> ky = default_observed_strikes();  // observed at t + tau
  BasisSpec basis = BasisSpec::monomials(2);
  bool hat_basis = false;      // hats on the X nodes instead of `basis`
  bool solve_dual = true, solve_primal = true;
  double feas_tol = 1e-9, gap_tol = 1e-9;
  std::vector<int> table_points{75, 250, 500, 1000, 2000};
  GridSpec plan_grid{GridScheme::Uniform, 1000, 3000, {0.0, 10.0}, {0.0, 30.0}};
  std::vector<double> plan_kf{0.9, 1.0, 1.1};
  std::vector<int> hn_meshes{75, 250, 500, 1000};
  int hn_eval_points = 200;
  std::filesystem::path out_dir = "out";

  /// Throws DomainError on non-positive horizons or strikes, or empty lists.
  void validate() const;
};

/// JSON schema in README. Missing keys keep their defaults; relative
/// out_dir resolves against the working directory.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

struct Marginals {
  DiscreteMarginal px, py;
  ConvexOrderReport order;
};

/// Discretises both maturities on the configured grid. Throws DomainError
/// (prefixed with the stage) when the pair is not in convex order.
Marginals build_marginals(const RunConfig& cfg, const GridSpec& grid);

struct BoundRow {
  double kf = 1.0;
  double sub = 0.0, lower = 0.0, model = 0.0, upper = 0.0, super = 0.0;  // NaN when not solved
  double vol_sub = 0.0, vol_lower = 0.0, vol_model = 0.0, vol_upper = 0.0, vol_super = 0.0;

  /// sub <= lower <= model <= upper <= super, skipping unsolved entries.
  bool ordered(double tol = 1e-6) const;
};

struct BoundTable {
  std::string name;
  int m = 0, n = 0;
  GridScheme scheme = GridScheme::Uniform;
  std::vector<BoundRow> rows;

  const BoundRow& at(double kf) const;  // throws std::out_of_range
};

/// Per strike: the dual sub/super-hedges (replication form) and the primal
/// lower/upper bounds, the model price and all forward vols. Strikes run on
/// up to FSB_THREADS workers (default: hardware threads); rows keep the
/// configured order. Errors carry the stage name.
BoundTable run_bounds(const RunConfig& cfg);

/// Columns kf, sub, lower, model, upper, super and the five vols.
void write_bound_table_csv(const std::filesystem::path& path, const BoundTable& t);

/// Sub and super dual values per configured size; one CSV row per kf.
struct GoldenTables {
  std::vector<int> points;
  std::vector<double> kf;
  std::vector<std::vector<double>> sub, super;  // [kf][size]
};
GoldenTables run_tables(const RunConfig& cfg);
void write_golden_csv(const std::filesystem::path& path, const GoldenTables& g, bool super);

struct HKRun {
  HKResult result;
  double value = 0.0;
  double fwd_vol = 0.0;
};

/// The ATM lower bound by the ODE route. DispersionViolation surfaces here.
HKRun run_hk(const RunConfig& cfg, const HKOptions& opts = {});

struct PlanRun {
  double kf = 1.0;
  BoundSense sense = BoundSense::Lower;
  double value = 0.0;
  double mass_in_place = 0.0;
  double spearman_lower = 0.0, spearman_upper = 0.0;  // NaN without enough points
  std::filesystem::path decomposition_csv;
};

/// Solves both primal problems on `plan_grid` for every plan_kf and writes
/// plan_<sense>_<kf>.csv decompositions into out_dir.
std::vector<PlanRun> run_plans(const RunConfig& cfg);

struct HNRun {
  HNCalibration calibration;
  std::vector<ConvergenceRow> rows;
};

/// Calibrates the closed form on the configured grid and runs the
/// convergence study over hn_meshes. Black-Scholes only.
HNRun run_hn(const RunConfig& cfg);

}  // namespace fsb
