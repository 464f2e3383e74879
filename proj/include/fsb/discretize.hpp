#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsb/marginals.hpp"

namespace fsb {

enum class GridScheme { Binomial, GaussHermite, Uniform, LegendreRoots };

GridScheme parse_grid_scheme(const std::string& name);
std::string to_string(GridScheme s);

struct Domain {
  double lo = 0.0;
  double hi = 5.0;
};

struct Grid {
  std::vector<double> nodes;
  GridScheme scheme = GridScheme::Uniform;

  std::size_t size() const { return nodes.size(); }
  /// Largest gap between adjacent nodes.
  double mesh() const;
};

/// Uniform nodes are lo + i (hi - lo)/(m + 1), i = 1..m, so both ends stay open.
/// Binomial and Gauss-Hermite schemes need the ATM volatility and horizon.
Grid build_grid(GridScheme scheme, int m, Domain domain, std::optional<double> sigma_atm = {},
                std::optional<double> t = {});

/// Call prices at increasing strikes for a unit-mean underlying.
struct PriceVector {
  std::vector<double> strikes;
  std::vector<double> prices;

  /// Throws ArbitrageError on violated bounds, monotonicity, slopes or convexity.
  void validate(double tol = 1e-12) const;
};

PriceVector prices_from_law(const MarginalLaw& law, std::span<const double> strikes);

struct DiscreteMarginal {
  Grid grid;
  std::vector<double> weights;

  double mass() const;
  double mean() const;
  double moment(int k) const;
  double call(double strike) const;
  double cdf(double x) const;  // P(X <= x)
  /// Throws DomainError unless weights are nonnegative, unit mass and unit mean.
  void validate(double mass_tol = 1e-12, double mean_tol = 1e-10) const;
};

enum class PriorMode { PointDensity, BucketMass };

std::vector<double> prior_weights(const MarginalLaw& law, const Grid& grid, PriorMode mode);

struct KLProjectionReport {
  std::vector<double> lambda_star;
  double kl_value = 0.0;
  std::vector<double> constraint_residuals;
  int iterations = 0;
};

struct KLResult {
  DiscreteMarginal marginal;
  KLProjectionReport report;
};

/// Minimises KL(p || q) subject to matching call prices at the given strikes
/// and the first `l` moments (targets supplied in `moment_targets`).
KLResult kl_project(std::span<const double> prior, const Grid& grid, const PriceVector& prices,
                    int l, std::span<const double> moment_targets);

/// Explicit (M+2)-point law from call prices: nodes (x1, K_1..K_M, x_last).
DiscreteMarginal explicit_weights(const PriceVector& prices, double x1, double x_last);

struct ConvexOrderReport {
  std::vector<double> g_nodes;
  std::vector<double> g_values;
  double min_g = 0.0;
  int delta_f_sign_changes = 0;
  double delta_f_min = 0.0;
  double delta_f_max = 0.0;
  bool means_equal = false;
  bool lower_support_ok = false;  // y_1 <= x_1
  bool upper_support_ok = false;  // y_n >= x_m
  bool ordered = false;
};

ConvexOrderReport check_convex_order(const DiscreteMarginal& px, const DiscreteMarginal& py,
                                     double tol = 1e-10);

/// Grid + prior + KL projection onto the law's call prices at the strikes
/// that fall strictly inside the grid, with the first `l` moments matched.
DiscreteMarginal discretize_law(const MarginalLaw& law, const Grid& grid,
                                std::span<const double> strikes, PriorMode mode = PriorMode::PointDensity,
                                int l = 1, KLProjectionReport* report = nullptr);

void write_marginal(const std::filesystem::path& path, const DiscreteMarginal& m);
DiscreteMarginal read_marginal(const std::filesystem::path& path);
void write_prices(const std::filesystem::path& path, const PriceVector& p);
PriceVector read_prices(const std::filesystem::path& path);

}  // namespace fsb
