#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "fsb/marginals.hpp"

namespace fsb {

/// Where the earlier density exceeds the later one. eta = (f_mu - f_nu)_+
/// lives on [a, b] and is carried onto gamma = (f_nu - f_mu)_+ outside it.
struct SupportSplit {
  double a = 0.0, b = 0.0;
  std::function<double(double)> f_mu, f_nu;
  std::function<double(double)> cdf_mu, cdf_nu;
  double eta_mass = 0.0;
  double gamma_mass = 0.0;
  bool degenerate = false;  // f_mu == f_nu: nothing to transport

  double diff(double x) const { return f_mu(x) - f_nu(x); }
  double eta_density(double x) const;
  double gamma_density(double x) const;
  /// Delta(z) = F_nu(z) - F_mu(z); its single maximiser is a.
  double delta(double z) const { return cdf_nu(z) - cdf_mu(z); }
};

/// Locates the two sign changes of f_mu - f_nu on [lo, hi] by sampling and
/// bisection to 1e-10. Throws DispersionViolation for any other sign pattern.
SupportSplit find_support(const MarginalLaw& mu, const MarginalLaw& nu, double lo = kTruncLo,
                          double hi = kTruncHi, int samples = 20000);

struct BoundaryPair {
  double p_star = 0.0, q_star = 0.0;
  double residual_p = 0.0, residual_q = 0.0;  // of the two rectangle-rule equations
};

/// Rectangle-rule values p* = p(b - eps), q* = q(b - eps). q* follows from p*
/// in closed form; p* is the root with q* nearest b, found by a log-spaced
/// scan of (0, a) and bisection. Throws NumericalError when no root is
/// bracketed (try a smaller eps).
BoundaryPair boundary_preprocess(const SupportSplit& split, double eps = 1e-3);

struct HKPlan {
  std::vector<double> xs;  // from b - eps down towards a
  std::vector<double> p_vals, q_vals;
  double eps = 1e-3;
  double p_star = 0.0, q_star = 0.0;
  bool hit_cap = false;     // stopped because q passed the cap near a
  double terminal_gap = 0.0;  // |p(x_end) - a|

  double x_end() const { return xs.back(); }
};

struct HKOptions {
  double eps = 1e-3;
  int steps = 2000;
  double q_cap = kTruncHi;
  double tol = 1e-11;    // local error per base step, relative to 1 + |q|
  int max_depth = 24;    // halvings allowed inside one base step
};

/// Classic RK4 from b - eps down to a on the fixed grid (b - eps - a) / steps,
/// halving locally where step doubling shows an error above `tol`. Stops
/// early once q passes the cap or q - p collapses. Throws NumericalError on a
/// non-finite state well before a.
HKPlan solve_odes(const SupportSplit& split, const BoundaryPair& bp, const HKOptions& opts = {});

/// Law of Y given X = x: atoms at p(x), x, q(x).
struct ConditionalLaw {
  double p = 0.0, x = 0.0, q = 0.0;
  double w_p = 0.0, w_x = 1.0, w_q = 0.0;

  double mean() const { return w_p * p + w_x * x + w_q * q; }
};

/// Maps are interpolated linearly between samples and held at (p*, q*) on
/// (b - eps, b]. Outside [a, b] all mass stays at x.
ConditionalLaw conditional_density(const SupportSplit& split, const HKPlan& plan, double x);

/// Integral of 2 (x - p)(q - x) / (q - p) f_eta over [a, b]: trapezoid on the
/// samples, a rectangle on [b - eps, b] and the q = infinity limit on the
/// sliver left below the last sample.
double lower_bound_value(const SupportSplit& split, const HKPlan& plan);

struct HKResult {
  SupportSplit split;
  BoundaryPair boundary;
  HKPlan plan;
  double value = 0.0;
};

/// The whole chain for the at-the-money lower bound E|Y - X|.
HKResult hk_lower_bound(const MarginalLaw& mu, const MarginalLaw& nu, const HKOptions& opts = {});

/// Columns x, p, q.
void write_hk_plan_csv(const std::filesystem::path& path, const HKPlan& plan);

}  // namespace fsb
