#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace fsb::num {

inline double normal_pdf(double x) {
  static constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], nodes ascending.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_legendre(int n);

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)), nodes ascending.
QuadratureRule gauss_hermite(int n);

/// Fixed-order Gauss-Legendre over [a, b].
double integrate_fixed(const std::function<double(double)>& f, double a, double b,
                       int order = 16);

/// Adaptive Gauss-Legendre: bisects panels until the one-panel and two-panel
/// estimates agree to max(abs_tol, rel_tol * |I|). Throws QuadratureError if
/// the recursion depth is exhausted.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-12, double rel_tol = 1e-10, int max_depth = 30);

/// Integral over [0, inf) of an integrand decaying in u. Panels of width
/// `panel` are added until two consecutive panels contribute less than
/// `tail_tol` in absolute value; throws QuadratureError past `u_max`.
double integrate_half_line(const std::function<double(double)>& f, double panel,
                           double tail_tol = 1e-14, double u_max = 5000.0);

/// Bisection on [lo, hi]; requires f(lo) and f(hi) of opposite sign.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double x_tol = 1e-14, int max_iter = 200);

/// Brent's method on a bracketing interval.
double brent(const std::function<double(double)>& f, double lo, double hi,
             double x_tol = 1e-15, int max_iter = 200);

/// Linear interpolation on increasing abscissae, constant extrapolation.
double interp_linear(std::span<const double> xs, std::span<const double> ys, double x);

/// Cubic Hermite interpolation with given derivatives; zero outside [xs.front(), xs.back()].
double interp_hermite(std::span<const double> xs, std::span<const double> ys,
                      std::span<const double> dys, double x);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Minimise f over R^n with the Nelder-Mead simplex method.
struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
};
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, double step, double f_tol = 1e-12,
                             int max_iter = 5000);

}  // namespace fsb::num
