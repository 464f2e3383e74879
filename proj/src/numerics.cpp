#include "fsb/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fsb/errors.hpp"

namespace fsb::num {

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      // Recompute the derivative at the converged root for the weight.
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
  // Golub-Welsch: eigenvalues of the symmetric Jacobi matrix.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mu0 = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v * v;
  }
  return rule;
}

namespace {
const QuadratureRule& rule16() {
  static const QuadratureRule r = gauss_legendre(16);
  return r;
}
const QuadratureRule& rule_cache(int order) {
  static const QuadratureRule r8 = gauss_legendre(8);
  static const QuadratureRule r32 = gauss_legendre(32);
  if (order == 8) return r8;
  if (order == 32) return r32;
  return rule16();
}

double panel(const std::function<double(double)>& f, double a, double b,
             const QuadratureRule& r) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(c + h * r.nodes[i]);
  return s * h;
}

double adapt(const std::function<double(double)>& f, double a, double b, double whole,
             double abs_tol, double rel_tol, int depth) {
  const double m = 0.5 * (a + b);
  const double left = panel(f, a, m, rule16());
  const double right = panel(f, m, b, rule16());
  const double both = left + right;
  if (std::abs(both - whole) <= std::max(abs_tol, rel_tol * std::abs(both))) return both;
  if (depth <= 0) throw QuadratureError("adaptive quadrature: maximum depth reached");
  return adapt(f, a, m, left, 0.5 * abs_tol, rel_tol, depth - 1) +
         adapt(f, m, b, right, 0.5 * abs_tol, rel_tol, depth - 1);
}
}  // namespace

double integrate_fixed(const std::function<double(double)>& f, double a, double b,
                       int order) {
  if (order == 8 || order == 16 || order == 32) return panel(f, a, b, rule_cache(order));
  return panel(f, a, b, gauss_legendre(order));
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol, double rel_tol, int max_depth) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a, abs_tol, rel_tol, max_depth);
  return adapt(f, a, b, panel(f, a, b, rule16()), abs_tol, rel_tol, max_depth);
}

double integrate_half_line(const std::function<double(double)>& f, double width,
                           double tail_tol, double u_max) {
  double total = 0.0;
  int quiet = 0;
  for (double lo = 0.0; lo < u_max; lo += width) {
    const double contrib = integrate(f, lo, lo + width, 0.1 * tail_tol, 1e-12, 20);
    total += contrib;
    if (std::abs(contrib) < tail_tol) {
      if (++quiet >= 2) return total;
    } else {
      quiet = 0;
    }
  }
  throw QuadratureError("Fourier integral did not converge before the truncation limit");
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double x_tol,
              int max_iter) {
  double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) throw ConvergenceError("bisect: root not bracketed");
  for (int it = 0; it < max_iter && hi - lo > x_tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double brent(const std::function<double(double)>& f, double a, double b, double x_tol,
             int max_iter) {
  double fa = f(a);
  double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw ConvergenceError("brent: root not bracketed");
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iter; ++it) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * x_tol;
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0.0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = d;
      }
    } else {
      d = m;
      e = d;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : (m > 0 ? tol : -tol);
    fb = f(b);
  }
  throw ConvergenceError("brent: maximum iterations reached");
}

double interp_linear(std::span<const double> xs, std::span<const double> ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return (1.0 - w) * ys[k - 1] + w * ys[k];
}

double interp_hermite(std::span<const double> xs, std::span<const double> ys,
                      std::span<const double> dys, double x) {
  if (x < xs.front() || x > xs.back()) return 0.0;
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t k = static_cast<std::size_t>(it - xs.begin());
  if (k >= xs.size()) k = xs.size() - 1;
  const double h = xs[k] - xs[k - 1];
  const double t = (x - xs[k - 1]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * ys[k - 1] + h10 * h * dys[k - 1] + h01 * ys[k] + h11 * h * dys[k];
}

namespace {
std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, double step, double f_tol,
                             int max_iter) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step;
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

  NelderMeadResult out;
  std::vector<std::size_t> order(n + 1);
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (std::abs(fv[worst] - fv[best]) <= f_tol * (1.0 + std::abs(fv[best]))) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[order[k]][d] / n;
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t d = 0; d < n; ++d) p[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[best]) {
      auto xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[worst] = std::move(xe);
        fv[worst] = fe;
      } else {
        simplex[worst] = std::move(xr);
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = std::move(xr);
      fv[worst] = fr;
    } else {
      auto xc = fr < fv[worst] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fv[worst])) {
        simplex[worst] = std::move(xc);
        fv[worst] = fc;
      } else {
        for (std::size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (std::size_t d = 0; d < n; ++d)
            simplex[k][d] = simplex[best][d] + 0.5 * (simplex[k][d] - simplex[best][d]);
          fv[k] = f(simplex[k]);
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  out.x = simplex[best];
  out.value = fv[best];
  return out;
}

}  // namespace fsb::num
