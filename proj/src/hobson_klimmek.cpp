#include "fsb/hobson_klimmek.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

double SupportSplit::eta_density(double x) const { return std::max(diff(x), 0.0); }
double SupportSplit::gamma_density(double x) const { return std::max(-diff(x), 0.0); }

SupportSplit find_support(const MarginalLaw& mu, const MarginalLaw& nu, double lo, double hi,
                          int samples) {
  if (!(hi > lo) || samples < 10) throw DomainError("find_support needs a proper window");
  SupportSplit s;
  s.f_mu = mu.density;
  s.f_nu = nu.density;
  s.cdf_mu = mu.cdf;
  s.cdf_nu = nu.cdf;

  std::vector<double> xs(samples + 1), d(samples + 1);
  double dmax = 0.0;
  for (int k = 0; k <= samples; ++k) {
    xs[k] = lo + (hi - lo) * k / samples;
    d[k] = s.diff(xs[k]);
    if (!std::isfinite(d[k])) throw NumericalError("non-finite density difference");
    dmax = std::max(dmax, std::abs(d[k]));
  }
  if (dmax < 1e-12) {
    s.degenerate = true;
    s.a = s.b = 1.0;
    return s;
  }
  // Far-tail underflow noise is not a sign change.
  const double floor = 1e-10 * dmax;
  std::vector<int> signs;
  std::vector<std::pair<double, double>> brackets;
  int last = 0;
  double last_x = lo;
  for (int k = 0; k <= samples; ++k) {
    if (std::abs(d[k]) <= floor) continue;
    const int sg = d[k] > 0 ? 1 : -1;
    if (last != 0 && sg != last) brackets.emplace_back(last_x, xs[k]);
    if (sg != last) signs.push_back(sg);
    last = sg;
    last_x = xs[k];
  }
  if (signs != std::vector<int>{-1, 1, -1})
    throw DispersionViolation("f_mu - f_nu must be negative, positive, negative on the window; found " +
                              std::to_string(brackets.size()) + " sign changes");

  auto diff = [&](double x) { return s.diff(x); };
  s.a = num::bisect(diff, brackets[0].first, brackets[0].second, 1e-13);
  s.b = num::bisect(diff, brackets[1].first, brackets[1].second, 1e-13);
  s.eta_mass = num::integrate(diff, s.a, s.b, 1e-13, 1e-11);
  auto neg = [&](double x) { return -s.diff(x); };
  s.gamma_mass = num::integrate(neg, lo, s.a, 1e-13, 1e-11) + num::integrate(neg, s.b, hi, 1e-13, 1e-11);
  return s;
}

namespace {

double qstar_of(const SupportSplit& s, double eps, double p) {
  const double be = s.b - eps, db = s.diff(be), dp = s.diff(p);
  return (p * p * dp + eps * be * db) / (p * dp + eps * db);
}

}  // namespace

BoundaryPair boundary_preprocess(const SupportSplit& split, double eps) {
  if (split.degenerate) throw DomainError("no residual mass to transport");
  if (!(eps > 0.0) || !(split.b - eps > split.a)) throw DomainError("need 0 < eps < b - a");
  const double be = split.b - eps, db = split.diff(be);
  auto residual_q = [&](double p) {
    const double q = qstar_of(split, eps, p);
    return q - split.b + eps * (be - p) / (q - p) * db / split.diff(q);
  };
  // q* > b needs -p D(p) strictly between eps B / (b - p) and B, with B = eps D(b - eps).
  auto admissible = [&](double p) {
    const double lhs = -p * split.diff(p), big = eps * db;
    return lhs > eps * big / (split.b - p) && lhs < big;
  };

  const int n = 4000;
  const double lo = 1e-12, hi = split.a;
  double best_p = std::numeric_limits<double>::quiet_NaN(), best_gap = std::numeric_limits<double>::infinity();
  double prev_p = 0.0, prev_g = 0.0;
  bool prev_ok = false;
  for (int k = 0; k <= n; ++k) {
    const double p = lo * std::pow(hi / lo, static_cast<double>(k) / n);
    const bool ok = p < split.a && admissible(p);
    const double g = ok ? residual_q(p) : 0.0;
    if (ok && prev_ok && std::isfinite(g) && std::isfinite(prev_g) && (g > 0) != (prev_g > 0)) {
      const double root = num::bisect(residual_q, prev_p, p, 1e-16, 200);
      const double gap = qstar_of(split, eps, root) - split.b;
      if (gap < best_gap) {
        best_gap = gap;
        best_p = root;
      }
    }
    prev_p = p;
    prev_g = g;
    prev_ok = ok;
  }
  if (!std::isfinite(best_p))
    throw NumericalError("boundary preprocessing: no root bracketed in (0, a); try a smaller eps");

  BoundaryPair bp;
  bp.p_star = best_p;
  bp.q_star = qstar_of(split, eps, best_p);
  bp.residual_p = bp.p_star + eps * (bp.q_star - be) / (bp.q_star - bp.p_star) * db / split.diff(bp.p_star);
  bp.residual_q = residual_q(best_p);
  return bp;
}

HKPlan solve_odes(const SupportSplit& split, const BoundaryPair& bp, const HKOptions& opts) {
  if (opts.steps < 1) throw DomainError("need at least one RK step");
  const double a = split.a, be = split.b - opts.eps;
  if (!(be > a)) throw DomainError("need 0 < eps < b - a");
  struct State {
    double p, q;
  };
  auto rhs = [&](double x, State s) {
    const double dx = split.diff(x), w = s.q - s.p;
    return State{(s.q - x) / w * dx / split.diff(s.p), (x - s.p) / w * dx / split.diff(s.q)};
  };
  auto rk4 = [&](double x, State s, double h) {
    const State k1 = rhs(x, s);
    const State k2 = rhs(x + h / 2, {s.p + h / 2 * k1.p, s.q + h / 2 * k1.q});
    const State k3 = rhs(x + h / 2, {s.p + h / 2 * k2.p, s.q + h / 2 * k2.q});
    const State k4 = rhs(x + h, {s.p + h * k3.p, s.q + h * k3.q});
    return State{s.p + h / 6 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p),
                 s.q + h / 6 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q)};
  };
  auto usable = [&](double x, State s) {
    return std::isfinite(s.p) && std::isfinite(s.q) && s.q <= opts.q_cap && s.q - s.p > 1e-14 * s.q &&
           s.p < x && x < s.q;
  };

  // One base step, halved recursively while a full RK4 step and two half
  // steps disagree; the layer next to b is far thinner than the base step.
  std::function<bool(double, State&, double, int)> advance = [&](double x0, State& s, double h, int depth) {
    const State full = rk4(x0, s, h);
    const State half = rk4(x0, s, h / 2);
    const bool half_ok = usable(x0 + h / 2, half);
    const State two = half_ok ? rk4(x0 + h / 2, half, h / 2) : half;
    const bool ok = half_ok && usable(x0 + h, two) && usable(x0 + h, full);
    const double err = ok ? std::max(std::abs(two.p - full.p), std::abs(two.q - full.q)) : 0.0;
    if (ok && err <= opts.tol * (1.0 + std::abs(two.q))) {
      s = two;
      return true;
    }
    if (depth >= opts.max_depth) return false;
    State mid = s;
    if (!advance(x0, mid, h / 2, depth + 1) || !advance(x0 + h / 2, mid, h / 2, depth + 1)) return false;
    s = mid;
    return true;
  };

  HKPlan plan;
  plan.eps = opts.eps;
  plan.p_star = bp.p_star;
  plan.q_star = bp.q_star;
  plan.xs.push_back(be);
  plan.p_vals.push_back(bp.p_star);
  plan.q_vals.push_back(bp.q_star);
  const double h = (be - a) / opts.steps;
  State st{bp.p_star, bp.q_star};
  for (int k = 0; k < opts.steps; ++k) {
    const double x = be - h * k, x_next = be - h * (k + 1);
    State trial = st;
    if (!advance(x, trial, x_next - x, 0)) {
      // q(a) is infinite: blowing through the cap next to a is the expected end.
      if (x - a > 0.02 * (split.b - a))
        throw NumericalError("HK maps blew up at x = " + csv::format_number(x) + ", far from a = " +
                             csv::format_number(a));
      plan.hit_cap = true;
      break;
    }
    st = trial;
    plan.xs.push_back(x_next);
    plan.p_vals.push_back(st.p);
    plan.q_vals.push_back(st.q);
  }
  plan.terminal_gap = std::abs(plan.p_vals.back() - a);
  return plan;
}

ConditionalLaw conditional_density(const SupportSplit& split, const HKPlan& plan, double x) {
  ConditionalLaw c;
  c.x = c.p = c.q = x;
  if (split.degenerate || x <= split.a || x >= split.b) return c;
  const double fmu = split.f_mu(x);
  const double r = fmu > 0.0 ? std::clamp(split.eta_density(x) / fmu, 0.0, 1.0) : 0.0;
  if (r == 0.0) return c;
  // Samples run downwards in x; interpolate on the reversed arrays.
  const std::vector<double> xs(plan.xs.rbegin(), plan.xs.rend());
  const std::vector<double> ps(plan.p_vals.rbegin(), plan.p_vals.rend());
  const std::vector<double> qs(plan.q_vals.rbegin(), plan.q_vals.rend());
  c.p = num::interp_linear(xs, ps, x);
  c.q = num::interp_linear(xs, qs, x);
  if (!(c.p < x && x < c.q)) {
    c.p = c.q = x;
    return c;
  }
  c.w_p = r * (c.q - x) / (c.q - c.p);
  c.w_q = r * (x - c.p) / (c.q - c.p);
  c.w_x = 1.0 - r;
  return c;
}

double lower_bound_value(const SupportSplit& split, const HKPlan& plan) {
  if (split.degenerate || plan.xs.empty()) return 0.0;
  auto integrand = [&](std::size_t k) {
    const double x = plan.xs[k], p = plan.p_vals[k], q = plan.q_vals[k];
    return 2.0 * (x - p) * (q - x) / (q - p) * split.eta_density(x);
  };
  double v = plan.eps * integrand(0);
  for (std::size_t k = 0; k + 1 < plan.xs.size(); ++k)
    v += 0.5 * (plan.xs[k] - plan.xs[k + 1]) * (integrand(k) + integrand(k + 1));
  const double x_end = plan.x_end();
  if (x_end > split.a) {
    // As q -> infinity the integrand tends to 2 (x - p) f_eta, which vanishes at a.
    const double lim = 2.0 * (x_end - plan.p_vals.back()) * split.eta_density(x_end);
    v += 0.5 * (x_end - split.a) * lim;
  }
  return v;
}

HKResult hk_lower_bound(const MarginalLaw& mu, const MarginalLaw& nu, const HKOptions& opts) {
  HKResult r;
  r.split = find_support(mu, nu);
  if (r.split.degenerate) return r;
  r.boundary = boundary_preprocess(r.split, opts.eps);
  r.plan = solve_odes(r.split, r.boundary, opts);
  r.value = lower_bound_value(r.split, r.plan);
  return r;
}

void write_hk_plan_csv(const std::filesystem::path& path, const HKPlan& plan) {
  std::vector<csv::Row> rows;
  for (std::size_t k = 0; k < plan.xs.size(); ++k) rows.push_back({plan.xs[k], plan.p_vals[k], plan.q_vals[k]});
  csv::write(path, {"x", "p", "q"}, rows);
}

}  // namespace fsb
