#include "fsb/hobson_neuberger.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "fsb/csv.hpp"
#include "fsb/dual_hedge.hpp"
#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

HNValues hn_portfolio_eval(double A, double xi, double x, double y) {
  if (!(A > 0.0) || !(xi > 0.0)) throw DomainError("HN constants must be positive");
  if (!(x > 0.0) || !(y > 0.0)) throw DomainError("HN portfolio is defined for x, y > 0");
  const double s = std::sinh(1.0 / xi), coth = 1.0 / std::tanh(1.0 / xi);
  const double lx = std::log(x), las = std::log(A * s);
  HNValues v;
  v.psi0 = -xi * x * lx + xi * x * las + x * coth;
  v.psi1 = xi * (y * std::log(y) - y * std::log(A / xi) - y);
  v.delta = -xi * (lx - las);
  v.total = v.psi0 + v.psi1 + v.delta * (y - x);
  return v;
}

namespace {

// The expected cost only needs these four integrals.
struct Moments {
  double ex = 0.0, exlx = 0.0, ey = 0.0, eyly = 0.0;
};

Moments moments_of(const MarginalLaw& mu, const MarginalLaw& nu) {
  auto moment = [](const MarginalLaw& law, bool with_log) {
    auto f = [&](double x) { return (with_log ? x * std::log(x) : x) * law.density(x); };
    // Split at 1 where x ln x changes sign.
    return num::integrate(f, kTruncLo, 1.0, 1e-14, 1e-12) + num::integrate(f, 1.0, kTruncHi, 1e-14, 1e-12);
  };
  return {moment(mu, false), moment(mu, true), moment(nu, false), moment(nu, true)};
}

double expected_from_moments(const HNPortfolio& p, const Moments& m) {
  const double s = std::sinh(1.0 / p.xi), coth = 1.0 / std::tanh(1.0 / p.xi);
  const double e0 = -p.xi * m.exlx + (p.xi * std::log(p.A * s) + coth) * m.ex;
  const double e1 = p.xi * (m.eyly - (std::log(p.A / p.xi) + 1.0) * m.ey);
  return e0 + e1;
}

HNPortfolio canonical(double xi) { return {1.0 / std::sinh(1.0 / xi), xi}; }

double quantile(const MarginalLaw& law, double level) {
  return num::bisect([&](double x) { return law.cdf(x) - level; }, kTruncLo, kTruncHi, 1e-12);
}

}  // namespace

double hn_expected_value(const HNPortfolio& port, const MarginalLaw& mu, const MarginalLaw& nu) {
  return expected_from_moments(port, moments_of(mu, nu));
}

double hn_min_slack(const HNPortfolio& port, const Grid& x, const Grid& y, double kf) {
  double worst = std::numeric_limits<double>::infinity();
  for (double xv : x.nodes) {
    if (!(xv > 0.0)) continue;  // the closed form lives on x > 0
    const HNValues base = port.eval(xv, 1.0);
    for (double yv : y.nodes) {
      if (!(yv > 0.0)) continue;
      const double psi1 = port.xi * (yv * std::log(yv) - yv * std::log(port.A / port.xi) - yv);
      const double total = base.psi0 + psi1 + base.delta * (yv - xv);
      worst = std::min(worst, total - std::abs(yv - kf * xv));
    }
  }
  return worst;
}

HNCalibration calibrate_hn(const MarginalLaw& mu, const MarginalLaw& nu, const Grid& grid) {
  if (mu.model != ModelKind::BlackScholes || nu.model != ModelKind::BlackScholes)
    throw DomainError("the HN closed form is for lognormal marginals");
  const Moments m = moments_of(mu, nu);
  auto penalised = [&](double log_xi) {
    const HNPortfolio p = canonical(std::exp(log_xi));
    return expected_from_moments(p, m) + 1e4 * std::max(0.0, -hn_min_slack(p, grid, grid));
  };

  const auto nm = num::nelder_mead([&](std::span<const double> v) { return penalised(v[0]); },
                                   {std::log(2.0)}, 0.5, 1e-13, 2000);
  // Golden-section polish around the simplex optimum.
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = nm.x[0] - 0.25, hi = nm.x[0] + 0.25;
  double c = hi - kInvPhi * (hi - lo), d = lo + kInvPhi * (hi - lo);
  double fc = penalised(c), fd = penalised(d);
  int it = nm.iterations;
  while (hi - lo > 1e-10) {
    if (fc < fd) {
      hi = d, d = c, fd = fc;
      c = hi - kInvPhi * (hi - lo), fc = penalised(c);
    } else {
      lo = c, c = d, fc = fd;
      d = lo + kInvPhi * (hi - lo), fd = penalised(d);
    }
    ++it;
  }

  HNCalibration r;
  r.portfolio = canonical(std::exp(0.5 * (lo + hi)));
  r.expected_value = expected_from_moments(r.portfolio, m);
  r.min_slack = hn_min_slack(r.portfolio, grid, grid);
  r.iterations = it;
  if (r.min_slack < -1e-8)
    throw NumericalError("no grid-feasible HN portfolio found; worst slack " + csv::format_number(r.min_slack));
  return r;
}

std::vector<ConvergenceRow> convergence_study(const ConvergenceConfig& cfg, const HNCalibration& hn) {
  if (cfg.mesh_sizes.empty()) throw DomainError("convergence study needs at least one mesh size");
  if (cfg.eval_points < 2) throw DomainError("need at least two evaluation points per axis");
  const double x_lo = quantile(cfg.mu, cfg.quantile_lo), x_hi = quantile(cfg.mu, cfg.quantile_hi);
  const double y_lo = quantile(cfg.nu, cfg.quantile_lo), y_hi = quantile(cfg.nu, cfg.quantile_hi);
  std::vector<double> ex(cfg.eval_points), ey(cfg.eval_points), hn_psi0(cfg.eval_points),
      hn_delta(cfg.eval_points), hn_psi1(cfg.eval_points);
  for (int k = 0; k < cfg.eval_points; ++k) {
    ex[k] = x_lo + (x_hi - x_lo) * k / (cfg.eval_points - 1);
    ey[k] = y_lo + (y_hi - y_lo) * k / (cfg.eval_points - 1);
    const auto vx = hn.portfolio.eval(ex[k], 1.0);
    hn_psi0[k] = vx.psi0;
    hn_delta[k] = vx.delta;
    hn_psi1[k] = hn.portfolio.eval(1.0, ey[k]).psi1;
  }

  auto one = [&](int n) {
    const Grid g = build_grid(cfg.scheme, n, cfg.domain);
    DualRequest q;
    q.kf = 1.0;
    q.sense = BoundSense::Upper;
    q.px = discretize_law(cfg.mu, g, cfg.strikes);
    q.py = discretize_law(cfg.nu, g, cfg.strikes);
    q.form = DualForm::NodeValues;
    const DualResult d = solve_dual(q);
    const HedgePortfolio& port = d.portfolio;

    std::vector<double> p0(ex.size()), dl(ex.size()), p1(ey.size());
    for (std::size_t k = 0; k < ex.size(); ++k) {
      p0[k] = port.psi0(ex[k]);
      dl[k] = port.delta(ex[k]);
      p1[k] = port.psi1(ey[k]);
    }
    double eps = 0.0;
    for (std::size_t i = 0; i < ex.size(); ++i)
      for (std::size_t j = 0; j < ey.size(); ++j) {
        const double lp = p0[i] + p1[j] + dl[i] * (ey[j] - ex[i]);
        const double cf = hn_psi0[i] + hn_psi1[j] + hn_delta[i] * (ey[j] - ex[i]);
        eps = std::max(eps, std::abs(lp - cf));
      }

    ConvergenceRow row;
    row.n = n;
    row.d_n = g.mesh();
    row.eps_n = eps;
    row.log_ratio = std::log(eps) / std::log(row.d_n);
    row.dual_value = d.value;
    row.hn_value = hn.expected_value;
    return row;
  };

  std::vector<std::future<ConvergenceRow>> jobs;
  for (int n : cfg.mesh_sizes) jobs.push_back(std::async(std::launch::async, one, n));
  std::vector<ConvergenceRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergenceRow>& rows) {
  std::vector<csv::Row> out;
  for (const auto& r : rows)
    out.push_back({static_cast<double>(r.n), r.d_n, r.eps_n, r.log_ratio, r.dual_value, r.hn_value});
  csv::write(path, {"n", "d_n", "eps_n", "log_eps_over_log_d", "dual_value", "hn_value"}, out);
}

namespace {

// Pool-adjacent-violators: non-decreasing fit of v; each pooled block
// becomes one point at its mean abscissa.
void isotonic(std::vector<double>& xs, std::vector<double>& vs) {
  struct Block {
    double x, v, w;
  };
  std::vector<Block> st;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    st.push_back({xs[k], vs[k], 1.0});
    while (st.size() > 1 && st[st.size() - 2].v >= st.back().v) {
      const Block b = st.back();
      st.pop_back();
      Block& a = st.back();
      const double w = a.w + b.w;
      a = {(a.x * a.w + b.x * b.w) / w, (a.v * a.w + b.v * b.w) / w, w};
    }
  }
  xs.clear();
  vs.clear();
  for (const auto& b : st) {
    xs.push_back(b.x);
    vs.push_back(b.v);
  }
}

void mean_targets(const PlanDecomposition& d, bool lower, double min_share, std::vector<double>& xs,
                  std::vector<double>& vs) {
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const auto& pts = lower ? d.lower_map[i] : d.upper_map[i];
    double w = 0.0, wy = 0.0;
    for (const auto& p : pts) {
      w += p.weight;
      wy += p.weight * p.y;
    }
    if (w < min_share) continue;
    xs.push_back(d.x[i]);
    vs.push_back(wy / w);
  }
  isotonic(xs, vs);
}

void require_increasing(const std::vector<double>& xs, const std::vector<double>& vs, const char* name) {
  if (xs.size() < 2 || xs.size() != vs.size())
    throw DomainError(std::string("map ") + name + " needs at least two samples");
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (!(xs[k] > xs[k - 1]) || !(vs[k] > vs[k - 1]))
      throw DomainError(std::string("map ") + name + " is not strictly increasing, so it cannot be inverted");
}

}  // namespace

HNMapsSample hn_maps_from_plan(const PlanDecomposition& d, double min_share) {
  HNMapsSample s;
  mean_targets(d, true, min_share, s.fx, s.f);
  mean_targets(d, false, min_share, s.gx, s.g);
  return s;
}

std::vector<IntegralResidualRow> hn_integral_residual(const HNMapsSample& maps, std::span<const double> y_grid) {
  require_increasing(maps.fx, maps.f, "f");
  require_increasing(maps.gx, maps.g, "g");
  auto f = [&](double z) { return num::interp_linear(maps.fx, maps.f, z); };
  auto g = [&](double z) { return num::interp_linear(maps.gx, maps.g, z); };
  // z range on which both interpolants are genuine data, not extrapolation.
  const double z_min = std::max(maps.fx.front(), maps.gx.front());
  const double z_max = std::min(maps.fx.back(), maps.gx.back());

  std::vector<IntegralResidualRow> rows;
  for (double y : y_grid) {
    IntegralResidualRow r;
    r.y = y;
    const bool in_f = y >= maps.f.front() && y <= maps.f.back();
    const bool in_g = y >= maps.g.front() && y <= maps.g.back();
    if (in_f && in_g) {
      r.z_lo = num::interp_linear(maps.g, maps.gx, y);
      r.z_hi = num::interp_linear(maps.f, maps.fx, y);
      if (r.z_lo < r.z_hi && r.z_lo >= z_min && r.z_hi <= z_max) {
        const double finv = r.z_hi;
        auto mean_part = [&](double z) { return (g(z) - finv) / (g(z) - f(z)); };
        auto mass_part = [&](double z) { return 1.0 / (g(z) - f(z)); };
        r.residual_mean = num::integrate(mean_part, r.z_lo, r.z_hi, 1e-12, 1e-10);
        r.residual_mass = num::integrate(mass_part, r.z_lo, r.z_hi, 1e-12, 1e-10) - 1.0;
        r.valid = true;
      }
    }
    rows.push_back(r);
  }
  return rows;
}

void write_integral_residual_csv(const std::filesystem::path& path, const std::vector<IntegralResidualRow>& rows) {
  std::vector<csv::Row> out;
  for (const auto& r : rows)
    out.push_back({r.y, r.z_lo, r.z_hi, r.residual_mean, r.residual_mass, r.valid ? 1.0 : 0.0});
  csv::write(path, {"y", "z_lo", "z_hi", "residual_mean", "residual_mass", "valid"}, out);
}

}  // namespace fsb
