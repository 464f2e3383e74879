// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsb/dual_hedge.hpp"
#include "fsb/errors.hpp"
#include "fsb/hobson_klimmek.hpp"
#include "fsb/hobson_neuberger.hpp"
#include "fsb/lp.hpp"
#include "fsb/numerics.hpp"
#include "fsb/pipeline.hpp"
#include "fsb/primal_transport.hpp"

using namespace fsb;

namespace {

const std::vector<double> kKf{0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4};

// 500-point columns of the published tables, by scheme.
const std::map<GridScheme, std::vector<double>> kSub500{
    {GridScheme::LegendreRoots, {0.4, 0.3, 0.2, 0.1, 0.0384, 0.1004, 0.2, 0.3, 0.4}},
    {GridScheme::Uniform, {0.4, 0.3, 0.2, 0.1, 0.0384, 0.1004, 0.2, 0.3, 0.4}}};
const std::map<GridScheme, std::vector<double>> kSuper500{
    {GridScheme::LegendreRoots, {0.4157, 0.3257, 0.2413, 0.1745, 0.1489, 0.1816, 0.2538, 0.3396, 0.4316}},
    {GridScheme::Uniform, {0.4157, 0.3257, 0.2413, 0.1746, 0.1489, 0.1817, 0.2539, 0.3396, 0.4316}}};

struct Outcome {
  bool pass = false;
  std::vector<std::string> lines;

  void note(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    lines.emplace_back(buf);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.note("aborted: %s", e.what());
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d: %s  %s (%.1fs)\n", id, o.pass ? "PASS" : "FAIL", title, seconds_since(t0));
  for (const auto& l : o.lines) std::printf("    %s\n", l.c_str());
  std::fflush(stdout);
}

RunConfig bs_config(GridScheme scheme, int points) {
  RunConfig c;
  c.grid.scheme = scheme;
  c.grid.m = c.grid.n = points;
  return c;
}

DualRequest restricted(const RunConfig& c, const Marginals& mg, double kf, BoundSense sense) {
  DualRequest q;
  q.kf = kf;
  q.sense = sense;
  q.px = mg.px;
  q.py = mg.py;
  q.strikes_x = prepare_strikes(c.kx, mg.px.grid);
  q.strikes_y = prepare_strikes(c.ky, mg.py.grid);
  return q;
}

double exact_lower(const Marginals& mg) {
  DualRequest q;
  q.sense = BoundSense::Lower;
  q.px = mg.px;
  q.py = mg.py;
  q.form = DualForm::NodeValues;
  return solve_dual(q).value;
}

double bps(double vol) { return 1e4 * vol; }

// Shared between criteria.
struct TableRun {
  std::vector<double> sub, super;
  double sub_seconds = 0.0;
};
std::map<std::pair<GridScheme, int>, TableRun> tables;
double worst_plan_residual = 0.0;
int plans_checked = 0;

const TableRun& table(GridScheme scheme, int points) {
  const auto key = std::make_pair(scheme, points);
  if (auto it = tables.find(key); it != tables.end()) return it->second;
  const RunConfig c = bs_config(scheme, points);
  const Marginals mg = build_marginals(c, c.grid);
  TableRun t;
  for (double kf : kKf) {
    const auto t0 = std::chrono::steady_clock::now();
    t.sub.push_back(solve_dual(restricted(c, mg, kf, BoundSense::Lower)).value);
    t.sub_seconds += seconds_since(t0);
    t.super.push_back(solve_dual(restricted(c, mg, kf, BoundSense::Upper)).value);
  }
  return tables.emplace(key, std::move(t)).first->second;
}

void track(const BoundResult& r) {
  worst_plan_residual = std::max(worst_plan_residual, r.residuals.max());
  ++plans_checked;
}

}  // namespace

int main() {
  criterion(1, "sub-hedge tables at 500 points", [] {
    Outcome o;
    o.pass = true;
    double runtime = 0.0;
    for (auto scheme : {GridScheme::Uniform, GridScheme::LegendreRoots}) {
      const auto& t = table(scheme, 500);
      runtime += t.sub_seconds;
      const auto& paper = kSub500.at(scheme);
      double worst = 0.0;
      for (std::size_t k = 0; k < kKf.size(); ++k) {
        const double dev = std::abs(t.sub[k] - paper[k]);
        worst = std::max(worst, dev);
        if (dev > 5e-4) {
          o.pass = false;
          o.note("%s kf %.1f: %.5f vs paper %.4f (off by %.1e > 5e-4)", to_string(scheme).c_str(), kKf[k], t.sub[k],
                 paper[k], dev);
        }
        // Intrinsic everywhere except ATM and kf 1.1, where the paper itself reports 0.1004.
        if (kKf[k] != 1.0 && kKf[k] != 1.1 && std::abs(t.sub[k] - std::abs(1.0 - kKf[k])) > 1e-4) {
          o.pass = false;
          o.note("%s kf %.1f: %.5f is not intrinsic", to_string(scheme).c_str(), kKf[k], t.sub[k]);
        }
      }
      o.note("%s: ATM %.5f (paper 0.0384), kf 1.1 %.5f (paper 0.1004), worst deviation %.1e",
             to_string(scheme).c_str(), t.sub[4], t.sub[5], worst);
    }
    o.note("sub-hedge solve time %.0fs for both schemes (target 300s on a desktop; not gated)", runtime);
    return o;
  });

  criterion(2, "super-hedge tables", [] {
    Outcome o;
    o.pass = true;
    for (auto scheme : {GridScheme::Uniform, GridScheme::LegendreRoots}) {
      const auto& t = table(scheme, 500);
      const auto& paper = kSuper500.at(scheme);
      for (std::size_t k : {0u, 4u, 8u}) {
        const double dev = std::abs(t.super[k] - paper[k]);
        const bool ok = dev <= 5e-4;
        o.pass = o.pass && ok;
        o.note("%s 500 kf %.1f: %.5f vs paper %.4f %s", to_string(scheme).c_str(), kKf[k], t.super[k], paper[k],
               ok ? "ok" : "OUT OF BAND");
      }
      const double atm75 = table(scheme, 75).super[4];
      const bool ok = atm75 >= 0.1433 && atm75 <= 0.1483;
      o.pass = o.pass && ok;
      o.note("%s 75 ATM: %.5f, band [0.1433, 0.1483] %s", to_string(scheme).c_str(), atm75,
             ok ? "ok" : "OUT OF BAND");
    }
    return o;
  });

  criterion(3, "discrete strong duality on 100 points", [] {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = bs_config(GridScheme::Uniform, 100);
    const Marginals mg = build_marginals(c, c.grid);
    double worst = 0.0;
    for (double kf : kKf)
      for (auto sense : {BoundSense::Lower, BoundSense::Upper}) {
        const BoundResult p = solve_bound({kf, sense, mg.px, mg.py});
        track(p);
        DualRequest q;
        q.kf = kf;
        q.sense = sense;
        q.px = mg.px;
        q.py = mg.py;
        q.form = DualForm::NodeValues;
        const double d = solve_dual(q).value;
        worst = std::max(worst, std::abs(p.value - d) / std::abs(p.value));
      }
    const double secs = seconds_since(t0);
    o.pass = worst < 1e-6 && secs < 60.0;
    o.note("worst relative primal-dual gap %.2e over 18 problems (limit 1e-6), %.1fs (limit 60s)", worst, secs);
    return o;
  });

  criterion(4, "HK and LP agree under Black-Scholes", [] {
    Outcome o;
    const RunConfig c = bs_config(GridScheme::Uniform, 500);
    const HKRun hk = run_hk(c);
    const double dual = exact_lower(build_marginals(c, c.grid));
    const double dual_vol = forward_vol_from_straddle(dual, c.tau, 1.0).vol;
    const bool range = hk.fwd_vol >= 0.0685 && hk.fwd_vol <= 0.0705;
    const bool close = std::abs(bps(hk.fwd_vol) - bps(dual_vol)) <= 10.0;
    o.pass = range && close;
    o.note("HK %.4f%% (paper 6.95%%), in [6.85%%, 7.05%%]: %s", 100 * hk.fwd_vol, range ? "yes" : "no");
    o.note("exact dual LP at 500 points %.4f%% (paper 6.98%%), gap %.1f bps (limit 10)", 100 * dual_vol,
           std::abs(bps(hk.fwd_vol) - bps(dual_vol)));
    return o;
  });

  criterion(5, "HK and LP under Heston", [] {
    Outcome o;
    RunConfig c = bs_config(GridScheme::Uniform, 500);
    c.model.kind = ModelKind::Heston;
    const HKRun hk = run_hk(c);
    const double dual = exact_lower(build_marginals(c, c.grid));
    const double dual_vol = forward_vol_from_straddle(dual, c.tau, 1.0).vol;
    const double d_hk = std::abs(bps(hk.fwd_vol) - 777.0), d_dual = std::abs(bps(dual_vol) - 780.0);
    o.pass = d_hk <= 10.0 && d_dual <= 10.0;
    o.note("HK %.4f%% vs 7.77%%: %.1f bps; exact dual LP %.4f%% vs 7.80%%: %.1f bps (limit 10 each)",
           100 * hk.fwd_vol, d_hk, 100 * dual_vol, d_dual);
    return o;
  });

  criterion(6, "two-point oracle instance", [] {
    Outcome o;
    const DiscreteMarginal px{{{0.75, 1.25}}, {0.5, 0.5}}, py{{{0.5, 1.5}}, {0.5, 0.5}};
    const double expect[2][2] = {{0.375, 0.125}, {0.125, 0.375}};
    double dev = 0.0, vdev = 0.0;
    for (auto sense : {BoundSense::Lower, BoundSense::Upper}) {
      const BoundResult r = solve_bound({1.0, sense, px, py});
      track(r);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) dev = std::max(dev, std::abs(r.plan(i, j) - expect[i][j]));
      vdev = std::max(vdev, std::abs(r.value - 0.375));
    }
    const DiscreteMarginal shifted{{{0.5, 1.5}}, {0.45, 0.55}};
    const auto status = lp::solve_lp(build_primal({1.0, BoundSense::Lower, px, shifted})).status;
    const bool infeasible = status == lp::Status::Infeasible;
    bool throws = false;
    try {
      solve_bound({1.0, BoundSense::Lower, px, shifted});
    } catch (const DomainError&) {
      throws = true;
    }
    o.pass = dev < 1e-10 && vdev < 1e-10 && infeasible && throws;
    o.note("plan deviation %.1e, value deviation from 0.375 %.1e (limit 1e-10 each)", dev, vdev);
    o.note("mean of nu moved to 1.05: LP status %s, solve_bound raises DomainError: %s", lp::to_string(status),
           throws ? "yes" : "no");
    return o;
  });

  criterion(7, "model price lies inside the bounds", [] {
    Outcome o;
    bool bracketed = true;
    const RunConfig c = bs_config(GridScheme::Uniform, 500);
    const Marginals mg = build_marginals(c, c.grid);
    for (double kf : kKf) {
      const BoundResult lo = solve_bound({kf, BoundSense::Lower, mg.px, mg.py});
      const BoundResult up = solve_bound({kf, BoundSense::Upper, mg.px, mg.py});
      track(lo);
      track(up);
      const double model = c.model.forward_straddle(c.t, c.tau, kf);
      if (model < lo.value - 1e-9 || model > up.value + 1e-9) {
        bracketed = false;
        o.note("kf %.1f: model %.6f outside [%.6f, %.6f]", kf, model, lo.value, up.value);
      }
    }
    // Oracle: E|Z - 1| for Z lognormal over tau = 0.5 by quadrature.
    auto f = [](double z) { return std::abs(z - 1.0) * lognormal_density(0.5, 0.2, z); };
    const double atm = num::integrate(f, 1e-8, 1.0, 1e-14, 1e-12) + num::integrate(f, 1.0, 40.0, 1e-14, 1e-12);
    const bool inside = atm > 0.0384 && atm < 0.1490;
    o.pass = bracketed && inside;
    o.note("all 9 model prices inside [lower, upper] on 500 points: %s", bracketed ? "yes" : "no");
    o.note("ATM model straddle by quadrature %.6f, strictly inside (0.0384, 0.1490): %s", atm, inside ? "yes" : "no");
    return o;
  });

  criterion(8, "discretised call curves are convex and ordered", [] {
    Outcome o;
    o.pass = true;
    for (auto scheme : {GridScheme::Uniform, GridScheme::LegendreRoots}) {
      const RunConfig c = bs_config(scheme, 500);
      const Marginals mg = build_marginals(c, c.grid);
      std::vector<double> ks = mg.px.grid.nodes;
      ks.insert(ks.end(), mg.py.grid.nodes.begin(), mg.py.grid.nodes.end());
      std::sort(ks.begin(), ks.end());
      ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
      double min_gap = 1e9, min_conv_x = 1e9, min_conv_y = 1e9;
      for (std::size_t k = 1; k + 1 < ks.size(); ++k) {
        min_gap = std::min(min_gap, mg.py.call(ks[k]) - mg.px.call(ks[k]));
        auto second = [&](const DiscreteMarginal& p) {
          const double l = (p.call(ks[k]) - p.call(ks[k - 1])) / (ks[k] - ks[k - 1]);
          const double r = (p.call(ks[k + 1]) - p.call(ks[k])) / (ks[k + 1] - ks[k]);
          return r - l;
        };
        min_conv_x = std::min(min_conv_x, second(mg.px));
        min_conv_y = std::min(min_conv_y, second(mg.py));
      }
      const bool ok = min_gap >= -1e-10 && min_conv_x >= -1e-10 && min_conv_y >= -1e-10;
      o.pass = o.pass && ok;
      o.note("%s: min C_1.5 - C_1 %.2e, min second difference %.2e (1y) %.2e (1.5y)", to_string(scheme).c_str(),
             min_gap, min_conv_x, min_conv_y);
    }
    return o;
  });

  criterion(9, "closed-form super-hedge and convergence study", [] {
    Outcome o;
    RunConfig c = bs_config(GridScheme::Uniform, 200);
    c.hn_meshes = {75, 250, 500, 1000};
    const HNRun r = run_hn(c);
    const double v = r.calibration.expected_value;
    const bool value_ok = std::abs(v - 0.1490) <= 1e-3;
    bool decreasing = true;
    for (std::size_t k = 1; k < r.rows.size(); ++k) decreasing = decreasing && r.rows[k].eps_n < r.rows[k - 1].eps_n;
    o.pass = value_ok && decreasing;
    o.note("calibrated value %.6f at xi %.4f vs 0.1490: off by %.1e (limit 1e-3)", v, r.calibration.portfolio.xi,
           std::abs(v - 0.1490));
    o.note("min grid slack %.2e", r.calibration.min_slack);
    for (const auto& row : r.rows)
      o.note("n %4d  d_n %.5f  eps_n %.5f  log ratio %.4f  exact dual %.6f", row.n, row.d_n, row.eps_n,
             row.log_ratio, row.dual_value);
    o.note("eps(n) strictly decreasing: %s", decreasing ? "yes" : "no");
    return o;
  });

  criterion(10, "property checks", [] {
    Outcome o;
    // Plan residuals from every plan solved above.
    const bool plans_ok = plans_checked > 0 && worst_plan_residual < 1e-8;
    o.note("marginal and martingale residuals: worst %.1e over %d plans (limit 1e-8)", worst_plan_residual,
           plans_checked);

    const HKResult hk = hk_lower_bound(make_bs_law({0.2}, 1.0), make_bs_law({0.2}, 1.5));
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(hk.split.a, hk.split.b);
    double worst_mean = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double x = u(rng);
      worst_mean = std::max(worst_mean, std::abs(conditional_density(hk.split, hk.plan, x).mean() - x));
    }
    const bool hk_ok = worst_mean < 1e-12;
    o.note("HK conditional mean identity: worst %.1e at 100 points (limit 1e-12)", worst_mean);

    double worst_rep = 0.0;
    std::uniform_real_distribution<double> v(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> ks{0.1};
      for (int k = 0; k < 12; ++k) ks.push_back(ks.back() + 0.05 + 0.3 * (v(rng) + 2.0) / 4.0);
      std::vector<double> vals;
      for (std::size_t k = 0; k < ks.size(); ++k) vals.push_back(v(rng));
      const auto w = replication_weights(ks, vals);
      for (double s = ks.front(); s <= ks.back(); s += 0.01)
        worst_rep = std::max(worst_rep, std::abs(replicate(ks, w, s) - num::interp_linear(ks, vals, s)));
    }
    const bool rep_ok = worst_rep < 1e-12;
    o.note("replication of piecewise-linear functions: worst error %.1e (limit 1e-12)", worst_rep);

    double worst_kl = 0.0;
    for (auto kind : {ModelKind::BlackScholes, ModelKind::Heston}) {
      ModelSpec m;
      m.kind = kind;
      const Grid g = build_grid(GridScheme::Uniform, 500, {0.0, 5.0});
      for (double t : {1.0, 1.5}) {
        KLProjectionReport rep;
        discretize_law(m.law(t), g, default_observed_strikes(), PriorMode::PointDensity, 1, &rep);
        for (double r : rep.constraint_residuals) worst_kl = std::max(worst_kl, std::abs(r));
      }
    }
    const bool kl_ok = worst_kl < 1e-8;
    o.note("KL projection constraint residuals: worst %.1e (limit 1e-8)", worst_kl);
    o.pass = plans_ok && hk_ok && rep_ok && kl_ok;
    return o;
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
