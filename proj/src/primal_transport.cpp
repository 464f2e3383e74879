#include "fsb/primal_transport.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

const char* to_string(BoundSense s) { return s == BoundSense::Lower ? "lower" : "upper"; }

void BoundRequest::validate() const {
  if (!(kf > 0.0)) throw DomainError("forward-start strike must be positive");
  if (px.grid.size() == 0 || py.grid.size() == 0) throw DomainError("empty marginal");
  px.validate(1e-9, 1e-8);
  py.validate(1e-9, 1e-8);
}

double PlanResiduals::max() const { return std::max({row, col, martingale, negativity}); }

PlanResiduals plan_residuals(const TransportPlan& plan, const DiscreteMarginal& px,
                             const DiscreteMarginal& py) {
  const std::size_t m = plan.rows(), n = plan.cols();
  PlanResiduals r;
  std::vector<double> colsum(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double rs = 0.0, mart = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double z = plan(i, j);
      rs += z;
      mart += z * (plan.y.nodes[j] - plan.x.nodes[i]);
      colsum[j] += z;
      r.negativity = std::max(r.negativity, -z);
    }
    r.row = std::max(r.row, std::abs(rs - px.weights[i]));
    r.martingale = std::max(r.martingale, std::abs(mart));
  }
  for (std::size_t j = 0; j < n; ++j) r.col = std::max(r.col, std::abs(colsum[j] - py.weights[j]));
  return r;
}

double plan_value(const TransportPlan& plan, double kf) {
  double v = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i)
    for (std::size_t j = 0; j < plan.cols(); ++j)
      v += plan(i, j) * std::abs(plan.y.nodes[j] - kf * plan.x.nodes[i]);
  return v;
}

lp::LinearProgram build_primal(const BoundRequest& req) {
  const auto& x = req.px.grid.nodes;
  const auto& y = req.py.grid.nodes;
  const int m = static_cast<int>(x.size()), n = static_cast<int>(y.size());
  lp::LinearProgram prog;
  prog.sense = req.sense == BoundSense::Lower ? lp::Sense::Minimize : lp::Sense::Maximize;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) prog.add_variable(std::abs(y[j] - req.kf * x[i]));
  for (int i = 0; i < m; ++i) prog.add_row(lp::RowSense::Equal, req.px.weights[i]);
  for (int j = 0; j < n; ++j) prog.add_row(lp::RowSense::Equal, req.py.weights[j]);
  for (int i = 0; i < m; ++i) prog.add_row(lp::RowSense::Equal, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const int v = i * n + j;
      prog.add_entry(i, v, 1.0);
      prog.add_entry(m + j, v, 1.0);
      prog.add_entry(m + n + i, v, y[j] - x[i]);
    }
  return prog;
}

DiscreteMarginal repair_target(const DiscreteMarginal& py) {
  const auto& y = py.grid.nodes;
  const auto& p = py.weights;
  const std::size_t n = y.size();
  // Semismooth Newton on the two multipliers of w = max(p + l0 + l1 y, 0).
  Eigen::Vector2d lam = Eigen::Vector2d::Zero();
  auto weights = [&](const Eigen::Vector2d& l) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = std::max(p[j] + l[0] + l[1] * y[j], 0.0);
    return w;
  };
  auto residual = [&](const std::vector<double>& w) {
    Eigen::Vector2d g(-1.0, -1.0);
    for (std::size_t j = 0; j < n; ++j) {
      g[0] += w[j];
      g[1] += w[j] * y[j];
    }
    return g;
  };
  std::vector<double> w = weights(lam);
  Eigen::Vector2d g = residual(w);
  for (int it = 0; it < 100 && g.lpNorm<Eigen::Infinity>() > 1e-15; ++it) {
    Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();
    for (std::size_t j = 0; j < n; ++j) {
      if (p[j] + lam[0] + lam[1] * y[j] <= 0.0) continue;
      jac(0, 0) += 1.0;
      jac(0, 1) += y[j];
      jac(1, 1) += y[j] * y[j];
    }
    jac(1, 0) = jac(0, 1);
    jac.diagonal().array() += 1e-300;
    const Eigen::Vector2d step = jac.ldlt().solve(-g);
    double a = 1.0;
    for (int ls = 0; ls < 40; ++ls, a *= 0.5) {
      const auto wt = weights(lam + a * step);
      const auto gt = residual(wt);
      if (gt.norm() < g.norm() || ls == 39) {
        lam += a * step;
        w = wt;
        g = gt;
        break;
      }
    }
  }
  if (g.lpNorm<Eigen::Infinity>() > 1e-12)
    throw NumericalError("repair_target: could not restore unit mass and mean");
  return {py.grid, std::move(w)};
}

BoundResult solve_bound(const BoundRequest& req, const lp::SolveOptions& opts) {
  req.validate();
  BoundResult out;
  BoundRequest work = req;
  const auto order = check_convex_order(req.px, req.py);
  if (!order.ordered) {
    const double gap = std::max(-order.min_g, std::abs(req.px.mean() - req.py.mean()));
    if (gap > 1e-8)
      throw DomainError("marginals are not in convex order (violation " + csv::format_number(gap) +
                        ")");
    work.py = repair_target(req.py);
    out.warnings.push_back("convex-order violation " + csv::format_number(gap) +
                           " repaired by L2 projection of the later marginal");
  }

  // Row sums, column sums and martingale rows together force E[Y] = E[X], so
  // moment noise from the projection would leave an irreducible residual.
  for (DiscreteMarginal* d : {&work.px, &work.py}) {
    const double dev = std::max(std::abs(d->mass() - 1.0), std::abs(d->mean() - 1.0));
    if (dev > 1e-15) *d = repair_target(*d);
    if (dev > 1e-10)
      out.warnings.push_back("marginal moments off by " + csv::format_number(dev) + ", re-projected");
  }

  const auto prog = build_primal(work);
  const auto sol = lp::solve_lp(prog, opts);
  if (sol.status == lp::Status::Infeasible)
    throw DomainError("martingale transport LP is infeasible: no martingale coupling exists (" +
                      sol.diagnostics + ")");
  if (sol.status != lp::Status::Optimal)
    throw NumericalError(std::string("martingale transport LP: ") + lp::to_string(sol.status) +
                         " (" + sol.diagnostics + ")");

  out.value = sol.objective_value;
  out.iterations = sol.iterations;
  out.plan.x = work.px.grid;
  out.plan.y = work.py.grid;
  out.plan.zeta = sol.primal;
  for (double& z : out.plan.zeta) z = std::max(z, 0.0);
  out.residuals = plan_residuals(out.plan, work.px, work.py);
  if (out.residuals.max() > 1e-8)
    out.warnings.push_back("plan residual " + csv::format_number(out.residuals.max()) +
                           " exceeds 1e-8");
  return out;
}

double PlanDecomposition::map_spearman(bool lower, double min_share) const {
  const auto& maps = lower ? lower_map : upper_map;
  std::vector<double> src, tgt;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    double w = 0.0, wy = 0.0;
    for (const auto& p : maps[i]) {
      w += p.weight;
      wy += p.weight * p.y;
    }
    if (w < min_share) continue;
    src.push_back(x[i]);
    tgt.push_back(wy / w);
  }
  if (src.size() < 3) return 0.0;
  return num::spearman(src, tgt);
}

double PlanDecomposition::total_in_place() const {
  return std::accumulate(mass_in_place.begin(), mass_in_place.end(), 0.0);
}

PlanDecomposition decompose_plan(const TransportPlan& plan, double atol) {
  const auto& x = plan.x.nodes;
  const auto& y = plan.y.nodes;
  const std::size_t m = x.size(), n = y.size();
  PlanDecomposition d;
  d.x = x;
  d.mass_in_place.assign(m, 0.0);
  d.lower_map.resize(m);
  d.upper_map.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Half the y spacing around x_i decides whether mass stayed put.
    const auto it = std::lower_bound(y.begin(), y.end(), x[i]);
    const std::size_t j = static_cast<std::size_t>(it - y.begin());
    double h = 0.0;
    if (n > 1) {
      const std::size_t a = j == 0 ? 0 : std::min(j, n - 1) - 1;
      const std::size_t b = std::min(a + 1, n - 1);
      h = 0.5 * (y[b] - y[a]);
    }
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) row += std::max(plan(i, k), 0.0);
    if (row <= 0.0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const double z = plan(i, k);
      if (z <= atol) continue;
      if (std::abs(y[k] - x[i]) <= h) d.mass_in_place[i] += z;
      else if (y[k] < x[i]) d.lower_map[i].push_back({x[i], y[k], z / row});
      else d.upper_map[i].push_back({x[i], y[k], z / row});
    }
  }
  return d;
}

void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan, double atol) {
  std::vector<csv::Row> rows;
  for (std::size_t i = 0; i < plan.rows(); ++i)
    for (std::size_t j = 0; j < plan.cols(); ++j)
      if (plan(i, j) > atol)
        rows.push_back({static_cast<double>(i), static_cast<double>(j), plan.x.nodes[i], plan.y.nodes[j],
                        plan(i, j)});
  csv::write(path, {"i", "j", "x", "y", "zeta"}, rows);
}

void write_decomposition_csv(const std::filesystem::path& path, const PlanDecomposition& d) {
  std::vector<csv::Row> rows;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    if (d.mass_in_place[i] > 0.0) rows.push_back({0.0, d.x[i], d.x[i], d.mass_in_place[i]});
    for (const auto& p : d.lower_map[i]) rows.push_back({-1.0, p.x, p.y, p.weight});
    for (const auto& p : d.upper_map[i]) rows.push_back({1.0, p.x, p.y, p.weight});
  }
  csv::write(path, {"kind", "x", "y", "weight"}, rows);
}

}  // namespace fsb
