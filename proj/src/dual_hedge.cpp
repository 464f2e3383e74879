#include "fsb/dual_hedge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

BasisSpec BasisSpec::monomials(int degree) {
  if (degree < 0) throw DomainError("monomial basis degree must be nonnegative");
  BasisSpec b;
  b.kind = Kind::Monomial;
  b.degree = degree;
  return b;
}

BasisSpec BasisSpec::hats(std::vector<double> knots) {
  if (knots.empty()) throw DomainError("hat basis needs at least one knot");
  if (!std::is_sorted(knots.begin(), knots.end())) throw DomainError("hat knots must increase");
  BasisSpec b;
  b.kind = Kind::PiecewiseLinearHats;
  b.knots = std::move(knots);
  return b;
}

std::size_t BasisSpec::size() const {
  return kind == Kind::Monomial ? static_cast<std::size_t>(degree) + 1 : knots.size();
}

double BasisSpec::eval(std::size_t i, double x) const {
  if (kind == Kind::Monomial) return std::pow(x, static_cast<int>(i));
  const std::size_t n = knots.size();
  if (n == 1) return 1.0;
  const double xc = std::clamp(x, knots.front(), knots.back());
  if (i > 0 && xc >= knots[i - 1] && xc <= knots[i])
    return (xc - knots[i - 1]) / (knots[i] - knots[i - 1]);
  if (i + 1 < n && xc >= knots[i] && xc <= knots[i + 1])
    return (knots[i + 1] - xc) / (knots[i + 1] - knots[i]);
  return 0.0;
}

double BasisSpec::combine(std::span<const double> coef, double x) const {
  if (kind == Kind::PiecewiseLinearHats) return num::interp_linear(knots, coef, x);
  double v = 0.0, p = 1.0;
  for (double c : coef) {
    v += c * p;
    p *= x;
  }
  return v;
}

std::vector<double> replication_weights(std::span<const double> strikes,
                                        std::span<const double> phi_values) {
  const std::size_t l = strikes.size();
  if (l < 2) throw DomainError("replication needs at least two strikes");
  if (phi_values.size() != l) throw DomainError("one function value per strike is required");
  std::vector<double> slope(l - 1);
  for (std::size_t i = 0; i + 1 < l; ++i) {
    const double dk = strikes[i + 1] - strikes[i];
    if (!(dk > 0.0)) throw DomainError("replication strikes must be strictly increasing");
    slope[i] = (phi_values[i + 1] - phi_values[i]) / dk;
  }
  std::vector<double> w(l);
  w[0] = phi_values[0];
  w[1] = slope[0];
  for (std::size_t i = 2; i < l; ++i) w[i] = slope[i - 1] - slope[i - 2];
  return w;
}

double replicate(std::span<const double> strikes, std::span<const double> weights, double s) {
  double v = weights[0] + weights[1] * (s - strikes[0]);
  for (std::size_t i = 2; i < weights.size(); ++i)
    if (s > strikes[i - 1]) v += weights[i] * (s - strikes[i - 1]);
  return v;
}

double call_on_discrete(const DiscreteMarginal& p, double strike) { return p.call(strike); }

double HedgePortfolio::cash() const {
  return wx[0] + wy[0] - wx[1] * strikes_x[0] - wy[1] * strikes_y[0];
}
double HedgePortfolio::psi0(double x) const { return replicate(strikes_x, wx, x); }
double HedgePortfolio::psi1(double y) const { return replicate(strikes_y, wy, y); }
double HedgePortfolio::delta(double x) const { return basis.combine(wb, x); }
double HedgePortfolio::payoff(double x, double y) const {
  return psi0(x) + psi1(y) + delta(x) * (y - x);
}

double evaluate_portfolio(const HedgePortfolio& port, double x, double y) {
  return port.payoff(x, y);
}

std::vector<double> prepare_strikes(std::span<const double> observed, const Grid& grid) {
  if (grid.size() < 2) throw DomainError("strike preparation needs at least two grid nodes");
  std::vector<double> k{grid.nodes.front()};
  for (double s : observed)
    if (s > grid.nodes.front() && s < grid.nodes.back()) k.push_back(s);
  std::sort(k.begin() + 1, k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  k.push_back(grid.nodes.back());
  return k;
}

namespace {

void check_request(const DualRequest& req) {
  if (!(req.kf > 0.0)) throw DomainError("forward-start strike must be positive");
  if (req.px.grid.size() == 0 || req.py.grid.size() == 0) throw DomainError("empty marginal");
  if (req.form == DualForm::NodeValues) return;
  if (req.strikes_x.size() < 2 || req.strikes_y.size() < 2)
    throw DomainError("each maturity needs at least two strikes");
  if (req.strikes_x.front() > req.px.grid.nodes.front() + 1e-14 ||
      req.strikes_y.front() > req.py.grid.nodes.front() + 1e-14)
    throw DomainError("first strike must not exceed the first grid node (use prepare_strikes)");
  if (req.basis.size() == 0) throw DomainError("empty delta basis");
}

struct Layout {
  int v, w1x, cx0, ncx, w1y, cy0, ncy, b0, nb, cols;
};

Layout layout(const DualRequest& req) {
  Layout l{};
  l.v = 0;
  l.w1x = 1;
  l.cx0 = 2;
  l.ncx = static_cast<int>(req.strikes_x.size()) - 2;
  l.w1y = l.cx0 + l.ncx;
  l.cy0 = l.w1y + 1;
  l.ncy = static_cast<int>(req.strikes_y.size()) - 2;
  l.b0 = l.cy0 + l.ncy;
  l.nb = static_cast<int>(req.basis.size());
  l.cols = l.b0 + l.nb;
  return l;
}

lp::LinearProgram build_node_dual(const DualRequest& req) {
  const auto& x = req.px.grid.nodes;
  const auto& y = req.py.grid.nodes;
  const int m = static_cast<int>(x.size()), n = static_cast<int>(y.size());
  const bool super = req.sense == BoundSense::Upper;
  lp::LinearProgram prog;
  prog.sense = super ? lp::Sense::Minimize : lp::Sense::Maximize;
  for (int i = 0; i < m; ++i) prog.add_variable(req.px.weights[i], true);
  for (int j = 0; j < n; ++j) prog.add_variable(req.py.weights[j], true);
  for (int i = 0; i < m; ++i) prog.add_variable(0.0, true);
  const auto rs = super ? lp::RowSense::GreaterEqual : lp::RowSense::LessEqual;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const int r = prog.add_row(rs, std::abs(y[j] - req.kf * x[i]));
      prog.add_entry(r, i, 1.0);
      prog.add_entry(r, m + j, 1.0);
      prog.add_entry(r, m + n + i, y[j] - x[i]);
    }
  return prog;
}

}  // namespace

lp::LinearProgram build_dual(const DualRequest& req) {
  check_request(req);
  if (req.form == DualForm::NodeValues) return build_node_dual(req);
  const auto& x = req.px.grid.nodes;
  const auto& y = req.py.grid.nodes;
  const auto l = layout(req);
  const bool super = req.sense == BoundSense::Upper;

  lp::LinearProgram prog;
  prog.sense = super ? lp::Sense::Minimize : lp::Sense::Maximize;
  std::vector<double> cost(l.cols, 0.0);
  cost[l.v] = req.px.mass();
  cost[l.w1x] = req.px.mean();
  for (int k = 0; k < l.ncx; ++k) cost[l.cx0 + k] = call_on_discrete(req.px, req.strikes_x[k + 1]);
  cost[l.w1y] = req.py.mean();
  for (int k = 0; k < l.ncy; ++k) cost[l.cy0 + k] = call_on_discrete(req.py, req.strikes_y[k + 1]);
  for (double c : cost) prog.add_variable(c, true);

  // Row-invariant pieces: the x-part depends on i only, the y-part on j only.
  const auto rs = super ? lp::RowSense::GreaterEqual : lp::RowSense::LessEqual;
  std::vector<double> phi(l.nb);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int b = 0; b < l.nb; ++b) phi[b] = req.basis.eval(b, x[i]);
    for (std::size_t j = 0; j < y.size(); ++j) {
      const int r = prog.add_row(rs, std::abs(y[j] - req.kf * x[i]));
      prog.add_entry(r, l.v, 1.0);
      prog.add_entry(r, l.w1x, x[i]);
      for (int k = 0; k < l.ncx; ++k)
        if (x[i] > req.strikes_x[k + 1]) prog.add_entry(r, l.cx0 + k, x[i] - req.strikes_x[k + 1]);
      prog.add_entry(r, l.w1y, y[j]);
      for (int k = 0; k < l.ncy; ++k)
        if (y[j] > req.strikes_y[k + 1]) prog.add_entry(r, l.cy0 + k, y[j] - req.strikes_y[k + 1]);
      for (int b = 0; b < l.nb; ++b)
        if (phi[b] != 0.0) prog.add_entry(r, l.b0 + b, phi[b] * (y[j] - x[i]));
    }
  }
  return prog;
}

DualResult solve_dual(const DualRequest& req, const lp::SolveOptions& opts) {
  const auto prog = build_dual(req);
  const auto sol = lp::solve_lp(prog, opts);
  if (sol.status != lp::Status::Optimal)
    throw NumericalError(std::string("dual hedging LP: ") + lp::to_string(sol.status) + " (" +
                         sol.diagnostics + ")");
  DualResult out;
  out.value = sol.objective_value;
  out.iterations = sol.iterations;
  auto& p = out.portfolio;
  const auto& z = sol.primal;

  if (req.form == DualForm::NodeValues) {
    const auto& x = req.px.grid.nodes;
    const auto& y = req.py.grid.nodes;
    const std::size_t m = x.size(), n = y.size();
    const std::vector<double> psi0(z.begin(), z.begin() + m);
    const std::vector<double> psi1(z.begin() + m, z.begin() + m + n);
    p.wb.assign(z.begin() + m + n, z.begin() + 2 * m + n);
    p.basis = BasisSpec::hats(x);
    // A single node has no slope to replicate: hold the value flat.
    auto weights = [](const std::vector<double>& nodes, const std::vector<double>& vals,
                      std::vector<double>& k) {
      if (nodes.size() >= 2) {
        k = nodes;
        return replication_weights(nodes, vals);
      }
      k = {nodes[0], nodes[0] + 1.0};
      return std::vector<double>{vals[0], 0.0};
    };
    p.wx = weights(x, psi0, p.strikes_x);
    p.wy = weights(y, psi1, p.strikes_y);
    return out;
  }

  const auto l = layout(req);
  p.strikes_x = req.strikes_x;
  p.strikes_y = req.strikes_y;
  p.basis = req.basis;
  // Gauge: psi1 carries no cash, psi0 carries all of v.
  p.wx = {z[l.v] + z[l.w1x] * req.strikes_x[0], z[l.w1x]};
  for (int k = 0; k < l.ncx; ++k) p.wx.push_back(z[l.cx0 + k]);
  p.wy = {z[l.w1y] * req.strikes_y[0], z[l.w1y]};
  for (int k = 0; k < l.ncy; ++k) p.wy.push_back(z[l.cy0 + k]);
  p.wb.assign(z.begin() + l.b0, z.begin() + l.b0 + l.nb);
  return out;
}

namespace {

std::vector<double> refine_nodes(const std::vector<double>& nodes, int refine) {
  if (refine <= 1 || nodes.size() < 2) return nodes;
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    for (int k = 0; k < refine; ++k) out.push_back(nodes[i] + (nodes[i + 1] - nodes[i]) * k / refine);
  out.push_back(nodes.back());
  return out;
}

struct Scan {
  double worst = -std::numeric_limits<double>::infinity();
  double ax = 0.0, ay = 0.0;
  std::size_t binding = 0;
};

Scan scan(const HedgePortfolio& port, const std::vector<double>& x, const std::vector<double>& y,
          double kf, BoundSense sense, double binding_tol) {
  std::vector<double> p0(x.size()), d(x.size()), p1(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    p0[i] = port.psi0(x[i]);
    d[i] = port.delta(x[i]);
  }
  for (std::size_t j = 0; j < y.size(); ++j) p1[j] = port.psi1(y[j]);
  Scan s;
  const double sign = sense == BoundSense::Upper ? 1.0 : -1.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double slack = sign * (p0[i] + p1[j] + d[i] * (y[j] - x[i]) - std::abs(y[j] - kf * x[i]));
      if (-slack > s.worst) {
        s.worst = -slack;
        s.ax = x[i];
        s.ay = y[j];
      }
      if (std::abs(slack) < binding_tol) ++s.binding;
    }
  return s;
}

}  // namespace

HedgeReport verify_hedge(const HedgePortfolio& port, const Grid& x, const Grid& y, double kf,
                         BoundSense sense, int refine, double binding_tol) {
  HedgeReport r;
  const auto base = scan(port, x.nodes, y.nodes, kf, sense, binding_tol);
  r.max_violation = base.worst;
  r.arg_x = base.ax;
  r.arg_y = base.ay;
  r.binding = base.binding;
  r.refined_violation =
      scan(port, refine_nodes(x.nodes, refine), refine_nodes(y.nodes, refine), kf, sense, binding_tol).worst;
  return r;
}

void write_portfolio_json(const std::filesystem::path& path, const HedgePortfolio& port) {
  nlohmann::json j;
  j["cash"] = port.cash();
  j["strikes_x"] = port.strikes_x;
  j["strikes_y"] = port.strikes_y;
  j["weights_x"] = port.wx;
  j["weights_y"] = port.wy;
  j["delta"] = {{"basis", port.basis.kind == BasisSpec::Kind::Monomial ? "monomial" : "hats"},
                {"degree", port.basis.degree},
                {"knots", port.basis.knots},
                {"coefficients", port.wb}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

HedgePortfolio read_portfolio_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  HedgePortfolio p;
  p.strikes_x = j.at("strikes_x").get<std::vector<double>>();
  p.strikes_y = j.at("strikes_y").get<std::vector<double>>();
  p.wx = j.at("weights_x").get<std::vector<double>>();
  p.wy = j.at("weights_y").get<std::vector<double>>();
  const auto& d = j.at("delta");
  if (d.at("basis") == "hats") p.basis = BasisSpec::hats(d.at("knots").get<std::vector<double>>());
  else p.basis = BasisSpec::monomials(d.at("degree").get<int>());
  p.wb = d.at("coefficients").get<std::vector<double>>();
  return p;
}

void write_report_csv(const std::filesystem::path& path, const HedgeReport& r) {
  csv::write(path, {"max_violation", "arg_x", "arg_y", "binding", "refined_violation"},
             {{r.max_violation, r.arg_x, r.arg_y, static_cast<double>(r.binding), r.refined_violation}});
}

}  // namespace fsb
