#include "fsb/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"

namespace fsb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Re-throws with the stage name in front, keeping the error class.
template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DispersionViolation& e) {
    throw DispersionViolation(stage + ": " + e.what());
  } catch (const ArbitrageError& e) {
    throw ArbitrageError(stage + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(stage + ": " + e.what());
  } catch (const QuadratureError& e) {
    throw QuadratureError(stage + ": " + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(stage + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(stage + ": " + e.what());
  }
}

int worker_count(std::size_t jobs) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FSB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  return std::clamp(n, 1, static_cast<int>(std::max<std::size_t>(jobs, 1)));
}

// Runs body(k) for k < count on a small pool; the first failure (in index
// order) is rethrown after every worker has stopped.
template <class F>
void parallel_for(std::size_t count, F body) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n = worker_count(count);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double vol_of(double price, double tau, double kf) {
  if (!std::isfinite(price)) return kNaN;
  // Solver noise can leave an intrinsic-valued bound a hair below intrinsic.
  const double intrinsic = std::abs(1.0 - kf);
  if (price < intrinsic && price > intrinsic - 1e-6) price = intrinsic;
  try {
    return forward_vol_from_straddle(price, tau, kf).vol;
  } catch (const DomainError&) {
    return kNaN;
  }
}

lp::SolveOptions solve_options(const RunConfig& cfg) {
  lp::SolveOptions o;
  o.feas_tol = cfg.feas_tol;
  o.gap_tol = cfg.gap_tol;
  return o;
}

DualRequest dual_request(const RunConfig& cfg, const Marginals& mg, double kf, BoundSense sense) {
  DualRequest q;
  q.kf = kf;
  q.sense = sense;
  q.px = mg.px;
  q.py = mg.py;
  if (mg.px.grid.size() < 2 || mg.py.grid.size() < 2) {
    // No call can be struck between nodes; the exact dual covers point masses.
    q.form = DualForm::NodeValues;
    return q;
  }
  q.strikes_x = prepare_strikes(cfg.kx, mg.px.grid);
  q.strikes_y = prepare_strikes(cfg.ky, mg.py.grid);
  q.basis = cfg.hat_basis ? BasisSpec::hats(mg.px.grid.nodes) : cfg.basis;
  return q;
}

std::string kf_label(double kf) { return csv::format_number(kf); }

}  // namespace

double ModelSpec::atm_vol() const {
  return kind == ModelKind::BlackScholes ? bs.sigma : std::sqrt(heston.v0);
}

MarginalLaw ModelSpec::law(double horizon) const {
  return kind == ModelKind::BlackScholes ? make_bs_law(bs, horizon) : make_heston_law(heston, horizon);
}

double ModelSpec::forward_straddle(double t, double tau, double kf) const {
  // E|Y - kf X| = 2 E(Y - kf X)_+ - (1 - kf)
  const double call = kind == ModelKind::BlackScholes ? bs_call_price(tau, kf, bs.sigma)
                                                      : heston_forward_call_price(t, tau, kf, heston);
  return 2.0 * call - (1.0 - kf);
}

std::vector<double> default_observed_strikes() {
  std::vector<double> ks;
  for (int i = 3; i <= 20; ++i) ks.push_back(i / 10.0);
  return ks;
}

void RunConfig::validate() const {
  if (!(t > 0.0) || !(tau > 0.0)) throw DomainError("config: t and tau must be positive");
  auto positive = [](const std::vector<double>& v, const char* what) {
    if (v.empty()) throw DomainError(std::string("config: ") + what + " is empty");
    for (double k : v)
      if (!(k > 0.0)) throw DomainError(std::string("config: ") + what + " must be positive");
  };
  positive(kf, "kf");
  positive(kx, "observed_strikes.x");
  positive(ky, "observed_strikes.y");
  for (const GridSpec* g : {&grid, &plan_grid}) {
    if (g->m < 1 || g->n < 1) throw DomainError("config: grid sizes must be positive");
    if (!(g->x_domain.hi > g->x_domain.lo) || !(g->y_domain.hi > g->y_domain.lo))
      throw DomainError("config: empty grid domain");
  }
  for (int p : table_points)
    if (p < 1) throw DomainError("config: table_points must be positive");
  for (int p : hn_meshes)
    if (p < 1) throw DomainError("config: hn.mesh_sizes must be positive");
  if (model.kind == ModelKind::BlackScholes)
    model.bs.validate();
  else
    model.heston.validate();
}

namespace {

using nlohmann::json;

GridSpec grid_from_json(const json& j, GridSpec g) {
  if (j.contains("scheme")) g.scheme = parse_grid_scheme(j.at("scheme").get<std::string>());
  if (j.contains("points")) g.m = g.n = j.at("points").get<int>();
  g.m = j.value("m", g.m);
  g.n = j.value("n", g.n);
  auto dom = [&](const char* key, Domain d) {
    if (!j.contains(key)) return d;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw DomainError(std::string("config: ") + key + " needs [lo, hi]");
    return Domain{v[0], v[1]};
  };
  g.x_domain = dom("x_domain", g.x_domain);
  g.y_domain = dom("y_domain", g.y_domain);
  return g;
}

json grid_to_json(const GridSpec& g) {
  return {{"scheme", to_string(g.scheme)},
          {"m", g.m},
          {"n", g.n},
          {"x_domain", {g.x_domain.lo, g.x_domain.hi}},
          {"y_domain", {g.y_domain.lo, g.y_domain.hi}}};
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      const std::string kind = m.value("kind", std::string("black-scholes"));
      if (kind == "black-scholes" || kind == "bs") {
        c.model.kind = ModelKind::BlackScholes;
        c.model.bs.sigma = m.value("sigma", c.model.bs.sigma);
      } else if (kind == "heston") {
        c.model.kind = ModelKind::Heston;
        auto& h = c.model.heston;
        h.v0 = m.value("v0", h.v0);
        h.kappa = m.value("kappa", h.kappa);
        h.theta = m.value("theta", h.theta);
        h.xi_vol = m.value("xi", h.xi_vol);
        h.rho = m.value("rho", h.rho);
      } else {
        throw DomainError("config: unknown model kind '" + kind + "'");
      }
    }
    c.t = j.value("t", c.t);
    c.tau = j.value("tau", c.tau);
    c.kf = j.value("kf", c.kf);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"), c.grid);
    if (j.contains("observed_strikes")) {
      const auto& o = j.at("observed_strikes");
      if (o.is_array()) {
        c.kx = c.ky = o.get<std::vector<double>>();
      } else {
        c.kx = o.value("x", c.kx);
        c.ky = o.value("y", c.ky);
      }
    }
    if (j.contains("basis")) {
      const auto& b = j.at("basis");
      const std::string kind = b.value("kind", std::string("monomial"));
      if (kind == "monomial")
        c.basis = BasisSpec::monomials(b.value("degree", 2));
      else if (kind == "hats")
        c.hat_basis = true;
      else
        throw DomainError("config: unknown basis kind '" + kind + "'");
    }
    if (j.contains("solve")) {
      c.solve_dual = j.at("solve").value("dual", c.solve_dual);
      c.solve_primal = j.at("solve").value("primal", c.solve_primal);
    }
    if (j.contains("tolerances")) {
      c.feas_tol = j.at("tolerances").value("feasibility", c.feas_tol);
      c.gap_tol = j.at("tolerances").value("gap", c.gap_tol);
    }
    c.table_points = j.value("table_points", c.table_points);
    if (j.contains("plans")) {
      const auto& p = j.at("plans");
      c.plan_kf = p.value("kf", c.plan_kf);
      if (p.contains("grid")) c.plan_grid = grid_from_json(p.at("grid"), c.plan_grid);
    }
    if (j.contains("hn")) {
      c.hn_meshes = j.at("hn").value("mesh_sizes", c.hn_meshes);
      c.hn_eval_points = j.at("hn").value("eval_points", c.hn_eval_points);
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json model;
  if (c.model.kind == ModelKind::BlackScholes) {
    model = {{"kind", "black-scholes"}, {"sigma", c.model.bs.sigma}};
  } else {
    const auto& h = c.model.heston;
    model = {{"kind", "heston"}, {"v0", h.v0}, {"kappa", h.kappa}, {"theta", h.theta}, {"xi", h.xi_vol}, {"rho", h.rho}};
  }
  json basis = c.hat_basis ? json{{"kind", "hats"}} : json{{"kind", "monomial"}, {"degree", c.basis.degree}};
  const json j = {{"name", c.name},
                  {"model", model},
                  {"t", c.t},
                  {"tau", c.tau},
                  {"kf", c.kf},
                  {"grid", grid_to_json(c.grid)},
                  {"observed_strikes", {{"x", c.kx}, {"y", c.ky}}},
                  {"basis", basis},
                  {"solve", {{"dual", c.solve_dual}, {"primal", c.solve_primal}}},
                  {"tolerances", {{"feasibility", c.feas_tol}, {"gap", c.gap_tol}}},
                  {"table_points", c.table_points},
                  {"plans", {{"kf", c.plan_kf}, {"grid", grid_to_json(c.plan_grid)}}},
                  {"hn", {{"mesh_sizes", c.hn_meshes}, {"eval_points", c.hn_eval_points}}},
                  {"out_dir", c.out_dir.string()}};
  return j.dump(2);
}

Marginals build_marginals(const RunConfig& cfg, const GridSpec& grid) {
  Marginals mg;
  const double vol = cfg.model.atm_vol(), t1 = cfg.t, t2 = cfg.t + cfg.tau;
  staged("discretize X", [&] {
    const Grid gx = build_grid(grid.scheme, grid.m, grid.x_domain, vol, t1);
    mg.px = discretize_law(cfg.model.law(t1), gx, cfg.kx);
  });
  staged("discretize Y", [&] {
    const Grid gy = build_grid(grid.scheme, grid.n, grid.y_domain, vol, t2);
    mg.py = discretize_law(cfg.model.law(t2), gy, cfg.ky);
  });
  mg.order = check_convex_order(mg.px, mg.py, 1e-8);
  if (!mg.order.ordered)
    throw DomainError("convex order: discretised marginals are not in convex order (min call gap " +
                      csv::format_number(mg.order.min_g) + ")");
  return mg;
}

bool BoundRow::ordered(double tol) const {
  double prev = -std::numeric_limits<double>::infinity();
  for (double v : {sub, lower, model, upper, super}) {
    if (!std::isfinite(v)) continue;
    if (v < prev - tol) return false;
    prev = std::max(prev, v);
  }
  return true;
}

const BoundRow& BoundTable::at(double kf) const {
  for (const auto& r : rows)
    if (std::abs(r.kf - kf) < 1e-12) return r;
  throw std::out_of_range("no row for kf = " + kf_label(kf));
}

BoundTable run_bounds(const RunConfig& cfg) {
  cfg.validate();
  const Marginals mg = build_marginals(cfg, cfg.grid);
  const auto opts = solve_options(cfg);
  BoundTable table;
  table.name = cfg.name;
  table.m = cfg.grid.m;
  table.n = cfg.grid.n;
  table.scheme = cfg.grid.scheme;
  table.rows.resize(cfg.kf.size());
  parallel_for(cfg.kf.size(), [&](std::size_t k) {
    BoundRow& r = table.rows[k];
    const double kf = r.kf = cfg.kf[k];
    const std::string at = " at kf " + kf_label(kf);
    r.sub = r.lower = r.upper = r.super = kNaN;
    if (cfg.solve_dual) {
      r.sub = staged("sub-hedge" + at, [&] { return solve_dual(dual_request(cfg, mg, kf, BoundSense::Lower), opts).value; });
      r.super = staged("super-hedge" + at, [&] { return solve_dual(dual_request(cfg, mg, kf, BoundSense::Upper), opts).value; });
    }
    if (cfg.solve_primal) {
      r.lower = staged("primal lower" + at, [&] { return solve_bound({kf, BoundSense::Lower, mg.px, mg.py}, opts).value; });
      r.upper = staged("primal upper" + at, [&] { return solve_bound({kf, BoundSense::Upper, mg.px, mg.py}, opts).value; });
    }
    r.model = staged("model price" + at, [&] { return cfg.model.forward_straddle(cfg.t, cfg.tau, kf); });
    r.vol_sub = vol_of(r.sub, cfg.tau, kf);
    r.vol_lower = vol_of(r.lower, cfg.tau, kf);
    r.vol_model = vol_of(r.model, cfg.tau, kf);
    r.vol_upper = vol_of(r.upper, cfg.tau, kf);
    r.vol_super = vol_of(r.super, cfg.tau, kf);
  });
  return table;
}

void write_bound_table_csv(const std::filesystem::path& path, const BoundTable& t) {
  std::vector<csv::Row> rows;
  for (const auto& r : t.rows)
    rows.push_back({r.kf, r.sub, r.lower, r.model, r.upper, r.super, r.vol_sub, r.vol_lower, r.vol_model,
                    r.vol_upper, r.vol_super});
  csv::write(path,
             {"kf", "sub_hedge", "primal_lower", "model_price", "primal_upper", "super_hedge", "fwd_vol_sub",
              "fwd_vol_lower", "fwd_vol_model", "fwd_vol_upper", "fwd_vol_super"},
             rows);
}

GoldenTables run_tables(const RunConfig& cfg) {
  cfg.validate();
  GoldenTables g;
  g.points = cfg.table_points;
  g.kf = cfg.kf;
  g.sub.assign(cfg.kf.size(), std::vector<double>(g.points.size(), kNaN));
  g.super = g.sub;
  const auto opts = solve_options(cfg);
  for (std::size_t s = 0; s < g.points.size(); ++s) {
    GridSpec spec = cfg.grid;
    spec.m = spec.n = g.points[s];
    const Marginals mg = staged(std::to_string(g.points[s]) + " points", [&] { return build_marginals(cfg, spec); });
    parallel_for(cfg.kf.size(), [&](std::size_t k) {
      const std::string at = " at kf " + kf_label(cfg.kf[k]) + ", " + std::to_string(g.points[s]) + " points";
      g.sub[k][s] = staged("sub-hedge" + at, [&] {
        return solve_dual(dual_request(cfg, mg, cfg.kf[k], BoundSense::Lower), opts).value;
      });
      g.super[k][s] = staged("super-hedge" + at, [&] {
        return solve_dual(dual_request(cfg, mg, cfg.kf[k], BoundSense::Upper), opts).value;
      });
    });
  }
  return g;
}

void write_golden_csv(const std::filesystem::path& path, const GoldenTables& g, bool super) {
  std::vector<std::string> header{"kf"};
  for (int p : g.points) header.push_back("n" + std::to_string(p));
  std::vector<csv::Row> rows;
  for (std::size_t k = 0; k < g.kf.size(); ++k) {
    csv::Row r{g.kf[k]};
    const auto& vals = super ? g.super[k] : g.sub[k];
    r.insert(r.end(), vals.begin(), vals.end());
    rows.push_back(std::move(r));
  }
  csv::write(path, header, rows);
}

HKRun run_hk(const RunConfig& cfg, const HKOptions& opts) {
  cfg.validate();
  HKRun r;
  r.result = staged("hobson-klimmek",
                    [&] { return hk_lower_bound(cfg.model.law(cfg.t), cfg.model.law(cfg.t + cfg.tau), opts); });
  r.value = r.result.value;
  r.fwd_vol = r.value > 0.0 ? vol_of(r.value, cfg.tau, 1.0) : 0.0;
  return r;
}

std::vector<PlanRun> run_plans(const RunConfig& cfg) {
  cfg.validate();
  const Marginals mg = build_marginals(cfg, cfg.plan_grid);
  const auto opts = solve_options(cfg);
  std::vector<PlanRun> out(2 * cfg.plan_kf.size());
  parallel_for(out.size(), [&](std::size_t k) {
    PlanRun& p = out[k];
    p.kf = cfg.plan_kf[k / 2];
    p.sense = k % 2 == 0 ? BoundSense::Lower : BoundSense::Upper;
    const std::string label = std::string(to_string(p.sense)) + " plan at kf " + kf_label(p.kf);
    const BoundResult b = staged(label, [&] { return solve_bound({p.kf, p.sense, mg.px, mg.py}, opts); });
    const PlanDecomposition d = decompose_plan(b.plan);
    p.value = b.value;
    p.mass_in_place = d.total_in_place();
    p.spearman_lower = d.map_spearman(true);
    p.spearman_upper = d.map_spearman(false);
    p.decomposition_csv = cfg.out_dir / ("plan_" + std::string(to_string(p.sense)) + "_" + kf_label(p.kf) + ".csv");
    write_decomposition_csv(p.decomposition_csv, d);
  });
  return out;
}

HNRun run_hn(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.model.kind != ModelKind::BlackScholes) throw DomainError("hn: the closed form needs the Black-Scholes model");
  const MarginalLaw mu = cfg.model.law(cfg.t), nu = cfg.model.law(cfg.t + cfg.tau);
  HNRun r;
  r.calibration = staged("hn calibration", [&] {
    return calibrate_hn(mu, nu, build_grid(cfg.grid.scheme, cfg.grid.m, cfg.grid.x_domain, cfg.model.atm_vol(), cfg.t));
  });
  ConvergenceConfig cc;
  cc.mu = mu;
  cc.nu = nu;
  cc.mesh_sizes = cfg.hn_meshes;
  cc.domain = cfg.grid.x_domain;
  cc.scheme = cfg.grid.scheme;
  cc.strikes = cfg.kx;
  cc.eval_points = cfg.hn_eval_points;
  r.rows = staged("hn convergence", [&] { return convergence_study(cc, r.calibration); });
  return r;
}

}  // namespace fsb
