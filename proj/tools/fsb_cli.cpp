// fsb: forward-start straddle bounds from the command line.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/pipeline.hpp"

namespace {

using namespace fsb;

constexpr int kExitDomain = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitUsage = 64;

struct Flags {
  std::string config;
  std::string out;
  std::optional<int> points;
  std::optional<std::string> grid;
  std::vector<double> strikes;
};

void add_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  cmd.add_option("--out", f.out, "output directory (overrides out_dir)");
  cmd.add_option("--points", f.points, "grid size for both maturities")->check(CLI::PositiveNumber);
  cmd.add_option("--grid", f.grid, "grid scheme")
      ->check(CLI::IsMember({"uniform", "legendre", "binomial", "gauss-hermite"}));
  cmd.add_option("--strike", f.strikes, "forward-start strikes, comma separated")->delimiter(',');
}

RunConfig resolve(const Flags& f) {
  RunConfig c = load_config(f.config);
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.points) {
    c.grid.m = c.grid.n = *f.points;
    c.table_points = {*f.points};
  }
  if (f.grid) c.grid.scheme = parse_grid_scheme(*f.grid);
  if (!f.strikes.empty()) c.kf = c.plan_kf = f.strikes;
  c.validate();
  return c;
}

std::string pct(double v) {
  if (!std::isfinite(v)) return "   n/a ";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.3f%%", 100.0 * v);
  return buf;
}

std::string num(double v) {
  if (!std::isfinite(v)) return "    n/a ";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%8.5f", v);
  return buf;
}

int cmd_discretize(const RunConfig& c) {
  const Marginals mg = build_marginals(c, c.grid);
  write_marginal(c.out_dir / "marginal_x.csv", mg.px);
  write_marginal(c.out_dir / "marginal_y.csv", mg.py);
  std::cout << "X: " << mg.px.grid.size() << " nodes, mass " << num(mg.px.mass()) << ", mean " << num(mg.px.mean())
            << "\nY: " << mg.py.grid.size() << " nodes, mass " << num(mg.py.mass()) << ", mean "
            << num(mg.py.mean()) << "\nconvex order: " << (mg.order.ordered ? "yes" : "no")
            << " (min call gap " << mg.order.min_g << ")\n";
  return 0;
}

int cmd_bounds(const RunConfig& c) {
  const BoundTable t = run_bounds(c);
  write_bound_table_csv(c.out_dir / ("bounds_" + c.name + ".csv"), t);
  std::cout << c.name << ": " << t.m << " x " << t.n << " " << to_string(t.scheme) << " nodes\n"
            << "   kf       sub    lower    model    upper    super    vol sub  vol low  vol mod   vol up  vol sup\n";
  bool ok = true;
  for (const auto& r : t.rows) {
    char kf[16];
    std::snprintf(kf, sizeof kf, "%5.2f", r.kf);
    std::cout << kf << " " << num(r.sub) << " " << num(r.lower) << " " << num(r.model) << " " << num(r.upper)
              << " " << num(r.super) << "  " << pct(r.vol_sub) << " " << pct(r.vol_lower) << " "
              << pct(r.vol_model) << " " << pct(r.vol_upper) << " " << pct(r.vol_super) << "\n";
    if (!r.ordered()) {
      std::cerr << "ordering sub <= lower <= model <= upper <= super broken at kf " << r.kf << "\n";
      ok = false;
    }
  }
  return ok ? 0 : kExitNumerical;
}

int cmd_hk(const RunConfig& c) {
  const HKRun r = run_hk(c);
  write_hk_plan_csv(c.out_dir / "hk_plan.csv", r.result.plan);
  std::cout << "support [a, b] = [" << num(r.result.split.a) << ", " << num(r.result.split.b) << "]\n"
            << "ATM lower bound " << num(r.value) << "  forward vol " << pct(r.fwd_vol) << "\n";
  return 0;
}

int cmd_hn(const RunConfig& c) {
  const HNRun r = run_hn(c);
  write_convergence_csv(c.out_dir / "hn_convergence.csv", r.rows);
  const auto& p = r.calibration.portfolio;
  std::cout << "A = " << num(p.A) << ", xi = " << num(p.xi) << ", expected value " << num(r.calibration.expected_value)
            << ", min slack " << r.calibration.min_slack << "\n     n      d_n    eps_n  log ratio  dual value\n";
  for (const auto& row : r.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%6d %8.5f %8.5f %10.4f %11.6f\n", row.n, row.d_n, row.eps_n, row.log_ratio,
                  row.dual_value);
    std::cout << buf;
  }
  return 0;
}

int cmd_plans(const RunConfig& c) {
  for (const auto& p : run_plans(c)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "kf %5.2f %-5s value %8.5f  in place %7.4f  rank corr lower %6.3f upper %6.3f  ",
                  p.kf, to_string(p.sense), p.value, p.mass_in_place, p.spearman_lower, p.spearman_upper);
    std::cout << buf << p.decomposition_csv.string() << "\n";
  }
  return 0;
}

int cmd_tables(const RunConfig& c) {
  const GoldenTables g = run_tables(c);
  const std::string scheme = to_string(c.grid.scheme);
  write_golden_csv(c.out_dir / ("tables_sub_" + scheme + ".csv"), g, false);
  write_golden_csv(c.out_dir / ("tables_super_" + scheme + ".csv"), g, true);
  for (bool super : {false, true}) {
    std::cout << (super ? "super-hedge" : "sub-hedge") << " (" << scheme << ")\n   kf";
    for (int p : g.points) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %8d", p);
      std::cout << buf;
    }
    std::cout << "\n";
    for (std::size_t k = 0; k < g.kf.size(); ++k) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%5.2f", g.kf[k]);
      std::cout << buf;
      for (double v : super ? g.super[k] : g.sub[k]) std::cout << " " << num(v);
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-free bounds for forward-start straddles"};
  app.require_subcommand(1);
  Flags flags;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Sub subs[] = {
      {"discretize", "discretise both maturities and check convex order", cmd_discretize},
      {"bounds", "sub/super-hedges, transport bounds and forward vols per strike", cmd_bounds},
      {"hk", "ATM lower bound by the ODE route", cmd_hk},
      {"hn-converge", "closed-form ATM super-hedge and the dual convergence study", cmd_hn},
      {"plans", "optimal transport plans and their decompositions", cmd_plans},
      {"tables", "dual values across grid sizes", cmd_tables},
  };
  for (const auto& s : subs) add_flags(*app.add_subcommand(s.name, s.help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const RunConfig cfg = resolve(flags);
    for (const auto& s : subs)
      if (app.got_subcommand(s.name)) return s.run(cfg);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
