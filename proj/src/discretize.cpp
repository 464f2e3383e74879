#include "fsb/discretize.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fsb/csv.hpp"
#include "fsb/errors.hpp"
#include "fsb/lp.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

GridScheme parse_grid_scheme(const std::string& name) {
  if (name == "uniform") return GridScheme::Uniform;
  if (name == "legendre") return GridScheme::LegendreRoots;
  if (name == "binomial") return GridScheme::Binomial;
  if (name == "gauss-hermite") return GridScheme::GaussHermite;
  throw std::invalid_argument("unknown grid scheme '" + name + "'");
}

std::string to_string(GridScheme s) {
  switch (s) {
    case GridScheme::Uniform: return "uniform";
    case GridScheme::LegendreRoots: return "legendre";
    case GridScheme::Binomial: return "binomial";
    case GridScheme::GaussHermite: return "gauss-hermite";
  }
  return "?";
}

double Grid::mesh() const {
  double h = 0.0;
  for (std::size_t i = 1; i < nodes.size(); ++i) h = std::max(h, nodes[i] - nodes[i - 1]);
  return h;
}

Grid build_grid(GridScheme scheme, int m, Domain domain, std::optional<double> sigma_atm,
                std::optional<double> t) {
  if (m < 1) throw DomainError("grid needs at least one node");
  if (!(domain.lo >= 0.0) || !(domain.hi > domain.lo)) throw DomainError("invalid grid domain");
  Grid g;
  g.scheme = scheme;
  g.nodes.resize(m);
  const double lo = domain.lo, hi = domain.hi;
  switch (scheme) {
    case GridScheme::Uniform:
      for (int i = 0; i < m; ++i) g.nodes[i] = lo + (i + 1) * (hi - lo) / (m + 1.0);
      break;
    case GridScheme::LegendreRoots: {
      const auto rule = num::gauss_legendre(m);
      for (int i = 0; i < m; ++i) g.nodes[i] = lo + 0.5 * (hi - lo) * (rule.nodes[i] + 1.0);
      break;
    }
    case GridScheme::Binomial: {
      if (!sigma_atm || !t) throw DomainError("binomial grid needs sigma_atm and t");
      if (m < 2) throw DomainError("binomial grid needs m >= 2");
      const double delta = *t / (m - 1.0);
      const double jump = std::sqrt(std::expm1(delta * *sigma_atm * *sigma_atm));
      if (!(jump < 1.0)) throw DomainError("binomial grid degenerates: d = 1 - sqrt(e^{delta s^2} - 1) <= 0");
      const double lu = std::log1p(jump), ld = std::log1p(-jump);
      for (int i = 0; i < m; ++i) g.nodes[i] = std::exp(i * lu + (m - 1 - i) * ld);
      break;
    }
    case GridScheme::GaussHermite: {
      if (!sigma_atm || !t) throw DomainError("Gauss-Hermite grid needs sigma_atm and t");
      const auto rule = num::gauss_hermite(m);
      const double s = *sigma_atm * std::sqrt(*t);
      std::vector<double> z(m);
      for (int i = 0; i < m; ++i) z[i] = -0.5 * s * s + s * std::sqrt(2.0) * rule.nodes[i];
      // Compress in log space if the outer nodes leave the domain.
      const double zlo = lo > 0.0 ? std::log(lo) : -std::numeric_limits<double>::infinity();
      const double zhi = std::log(hi);
      const double mid = -0.5 * s * s;
      double shrink = 1.0;
      if (m > 1) {
        if (z.back() > zhi) shrink = std::min(shrink, (zhi - mid) / (z.back() - mid));
        if (z.front() < zlo) shrink = std::min(shrink, (mid - zlo) / (mid - z.front()));
      }
      for (int i = 0; i < m; ++i) g.nodes[i] = std::exp(mid + shrink * (z[i] - mid));
      break;
    }
  }
  for (int i = 0; i < m; ++i) {
    if (!(g.nodes[i] > 0.0) || !std::isfinite(g.nodes[i])) throw DomainError("grid node left (0, inf)");
    if (i > 0 && !(g.nodes[i] > g.nodes[i - 1])) throw DomainError("grid nodes not strictly increasing");
  }
  return g;
}

void PriceVector::validate(double tol) const {
  const std::size_t n = strikes.size();
  if (prices.size() != n) throw DomainError("strike and price vectors differ in length");
  auto fail = [](const std::string& what) { throw ArbitrageError(what); };
  for (std::size_t i = 0; i < n; ++i) {
    const double k = strikes[i], p = prices[i];
    if (i > 0 && !(k > strikes[i - 1])) fail("strikes must be strictly increasing");
    if (p > 1.0 + tol || p < std::max(0.0, 1.0 - k) - tol) {
      std::ostringstream os;
      os << "call price " << p << " at strike " << k << " violates max(0, 1 - K) <= P <= 1";
      fail(os.str());
    }
  }
  // Slopes, including the segment from (0, 1), must lie in [-1, 0] and increase.
  double prev_slope = -1.0;
  double k0 = 0.0, p0 = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double slope = (prices[i] - p0) / (strikes[i] - k0);
    if (slope > tol || slope < -1.0 - tol) {
      std::ostringstream os;
      os << "call slope " << slope << " before strike " << strikes[i] << " outside [-1, 0]";
      fail(os.str());
    }
    if (slope < prev_slope - tol) {
      std::ostringstream os;
      os << "butterfly at strike " << k0 << " is negative (slopes " << prev_slope << " then " << slope << ")";
      fail(os.str());
    }
    prev_slope = slope;
    k0 = strikes[i];
    p0 = prices[i];
  }
}

PriceVector prices_from_law(const MarginalLaw& law, std::span<const double> strikes) {
  PriceVector pv;
  pv.strikes.assign(strikes.begin(), strikes.end());
  pv.prices.reserve(strikes.size());
  for (double k : strikes) pv.prices.push_back(law.call_price(k));
  return pv;
}

double DiscreteMarginal::mass() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

double DiscreteMarginal::mean() const { return moment(1); }

double DiscreteMarginal::moment(int k) const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * std::pow(grid.nodes[i], k);
  return s;
}

double DiscreteMarginal::call(double strike) const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (grid.nodes[i] > strike) s += weights[i] * (grid.nodes[i] - strike);
  return s;
}

double DiscreteMarginal::cdf(double x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size() && grid.nodes[i] <= x; ++i) s += weights[i];
  return s;
}

void DiscreteMarginal::validate(double mass_tol, double mean_tol) const {
  if (weights.size() != grid.nodes.size()) throw DomainError("weights and nodes differ in length");
  for (double w : weights)
    if (!(w >= 0.0)) throw DomainError("negative or NaN weight in discrete marginal");
  if (std::abs(mass() - 1.0) > mass_tol) throw DomainError("discrete marginal does not have unit mass");
  if (std::abs(mean() - 1.0) > mean_tol) throw DomainError("discrete marginal does not have unit mean");
}

std::vector<double> prior_weights(const MarginalLaw& law, const Grid& grid, PriorMode mode) {
  const std::size_t m = grid.size();
  std::vector<double> q(m);
  if (mode == PriorMode::PointDensity) {
    for (std::size_t i = 0; i < m; ++i) q[i] = std::max(0.0, law.density(grid.nodes[i]));
  } else {
    double prev = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double f = law.cdf(grid.nodes[i]);
      q[i] = std::max(0.0, f - prev);
      prev = f;
    }
  }
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  const double h = grid.mesh();
  // A single node has no gap to probe the coverage with.
  const double covered =
      law.cdf && h > 0.0 ? law.cdf(grid.nodes.back() + h) - law.cdf(grid.nodes.front() - h) : 1.0;
  if (!(total > 0.0) || covered < 1e-14)
    throw DomainError("prior weights vanish: grid lies where the law has negligible mass");
  for (double& v : q) v /= total;
  return q;
}

namespace {

// Returns the most violated constraint description if no nonnegative weights
// reproduce the targets, using an LP with artificial slacks.
std::optional<std::string> phase_one(const Eigen::MatrixXd& feat, const Eigen::VectorXd& target,
                                     const std::vector<std::string>& names) {
  const int m = static_cast<int>(feat.rows()), r = static_cast<int>(feat.cols());
  lp::LinearProgram prog;
  for (int i = 0; i < m; ++i) prog.add_variable(0.0);
  std::vector<int> ap(r), an(r);
  for (int k = 0; k < r; ++k) {
    ap[k] = prog.add_variable(1.0);
    an[k] = prog.add_variable(1.0);
  }
  const int mass_row = prog.add_row(lp::RowSense::Equal, 1.0);
  for (int i = 0; i < m; ++i) prog.add_entry(mass_row, i, 1.0);
  for (int k = 0; k < r; ++k) {
    const int row = prog.add_row(lp::RowSense::Equal, target[k]);
    for (int i = 0; i < m; ++i) prog.add_entry(row, i, feat(i, k));
    prog.add_entry(row, ap[k], 1.0);
    prog.add_entry(row, an[k], -1.0);
  }
  lp::SolveOptions opts;
  opts.form = lp::SolveOptions::Form::Primal;
  const auto sol = lp::solve_lp(prog, opts);
  if (sol.status != lp::Status::Optimal) return "feasibility check failed: " + std::string(lp::to_string(sol.status));
  if (sol.objective_value <= 1e-7 * (1.0 + target.lpNorm<Eigen::Infinity>())) return std::nullopt;
  int worst = 0;
  double wv = -1.0;
  for (int k = 0; k < r; ++k) {
    const double v = sol.primal[ap[k]] + sol.primal[an[k]];
    if (v > wv) {
      wv = v;
      worst = k;
    }
  }
  std::ostringstream os;
  os << "no nonnegative weights reproduce the inputs; most violated constraint: " << names[worst]
     << " (gap " << wv << ")";
  return os.str();
}

}  // namespace

KLResult kl_project(std::span<const double> prior, const Grid& grid, const PriceVector& prices,
                    int l, std::span<const double> moment_targets) {
  const int m = static_cast<int>(grid.size());
  if (static_cast<int>(prior.size()) != m) throw DomainError("prior and grid differ in length");
  if (l < 0 || static_cast<int>(moment_targets.size()) != l)
    throw DomainError("moment targets must have length l");
  const int nk = static_cast<int>(prices.strikes.size());
  const int r = nk + l;

  Eigen::MatrixXd feat(m, r);
  Eigen::VectorXd target(r);
  std::vector<std::string> names;
  for (int k = 0; k < nk; ++k) {
    const double K = prices.strikes[k];
    for (int i = 0; i < m; ++i) feat(i, k) = std::max(grid.nodes[i] - K, 0.0);
    target[k] = prices.prices[k];
    names.push_back("call at strike " + csv::format_number(K));
  }
  for (int j = 1; j <= l; ++j) {
    for (int i = 0; i < m; ++i) feat(i, nk + j - 1) = std::pow(grid.nodes[i], j);
    target[nk + j - 1] = moment_targets[j - 1];
    names.push_back("moment " + std::to_string(j));
  }

  Eigen::VectorXd logq(m);
  for (int i = 0; i < m; ++i) {
    if (prior[i] < 0.0) throw DomainError("prior weights must be nonnegative");
    logq[i] = prior[i] > 0.0 ? std::log(prior[i]) : -std::numeric_limits<double>::infinity();
  }
  if (r > 0) {
    if (auto why = phase_one(feat, target, names)) throw ArbitrageError(*why);
  }

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(r), p(m);
  auto evaluate = [&](const Eigen::VectorXd& lam, Eigen::VectorXd& pw) {
    Eigen::VectorXd s = logq + feat * lam;
    const double smax = s.maxCoeff();
    pw = (s.array() - smax).exp();
    const double z = pw.sum();
    pw /= z;
    return smax + std::log(z) - lam.dot(target);
  };

  KLResult out;
  double phi = evaluate(lambda, p);
  Eigen::VectorXd grad = feat.transpose() * p - target;
  const double scale = 1.0 + target.lpNorm<Eigen::Infinity>();
  int it = 0;
  for (; it < 500 && r > 0; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-14 * scale) break;
    const Eigen::VectorXd mean = feat.transpose() * p;
    const Eigen::MatrixXd centred = feat.rowwise() - mean.transpose();
    Eigen::MatrixXd h = centred.transpose() * p.asDiagonal() * centred;
    h.diagonal().array() += 1e-14 * (1.0 + h.diagonal().maxCoeff());
    Eigen::VectorXd step = h.ldlt().solve(-grad);
    if (!step.allFinite() || step.dot(grad) >= 0.0) step = -grad;
    double alpha = 1.0;
    Eigen::VectorXd trial_p(m);
    double trial = evaluate(lambda + step, trial_p);
    int bt = 0;
    while (!(trial <= phi + 1e-4 * alpha * step.dot(grad)) && bt < 60) {
      alpha *= 0.5;
      trial = evaluate(lambda + alpha * step, trial_p);
      ++bt;
    }
    if (bt == 60) break;  // no further decrease representable
    lambda += alpha * step;
    p = trial_p;
    phi = trial;
    grad = feat.transpose() * p - target;
  }

  out.report.iterations = it;
  out.report.lambda_star.assign(lambda.data(), lambda.data() + r);
  out.report.constraint_residuals.assign(grad.data(), grad.data() + r);
  double kl = 0.0;
  for (int i = 0; i < m; ++i)
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - logq[i]);
  out.report.kl_value = kl;

  if (r > 0 && grad.lpNorm<Eigen::Infinity>() > 1e-8) {
    Eigen::Index worst;
    grad.cwiseAbs().maxCoeff(&worst);
    std::ostringstream os;
    os << "KL projection did not converge; worst residual " << grad[worst] << " on " << names[worst];
    throw ConvergenceError(os.str());
  }
  out.marginal.grid = grid;
  out.marginal.weights.assign(p.data(), p.data() + m);
  return out;
}

DiscreteMarginal explicit_weights(const PriceVector& prices, double x1, double x_last) {
  prices.validate();
  const int M = static_cast<int>(prices.strikes.size());
  if (M < 1) throw DomainError("explicit_weights needs at least one strike");
  const auto& K = prices.strikes;
  const auto& P = prices.prices;
  if (!(x1 < K[0]) || !(x1 >= 0.0)) throw DomainError("x1 must lie in [0, K_1)");
  const double km1 = M >= 2 ? K[M - 2] : x1;
  const double pm1 = M >= 2 ? P[M - 2] : 1.0 - x1;
  const double bound = (pm1 * K[M - 1] - P[M - 1] * km1) / (pm1 - P[M - 1]);
  if (x_last < bound * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << "x_last = " << x_last << " is below the admissible minimum " << bound;
    throw DomainError(os.str());
  }
  // Nodes z_0 = x1, z_1..z_M = strikes, z_{M+1} = x_last; prices at z_0..z_M.
  std::vector<double> z(M + 2), pz(M + 1), w(M + 2, 0.0);
  z[0] = x1;
  pz[0] = 1.0 - x1;
  for (int i = 0; i < M; ++i) {
    z[i + 1] = K[i];
    pz[i + 1] = P[i];
  }
  z[M + 1] = x_last;
  if (!(x_last > K[M - 1])) throw DomainError("x_last must exceed the largest strike");
  for (int i = M; i >= 0; --i) {
    double rest = pz[i];
    for (int j = i + 2; j <= M + 1; ++j) rest -= w[j] * (z[j] - z[i]);
    w[i + 1] = rest / (z[i + 1] - z[i]);
  }
  double tail = 0.0;
  for (int j = 1; j <= M + 1; ++j) tail += w[j];
  w[0] = 1.0 - tail;
  for (int j = 0; j <= M + 1; ++j) {
    if (w[j] < -1e-12) {
      std::ostringstream os;
      os << "negative weight " << w[j] << " at node " << z[j] << ": butterfly spread violated";
      throw ArbitrageError(os.str());
    }
    w[j] = std::max(w[j], 0.0);
  }
  DiscreteMarginal d;
  d.grid.scheme = GridScheme::Uniform;
  d.grid.nodes = std::move(z);
  d.weights = std::move(w);
  return d;
}

ConvexOrderReport check_convex_order(const DiscreteMarginal& px, const DiscreteMarginal& py, double tol) {
  ConvexOrderReport rep;
  std::vector<double> nodes{0.0};
  nodes.insert(nodes.end(), px.grid.nodes.begin(), px.grid.nodes.end());
  nodes.insert(nodes.end(), py.grid.nodes.begin(), py.grid.nodes.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  rep.g_nodes = nodes;
  rep.g_values.reserve(nodes.size());
  rep.min_g = std::numeric_limits<double>::infinity();
  for (double k : nodes) {
    const double g = py.call(k) - px.call(k);
    rep.g_values.push_back(g);
    rep.min_g = std::min(rep.min_g, g);
  }
  int last_sign = 0;
  rep.delta_f_min = 0.0;
  rep.delta_f_max = 0.0;
  for (double k : nodes) {
    const double df = px.cdf(k) - py.cdf(k);
    rep.delta_f_min = std::min(rep.delta_f_min, df);
    rep.delta_f_max = std::max(rep.delta_f_max, df);
    if (std::abs(df) <= 1e-12) continue;
    const int sg = df > 0 ? 1 : -1;
    if (last_sign != 0 && sg != last_sign) ++rep.delta_f_sign_changes;
    last_sign = sg;
  }
  rep.means_equal = std::abs(px.mean() - py.mean()) <= tol * 100.0 &&
                    std::abs(px.mass() - py.mass()) <= tol * 100.0;
  rep.lower_support_ok = py.grid.nodes.front() <= px.grid.nodes.front();
  rep.upper_support_ok = py.grid.nodes.back() >= px.grid.nodes.back();
  rep.ordered = rep.means_equal && rep.min_g >= -tol;
  return rep;
}

DiscreteMarginal discretize_law(const MarginalLaw& law, const Grid& grid, std::span<const double> strikes,
                                PriorMode mode, int l, KLProjectionReport* report) {
  std::vector<double> inside;
  for (double k : strikes)
    if (k > grid.nodes.front() && k < grid.nodes.back()) inside.push_back(k);
  const PriceVector pv = prices_from_law(law, inside);
  pv.validate(1e-10);
  std::vector<double> moments(l);
  for (int j = 1; j <= l; ++j) {
    if (j == 1) {
      moments[0] = 1.0;
    } else {
      moments[j - 1] = num::integrate([&](double x) { return std::pow(x, j) * law.density(x); }, kTruncLo,
                                      kTruncHi, 1e-13, 1e-11);
    }
  }
  auto res = kl_project(prior_weights(law, grid, mode), grid, pv, l, moments);
  if (report) *report = std::move(res.report);
  return std::move(res.marginal);
}

void write_marginal(const std::filesystem::path& path, const DiscreteMarginal& m) {
  std::vector<csv::Row> rows;
  for (std::size_t i = 0; i < m.weights.size(); ++i) rows.push_back({m.grid.nodes[i], m.weights[i]});
  csv::write(path, {"node", "weight"}, rows);
}

DiscreteMarginal read_marginal(const std::filesystem::path& path) {
  DiscreteMarginal m;
  for (const auto& r : csv::read(path)) {
    if (r.size() < 2) throw DomainError("marginal CSV rows need node and weight");
    m.grid.nodes.push_back(r[0]);
    m.weights.push_back(r[1]);
  }
  return m;
}

void write_prices(const std::filesystem::path& path, const PriceVector& p) {
  std::vector<csv::Row> rows;
  for (std::size_t i = 0; i < p.strikes.size(); ++i) rows.push_back({p.strikes[i], p.prices[i]});
  csv::write(path, {"strike", "price"}, rows);
}

PriceVector read_prices(const std::filesystem::path& path) {
  PriceVector p;
  for (const auto& r : csv::read(path)) {
    if (r.size() < 2) throw DomainError("price CSV rows need strike and price");
    p.strikes.push_back(r[0]);
    p.prices.push_back(r[1]);
  }
  return p;
}

}  // namespace fsb
