#include "fsb/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fsb/errors.hpp"
#include "fsb/numerics.hpp"

namespace fsb {

using cplx = std::complex<double>;

void BSParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("BS sigma must be positive");
}

void HestonParams::validate() const {
  if (!(v0 > 0.0)) throw DomainError("Heston v0 must be positive");
  if (!(kappa > 0.0)) throw DomainError("Heston kappa must be positive");
  if (!(theta > 0.0)) throw DomainError("Heston theta must be positive");
  if (!(xi_vol > 0.0)) throw DomainError("Heston xi_vol must be positive");
  if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("Heston rho must lie in [-1, 1]");
}

// ---------------------------------------------------------------------------
// Black-Scholes

double bs_call_price(double tau, double strike, double sigma) {
  if (!(tau > 0.0) || !(strike > 0.0) || !(sigma > 0.0))
    throw DomainError("bs_call_price: tau, K and sigma must be positive");
  const double k = std::log(strike);
  const double s = sigma * std::sqrt(tau);
  const double dp = -k / s + 0.5 * s;
  const double dm = dp - s;
  return std::clamp(num::normal_cdf(dp) - strike * num::normal_cdf(dm), 0.0, 1.0);
}

double lognormal_density(double t, double sigma, double x) {
  if (x <= 0.0) return 0.0;
  const double s = sigma * std::sqrt(t);
  const double z = (std::log(x) + 0.5 * s * s) / s;
  return num::normal_pdf(z) / (x * s);
}

double lognormal_cdf(double t, double sigma, double x) {
  if (x <= 0.0) return 0.0;
  const double s = sigma * std::sqrt(t);
  return num::normal_cdf((std::log(x) + 0.5 * s * s) / s);
}

MarginalLaw make_bs_law(const BSParams& params, double t) {
  params.validate();
  if (!(t > 0.0)) throw DomainError("horizon must be positive");
  const double sigma = params.sigma;
  MarginalLaw law;
  law.model = ModelKind::BlackScholes;
  law.horizon = t;
  law.density = [=](double x) { return lognormal_density(t, sigma, x); };
  law.cdf = [=](double x) { return lognormal_cdf(t, sigma, x); };
  law.call_price = [=](double K) { return K <= 0.0 ? 1.0 - K : bs_call_price(t, K, sigma); };
  return law;
}

// ---------------------------------------------------------------------------
// Heston

namespace {

struct CD {
  cplx C;
  cplx D;
};

cplx log1p_c(cplx z) {
  if (std::abs(z) < 1e-4) return z * (1.0 - z * (0.5 - z / 3.0));
  return std::log(1.0 + z);
}

// log E[exp(iu ln S_t)] = C + D v0, little-trap form. beta - d is computed as
// -(xi^2)(iu + u^2)/(beta + d) so that small vol-of-vol does not cancel.
CD heston_cd(cplx u, double t, const HestonParams& p) {
  const cplx i(0.0, 1.0);
  const double xi2 = p.xi_vol * p.xi_vol;
  const cplx beta = p.kappa - p.rho * p.xi_vol * i * u;
  const cplx w = i * u + u * u;
  const cplx d = std::sqrt(beta * beta + xi2 * w);
  const cplx bpd = beta + d;
  const cplx bm_over = -w / bpd;  // (beta - d) / xi^2
  const cplx g = xi2 * bm_over / bpd;
  const cplx e = std::exp(-d * t);
  CD out;
  out.C = p.kappa * p.theta * (bm_over * t - 2.0 / xi2 * log1p_c(g * (1.0 - e) / (1.0 - g)));
  out.D = bm_over * (1.0 - e) / (1.0 - g * e);
  return out;
}

constexpr double kAlpha = 1.5;
constexpr double kSmallStrike = 0.05;

double fourier(const std::function<double(double)>& f) {
  return num::integrate_half_line(f, 5.0, 1e-14, 5000.0);
}

template <class CF>
double carr_madan(const CF& phi, double strike) {
  const double k = std::log(strike);
  const cplx i(0.0, 1.0);
  const double a = kAlpha;
  auto integrand = [&](double u) {
    const cplx num = phi(cplx(u, -(a + 1.0)));
    const cplx den(a * a + a - u * u, (2.0 * a + 1.0) * u);
    return std::real(std::exp(-i * u * k) * num / den);
  };
  return std::exp(-a * k) / M_PI * fourier(integrand);
}

// Gil-Pelaez probabilities: P(S > K) under the share measure and under Q.
template <class CF>
std::pair<double, double> gil_pelaez(const CF& phi, double strike) {
  const double k = std::log(strike);
  const cplx i(0.0, 1.0);
  auto pi1 = [&](double u) { return std::real(std::exp(-i * u * k) * phi(cplx(u, -1.0)) / (i * u)); };
  auto pi2 = [&](double u) { return std::real(std::exp(-i * u * k) * phi(cplx(u, 0.0)) / (i * u)); };
  return {0.5 + fourier(pi1) / M_PI, 0.5 + fourier(pi2) / M_PI};
}

template <class CF>
double call_from_cf(const CF& phi, double strike) {
  if (!(strike > 0.0)) throw DomainError("strike must be positive");
  double c;
  if (strike < kSmallStrike) {
    const auto [p1, p2] = gil_pelaez(phi, strike);
    c = p1 - strike * p2;
  } else {
    c = carr_madan(phi, strike);
  }
  return std::clamp(c, std::max(0.0, 1.0 - strike), 1.0);
}

// Tabulated density of k = ln S_t with exact cumulative integrals of the
// Hermite interpolant.
struct LogDensityTable {
  double k0 = 0.0;
  double h = 0.0;
  std::vector<double> ks, g, dg, cum;

  double density(double k) const { return std::max(0.0, num::interp_hermite(ks, g, dg, k)); }

  double cdf(double k) const {
    if (k <= ks.front()) return 0.0;
    if (k >= ks.back()) return cum.back();
    const auto j = std::min<std::size_t>(static_cast<std::size_t>((k - k0) / h), ks.size() - 2);
    const double t = (k - ks[j]) / h;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    const double i00 = t - t3 + 0.5 * t4;
    const double i10 = 0.5 * t2 - 2.0 * t3 / 3.0 + 0.25 * t4;
    const double i01 = t3 - 0.5 * t4;
    const double i11 = 0.25 * t4 - t3 / 3.0;
    return cum[j] + h * (i00 * g[j] + i10 * h * dg[j] + i01 * g[j + 1] + i11 * h * dg[j + 1]);
  }
};

// Characteristic function sampled on a composite Gauss-Legendre u-grid.
struct CFSamples {
  std::vector<double> u, w;
  std::vector<cplx> phi;
};

CFSamples sample_cf(double t, const HestonParams& p) {
  CFSamples s;
  const auto rule = num::gauss_legendre(16);
  const double width = 1.0;
  int quiet = 0;
  for (double lo = 0.0; lo < 5000.0; lo += width) {
    double peak = 0.0;
    for (std::size_t r = 0; r < rule.nodes.size(); ++r) {
      const double u = lo + 0.5 * width * (rule.nodes[r] + 1.0);
      const cplx ph = heston_cf(cplx(u, 0.0), t, p);
      s.u.push_back(u);
      s.w.push_back(0.5 * width * rule.weights[r]);
      s.phi.push_back(ph);
      peak = std::max(peak, std::abs(ph) * std::max(1.0, u));
    }
    if (peak < 1e-16) {
      if (++quiet >= 2) return s;
    } else {
      quiet = 0;
    }
  }
  throw QuadratureError("Heston characteristic function did not decay");
}

// g(k) and g'(k) at k = k0 + j h, using a rotating phase per u-node.
void invert_on_uniform(const CFSamples& s, double k0, double h, std::size_t n,
                       std::vector<double>& g, std::vector<double>& dg) {
  g.assign(n, 0.0);
  dg.assign(n, 0.0);
  const cplx i(0.0, 1.0);
  for (std::size_t r = 0; r < s.u.size(); ++r) {
    const double u = s.u[r];
    const cplx step = std::exp(-i * u * h);
    cplx phase = std::exp(-i * u * k0);
    const cplx a = s.w[r] * s.phi[r];
    for (std::size_t j = 0; j < n; ++j) {
      if ((j & 255) == 255) phase = std::exp(-i * u * (k0 + static_cast<double>(j) * h));
      const cplx z = phase * a;
      g[j] += z.real();
      dg[j] += u * z.imag();  // Re(-iu z) = u Im z
      phase *= step;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    g[j] /= M_PI;
    dg[j] /= M_PI;
  }
}

std::shared_ptr<const LogDensityTable> build_table(double t, const HestonParams& p) {
  auto tab = std::make_shared<LogDensityTable>();
  const double k_lo = std::log(kTruncLo) - 1.0;
  const double k_hi = std::log(kTruncHi) + 0.5;
  const std::size_t n = 6001;
  tab->k0 = k_lo;
  tab->h = (k_hi - k_lo) / static_cast<double>(n - 1);
  tab->ks.resize(n);
  for (std::size_t j = 0; j < n; ++j) tab->ks[j] = k_lo + static_cast<double>(j) * tab->h;
  invert_on_uniform(sample_cf(t, p), tab->k0, tab->h, n, tab->g, tab->dg);
  tab->cum.assign(n, 0.0);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double h = tab->h;
    tab->cum[j + 1] = tab->cum[j] + h * 0.5 * (tab->g[j] + tab->g[j + 1]) +
                      h * h * (tab->dg[j] - tab->dg[j + 1]) / 12.0;
  }
  return tab;
}

}  // namespace

cplx heston_cf(cplx u, double t, const HestonParams& p) {
  const CD cd = heston_cd(u, t, p);
  return std::exp(cd.C + cd.D * p.v0);
}

double heston_call_price(double t, double strike, const HestonParams& params) {
  params.validate();
  if (!(t > 0.0)) throw DomainError("horizon must be positive");
  return call_from_cf([&](cplx u) { return heston_cf(u, t, params); }, strike);
}

std::vector<double> heston_density(double t, const HestonParams& params,
                                   std::span<const double> grid) {
  params.validate();
  if (!(t > 0.0)) throw DomainError("horizon must be positive");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw DomainError("heston_density: grid must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw DomainError("heston_density: grid must be strictly increasing");
  }
  const CFSamples s = sample_cf(t, params);
  std::vector<double> out(grid.size());
  const cplx i(0.0, 1.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double k = std::log(grid[j]);
    double acc = 0.0;
    for (std::size_t r = 0; r < s.u.size(); ++r)
      acc += s.w[r] * std::real(std::exp(-i * s.u[r] * k) * s.phi[r]);
    out[j] = std::max(0.0, acc / M_PI) / grid[j];
  }
  return out;
}

double heston_forward_call_price(double t, double tau, double strike,
                                 const HestonParams& params) {
  params.validate();
  if (!(t > 0.0) || !(tau > 0.0)) throw DomainError("horizons must be positive");
  // Under the share measure the variance runs with kappa* = kappa - rho xi and
  // kappa* theta* = kappa theta; given V_t the return S_{t+tau}/S_t is Heston.
  const double ks = params.kappa - params.rho * params.xi_vol;
  if (!(ks > 0.0)) throw DomainError("forward-start pricing needs kappa - rho xi > 0");
  const double xi2 = params.xi_vol * params.xi_vol;
  const double ekt = std::exp(-ks * t);
  const double c = xi2 * (1.0 - ekt) / (4.0 * ks);
  const double df = 4.0 * params.kappa * params.theta / xi2;
  auto phi = [&](cplx u) {
    const CD cd = heston_cd(u, tau, params);
    const cplx z = -2.0 * c * cd.D;
    return std::exp(cd.C + ekt * params.v0 * cd.D / (1.0 + z) - 0.5 * df * log1p_c(z));
  };
  return call_from_cf(phi, strike);
}

MarginalLaw make_heston_law(const HestonParams& params, double t) {
  params.validate();
  if (!(t > 0.0)) throw DomainError("horizon must be positive");
  auto tab = build_table(t, params);
  MarginalLaw law;
  law.model = ModelKind::Heston;
  law.horizon = t;
  law.density = [tab](double x) { return x <= 0.0 ? 0.0 : tab->density(std::log(x)) / x; };
  law.cdf = [tab](double x) { return x <= 0.0 ? 0.0 : std::min(1.0, tab->cdf(std::log(x))); };
  law.call_price = [params, t](double K) {
    return K <= 0.0 ? 1.0 - K : heston_call_price(t, K, params);
  };
  return law;
}

// ---------------------------------------------------------------------------
// Implied volatility

ImpliedVol implied_vol(double price, double tau, double strike) {
  if (!(tau > 0.0) || !(strike > 0.0)) throw DomainError("implied_vol: tau and K must be positive");
  const double intrinsic = std::max(0.0, 1.0 - strike);
  constexpr double kSlack = 1e-13;
  if (price < intrinsic - kSlack || price >= 1.0)
    throw DomainError("implied_vol: price outside the no-arbitrage range");
  if (price <= intrinsic + kSlack) return {0.0, true};

  constexpr double lo0 = 1e-6, hi0 = 5.0;
  auto f = [&](double s) { return bs_call_price(tau, strike, s) - price; };
  if (f(hi0) < 0.0) throw DomainError("implied_vol: price above the volatility bracket");
  if (f(lo0) > 0.0) return {lo0, false};

  double lo = lo0, hi = hi0;
  for (int it = 0; it < 60 && hi - lo > 1e-4 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  double s = 0.5 * (lo + hi);
  const double sq = std::sqrt(tau);
  for (int it = 0; it < 50; ++it) {
    const double r = f(s);
    if (std::abs(r) < 1e-14) break;
    (r > 0.0 ? hi : lo) = s;
    const double d1 = -std::log(strike) / (s * sq) + 0.5 * s * sq;
    const double vega = num::normal_pdf(d1) * sq;
    double next = vega > 0.0 ? s - r / vega : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-16 * s) break;
    s = next;
  }
  return {s, false};
}

double straddle_to_call(double straddle_price, double kf) {
  if (straddle_price < std::abs(1.0 - kf) - 1e-12)
    throw DomainError("straddle price below intrinsic |1 - Kf|");
  return 0.5 * (straddle_price + 1.0 - kf);
}

ImpliedVol forward_vol_from_straddle(double straddle_price, double tau, double kf) {
  return implied_vol(straddle_to_call(straddle_price, kf), tau, kf);
}

}  // namespace fsb
