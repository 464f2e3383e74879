#pragma once

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fsb {

struct BSParams {
  double sigma = 0.2;
  void validate() const;
};

struct HestonParams {
  double v0 = 0.07;
  double kappa = 1.0;
  double theta = 0.07;
  double xi_vol = 0.4;  // vol-of-vol
  double rho = -0.8;
  void validate() const;
};

enum class ModelKind { BlackScholes, Heston };

/// Law of S_t for a unit-spot, zero-rate martingale model. The callables are
/// cheap to copy and safe to call concurrently.
struct MarginalLaw {
  ModelKind model = ModelKind::BlackScholes;
  double horizon = 1.0;
  std::function<double(double)> density;
  std::function<double(double)> call_price;
  std::function<double(double)> cdf;
};

/// Integration window for continuous laws.
inline constexpr double kTruncLo = 1e-6;
inline constexpr double kTruncHi = 40.0;

// Black-Scholes ------------------------------------------------------------

/// E(S_tau - K)_+ for a unit-spot lognormal martingale; k = ln K.
double bs_call_price(double tau, double strike, double sigma);

/// Density of exp(N(-sigma^2 t / 2, sigma^2 t)); zero for x <= 0.
double lognormal_density(double t, double sigma, double x);
double lognormal_cdf(double t, double sigma, double x);

MarginalLaw make_bs_law(const BSParams& params, double t);

// Heston -------------------------------------------------------------------

/// E[exp(i u ln S_t)] in the branch-stable formulation; u may be complex.
std::complex<double> heston_cf(std::complex<double> u, double t, const HestonParams& p);

/// Call price by damped Fourier inversion (damping 1.5, adaptive Gauss-Legendre).
double heston_call_price(double t, double strike, const HestonParams& params);

/// Density of S_t on `grid` by direct inversion of the characteristic function.
std::vector<double> heston_density(double t, const HestonParams& params,
                                   std::span<const double> grid);

/// Forward-start call E(S_{t+tau} - K S_t)_+ under Heston.
double heston_forward_call_price(double t, double tau, double strike,
                                 const HestonParams& params);

/// Builds the law with a tabulated log-price density (cubic Hermite) for fast
/// repeated evaluation; call prices use the Fourier route.
MarginalLaw make_heston_law(const HestonParams& params, double t);

// Implied volatility ---------------------------------------------------------

struct ImpliedVol {
  double vol = 0.0;
  bool at_intrinsic = false;  // price equals intrinsic: vol reported as 0
};

/// Inverts bs_call_price(tau, K, .) by bracketing bisection and Newton polish
/// on [1e-6, 5]. Throws DomainError for prices outside (intrinsic, 1).
ImpliedVol implied_vol(double price, double tau, double strike);

/// Straddle-to-call parity under unit means: call = (straddle + 1 - Kf) / 2.
double straddle_to_call(double straddle_price, double kf);

/// Forward implied volatility of a forward-start straddle price.
ImpliedVol forward_vol_from_straddle(double straddle_price, double tau, double kf);

}  // namespace fsb
