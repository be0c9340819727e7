#pragma once

#include "malkin/cycles.hpp"

#include <functional>
#include <string>
#include <vector>

namespace malkin {

struct ThetaGrid {
  std::vector<double> values;  // strictly increasing, covering [0, T]
  static ThetaGrid uniform(double T, int n);
  double front() const { return values.front(); }
  double back() const { return values.back(); }
};

enum class ZeroKind { SignChange, TangencySuspect };

struct ZeroInfo {
  double theta0 = 0.0;
  ZeroKind kind = ZeroKind::SignChange;
  double local_slope = 0.0;
};

/// Samples of a bifurcation function on a theta grid, with detected zeros.
struct BifSamples {
  ThetaGrid grid;
  std::vector<Vec> values;  // scalar functions store size-1 vectors
  std::vector<ZeroInfo> zeros;
};

struct SymmetryIntegrals {
  Vec xi_tilde;      // quarter-period integrals against the full forcing
  Vec xi_hat;        // full-period integrals against the state shape of g
  double y_hat_1_T = 0.0;   // first rotated component of y_hat at t = T
  double x_dot_1_0 = 0.0;   // first rotated component of x_dot at t = 0
};

/// Malkin bifurcation function
///   M(theta) = sign<x_dot(0), z_tilde(0)> *
///              Int_0^T <z_tilde(tau), g(tau - theta, x(tau), 0)> dtau,
/// with g's first argument reduced mod T.
double malkin_function(const Cycle& cycle, const AdjointFrame& frame, const PerturbedSystem& psys,
              double theta, const IntegratorConfig& cfg);

/// Subharmonic 1/1 Melnikov function (2D):
///   M(theta) = Int_0^T det(x_dot(tau), g(tau - theta, x(tau), 0)) dtau.
double melnikov(const Cycle& cycle, const PerturbedSystem& psys, double theta,
                const IntegratorConfig& cfg);

/// Forcing of the shape (0, sin(2 pi k t / T) * g_scalar(x)).
struct SinusoidalShape {
  int k = 1;
  std::function<double(const Vec&)> g_scalar;
};

struct SinusoidalCoefficients {
  double M_sin = 0.0;
  double M_cos = 0.0;
};

/// Coefficients of M(theta) = cos(2 pi k theta / T) M_sin - sin(...) M_cos for
/// sinusoidally forced systems. Validates the forcing shape on sampled probes.
SinusoidalCoefficients sinusoidal_decomposition(const Cycle& cycle, const AdjointFrame& frame,
                                                const PerturbedSystem& psys,
                                                const SinusoidalShape& shape,
                                                const IntegratorConfig& cfg);

/// Zeros of the reconstructed Malkin function, 2k phases in (0, T], sorted.
std::vector<double> predicted_phases(double M_sin, double M_cos, double T, int k);

/// Central finite-difference estimates of d^order M / d theta^order,
/// order in {1, 2, 3}. Smoothness of the forcing is the caller's business.
double malkin_derivative(const Cycle& cycle, const AdjointFrame& frame,
                         const PerturbedSystem& psys, double theta, int order,
                         const IntegratorConfig& cfg, double step = 1e-2);

/// Generalized averaging operator Phi^s(xi) = eta(T,s,xi) - eta(0,s,xi); when
/// |P_0(xi) - xi| <= closure_tol the single-integral fast path
/// Int_{s-T}^s Y^{-1}(tau) g(tau, Omega(tau,0,xi), 0) dtau is used.
Vec averaging_phi(const PerturbedSystem& psys, double s, const Vec& xi,
                  const IntegratorConfig& cfg, double closure_tol = 1e-8);

struct PhiDecomposition {
  double coef_xdot = 0.0;       // f_hat(theta) - ratio * f_tilde(theta, s+theta)
  double coef_yhat = 0.0;       // f_tilde(theta, 0)
  double f_tilde_theta_0 = 0.0;
  double f_hat_theta = 0.0;
  double zhat_ratio = 0.0;      // z_hat_2(T) / z_tilde_2(0), rotated components
  Vec reconstructed;            // coef_xdot * x_dot(theta) + coef_yhat * y_hat(theta)
};

/// On-cycle decomposition of Phi^s along (x_dot, y_hat) for 2D cycles whose
/// unit multiplier has multiplicity 2 (s-independent when the monodromy is
/// the identity).
PhiDecomposition phi_decomposition(const Cycle& cycle, const AdjointFrame& frame,
                                   const PerturbedSystem& psys, double s, double theta,
                                   const IntegratorConfig& cfg);

/// Quarter/full-period weighted integrals for sinusoidally forced symmetric
/// systems; inputs to the symmetric two-solution conditions.
SymmetryIntegrals symmetry_integrals(const Cycle& cycle, const PerturbedSystem& psys,
                                     const AdjointFrame& frame, const IntegratorConfig& cfg);

struct NondegeneracyScan {
  double min_norm = 0.0;
  double argmin_s = 0.0;
  Vec argmin_point;
  bool nondegenerate = false;
  double nd_tol = 0.0;
};

/// Minimum of |Phi^s(xi)| over boundary points x product s grid. Every
/// boundary point must be a fixed point of P_0 within closure_tol.
NondegeneracyScan phi_nondegeneracy_scan(const PerturbedSystem& psys,
                                         const std::vector<Vec>& boundary,
                                         const std::vector<double>& s_grid,
                                         const IntegratorConfig& cfg,
                                         double closure_tol = 1e-6);

/// Grid evaluations with zero detection (sign changes bisected to 1e-10).
BifSamples malkin_grid(const Cycle& cycle, const AdjointFrame& frame,
                       const PerturbedSystem& psys, const ThetaGrid& grid,
                       const IntegratorConfig& cfg);
BifSamples melnikov_grid(const Cycle& cycle, const PerturbedSystem& psys,
                         const ThetaGrid& grid, const IntegratorConfig& cfg);
BifSamples scalar_grid(const std::function<double(double)>& fn, const ThetaGrid& grid);

/// Zero detection over already-computed scalar samples; fn refines the
/// sign-change brackets by bisection.
void attach_zero_info(BifSamples& samples, const std::function<double(double)>& fn);

/// CSV rows `theta,value[,vx,vy...]`; zeros and diagnostics go to the JSON
/// sidecar string.
std::string bif_samples_to_csv(const BifSamples& samples);
std::string bif_samples_zeros_json(const BifSamples& samples);

}  // namespace malkin
