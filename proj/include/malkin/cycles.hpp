#pragma once

#include "malkin/ode.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace malkin {

/// A nonconstant T-periodic orbit of the unperturbed system.
struct Cycle {
  Vec x0;
  double T = 0.0;              // analysis period (a multiple of the minimal one)
  double minimal_period = 0.0;
  DenseTrajectory traj;        // over [0, T]

  Vec state(double t) const { return traj.eval_periodic(t, T); }
  Vec deriv(double t) const { return traj.eval_derivative(traj.t_min() + mod_period(t, T)); }
};

struct MonodromyData {
  Mat Y_T;
  std::vector<std::complex<double>> multipliers;
  int unit_multiplicity = 0;  // algebraic multiplicity of multiplier +1
  int beta = 0;               // multiplicity-weighted count of real multipliers > 1
};

/// Classify the spectrum of a fundamental matrix at time T. In 2D the unit
/// multiplier is detected through trace/determinant, which stays stable for
/// Jordan blocks where raw eigenvalues split by sqrt of the matrix error.
MonodromyData classify_multipliers(const Mat& Y_T, double unit_tol = 1e-6);

bool is_simple_cycle(const MonodromyData& md);

struct FindCycleOptions {
  double closure_tol = 1e-8;
  double max_time = 400.0;
  int max_newton_iters = 30;
  double section_skip = 1e-6;  // ignore returns earlier than this
};

/// Locate a periodic orbit of an autonomous system by Newton iteration on the
/// first-return map of the hyperplane through the current point with the
/// given normal. The minimal period is the converged first-return time.
Cycle find_cycle(const OdeSystem& sys, const Vec& guess, const Vec& section_normal,
                 const IntegratorConfig& cfg, const FindCycleOptions& opts = {});

MonodromyData monodromy(const OdeSystem& sys, const Cycle& cycle,
                        const IntegratorConfig& cfg, double unit_tol = 1e-6);

/// Periodic adjoint solution and, in 2D, the complementary pair:
///   y_hat  second variational solution, y_hat(0) rotated to (0, 1/|f(x0)|),
///   z_hat  adjoint solution with z_hat(0) rotated to (1/|f(x0)|, 0),
///   z_tilde  T-periodic adjoint solution.
/// When the unit multiplier has multiplicity 2 these satisfy the Perron
/// biorthogonality (x_dot(t), y_hat(t))^T (z_hat(t), z_tilde(t)) = I.
class AdjointFrame {
public:
  AdjointFrame(const OdeSystem& sys, const Cycle& cycle, const IntegratorConfig& cfg,
               double unit_tol = 1e-6);

  int dim() const { return dim_; }
  double period() const { return T_; }
  const Mat& rotation() const { return rotation_; }
  int pairing_sign() const { return pairing_sign_; }
  double pairing() const { return pairing_; }
  /// True when <x_dot(0), z_tilde(0)> vanishes (multiplicity-2 cycles); the
  /// Malkin sign convention then defaults to +1.
  bool pairing_degenerate() const { return pairing_degenerate_; }
  int unit_multiplicity() const { return unit_multiplicity_; }

  Vec z_tilde(double t) const;
  Vec z_hat(double t) const;   // 2D only
  Vec y_hat(double t) const;   // 2D only
  Vec x_dot(double t) const;

  Vec z_tilde0() const { return z_tilde0_; }
  Vec z_hat0() const { return z_hat0_; }
  Vec y_hat0() const { return y_hat0_; }

  /// Rescale z_tilde by a nonzero factor (sign convention updates with it).
  void rescale_z_tilde(double c);

  /// Quadrature panel hints on [0, T].
  std::vector<double> panel_nodes() const;

private:
  std::shared_ptr<FlowBundle> bundle_;
  Vec z_tilde0_, z_hat0_, y_hat0_, x_dot0_;
  Mat rotation_;
  double T_ = 0.0, pairing_ = 0.0;
  int dim_ = 0, pairing_sign_ = 1, unit_multiplicity_ = 0;
  bool pairing_degenerate_ = false;
};

struct DegeneracyReport {
  double T_prime = 0.0;        // dT/dalpha at alpha0
  double T_at_alpha0 = 0.0;
  bool degenerate = false;
  double monodromy_identity_gap = 0.0;  // |Y_T - I| at alpha0
};

/// Central-difference derivative of the minimal period across a cycle family,
/// cross-checked against |Y_T - I| (all variational solutions periodic at a
/// degenerate member).
DegeneracyReport degeneracy_report(const OdeSystem& sys,
                                   const std::function<Vec(double)>& family_probe,
                                   double alpha0, const IntegratorConfig& cfg,
                                   double probe_step = 1e-3, double deg_tol = 1e-4,
                                   double unit_tol = 1e-6);

/// JSON record {x0, T, minimal_period, sample_count, samples[[t, x...]]}.
std::string cycle_to_json(const Cycle& cycle);
Cycle cycle_from_json(const std::string& text);

}  // namespace malkin
