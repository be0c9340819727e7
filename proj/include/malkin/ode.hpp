#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace malkin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using FieldFn = std::function<Vec(double, const Vec&)>;
using JacFn = std::function<Mat(double, const Vec&)>;
using ForcingFn = std::function<Vec(double, const Vec&, double)>;
using ForcingJacFn = std::function<Mat(double, const Vec&, double)>;

/// Thrown when the stepper cannot reach the requested end time
/// (step-size underflow, blow-up). Carries the last time reached.
class NonconvergenceError : public std::runtime_error {
public:
  NonconvergenceError(const std::string& msg, double last_time)
      : std::runtime_error(msg), last_time_(last_time) {}
  double last_time() const { return last_time_; }

private:
  double last_time_;
};

/// T-periodic (or autonomous) right-hand side with optional analytic Jacobian.
struct OdeSystem {
  int dim = 0;
  FieldFn f;
  JacFn jac;        // empty -> central finite differences
  double period = 0.0;
  bool autonomous = true;

  Vec eval(double t, const Vec& x) const { return f(t, x); }

  /// Analytic Jacobian when present, otherwise central differences with
  /// step h = max(1e-6, 1e-7*|x|).
  Mat jacobian(double t, const Vec& x) const;
};

/// x' = f(t,x) + eps*g(t,x,eps); g is T-periodic in t.
struct PerturbedSystem {
  OdeSystem base;
  ForcingFn g;
  ForcingJacFn g_jac;  // optional d/dx g

  double period() const { return base.period; }
  int dim() const { return base.dim; }

  Mat forcing_jacobian(double t, const Vec& x, double eps) const;

  /// Right-hand side with eps frozen, as a plain system.
  OdeSystem at(double eps) const;
};

enum class StepperKind { AdaptiveRK45, FixedRK4 };

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  StepperKind method = StepperKind::AdaptiveRK45;
  double fixed_step = 1e-3;  // FixedRK4 only
  std::size_t max_steps = 40'000'000;

  void validate() const;
};

/// Accepted-step samples of one integration with cubic Hermite interpolation.
/// Nodes are stored in ascending time order; t_begin/t_end keep the logical
/// direction of the run that produced them.
class DenseTrajectory {
public:
  DenseTrajectory() = default;
  DenseTrajectory(std::vector<double> times, std::vector<Vec> states,
                  std::vector<Vec> derivs, double t_begin, double t_end);

  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  double t_min() const { return times_.front(); }
  double t_max() const { return times_.back(); }
  int dim() const { return states_.empty() ? 0 : static_cast<int>(states_.front().size()); }
  std::size_t size() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec>& states() const { return states_; }

  /// Interpolated state; exact at nodes. t must lie in [t_min, t_max]
  /// up to a small slack.
  Vec eval(double t) const;
  /// Interpolated derivative of the stored solution.
  Vec eval_derivative(double t) const;
  /// eval with t reduced modulo `period` into [t_min, t_min+period).
  Vec eval_periodic(double t, double period) const;

  const Vec& front() const { return states_.front(); }
  const Vec& back() const { return states_.back(); }
  /// State at the logical end of the run (t_end), for either direction.
  const Vec& endpoint() const { return t_end_ >= t_begin_ ? states_.back() : states_.front(); }

private:
  std::size_t segment_index(double t) const;

  std::vector<double> times_;
  std::vector<Vec> states_;
  std::vector<Vec> derivs_;
  double t_begin_ = 0.0, t_end_ = 0.0;
};

/// Solve x' = f over [t0,t1] (either order) from x0. The endpoint time is hit
/// exactly; local error is controlled by cfg.
DenseTrajectory integrate(const OdeSystem& sys, double t0, double t1, const Vec& x0,
                          const IntegratorConfig& cfg);

/// Shift operator along trajectories: Omega(t, t0, xi).
Vec flow_map(const OdeSystem& sys, double t, double t0, const Vec& xi,
             const IntegratorConfig& cfg);

/// Time-T map of the perturbed flow, P_eps(xi) = Omega_eps(T, 0, xi).
Vec poincare_map(const PerturbedSystem& psys, double eps, const Vec& xi,
                 const IntegratorConfig& cfg);

/// Base state, variational matrix Y and adjoint matrix Z co-integrated along
/// one orbit, all normalized to the identity at the anchor time. Perron
/// duality Z^T(t) Y(t) = I gives Y^{-1} without matrix inversion.
class FlowBundle {
public:
  FlowBundle(const OdeSystem& sys, const Vec& xi, double anchor,
             const IntegratorConfig& cfg);

  /// Extend coverage to include [lo, hi].
  void cover(double lo, double hi);

  double anchor() const { return anchor_; }
  int dim() const { return dim_; }
  Vec state(double t) const;
  Mat variational(double t) const;  // Y(t), Y(anchor) = I
  Mat adjoint(double t) const;      // Z(t), Z(anchor) = I; Z^T = Y^{-1}
  Vec inverse_apply(double t, const Vec& v) const { return adjoint(t).transpose() * v; }

  /// Accepted-step times inside [a, b], endpoints included (quadrature panels).
  std::vector<double> panel_nodes(double a, double b) const;

private:
  Vec joint_eval(double t) const;

  OdeSystem joint_;     // flattened (x, Y, Z) system
  Vec xi_;
  double anchor_;
  int dim_;
  IntegratorConfig cfg_;
  DenseTrajectory fwd_, bwd_;  // either may be empty
  bool has_fwd_ = false, has_bwd_ = false;
};

/// Y(t) of y' = J(t, Omega(t,t0,xi)) y with Y(t0) = I, co-integrated with the
/// base trajectory.
Mat variational_matrix(const OdeSystem& sys, double t, double t0, const Vec& xi,
                       const IntegratorConfig& cfg);

/// Adjoint solution z' = -J(t, x(t))^T z with z(t0) = z0 along the orbit
/// through traj(t0) (re-integrated jointly, so traj only seeds the start).
Vec adjoint_solve(const OdeSystem& sys, const DenseTrajectory& traj, double t,
                  double t0, const Vec& z0, const IntegratorConfig& cfg);

/// eta(t, s, xi) = Y(t) * Int_s^t Y^{-1}(tau) g(tau, Omega(tau,0,xi), 0) dtau,
/// Y normalized at 0; solves the inhomogeneous variational system with
/// eta(s,s,xi) = 0.
Vec eta(const PerturbedSystem& psys, double s, const Vec& xi, double t,
        const IntegratorConfig& cfg);

/// Adaptive composite Gauss-Legendre quadrature of a vector integrand.
/// `nodes` seeds the initial panel boundaries (endpoints are added).
Vec quad_vector(const std::function<Vec(double)>& fn, double a, double b,
                const std::vector<double>& nodes, double abs_tol = 1e-12,
                double rel_tol = 1e-10);

double quad_scalar(const std::function<double(double)>& fn, double a, double b,
                   const std::vector<double>& nodes, double abs_tol = 1e-12,
                   double rel_tol = 1e-10);

/// floor-based reduction of t into [0, period).
double mod_period(double t, double period);

}  // namespace malkin
