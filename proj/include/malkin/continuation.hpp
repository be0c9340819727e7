#pragma once

#include "malkin/biffun.hpp"
#include "malkin/degree.hpp"

#include <optional>
#include <string>
#include <vector>

namespace malkin {

struct PeriodicSolution {
  double eps = 0.0;
  Vec x0;
  DenseTrajectory traj;  // over [0, T]
  double residual = 0.0;
  int newton_iters = 0;
};

struct ShootOptions {
  double shoot_tol = 1e-9;
  int max_iters = 25;
  double damping = 0.5;
};

/// Newton iteration on xi -> P_eps(xi) - xi with the variational Jacobian
/// Y_eps(T) - I; steps are damped whenever the residual would grow.
PeriodicSolution shoot(const PerturbedSystem& psys, double eps, const Vec& guess,
                       const IntegratorConfig& cfg, const ShootOptions& opts = {});

/// Shooting anchored to a reference cycle: unknowns are the offset inside the
/// normal plane of the cycle at phase theta and theta itself, which removes
/// the near-singular direction along the cycle.
PeriodicSolution bordered_shoot(const PerturbedSystem& psys, double eps, const Cycle& cycle,
                                double phase_guess, const IntegratorConfig& cfg,
                                const ShootOptions& opts = {},
                                double initial_offset = 0.0);

enum class Side { Inside, Outside, Crossing };

std::string side_name(Side s);

struct SideResult {
  Side side = Side::Crossing;
  double min_margin = 0.0;   // smallest distance of a sample to the curve
  bool indeterminate = false;
};

/// Point-in-polygon classification of every trajectory sample against the
/// sampled cycle curve.
SideResult classify_side(const PeriodicSolution& sol, const Cycle& cycle,
                         int curve_samples = 1024, int traj_samples = 512);

struct SweepPoint {
  double eps = 0.0;
  Vec x0;
  double dist_traj = 0.0;  // one-sided Hausdorff distance to the cycle curve
  double dist0 = 0.0;      // |x_eps(0) - x_tilde(theta(eps))|
  double phase = 0.0;      // theta(eps) in [0, T)
  Side side = Side::Crossing;
};

struct SweepRecord {
  std::vector<SweepPoint> points;
  bool truncated = false;
  std::string truncation_reason;
};

/// Warm-started bordered shooting down a strictly decreasing list of eps.
SweepRecord epsilon_sweep(const PerturbedSystem& psys, const Cycle& cycle, double phase_guess,
                          const std::vector<double>& eps_list, const IntegratorConfig& cfg,
                          const ShootOptions& opts = {});

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int used_points = 0;
  std::vector<std::size_t> excluded;  // indices below the noise floor
};

/// Least-squares slope of log(distance) against log(eps).
RateFit rate_fit(const SweepRecord& sweep);
RateFit fit_power_law(const std::vector<double>& eps, const std::vector<double>& dist);

/// Max over the t grid of
///   |(Y(T) - I)(x_tilde(0) - Omega_0(0, t, x_eps(t)))/eps - Phi^t(x_tilde(0))|.
double averaging_limit_residual(const PerturbedSystem& psys, const Cycle& cycle,
                                const PeriodicSolution& sol, const std::vector<double>& t_grid,
                                const IntegratorConfig& cfg);

struct TransversalMelnikov {
  Vec value;                  // R^{n-1}
  Mat basis0;                 // z_i(0) columns, orthogonal to x_dot(0)
  Mat d_tilde;                // transport matrix: Z*(t) = d_tilde Z*(t+T)
  bool basis_periodic = false;  // unit multiplier multiplicity > 1 detected
};

/// M_perp(s) = Int_{s-T}^s Z_{n-1}^*(tau) g(tau, x(tau), 0) dtau with the
/// non-periodic adjoint basis started orthogonally to the cycle direction.
/// With `strict`, a periodic basis (multiplicity > 1) is an error.
TransversalMelnikov transversal_melnikov(const Cycle& cycle, const PerturbedSystem& psys,
                                         double s, const IntegratorConfig& cfg,
                                         bool strict = false);

struct HypothesisCheck {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  std::string detail;
};

struct TheoremEntry {
  std::string name;
  std::vector<HypothesisCheck> hypotheses;
  bool applicable = false;  // all hypotheses passed
  std::string conclusion;
  std::vector<double> phases;
  int predicted_count = 0;
  bool predicts_sides = false;
  bool predicts_noncrossing = false;
};

struct PredictionReport {
  std::vector<TheoremEntry> entries;
  int unit_multiplicity = 0;
  bool degenerate_cycle = false;
};

struct PredictOptions {
  std::function<Vec(double)> family_probe;  // enables the degeneracy route
  int theta_samples = 256;
  int s_samples = 16;
  int boundary_samples = 64;
};

/// Theorem-by-theorem hypothesis evaluation with margins; a conclusion is
/// emitted only when every hypothesis of the entry passed.
PredictionReport predict(const PerturbedSystem& psys, const Cycle& cycle,
                         const AdjointFrame& frame, const IntegratorConfig& cfg,
                         const PredictOptions& opts = {});

struct TwoSidedResult {
  std::optional<PeriodicSolution> inside;
  std::optional<PeriodicSolution> outside;
  std::vector<PeriodicSolution> all;
  SideResult inside_class, outside_class;
};

/// Multistart bordered shooting at the given phases with radial offsets of
/// +-{0.5%, 1%, 2%} of the cycle scale (extended to +-{4%, 8%} as a fallback);
/// solutions deduplicated by initial point and classified by side. Converged
/// solutions farther from the cycle curve than proximity_cap (a fraction of
/// the cycle scale) are discarded: they are periodic solutions of the system,
/// but not the ones born from the cycle.
TwoSidedResult find_two_sided(const PerturbedSystem& psys, double eps, const Cycle& cycle,
                              const std::vector<double>& phases, const IntegratorConfig& cfg,
                              const ShootOptions& opts = {}, double proximity_cap = 0.35);

struct FirstExit {
  bool starts_inside = false;        // cycle enters the region right after t = 0
  std::optional<double> exit_time;   // first boundary re-contact that crosses
  bool touches_only = false;         // contacts exist but none crosses
  std::vector<double> contact_times;
};

/// First re-contact of a cycle (started on or near the boundary) with a
/// sampled boundary curve: crossings are in/out flips of the point-in-polygon
/// state, contacts within contact_tol that do not flip are tangential.
FirstExit first_exit(const Cycle& cycle, const SampledCurve& boundary,
                     double contact_tol = 1e-8, int samples = 2048);

std::string sweep_to_csv(const SweepRecord& sweep);
std::string sweep_to_json(const SweepRecord& sweep);
std::string prediction_report_json(const PredictionReport& report);

}  // namespace malkin
