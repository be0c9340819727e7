#pragma once

#include "malkin/cycles.hpp"

#include <map>
#include <optional>
#include <string>

namespace malkin {

/// A built-in example system with analytic Jacobians and whatever closed-form
/// artifacts are available (cycle, y_hat, on-cycle Phi, symmetry integrals).
struct ScenarioSpec {
  std::string name;
  std::map<std::string, double> params;
  PerturbedSystem psys;

  // Closed-form cycle of the unperturbed system matching the forcing period,
  // when one is known; empty otherwise.
  std::function<Vec(double)> cycle_state;
  double cycle_min_period = 0.0;
  Vec cycle_x0;

  std::function<Vec(double)> y_hat_exact;            // second variational solution
  std::function<Vec(double, double)> phi_on_cycle;   // (s, theta) -> Phi^s(x(theta))
  std::optional<Vec> xi_tilde_exact, xi_hat_exact;

  std::function<Vec(double)> family_probe;           // alpha -> initial point
  std::function<double(double)> family_period;       // alpha -> minimal period

  Vec cycle_guess;      // seed for numeric cycle location
  Vec section_normal;

  std::optional<Cycle> located_cycle;  // populated when only a numeric cycle exists

  bool has_closed_cycle() const { return static_cast<bool>(cycle_state); }

  /// Cycle object built from the closed form (exact derivatives at nodes).
  Cycle closed_cycle(int samples = 512) const;
};

/// Catalogue: "linear_asym" (mu, nu), "duffing" (delta), "greenspan_holmes"
/// (delta), "degenerate_ring" (mu, nu, delta), "predator_prey" (k0..k5, mu, nu).
/// Missing params take documented defaults; out-of-range values throw.
ScenarioSpec make_scenario(const std::string& name,
                           const std::map<std::string, double>& params = {});

std::vector<std::string> scenario_names();

/// Locate the family member whose minimal period equals target_T by a secant
/// iteration on the family parameter.
Cycle find_cycle_with_period(const OdeSystem& sys, const std::function<Vec(double)>& probe,
                             double alpha_lo, double alpha_hi, double target_T,
                             const IntegratorConfig& cfg, double tol = 1e-10);

/// Closed-form margin of the two-solution condition for the symmetric
/// circular scenario: 2 (1-delta)^3 - (3 pi^2 + 8 pi) delta. Positive iff the
/// smallness condition holds for that delta.
double greenspan_holmes_two_solution_margin(double delta);

}  // namespace malkin
