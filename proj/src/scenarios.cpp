#include "malkin/scenarios.hpp"

#include <cmath>

namespace malkin {

namespace {

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double pos_part(double a) { return a > 0.0 ? a : 0.0; }
double neg_part(double a) { return a < 0.0 ? -a : 0.0; }

// d/da (mu a+ + nu a-); right-sided value at the kink
double kink_slope(double a, double mu, double nu) { return a >= 0.0 ? mu : -nu; }

void validate_closed_cycle(const ScenarioSpec& spec) {
  if (!spec.has_closed_cycle()) return;
  const double h = 1e-5;
  for (int i = 0; i < 32; ++i) {
    const double t = spec.cycle_min_period * (i + 0.21) / 32.0;
    const Vec xd = (spec.cycle_state(t + h) - spec.cycle_state(t - h)) / (2.0 * h);
    const Vec fv = spec.psys.base.f(t, spec.cycle_state(t));
    if ((xd - fv).norm() > 1e-9 * (1.0 + fv.norm()))
      throw std::logic_error("scenario " + spec.name + ": closed-form cycle residual too large");
  }
}

ScenarioSpec make_linear_asym(const std::map<std::string, double>& params) {
  const double mu = get_param(params, "mu", 1.0);
  const double nu = get_param(params, "nu", 0.0);
  ScenarioSpec spec;
  spec.name = "linear_asym";
  spec.params = {{"mu", mu}, {"nu", nu}};

  OdeSystem base;
  base.dim = 2;
  base.period = 2.0 * M_PI;
  base.autonomous = true;
  base.f = [](double, const Vec& x) { return v2(x(1), -x(0)); };
  base.jac = [](double, const Vec&) {
    Mat J(2, 2);
    J << 0, 1, -1, 0;
    return J;
  };
  spec.psys.base = base;
  spec.psys.g = [mu, nu](double t, const Vec& x, double) {
    return v2(0.0, mu * pos_part(x(0)) + nu * neg_part(x(0)) + std::cos(t));
  };
  spec.psys.g_jac = [mu, nu](double, const Vec& x, double) {
    Mat J = Mat::Zero(2, 2);
    J(1, 0) = kink_slope(x(0), mu, nu);
    return J;
  };

  spec.cycle_state = [](double t) { return v2(std::sin(t), std::cos(t)); };
  spec.cycle_min_period = 2.0 * M_PI;
  spec.cycle_x0 = v2(0.0, 1.0);
  spec.y_hat_exact = [](double t) { return v2(std::sin(t), std::cos(t)); };
  spec.phi_on_cycle = [mu, nu](double, double th) -> Vec {
    const double a = 0.5 * M_PI * (-mu + nu - 2.0 * std::sin(th));
    const double b = M_PI * std::cos(th);
    return v2(a * std::cos(th) + b * std::sin(th), -a * std::sin(th) + b * std::cos(th));
  };
  spec.family_probe = [](double alpha) { return v2(0.0, alpha); };
  spec.cycle_guess = v2(0.0, 1.0);
  spec.section_normal = v2(1.0, 0.0);
  validate_closed_cycle(spec);
  return spec;
}

ScenarioSpec make_duffing(const std::map<std::string, double>& params) {
  const double delta = get_param(params, "delta", 0.05);
  if (!(delta > 0.0 && delta <= 0.5))
    throw std::invalid_argument("duffing: delta must lie in (0, 0.5]");
  ScenarioSpec spec;
  spec.name = "duffing";
  spec.params = {{"delta", delta}};

  OdeSystem base;
  base.dim = 2;
  base.period = 2.0 * M_PI / (1.0 + delta);
  base.autonomous = true;
  base.f = [](double, const Vec& x) { return v2(x(1), -x(0) - x(0) * x(0) * x(0)); };
  base.jac = [](double, const Vec& x) {
    Mat J(2, 2);
    J << 0, 1, -1.0 - 3.0 * x(0) * x(0), 0;
    return J;
  };
  spec.psys.base = base;
  spec.psys.g = [delta](double t, const Vec&, double) {
    return v2(0.0, std::cos((1.0 + delta) * t));
  };
  spec.psys.g_jac = [](double, const Vec&, double) { return Mat::Zero(2, 2); };

  // hardening spring: the 2 pi/(1+delta)-periodic cycle has amplitude near
  // sqrt(8 delta / 3) (first-order averaging estimate)
  const double amp = std::sqrt(8.0 * delta / 3.0);
  spec.family_probe = [](double alpha) { return v2(alpha, 0.0); };
  spec.cycle_guess = v2(amp, 0.0);
  spec.section_normal = v2(0.0, 1.0);
  return spec;
}

ScenarioSpec make_greenspan_holmes(const std::map<std::string, double>& params) {
  const double delta = get_param(params, "delta", 0.02);
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("greenspan_holmes: delta must lie in (0, 1)");
  ScenarioSpec spec;
  spec.name = "greenspan_holmes";
  spec.params = {{"delta", delta}};
  const double w = 1.0 - delta;

  OdeSystem base;
  base.dim = 2;
  base.period = 2.0 * M_PI / w;
  base.autonomous = true;
  base.f = [delta](double, const Vec& x) {
    const double m = 1.0 - delta * x.squaredNorm();
    return v2(x(1) * m, -x(0) * m);
  };
  base.jac = [delta](double, const Vec& x) {
    const double m = 1.0 - delta * x.squaredNorm();
    Mat J(2, 2);
    J << -2.0 * delta * x(0) * x(1), m - 2.0 * delta * x(1) * x(1),
        -m + 2.0 * delta * x(0) * x(0), 2.0 * delta * x(0) * x(1);
    return J;
  };
  spec.psys.base = base;
  spec.psys.g = [w](double t, const Vec&, double) { return v2(0.0, std::sin(w * t)); };
  spec.psys.g_jac = [](double, const Vec&, double) { return Mat::Zero(2, 2); };

  spec.cycle_state = [w](double t) { return v2(std::sin(w * t), std::cos(w * t)); };
  spec.cycle_min_period = 2.0 * M_PI / w;
  spec.cycle_x0 = v2(0.0, 1.0);
  spec.y_hat_exact = [delta, w](double t) {
    return v2((-2.0 * delta * t * std::cos(w * t) + std::sin(w * t)) / w,
              (2.0 * delta * t * std::sin(w * t) + std::cos(w * t)) / w);
  };
  spec.xi_tilde_exact = v2(4.0 / 3.0, 4.0 / 3.0);
  const double om3 = w * w * w;
  spec.xi_hat_exact = v2(2.0 * delta * M_PI * M_PI / om3, -M_PI / om3);
  spec.family_probe = [](double alpha) { return v2(0.0, alpha); };
  spec.family_period = [delta](double alpha) {
    return 2.0 * M_PI / (1.0 - delta * alpha * alpha);
  };
  spec.cycle_guess = v2(0.0, 1.0);
  spec.section_normal = v2(1.0, 0.0);
  validate_closed_cycle(spec);
  return spec;
}

ScenarioSpec make_degenerate_ring(const std::map<std::string, double>& params) {
  const double mu = get_param(params, "mu", 0.0);
  const double nu = get_param(params, "nu", 0.0);
  const double delta = get_param(params, "delta", 0.0);
  if (!(delta >= 0.0 && delta < 1.0))
    throw std::invalid_argument("degenerate_ring: delta must lie in [0, 1)");
  ScenarioSpec spec;
  spec.name = "degenerate_ring";
  spec.params = {{"mu", mu}, {"nu", nu}, {"delta", delta}};

  OdeSystem base;
  base.dim = 2;
  base.period = 2.0 * M_PI / (1.0 + delta);
  base.autonomous = true;
  auto rho = [](double r) { return (r - 1.0) * (r - 1.0) + 1.0; };
  base.f = [rho](double, const Vec& x) {
    const double m = rho(x.norm());
    return v2(x(1) * m, -x(0) * m);
  };
  base.jac = [rho](double, const Vec& x) {
    const double r = x.norm();
    Mat J(2, 2);
    if (r < 1e-12) {
      J << 0, rho(0.0), -rho(0.0), 0;
      return J;
    }
    const double m = rho(r);
    const double dr = 2.0 * (r - 1.0) / r;  // rho'(r)/r
    J << x(1) * dr * x(0), m + x(1) * dr * x(1), -m - x(0) * dr * x(0), -x(0) * dr * x(1);
    return J;
  };
  spec.psys.base = base;
  spec.psys.g = [mu, nu, delta](double t, const Vec& x, double) {
    return v2(0.0, mu * pos_part(x(0)) + nu * neg_part(x(0)) + std::cos((1.0 + delta) * t));
  };
  spec.psys.g_jac = [mu, nu](double, const Vec& x, double) {
    Mat J = Mat::Zero(2, 2);
    J(1, 0) = kink_slope(x(0), mu, nu);
    return J;
  };

  // the alpha = 1 family member has minimal period 2 pi; it matches the
  // forcing period when delta = 0
  if (delta == 0.0) {
    spec.cycle_state = [](double t) { return v2(std::sin(t), std::cos(t)); };
    spec.cycle_min_period = 2.0 * M_PI;
    spec.cycle_x0 = v2(0.0, 1.0);
    spec.y_hat_exact = [](double t) { return v2(std::sin(t), std::cos(t)); };
    spec.phi_on_cycle = [mu, nu](double, double th) -> Vec {
      const double a = 0.5 * M_PI * (-mu + nu - 2.0 * std::sin(th));
      const double b = M_PI * std::cos(th);
      return v2(a * std::cos(th) + b * std::sin(th), -a * std::sin(th) + b * std::cos(th));
    };
  }
  spec.family_probe = [](double alpha) { return v2(0.0, alpha); };
  spec.family_period = [](double alpha) {
    return 2.0 * M_PI / ((alpha - 1.0) * (alpha - 1.0) + 1.0);
  };
  spec.cycle_guess = v2(0.0, 1.0);
  spec.section_normal = v2(1.0, 0.0);
  validate_closed_cycle(spec);
  return spec;
}

ScenarioSpec make_predator_prey(const std::map<std::string, double>& params,
                                const IntegratorConfig& cfg) {
  // defaults give a stable limit cycle around the coexistence equilibrium;
  // they are a choice of this toolkit, not canonical values
  const double k0 = get_param(params, "k0", 1.0);
  const double k1 = get_param(params, "k1", 1.0);
  const double k2 = get_param(params, "k2", 1.0);
  const double k3 = get_param(params, "k3", 0.2);
  const double k4 = get_param(params, "k4", 1.0);
  const double k5 = get_param(params, "k5", 0.5);
  const double mu = get_param(params, "mu", 1.0);
  const double nu = get_param(params, "nu", 0.0);
  if (k0 <= 0.0 || k1 <= 0.0 || k2 <= 0.0 || k3 < 0.0 || k4 <= 0.0 || k5 <= 0.0)
    throw std::invalid_argument("predator_prey: coefficients k0..k5 must be positive");

  ScenarioSpec spec;
  spec.name = "predator_prey";
  spec.params = {{"k0", k0}, {"k1", k1}, {"k2", k2}, {"k3", k3},
                 {"k4", k4}, {"k5", k5}, {"mu", mu}, {"nu", nu}};

  OdeSystem base;
  base.dim = 2;
  base.autonomous = true;
  base.f = [=](double, const Vec& x) {
    const double den = k0 + x(0);
    return v2(k1 * x(0) - k2 * x(0) * x(1) / den - k3 * x(0) * x(0),
              k4 * x(0) * x(1) / den - k5 * x(1));
  };
  base.jac = [=](double, const Vec& x) {
    const double den = k0 + x(0);
    Mat J(2, 2);
    J << k1 - k2 * x(1) * k0 / (den * den) - 2.0 * k3 * x(0), -k2 * x(0) / den,
        k4 * x(1) * k0 / (den * den), k4 * x(0) / den - k5;
    return J;
  };

  // settle onto the limit cycle, then close it up
  IntegratorConfig settle = cfg;
  settle.rel_tol = 1e-8;
  settle.abs_tol = 1e-10;
  OdeSystem probe = base;
  probe.period = 1.0;  // placeholder until the cycle period is known
  Vec x = v2(k0 * k5 / (k4 - k5) + 0.2, k1 / k2);
  x = flow_map(probe, 600.0, 0.0, x, settle);
  FindCycleOptions opts;
  opts.max_time = 120.0;
  Cycle cyc = find_cycle(probe, x, probe.f(0.0, x).normalized(), cfg, opts);

  base.period = cyc.minimal_period;
  spec.psys.base = base;
  const double w = 2.0 * M_PI / cyc.minimal_period;
  spec.psys.g = [mu, nu, w](double t, const Vec& x2, double) {
    return v2(0.0, (mu * pos_part(x2(0)) + nu * neg_part(x2(0))) * std::sin(w * t));
  };
  spec.psys.g_jac = [mu, nu, w](double t, const Vec& x2, double) {
    Mat J = Mat::Zero(2, 2);
    J(1, 0) = kink_slope(x2(0), mu, nu) * std::sin(w * t);
    return J;
  };
  spec.located_cycle = cyc;
  spec.cycle_guess = cyc.x0;
  spec.section_normal = base.f(0.0, cyc.x0).normalized();
  return spec;
}

}  // namespace

Cycle ScenarioSpec::closed_cycle(int samples) const {
  if (!has_closed_cycle())
    throw std::logic_error("scenario " + name + " has no closed-form cycle");
  std::vector<double> ts(static_cast<std::size_t>(samples) + 1);
  std::vector<Vec> xs(ts.size()), ds(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ts[i] = cycle_min_period * static_cast<double>(i) / samples;
    xs[i] = cycle_state(ts[i]);
    ds[i] = psys.base.f(ts[i], xs[i]);
  }
  Cycle cyc;
  cyc.x0 = xs.front();
  cyc.T = cycle_min_period;
  cyc.minimal_period = cycle_min_period;
  cyc.traj = DenseTrajectory(std::move(ts), std::move(xs), std::move(ds), 0.0, cycle_min_period);
  return cyc;
}

ScenarioSpec make_scenario(const std::string& name, const std::map<std::string, double>& params) {
  if (name == "linear_asym") return make_linear_asym(params);
  if (name == "duffing") return make_duffing(params);
  if (name == "greenspan_holmes") return make_greenspan_holmes(params);
  if (name == "degenerate_ring") return make_degenerate_ring(params);
  if (name == "predator_prey") return make_predator_prey(params, IntegratorConfig{});
  throw std::invalid_argument("unknown scenario: " + name);
}

std::vector<std::string> scenario_names() {
  return {"linear_asym", "duffing", "greenspan_holmes", "degenerate_ring", "predator_prey"};
}

double greenspan_holmes_two_solution_margin(double delta) {
  const double om = 1.0 - delta;
  return 2.0 * om * om * om - (3.0 * M_PI * M_PI + 8.0 * M_PI) * delta;
}

Cycle find_cycle_with_period(const OdeSystem& sys, const std::function<Vec(double)>& probe,
                             double alpha_lo, double alpha_hi, double target_T,
                             const IntegratorConfig& cfg, double tol) {
  FindCycleOptions opts;
  auto period_at = [&](double alpha) -> std::pair<double, Cycle> {
    const Vec p = probe(alpha);
    const Vec n = sys.f(0.0, p).normalized();
    Cycle c = find_cycle(sys, p, n, cfg, opts);
    return {c.minimal_period - target_T, c};
  };
  double a = alpha_lo, b = alpha_hi;
  auto [fa, ca] = period_at(a);
  if (std::abs(fa) <= tol) return ca;
  auto [fb, cb] = period_at(b);
  if (std::abs(fb) <= tol) return cb;
  for (int it = 0; it < 80; ++it) {
    const double c = b - fb * (b - a) / (fb - fa);
    auto [fc, cc] = period_at(c);
    if (std::abs(fc) <= tol) return cc;
    a = b;
    fa = fb;
    b = c;
    fb = fc;
    if (std::abs(b - a) < 1e-14 * (1.0 + std::abs(b))) return cc;
  }
  throw NonconvergenceError("find_cycle_with_period: secant iteration stalled", target_T);
}

}  // namespace malkin
