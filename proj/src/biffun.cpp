#include "malkin/biffun.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace malkin {

ThetaGrid ThetaGrid::uniform(double T, int n) {
  if (n < 2) throw std::invalid_argument("ThetaGrid::uniform needs n >= 2");
  ThetaGrid g;
  g.values.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g.values[static_cast<std::size_t>(i)] = T * i / (n - 1.0);
  g.values.back() = T;
  return g;
}

namespace {

// Panel hints for the shifted-forcing integrals: cycle nodes plus the mod-T
// seam of g's first argument.
std::vector<double> shifted_panels(const Cycle& cycle, double theta) {
  std::vector<double> nodes = cycle.traj.times();
  const double seam = mod_period(theta, cycle.T);
  if (seam > 0.0 && seam < cycle.T) nodes.push_back(seam);
  return nodes;
}

}  // namespace

double malkin_function(const Cycle& cycle, const AdjointFrame& frame, const PerturbedSystem& psys,
              double theta, const IntegratorConfig& cfg) {
  const double T = cycle.T;
  auto integrand = [&](double tau) -> double {
    const Vec x = cycle.state(tau);
    const Vec gv = psys.g(mod_period(tau - theta, T), x, 0.0);
    return frame.z_tilde(tau).dot(gv);
  };
  const double val =
      quad_scalar(integrand, 0.0, T, shifted_panels(cycle, theta), cfg.abs_tol * 10, 1e-11);
  return frame.pairing_sign() * val;
}

double melnikov(const Cycle& cycle, const PerturbedSystem& psys, double theta,
                const IntegratorConfig& cfg) {
  if (psys.dim() != 2) throw std::invalid_argument("melnikov: requires dim = 2");
  const double T = cycle.T;
  auto integrand = [&](double tau) -> double {
    const Vec x = cycle.state(tau);
    const Vec xd = psys.base.f(tau, x);
    const Vec gv = psys.g(mod_period(tau - theta, T), x, 0.0);
    return xd(0) * gv(1) - xd(1) * gv(0);
  };
  return quad_scalar(integrand, 0.0, T, shifted_panels(cycle, theta), cfg.abs_tol * 10, 1e-11);
}

SinusoidalCoefficients sinusoidal_decomposition(const Cycle& cycle, const AdjointFrame& frame,
                                                const PerturbedSystem& psys,
                                                const SinusoidalShape& shape,
                                                const IntegratorConfig& cfg) {
  if (psys.dim() != 2) throw std::invalid_argument("sinusoidal_decomposition: requires dim = 2");
  const double T = cycle.T;
  const double w = 2.0 * M_PI * shape.k / T;
  // forcing must be (0, sin(2 pi k t/T) g_scalar(x)) in the cycle coordinates
  double worst = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double t = T * (0.089 + 0.131 * i);
    const Vec x = cycle.state(T * (0.231 + 0.097 * i));
    const Vec gv = psys.g(mod_period(t, T), x, 0.0);
    Vec expect(2);
    expect << 0.0, std::sin(w * t) * shape.g_scalar(x);
    worst = std::max(worst, (gv - expect).norm() / (1.0 + expect.norm()));
  }
  if (worst > 1e-8)
    throw std::invalid_argument("sinusoidal_decomposition: perturbation is not of the form "
                                "(0, sin(2 pi k t/T) g(x))");

  auto with_weight = [&](const std::function<double(double)>& weight) -> double {
    auto integrand = [&](double tau) -> double {
      const Vec x = cycle.state(tau);
      return frame.z_tilde(tau)(1) * weight(tau) * shape.g_scalar(x);
    };
    return frame.pairing_sign() *
           quad_scalar(integrand, 0.0, T, cycle.traj.times(), cfg.abs_tol * 10, 1e-11);
  };
  SinusoidalCoefficients out;
  out.M_sin = with_weight([w](double tau) { return std::sin(w * tau); });
  out.M_cos = with_weight([w](double tau) { return std::cos(w * tau); });
  return out;
}

double malkin_derivative(const Cycle& cycle, const AdjointFrame& frame,
                         const PerturbedSystem& psys, double theta, int order,
                         const IntegratorConfig& cfg, double step) {
  auto m = [&](double th) { return malkin_function(cycle, frame, psys, th, cfg); };
  const double h = step;
  switch (order) {
    case 1:
      return (m(theta + h) - m(theta - h)) / (2.0 * h);
    case 2:
      return (m(theta + h) - 2.0 * m(theta) + m(theta - h)) / (h * h);
    case 3:
      return (m(theta + 2.0 * h) - 2.0 * m(theta + h) + 2.0 * m(theta - h) -
              m(theta - 2.0 * h)) /
             (2.0 * h * h * h);
    default:
      throw std::invalid_argument("malkin_derivative: order must be 1, 2 or 3");
  }
}

std::vector<double> predicted_phases(double M_sin, double M_cos, double T, int k) {
  if (M_cos == 0.0)
    throw std::invalid_argument("predicted_phases: phase formula inapplicable (M_cos = 0)");
  std::vector<double> out;
  const double base = T * std::atan(M_sin / M_cos);
  for (int j = 1; j <= 2 * k; ++j) {
    double th = (base + T * M_PI * j) / (2.0 * M_PI * k);
    th = mod_period(th, T);
    if (th == 0.0) th = T;
    out.push_back(th);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Phi^s over a prebuilt bundle anchored at 0 through xi.
Vec phi_from_bundle(FlowBundle& bundle, const PerturbedSystem& psys, double s, bool fixed_point,
                    const IntegratorConfig& cfg) {
  const double T = psys.period();
  auto q = [&](double tau) -> Vec {
    return bundle.adjoint(tau).transpose() * psys.g(tau, bundle.state(tau), 0.0);
  };
  if (fixed_point) {
    bundle.cover(std::min(s - T, 0.0), std::max(s, 0.0));
    return quad_vector(q, s - T, s, bundle.panel_nodes(s - T, s), cfg.abs_tol * 10, 1e-11);
  }
  bundle.cover(std::min(0.0, s), std::max(T, s));
  const Vec int_s_T = quad_vector(q, s, T, bundle.panel_nodes(s, T), cfg.abs_tol * 10, 1e-11);
  const Vec int_s_0 = quad_vector(q, s, 0.0, bundle.panel_nodes(0.0, s), cfg.abs_tol * 10, 1e-11);
  return bundle.variational(T) * int_s_T - int_s_0;
}

}  // namespace

Vec averaging_phi(const PerturbedSystem& psys, double s, const Vec& xi,
                  const IntegratorConfig& cfg, double closure_tol) {
  const double T = psys.period();
  const double slack = 1e-9 * (1.0 + T);
  if (s < -slack || s > T + slack)
    throw std::invalid_argument("averaging_phi: s must lie in [0, T]");
  s = std::clamp(s, 0.0, T);
  const Vec p0 = flow_map(psys.at(0.0), T, 0.0, xi, cfg);
  const bool fixed_point = (p0 - xi).norm() <= closure_tol;
  FlowBundle bundle(psys.base, xi, 0.0, cfg);
  return phi_from_bundle(bundle, psys, s, fixed_point, cfg);
}

PhiDecomposition phi_decomposition(const Cycle& cycle, const AdjointFrame& frame,
                                   const PerturbedSystem& psys, double s, double theta,
                                   const IntegratorConfig& cfg) {
  if (psys.dim() != 2) throw std::invalid_argument("phi_decomposition: requires dim = 2");
  const double T = cycle.T;
  auto f_tilde = [&](double from) -> double {
    auto integrand = [&](double tau) -> double {
      const Vec x = cycle.state(tau);
      return frame.z_tilde(tau).dot(psys.g(mod_period(tau - theta, T), x, 0.0));
    };
    return quad_scalar(integrand, from, T, shifted_panels(cycle, theta), cfg.abs_tol * 10, 1e-11);
  };
  auto f_hat = [&]() -> double {
    auto integrand = [&](double tau) -> double {
      const Vec x = cycle.state(tau);
      return frame.z_hat(tau).dot(psys.g(mod_period(tau - theta, T), x, 0.0));
    };
    return quad_scalar(integrand, 0.0, T, shifted_panels(cycle, theta), cfg.abs_tol * 10, 1e-11);
  };

  PhiDecomposition out;
  const Mat R = frame.rotation();
  const double ztilde2_0 = (R * frame.z_tilde0())(1);
  const double zhat2_T = (R * frame.z_hat(T))(1);
  out.zhat_ratio = zhat2_T / ztilde2_0;
  out.f_tilde_theta_0 = f_tilde(0.0);
  out.f_hat_theta = f_hat();
  out.coef_xdot = out.f_hat_theta - out.zhat_ratio * f_tilde(s + theta);
  out.coef_yhat = out.f_tilde_theta_0;
  const double th = mod_period(theta, T);
  out.reconstructed = out.coef_xdot * frame.x_dot(th) + out.coef_yhat * frame.y_hat(th);
  return out;
}

SymmetryIntegrals symmetry_integrals(const Cycle& cycle, const PerturbedSystem& psys,
                                     const AdjointFrame& frame, const IntegratorConfig& cfg) {
  if (psys.dim() != 2) throw std::invalid_argument("symmetry_integrals: requires dim = 2");
  const double T = cycle.T;
  const double w = 2.0 * M_PI / T;
  // state shape of the forcing, read off where the sine weight is 1
  const double t_ref = M_PI / (2.0 * w);
  auto g_state = [&](const Vec& x) -> Vec { return psys.g(t_ref, x, 0.0); };
  double worst = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double t = T * (0.083 + 0.127 * i);
    const Vec x = cycle.state(T * (0.217 + 0.103 * i));
    const Vec expect = std::sin(w * t) * g_state(x);
    worst = std::max(worst, (psys.g(mod_period(t, T), x, 0.0) - expect).norm() /
                                (1.0 + expect.norm()));
  }
  if (worst > 1e-8)
    throw std::invalid_argument("symmetry_integrals: forcing is not of the form sin(w t) g(x)");

  SymmetryIntegrals out;
  // quarter-period integrals against the full forcing sin(w tau) g(x)
  auto xi_tilde_integrand = [&](double tau) -> Vec {
    const Vec x = cycle.state(tau);
    const Vec xd = psys.base.f(tau, x);
    const Vec gv = psys.g(mod_period(tau, T), x, 0.0);
    const double proj = -xd(1) * gv(0) + xd(0) * gv(1);
    Vec v(2);
    v << proj * std::cos(w * tau), proj * std::sin(w * tau);
    return v;
  };
  out.xi_tilde = 4.0 * quad_vector(xi_tilde_integrand, 0.0, M_PI / (2.0 * w),
                                   cycle.traj.times(), cfg.abs_tol * 10, 1e-11);
  // full-period integrals against the state shape alone
  auto xi_hat_integrand = [&](double tau) -> Vec {
    const Vec x = cycle.state(tau);
    const Vec yh = frame.y_hat(tau);
    const Vec gv = g_state(x);
    const double proj = yh(1) * gv(0) - yh(0) * gv(1);
    Vec v(2);
    v << proj * std::cos(w * tau), proj * std::sin(w * tau);
    return v;
  };
  out.xi_hat = quad_vector(xi_hat_integrand, 0.0, T, cycle.traj.times(), cfg.abs_tol * 10, 1e-11);

  const Mat R = frame.rotation();
  out.y_hat_1_T = (R * frame.y_hat(T))(0);
  out.x_dot_1_0 = (R * psys.base.f(0.0, cycle.x0))(0);
  return out;
}

NondegeneracyScan phi_nondegeneracy_scan(const PerturbedSystem& psys,
                                         const std::vector<Vec>& boundary,
                                         const std::vector<double>& s_grid,
                                         const IntegratorConfig& cfg, double closure_tol) {
  if (boundary.empty() || s_grid.empty())
    throw std::invalid_argument("phi_nondegeneracy_scan: empty grids");
  const double T = psys.period();
  NondegeneracyScan out;
  out.min_norm = std::numeric_limits<double>::infinity();
  std::vector<double> norms;
  const OdeSystem base0 = psys.at(0.0);
  const double s_lo = *std::min_element(s_grid.begin(), s_grid.end());
  const double s_hi = *std::max_element(s_grid.begin(), s_grid.end());
  for (const Vec& xi : boundary) {
    const Vec p0 = flow_map(base0, T, 0.0, xi, cfg);
    if ((p0 - xi).norm() > closure_tol)
      throw std::invalid_argument(
          "phi_nondegeneracy_scan: boundary point is not a fixed point of P_0");
    FlowBundle bundle(psys.base, xi, 0.0, cfg);
    bundle.cover(s_lo - T, s_hi);
    auto q = [&](double tau) -> Vec {
      return bundle.adjoint(tau).transpose() * psys.g(tau, bundle.state(tau), 0.0);
    };
    for (double s : s_grid) {
      const Vec phi = quad_vector(q, s - T, s, bundle.panel_nodes(s - T, s), 1e-10, 1e-9);
      const double nn = phi.norm();
      norms.push_back(nn);
      if (nn < out.min_norm) {
        out.min_norm = nn;
        out.argmin_s = s;
        out.argmin_point = xi;
      }
    }
  }
  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  out.nd_tol = 1e-4 * median;
  out.nondegenerate = out.min_norm > out.nd_tol;
  return out;
}

namespace {

void detect_zeros(BifSamples& bs, const std::function<double(double)>& fn) {
  const auto& th = bs.grid.values;
  const std::size_t m = th.size();
  double vmax = 0.0;
  for (const Vec& v : bs.values) vmax = std::max(vmax, std::abs(v(0)));
  const double tang_tol = 1e-7 * std::max(vmax, 1e-30);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double va = bs.values[i](0), vb = bs.values[i + 1](0);
    if (va == 0.0) {
      bs.zeros.push_back({th[i], ZeroKind::SignChange, (vb - va) / (th[i + 1] - th[i])});
      continue;
    }
    if (va * vb < 0.0) {
      double lo = th[i], hi = th[i + 1];
      double flo = va;
      while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const double fm = fn(mid);
        if (flo * fm <= 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      const double z = 0.5 * (lo + hi);
      bs.zeros.push_back({z, ZeroKind::SignChange, (vb - va) / (th[i + 1] - th[i])});
    } else if (std::abs(vb) < tang_tol && i + 2 < m) {
      const double vc = bs.values[i + 2](0);
      if (std::abs(vb) <= std::abs(va) && std::abs(vb) <= std::abs(vc) && vb * va > 0.0)
        bs.zeros.push_back({th[i + 1], ZeroKind::TangencySuspect, 0.0});
    }
  }
}

}  // namespace

void attach_zero_info(BifSamples& samples, const std::function<double(double)>& fn) {
  samples.zeros.clear();
  detect_zeros(samples, fn);
}

BifSamples scalar_grid(const std::function<double(double)>& fn, const ThetaGrid& grid) {
  BifSamples bs;
  bs.grid = grid;
  bs.values.reserve(grid.values.size());
  for (double th : grid.values) {
    Vec v(1);
    v(0) = fn(th);
    bs.values.push_back(v);
  }
  detect_zeros(bs, fn);
  return bs;
}

BifSamples malkin_grid(const Cycle& cycle, const AdjointFrame& frame, const PerturbedSystem& psys,
                       const ThetaGrid& grid, const IntegratorConfig& cfg) {
  return scalar_grid([&](double th) { return malkin_function(cycle, frame, psys, th, cfg); }, grid);
}

BifSamples melnikov_grid(const Cycle& cycle, const PerturbedSystem& psys, const ThetaGrid& grid,
                         const IntegratorConfig& cfg) {
  return scalar_grid([&](double th) { return melnikov(cycle, psys, th, cfg); }, grid);
}

std::string bif_samples_to_csv(const BifSamples& samples) {
  std::string out;
  const int d = samples.values.empty() ? 1 : static_cast<int>(samples.values.front().size());
  if (d == 1)
    out = "theta,value\n";
  else {
    out = "theta";
    for (int k = 0; k < d; ++k) out += ",v" + std::string(1, static_cast<char>('x' + k));
    out += "\n";
  }
  char buf[64];
  for (std::size_t i = 0; i < samples.grid.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", samples.grid.values[i]);
    out += buf;
    for (int k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g", samples.values[i](k));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string bif_samples_zeros_json(const BifSamples& samples) {
  nlohmann::json j;
  j["zeros"] = nlohmann::json::array();
  for (const auto& z : samples.zeros) {
    nlohmann::json zj;
    zj["theta0"] = z.theta0;
    zj["kind"] = z.kind == ZeroKind::SignChange ? "sign-change" : "tangency-suspect";
    zj["local_slope"] = z.local_slope;
    j["zeros"].push_back(zj);
  }
  j["sample_count"] = samples.grid.values.size();
  return j.dump(2);
}

}  // namespace malkin
