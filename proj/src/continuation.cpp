#include "malkin/continuation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace malkin {

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// orthonormal basis of the complement of v (columns)
Mat normal_complement(const Vec& v) {
  const int n = static_cast<int>(v.size());
  if (n == 2) {
    Mat B(2, 1);
    const Vec u = v.normalized();
    B << -u(1), u(0);
    return B;
  }
  Eigen::HouseholderQR<Mat> qr(v);
  const Mat Q = qr.householderQ();
  return Q.rightCols(n - 1);
}

struct PerturbedStep {
  Vec image;   // P_eps(x0)
  Mat Y_T;     // perturbed variational matrix over one period
};

PerturbedStep perturbed_period_map(const PerturbedSystem& psys, double eps, const Vec& x0,
                                   const IntegratorConfig& cfg) {
  const OdeSystem sys = psys.at(eps);
  const int n = sys.dim;
  OdeSystem joint;
  joint.dim = n + n * n;
  joint.period = sys.period;
  joint.autonomous = false;
  joint.f = [sys, n](double t, const Vec& u) -> Vec {
    const Vec x = u.head(n);
    const Mat Y = Eigen::Map<const Mat>(u.data() + n, n, n);
    Vec du(n + n * n);
    du.head(n) = sys.f(t, x);
    Eigen::Map<Mat>(du.data() + n, n, n) = sys.jacobian(t, x) * Y;
    return du;
  };
  Vec u0(n + n * n);
  u0.head(n) = x0;
  Eigen::Map<Mat>(u0.data() + n, n, n) = Mat::Identity(n, n);
  const Vec uT = integrate(joint, 0.0, psys.period(), u0, cfg).endpoint();
  PerturbedStep out;
  out.image = uT.head(n);
  out.Y_T = Eigen::Map<const Mat>(uT.data() + n, n, n);
  return out;
}

DenseTrajectory solution_trajectory(const PerturbedSystem& psys, double eps, const Vec& x0,
                                    const IntegratorConfig& cfg) {
  IntegratorConfig dense = cfg;
  dense.max_step = std::min(dense.max_step, psys.period() / 256.0);
  return integrate(psys.at(eps), 0.0, psys.period(), x0, dense);
}

}  // namespace

PeriodicSolution shoot(const PerturbedSystem& psys, double eps, const Vec& guess,
                       const IntegratorConfig& cfg, const ShootOptions& opts) {
  if (eps < 0.0) throw std::invalid_argument("shoot: eps must be >= 0");
  if (!guess.allFinite()) throw std::invalid_argument("shoot: non-finite guess");
  const int n = psys.dim();
  Vec x = guess;
  PerturbedStep st = perturbed_period_map(psys, eps, x, cfg);
  double res = (st.image - x).norm();
  int iters = 0;
  while (res > opts.shoot_tol) {
    if (iters >= opts.max_iters)
      throw NonconvergenceError("shoot: Newton did not converge", res);
    const Mat J = st.Y_T - Mat::Identity(n, n);
    Eigen::FullPivLU<Mat> lu(J);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible())
      throw NonconvergenceError("shoot: Jacobian near-singular", res);
    const Vec step = lu.solve(-(st.image - x));
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 12; ++k) {
      const Vec xt = x + lambda * step;
      try {
        const PerturbedStep st_t = perturbed_period_map(psys, eps, xt, cfg);
        const double res_t = (st_t.image - xt).norm();
        if (res_t < res || res_t <= opts.shoot_tol) {
          x = xt;
          st = st_t;
          res = res_t;
          accepted = true;
          break;
        }
      } catch (const NonconvergenceError&) {
        // trial blew up; shrink the step
      }
      lambda *= opts.damping;
    }
    ++iters;
    if (!accepted)
      throw NonconvergenceError("shoot: damped step rejected", res);
  }
  PeriodicSolution sol;
  sol.eps = eps;
  sol.x0 = x;
  sol.residual = res;
  sol.newton_iters = iters;
  sol.traj = solution_trajectory(psys, eps, x, cfg);
  return sol;
}

PeriodicSolution bordered_shoot(const PerturbedSystem& psys, double eps, const Cycle& cycle,
                                double phase_guess, const IntegratorConfig& cfg,
                                const ShootOptions& opts, double initial_offset) {
  const int n = psys.dim();
  const OdeSystem& base = psys.base;
  auto basis_at = [&](double th) -> Mat {
    return normal_complement(base.f(th, cycle.state(th)));
  };
  auto point_at = [&](const Vec& y, double th) -> Vec {
    return cycle.state(th) + basis_at(th) * y;
  };

  Vec y = Vec::Constant(n - 1, initial_offset);
  double th = phase_guess;
  Vec x = point_at(y, th);
  PerturbedStep st = perturbed_period_map(psys, eps, x, cfg);
  double res = (st.image - x).norm();
  int iters = 0;
  const double hth = 1e-6 * cycle.T;
  while (res > opts.shoot_tol) {
    if (iters >= opts.max_iters)
      throw NonconvergenceError("bordered_shoot: Newton did not converge", res);
    const Mat B = basis_at(th);
    const Mat dB = (basis_at(th + hth) - basis_at(th - hth)) / (2.0 * hth);
    const Vec dx_dth = base.f(th, cycle.state(th)) + dB * y;
    const Mat JmI = st.Y_T - Mat::Identity(n, n);
    Mat J(n, n);
    J.leftCols(n - 1) = JmI * B;
    J.col(n - 1) = JmI * dx_dth;
    Eigen::FullPivLU<Mat> lu(J);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible())
      throw NonconvergenceError("bordered_shoot: Jacobian near-singular", res);
    const Vec step = lu.solve(-(st.image - x));
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 12; ++k) {
      const Vec yt = y + lambda * step.head(n - 1);
      const double tht = th + lambda * step(n - 1);
      const Vec xt = point_at(yt, tht);
      try {
        const PerturbedStep st_t = perturbed_period_map(psys, eps, xt, cfg);
        const double res_t = (st_t.image - xt).norm();
        if (res_t < res || res_t <= opts.shoot_tol) {
          y = yt;
          th = tht;
          x = xt;
          st = st_t;
          res = res_t;
          accepted = true;
          break;
        }
      } catch (const NonconvergenceError&) {
        // trial blew up; shrink the step
      }
      lambda *= opts.damping;
    }
    ++iters;
    if (!accepted)
      throw NonconvergenceError("bordered_shoot: damped step rejected", res);
  }
  PeriodicSolution sol;
  sol.eps = eps;
  sol.x0 = x;
  sol.residual = res;
  sol.newton_iters = iters;
  sol.traj = solution_trajectory(psys, eps, x, cfg);
  return sol;
}

std::string side_name(Side s) {
  switch (s) {
    case Side::Inside: return "inside";
    case Side::Outside: return "outside";
    default: return "crossing";
  }
}

SideResult classify_side(const PeriodicSolution& sol, const Cycle& cycle, int curve_samples,
                         int traj_samples) {
  const SampledCurve curve = SampledCurve::from_cycle(cycle, curve_samples);
  int in_count = 0, out_count = 0;
  SideResult out;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < traj_samples; ++i) {
    const double t = sol.traj.t_min() +
                     (sol.traj.t_max() - sol.traj.t_min()) * i / (traj_samples - 1.0);
    const Vec p = sol.traj.eval(t);
    const double margin = distance_to_polyline(curve.points, p);
    out.min_margin = std::min(out.min_margin, margin);
    if (point_in_polygon(curve.points, p))
      ++in_count;
    else
      ++out_count;
  }
  if (out.min_margin < 1e-9) out.indeterminate = true;
  if (in_count > 0 && out_count == 0)
    out.side = Side::Inside;
  else if (out_count > 0 && in_count == 0)
    out.side = Side::Outside;
  else
    out.side = Side::Crossing;
  return out;
}

namespace {

struct PhaseEstimate {
  double theta;
  double dist;
};

PhaseEstimate estimate_phase(const Cycle& cycle, const Vec& x0) {
  const int m = 512;
  double best_t = 0.0, best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    const double th = cycle.T * i / m;
    const double d = (cycle.state(th) - x0).norm();
    if (d < best_d) {
      best_d = d;
      best_t = th;
    }
  }
  // golden-section refinement around the best node
  double a = best_t - cycle.T / m, b = best_t + cycle.T / m;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = (cycle.state(c) - x0).norm(), fd = (cycle.state(d) - x0).norm();
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = (cycle.state(c) - x0).norm();
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = (cycle.state(d) - x0).norm();
    }
  }
  const double th = mod_period(0.5 * (a + b), cycle.T);
  return {th, (cycle.state(th) - x0).norm()};
}

double trajectory_distance(const PeriodicSolution& sol, const SampledCurve& curve,
                           int samples = 256) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = sol.traj.t_min() +
                     (sol.traj.t_max() - sol.traj.t_min()) * i / (samples - 1.0);
    worst = std::max(worst, distance_to_polyline(curve.points, sol.traj.eval(t)));
  }
  return worst;
}

}  // namespace

SweepRecord epsilon_sweep(const PerturbedSystem& psys, const Cycle& cycle, double phase_guess,
                          const std::vector<double>& eps_list, const IntegratorConfig& cfg,
                          const ShootOptions& opts) {
  if (eps_list.empty()) throw std::invalid_argument("epsilon_sweep: empty eps list");
  for (std::size_t i = 0; i + 1 < eps_list.size(); ++i)
    if (!(eps_list[i] > eps_list[i + 1]) || !(eps_list.back() > 0.0))
      throw std::invalid_argument("epsilon_sweep: eps list must be strictly decreasing positive");

  const SampledCurve curve = SampledCurve::from_cycle(cycle, 1024);
  SweepRecord rec;
  double th = phase_guess;
  double offset = 0.0;
  double prev_eps = eps_list.front();
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    PeriodicSolution sol;
    try {
      sol = bordered_shoot(psys, eps, cycle, th, cfg, opts, offset * (eps / prev_eps));
    } catch (const NonconvergenceError& e) {
      if (i == 0) throw;
      rec.truncated = true;
      rec.truncation_reason = e.what();
      break;
    }
    const PhaseEstimate pe = estimate_phase(cycle, sol.x0);
    SweepPoint pt;
    pt.eps = eps;
    pt.x0 = sol.x0;
    pt.phase = pe.theta;
    pt.dist0 = pe.dist;
    pt.dist_traj = trajectory_distance(sol, curve);
    pt.side = classify_side(sol, cycle).side;
    rec.points.push_back(pt);
    // warm start for the next eps
    const Vec n_hat = normal_complement(psys.base.f(pe.theta, cycle.state(pe.theta))).col(0);
    offset = n_hat.dot(sol.x0 - cycle.state(pe.theta));
    th = pe.theta;
    prev_eps = eps;
  }
  return rec;
}

RateFit fit_power_law(const std::vector<double>& eps, const std::vector<double>& dist) {
  RateFit fit;
  std::vector<double> xs, ys;
  const double noise_floor = 1e2 * std::numeric_limits<double>::epsilon();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (dist[i] <= noise_floor) {
      fit.excluded.push_back(i);
      continue;
    }
    xs.push_back(std::log(eps[i]));
    ys.push_back(std::log(dist[i]));
  }
  const std::size_t m = xs.size();
  if (m < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double dm = static_cast<double>(m);
  const double denom = dm * sxx - sx * sx;
  fit.slope = (dm * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / dm;
  const double ss_tot = syy - sy * sy / dm;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.used_points = static_cast<int>(m);
  return fit;
}

RateFit rate_fit(const SweepRecord& sweep) {
  if (sweep.points.size() < 4)
    throw std::invalid_argument("rate_fit: need at least 4 sweep points");
  std::vector<double> eps, dist;
  for (const auto& p : sweep.points) {
    eps.push_back(p.eps);
    dist.push_back(p.dist0);
  }
  return fit_power_law(eps, dist);
}

double averaging_limit_residual(const PerturbedSystem& psys, const Cycle& cycle,
                                const PeriodicSolution& sol, const std::vector<double>& t_grid,
                                const IntegratorConfig& cfg) {
  const OdeSystem base0 = psys.at(0.0);
  const int n = psys.dim();
  const Mat Y_T = variational_matrix(base0, cycle.T, 0.0, cycle.x0, cfg);
  const Mat YmI = Y_T - Mat::Identity(n, n);
  double worst = 0.0;
  for (double t : t_grid) {
    const Vec xe = sol.traj.eval(t);
    const Vec pulled = flow_map(base0, 0.0, t, xe, cfg);
    const Vec lhs = YmI * ((cycle.x0 - pulled) / sol.eps);
    const Vec phi = averaging_phi(psys, t, cycle.x0, cfg);
    worst = std::max(worst, (lhs - phi).norm());
  }
  return worst;
}

TransversalMelnikov transversal_melnikov(const Cycle& cycle, const PerturbedSystem& psys,
                                         double s, const IntegratorConfig& cfg, bool strict) {
  const double T = cycle.T;
  FlowBundle bundle(psys.base, cycle.x0, 0.0, cfg);
  bundle.cover(std::min(s - T, 0.0), std::max(s, T));

  TransversalMelnikov out;
  out.basis0 = normal_complement(psys.base.f(0.0, cycle.x0));
  const Mat ZT_cols = bundle.adjoint(T) * out.basis0;  // z_i(T) columns
  out.basis_periodic = (ZT_cols - out.basis0).norm() <= 1e-5 * out.basis0.norm();
  if (out.basis_periodic && strict)
    throw std::runtime_error(
        "transversal_melnikov: adjoint basis is periodic (unit multiplier multiplicity > 1)");

  auto integrand = [&](double tau) -> Vec {
    const Mat Z = bundle.adjoint(tau) * out.basis0;  // n x (n-1)
    return Z.transpose() * psys.g(tau, bundle.state(tau), 0.0);
  };
  out.value = quad_vector(integrand, s - T, s, bundle.panel_nodes(s - T, s), cfg.abs_tol * 10,
                          1e-11);
  // transport matrix: Z*(t) = d_tilde Z*(t+T); solve rows in least squares
  const Mat A0 = out.basis0.transpose();       // Z*(0)
  const Mat AT = ZT_cols.transpose();          // Z*(T)
  out.d_tilde = AT.transpose()
                    .jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                    .solve(A0.transpose())
                    .transpose();
  return out;
}

namespace {

void push_check(TheoremEntry& e, const std::string& name, bool passed, double margin,
                const std::string& detail = "") {
  e.hypotheses.push_back({name, passed, margin, detail});
}

void finalize(TheoremEntry& e) {
  e.applicable = !e.hypotheses.empty() &&
                 std::all_of(e.hypotheses.begin(), e.hypotheses.end(),
                             [](const HypothesisCheck& h) { return h.passed; });
  if (!e.applicable) e.conclusion = "hypotheses not satisfied";
}

struct SinusoidalProbe {
  bool matches = false;
  int k = 1;
  std::function<double(const Vec&)> g_scalar;
};

SinusoidalProbe detect_sinusoidal_forcing(const PerturbedSystem& psys, const Cycle& cycle) {
  const double T = psys.period();
  for (int k = 1; k <= 4; ++k) {
    const double w = 2.0 * M_PI * k / T;
    const double t_ref = M_PI / (2.0 * w);
    auto gs = [&psys, t_ref](const Vec& x) { return psys.g(t_ref, x, 0.0)(1); };
    bool ok = true;
    for (int i = 0; i < 9 && ok; ++i) {
      const double t = T * (0.071 + 0.113 * i);
      const Vec x = cycle.state(T * (0.149 + 0.083 * i));
      Vec expect(2);
      expect << 0.0, std::sin(w * t) * gs(x);
      ok = (psys.g(mod_period(t, T), x, 0.0) - expect).norm() <= 1e-8 * (1.0 + expect.norm());
    }
    if (ok) {
      SinusoidalProbe p;
      p.matches = true;
      p.k = k;
      p.g_scalar = [&psys, t_ref](const Vec& x) { return psys.g(t_ref, x, 0.0)(1); };
      return p;
    }
  }
  return {};
}

bool planar_symmetry_holds(const PerturbedSystem& psys, const Cycle& cycle, double* worst_out) {
  // reflection symmetries of f, the trace-free condition, and the matching
  // reflection structure of the forcing shape
  const auto& f = psys.base.f;
  double worst = 0.0;
  auto upd = [&worst](double d) { worst = std::max(worst, d); };
  for (int i = 0; i < 11; ++i) {
    const Vec xi = v2(std::sin(2.1 * i + 0.4) * 1.2, std::cos(1.7 * i + 0.9) * 1.1);
    const Vec fx = f(0.0, xi);
    const Vec f_mx = f(0.0, v2(-xi(0), xi(1)));
    const Vec f_my = f(0.0, v2(xi(0), -xi(1)));
    upd(std::abs(fx(0) - f_mx(0)));
    upd(std::abs(fx(1) + f_mx(1)));
    upd(std::abs(fx(0) + f_my(0)));
    upd(std::abs(fx(1) - f_my(1)));
    const Mat J = psys.base.jacobian(0.0, xi);
    upd(std::abs(J(0, 0) + J(1, 1)));
  }
  const double T = psys.period();
  const double w = 2.0 * M_PI / T;
  const double t_ref = M_PI / (2.0 * w);
  auto gshape = [&](const Vec& x) { return psys.g(t_ref, x, 0.0); };
  for (int i = 0; i < 11; ++i) {
    const Vec xi = v2(std::sin(1.3 * i + 0.2), std::cos(2.3 * i + 0.5));
    const Vec gx = gshape(xi);
    const Vec g_my = gshape(v2(xi(0), -xi(1)));
    const Vec g_mx = gshape(v2(-xi(0), xi(1)));
    upd(std::abs(gx(0) + g_my(0)));
    upd(std::abs(gx(1) - g_my(1)));
    upd(std::abs(gx(0) + g_mx(0)));
    upd(std::abs(gx(1) - g_mx(1)));
  }
  // cycle alignment: x(0) on the positive vertical axis, x_dot(0) horizontal
  upd(std::abs(cycle.x0(0)));
  const Vec xd0 = f(0.0, cycle.x0);
  upd(std::abs(xd0(1)));
  if (worst_out) *worst_out = worst;
  return worst <= 1e-8;
}

}  // namespace

PredictionReport predict(const PerturbedSystem& psys, const Cycle& cycle,
                         const AdjointFrame& frame, const IntegratorConfig& cfg,
                         const PredictOptions& opts) {
  PredictionReport rep;
  const int n = psys.dim();
  const double T = cycle.T;
  const MonodromyData md = monodromy(psys.at(0.0), cycle, cfg);
  rep.unit_multiplicity = md.unit_multiplicity;

  // Melnikov zeros double as the f_tilde(. , 0) zeros of the decomposition
  BifSamples mel;
  if (n == 2)
    mel = melnikov_grid(cycle, psys, ThetaGrid::uniform(T, opts.theta_samples), cfg);

  // --- simple-cycle route: Malkin sign-change zeros
  {
    TheoremEntry e;
    e.name = "malkin-sign-change";
    push_check(e, "simple cycle (unit multiplier multiplicity 1)", md.unit_multiplicity == 1,
               static_cast<double>(1 - md.unit_multiplicity));
    if (md.unit_multiplicity == 1) {
      const BifSamples mg =
          malkin_grid(cycle, frame, psys, ThetaGrid::uniform(T, opts.theta_samples), cfg);
      int sign_changes = 0;
      for (const auto& z : mg.zeros)
        if (z.kind == ZeroKind::SignChange) {
          ++sign_changes;
          e.phases.push_back(z.theta0);
        }
      push_check(e, "Malkin function has sign-change zeros", sign_changes > 0,
                 static_cast<double>(sign_changes));
      if (sign_changes > 0) {
        e.predicted_count = sign_changes;
        e.conclusion = "a T-periodic solution converges to each listed phase shift";
      }
    }
    finalize(e);
    rep.entries.push_back(e);
  }

  // --- sinusoidal phase formula
  if (md.unit_multiplicity == 1 && n == 2) {
    const SinusoidalProbe probe = detect_sinusoidal_forcing(psys, cycle);
    if (probe.matches) {
      TheoremEntry e;
      e.name = "sinusoidal-phase-formula";
      SinusoidalShape shape{probe.k, probe.g_scalar};
      const SinusoidalCoefficients co = sinusoidal_decomposition(cycle, frame, psys, shape, cfg);
      push_check(e, "M_cos nonzero", std::abs(co.M_cos) > 1e-6, std::abs(co.M_cos));
      if (std::abs(co.M_cos) > 1e-6) {
        e.phases = predicted_phases(co.M_sin, co.M_cos, T, probe.k);
        e.predicted_count = static_cast<int>(e.phases.size());
        e.conclusion = "one T-periodic solution per predicted phase";
      }
      finalize(e);
      rep.entries.push_back(e);
    }
  }

  if (n != 2) return rep;

  // --- averaged-field degree route (two solutions, opposite sides)
  NondegeneracyScan scan;
  bool have_scan = false;
  DegreeResult deg;
  bool have_deg = false;
  {
    TheoremEntry e;
    e.name = "averaged-degree-two-solutions";
    std::vector<Vec> boundary;
    for (int i = 0; i < opts.boundary_samples; ++i)
      boundary.push_back(cycle.state(T * i / opts.boundary_samples));
    std::vector<double> s_grid;
    for (int i = 0; i < opts.s_samples; ++i) s_grid.push_back(T * i / (opts.s_samples - 1.0));
    try {
      scan = phi_nondegeneracy_scan(psys, boundary, s_grid, cfg);
      have_scan = true;
      push_check(e, "averaged field nonvanishing on the cycle", scan.nondegenerate,
                 scan.min_norm - scan.nd_tol);
    } catch (const std::exception& ex) {
      push_check(e, "averaged field nonvanishing on the cycle", false, 0.0, ex.what());
    }
    if (have_scan && scan.nondegenerate) {
      const SampledCurve curve = SampledCurve::from_cycle(cycle, 128);
      auto F = [&](const Vec& xi) -> Vec { return -averaging_phi(psys, T, xi, cfg, 1e-6); };
      deg = boundary_degree(F, curve);
      have_deg = true;
      push_check(e, "degree of -Phi^T differs from 1", deg.value != 1,
                 std::abs(deg.value - 1), "degree = " + std::to_string(deg.value));
      if (deg.value != 1) {
        e.predicted_count = 2;
        e.predicts_sides = true;
        e.predicts_noncrossing = true;
        e.conclusion = "at least two T-periodic solutions, one inside and one outside the "
                       "cycle, none crossing it";
      }
    }
    finalize(e);
    rep.entries.push_back(e);
  }

  // --- decomposition bound at the Melnikov zeros (multiplicity-2 cycles)
  if (md.unit_multiplicity == 2) {
    TheoremEntry e;
    e.name = "decomposition-bound";
    double worst_margin = std::numeric_limits<double>::infinity();
    int zero_count = 0;
    for (const auto& z : mel.zeros) {
      if (z.kind != ZeroKind::SignChange) continue;
      ++zero_count;
      const double th0 = z.theta0;
      double max_rhs = 0.0;
      double fhat = 0.0;
      for (int i = 0; i < opts.s_samples; ++i) {
        const double s = T * i / (opts.s_samples - 1.0);
        const PhiDecomposition dec = phi_decomposition(cycle, frame, psys, s, th0, cfg);
        fhat = dec.f_hat_theta;
        max_rhs = std::max(max_rhs,
                           std::abs(dec.coef_xdot - dec.f_hat_theta));  // |ratio * f_tilde|
      }
      worst_margin = std::min(worst_margin, std::abs(fhat) - max_rhs);
      e.phases.push_back(th0);
    }
    push_check(e, "unit multiplier multiplicity 2", true, 0.0);
    push_check(e, "Melnikov zeros exist", zero_count > 0, static_cast<double>(zero_count));
    if (zero_count > 0)
      push_check(e, "|f_hat| dominates the shifted f_tilde term at every zero",
                 worst_margin > 0.0, worst_margin);
    if (have_deg)
      push_check(e, "degree of -Phi^T differs from 1", deg.value != 1,
                 std::abs(deg.value - 1));
    finalize(e);
    if (e.applicable) {
      e.predicted_count = 2;
      e.predicts_sides = true;
      e.predicts_noncrossing = true;
      e.conclusion = "no T-periodic solution touches the cycle; two solutions on opposite sides";
    }
    rep.entries.push_back(e);
  }

  // --- symmetric sinusoidal route
  {
    double sym_worst = 0.0;
    const bool symmetric = planar_symmetry_holds(psys, cycle, &sym_worst);
    const SinusoidalProbe probe = detect_sinusoidal_forcing(psys, cycle);
    if (symmetric && probe.matches && probe.k == 1) {
      TheoremEntry e;
      e.name = "symmetric-two-solutions";
      push_check(e, "reflection symmetries of f and g", true, sym_worst);
      push_check(e, "unit multiplier multiplicity 2", md.unit_multiplicity == 2,
                 static_cast<double>(md.unit_multiplicity));
      const SymmetryIntegrals si = symmetry_integrals(cycle, psys, frame, cfg);
      push_check(e, "xi_tilde_1 positive", si.xi_tilde(0) > 0.0, si.xi_tilde(0));
      const double ratio = std::abs(si.y_hat_1_T) / si.x_dot_1_0;
      const double lhs = std::abs(si.xi_hat(0)) + ratio * si.xi_tilde(0);
      const double rhs =
          std::min(std::abs(si.xi_hat(1)) - 0.25 * ratio * si.xi_tilde(1), si.xi_tilde(0));
      push_check(e, "symmetric smallness condition", rhs - lhs > 0.0, rhs - lhs,
                 "lhs=" + std::to_string(lhs) + " rhs=" + std::to_string(rhs));
      finalize(e);
      if (e.applicable) {
        e.predicted_count = 2;
        e.predicts_sides = true;
        e.predicts_noncrossing = true;
        e.conclusion = "two T-periodic solutions on opposite sides of the cycle";
        for (const auto& z : mel.zeros)
          if (z.kind == ZeroKind::SignChange) e.phases.push_back(z.theta0);
      }
      rep.entries.push_back(e);
    }
  }

  // --- degenerate-family route
  if (opts.family_probe) {
    TheoremEntry e;
    e.name = "degenerate-family-two-solutions";
    DegeneracyReport dr;
    bool ok = true;
    try {
      double alpha0 = 1.0;
      dr = degeneracy_report(psys.at(0.0), opts.family_probe, alpha0, cfg);
    } catch (const std::exception& ex) {
      ok = false;
      push_check(e, "family degeneracy probe", false, 0.0, ex.what());
    }
    if (ok) {
      rep.degenerate_cycle = dr.degenerate;
      push_check(e, "degenerate cycle (period derivative zero)", dr.degenerate,
                 -std::abs(dr.T_prime));
      if (have_scan)
        push_check(e, "averaged field nonvanishing on the cycle", scan.nondegenerate,
                   scan.min_norm - scan.nd_tol);
      if (have_deg)
        push_check(e, "degree of -Phi^T differs from 1", deg.value != 1,
                   std::abs(deg.value - 1));
      // degenerate cycles make Phi^s independent of s; f_hat must not vanish
      // together with f_tilde
      if (dr.degenerate) {
        double min_fhat = std::numeric_limits<double>::infinity();
        for (const auto& z : mel.zeros) {
          if (z.kind != ZeroKind::SignChange) continue;
          const PhiDecomposition dec = phi_decomposition(cycle, frame, psys, 0.0, z.theta0, cfg);
          min_fhat = std::min(min_fhat, std::abs(dec.f_hat_theta));
          e.phases.push_back(z.theta0);
        }
        if (!e.phases.empty())
          push_check(e, "f_hat nonzero at each Melnikov zero", min_fhat > 1e-8, min_fhat);
      }
    }
    finalize(e);
    if (e.applicable) {
      e.predicted_count = 2;
      e.predicts_sides = true;
      e.predicts_noncrossing = true;
      e.conclusion = "two T-periodic solutions on opposite sides of the degenerate cycle";
    }
    rep.entries.push_back(e);
  }

  return rep;
}

TwoSidedResult find_two_sided(const PerturbedSystem& psys, double eps, const Cycle& cycle,
                              const std::vector<double>& phases, const IntegratorConfig& cfg,
                              const ShootOptions& opts, double proximity_cap) {
  double scale = 0.0;
  for (int i = 0; i < 32; ++i) scale = std::max(scale, cycle.state(cycle.T * i / 32.0).norm());
  const SampledCurve curve = SampledCurve::from_cycle(cycle, 1024);
  const std::vector<double> offsets = {0.0,   0.005, -0.005, 0.01, -0.01,
                                       0.02,  -0.02, 0.04,   -0.04, 0.08, -0.08};
  TwoSidedResult out;
  for (double ph : phases) {
    for (double off : offsets) {
      PeriodicSolution sol;
      try {
        sol = bordered_shoot(psys, eps, cycle, ph, cfg, opts, off * scale);
      } catch (const NonconvergenceError&) {
        continue;
      }
      if (trajectory_distance(sol, curve) > proximity_cap * scale) continue;
      bool duplicate = false;
      for (const auto& prev : out.all)
        if ((prev.x0 - sol.x0).norm() <= 10.0 * opts.shoot_tol) {
          duplicate = true;
          break;
        }
      if (duplicate) continue;
      const SideResult side = classify_side(sol, cycle);
      out.all.push_back(sol);
      if (side.side == Side::Inside && !out.inside) {
        out.inside = sol;
        out.inside_class = side;
      } else if (side.side == Side::Outside && !out.outside) {
        out.outside = sol;
        out.outside_class = side;
      }
      if (out.inside && out.outside) return out;
    }
  }
  return out;
}

FirstExit first_exit(const Cycle& cycle, const SampledCurve& boundary, double contact_tol,
                     int samples) {
  FirstExit out;
  const double T = cycle.T;
  // skip the seam: the cycle may start exactly on the boundary
  const double skip = T * 1e-4;
  auto state_at = [&](double t) { return cycle.state(t); };
  auto inside_at = [&](double t) { return point_in_polygon(boundary.points, state_at(t)); };
  auto dist_at = [&](double t) {
    return distance_to_polyline(boundary.points, state_at(t));
  };

  out.starts_inside = inside_at(skip);
  bool prev_inside = out.starts_inside;
  double prev_t = skip;
  std::vector<double> dist_samples(static_cast<std::size_t>(samples) + 1);
  std::vector<double> t_samples(dist_samples.size());
  t_samples[0] = skip;
  dist_samples[0] = dist_at(skip);
  for (int i = 1; i <= samples; ++i) {
    const double t = skip + (T - 2.0 * skip) * i / samples;
    t_samples[static_cast<std::size_t>(i)] = t;
    dist_samples[static_cast<std::size_t>(i)] = dist_at(t);
    const bool inside = inside_at(t);
    if (inside != prev_inside) {
      // bisect the flip
      double lo = prev_t, hi = t;
      while (hi - lo > 1e-12 * T) {
        const double mid = 0.5 * (lo + hi);
        if (inside_at(mid) == prev_inside)
          lo = mid;
        else
          hi = mid;
      }
      const double tc = 0.5 * (lo + hi);
      out.contact_times.push_back(tc);
      if (!out.exit_time) out.exit_time = tc;
      prev_inside = inside;
    }
    prev_t = t;
  }
  // tangential contacts: local minima of the distance refined by golden
  // section, accepted when they come within contact_tol
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (std::size_t i = 1; i + 1 < dist_samples.size(); ++i) {
    if (!(dist_samples[i] <= dist_samples[i - 1] && dist_samples[i] <= dist_samples[i + 1]))
      continue;
    if (dist_samples[i] > 1e-2) continue;
    double a = t_samples[i - 1], b = t_samples[i + 1];
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist_at(c), fd = dist_at(d);
    for (int it = 0; it < 80; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = dist_at(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = dist_at(d);
      }
    }
    const double tm = 0.5 * (a + b);
    if (dist_at(tm) <= contact_tol) {
      bool duplicate = false;
      for (double tc : out.contact_times)
        if (std::abs(tc - tm) < 1e-6 * T) duplicate = true;
      if (!duplicate) out.contact_times.push_back(tm);
    }
  }
  std::sort(out.contact_times.begin(), out.contact_times.end());
  out.touches_only = !out.exit_time.has_value() && !out.contact_times.empty();
  return out;
}

std::string sweep_to_csv(const SweepRecord& sweep) {
  std::string out = "eps,dist,phase,side\n";
  char buf[160];
  for (const auto& p : sweep.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%s\n", p.eps, p.dist0, p.phase,
                  side_name(p.side).c_str());
    out += buf;
  }
  return out;
}

std::string sweep_to_json(const SweepRecord& sweep) {
  nlohmann::json j;
  j["truncated"] = sweep.truncated;
  if (sweep.truncated) j["truncation_reason"] = sweep.truncation_reason;
  j["points"] = nlohmann::json::array();
  for (const auto& p : sweep.points) {
    nlohmann::json pj;
    pj["eps"] = p.eps;
    pj["x0"] = std::vector<double>(p.x0.data(), p.x0.data() + p.x0.size());
    pj["dist_traj"] = p.dist_traj;
    pj["dist0"] = p.dist0;
    pj["phase"] = p.phase;
    pj["side"] = side_name(p.side);
    j["points"].push_back(pj);
  }
  return j.dump(2);
}

std::string prediction_report_json(const PredictionReport& report) {
  nlohmann::json j;
  j["unit_multiplicity"] = report.unit_multiplicity;
  j["degenerate_cycle"] = report.degenerate_cycle;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json ej;
    ej["name"] = e.name;
    ej["applicable"] = e.applicable;
    ej["conclusion"] = e.conclusion;
    ej["predicted_count"] = e.predicted_count;
    ej["predicts_sides"] = e.predicts_sides;
    ej["predicts_noncrossing"] = e.predicts_noncrossing;
    ej["phases"] = e.phases;
    ej["hypotheses"] = nlohmann::json::array();
    for (const auto& h : e.hypotheses) {
      nlohmann::json hj;
      hj["name"] = h.name;
      hj["passed"] = h.passed;
      hj["margin"] = h.margin;
      if (!h.detail.empty()) hj["detail"] = h.detail;
      ej["hypotheses"].push_back(hj);
    }
    j["entries"].push_back(ej);
  }
  return j.dump(2);
}

}  // namespace malkin
