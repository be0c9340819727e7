#include "malkin/ode.hpp"

#include <algorithm>
#include <cmath>

namespace malkin {

double mod_period(double t, double period) {
  double r = t - period * std::floor(t / period);
  if (r >= period) r -= period;  // guard against rounding at the seam
  if (r < 0.0) r += period;
  return r;
}

Mat OdeSystem::jacobian(double t, const Vec& x) const {
  if (jac) return jac(t, x);
  const double h = std::max(1e-6, 1e-7 * x.norm());
  Mat J(dim, dim);
  Vec xp = x, xm = x;
  for (int j = 0; j < dim; ++j) {
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    J.col(j) = (f(t, xp) - f(t, xm)) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return J;
}

Mat PerturbedSystem::forcing_jacobian(double t, const Vec& x, double eps) const {
  if (g_jac) return g_jac(t, x, eps);
  const double h = std::max(1e-6, 1e-7 * x.norm());
  Mat J(base.dim, base.dim);
  Vec xp = x, xm = x;
  for (int j = 0; j < base.dim; ++j) {
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    J.col(j) = (g(t, xp, eps) - g(t, xm, eps)) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return J;
}

OdeSystem PerturbedSystem::at(double eps) const {
  OdeSystem sys;
  sys.dim = base.dim;
  sys.period = base.period;
  sys.autonomous = (eps == 0.0) && base.autonomous;
  const OdeSystem b = base;
  const ForcingFn gg = g;
  sys.f = [b, gg, eps](double t, const Vec& x) -> Vec {
    return b.f(t, x) + eps * gg(t, x, eps);
  };
  if (base.jac) {
    const PerturbedSystem self = *this;
    sys.jac = [self, eps](double t, const Vec& x) -> Mat {
      return self.base.jac(t, x) + eps * self.forcing_jacobian(t, x, eps);
    };
  }
  return sys;
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
    throw std::invalid_argument("integrator tolerances must be positive");
  if (!(max_step > 0.0)) throw std::invalid_argument("max_step must be positive");
  if (method == StepperKind::FixedRK4 && !(fixed_step > 0.0))
    throw std::invalid_argument("fixed_step must be positive");
}

DenseTrajectory::DenseTrajectory(std::vector<double> times, std::vector<Vec> states,
                                 std::vector<Vec> derivs, double t_begin, double t_end)
    : times_(std::move(times)), states_(std::move(states)), derivs_(std::move(derivs)),
      t_begin_(t_begin), t_end_(t_end) {
  if (times_.size() < 1 || times_.size() != states_.size() || times_.size() != derivs_.size())
    throw std::invalid_argument("inconsistent trajectory arrays");
}

std::size_t DenseTrajectory::segment_index(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - times_.begin());
  if (i == 0) return 0;
  if (i >= times_.size()) return times_.size() - 2;
  return i - 1;
}

Vec DenseTrajectory::eval(double t) const {
  const double slack = 1e-9 * (1.0 + std::abs(times_.back()) + std::abs(times_.front()));
  if (t < times_.front() - slack || t > times_.back() + slack)
    throw std::out_of_range("DenseTrajectory::eval outside stored range");
  if (times_.size() == 1) return states_.front();
  t = std::clamp(t, times_.front(), times_.back());
  std::size_t i = segment_index(t);
  const double h = times_[i + 1] - times_[i];
  if (h == 0.0) return states_[i];
  const double s = (t - times_[i]) / h;
  // cubic Hermite basis
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * states_[i] + (h10 * h) * derivs_[i] + h01 * states_[i + 1] +
         (h11 * h) * derivs_[i + 1];
}

Vec DenseTrajectory::eval_derivative(double t) const {
  const double slack = 1e-9 * (1.0 + std::abs(times_.back()) + std::abs(times_.front()));
  if (t < times_.front() - slack || t > times_.back() + slack)
    throw std::out_of_range("DenseTrajectory::eval_derivative outside stored range");
  if (times_.size() == 1) return derivs_.front();
  t = std::clamp(t, times_.front(), times_.back());
  std::size_t i = segment_index(t);
  const double h = times_[i + 1] - times_[i];
  if (h == 0.0) return derivs_[i];
  const double s = (t - times_[i]) / h;
  const double s2 = s * s;
  const double d00 = (6 * s2 - 6 * s) / h, d10 = 3 * s2 - 4 * s + 1;
  const double d01 = (-6 * s2 + 6 * s) / h, d11 = 3 * s2 - 2 * s;
  return d00 * states_[i] + d10 * derivs_[i] + d01 * states_[i + 1] + d11 * derivs_[i + 1];
}

Vec DenseTrajectory::eval_periodic(double t, double period) const {
  return eval(times_.front() + mod_period(t - times_.front(), period));
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Recorder {
  std::vector<double> ts;
  std::vector<Vec> xs, ds;
  void add(double t, const Vec& x, const Vec& d) {
    ts.push_back(t);
    xs.push_back(x);
    ds.push_back(d);
  }
};

void integrate_dopri5(const FieldFn& f, double t0, double t1, const Vec& x0,
                      const IntegratorConfig& cfg, Recorder& rec) {
  const double span = t1 - t0;
  double t = t0;
  Vec x = x0;
  Vec k1 = f(t, x);
  rec.add(t, x, k1);
  double h = std::min({std::abs(span), cfg.max_step, 1e-2 * (1.0 + std::abs(span))});
  if (h <= 0.0) return;
  const int n = static_cast<int>(x.size());
  Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), xt(n), x5(n), err(n);
  std::size_t steps = 0;
  bool last = false;
  while (true) {
    if (h >= std::abs(t1 - t)) {
      h = std::abs(t1 - t);
      last = true;
    }
    if (++steps > cfg.max_steps)
      throw NonconvergenceError("integrator exceeded max step count", t);
    const double dt = h;
    xt = x + dt * (a21 * k1);
    k2 = f(t + c2 * dt, xt);
    xt = x + dt * (a31 * k1 + a32 * k2);
    k3 = f(t + c3 * dt, xt);
    xt = x + dt * (a41 * k1 + a42 * k2 + a43 * k3);
    k4 = f(t + c4 * dt, xt);
    xt = x + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    k5 = f(t + c5 * dt, xt);
    xt = x + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    k6 = f(t + dt, xt);
    x5 = x + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k7 = f(t + dt, x5);
    err = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double errnorm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sk = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(x(i)), std::abs(x5(i)));
      const double q = err(i) / sk;
      errnorm += q * q;
    }
    errnorm = std::sqrt(errnorm / n);
    if (!std::isfinite(errnorm))
      throw NonconvergenceError("non-finite state during integration", t);
    if (errnorm <= 1.0) {
      t = last ? t1 : t + dt;
      x = x5;
      k1 = k7;
      rec.add(t, x, k1);
      if (last) return;
    } else {
      last = false;
    }
    double fac = 0.9 * std::pow(std::max(errnorm, 1e-10), -0.2);
    fac = std::clamp(fac, 0.2, 5.0);
    h = std::min(dt * fac, cfg.max_step);
    if (h < 1e2 * std::numeric_limits<double>::epsilon() * (std::abs(t) + 1.0))
      throw NonconvergenceError("step size underflow", t);
  }
}

void integrate_rk4(const FieldFn& f, double t0, double t1, const Vec& x0,
                   const IntegratorConfig& cfg, Recorder& rec) {
  const double span = t1 - t0;
  const double hstep = std::min(cfg.fixed_step, cfg.max_step);
  const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / hstep)));
  const double h = span / static_cast<double>(m);
  double t = t0;
  Vec x = x0;
  rec.add(t, x, f(t, x));
  for (std::size_t i = 0; i < m; ++i) {
    const Vec k1 = f(t, x);
    const Vec k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    const Vec k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    const Vec k4 = f(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = (i + 1 == m) ? t1 : t0 + h * static_cast<double>(i + 1);
    if (!x.allFinite()) throw NonconvergenceError("non-finite state during integration", t);
    rec.add(t, x, f(t, x));
  }
}

}  // namespace

DenseTrajectory integrate(const OdeSystem& sys, double t0, double t1, const Vec& x0,
                          const IntegratorConfig& cfg) {
  cfg.validate();
  if (!x0.allFinite()) throw std::invalid_argument("integrate: non-finite initial state");
  if (t0 == t1) {
    std::vector<double> ts{t0};
    std::vector<Vec> xs{x0}, ds{sys.f(t0, x0)};
    return DenseTrajectory(std::move(ts), std::move(xs), std::move(ds), t0, t1);
  }

  const bool backward = t1 < t0;
  Recorder rec;
  if (!backward) {
    if (cfg.method == StepperKind::AdaptiveRK45)
      integrate_dopri5(sys.f, t0, t1, x0, cfg, rec);
    else
      integrate_rk4(sys.f, t0, t1, x0, cfg, rec);
  } else {
    // forward integration of the time-reversed field
    const FieldFn rev = [&sys, t0](double tau, const Vec& y) -> Vec {
      return -sys.f(t0 - tau, y);
    };
    try {
      if (cfg.method == StepperKind::AdaptiveRK45)
        integrate_dopri5(rev, 0.0, t0 - t1, x0, cfg, rec);
      else
        integrate_rk4(rev, 0.0, t0 - t1, x0, cfg, rec);
    } catch (const NonconvergenceError& e) {
      throw NonconvergenceError(e.what(), t0 - e.last_time());
    }
    // map back to original (decreasing) times and re-sort ascending
    std::vector<double> ts(rec.ts.size());
    std::vector<Vec> xs(rec.xs.size()), ds(rec.ds.size());
    const std::size_t m = rec.ts.size();
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = m - 1 - i;
      ts[i] = (j == m - 1) ? t1 : t0 - rec.ts[j];
      xs[i] = rec.xs[j];
      ds[i] = -rec.ds[j];
    }
    ts.back() = t0;
    return DenseTrajectory(std::move(ts), std::move(xs), std::move(ds), t0, t1);
  }
  return DenseTrajectory(std::move(rec.ts), std::move(rec.xs), std::move(rec.ds), t0, t1);
}

Vec flow_map(const OdeSystem& sys, double t, double t0, const Vec& xi,
             const IntegratorConfig& cfg) {
  if (t == t0) return xi;
  return integrate(sys, t0, t, xi, cfg).endpoint();
}

Vec poincare_map(const PerturbedSystem& psys, double eps, const Vec& xi,
                 const IntegratorConfig& cfg) {
  if (eps < 0.0) throw std::invalid_argument("poincare_map: eps must be >= 0");
  return flow_map(psys.at(eps), psys.period(), 0.0, xi, cfg);
}

FlowBundle::FlowBundle(const OdeSystem& sys, const Vec& xi, double anchor,
                       const IntegratorConfig& cfg)
    : xi_(xi), anchor_(anchor), dim_(sys.dim), cfg_(cfg) {
  const int n = sys.dim;
  const OdeSystem base = sys;
  joint_.dim = n + 2 * n * n;
  joint_.period = sys.period;
  joint_.autonomous = sys.autonomous;
  joint_.f = [base, n](double t, const Vec& u) -> Vec {
    const Vec x = u.head(n);
    const Mat Y = Eigen::Map<const Mat>(u.data() + n, n, n);
    const Mat Z = Eigen::Map<const Mat>(u.data() + n + n * n, n, n);
    const Mat J = base.jacobian(t, x);
    Vec du(n + 2 * n * n);
    du.head(n) = base.f(t, x);
    Eigen::Map<Mat>(du.data() + n, n, n) = J * Y;
    Eigen::Map<Mat>(du.data() + n + n * n, n, n) = -J.transpose() * Z;
    return du;
  };
}

void FlowBundle::cover(double lo, double hi) {
  const int n = dim_;
  Vec u0(n + 2 * n * n);
  u0.head(n) = xi_;
  Eigen::Map<Mat>(u0.data() + n, n, n) = Mat::Identity(n, n);
  Eigen::Map<Mat>(u0.data() + n + n * n, n, n) = Mat::Identity(n, n);
  const double slack = 1e-12 * (1.0 + std::abs(lo) + std::abs(hi));
  if (hi > anchor_ + slack && (!has_fwd_ || fwd_.t_max() < hi - slack)) {
    fwd_ = integrate(joint_, anchor_, hi, u0, cfg_);
    has_fwd_ = true;
  }
  if (lo < anchor_ - slack && (!has_bwd_ || bwd_.t_min() > lo + slack)) {
    bwd_ = integrate(joint_, anchor_, lo, u0, cfg_);
    has_bwd_ = true;
  }
}

Vec FlowBundle::joint_eval(double t) const {
  const double slack = 1e-9 * (1.0 + std::abs(t) + std::abs(anchor_));
  if (has_fwd_ && t >= anchor_ - slack && t <= fwd_.t_max() + slack)
    return fwd_.eval(std::clamp(t, anchor_, fwd_.t_max()));
  if (has_bwd_ && t <= anchor_ + slack && t >= bwd_.t_min() - slack)
    return bwd_.eval(std::clamp(t, bwd_.t_min(), anchor_));
  if (std::abs(t - anchor_) <= slack) {
    Vec u0(dim_ + 2 * dim_ * dim_);
    u0.head(dim_) = xi_;
    Eigen::Map<Mat>(u0.data() + dim_, dim_, dim_) = Mat::Identity(dim_, dim_);
    Eigen::Map<Mat>(u0.data() + dim_ + dim_ * dim_, dim_, dim_) = Mat::Identity(dim_, dim_);
    return u0;
  }
  throw std::out_of_range("FlowBundle: time outside covered range");
}

Vec FlowBundle::state(double t) const { return joint_eval(t).head(dim_); }

Mat FlowBundle::variational(double t) const {
  const Vec u = joint_eval(t);
  return Eigen::Map<const Mat>(u.data() + dim_, dim_, dim_);
}

Mat FlowBundle::adjoint(double t) const {
  const Vec u = joint_eval(t);
  return Eigen::Map<const Mat>(u.data() + dim_ + dim_ * dim_, dim_, dim_);
}

std::vector<double> FlowBundle::panel_nodes(double a, double b) const {
  std::vector<double> out;
  const double lo = std::min(a, b), hi = std::max(a, b);
  auto collect = [&](const DenseTrajectory& tr) {
    for (double t : tr.times())
      if (t > lo && t < hi) out.push_back(t);
  };
  if (has_fwd_) collect(fwd_);
  if (has_bwd_) collect(bwd_);
  std::sort(out.begin(), out.end());
  return out;
}

Mat variational_matrix(const OdeSystem& sys, double t, double t0, const Vec& xi,
                       const IntegratorConfig& cfg) {
  FlowBundle bundle(sys, xi, t0, cfg);
  bundle.cover(std::min(t, t0), std::max(t, t0));
  return bundle.variational(t);
}

Vec adjoint_solve(const OdeSystem& sys, const DenseTrajectory& traj, double t, double t0,
                  const Vec& z0, const IntegratorConfig& cfg) {
  const int n = sys.dim;
  Vec x0(n);
  if (sys.autonomous && sys.period > 0.0)
    x0 = traj.eval_periodic(t0, sys.period);
  else
    x0 = traj.eval(t0);
  // joint (x, z) system so the adjoint sees a fully resolved orbit
  const OdeSystem base = sys;
  OdeSystem joint;
  joint.dim = 2 * n;
  joint.period = sys.period;
  joint.autonomous = sys.autonomous;
  joint.f = [base, n](double tt, const Vec& u) -> Vec {
    const Vec x = u.head(n);
    const Vec z = u.tail(n);
    Vec du(2 * n);
    du.head(n) = base.f(tt, x);
    du.tail(n) = -base.jacobian(tt, x).transpose() * z;
    return du;
  };
  Vec u0(2 * n);
  u0.head(n) = x0;
  u0.tail(n) = z0;
  if (t == t0) return z0;
  return integrate(joint, t0, t, u0, cfg).endpoint().tail(n);
}

Vec eta(const PerturbedSystem& psys, double s, const Vec& xi, double t,
        const IntegratorConfig& cfg) {
  const int n = psys.dim();
  if (t == s) return Vec::Zero(n);
  FlowBundle bundle(psys.base, xi, 0.0, cfg);
  const double lo = std::min({0.0, s, t});
  const double hi = std::max({0.0, s, t});
  bundle.cover(lo, hi);
  const auto& g = psys.g;
  auto integrand = [&](double tau) -> Vec {
    return bundle.adjoint(tau).transpose() * g(tau, bundle.state(tau), 0.0);
  };
  const Vec integral = quad_vector(integrand, s, t, bundle.panel_nodes(s, t),
                                   cfg.abs_tol * 10.0, cfg.rel_tol * 10.0);
  return bundle.variational(t) * integral;
}

namespace {

// 5- and 10-point Gauss-Legendre rules on [-1, 1].
constexpr double gl5_x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                             0.5384693101056831, 0.9061798459386640};
constexpr double gl5_w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                             0.4786286704993665, 0.2369268850561891};
constexpr double gl10_x[10] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
                               -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
                               0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
                               0.9739065285171717};
constexpr double gl10_w[10] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
                               0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
                               0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                               0.0666713443086881};

Vec gl_panel(const std::function<Vec(double)>& fn, double a, double b, int npts) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  Vec acc;
  if (npts == 5) {
    acc = gl5_w[0] * fn(mid + half * gl5_x[0]);
    for (int i = 1; i < 5; ++i) acc += gl5_w[i] * fn(mid + half * gl5_x[i]);
  } else {
    acc = gl10_w[0] * fn(mid + half * gl10_x[0]);
    for (int i = 1; i < 10; ++i) acc += gl10_w[i] * fn(mid + half * gl10_x[i]);
  }
  return half * acc;
}

void quad_adaptive(const std::function<Vec(double)>& fn, double a, double b, double tol,
                   int depth, Vec& acc) {
  const Vec coarse = gl_panel(fn, a, b, 5);
  const Vec fine = gl_panel(fn, a, b, 10);
  if ((fine - coarse).norm() <= tol || depth >= 24) {
    acc += fine;
    return;
  }
  const double mid = 0.5 * (a + b);
  quad_adaptive(fn, a, mid, 0.5 * tol, depth + 1, acc);
  quad_adaptive(fn, mid, b, 0.5 * tol, depth + 1, acc);
}

}  // namespace

Vec quad_vector(const std::function<Vec(double)>& fn, double a, double b,
                const std::vector<double>& nodes, double abs_tol, double rel_tol) {
  if (a == b) return Vec::Zero(fn(a).size());
  const double sign = (b >= a) ? 1.0 : -1.0;
  const double lo = std::min(a, b), hi = std::max(a, b);
  std::vector<double> edges{lo};
  for (double t : nodes)
    if (t > lo && t < hi) edges.push_back(t);
  edges.push_back(hi);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  // first pass for a magnitude estimate, then refine against a mixed tolerance
  Vec rough = Vec::Zero(fn(lo).size());
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    rough += gl_panel(fn, edges[i], edges[i + 1], 10);
  const double tol = std::max(abs_tol, rel_tol * rough.norm());

  Vec acc = Vec::Zero(rough.size());
  const double total = hi - lo;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double frac = (edges[i + 1] - edges[i]) / total;
    quad_adaptive(fn, edges[i], edges[i + 1], std::max(tol * frac, 1e-300), 0, acc);
  }
  return sign * acc;
}

double quad_scalar(const std::function<double(double)>& fn, double a, double b,
                   const std::vector<double>& nodes, double abs_tol, double rel_tol) {
  auto vfn = [&fn](double t) -> Vec {
    Vec v(1);
    v(0) = fn(t);
    return v;
  };
  return quad_vector(vfn, a, b, nodes, abs_tol, rel_tol)(0);
}

}  // namespace malkin
