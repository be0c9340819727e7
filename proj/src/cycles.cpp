#include "malkin/cycles.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace malkin {

namespace {

Mat rotation_aligning_first_axis(const Vec& v) {
  // orthogonal R with R*v = (|v|, 0) in 2D; identity otherwise
  if (v.size() != 2) return Mat::Identity(v.size(), v.size());
  const double phi = std::atan2(v(1), v(0));
  Mat R(2, 2);
  R << std::cos(phi), std::sin(phi), -std::sin(phi), std::cos(phi);
  return R;
}

}  // namespace

MonodromyData classify_multipliers(const Mat& Y_T, double unit_tol) {
  MonodromyData md;
  md.Y_T = Y_T;
  const int n = static_cast<int>(Y_T.rows());
  Eigen::EigenSolver<Mat> es(Y_T);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("classify_multipliers: eigenvalue solver failed");
  for (int i = 0; i < n; ++i) md.multipliers.push_back(es.eigenvalues()(i));
  std::sort(md.multipliers.begin(), md.multipliers.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
            });

  const double im_tol = 10.0 * unit_tol;
  if (n == 2) {
    // characteristic polynomial route: eigenvalue splitting of a near-Jordan
    // block is sqrt(entry error), trace/determinant are not
    const double tr = Y_T.trace();
    const double det = Y_T.determinant();
    const double scale = std::max({1.0, std::abs(tr), std::abs(det)});
    const bool has_unit = std::abs(1.0 - tr + det) <= unit_tol * scale;
    if (has_unit) {
      md.unit_multiplicity =
          (std::abs(det - 1.0) <= unit_tol * std::max(1.0, std::abs(det))) ? 2 : 1;
      // spectrum is exactly {1, det}; overwrite the noise-split eigenvalues
      md.multipliers = {std::complex<double>(std::max(1.0, det), 0.0),
                        std::complex<double>(std::min(1.0, det), 0.0)};
      if (md.unit_multiplicity == 2) md.multipliers = {1.0, 1.0};
      md.beta = (md.unit_multiplicity == 1 && det > 1.0 + unit_tol) ? 1 : 0;
      return md;
    }
    md.unit_multiplicity = 0;
  } else {
    for (const auto& mu : md.multipliers)
      if (std::abs(mu - 1.0) <= unit_tol * std::max(1.0, std::abs(mu))) ++md.unit_multiplicity;
  }

  for (const auto& mu : md.multipliers)
    if (std::abs(mu.imag()) <= im_tol * std::max(1.0, std::abs(mu)) &&
        mu.real() > 1.0 + unit_tol)
      ++md.beta;
  return md;
}

bool is_simple_cycle(const MonodromyData& md) { return md.unit_multiplicity == 1; }

namespace {

struct ReturnHit {
  double time;
  Vec point;
};

// First crossing of the section <n, x - p> = 0 with orientation matching
// sign<n, f> at the start, after opts.section_skip.
ReturnHit first_return(const OdeSystem& sys, const Vec& x_start, const Vec& p, const Vec& n_hat,
                       double orientation, const IntegratorConfig& cfg,
                       const FindCycleOptions& opts) {
  const double chunk = std::max(1.0, 4.0 * opts.section_skip);
  double t0 = 0.0;
  Vec x = x_start;
  while (t0 < opts.max_time) {
    const double t1 = std::min(t0 + chunk, opts.max_time);
    DenseTrajectory tr = integrate(sys, t0, t1, x, cfg);
    // scan a fine grid of the dense output for an oriented sign change
    const std::size_t m = std::max<std::size_t>(64, 4 * tr.size());
    double prev_t = t0;
    double prev_s = n_hat.dot(tr.eval(t0) - p);
    for (std::size_t i = 1; i <= m; ++i) {
      const double t = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(m);
      const double s = n_hat.dot(tr.eval(t) - p);
      if (t > opts.section_skip && prev_s * s < 0.0 && orientation * (s - prev_s) > 0.0) {
        double lo = prev_t, hi = t;
        for (int it = 0; it < 80 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
          const double mid = 0.5 * (lo + hi);
          const double sm = n_hat.dot(tr.eval(mid) - p);
          if (orientation * sm < 0.0)
            lo = mid;
          else
            hi = mid;
        }
        double tc = 0.5 * (lo + hi);
        // the start point sits on the section up to rounding; a "crossing"
        // collapsing onto t = 0 is that rounding, not a return
        if (tc <= opts.section_skip) {
          prev_t = t;
          prev_s = s;
          continue;
        }
        Vec xc = tr.eval(tc);
        // Newton polish on the exact flow
        for (int it = 0; it < 5; ++it) {
          const double s_c = n_hat.dot(xc - p);
          const double sd = n_hat.dot(sys.f(tc, xc));
          if (sd == 0.0) break;
          const double dt = -s_c / sd;
          tc += dt;
          xc = flow_map(sys, tc, 0.0, x_start, cfg);
          if (std::abs(dt) < 1e-14 * (1.0 + std::abs(tc))) break;
        }
        if (tc > opts.section_skip) return {tc, xc};
      }
      prev_t = t;
      prev_s = s;
    }
    x = tr.back();
    t0 = t1;
  }
  throw NonconvergenceError("find_cycle: no recurrence within max_time", opts.max_time);
}

}  // namespace

Cycle find_cycle(const OdeSystem& sys, const Vec& guess, const Vec& section_normal,
                 const IntegratorConfig& cfg, const FindCycleOptions& opts) {
  if (!sys.autonomous) throw std::invalid_argument("find_cycle: system must be autonomous");
  Vec n_hat = section_normal.normalized();
  Vec p = guess;
  const Vec f0 = sys.f(0.0, p);
  const double orientation0 = n_hat.dot(f0);
  if (std::abs(orientation0) < 1e-12 * f0.norm())
    throw std::invalid_argument("find_cycle: section normal orthogonal to the field at guess");
  const double orientation = orientation0 > 0 ? 1.0 : -1.0;

  const int n = sys.dim;
  Vec x = p;
  double period = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= opts.max_newton_iters; ++iter) {
    const ReturnHit hit = first_return(sys, x, p, n_hat, orientation, cfg, opts);
    period = hit.time;
    const Vec G = hit.point - x;
    residual = G.norm();
    if (residual <= opts.closure_tol) break;
    if (iter == opts.max_newton_iters)
      throw NonconvergenceError("find_cycle: Newton nonconvergent", period);
    // return-map Jacobian with the return-time correction, then a bordered
    // solve keeping the update inside the section
    const Mat Y = variational_matrix(sys, period, 0.0, x, cfg);
    const Vec fR = sys.f(period, hit.point);
    const Mat JR = (Mat::Identity(n, n) - fR * n_hat.transpose() / n_hat.dot(fR)) * Y;
    Mat A(n + 1, n + 1);
    A.topLeftCorner(n, n) = JR - Mat::Identity(n, n);
    A.topRightCorner(n, 1) = n_hat;
    A.bottomLeftCorner(1, n) = n_hat.transpose();
    A(n, n) = 0.0;
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible())
      throw NonconvergenceError("find_cycle: section degenerate", period);
    Vec rhs(n + 1);
    rhs.head(n) = -G;
    rhs(n) = 0.0;
    const Vec step = lu.solve(rhs);
    // damped update: keep the residual decreasing
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 8; ++k) {
      Vec xt = x + lambda * step.head(n);
      xt -= n_hat.dot(xt - p) * n_hat;  // stay on the section
      try {
        const ReturnHit trial = first_return(sys, xt, p, n_hat, orientation, cfg, opts);
        if ((trial.point - xt).norm() < residual) {
          x = xt;
          accepted = true;
          break;
        }
      } catch (const NonconvergenceError&) {
        // overshoot lost the recurrence; shrink the step
      }
      lambda *= 0.5;
    }
    if (!accepted)
      throw NonconvergenceError("find_cycle: Newton stalled", period);
  }

  Cycle cyc;
  cyc.x0 = x;
  cyc.minimal_period = period;
  cyc.T = period;
  IntegratorConfig dense_cfg = cfg;
  dense_cfg.max_step = std::min(dense_cfg.max_step, period / 256.0);
  cyc.traj = integrate(sys, 0.0, period, x, dense_cfg);
  return cyc;
}

MonodromyData monodromy(const OdeSystem& sys, const Cycle& cycle, const IntegratorConfig& cfg,
                        double unit_tol) {
  const Mat Y_T = variational_matrix(sys, cycle.T, 0.0, cycle.x0, cfg);
  return classify_multipliers(Y_T, unit_tol);
}

AdjointFrame::AdjointFrame(const OdeSystem& sys, const Cycle& cycle, const IntegratorConfig& cfg,
                           double unit_tol)
    : T_(cycle.T), dim_(sys.dim) {
  bundle_ = std::make_shared<FlowBundle>(sys, cycle.x0, 0.0, cfg);
  bundle_->cover(0.0, T_);

  const MonodromyData md = classify_multipliers(bundle_->variational(T_), unit_tol);
  unit_multiplicity_ = md.unit_multiplicity;
  if (unit_multiplicity_ == 0)
    throw std::runtime_error("periodic adjoint: no unit multiplier within tolerance");

  x_dot0_ = sys.f(0.0, cycle.x0);
  const double c = x_dot0_.norm();
  rotation_ = rotation_aligning_first_axis(x_dot0_);

  if (dim_ == 2) {
    Vec e1(2), e2(2);
    e1 << 1.0, 0.0;
    e2 << 0.0, 1.0;
    y_hat0_ = rotation_.transpose() * (e2 / c);
    z_hat0_ = rotation_.transpose() * (e1 / c);
    if (unit_multiplicity_ == 2) {
      z_tilde0_ = rotation_.transpose() * (e2 * c);
    } else {
      // periodic adjoint direction: null vector of (Z(T) - I)
      const Mat Z_T = bundle_->adjoint(T_);
      Eigen::JacobiSVD<Mat> svd(Z_T - Mat::Identity(2, 2), Eigen::ComputeFullV);
      z_tilde0_ = svd.matrixV().col(1);
    }
  } else {
    const Mat Z_T = bundle_->adjoint(T_);
    Eigen::JacobiSVD<Mat> svd(Z_T - Mat::Identity(dim_, dim_), Eigen::ComputeFullV);
    z_tilde0_ = svd.matrixV().col(dim_ - 1);
    y_hat0_ = Vec();
    z_hat0_ = Vec();
  }

  const Vec zT = bundle_->adjoint(T_) * z_tilde0_;
  if ((zT - z_tilde0_).norm() > 1e-5 * z_tilde0_.norm())
    throw std::runtime_error("periodic adjoint: computed z_tilde is not T-periodic");

  pairing_ = x_dot0_.dot(z_tilde0_);
  if (std::abs(pairing_) > 1e-8 * c * z_tilde0_.norm()) {
    pairing_sign_ = pairing_ > 0 ? 1 : -1;
  } else {
    pairing_sign_ = 1;
    pairing_degenerate_ = true;
  }
}

Vec AdjointFrame::z_tilde(double t) const {
  // z_tilde is T-periodic (checked at construction), so extend periodically
  return bundle_->adjoint(mod_period(t, T_)) * z_tilde0_;
}

Vec AdjointFrame::z_hat(double t) const {
  if (dim_ != 2) throw std::logic_error("z_hat is available in 2D only");
  // z_hat is generally not periodic; no wrap-around
  return bundle_->adjoint(t) * z_hat0_;
}

Vec AdjointFrame::y_hat(double t) const {
  if (dim_ != 2) throw std::logic_error("y_hat is available in 2D only");
  return bundle_->variational(t) * y_hat0_;
}

Vec AdjointFrame::x_dot(double t) const {
  return bundle_->variational(mod_period(t, T_)) * x_dot0_;
}

void AdjointFrame::rescale_z_tilde(double cfactor) {
  if (cfactor == 0.0) throw std::invalid_argument("rescale_z_tilde: factor must be nonzero");
  z_tilde0_ *= cfactor;
  pairing_ *= cfactor;
  // keep sign * z_tilde direction-consistent so downstream bifurcation values
  // scale by |c| under rescaling
  if (cfactor < 0.0) pairing_sign_ = -pairing_sign_;
}

std::vector<double> AdjointFrame::panel_nodes() const { return bundle_->panel_nodes(0.0, T_); }

DegeneracyReport degeneracy_report(const OdeSystem& sys,
                                   const std::function<Vec(double)>& family_probe,
                                   double alpha0, const IntegratorConfig& cfg, double probe_step,
                                   double deg_tol, double unit_tol) {
  FindCycleOptions opts;
  auto cycle_at = [&](double alpha) {
    const Vec p = family_probe(alpha);
    const Vec n = sys.f(0.0, p).normalized();
    return find_cycle(sys, p, n, cfg, opts);
  };
  const Cycle c_minus = cycle_at(alpha0 - probe_step);
  const Cycle c_plus = cycle_at(alpha0 + probe_step);
  const Cycle c0 = cycle_at(alpha0);

  DegeneracyReport rep;
  rep.T_at_alpha0 = c0.minimal_period;
  rep.T_prime = (c_plus.minimal_period - c_minus.minimal_period) / (2.0 * probe_step);
  const Mat Y_T = variational_matrix(sys, c0.T, 0.0, c0.x0, cfg);
  rep.monodromy_identity_gap = (Y_T - Mat::Identity(sys.dim, sys.dim)).norm();
  const bool near_identity = rep.monodromy_identity_gap <= std::sqrt(unit_tol);
  rep.degenerate = std::abs(rep.T_prime) <= deg_tol && near_identity;
  return rep;
}

std::string cycle_to_json(const Cycle& cycle) {
  nlohmann::json j;
  j["x0"] = std::vector<double>(cycle.x0.data(), cycle.x0.data() + cycle.x0.size());
  j["T"] = cycle.T;
  j["minimal_period"] = cycle.minimal_period;
  j["sample_count"] = cycle.traj.size();
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < cycle.traj.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    row.push_back(cycle.traj.times()[i]);
    const Vec& x = cycle.traj.states()[i];
    for (int k = 0; k < x.size(); ++k) row.push_back(x(k));
    samples.push_back(row);
  }
  j["samples"] = samples;
  return j.dump(2);
}

Cycle cycle_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  Cycle cyc;
  const auto x0v = j.at("x0").get<std::vector<double>>();
  cyc.x0 = Eigen::Map<const Vec>(x0v.data(), static_cast<Eigen::Index>(x0v.size()));
  cyc.T = j.at("T").get<double>();
  cyc.minimal_period = j.at("minimal_period").get<double>();
  std::vector<double> ts;
  std::vector<Vec> xs, ds;
  const auto& samples = j.at("samples");
  for (const auto& row : samples) {
    ts.push_back(row.at(0).get<double>());
    Vec x(static_cast<Eigen::Index>(row.size()) - 1);
    for (Eigen::Index k = 0; k + 1 < static_cast<Eigen::Index>(row.size()); ++k)
      x(k) = row.at(static_cast<std::size_t>(k) + 1).get<double>();
    xs.push_back(x);
  }
  // derivatives are not serialized; rebuild by finite differences of samples
  ds.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == xs.size() ? i : i + 1;
    ds[i] = (xs[b] - xs[a]) / (ts[b] - ts[a]);
  }
  cyc.traj = DenseTrajectory(std::move(ts), std::move(xs), std::move(ds), 0.0, cyc.T);
  return cyc;
}

}  // namespace malkin
