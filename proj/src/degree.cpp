#include "malkin/degree.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <list>

namespace malkin {

namespace {

bool segments_intersect(const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
  auto cross = [](const Vec& u, const Vec& v) { return u(0) * v(1) - u(1) * v(0); };
  const Vec ab = b - a, cd = d - c;
  const double d1 = cross(cd, a - c), d2 = cross(cd, b - c);
  const double d3 = cross(ab, c - a), d4 = cross(ab, d - a);
  return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

}  // namespace

double SampledCurve::signed_area() const {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    acc += points[i](0) * points[i + 1](1) - points[i + 1](0) * points[i](1);
  return 0.5 * acc;
}

SampledCurve SampledCurve::from_points(std::vector<Vec> pts, double closure_tol,
                                       bool check_simple) {
  if (pts.size() < 4) throw std::invalid_argument("SampledCurve: too few points");
  double scale = 0.0;
  for (const Vec& p : pts) scale = std::max(scale, p.norm());
  if ((pts.back() - pts.front()).norm() > closure_tol * std::max(1.0, scale))
    throw std::invalid_argument("SampledCurve: curve is not closed");
  pts.back() = pts.front();
  SampledCurve c;
  c.points = std::move(pts);
  if (check_simple) {
    const std::size_t m = c.points.size() - 1;  // segments
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 2; j < m; ++j) {
        if (i == 0 && j == m - 1) continue;  // adjacent through the seam
        if (segments_intersect(c.points[i], c.points[i + 1], c.points[j], c.points[j + 1]))
          throw std::invalid_argument("SampledCurve: self-intersection detected");
      }
  }
  c.orientation = c.signed_area() >= 0.0 ? +1 : -1;
  return c;
}

SampledCurve SampledCurve::circle(const Vec& center, double radius, int n) {
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    Vec p(2);
    p << center(0) + radius * std::cos(a), center(1) + radius * std::sin(a);
    pts.push_back(p);
  }
  pts.back() = pts.front();
  return from_points(std::move(pts), 1e-12, false);
}

SampledCurve SampledCurve::from_cycle(const Cycle& cycle, int n) {
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) pts.push_back(cycle.state(cycle.T * i / n));
  pts.push_back(pts.front());
  return from_points(std::move(pts), 1e-12, false);
}

int degree_1d(const std::function<double(double)>& M, double a, double b, double zero_tol) {
  const double va = M(a), vb = M(b);
  if (std::abs(va) <= zero_tol || std::abs(vb) <= zero_tol)
    throw std::invalid_argument("degree_1d: degree undefined at boundary (endpoint zero)");
  const int sa = va > 0 ? 1 : -1, sb = vb > 0 ? 1 : -1;
  return (sb - sa) / 2;
}

DegreeResult winding_number(const PlanarField& F, const SampledCurve& curve, int refine_budget) {
  struct Node {
    Vec p, f;
  };
  std::list<Node> nodes;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i)
    nodes.push_back({curve.points[i], F(curve.points[i])});
  nodes.push_back({curve.points.front(), nodes.front().f});

  auto angle_inc = [](const Vec& f1, const Vec& f2) {
    return std::atan2(f1(0) * f2(1) - f1(1) * f2(0), f1.dot(f2));
  };

  // degenerate-field guard against the median magnitude
  std::vector<double> mags;
  for (const auto& nd : nodes) mags.push_back(nd.f.norm());
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double degenerate_tol = 1e-3 * median;

  int budget = refine_budget;
  bool all_sharp = true;
  double min_norm = std::numeric_limits<double>::infinity();
  for (const auto& nd : nodes) min_norm = std::min(min_norm, nd.f.norm());
  if (min_norm <= degenerate_tol)
    throw std::runtime_error("winding_number: field degenerate on boundary");

  auto it = nodes.begin();
  while (std::next(it) != nodes.end()) {
    auto nx = std::next(it);
    const double da = std::abs(angle_inc(it->f, nx->f));
    if (da >= M_PI / 2.0) {
      if (budget <= 0) {
        all_sharp = false;
        ++it;
        continue;
      }
      --budget;
      const Vec mid = 0.5 * (it->p + nx->p);
      const Vec fm = F(mid);
      min_norm = std::min(min_norm, fm.norm());
      if (fm.norm() <= degenerate_tol)
        throw std::runtime_error("winding_number: field degenerate on boundary");
      nodes.insert(nx, {mid, fm});
    } else {
      ++it;
    }
  }

  double total = 0.0;
  for (auto jt = nodes.begin(); std::next(jt) != nodes.end(); ++jt)
    total += angle_inc(jt->f, std::next(jt)->f);

  DegreeResult res;
  res.value = static_cast<int>(std::lround(total / (2.0 * M_PI)));
  res.min_field_norm = min_norm;
  res.reliable = all_sharp && std::abs(total / (2.0 * M_PI) - res.value) < 1e-6;
  return res;
}

DegreeResult boundary_degree(const PlanarField& F, const SampledCurve& curve,
                             int refine_budget) {
  DegreeResult r = winding_number(F, curve, refine_budget);
  r.value *= curve.orientation;
  return r;
}

int brouwer_degree_regular(const PlanarField& F, const std::function<Mat(const Vec&)>& jacF,
                           const std::vector<Vec>& zeros, double singular_tol) {
  int acc = 0;
  for (const Vec& z : zeros) {
    const Mat J = jacF(z);
    const double det = J.determinant();
    if (std::abs(det) <= singular_tol * std::max(1.0, J.norm()))
      throw std::runtime_error("brouwer_degree_regular: singular Jacobian at a zero");
    if (F) {
      const Vec fz = F(z);
      if (fz.norm() > 1e-6 * std::max(1.0, z.norm()))
        throw std::invalid_argument("brouwer_degree_regular: listed point is not a zero");
    }
    acc += det > 0 ? 1 : -1;
  }
  return acc;
}

int assemble_poincare_degree(int n, int deg_f_U, const std::vector<BoundaryCycleTerm>& cycles) {
  int d = (n % 2 == 0 ? 1 : -1) * deg_f_U;
  for (const auto& c : cycles) {
    if (c.touches_only || !c.theta_first_exit.has_value()) continue;
    const int sign_beta = (c.beta % 2 == 0) ? 1 : -1;
    d -= sign_beta * c.degree_1d_malkin;
  }
  return d;
}

BorsukCertificate borsuk_certificate(const PlanarField& F,
                                     const std::function<Vec(double)>& x_fn,
                                     const std::function<Vec(double)>& xdot_fn,
                                     const std::function<Vec(double)>& z_fn, double T,
                                     int grid_n, int refine_budget) {
  BorsukCertificate cert;
  auto h = [&](double th) { return F(x_fn(th)).dot(z_fn(th)); };
  auto perp_pairing = [&](double th) {
    const Vec z = z_fn(th);
    Vec zp(2);
    zp << z(1), -z(0);
    return F(x_fn(th)).dot(zp);
  };

  // condition 1: directing function never tangent-orthogonal
  double min_dir = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_n; ++i) {
    const double th = T * i / grid_n;
    const Vec z = z_fn(th), xd = xdot_fn(th);
    min_dir = std::min(min_dir, std::abs(z.dot(xd)) / (z.norm() * xd.norm()));
  }
  if (min_dir < 1e-6) {
    cert.reason = "directing function orthogonal to the tangent somewhere";
    return cert;
  }

  // condition 2: exactly two strict sign-change zeros of <F(x(.)), z(.)> on [0, T)
  std::vector<double> hv(static_cast<std::size_t>(grid_n) + 1);
  for (int i = 0; i <= grid_n; ++i) hv[static_cast<std::size_t>(i)] = h(T * i / grid_n);
  hv.back() = hv.front();
  std::vector<double> zeros;
  std::vector<double> slopes;
  for (int i = 0; i < grid_n; ++i) {
    const double va = hv[static_cast<std::size_t>(i)], vb = hv[static_cast<std::size_t>(i) + 1];
    if (va * vb < 0.0) {
      double lo = T * i / grid_n, hi = T * (i + 1) / grid_n, flo = va;
      while (hi - lo > 1e-12 * T) {
        const double mid = 0.5 * (lo + hi);
        const double fm = h(mid);
        if (flo * fm <= 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      zeros.push_back(0.5 * (lo + hi));
      slopes.push_back((vb - va) / (T / grid_n));
    }
  }
  if (zeros.size() != 2) {
    cert.reason = "pairing has " + std::to_string(zeros.size()) + " sign-change zeros, need 2";
    return cert;
  }
  if (std::abs(slopes[0]) == 0.0 || std::abs(slopes[1]) == 0.0) {
    cert.reason = "zero without strict sign change";
    return cert;
  }
  cert.theta1 = zeros[0];
  cert.theta2 = zeros[1];

  // condition 3: opposite orthogonal pairings at the two zeros
  const double p1 = perp_pairing(zeros[0]), p2 = perp_pairing(zeros[1]);
  if (p1 == 0.0 || p2 == 0.0 || (p1 > 0) == (p2 > 0)) {
    cert.reason = "orthogonal pairings at the zeros do not have opposite signs";
    return cert;
  }

  cert.holds = true;
  cert.certified = true;

  std::vector<Vec> pts;
  for (int i = 0; i < grid_n; ++i) pts.push_back(x_fn(T * i / grid_n));
  pts.push_back(pts.front());
  const SampledCurve curve = SampledCurve::from_points(std::move(pts), 1e-9, false);
  const DegreeResult wn = boundary_degree(F, curve, refine_budget);
  cert.winding_value = wn.value;
  cert.winding_reliable = wn.reliable;
  if (wn.value != 0 && wn.value != 2) {
    cert.certified = false;
    cert.reason = "winding value " + std::to_string(wn.value) + " outside the certified set";
  }
  return cert;
}

bool point_in_polygon(const std::vector<Vec>& poly, const Vec& pt) {
  bool inside = false;
  const std::size_t m = poly.size() - 1;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec& a = poly[i];
    const Vec& b = poly[i + 1];
    if ((a(1) > pt(1)) != (b(1) > pt(1))) {
      const double xint = a(0) + (pt(1) - a(1)) * (b(0) - a(0)) / (b(1) - a(1));
      if (pt(0) < xint) inside = !inside;
    }
  }
  return inside;
}

double distance_to_polyline(const std::vector<Vec>& poly, const Vec& pt) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec a = poly[i], d = poly[i + 1] - poly[i];
    const double len2 = d.squaredNorm();
    double s = len2 > 0.0 ? (pt - a).dot(d) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    best = std::min(best, (pt - (a + s * d)).norm());
  }
  return best;
}

SampledCurve curve_from_csv(const std::string& text) {
  std::vector<Vec> pts;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty() || line[0] == '#' || line.find_first_of("0123456789+-.") != 0) continue;
    double x, y;
    if (std::sscanf(line.c_str(), "%lf,%lf", &x, &y) == 2) {
      Vec p(2);
      p << x, y;
      pts.push_back(p);
    }
  }
  if (!pts.empty() && (pts.back() - pts.front()).norm() > 0.0) pts.push_back(pts.front());
  return SampledCurve::from_points(std::move(pts), 1e-6, true);
}

std::string curve_to_csv(const SampledCurve& curve) {
  std::string out = "x,y\n";
  char buf[80];
  for (const Vec& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p(0), p(1));
    out += buf;
  }
  return out;
}

std::string degree_report_json(const DegreeResult& result) {
  nlohmann::json j;
  j["value"] = result.value;
  j["min_field_norm"] = result.min_field_norm;
  j["reliable"] = result.reliable;
  return j.dump(2);
}

}  // namespace malkin
