#pragma once

#include "malkin/cycles.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace malkin {

using PlanarField = std::function<Vec(const Vec&)>;

/// Closed planar curve given by ordered samples (last point = first within a
/// closure tolerance). Simplicity is checked pairwise on construction.
struct SampledCurve {
  std::vector<Vec> points;  // closed: points.back() == points.front()
  int orientation = +1;     // +1 counterclockwise, -1 clockwise

  static SampledCurve from_points(std::vector<Vec> pts, double closure_tol = 1e-8,
                                  bool check_simple = true);
  static SampledCurve circle(const Vec& center, double radius, int n);
  static SampledCurve from_cycle(const Cycle& cycle, int n);

  double signed_area() const;
};

struct DegreeResult {
  int value = 0;
  double min_field_norm = 0.0;
  bool reliable = false;
};

/// 1D Brouwer degree (sign M(b) - sign M(a)) / 2; endpoints must be nonzero.
int degree_1d(const std::function<double(double)>& M, double a, double b,
              double zero_tol = 1e-12);

/// Winding number of F along the curve by wrapped angular increments;
/// segments with increments >= pi/2 are subdivided until the budget runs out.
/// The sign follows the traversal order of the samples.
DegreeResult winding_number(const PlanarField& F, const SampledCurve& curve,
                            int refine_budget = 4096);

/// Brouwer degree d(F, U) of the region bounded by the curve: the winding
/// number normalized to counterclockwise traversal.
DegreeResult boundary_degree(const PlanarField& F, const SampledCurve& curve,
                             int refine_budget = 4096);

/// Sum of sign det jacF over known regular zeros.
int brouwer_degree_regular(const PlanarField& F, const std::function<Mat(const Vec&)>& jacF,
                           const std::vector<Vec>& zeros, double singular_tol = 1e-12);

struct BoundaryCycleTerm {
  int beta = 0;
  std::optional<double> theta_first_exit;  // min of the first-exit set, if any
  int degree_1d_malkin = 0;                // d_R(M, (0, theta_first_exit))
  bool touches_only = false;               // tangential contact: skipped
};

/// Degree of I - P_eps on U assembled from the field degree and the
/// boundary-cycle Malkin terms:
///   (-1)^n d(f,U) - sum over contributing cycles of (-1)^beta d_R(M, (0, min exit)).
int assemble_poincare_degree(int n, int deg_f_U, const std::vector<BoundaryCycleTerm>& cycles);

struct BorsukCertificate {
  bool holds = false;
  std::string reason;
  double theta1 = 0.0, theta2 = 0.0;
  bool certified = false;  // degree forced into {0, 2}
  int winding_value = 0;
  bool winding_reliable = false;
};

/// Two-zero degree certificate on a Jordan curve x(theta), theta in [0, T):
/// with a directing function z satisfying <z, xdot> != 0, if <F(x(.)), z(.)>
/// has exactly two strict sign-change zeros and the orthogonal pairings at
/// them have opposite signs, then d(F, U) is 0 or 2.
BorsukCertificate borsuk_certificate(const PlanarField& F,
                                     const std::function<Vec(double)>& x_fn,
                                     const std::function<Vec(double)>& xdot_fn,
                                     const std::function<Vec(double)>& z_fn, double T,
                                     int grid_n = 256, int refine_budget = 4096);

/// Ray-crossing test against the closed polyline.
bool point_in_polygon(const std::vector<Vec>& poly, const Vec& pt);
double distance_to_polyline(const std::vector<Vec>& poly, const Vec& pt);

/// CSV rows `x,y`, closed implicitly.
SampledCurve curve_from_csv(const std::string& text);
std::string curve_to_csv(const SampledCurve& curve);
std::string degree_report_json(const DegreeResult& result);

}  // namespace malkin
