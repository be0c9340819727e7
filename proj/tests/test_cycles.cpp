#include "malkin/cycles.hpp"
#include "malkin/scenarios.hpp"

#include <doctest.h>

#include <cmath>

using namespace malkin;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat m2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

IntegratorConfig cfg_default() { return IntegratorConfig{}; }

}  // namespace

TEST_CASE("find_cycle on the harmonic oscillator") {
  OdeSystem sys;
  sys.dim = 2;
  sys.period = 2.0 * M_PI;
  sys.autonomous = true;
  sys.f = [](double, const Vec& x) { return v2(x(1), -x(0)); };
  const Cycle c = find_cycle(sys, v2(0.0, 2.0), v2(1.0, 0.0), cfg_default());
  CHECK(c.minimal_period == doctest::Approx(2.0 * M_PI).epsilon(1e-9));
  CHECK((flow_map(sys, c.T, 0.0, c.x0, cfg_default()) - c.x0).norm() < 1e-8);
}

TEST_CASE("find_cycle on the circular family recovers the orbit through the guess") {
  const double delta = 0.02;
  const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", delta}});
  const OdeSystem sys = gh.psys.at(0.0);
  const Vec guess = v2(0.1, 1.05);
  const Cycle c = find_cycle(sys, guess, sys.f(0.0, guess).normalized(), cfg_default());
  // every point sits on a circular cycle; the located one passes through the
  // guess, with period set by its own radius
  const double r2 = guess.squaredNorm();
  CHECK(c.minimal_period == doctest::Approx(2.0 * M_PI / (1.0 - delta * r2)).epsilon(1e-8));
  CHECK(c.minimal_period == doctest::Approx(2.0 * M_PI / (1.0 - delta)).epsilon(0.01));
  CHECK((c.x0 - guess).norm() < 1e-8);
}

TEST_CASE("find_cycle on the ring family") {
  const ScenarioSpec ring = make_scenario("degenerate_ring", {});
  const OdeSystem sys = ring.psys.at(0.0);
  const Vec guess = v2(0.0, 1.4);
  const Cycle c = find_cycle(sys, guess, sys.f(0.0, guess).normalized(), cfg_default());
  const double alpha = 1.4;
  CHECK(c.minimal_period ==
        doctest::Approx(2.0 * M_PI / ((alpha - 1.0) * (alpha - 1.0) + 1.0)).epsilon(1e-8));
}

TEST_CASE("find_cycle error paths") {
  OdeSystem sys;
  sys.dim = 2;
  sys.period = 1.0;
  sys.autonomous = true;
  SUBCASE("no recurrence on a drift field") {
    sys.f = [](double, const Vec&) { return v2(1.0, 0.0); };
    FindCycleOptions opts;
    opts.max_time = 5.0;
    CHECK_THROWS_AS(find_cycle(sys, v2(0.0, 0.0), v2(1.0, 0.0), cfg_default(), opts),
                    NonconvergenceError);
  }
  SUBCASE("section orthogonal to the field") {
    sys.f = [](double, const Vec& x) { return v2(x(1), -x(0)); };
    CHECK_THROWS_AS(find_cycle(sys, v2(0.0, 1.0), v2(0.0, 1.0), cfg_default()),
                    std::invalid_argument);
  }
}

TEST_CASE("multiplier classification on direct matrices") {
  SUBCASE("diag(2, 1)") {
    const MonodromyData md = classify_multipliers(m2(2, 0, 0, 1));
    CHECK(md.unit_multiplicity == 1);
    CHECK(md.beta == 1);
    CHECK(is_simple_cycle(md));
  }
  SUBCASE("identity") {
    const MonodromyData md = classify_multipliers(Mat::Identity(2, 2));
    CHECK(md.unit_multiplicity == 2);
    CHECK(md.beta == 0);
    CHECK_FALSE(is_simple_cycle(md));
  }
  SUBCASE("no unit multiplier") {
    const MonodromyData md = classify_multipliers(m2(2, 0, 0, 3));
    CHECK(md.unit_multiplicity == 0);
    CHECK(md.beta == 2);
  }
  SUBCASE("Jordan shear keeps algebraic multiplicity two") {
    const MonodromyData md = classify_multipliers(m2(1, 4.02, 0, 1));
    CHECK(md.unit_multiplicity == 2);
    CHECK(md.beta == 0);
  }
  SUBCASE("complex pair of modulus > 1 contributes nothing to beta") {
    const MonodromyData md = classify_multipliers(m2(1.2, -0.9, 0.9, 1.2));
    CHECK(md.beta == 0);
  }
  SUBCASE("multiplicities sum to the dimension") {
    const MonodromyData md = classify_multipliers(m2(0.3, 0.1, -0.2, 0.8));
    CHECK(md.multipliers.size() == 2);
  }
}

TEST_CASE("beta invariant under orthogonal conjugation") {
  const Mat Y = m2(2.5, 0.3, 0.0, 0.4);
  const int beta0 = classify_multipliers(Y).beta;
  for (double phi : {0.3, 1.1, 2.7}) {
    const Mat Q = m2(std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi));
    CHECK(classify_multipliers(Q * Y * Q.transpose()).beta == beta0);
  }
}

TEST_CASE("monodromy of family cycles") {
  const IntegratorConfig cfg = cfg_default();
  SUBCASE("ring member alpha = 1: identity monodromy") {
    const ScenarioSpec ring = make_scenario("degenerate_ring", {});
    const Cycle c = ring.closed_cycle();
    const MonodromyData md = monodromy(ring.psys.at(0.0), c, cfg);
    CHECK((md.Y_T - Mat::Identity(2, 2)).norm() < 1e-7);
    CHECK(md.unit_multiplicity == 2);
    CHECK_FALSE(is_simple_cycle(md));
  }
  SUBCASE("ring member alpha = 1.5: shear keeps multiplicity two") {
    const ScenarioSpec ring = make_scenario("degenerate_ring", {});
    const OdeSystem sys = ring.psys.at(0.0);
    const Vec p = v2(0.0, 1.5);
    const Cycle c = find_cycle(sys, p, sys.f(0.0, p).normalized(), cfg);
    const MonodromyData md = monodromy(sys, c, cfg);
    CHECK(md.unit_multiplicity == 2);
    // the shear block shows up as a drift of the second variational solution
    // along the cycle direction
    CHECK((md.Y_T - Mat::Identity(2, 2)).norm() > 1e-3);
  }
  SUBCASE("unit multiplier carries the cycle derivative") {
    const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", 0.02}});
    const Cycle c = gh.closed_cycle();
    const MonodromyData md = monodromy(gh.psys.at(0.0), c, cfg);
    const Vec xd0 = gh.psys.base.f(0.0, c.x0);
    CHECK((md.Y_T * xd0 - xd0).norm() < 1e-7);
  }
}

TEST_CASE("adjoint frame on the Greenspan-Holmes cycle") {
  const double delta = 0.02;
  const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", delta}});
  const Cycle c = gh.closed_cycle();
  const IntegratorConfig cfg = cfg_default();
  const AdjointFrame frame(gh.psys.at(0.0), c, cfg);

  SUBCASE("z_tilde is T-periodic") {
    CHECK((frame.z_tilde(c.T - 1e-12) - frame.z_tilde(0.0)).norm() < 1e-6);
  }
  SUBCASE("biorthogonality pairing stays the identity") {
    for (int i = 0; i < 16; ++i) {
      const double t = c.T * i / 16.0;
      Mat lhs(2, 2), rhs(2, 2);
      lhs.col(0) = frame.x_dot(t);
      lhs.col(1) = frame.y_hat(t);
      rhs.col(0) = frame.z_hat(t);
      rhs.col(1) = frame.z_tilde(t);
      CHECK((lhs.transpose() * rhs - Mat::Identity(2, 2)).norm() < 1e-6);
    }
  }
  SUBCASE("rotated initial conditions") {
    const Mat R = frame.rotation();
    const Vec xd0 = R * gh.psys.base.f(0.0, c.x0);
    CHECK(std::abs(xd0(1)) < 1e-12);
    CHECK(xd0(0) > 0.0);
    const Vec yh0 = R * frame.y_hat0();
    CHECK(std::abs(yh0(0)) < 1e-12);
    CHECK(yh0(1) == doctest::Approx(1.0 / xd0(0)));
  }
  SUBCASE("multiplicity-2 frame has degenerate pairing") {
    CHECK(frame.pairing_degenerate());
    CHECK(frame.pairing_sign() == 1);
  }
  SUBCASE("closed-form y_hat matches the frame") {
    for (double t : {0.5, 2.0, 5.0}) {
      CHECK((frame.y_hat(t) - gh.y_hat_exact(t)).norm() < 1e-6);
    }
  }
}

TEST_CASE("adjoint frame on a genuinely simple cycle has a nonzero pairing") {
  const ScenarioSpec pp = make_scenario("predator_prey", {});
  REQUIRE(pp.located_cycle.has_value());
  const Cycle& c = *pp.located_cycle;
  const IntegratorConfig cfg = cfg_default();
  const MonodromyData md = monodromy(pp.psys.at(0.0), c, cfg);
  CHECK(md.unit_multiplicity == 1);
  CHECK(is_simple_cycle(md));
  const AdjointFrame frame(pp.psys.at(0.0), c, cfg);
  CHECK_FALSE(frame.pairing_degenerate());
  CHECK(std::abs(frame.pairing()) > 1e-6);
  CHECK((frame.z_tilde(c.T - 1e-12) - frame.z_tilde(0.0)).norm() <
        1e-5 * frame.z_tilde0().norm());
}

TEST_CASE("cycle derivative solves the variational equation") {
  const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", 0.05}});
  const Cycle c = gh.closed_cycle();
  const IntegratorConfig cfg = cfg_default();
  FlowBundle bundle(gh.psys.at(0.0), c.x0, 0.0, cfg);
  bundle.cover(0.0, c.T);
  const Vec xd0 = gh.psys.base.f(0.0, c.x0);
  for (double t : {0.8, 3.1, 5.9}) {
    const Vec lhs = bundle.variational(t) * xd0;
    const Vec rhs = gh.psys.base.f(t, c.state(t));
    CHECK((lhs - rhs).norm() < 1e-7);
  }
}

TEST_CASE("degeneracy reports across families") {
  const IntegratorConfig cfg = cfg_default();
  SUBCASE("ring family is degenerate exactly at alpha = 1") {
    const ScenarioSpec ring = make_scenario("degenerate_ring", {});
    const OdeSystem sys = ring.psys.at(0.0);
    const DegeneracyReport at1 = degeneracy_report(sys, ring.family_probe, 1.0, cfg);
    CHECK(at1.degenerate);
    CHECK(std::abs(at1.T_prime) < 1e-4);
    const DegeneracyReport at15 = degeneracy_report(sys, ring.family_probe, 1.5, cfg);
    CHECK_FALSE(at15.degenerate);
    // T(alpha) = 2 pi / ((alpha-1)^2 + 1) gives T'(1.5) approx -4.021
    CHECK(at15.T_prime == doctest::Approx(-2.0 * M_PI * 1.0 / (1.25 * 1.25)).epsilon(1e-4));
  }
  SUBCASE("hardening-spring family has strictly decreasing period") {
    const ScenarioSpec duf = make_scenario("duffing", {{"delta", 0.05}});
    const OdeSystem sys = duf.psys.at(0.0);
    for (double alpha : {0.3, 0.6}) {
      const DegeneracyReport dr = degeneracy_report(sys, duf.family_probe, alpha, cfg);
      CHECK(dr.T_prime < 0.0);
      CHECK_FALSE(dr.degenerate);
    }
  }
}

TEST_CASE("rescaling z_tilde flips the recorded sign with it") {
  const ScenarioSpec pp = make_scenario("predator_prey", {});
  const Cycle& c = *pp.located_cycle;
  AdjointFrame frame(pp.psys.at(0.0), c, cfg_default());
  const int s0 = frame.pairing_sign();
  frame.rescale_z_tilde(-2.0);
  CHECK(frame.pairing_sign() == -s0);
  frame.rescale_z_tilde(-0.5);
  CHECK(frame.pairing_sign() == s0);
}

TEST_CASE("cycle JSON round trip") {
  const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", 0.02}});
  const Cycle c = gh.closed_cycle(128);
  const std::string text = cycle_to_json(c);
  const Cycle back = cycle_from_json(text);
  CHECK(back.T == doctest::Approx(c.T));
  CHECK(back.minimal_period == doctest::Approx(c.minimal_period));
  CHECK((back.x0 - c.x0).norm() == 0.0);
  CHECK(back.traj.size() == c.traj.size());
  // derivatives are rebuilt from sample differences, so interpolation between
  // nodes is a little coarser than the original
  CHECK((back.state(1.234) - c.state(1.234)).norm() < 1e-5);
}

TEST_CASE("2D frame determinant is constant for trace-free fields") {
  const ScenarioSpec gh = make_scenario("greenspan_holmes", {{"delta", 0.03}});
  const Cycle c = gh.closed_cycle();
  const AdjointFrame frame(gh.psys.at(0.0), c, cfg_default());
  auto det_at = [&](double t) {
    const Vec xd = frame.x_dot(t);
    const Vec yh = frame.y_hat(t);
    return xd(0) * yh(1) - xd(1) * yh(0);
  };
  const double d0 = det_at(0.0);
  for (double t : {0.7, 2.3, 4.9, c.T}) CHECK(std::abs(det_at(t) - d0) < 1e-8);
}
