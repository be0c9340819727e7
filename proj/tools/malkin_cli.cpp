// Command-line front end: scenario analyses with CSV/JSON (and optional SVG)
// outputs. One JSON config drives a run; flags override config keys.

#include "malkin/biffun.hpp"
#include "malkin/continuation.hpp"
#include "malkin/cycles.hpp"
#include "malkin/degree.hpp"
#include "malkin/scenarios.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <future>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace malkin;

namespace {

struct RunConfig {
  std::string scenario_name = "greenspan_holmes";
  std::string curve_csv;  // optional user boundary for the degree command
  std::map<std::string, double> params;
  IntegratorConfig integrator;
  int theta_n = 256;
  int s_n = 16;
  int boundary_n = 64;
  std::vector<double> eps_list = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  double phase_guess = 0.0;
  double alpha0 = 1.0;
  std::string output_dir = "out";
  int threads = 1;
  bool svg = false;
  json resolved;  // full config embedded into reports
};

void reject_unknown(const json& j, const std::vector<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

RunConfig parse_config(const std::string& path) {
  RunConfig rc;
  json j;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    in >> j;
  } else {
    j = json::object();
  }
  reject_unknown(j, {"scenario", "integrator", "grids", "options", "output_dir", "threads"},
                 "top level");
  if (j.contains("scenario")) {
    reject_unknown(j["scenario"], {"name", "params"}, "scenario");
    if (j["scenario"].contains("name")) rc.scenario_name = j["scenario"]["name"];
    if (j["scenario"].contains("params"))
      for (auto it = j["scenario"]["params"].begin(); it != j["scenario"]["params"].end(); ++it)
        rc.params[it.key()] = it.value().get<double>();
  }
  if (j.contains("integrator")) {
    const json& ji = j["integrator"];
    reject_unknown(ji, {"rel_tol", "abs_tol", "max_step", "method", "fixed_step"}, "integrator");
    if (ji.contains("rel_tol")) rc.integrator.rel_tol = ji["rel_tol"];
    if (ji.contains("abs_tol")) rc.integrator.abs_tol = ji["abs_tol"];
    if (ji.contains("max_step")) rc.integrator.max_step = ji["max_step"];
    if (ji.contains("fixed_step")) rc.integrator.fixed_step = ji["fixed_step"];
    if (ji.contains("method")) {
      const std::string m = ji["method"];
      if (m == "rk45")
        rc.integrator.method = StepperKind::AdaptiveRK45;
      else if (m == "rk4")
        rc.integrator.method = StepperKind::FixedRK4;
      else
        throw std::invalid_argument("config: integrator.method must be rk45 or rk4");
    }
  }
  if (j.contains("grids")) {
    const json& jg = j["grids"];
    reject_unknown(jg, {"theta", "s", "boundary", "eps"}, "grids");
    if (jg.contains("theta")) rc.theta_n = jg["theta"];
    if (jg.contains("s")) rc.s_n = jg["s"];
    if (jg.contains("boundary")) rc.boundary_n = jg["boundary"];
    if (jg.contains("eps")) rc.eps_list = jg["eps"].get<std::vector<double>>();
  }
  if (j.contains("options")) {
    const json& jo = j["options"];
    reject_unknown(jo, {"phase_guess", "alpha0", "svg", "curve_csv"}, "options");
    if (jo.contains("phase_guess")) rc.phase_guess = jo["phase_guess"];
    if (jo.contains("alpha0")) rc.alpha0 = jo["alpha0"];
    if (jo.contains("svg")) rc.svg = jo["svg"];
    if (jo.contains("curve_csv")) rc.curve_csv = jo["curve_csv"];
  }
  if (j.contains("output_dir")) rc.output_dir = j["output_dir"];
  if (j.contains("threads")) rc.threads = j["threads"];
  return rc;
}

json resolved_config(const RunConfig& rc) {
  json j;
  j["scenario"]["name"] = rc.scenario_name;
  j["scenario"]["params"] = rc.params;
  j["integrator"]["rel_tol"] = rc.integrator.rel_tol;
  j["integrator"]["abs_tol"] = rc.integrator.abs_tol;
  j["integrator"]["method"] =
      rc.integrator.method == StepperKind::AdaptiveRK45 ? "rk45" : "rk4";
  j["integrator"]["fixed_step"] = rc.integrator.fixed_step;
  j["grids"]["theta"] = rc.theta_n;
  j["grids"]["s"] = rc.s_n;
  j["grids"]["boundary"] = rc.boundary_n;
  j["grids"]["eps"] = rc.eps_list;
  j["options"]["phase_guess"] = rc.phase_guess;
  j["options"]["alpha0"] = rc.alpha0;
  j["options"]["svg"] = rc.svg;
  if (!rc.curve_csv.empty()) j["options"]["curve_csv"] = rc.curve_csv;
  j["output_dir"] = rc.output_dir;
  j["threads"] = rc.threads;
  return j;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

// minimal standalone SVG polyline chart
std::string svg_line_chart(const std::vector<double>& xs,
                           const std::vector<std::vector<double>>& series, int w = 640,
                           int h = 400) {
  double xmin = xs.front(), xmax = xs.back(), ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (double v : s) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (ymax == ymin) ymax = ymin + 1.0;
  auto px = [&](double x) { return 40.0 + (w - 60.0) * (x - xmin) / (xmax - xmin); };
  auto py = [&](double y) { return h - 30.0 - (h - 50.0) * (y - ymin) / (ymax - ymin); };
  std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" + std::to_string(w) +
                    "' height='" + std::to_string(h) + "'>\n";
  out += "<rect width='100%' height='100%' fill='white'/>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    out += "<polyline fill='none' stroke='";
    out += colors[k % 4];
    out += "' stroke-width='1.5' points='";
    char buf[64];
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(xs[i]), py(series[k][i]));
      out += buf;
    }
    out += "'/>\n";
  }
  out += "</svg>\n";
  return out;
}

// deterministic parallel evaluation over a grid, assembled in index order
std::vector<Vec> parallel_eval(const std::vector<double>& grid,
                               const std::function<Vec(double)>& fn, int threads) {
  std::vector<Vec> out(grid.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = fn(grid[i]);
    return out;
  }
  std::vector<std::future<void>> futs;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < threads; ++t)
    futs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1))
        out[i] = fn(grid[i]);
    }));
  for (auto& f : futs) f.get();
  return out;
}

struct ScenarioRun {
  ScenarioSpec spec;
  Cycle cycle;
  std::unique_ptr<AdjointFrame> frame;
};

ScenarioRun prepare(const RunConfig& rc) {
  ScenarioRun run;
  run.spec = make_scenario(rc.scenario_name, rc.params);
  if (run.spec.has_closed_cycle())
    run.cycle = run.spec.closed_cycle();
  else if (run.spec.located_cycle)
    run.cycle = *run.spec.located_cycle;
  else if (rc.scenario_name == "duffing") {
    const double delta = run.spec.params.at("delta");
    const double amp = std::sqrt(8.0 * delta / 3.0);
    run.cycle = find_cycle_with_period(run.spec.psys.at(0.0), run.spec.family_probe,
                                       0.75 * amp, 1.3 * amp,
                                       2.0 * M_PI / (1.0 + delta), rc.integrator);
  } else {
    FindCycleOptions opts;
    run.cycle = find_cycle(run.spec.psys.at(0.0), run.spec.cycle_guess,
                           run.spec.section_normal, rc.integrator, opts);
  }
  run.frame = std::make_unique<AdjointFrame>(run.spec.psys.at(0.0), run.cycle, rc.integrator);
  return run;
}

int cmd_cycle(const RunConfig& rc) {
  const ScenarioRun run = prepare(rc);
  const MonodromyData md = monodromy(run.spec.psys.at(0.0), run.cycle, rc.integrator);
  json rep;
  rep["config"] = rc.resolved;
  rep["cycle"] = json::parse(cycle_to_json(run.cycle));
  rep["multipliers"] = json::array();
  for (const auto& mu : md.multipliers)
    rep["multipliers"].push_back({{"re", mu.real()}, {"im", mu.imag()}});
  rep["unit_multiplicity"] = md.unit_multiplicity;
  rep["beta"] = md.beta;
  rep["simple"] = is_simple_cycle(md);
  if (run.spec.family_probe) {
    const DegeneracyReport dr = degeneracy_report(run.spec.psys.at(0.0), run.spec.family_probe,
                                                  rc.alpha0, rc.integrator);
    rep["degeneracy"] = {{"alpha0", rc.alpha0},
                         {"T_prime", dr.T_prime},
                         {"T", dr.T_at_alpha0},
                         {"degenerate", dr.degenerate},
                         {"monodromy_identity_gap", dr.monodromy_identity_gap}};
  }
  fs::create_directories(rc.output_dir);
  write_file(fs::path(rc.output_dir) / "cycle_report.json", rep.dump(2));
  write_file(fs::path(rc.output_dir) / "cycle.json", cycle_to_json(run.cycle));
  std::cout << "cycle: period " << run.cycle.minimal_period << ", unit multiplicity "
            << md.unit_multiplicity << ", beta " << md.beta << "\n";
  return 0;
}

int cmd_biffun(const RunConfig& rc) {
  const ScenarioRun run = prepare(rc);
  const double T = run.cycle.T;
  const ThetaGrid grid = ThetaGrid::uniform(T, rc.theta_n);
  fs::create_directories(rc.output_dir);

  const std::function<double(double)> mal_scalar = [&](double th) {
    return malkin_function(run.cycle, *run.frame, run.spec.psys, th, rc.integrator);
  };
  const std::function<double(double)> mel_scalar = [&](double th) {
    return melnikov(run.cycle, run.spec.psys, th, rc.integrator);
  };
  auto as_vec = [](std::function<double(double)> f) -> std::function<Vec(double)> {
    return [f](double th) -> Vec {
      Vec v(1);
      v(0) = f(th);
      return v;
    };
  };
  BifSamples mal, mel;
  mal.grid = grid;
  mal.values = parallel_eval(grid.values, as_vec(mal_scalar), rc.threads);
  attach_zero_info(mal, mal_scalar);
  mel.grid = grid;
  mel.values = parallel_eval(grid.values, as_vec(mel_scalar), rc.threads);
  attach_zero_info(mel, mel_scalar);
  write_file(fs::path(rc.output_dir) / "malkin.csv", bif_samples_to_csv(mal));
  write_file(fs::path(rc.output_dir) / "malkin_zeros.json", bif_samples_zeros_json(mal));
  write_file(fs::path(rc.output_dir) / "melnikov.csv", bif_samples_to_csv(mel));
  write_file(fs::path(rc.output_dir) / "melnikov_zeros.json", bif_samples_zeros_json(mel));

  // Phi on an (s, theta) grid
  std::string phi_csv = "s,theta,vx,vy\n";
  char buf[160];
  for (int i = 0; i < rc.s_n; ++i) {
    const double s = T * i / (rc.s_n - 1.0);
    for (int k = 0; k < rc.theta_n; ++k) {
      const double th = T * k / (rc.theta_n - 1.0);
      const Vec phi = averaging_phi(run.spec.psys, s, run.cycle.state(th), rc.integrator, 1e-6);
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", s, th, phi(0), phi(1));
      phi_csv += buf;
    }
  }
  write_file(fs::path(rc.output_dir) / "phi.csv", phi_csv);

  json summary;
  summary["config"] = rc.resolved;
  summary["malkin_zero_count"] = mal.zeros.size();
  summary["melnikov_zero_count"] = mel.zeros.size();
  try {
    const SymmetryIntegrals si =
        symmetry_integrals(run.cycle, run.spec.psys, *run.frame, rc.integrator);
    summary["xi_tilde"] = {si.xi_tilde(0), si.xi_tilde(1)};
    summary["xi_hat"] = {si.xi_hat(0), si.xi_hat(1)};
    summary["y_hat_1_T"] = si.y_hat_1_T;
    summary["x_dot_1_0"] = si.x_dot_1_0;
  } catch (const std::invalid_argument&) {
    summary["xi_tilde"] = nullptr;  // forcing not sinusoidal
  }
  write_file(fs::path(rc.output_dir) / "biffun_summary.json", summary.dump(2));

  if (rc.svg) {
    std::vector<double> ys1, ys2;
    for (const auto& v : mal.values) ys1.push_back(v(0));
    for (const auto& v : mel.values) ys2.push_back(v(0));
    write_file(fs::path(rc.output_dir) / "biffun.svg",
               svg_line_chart(grid.values, {ys1, ys2}));
  }
  std::cout << "biffun: " << mal.zeros.size() << " Malkin zeros, " << mel.zeros.size()
            << " Melnikov zeros\n";
  return 0;
}

int cmd_degree(const RunConfig& rc) {
  const ScenarioRun run = prepare(rc);
  const double T = run.cycle.T;
  const SampledCurve curve = SampledCurve::from_cycle(run.cycle, rc.boundary_n);
  const OdeSystem base = run.spec.psys.at(0.0);

  json rep;
  rep["config"] = rc.resolved;
  const DegreeResult wf =
      boundary_degree([&](const Vec& x) { return base.f(0.0, x); }, curve);
  rep["field_winding"] = json::parse(degree_report_json(wf));

  auto neg_phi = [&](const Vec& xi) -> Vec {
    return -averaging_phi(run.spec.psys, T, xi, rc.integrator, 1e-6);
  };
  const DegreeResult wphi = boundary_degree(neg_phi, curve);
  rep["neg_phi_winding"] = json::parse(degree_report_json(wphi));

  const BorsukCertificate cert = borsuk_certificate(
      neg_phi, [&](double th) { return run.cycle.state(th); },
      [&](double th) { return base.f(th, run.cycle.state(th)); },
      [&](double th) { return base.f(th, run.cycle.state(th)); }, T);
  rep["borsuk"] = {{"holds", cert.holds},
                   {"certified", cert.certified},
                   {"theta1", cert.theta1},
                   {"theta2", cert.theta2},
                   {"winding_value", cert.winding_value},
                   {"reason", cert.reason}};

  // assembled degree for a boundary without T-periodic cycles: a small circle
  // around the interior equilibrium, compared against the direct winding of
  // I - P_eps at eps = 1e-3; only meaningful when that boundary is free of
  // fixed points of the unperturbed map
  const int n = run.spec.psys.dim();
  Vec center = Vec::Zero(2);
  const SampledCurve small = SampledCurve::circle(center, 0.4 * run.cycle.x0.norm(), 96);
  double boundary_fp_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < small.points.size(); i += 8) {
    const Vec p0 = poincare_map(run.spec.psys, 0.0, small.points[i], rc.integrator);
    boundary_fp_gap = std::min(boundary_fp_gap, (p0 - small.points[i]).norm());
  }
  if (boundary_fp_gap > 1e-6) {
    const DegreeResult dsmall = boundary_degree(
        [&](const Vec& x) { return base.f(0.0, x); }, small);
    const int assembled = assemble_poincare_degree(n, dsmall.value, {});
    const double eps_probe = 1e-3;
    auto i_minus_p = [&](const Vec& xi) -> Vec {
      return xi - poincare_map(run.spec.psys, eps_probe, xi, rc.integrator);
    };
    DegreeResult wp{};
    bool direct_ok = true;
    std::string direct_err;
    try {
      wp = boundary_degree(i_minus_p, small);
    } catch (const std::exception& ex) {
      direct_ok = false;
      direct_err = ex.what();
    }
    rep["assembled_degree"] = assembled;
    if (direct_ok) {
      rep["direct_degree"] = wp.value;
      rep["assembly_matches_direct"] = (assembled == wp.value);
    } else {
      rep["direct_degree_error"] = direct_err;
    }
  } else {
    rep["assembly_comparison"] =
        "not applicable: the probe boundary carries fixed points of the unperturbed map";
  }

  // user-supplied boundary: field and perturbed-map windings on it
  if (!rc.curve_csv.empty()) {
    std::ifstream in(rc.curve_csv);
    if (!in) throw std::invalid_argument("cannot open curve file " + rc.curve_csv);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const SampledCurve user = curve_from_csv(text);
    const DegreeResult uf = boundary_degree(
        [&](const Vec& x) { return base.f(0.0, x); }, user);
    rep["user_curve"]["field_winding"] = json::parse(degree_report_json(uf));
    try {
      const DegreeResult up = boundary_degree(
          [&](const Vec& xi) -> Vec {
            return xi - poincare_map(run.spec.psys, 1e-3, xi, rc.integrator);
          },
          user);
      rep["user_curve"]["perturbed_map_winding"] = json::parse(degree_report_json(up));
    } catch (const std::exception& ex) {
      rep["user_curve"]["perturbed_map_winding_error"] = ex.what();
    }
  }

  fs::create_directories(rc.output_dir);
  write_file(fs::path(rc.output_dir) / "degree_report.json", rep.dump(2));
  write_file(fs::path(rc.output_dir) / "cycle_curve.csv", curve_to_csv(curve));
  std::cout << "degree: d(f,U) = " << wf.value << ", d(-Phi^T,U) = " << wphi.value << "\n";
  return 0;
}

int cmd_predict(const RunConfig& rc) {
  const ScenarioRun run = prepare(rc);
  PredictOptions popts;
  popts.family_probe = run.spec.family_probe;
  popts.theta_samples = rc.theta_n;
  popts.s_samples = rc.s_n;
  popts.boundary_samples = rc.boundary_n;
  const PredictionReport rep =
      predict(run.spec.psys, run.cycle, *run.frame, rc.integrator, popts);
  json j = json::parse(prediction_report_json(rep));
  j["config"] = rc.resolved;
  if (rc.scenario_name == "greenspan_holmes") {
    const double delta = run.spec.params.at("delta");
    j["closed_form_margin"] = {
        {"value", greenspan_holmes_two_solution_margin(delta)},
        {"positive_means", "the symmetric smallness condition holds at this delta"}};
  }
  fs::create_directories(rc.output_dir);
  write_file(fs::path(rc.output_dir) / "prediction_report.json", j.dump(2));
  int applicable = 0;
  for (const auto& e : rep.entries)
    if (e.applicable) ++applicable;
  std::cout << "predict: " << applicable << "/" << rep.entries.size()
            << " theorem routes applicable\n";
  return 0;
}

int cmd_verify(const RunConfig& rc) {
  const ScenarioRun run = prepare(rc);
  fs::create_directories(rc.output_dir);
  const SweepRecord sweep = epsilon_sweep(run.spec.psys, run.cycle, rc.phase_guess,
                                          rc.eps_list, rc.integrator);
  write_file(fs::path(rc.output_dir) / "sweep.csv", sweep_to_csv(sweep));
  write_file(fs::path(rc.output_dir) / "sweep.json", sweep_to_json(sweep));

  json rep;
  rep["config"] = rc.resolved;
  rep["sweep"] = json::parse(sweep_to_json(sweep));
  if (sweep.points.size() >= 4) {
    const RateFit fit = rate_fit(sweep);
    rep["rate_fit"] = {{"slope", fit.slope},
                       {"intercept", fit.intercept},
                       {"r2", fit.r2},
                       {"used_points", fit.used_points}};
  }
  if (!sweep.points.empty()) {
    const auto& last = sweep.points.back();
    PeriodicSolution sol;
    sol.eps = last.eps;
    sol.x0 = last.x0;
    sol.traj = integrate(run.spec.psys.at(last.eps), 0.0, run.cycle.T, last.x0, rc.integrator);
    sol.residual = (sol.traj.endpoint() - last.x0).norm();
    std::vector<double> t_grid;
    for (int i = 0; i < 8; ++i) t_grid.push_back(run.cycle.T * i / 8.0);
    const double lim = averaging_limit_residual(run.spec.psys, run.cycle, sol, t_grid,
                                                rc.integrator);
    rep["limit_identity_residual"] = lim;
    rep["limit_identity_bound_20eps"] = 20.0 * last.eps;

    // candidate phases for the two-sided search: the Melnikov sign-change
    // zeros, falling back to the configured guess
    std::vector<double> phases{rc.phase_guess};
    const BifSamples mel = melnikov_grid(run.cycle, run.spec.psys,
                                         ThetaGrid::uniform(run.cycle.T, 64), rc.integrator);
    for (const auto& z : mel.zeros)
      if (z.kind == ZeroKind::SignChange) phases.push_back(z.theta0);
    const TwoSidedResult two =
        find_two_sided(run.spec.psys, last.eps, run.cycle, phases, rc.integrator);
    json sides;
    sides["inside_found"] = two.inside.has_value();
    sides["outside_found"] = two.outside.has_value();
    if (two.inside) sides["inside_margin"] = two.inside_class.min_margin;
    if (two.outside) sides["outside_margin"] = two.outside_class.min_margin;
    rep["two_sided"] = sides;
  }
  write_file(fs::path(rc.output_dir) / "verify_report.json", rep.dump(2));

  if (rc.svg && sweep.points.size() >= 2) {
    std::vector<double> xs, ys;
    for (const auto& p : sweep.points) {
      xs.push_back(std::log10(p.eps));
      ys.push_back(std::log10(std::max(p.dist0, 1e-300)));
    }
    write_file(fs::path(rc.output_dir) / "sweep.svg", svg_line_chart(xs, {ys}));
  }
  std::cout << "verify: " << sweep.points.size() << " sweep points\n";
  return 0;
}

int cmd_demo(RunConfig rc, const std::string& name) {
  rc.scenario_name = name;
  json consolidated;
  consolidated["scenario"] = name;
  const fs::path base = fs::path(rc.output_dir);
  rc.output_dir = (base / "cycle").string();
  cmd_cycle(rc);
  rc.output_dir = (base / "biffun").string();
  cmd_biffun(rc);
  rc.output_dir = (base / "degree").string();
  cmd_degree(rc);
  rc.output_dir = (base / "predict").string();
  cmd_predict(rc);
  rc.output_dir = (base / "verify").string();
  cmd_verify(rc);
  for (const char* part : {"cycle", "biffun", "degree", "predict", "verify"}) {
    for (const auto& entry : fs::directory_iterator(base / part)) {
      if (entry.path().extension() == ".json") {
        std::ifstream in(entry.path());
        json j;
        in >> j;
        consolidated[part][entry.path().filename().string()] = j;
      }
    }
  }
  write_file(base / "demo_report.json", consolidated.dump(2));
  std::cout << "demo: consolidated report at " << (base / "demo_report.json") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bifurcation-function and topological-degree toolkit for periodically "
               "perturbed planar systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string scenario_override, out_override;
  std::vector<std::string> param_overrides;
  int threads_override = -1;
  bool svg_flag = false;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("-s,--scenario", scenario_override, "scenario name override");
  app.add_option("-p,--param", param_overrides, "scenario parameter override key=value");
  app.add_option("-o,--out", out_override, "output directory override");
  std::string curve_override;
  app.add_option("--curve", curve_override, "boundary curve CSV (x,y rows) for degree");
  app.add_option("--threads", threads_override, "cap worker threads");
  app.add_flag("--svg", svg_flag, "emit SVG charts alongside CSV data");

  auto* c_cycle = app.add_subcommand("cycle", "locate a cycle, multipliers, degeneracy");
  auto* c_biffun = app.add_subcommand("biffun", "Malkin/Melnikov/averaging grids");
  auto* c_degree = app.add_subcommand("degree", "winding numbers and degree assembly");
  auto* c_predict = app.add_subcommand("predict", "theorem-by-theorem predictions");
  auto* c_verify = app.add_subcommand("verify", "shooting sweep, rate fit, side checks");
  auto* c_demo = app.add_subcommand("demo", "full pipeline for one named scenario");
  std::string demo_name = "greenspan_holmes";
  c_demo->add_option("name", demo_name, "scenario to reproduce");
  for (auto* sub : {c_cycle, c_biffun, c_degree, c_predict, c_verify, c_demo})
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = parse_config(config_path);
    if (!scenario_override.empty()) rc.scenario_name = scenario_override;
    for (const std::string& kv : param_overrides) {
      const auto pos = kv.find('=');
      if (pos == std::string::npos)
        throw std::invalid_argument("--param expects key=value, got " + kv);
      rc.params[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
    }
    if (!out_override.empty()) rc.output_dir = out_override;
    if (!curve_override.empty()) rc.curve_csv = curve_override;
    if (const char* env = std::getenv("MALKIN_OUT")) rc.output_dir = env;
    if (threads_override > 0) rc.threads = threads_override;
    if (svg_flag) rc.svg = true;
    rc.integrator.validate();
    rc.resolved = resolved_config(rc);

    if (*c_cycle) return cmd_cycle(rc);
    if (*c_biffun) return cmd_biffun(rc);
    if (*c_degree) return cmd_degree(rc);
    if (*c_predict) return cmd_predict(rc);
    if (*c_verify) return cmd_verify(rc);
    if (*c_demo) return cmd_demo(rc, demo_name);
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NonconvergenceError& e) {
    std::cerr << "numeric failure: " << e.what() << " (last time " << e.last_time() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  }
}
