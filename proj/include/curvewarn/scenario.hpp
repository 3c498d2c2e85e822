// Copyright 2026 The Curvewarn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Scenario front end: configuration files, the match -> fuse -> solve ->
// classify pipeline, the horizon and slope comparison studies, and the
// machine-readable artifacts they emit.  Output is data-only; plotting is
// left to external tools.

#ifndef CURVEWARN_SCENARIO_HPP_
#define CURVEWARN_SCENARIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curvewarn/bike_model.hpp"
#include "curvewarn/error.hpp"
#include "curvewarn/map_matching.hpp"
#include "curvewarn/ocp.hpp"
#include "curvewarn/polyline.hpp"
#include "curvewarn/risk.hpp"
#include "curvewarn/road_graph.hpp"
#include "curvewarn/road_profile.hpp"
#include "curvewarn/sqp.hpp"
#include "curvewarn/state_fusion.hpp"

namespace curvewarn {

// Everything a scenario run needs: input files, the starting condition used
// when no trace provides one, and the model/solver/classifier parameters.
// Loadable from a sectioned key/value text file; every field has a flag
// mirror on the command line.
struct ScenarioConfig {
  // [files] -- exactly one of profile/polyline describes the road.
  std::string profile_path;     // road profile JSON
  std::string polyline_path;    // geographic polyline JSON, converted on load
  std::string graph_path;       // road graph JSON (enables map matching)
  std::string trace_path;       // GPS trace CSV (requires graph)
  std::string perception_path;  // perception CSV `t,n_lnet,phi_rnet`
  std::string output_dir = ".";

  // [start] -- seeds the initial state; s0 is overridden by map matching
  // and n_lnet/phi_rnet by the perception trace when those inputs exist.
  double speed = 20.0;  // [m/s]
  double s0 = 0.0;      // [m]
  double n_lnet = std::numeric_limits<double>::quiet_NaN();  // NaN: lane center
  double phi_rnet = 0.0;

  // [bike], [ocp], [risk]
  BikeParams bike;
  OcpConfig ocp;
  RiskThresholds risk;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double config_number(const std::string& value, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config line " + std::to_string(lineno) +
                     ": expected a number, got `" + value + "`");
  }
}

inline int config_int(const std::string& value, std::size_t lineno) {
  const double v = config_number(value, lineno);
  if (v != std::floor(v)) {
    throw ParseError("config line " + std::to_string(lineno) +
                     ": expected an integer, got `" + value + "`");
  }
  return static_cast<int>(v);
}

inline bool config_bool(const std::string& value, std::size_t lineno) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("config line " + std::to_string(lineno) +
                   ": expected true/false, got `" + value + "`");
}

// Paths in a config file are relative to the file that names them.
inline std::string resolve_path(const std::string& value,
                                const std::string& base_dir) {
  if (value.empty() || base_dir.empty()) return value;
  const std::filesystem::path p(value);
  if (p.is_absolute()) return value;
  return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace detail

// Parses the sectioned key/value format:
//
//   # comment
//   [files]
//   profile = road.json
//   [start]
//   speed = 22.0
//
// Sections: files, start, bike, ocp, risk.  Unknown sections or keys are
// errors -- a silently ignored typo would run the wrong scenario.
inline ScenarioConfig load_scenario_config(std::istream& in,
                                           const std::string& base_dir = "") {
  ScenarioConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string text = detail::trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']') {
        throw ParseError("config line " + std::to_string(lineno) +
                         ": unterminated section header");
      }
      section = detail::trim(text.substr(1, text.size() - 2));
      if (section != "files" && section != "start" && section != "bike" &&
          section != "ocp" && section != "risk") {
        throw ParseError("config line " + std::to_string(lineno) +
                         ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) +
                       ": expected `key = value`");
    }
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (section.empty()) {
      throw ParseError("config line " + std::to_string(lineno) +
                       ": key `" + key + "` outside any section");
    }

    auto num = [&] { return detail::config_number(value, lineno); };
    auto igr = [&] { return detail::config_int(value, lineno); };
    auto bol = [&] { return detail::config_bool(value, lineno); };
    auto pth = [&] { return detail::resolve_path(value, base_dir); };

    bool known = true;
    if (section == "files") {
      if (key == "profile") cfg.profile_path = pth();
      else if (key == "polyline") cfg.polyline_path = pth();
      else if (key == "graph") cfg.graph_path = pth();
      else if (key == "trace") cfg.trace_path = pth();
      else if (key == "perception") cfg.perception_path = pth();
      else if (key == "output_dir") cfg.output_dir = pth();
      else known = false;
    } else if (section == "start") {
      if (key == "speed") cfg.speed = num();
      else if (key == "s0") cfg.s0 = num();
      else if (key == "n_lnet") cfg.n_lnet = num();
      else if (key == "phi_rnet") cfg.phi_rnet = num();
      else known = false;
    } else if (section == "bike") {
      if (key == "g") cfg.bike.g = num();
      else if (key == "h") cfg.bike.h = num();
      else if (key == "r") cfg.bike.r = num();
      else if (key == "rho_x") cfg.bike.rho_x = num();
      else if (key == "R") cfg.bike.R = num();
      else if (key == "m") cfg.bike.m = num();
      else if (key == "I_w") cfg.bike.I_w = num();
      else if (key == "h_r") cfg.bike.h_r = num();
      else if (key == "h_c") cfg.bike.h_c = num();
      else if (key == "a_x_max") cfg.bike.a_x_max = num();
      else if (key == "a_y_max") cfg.bike.a_y_max = num();
      else known = false;
    } else if (section == "ocp") {
      if (key == "N") cfg.ocp.N = igr();
      else if (key == "d_s") cfg.ocp.d_s = num();
      else if (key == "q_t") cfg.ocp.q_t = num();
      else if (key == "q_a") cfg.ocp.q_a = num();
      else if (key == "r_x") cfg.ocp.r_x = num();
      else if (key == "r_psi") cfg.ocp.r_psi = num();
      else if (key == "feas_tol") cfg.ocp.feas_tol = num();
      else if (key == "stat_tol") cfg.ocp.stat_tol = num();
      else if (key == "max_iter") cfg.ocp.max_iter = igr();
      else if (key == "include_slope") cfg.ocp.include_slope = bol();
      else if (key == "include_roll_lane") cfg.ocp.include_roll_lane = bol();
      else known = false;
    } else if (section == "risk") {
      if (key == "theta1") cfg.risk.theta1 = num();
      else if (key == "theta2") cfg.risk.theta2 = num();
      else known = false;
    }
    if (!known) {
      throw ParseError("config line " + std::to_string(lineno) +
                       ": unknown key `" + key + "` in section [" + section +
                       "]");
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  return load_scenario_config(
      in, std::filesystem::path(path).parent_path().string());
}

// Config sanity independent of file contents: a road source is named, named
// inputs exist on disk, and the parameter blocks are internally valid.
inline void validate_scenario(const ScenarioConfig& cfg) {
  const bool has_profile = !cfg.profile_path.empty();
  const bool has_polyline = !cfg.polyline_path.empty();
  if (has_profile == has_polyline) {
    throw InvariantViolation(
        "scenario needs exactly one road source: profile or polyline");
  }
  if (!cfg.trace_path.empty() && cfg.graph_path.empty()) {
    throw InvariantViolation("a GPS trace needs a road graph to match onto");
  }
  for (const std::string& p :
       {cfg.profile_path, cfg.polyline_path, cfg.graph_path, cfg.trace_path,
        cfg.perception_path}) {
    if (!p.empty() && !std::filesystem::exists(p)) {
      throw InvariantViolation("scenario input file missing: " + p);
    }
  }
  if (!std::isfinite(cfg.speed) || !std::isfinite(cfg.s0) ||
      !std::isfinite(cfg.phi_rnet)) {
    throw InvariantViolation("scenario start values must be finite");
  }
  validate_config(cfg.ocp);
  validate_params(cfg.bike);
  validate_thresholds(cfg.risk);
}

// Outcome of one full pipeline run, with everything the artifact writers
// and the exit-code mapping need.
struct ScenarioResult {
  RoadProfile profile;
  InitialState initial;
  OcpSolution solution;
  RiskReport report;
  std::vector<std::string> notes;  // clamp and drop diagnostics
};

namespace detail {

// Plane position of a point `offset` meters along an edge's polyline.
inline PlanePoint edge_position(const RoadGraph& graph, const std::string& edge,
                                double offset) {
  const auto& pts = graph.edge_plane(edge);
  const auto& cum = graph.edge_cumlen(edge);
  const double s = std::clamp(offset, 0.0, cum.back());
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const std::size_t hi =
      std::min(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
  const std::size_t lo = hi - 1;
  const double seg = cum[hi] - cum[lo];
  const double t = seg > 0.0 ? (s - cum[lo]) / seg : 0.0;
  return {pts[lo].x + t * (pts[hi].x - pts[lo].x),
          pts[lo].y + t * (pts[hi].y - pts[lo].y)};
}

struct PreparedScenario {
  RoadProfile profile;
  InitialState initial;
  std::vector<std::string> notes;
};

// Shared front half of every run: load the road, optionally match the
// trace, fuse the initial state.
inline PreparedScenario prepare_scenario(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  RoadProfile profile = cfg.profile_path.empty()
                            ? profile_from_polyline(
                                  load_polyline(cfg.polyline_path))
                            : load_profile(cfg.profile_path);

  std::vector<std::string> notes;
  double s0 = cfg.s0;
  std::optional<PriorEstimate> prior;

  if (!cfg.graph_path.empty() && !cfg.trace_path.empty()) {
    const RoadGraph graph = load_road_graph(cfg.graph_path);
    const GpsTrace trace = load_gps_trace(cfg.trace_path);
    const MatchedPath path = viterbi_match(trace, graph);
    if (!path.dropped.empty()) {
      notes.push_back("map matching dropped " +
                      std::to_string(path.dropped.size()) + " of " +
                      std::to_string(trace.fixes.size()) + " fixes");
    }
    const std::vector<double> arcs = matched_arclength(path, graph);
    s0 = arcs.back();
    if (path.fixes.size() >= 3) {
      // Course over ground of the last two matched hops gives the swept
      // heading; its time base comes from the trace.
      const auto& f1 = path.fixes[path.fixes.size() - 3];
      const auto& f2 = path.fixes[path.fixes.size() - 2];
      const auto& f3 = path.fixes[path.fixes.size() - 1];
      const PlanePoint p1 = edge_position(graph, f1.edge, f1.offset);
      const PlanePoint p2 = edge_position(graph, f2.edge, f2.offset);
      const PlanePoint p3 = edge_position(graph, f3.edge, f3.offset);
      const double c1 = std::atan2(p2.y - p1.y, p2.x - p1.x);
      const double c2 = std::atan2(p3.y - p2.y, p3.x - p2.x);
      const double dt = trace.fixes[f3.fix_index].t - trace.fixes[f2.fix_index].t;
      PriorEstimate pe;
      pe.heading_change = std::remainder(c2 - c1, 2.0 * M_PI);
      pe.u_x = cfg.speed;  // no independent earlier speed source
      prior = pe;
      prior->t = -dt;  // re-based below once the sample timestamp is known
    }
  }

  PerceptionSample perc;
  perc.t = 0.0;
  perc.n_lnet = cfg.n_lnet;
  perc.phi_rnet = cfg.phi_rnet;
  double prior_phi = cfg.phi_rnet;
  if (!cfg.perception_path.empty()) {
    const std::vector<PerceptionSample> samples =
        load_perception_trace(cfg.perception_path);
    perc = samples.back();
    if (samples.size() >= 2) prior_phi = samples[samples.size() - 2].phi_rnet;
  }
  if (std::isnan(perc.n_lnet)) {
    perc.n_lnet = profile.query(s0).width / 2.0;  // default: lane center
  }
  if (prior) {
    const double dt = -prior->t;
    prior->t = perc.t - dt;
    prior->phi = prior_phi;
  }

  InitialState initial =
      build_initial_state(perc, cfg.speed, s0, prior, profile, cfg.bike);
  if (initial.clamped_lane_low || initial.clamped_lane_high) {
    notes.push_back("corrected lane position clamped to the lane edge");
  }
  if (initial.clamped_roll) notes.push_back("roll clamped to the state box");
  if (initial.clamped_rates) {
    notes.push_back("rate states clamped into the acceleration budget");
  }
  return {std::move(profile), initial, std::move(notes)};
}

inline const char* status_string(OcpStatus status) {
  switch (status) {
    case OcpStatus::Optimal: return "optimal";
    case OcpStatus::MaxIter: return "max_iter";
    case OcpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

// Full-precision, locale-independent number formatting for the artifacts.
inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Runs match -> fuse -> solve -> classify.  The exit-code mapping for the
// command line is severity(result.report.overall); errors map to 3.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  detail::PreparedScenario prep = detail::prepare_scenario(cfg);
  OcpConfig ocp = cfg.ocp;
  ocp.s0 = prep.initial.s0;
  OcpSolution sol = solve_ocp(prep.profile, prep.initial.x0, ocp, cfg.bike);
  RiskReport report = classify_maneuver(sol, cfg.risk);
  return {std::move(prep.profile), prep.initial, std::move(sol),
          std::move(report), std::move(prep.notes)};
}

// Trajectory table, one row per input stage (the terminal anchor state has
// no input or risk attached and is not emitted).  Byte-stable across runs.
inline void write_trajectory_csv(std::ostream& out, const OcpSolution& sol,
                                 const RoadProfile& profile,
                                 const BikeParams& p,
                                 const RiskThresholds& th) {
  out << "s,n,alpha,phi,ux,wpsi,wphi,ax,apsi,jx,jpsi,gg_ratio,n_lo,n_hi,risk\n";
  for (std::size_t k = 0; k < sol.inputs.size(); ++k) {
    const StateSpace& x = sol.states[k];
    const ControlInput& u = sol.inputs[k];
    double lo = 0.0, hi = 0.0;
    try {
      const LaneBounds lb = lane_bounds(x.phi, profile.query(sol.s[k]), p);
      lo = lb.lo;
      hi = lb.hi;
    } catch (const EmptyLane&) {
      // measured x0 may lean past the corridor; an empty [0, 0] says so
    }
    const char* risk = to_string(classify_step(u.j_x, th));
    out << detail::g17(sol.s[k]) << ',' << detail::g17(x.n) << ','
        << detail::g17(x.alpha) << ',' << detail::g17(x.phi) << ','
        << detail::g17(x.u_x) << ',' << detail::g17(x.w_psi) << ','
        << detail::g17(x.w_phi) << ',' << detail::g17(x.a_x) << ','
        << detail::g17(x.a_psi) << ',' << detail::g17(u.j_x) << ','
        << detail::g17(u.j_psi) << ',' << detail::g17(sol.gg_ratio[k]) << ','
        << detail::g17(lo) << ',' << detail::g17(hi) << ',' << risk << '\n';
  }
}

inline void write_risk_json(std::ostream& out, const RiskReport& report,
                            const OcpSolution& sol, const RiskThresholds& th) {
  nlohmann::ordered_json j;
  j["overall"] = to_string(report.overall);
  j["worst_s"] = report.worst_s;
  j["min_jerk"] = report.min_jerk;
  j["thresholds"] = {{"theta1", th.theta1}, {"theta2", th.theta2}};
  j["solver"] = {{"status", detail::status_string(sol.status)},
                 {"iterations", sol.iterations},
                 {"kkt", sol.kkt_residual},
                 {"feasibility", sol.feasibility_residual}};
  out << j.dump(2) << '\n';
}

// Writes both artifacts into cfg.output_dir (created if needed) and returns
// the process exit code: the overall risk severity.
inline int write_scenario_artifacts(const ScenarioResult& result,
                                    const ScenarioConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  {
    std::ofstream csv(dir / "trajectory.csv");
    if (!csv) throw Error("cannot write " + (dir / "trajectory.csv").string());
    write_trajectory_csv(csv, result.solution, result.profile, cfg.bike,
                         cfg.risk);
  }
  {
    std::ofstream json(dir / "risk.json");
    if (!json) throw Error("cannot write " + (dir / "risk.json").string());
    write_risk_json(json, result.report, result.solution, cfg.risk);
  }
  return severity(result.report.overall);
}

// One row of a horizon or ablation comparison.
struct ComparisonRun {
  double horizon = 0.0;  // [m]
  std::string status;    // optimal / max_iter / infeasible / error
  int iterations = 0;
  double min_jerk = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double initial_jx = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // diagnostic when status == "error"
};

struct SweepResult {
  std::vector<ComparisonRun> runs;
};

namespace detail {

inline ComparisonRun run_one_horizon(const PreparedScenario& prep,
                                     const ScenarioConfig& cfg,
                                     double horizon) {
  ComparisonRun run;
  run.horizon = horizon;
  try {
    OcpConfig ocp = cfg.ocp;
    ocp.s0 = prep.initial.s0;
    ocp.N = static_cast<int>(std::llround(horizon / ocp.d_s)) - 1;
    const OcpSolution sol =
        solve_ocp(prep.profile, prep.initial.x0, ocp, cfg.bike);
    run.status = status_string(sol.status);
    run.iterations = sol.iterations;
    run.objective = sol.objective;
    run.initial_jx = sol.inputs.front().j_x;
    run.min_jerk = sol.inputs.front().j_x;
    for (const ControlInput& u : sol.inputs) {
      run.min_jerk = std::min(run.min_jerk, u.j_x);
    }
  } catch (const std::exception& e) {
    run.status = "error";
    run.error = e.what();
  }
  return run;
}

}  // namespace detail

// Solves the same fused initial state over several horizon lengths.  Errors
// are recorded per horizon, never fatal for the sweep as a whole.
inline SweepResult run_horizon_sweep(const ScenarioConfig& cfg,
                                     const std::vector<double>& horizons) {
  if (horizons.empty()) {
    throw InvariantViolation("horizon sweep needs at least one horizon");
  }
  const detail::PreparedScenario prep = detail::prepare_scenario(cfg);
  SweepResult result;
  for (double h : horizons) {
    result.runs.push_back(detail::run_one_horizon(prep, cfg, h));
  }
  return result;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "horizon,status,iterations,min_jerk,initial_jx,objective,error\n";
  for (const ComparisonRun& run : sweep.runs) {
    std::string err = run.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << detail::g17(run.horizon) << ',' << run.status << ','
        << run.iterations << ',' << detail::g17(run.min_jerk) << ','
        << detail::g17(run.initial_jx) << ',' << detail::g17(run.objective)
        << ',' << err << '\n';
  }
}

// Two solves differing only in whether the slope term enters the dynamics
// and the acceleration budget.  The sign says how modeling the slope moved
// the deepest planned jerk: -1 means the slope-aware plan brakes harder.
struct AblationResult {
  ComparisonRun with_slope;
  ComparisonRun without_slope;
  int jerk_difference_sign = 0;
};

inline AblationResult run_slope_ablation(const ScenarioConfig& cfg) {
  const detail::PreparedScenario prep = detail::prepare_scenario(cfg);
  const double horizon = (cfg.ocp.N + 1) * cfg.ocp.d_s;

  ScenarioConfig on = cfg;
  on.ocp.include_slope = true;
  ScenarioConfig off = cfg;
  off.ocp.include_slope = false;

  AblationResult result;
  result.with_slope = detail::run_one_horizon(prep, on, horizon);
  result.without_slope = detail::run_one_horizon(prep, off, horizon);
  if (result.with_slope.status == "error" ||
      result.without_slope.status == "error") {
    throw Error("slope ablation solve failed: " + result.with_slope.error +
                result.without_slope.error);
  }
  const double d = result.with_slope.min_jerk - result.without_slope.min_jerk;
  result.jerk_difference_sign = (d > 0.0) - (d < 0.0);
  return result;
}

inline void write_ablation_json(std::ostream& out, const AblationResult& r) {
  auto block = [](const ComparisonRun& run) {
    return nlohmann::ordered_json{{"status", run.status},
                                  {"iterations", run.iterations},
                                  {"min_jerk", run.min_jerk},
                                  {"objective", run.objective}};
  };
  nlohmann::ordered_json j;
  j["with_slope"] = block(r.with_slope);
  j["without_slope"] = block(r.without_slope);
  j["jerk_difference_sign"] = r.jerk_difference_sign;
  out << j.dump(2) << '\n';
}

// Matched-trace table for the standalone matching verb.  Arc lengths appear
// when the matched edges link to a road profile chain, NaN otherwise.
inline void write_match_csv(std::ostream& out, const MatchedPath& path,
                            const GpsTrace& trace, const RoadGraph& graph) {
  std::vector<double> arcs;
  try {
    arcs = matched_arclength(path, graph);
  } catch (const MissingProfileLink&) {
    arcs.assign(path.fixes.size(), std::numeric_limits<double>::quiet_NaN());
  }
  out << "fix,t,edge,offset,s\n";
  for (std::size_t k = 0; k < path.fixes.size(); ++k) {
    const MatchedFix& f = path.fixes[k];
    out << f.fix_index << ',' << detail::g17(trace.fixes[f.fix_index].t) << ','
        << f.edge << ',' << detail::g17(f.offset) << ','
        << detail::g17(arcs[k]) << '\n';
  }
}

}  // namespace curvewarn

#endif  // CURVEWARN_SCENARIO_HPP_
