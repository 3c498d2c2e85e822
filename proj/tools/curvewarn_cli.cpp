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
// Command-line front end.  Exit codes for `run`: 0 safe, 1 intermediate,
// 2 danger, 3 error; other verbs return 0 on success, 3 on error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "curvewarn/map_matching.hpp"
#include "curvewarn/polyline.hpp"
#include "curvewarn/risk.hpp"
#include "curvewarn/road_graph.hpp"
#include "curvewarn/scenario.hpp"

namespace {

using namespace curvewarn;

// Flags shared by the scenario-driven verbs; every ScenarioConfig field has
// a mirror.  Values given on the command line override the config file.
struct ScenarioFlags {
  std::string config;
  std::string profile, polyline, graph, trace, perception, output_dir;
  double speed = 0.0, s0 = 0.0, n_lnet = 0.0, phi_rnet = 0.0;
  int N = 0, max_iter = 0;
  double d_s = 0.0, q_t = 0.0, q_a = 0.0, r_x = 0.0, r_psi = 0.0;
  double theta1 = 0.0, theta2 = 0.0;
  bool no_slope = false, no_roll_lane = false;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f) {
  cmd->add_option("-c,--config", f.config, "scenario config file");
  cmd->add_option("--profile", f.profile, "road profile JSON");
  cmd->add_option("--polyline", f.polyline, "geographic polyline JSON");
  cmd->add_option("--graph", f.graph, "road graph JSON");
  cmd->add_option("--trace", f.trace, "GPS trace CSV");
  cmd->add_option("--perception", f.perception, "perception CSV");
  cmd->add_option("-o,--output-dir", f.output_dir, "artifact directory");
  cmd->add_option("--speed", f.speed, "current speed [m/s]");
  cmd->add_option("--s0", f.s0, "start arc length [m]");
  cmd->add_option("--n-lnet", f.n_lnet, "lane position estimate [m]");
  cmd->add_option("--phi-rnet", f.phi_rnet, "roll estimate [rad]");
  cmd->add_option("--horizon-steps", f.N, "horizon steps N");
  cmd->add_option("--ds", f.d_s, "grid spacing [m]");
  cmd->add_option("--q-t", f.q_t, "traversal-time weight");
  cmd->add_option("--q-a", f.q_a, "acceleration-usage weight");
  cmd->add_option("--r-x", f.r_x, "longitudinal-jerk weight");
  cmd->add_option("--r-psi", f.r_psi, "yaw-jerk weight");
  cmd->add_option("--max-iter", f.max_iter, "solver iteration cap");
  cmd->add_flag("--no-slope", f.no_slope, "drop the slope term");
  cmd->add_flag("--no-roll-lane", f.no_roll_lane,
                "drop the roll-lane coupling");
  cmd->add_option("--theta1", f.theta1, "safe/intermediate jerk [m/s^3]");
  cmd->add_option("--theta2", f.theta2, "intermediate/danger jerk [m/s^3]");
}

ScenarioConfig merge_config(const CLI::App* cmd, const ScenarioFlags& f) {
  ScenarioConfig cfg;
  if (!f.config.empty()) cfg = load_scenario_config(f.config);
  auto given = [cmd](const std::string& name) {
    return cmd->count(name) > 0;
  };
  if (given("--profile")) cfg.profile_path = f.profile;
  if (given("--polyline")) cfg.polyline_path = f.polyline;
  if (given("--graph")) cfg.graph_path = f.graph;
  if (given("--trace")) cfg.trace_path = f.trace;
  if (given("--perception")) cfg.perception_path = f.perception;
  if (given("--output-dir")) cfg.output_dir = f.output_dir;
  if (given("--speed")) cfg.speed = f.speed;
  if (given("--s0")) cfg.s0 = f.s0;
  if (given("--n-lnet")) cfg.n_lnet = f.n_lnet;
  if (given("--phi-rnet")) cfg.phi_rnet = f.phi_rnet;
  if (given("--horizon-steps")) cfg.ocp.N = f.N;
  if (given("--ds")) cfg.ocp.d_s = f.d_s;
  if (given("--q-t")) cfg.ocp.q_t = f.q_t;
  if (given("--q-a")) cfg.ocp.q_a = f.q_a;
  if (given("--r-x")) cfg.ocp.r_x = f.r_x;
  if (given("--r-psi")) cfg.ocp.r_psi = f.r_psi;
  if (given("--max-iter")) cfg.ocp.max_iter = f.max_iter;
  if (f.no_slope) cfg.ocp.include_slope = false;
  if (f.no_roll_lane) cfg.ocp.include_roll_lane = false;
  if (given("--theta1")) cfg.risk.theta1 = f.theta1;
  if (given("--theta2")) cfg.risk.theta2 = f.theta2;
  return cfg;
}

int cmd_run(const CLI::App* cmd, const ScenarioFlags& f) {
  const ScenarioConfig cfg = merge_config(cmd, f);
  const ScenarioResult result = run_scenario(cfg);
  for (const std::string& note : result.notes) {
    std::cerr << "note: " << note << '\n';
  }
  const int code = write_scenario_artifacts(result, cfg);
  std::cout << "risk: " << to_string(result.report.overall) << " (min jerk "
            << result.report.min_jerk << " m/s^3 at s="
            << result.report.worst_s << " m, solver "
            << detail::status_string(result.solution.status) << ")\n";
  return code;
}

int cmd_sweep(const CLI::App* cmd, const ScenarioFlags& f,
              const std::vector<double>& horizons) {
  const ScenarioConfig cfg = merge_config(cmd, f);
  const SweepResult sweep = run_horizon_sweep(cfg, horizons);
  std::filesystem::create_directories(cfg.output_dir);
  const auto path =
      std::filesystem::path(cfg.output_dir) / "horizon_sweep.csv";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_sweep_csv(out, sweep);
  write_sweep_csv(std::cout, sweep);
  for (const ComparisonRun& run : sweep.runs) {
    if (run.status != "error") return 0;
  }
  throw Error("every horizon in the sweep failed");
}

int cmd_ablate(const CLI::App* cmd, const ScenarioFlags& f) {
  const ScenarioConfig cfg = merge_config(cmd, f);
  const AblationResult result = run_slope_ablation(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  const auto path =
      std::filesystem::path(cfg.output_dir) / "slope_ablation.json";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_ablation_json(out, result);
  write_ablation_json(std::cout, result);
  return 0;
}

int cmd_match(const std::string& graph_path, const std::string& trace_path,
              const std::string& out_path, const MatchParams& params) {
  const RoadGraph graph = load_road_graph(graph_path);
  const GpsTrace trace = load_gps_trace(trace_path);
  const MatchedPath path = viterbi_match(trace, graph, params);
  if (!path.dropped.empty()) {
    std::cerr << "note: dropped " << path.dropped.size() << " of "
              << trace.fixes.size() << " fixes\n";
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  write_match_csv(out, path, trace, graph);
  std::cout << "matched " << path.fixes.size() << " of "
            << trace.fixes.size() << " fixes (joint logprob "
            << path.joint_logprob << ")\n";
  return 0;
}

int cmd_profile(const std::string& polyline_path, const std::string& out_path,
                const PolylineOptions& opt) {
  const GeoPolyline line = load_polyline(polyline_path);
  const RoadProfile profile = profile_from_polyline(line, opt);
  save_profile(profile, out_path);
  std::cout << "profile: " << profile.size() << " knots over ["
            << profile.s_begin() << ", " << profile.s_end() << "] m\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curve warning engine: trajectory risk from road geometry"};
  app.require_subcommand(1);

  ScenarioFlags run_flags;
  CLI::App* run = app.add_subcommand(
      "run", "match, fuse, solve, and classify one scenario");
  add_scenario_flags(run, run_flags);

  ScenarioFlags sweep_flags;
  std::vector<double> horizons;
  CLI::App* sweep = app.add_subcommand(
      "sweep-horizon", "solve one scenario over several horizon lengths");
  add_scenario_flags(sweep, sweep_flags);
  sweep->add_option("--horizons", horizons, "horizon lengths [m]")
      ->required()
      ->delimiter(',');

  ScenarioFlags ablate_flags;
  CLI::App* ablate = app.add_subcommand(
      "ablate-slope", "compare solves with and without the slope term");
  add_scenario_flags(ablate, ablate_flags);

  std::string m_graph, m_trace, m_out = "matched.csv";
  MatchParams m_params;
  CLI::App* match = app.add_subcommand("match", "map-match a GPS trace");
  match->add_option("--graph", m_graph, "road graph JSON")->required();
  match->add_option("--trace", m_trace, "GPS trace CSV")->required();
  match->add_option("--out", m_out, "output CSV path");
  match->add_option("--sigma-gps", m_params.sigma_gps, "emission sigma [m]");
  match->add_option("--beta", m_params.beta, "transition scale [m]");
  match->add_option("--radius", m_params.radius, "candidate radius [m]");

  std::string p_polyline, p_out = "profile.json";
  PolylineOptions p_opt;
  CLI::App* profile = app.add_subcommand(
      "profile", "derive a road profile from a geographic polyline");
  profile->add_option("--polyline", p_polyline, "polyline JSON")->required();
  profile->add_option("--out", p_out, "output profile JSON path");
  profile->add_option("--spacing", p_opt.knot_spacing, "knot spacing [m]");
  profile->add_option("--width", p_opt.width, "lane width [m]");
  profile->add_option("--u-limit", p_opt.u_limit, "speed limit [m/s]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run, run_flags);
    if (sweep->parsed()) return cmd_sweep(sweep, sweep_flags, horizons);
    if (ablate->parsed()) return cmd_ablate(ablate, ablate_flags);
    if (match->parsed()) return cmd_match(m_graph, m_trace, m_out, m_params);
    if (profile->parsed()) return cmd_profile(p_polyline, p_out, p_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 3;
}
