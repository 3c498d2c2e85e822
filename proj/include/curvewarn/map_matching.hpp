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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "curvewarn/error.hpp"
#include "curvewarn/geo.hpp"
#include "curvewarn/road_graph.hpp"

namespace curvewarn {

struct MatchParams {
  double sigma_gps = 4.07;  // [m] GPS noise scale of the emission model
  double beta = 20.0;       // [m] route-vs-great-circle detour scale
  double radius = 50.0;     // [m] candidate search radius around each fix
};

struct GpsFix {
  double t = 0.0;    // [s]
  double lat = 0.0;  // [deg]
  double lon = 0.0;  // [deg]
};

struct GpsTrace {
  std::vector<GpsFix> fixes;
};

// A projection of one fix onto one edge.
struct Candidate {
  std::string edge;
  double offset = 0.0;    // [m] along the edge from its start node
  double distance = 0.0;  // [m] fix to projection
  GpsFix fix;             // the originating fix
};

struct MatchedFix {
  std::size_t fix_index = 0;  // index into the trace
  std::string edge;
  double offset = 0.0;    // [m] along the edge
  double emission = 0.0;  // emission log-probability of the chosen candidate
};

struct MatchedPath {
  std::vector<MatchedFix> fixes;     // matched fixes in trace order
  std::vector<std::size_t> dropped;  // trace indices that found no usable candidate
  double joint_logprob = 0.0;        // sum of emissions and transitions
};

inline void validate_trace(const GpsTrace& trace) {
  if (trace.fixes.empty()) {
    throw InvariantViolation("GPS trace needs at least one fix");
  }
  for (std::size_t i = 1; i < trace.fixes.size(); ++i) {
    if (!(trace.fixes[i].t > trace.fixes[i - 1].t)) {
      throw InvariantViolation("GPS timestamps must be strictly increasing");
    }
  }
}

namespace detail {

// Closest point of one edge to the fix: minimum over the clamped orthogonal
// projections onto each polyline segment.
inline Candidate project_onto_edge(const GpsFix& fix, const RoadGraph& graph,
                                   const std::string& edge_id) {
  const auto& pts = graph.edge_plane(edge_id);
  const auto& cum = graph.edge_cumlen(edge_id);
  const PlanePoint p = graph.projection().to_plane(fix.lat, fix.lon);
  Candidate best;
  best.edge = edge_id;
  best.fix = fix;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double dx = pts[i + 1].x - pts[i].x;
    const double dy = pts[i + 1].y - pts[i].y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
      t = std::clamp(
          ((p.x - pts[i].x) * dx + (p.y - pts[i].y) * dy) / len2, 0.0, 1.0);
    }
    const double qx = pts[i].x + t * dx;
    const double qy = pts[i].y + t * dy;
    const double d = hypot2(p.x - qx, p.y - qy);
    if (d < best.distance) {
      best.distance = d;
      best.offset = cum[i] + t * std::sqrt(len2);
    }
  }
  return best;
}

inline std::vector<Candidate> candidates_or_empty(const GpsFix& fix,
                                                  const RoadGraph& graph,
                                                  double radius) {
  std::vector<Candidate> out;
  for (const auto& [id, e] : graph.edges()) {
    Candidate c = project_onto_edge(fix, graph, id);
    if (c.distance <= radius) out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.edge != b.edge) return a.edge < b.edge;
    return a.offset < b.offset;
  });
  return out;
}

// Per-call memo of single-source shortest distances.
class DijkstraCache {
 public:
  explicit DijkstraCache(const RoadGraph& graph) : graph_(graph) {}

  double between(const std::string& a, const std::string& b) {
    auto it = memo_.find(a);
    if (it == memo_.end()) {
      it = memo_.emplace(a, graph_.shortest_distances(a)).first;
    }
    const auto d = it->second.find(b);
    return d == it->second.end() ? std::numeric_limits<double>::infinity()
                                 : d->second;
  }

 private:
  const RoadGraph& graph_;
  std::map<std::string, std::map<std::string, double>> memo_;
};

// Shortest travel distance between two on-edge positions, edges traversable
// both ways: within one edge directly, otherwise out through either endpoint
// of the first edge and in through either endpoint of the second.
inline double route_distance(const Candidate& a, const Candidate& b,
                             const RoadGraph& graph, DijkstraCache& cache) {
  const GraphEdge& ea = graph.edge(a.edge);
  const GraphEdge& eb = graph.edge(b.edge);
  double best = std::numeric_limits<double>::infinity();
  if (a.edge == b.edge) best = std::abs(b.offset - a.offset);
  const std::pair<std::string, double> outs[2] = {
      {ea.from, a.offset}, {ea.to, ea.length - a.offset}};
  const std::pair<std::string, double> ins[2] = {
      {eb.from, b.offset}, {eb.to, eb.length - b.offset}};
  for (const auto& [na, ca] : outs) {
    for (const auto& [nb, cb] : ins) {
      const double mid = cache.between(na, nb);
      if (std::isfinite(mid)) best = std::min(best, ca + mid + cb);
    }
  }
  return best;
}

}  // namespace detail

// All edges whose closest projection of the fix lies within the radius,
// sorted by projection distance.
inline std::vector<Candidate> candidates(const GpsFix& fix,
                                         const RoadGraph& graph,
                                         double radius) {
  if (!(radius > 0.0)) {
    throw InvariantViolation("candidate radius must be positive");
  }
  std::vector<Candidate> out = detail::candidates_or_empty(fix, graph, radius);
  if (out.empty()) {
    throw NoCandidates("no edge within the search radius of the fix");
  }
  return out;
}

// Log density of a zero-mean Gaussian at the projection distance.
inline double emission_logprob(double distance, double sigma_gps) {
  if (!(sigma_gps > 0.0)) {
    throw InvariantViolation("sigma_gps must be positive");
  }
  const double z = distance / sigma_gps;
  return -0.5 * z * z - std::log(sigma_gps * std::sqrt(2.0 * M_PI));
}

// Log density of an exponential distribution on the absolute difference
// between the route distance and the fixes' great-circle distance.
// Unreachable candidate pairs score -infinity.
inline double transition_logprob(const Candidate& a, const Candidate& b,
                                 const RoadGraph& graph, double beta) {
  if (!(beta > 0.0)) {
    throw InvariantViolation("beta must be positive");
  }
  detail::DijkstraCache cache(graph);
  const double route = detail::route_distance(a, b, graph, cache);
  if (!std::isfinite(route)) return -std::numeric_limits<double>::infinity();
  const double gc =
      haversine_distance(a.fix.lat, a.fix.lon, b.fix.lat, b.fix.lon);
  return -std::abs(route - gc) / beta - std::log(beta);
}

// Maximum-joint-probability assignment of fixes to edge positions: Gaussian
// emissions on projection distance, exponential transitions on route-detour,
// decoded exactly by dynamic programming over the candidate stages.  Fixes
// with no candidate in the radius, or no finite-probability connection to the
// path so far, are dropped and reported instead of failing the trace.  Ties
// resolve to the earliest candidate in distance order, so identical inputs
// give identical paths.
inline MatchedPath viterbi_match(const GpsTrace& trace, const RoadGraph& graph,
                                 const MatchParams& params = {}) {
  validate_trace(trace);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  detail::DijkstraCache cache(graph);

  MatchedPath path;
  // One DP stage per kept fix: its candidates, their cumulative best scores,
  // and the predecessor index in the previous kept stage.
  struct Stage {
    std::size_t fix_index;
    std::vector<Candidate> cands;
    std::vector<double> score;
    std::vector<int> back;
  };
  std::vector<Stage> stages;

  for (std::size_t i = 0; i < trace.fixes.size(); ++i) {
    std::vector<Candidate> cands =
        detail::candidates_or_empty(trace.fixes[i], graph, params.radius);
    if (cands.empty()) {
      path.dropped.push_back(i);
      continue;
    }
    Stage st;
    st.fix_index = i;
    st.score.assign(cands.size(), neg_inf);
    st.back.assign(cands.size(), -1);
    if (stages.empty()) {
      for (std::size_t j = 0; j < cands.size(); ++j) {
        st.score[j] = emission_logprob(cands[j].distance, params.sigma_gps);
      }
    } else {
      const Stage& prev = stages.back();
      for (std::size_t j = 0; j < cands.size(); ++j) {
        const double emis =
            emission_logprob(cands[j].distance, params.sigma_gps);
        for (std::size_t k = 0; k < prev.cands.size(); ++k) {
          if (prev.score[k] == neg_inf) continue;
          const double route =
              detail::route_distance(prev.cands[k], cands[j], graph, cache);
          if (!std::isfinite(route)) continue;
          const double gc = haversine_distance(
              prev.cands[k].fix.lat, prev.cands[k].fix.lon,
              cands[j].fix.lat, cands[j].fix.lon);
          const double trans = -std::abs(route - gc) / params.beta -
                               std::log(params.beta);
          const double s = prev.score[k] + trans + emis;
          if (s > st.score[j]) {
            st.score[j] = s;
            st.back[j] = static_cast<int>(k);
          }
        }
      }
      if (*std::max_element(st.score.begin(), st.score.end()) == neg_inf) {
        // No candidate of this fix connects to the path; treat like a fix
        // with no candidates rather than severing the route.
        path.dropped.push_back(i);
        continue;
      }
    }
    st.cands = std::move(cands);
    stages.push_back(std::move(st));
  }

  if (stages.empty()) {
    throw NoPath("no fix produced a usable candidate");
  }

  // Backtrack from the best final candidate.
  const Stage& last = stages.back();
  std::size_t arg = 0;
  for (std::size_t j = 1; j < last.score.size(); ++j) {
    if (last.score[j] > last.score[arg]) arg = j;
  }
  path.joint_logprob = last.score[arg];
  std::vector<std::size_t> choice(stages.size());
  for (std::size_t k = stages.size(); k-- > 0;) {
    choice[k] = arg;
    if (k > 0) arg = static_cast<std::size_t>(stages[k].back[arg]);
  }
  path.fixes.reserve(stages.size());
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const Candidate& c = stages[k].cands[choice[k]];
    path.fixes.push_back({stages[k].fix_index, c.edge, c.offset,
                          emission_logprob(c.distance, params.sigma_gps)});
  }
  return path;
}

// Arc-length positions of the matched fixes on the road profile laid along
// the matched edges.  The edges sharing the path's profile id must form one
// chain (each edge's end node starting the next); the chain's head is the
// profile's s = 0.
inline std::vector<double> matched_arclength(const MatchedPath& path,
                                             const RoadGraph& graph) {
  if (path.fixes.empty()) {
    throw MissingProfileLink("matched path is empty");
  }
  const std::string profile = graph.edge(path.fixes.front().edge).profile_id;
  if (profile.empty()) {
    throw MissingProfileLink("matched edge '" + path.fixes.front().edge +
                             "' carries no profile link");
  }
  for (const auto& f : path.fixes) {
    if (graph.edge(f.edge).profile_id != profile) {
      throw MissingProfileLink("matched edge '" + f.edge +
                               "' is not linked to profile '" + profile + "'");
    }
  }

  // Reconstruct the chain order by walking from the head node: the one
  // from-node that no chain edge ends at.
  std::map<std::string, const GraphEdge*> by_from;
  std::map<std::string, bool> is_target;
  std::size_t count = 0;
  for (const auto& [id, e] : graph.edges()) {
    if (e.profile_id != profile) continue;
    if (!by_from.emplace(e.from, &e).second) {
      throw InvariantViolation("profile '" + profile +
                               "' chain branches at node '" + e.from + "'");
    }
    is_target[e.to] = true;
    ++count;
  }
  const GraphEdge* head = nullptr;
  for (const auto& [from, e] : by_from) {
    if (!is_target[from]) {
      if (head != nullptr) {
        throw InvariantViolation("profile '" + profile +
                                 "' chain has multiple start edges");
      }
      head = e;
    }
  }
  if (head == nullptr) {
    throw InvariantViolation("profile '" + profile + "' chain is cyclic");
  }
  std::map<std::string, double> origin;
  double s = 0.0;
  const GraphEdge* e = head;
  for (std::size_t i = 0; i < count; ++i) {
    origin[e->id] = s;
    s += e->length;
    const auto next = by_from.find(e->to);
    if (next == by_from.end()) break;
    e = next->second;
  }
  if (origin.size() != count) {
    throw InvariantViolation("profile '" + profile +
                             "' edges do not form one connected chain");
  }

  std::vector<double> out;
  out.reserve(path.fixes.size());
  for (const auto& f : path.fixes) {
    out.push_back(origin.at(f.edge) + f.offset);
  }
  return out;
}

// CSV schema: `t,lat,lon`, one fix per line, optional header.
inline GpsTrace load_gps_trace(std::istream& in) {
  GpsTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') ||
        !std::getline(row, c)) {
      throw ParseError("GPS trace line " + std::to_string(lineno) +
                       ": expected 't,lat,lon'");
    }
    try {
      trace.fixes.push_back({std::stod(a), std::stod(b), std::stod(c)});
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header row
      throw ParseError("GPS trace line " + std::to_string(lineno) +
                       ": non-numeric field");
    }
  }
  validate_trace(trace);
  return trace;
}

inline GpsTrace load_gps_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open GPS trace file '" + path + "'");
  }
  return load_gps_trace(in);
}

}  // namespace curvewarn
