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

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "curvewarn/error.hpp"
#include "curvewarn/geo.hpp"

namespace curvewarn {

struct GraphNode {
  std::string id;
  double lat = 0.0;  // [deg]
  double lon = 0.0;  // [deg]
};

struct GraphEdge {
  std::string id;
  std::string from;
  std::string to;
  std::vector<GeoPoint> polyline;  // >= 2 vertices, first/last at the nodes
  double length = 0.0;             // [m]; must match the polyline within 0.1%
  std::string profile_id;          // road profile laid along this edge; may be empty
};

// Immutable road network: nodes at geographic positions, edges with shaped
// polylines.  All metric geometry (projections, offsets, lengths, routing
// weights) lives in one shared tangent plane about the node centroid, so
// distances composed across edges stay consistent.  Edges are traversable in
// both directions for routing; the stored orientation defines the offset
// direction and the profile alignment.
class RoadGraph {
 public:
  RoadGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges)
      : proj_(make_projection(nodes)) {
    if (nodes.empty()) {
      throw InvariantViolation("road graph needs at least one node");
    }
    for (auto& n : nodes) {
      if (!nodes_.emplace(n.id, n).second) {
        throw InvariantViolation("duplicate node id '" + n.id + "'");
      }
    }
    for (auto& e : edges) {
      if (nodes_.find(e.from) == nodes_.end() ||
          nodes_.find(e.to) == nodes_.end()) {
        throw InvariantViolation("edge '" + e.id + "' references unknown node");
      }
      if (e.polyline.size() < 2) {
        throw InvariantViolation("edge '" + e.id + "' needs >= 2 polyline points");
      }
      std::vector<PlanePoint> plane;
      plane.reserve(e.polyline.size());
      for (const auto& p : e.polyline) plane.push_back(proj_.to_plane(p.lat, p.lon));
      std::vector<double> cum(plane.size(), 0.0);
      for (std::size_t i = 1; i < plane.size(); ++i) {
        cum[i] = cum[i - 1] + hypot2(plane[i].x - plane[i - 1].x,
                                     plane[i].y - plane[i - 1].y);
      }
      const double poly_len = cum.back();
      if (!(poly_len > 0.0)) {
        throw InvariantViolation("edge '" + e.id + "' has zero length");
      }
      if (e.length > 0.0 &&
          std::abs(e.length - poly_len) > 1e-3 * poly_len) {
        throw InvariantViolation("edge '" + e.id +
                                 "' length disagrees with its polyline by more "
                                 "than 0.1%");
      }
      e.length = poly_len;
      const std::string id = e.id;
      if (!edges_.emplace(id, std::move(e)).second) {
        throw InvariantViolation("duplicate edge id '" + id + "'");
      }
      plane_.emplace(id, std::move(plane));
      cum_.emplace(id, std::move(cum));
    }
    for (const auto& [id, e] : edges_) {
      adj_[e.from].emplace_back(e.to, e.length);
      adj_[e.to].emplace_back(e.from, e.length);
    }
  }

  const std::map<std::string, GraphNode>& nodes() const { return nodes_; }
  const std::map<std::string, GraphEdge>& edges() const { return edges_; }
  const LocalProjection& projection() const { return proj_; }

  const GraphEdge& edge(const std::string& id) const {
    const auto it = edges_.find(id);
    if (it == edges_.end()) {
      throw OutOfRange("unknown edge id '" + id + "'");
    }
    return it->second;
  }

  // Edge polyline in plane coordinates and its cumulative vertex arc lengths.
  const std::vector<PlanePoint>& edge_plane(const std::string& id) const {
    return plane_.at(id);
  }
  const std::vector<double>& edge_cumlen(const std::string& id) const {
    return cum_.at(id);
  }

  // Shortest-path distance from `source` to every reachable node, Dijkstra
  // over edge lengths.  Unreachable nodes are absent from the result.
  std::map<std::string, double> shortest_distances(
      const std::string& source) const {
    if (nodes_.find(source) == nodes_.end()) {
      throw OutOfRange("unknown node id '" + source + "'");
    }
    std::map<std::string, double> dist;
    using Item = std::pair<double, std::string>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
    dist[source] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
      const auto [d, u] = queue.top();
      queue.pop();
      const auto it = dist.find(u);
      if (it != dist.end() && d > it->second) continue;
      const auto au = adj_.find(u);
      if (au == adj_.end()) continue;
      for (const auto& [v, w] : au->second) {
        const double nd = d + w;
        const auto dv = dist.find(v);
        if (dv == dist.end() || nd < dv->second) {
          dist[v] = nd;
          queue.emplace(nd, v);
        }
      }
    }
    return dist;
  }

 private:
  static LocalProjection make_projection(const std::vector<GraphNode>& nodes) {
    double clat = 0.0, clon = 0.0;
    for (const auto& n : nodes) {
      clat += n.lat;
      clon += n.lon;
    }
    const double inv = nodes.empty() ? 1.0 : 1.0 / static_cast<double>(nodes.size());
    return LocalProjection(clat * inv, clon * inv);
  }

  std::map<std::string, GraphNode> nodes_;
  std::map<std::string, GraphEdge> edges_;
  LocalProjection proj_;
  std::map<std::string, std::vector<PlanePoint>> plane_;
  std::map<std::string, std::vector<double>> cum_;
  std::map<std::string, std::vector<std::pair<std::string, double>>> adj_;
};

// JSON schema: {"nodes": [{"id", "lat", "lon"}...],
//               "edges": [{"id", "from", "to",
//                          "polyline": [[lat, lon]...],
//                          "length": optional [m],
//                          "profile": optional id}...]}
inline RoadGraph load_road_graph(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid road graph JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("nodes") || !j.contains("edges")) {
    throw ParseError("road graph JSON needs 'nodes' and 'edges' arrays");
  }
  std::vector<GraphNode> nodes;
  for (const auto& n : j.at("nodes")) {
    if (!n.contains("id") || !n.contains("lat") || !n.contains("lon")) {
      throw ParseError("graph node needs 'id', 'lat', 'lon'");
    }
    nodes.push_back({n.at("id").get<std::string>(), n.at("lat").get<double>(),
                     n.at("lon").get<double>()});
  }
  std::vector<GraphEdge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.contains("id") || !e.contains("from") || !e.contains("to") ||
        !e.contains("polyline")) {
      throw ParseError("graph edge needs 'id', 'from', 'to', 'polyline'");
    }
    GraphEdge g;
    g.id = e.at("id").get<std::string>();
    g.from = e.at("from").get<std::string>();
    g.to = e.at("to").get<std::string>();
    for (const auto& p : e.at("polyline")) {
      if (!p.is_array() || p.size() < 2) {
        throw ParseError("edge polyline entries must be [lat, lon]");
      }
      g.polyline.push_back({p[0].get<double>(), p[1].get<double>(), 0.0});
    }
    if (e.contains("length")) g.length = e.at("length").get<double>();
    if (e.contains("profile")) g.profile_id = e.at("profile").get<std::string>();
    edges.push_back(std::move(g));
  }
  return RoadGraph(std::move(nodes), std::move(edges));
}

inline RoadGraph load_road_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open road graph file '" + path + "'");
  }
  return load_road_graph(in);
}

}  // namespace curvewarn
