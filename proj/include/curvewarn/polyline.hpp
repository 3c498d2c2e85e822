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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curvewarn/error.hpp"
#include "curvewarn/geo.hpp"
#include "curvewarn/road_profile.hpp"

namespace curvewarn {

using GeoPolyline = std::vector<GeoPoint>;

struct PolylineOptions {
  double knot_spacing = 5.0;  // [m] uniform resampling step
  double width = 3.5;         // [m] filled in for every knot
  double u_limit = 22.2;      // [m/s] filled in for every knot
};

namespace detail {

// Signed circumcircle curvature of the triple (a, b, c); positive when the
// polyline bends left. Near-collinear triples return 0 rather than failing.
inline double circumcircle_curvature(const PlanePoint& a, const PlanePoint& b,
                                     const PlanePoint& c) {
  const double abx = b.x - a.x, aby = b.y - a.y;
  const double bcx = c.x - b.x, bcy = c.y - b.y;
  const double acx = c.x - a.x, acy = c.y - a.y;
  const double cross = abx * bcy - aby * bcx;
  const double denom = hypot2(abx, aby) * hypot2(bcx, bcy) * hypot2(acx, acy);
  if (denom < 1e-12) {
    return 0.0;
  }
  return 2.0 * cross / denom;
}

// Centered moving average, window clamped at the ends.
inline std::vector<double> moving_average(const std::vector<double>& v,
                                          int window) {
  const int n = static_cast<int>(v.size());
  const int half = window / 2;
  std::vector<double> out(v.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += v[k];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

inline double interp_at(const std::vector<double>& grid,
                        const std::vector<double>& values, double x) {
  if (x <= grid.front()) return values.front();
  if (x >= grid.back()) return values.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double t = (x - grid[i]) / (grid[i + 1] - grid[i]);
  return values[i] + t * (values[i + 1] - values[i]);
}

}  // namespace detail

// Derives a RoadProfile from a geographic polyline: equirectangular
// projection about the centroid, circumcircle curvature at interior
// vertices, slope from elevation differences (descent-positive, matching
// RoadSample::sigma), a centered 5-knot moving average on both, then
// resampling to uniform knots.
inline RoadProfile profile_from_polyline(const GeoPolyline& line,
                                         const PolylineOptions& opt = {}) {
  if (line.size() < 3) {
    throw DegeneratePolyline("polyline needs at least 3 points");
  }
  if (!(opt.knot_spacing > 0.0)) {
    throw InvariantViolation("knot_spacing must be positive");
  }

  double clat = 0.0, clon = 0.0;
  for (const auto& p : line) {
    clat += p.lat;
    clon += p.lon;
  }
  const LocalProjection proj(clat / static_cast<double>(line.size()),
                             clon / static_cast<double>(line.size()));
  std::vector<PlanePoint> pts;
  pts.reserve(line.size());
  for (const auto& p : line) pts.push_back(proj.to_plane(p.lat, p.lon));

  const std::size_t n = pts.size();
  std::vector<double> t(n, 0.0);  // cumulative arc length at each vertex
  for (std::size_t i = 1; i < n; ++i) {
    t[i] = t[i - 1] + hypot2(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
  }
  if (!(t.back() > 0.0)) {
    throw DegeneratePolyline("polyline has zero arc length");
  }

  std::vector<double> kappa(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    kappa[i] = detail::circumcircle_curvature(pts[i - 1], pts[i], pts[i + 1]);
  }
  kappa[0] = kappa[1];
  kappa[n - 1] = kappa[n - 2];

  // Central elevation differences; sigma > 0 on descent so that the speed
  // dynamics' +g*sigma term accelerates downhill.
  std::vector<double> sigma(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = (i == 0) ? 0 : i - 1;
    const std::size_t hi = (i + 1 == n) ? n - 1 : i + 1;
    const double darc = t[hi] - t[lo];
    if (darc > 1e-9) {
      sigma[i] = -(line[hi].ele - line[lo].ele) / darc;
    }
  }

  const std::vector<double> kappa_s = detail::moving_average(kappa, 5);
  const std::vector<double> sigma_s = detail::moving_average(sigma, 5);

  const double total = t.back();
  std::vector<double> s_grid;
  for (std::size_t i = 0;; ++i) {
    const double s = static_cast<double>(i) * opt.knot_spacing;
    if (s >= total - 1e-9) break;
    s_grid.push_back(s);
  }
  s_grid.push_back(total);
  const std::size_t n_knots = s_grid.size();
  std::vector<double> k_out(n_knots), sg_out(n_knots);
  for (std::size_t i = 0; i < n_knots; ++i) {
    k_out[i] = detail::interp_at(t, kappa_s, s_grid[i]);
    sg_out[i] = detail::interp_at(t, sigma_s, s_grid[i]);
  }
  return RoadProfile(std::move(s_grid), std::move(k_out), std::move(sg_out),
                     std::vector<double>(n_knots, opt.width),
                     std::vector<double>(n_knots, opt.u_limit));
}

inline GeoPolyline load_polyline(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid polyline JSON: ") + e.what());
  }
  if (!j.is_array()) {
    throw ParseError("polyline JSON must be an array of [lat, lon, ele]");
  }
  GeoPolyline line;
  line.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() ||
        !p[1].is_number() || !p[2].is_number()) {
      throw ParseError("polyline entries must be [lat, lon, ele] numbers");
    }
    line.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  }
  return line;
}

inline GeoPolyline load_polyline(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open polyline file '" + path + "'");
  }
  return load_polyline(in);
}

}  // namespace curvewarn
