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

namespace curvewarn {

inline constexpr double kEarthRadius = 6371000.0;  // [m] mean sphere radius
inline constexpr double kDegToRad = M_PI / 180.0;

struct GeoPoint {
  double lat = 0.0;  // [deg]
  double lon = 0.0;  // [deg]
  double ele = 0.0;  // [m]
};

// Local tangent-plane coordinates, x east / y north [m].
struct PlanePoint {
  double x = 0.0;
  double y = 0.0;
};

// Equirectangular projection about a reference point. Adequate for the
// sub-kilometer neighborhoods this library works in; distortion grows with
// distance from the reference.
class LocalProjection {
 public:
  LocalProjection(double ref_lat_deg, double ref_lon_deg)
      : ref_lat_(ref_lat_deg),
        ref_lon_(ref_lon_deg),
        cos_lat_(std::cos(ref_lat_deg * kDegToRad)) {}

  PlanePoint to_plane(double lat_deg, double lon_deg) const {
    return {kEarthRadius * cos_lat_ * (lon_deg - ref_lon_) * kDegToRad,
            kEarthRadius * (lat_deg - ref_lat_) * kDegToRad};
  }

  GeoPoint to_geo(const PlanePoint& p) const {
    return {ref_lat_ + p.y / kEarthRadius / kDegToRad,
            ref_lon_ + p.x / (kEarthRadius * cos_lat_) / kDegToRad, 0.0};
  }

  double ref_lat() const { return ref_lat_; }
  double ref_lon() const { return ref_lon_; }

 private:
  double ref_lat_;
  double ref_lon_;
  double cos_lat_;
};

inline double haversine_distance(double lat1, double lon1, double lat2,
                                 double lon2) {
  const double p1 = lat1 * kDegToRad;
  const double p2 = lat2 * kDegToRad;
  const double dp = (lat2 - lat1) * kDegToRad;
  const double dl = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double hypot2(double dx, double dy) { return std::sqrt(dx * dx + dy * dy); }

}  // namespace curvewarn
