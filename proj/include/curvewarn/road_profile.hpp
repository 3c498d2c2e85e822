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
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "curvewarn/error.hpp"

namespace curvewarn {

// Pointwise road description at one arc-length station.
//
// sigma is the longitudinal slope in the sign convention of the speed
// dynamics: u_x gains +g*sigma*cos(alpha), so sigma > 0 means the road
// descends (gravity assists forward motion) and sigma < 0 means it climbs.
struct RoadSample {
  double kappa = 0.0;    // [1/m] centerline curvature, > 0 for left curves
  double sigma = 0.0;    // [-] descent-positive slope (see above)
  double width = 3.5;    // [m] lane width b_r
  double u_limit = 22.2; // [m/s] legal/advised speed limit
};

// Piecewise-linear road model over a strictly increasing arc-length grid.
class RoadProfile {
 public:
  RoadProfile(std::vector<double> s_grid, std::vector<double> kappa,
              std::vector<double> sigma, std::vector<double> width,
              std::vector<double> u_limit)
      : s_(std::move(s_grid)),
        kappa_(std::move(kappa)),
        sigma_(std::move(sigma)),
        width_(std::move(width)),
        u_limit_(std::move(u_limit)) {
    validate();
  }

  std::size_t size() const { return s_.size(); }
  double s_begin() const { return s_.front(); }
  double s_end() const { return s_.back(); }

  const std::vector<double>& s_grid() const { return s_; }
  const std::vector<double>& kappa_grid() const { return kappa_; }
  const std::vector<double>& sigma_grid() const { return sigma_; }
  const std::vector<double>& width_grid() const { return width_; }
  const std::vector<double>& u_limit_grid() const { return u_limit_; }

  RoadSample query(double s) const {
    if (!(s >= s_.front() && s <= s_.back())) {
      throw OutOfRange("arc length " + std::to_string(s) + " outside [" +
                       std::to_string(s_.front()) + ", " +
                       std::to_string(s_.back()) + "]");
    }
    // Exact knot hits return the stored values; interior points interpolate.
    const auto it = std::lower_bound(s_.begin(), s_.end(), s);
    const std::size_t hi = static_cast<std::size_t>(it - s_.begin());
    if (hi < s_.size() && s_[hi] == s) {
      return {kappa_[hi], sigma_[hi], width_[hi], u_limit_[hi]};
    }
    const std::size_t i = hi - 1;
    const double t = (s - s_[i]) / (s_[i + 1] - s_[i]);
    auto lerp = [t](double a, double b) { return a + t * (b - a); };
    return {lerp(kappa_[i], kappa_[i + 1]), lerp(sigma_[i], sigma_[i + 1]),
            lerp(width_[i], width_[i + 1]), lerp(u_limit_[i], u_limit_[i + 1])};
  }

 private:
  void validate() const {
    const std::size_t n = s_.size();
    if (n < 2) {
      throw InvariantViolation("road profile needs at least 2 knots");
    }
    if (kappa_.size() != n || sigma_.size() != n || width_.size() != n ||
        u_limit_.size() != n) {
      throw InvariantViolation("road profile arrays must have equal length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s_[i]) || !std::isfinite(kappa_[i]) ||
          !std::isfinite(sigma_[i]) || !std::isfinite(width_[i]) ||
          !std::isfinite(u_limit_[i])) {
        throw InvariantViolation("road profile values must be finite");
      }
      if (i > 0 && !(s_[i] > s_[i - 1])) {
        throw InvariantViolation("s_grid must be strictly increasing");
      }
      if (!(width_[i] > 0.0)) {
        throw InvariantViolation("lane width must be positive");
      }
      if (!(u_limit_[i] > 0.0)) {
        throw InvariantViolation("speed limit must be positive");
      }
      // Keeps 1 - n*kappa positive across the whole lane n in [0, width].
      if (!(std::abs(kappa_[i]) * width_[i] < 1.0)) {
        throw InvariantViolation("|kappa|*width must stay below 1");
      }
    }
  }

  std::vector<double> s_;
  std::vector<double> kappa_;
  std::vector<double> sigma_;
  std::vector<double> width_;
  std::vector<double> u_limit_;
};

namespace detail {

inline std::vector<double> json_number_array(const nlohmann::json& j,
                                             const char* key) {
  if (!j.contains(key)) {
    throw ParseError(std::string("profile JSON missing key '") + key + "'");
  }
  const auto& arr = j.at(key);
  if (!arr.is_array()) {
    throw ParseError(std::string("profile key '") + key + "' must be an array");
  }
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) {
      throw ParseError(std::string("profile key '") + key +
                       "' must contain only numbers");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline RoadProfile load_profile(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid profile JSON: ") + e.what());
  }
  return RoadProfile(detail::json_number_array(j, "s"),
                     detail::json_number_array(j, "kappa"),
                     detail::json_number_array(j, "sigma"),
                     detail::json_number_array(j, "width"),
                     detail::json_number_array(j, "u_limit"));
}

inline RoadProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open profile file '" + path + "'");
  }
  return load_profile(in);
}

inline void save_profile(const RoadProfile& profile, std::ostream& out) {
  nlohmann::json j;
  j["s"] = profile.s_grid();
  j["kappa"] = profile.kappa_grid();
  j["sigma"] = profile.sigma_grid();
  j["width"] = profile.width_grid();
  j["u_limit"] = profile.u_limit_grid();
  out << j.dump(2) << '\n';
}

inline void save_profile(const RoadProfile& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ParseError("cannot open profile file '" + path + "' for writing");
  }
  save_profile(profile, out);
}

}  // namespace curvewarn
