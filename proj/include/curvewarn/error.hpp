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

#include <stdexcept>
#include <string>

namespace curvewarn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Query outside the modeled arc-length range.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

// Malformed or incomplete input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented structural invariant.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

// 1 - n*kappa <= 0: the lateral offset crosses the curvature center.
class SingularGeometry : public Error {
 public:
  using Error::Error;
};

// Polyline too short to estimate curvature (fewer than 3 points).
class DegeneratePolyline : public Error {
 public:
  using Error::Error;
};

// Forward progress rate too small for the space-domain transform.
class SingularProgress : public Error {
 public:
  using Error::Error;
};

// Roll-dependent lane interval is empty at the given roll angle.
class EmptyLane : public Error {
 public:
  using Error::Error;
};

// No map-matching candidate within the search radius for any fix.
class NoCandidates : public Error {
 public:
  using Error::Error;
};

// No route through the road graph connects the candidate sequence.
class NoPath : public Error {
 public:
  using Error::Error;
};

// Matched edges carry no road-profile link.
class MissingProfileLink : public Error {
 public:
  using Error::Error;
};

// Measured speed below the minimum progress rate.
class SpeedTooLow : public Error {
 public:
  using Error::Error;
};

// Requested optimization horizon extends past the mapped road.
class HorizonExceedsMap : public Error {
 public:
  using Error::Error;
};

// Risk classification requested on a solution with no input stages.
class EmptySolution : public Error {
 public:
  using Error::Error;
};

}  // namespace curvewarn
