#pragma once

#include <vector>

#include "ppfactor/types.hpp"

namespace ppfactor {

// A projection direction. Canonical form: unit norm, first nonzero coordinate positive.
struct Direction {
  Vec coords;
  bool canonical = false;

  static Direction from(const Vec& v);  // canonicalizes; throws ConfigError on a zero vector
  int dim() const { return static_cast<int>(coords.size()); }
};

Vec canonicalize(const Vec& v);

// Rescaled so the largest-magnitude coordinate equals 1 (for comparison with
// hand-written vectors such as (1,0,1)).
Vec paper_style(const Vec& v);

// Angle in degrees between the lines spanned by u and v (sign ignored), in [0, 90].
double line_angle_deg(const Vec& u, const Vec& v);

// Largest principal angle in degrees between the column spans of U and V.
double principal_angle_deg(const Mat& U, const Mat& V);

// Lexicographic order on canonical coordinates; used to break ties deterministically.
bool canonical_less(const Vec& a, const Vec& b);

}  // namespace ppfactor
