#include "ppfactor/direction.hpp"

#include <algorithm>
#include <cmath>

namespace ppfactor {

Vec canonicalize(const Vec& v) {
  double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("direction must be a finite nonzero vector");
  Vec u = v / n;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (u[i] != 0.0) {
      if (u[i] < 0.0) u = -u;
      break;
    }
  }
  return u;
}

Direction Direction::from(const Vec& v) { return Direction{canonicalize(v), true}; }

Vec paper_style(const Vec& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] == 0.0) return v;
  return v / v[idx];
}

double line_angle_deg(const Vec& u, const Vec& v) {
  double c = std::abs(u.dot(v)) / (u.norm() * v.norm());
  c = std::min(1.0, c);
  return std::acos(c) * 180.0 / M_PI;
}

double principal_angle_deg(const Mat& U, const Mat& V) {
  Eigen::HouseholderQR<Mat> qu(U), qv(V);
  Mat Qu = qu.householderQ() * Mat::Identity(U.rows(), U.cols());
  Mat Qv = qv.householderQ() * Mat::Identity(V.rows(), V.cols());
  Eigen::JacobiSVD<Mat> svd(Qu.transpose() * Qv);
  double smin = svd.singularValues().minCoeff();
  smin = std::clamp(smin, 0.0, 1.0);
  return std::acos(smin) * 180.0 / M_PI;
}

bool canonical_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace ppfactor
