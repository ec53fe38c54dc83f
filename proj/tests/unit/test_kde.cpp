#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ppfactor/distributions.hpp"
#include "ppfactor/kde.hpp"

using namespace ppfactor;

namespace {

double gauss(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double brute_kde(const Mat& pts, const Vec& h, const Vec& x, Eigen::Index skip = -1) {
  double s = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if (i == skip) continue;
    double k = 1.0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) k *= gauss((x[j] - pts(i, j)) / h[j]) / h[j];
    s += k;
    ++n;
  }
  return s / n;
}

Mat gaussian_sample(int m, int d, std::uint64_t seed) {
  EllipticalDensity g(Vec::Zero(d), Mat::Identity(d, d));
  return sample(g, m, seed);
}

}  // namespace

TEST_CASE("bandwidth rule scales the coordinate spread") {
  Vec sd(2);
  sd << 1.0, 3.0;
  Vec h = bandwidth_rule(100, 2, sd);
  CHECK(h[0] == doctest::Approx(std::pow(100.0, -1.0 / 6.0)));
  CHECK(h[1] == doctest::Approx(3.0 * std::pow(100.0, -1.0 / 6.0)));
  Mat flat = Mat::Zero(10, 2);
  flat.col(0) = Vec::LinSpaced(10, 0.0, 1.0);
  CHECK_THROWS_AS(bandwidth_rule(flat), NumericalError);
}

TEST_CASE("multivariate estimate equals the direct kernel sum") {
  Mat pts = gaussian_sample(60, 3, 1);
  KernelEstimate est = KernelEstimate::fit(pts);
  Vec x(3);
  x << 0.2, -0.4, 1.1;
  CHECK(est.eval(x) == doctest::Approx(brute_kde(pts, est.bandwidths(), x)).epsilon(1e-10));
  CHECK(est.log_eval(x) == doctest::Approx(std::log(brute_kde(pts, est.bandwidths(), x))).epsilon(1e-10));

  Vec loo = est.log_eval_leave_one_out();
  for (Eigen::Index i : {0, 17, 59}) {
    double expect = std::log(brute_kde(pts, est.bandwidths(), pts.row(i).transpose(), i));
    CHECK(loo[i] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("relative variance follows the kernel weights") {
  Mat pts = gaussian_sample(40, 2, 2);
  KernelEstimate est = KernelEstimate::fit(pts);
  Mat q(1, 2);
  q << 0.5, 0.5;
  KernelEvaluation ev = est.evaluate(q);
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double k = 1.0;
    for (int j = 0; j < 2; ++j) k *= gauss((q(0, j) - pts(i, j)) / est.bandwidths()[j]);
    s1 += k;
    s2 += k * k;
  }
  CHECK(ev.rel_var[0] == doctest::Approx(s2 / (s1 * s1) - 1.0 / 40.0).epsilon(1e-9));
}

TEST_CASE("projected estimate matches the full sum and integrates to one") {
  Mat pts = gaussian_sample(300, 3, 3);
  Vec a(3);
  a << 1.0, 2.0, -1.0;
  a.normalize();
  ProjectedKernelEstimate est = ProjectedKernelEstimate::fit(pts, a);
  Vec t = pts * a;
  const double h = est.bandwidth();
  double sd = std::sqrt((t.array() - t.mean()).square().sum() / (t.size() - 1));
  CHECK(h == doctest::Approx(sd * std::pow(300.0, -0.2)));
  for (double x : {-5.0, -0.3, 0.0, 2.2, 9.0}) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) s += gauss((x - t[i]) / h) / h;
    CHECK(est.eval(x) == doctest::Approx(s / t.size()).epsilon(1e-9));
  }
  double mass = 0.0;
  const double step = 0.01;
  for (double x = -12.0; x <= 12.0; x += step) mass += est.eval(x) * step;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));

  Vec loo = est.log_eval_leave_one_out();
  double s = 0.0;
  for (Eigen::Index i = 1; i < t.size(); ++i) s += gauss((t[0] - t[i]) / h) / h;
  CHECK(loo[0] == doctest::Approx(std::log(s / (t.size() - 1))).epsilon(1e-9));
}

TEST_CASE("estimate is invariant to the sign of the projection") {
  Mat pts = gaussian_sample(100, 2, 4);
  Vec a(2);
  a << 0.6, 0.8;
  ProjectedKernelEstimate plus = ProjectedKernelEstimate::fit(pts, a);
  ProjectedKernelEstimate minus = ProjectedKernelEstimate::fit(pts, -a);
  CHECK(plus.eval(0.37) == doctest::Approx(minus.eval(-0.37)).epsilon(1e-12));
}

TEST_CASE("floor and error scales") {
  CHECK(theta_m(100, 0.1) == doctest::Approx(std::pow(100.0, -0.1)));
  CHECK(kernel_error_scale(100, 3) == doctest::Approx(std::pow(100.0, -2.0 / 7.0)));
  CHECK(nu_upper(3) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("truncation keeps floor-passing rows in equal numbers") {
  const int m = 200, d = 2;
  Mat x = gaussian_sample(m, d, 5);
  Mat y = gaussian_sample(m, d, 6);
  EllipticalDensity g(Vec::Zero(d), Mat::Identity(d, d));
  KernelEstimate f_m = KernelEstimate::fit(x);
  auto log_g = [&](const Vec& v) { return g.log_pdf(v); };
  const double nu = 0.1;
  TruncatedSample t = truncate(x, y, f_m, log_g, nu);
  CHECK(t.theta == doctest::Approx(theta_m(m, nu)));
  CHECK(t.n() == t.kept_y.rows());
  CHECK(t.n() <= std::min(t.passed_x, t.passed_y));
  CHECK(t.n() == std::min(t.passed_x, t.passed_y));
  CHECK(t.n() > d + 1);

  Vec loo = f_m.log_eval_leave_one_out();
  for (int k = 0; k < t.n(); ++k) {
    int i = t.index_x[k];
    CHECK((t.kept_x.row(k) - x.row(i)).norm() == 0.0);
    CHECK((loo[i] - g.log_pdf(x.row(i).transpose())) / d >= std::log(t.theta) - 1e-12);
  }

  // The literal floor on density values exceeds the peak of N(0, I_2) here.
  CHECK(theta_m(m, nu) > g.pdf(Vec::Zero(d)));
  CHECK_THROWS_AS(truncate(x, y, f_m, log_g, nu, FloorMode::Absolute), NumericalError);
}

TEST_CASE("a higher floor never keeps more rows") {
  const int m = 300, d = 3;
  Mat x = gaussian_sample(m, d, 9);
  Mat y = gaussian_sample(m, d, 10);
  EllipticalDensity g(Vec::Zero(d), Mat::Identity(d, d) * 1.5);
  KernelEstimate f_m = KernelEstimate::fit(x);
  auto log_g = [&](const Vec& v) { return g.log_pdf(v); };
  // theta_m = m^-nu, so a smaller exponent means a higher floor.
  int previous = 2 * m;
  for (double nu : {0.14, 0.1, 0.06, 0.03, 0.01}) {
    TruncatedSample t = truncate(x, y, f_m, log_g, nu);
    CHECK(t.passed_x + t.passed_y <= previous);
    previous = t.passed_x + t.passed_y;
  }
}

TEST_CASE("overly aggressive truncation is reported") {
  Mat x = gaussian_sample(30, 3, 7);
  Mat y = gaussian_sample(30, 3, 8);
  KernelEstimate f_m = KernelEstimate::fit(x);
  // A reference density far away from both samples leaves nothing.
  auto log_g = [](const Vec& v) { return -0.5 * (v.array() - 50.0).square().sum(); };
  CHECK_THROWS_AS(truncate(x, y, f_m, log_g, 0.1), NumericalError);
}
