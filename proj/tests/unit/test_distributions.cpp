#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "ppfactor/distributions.hpp"
#include "support.hpp"

using namespace ppfactor;

namespace {

std::vector<double> column(const Mat& x, const Vec& a) {
  Vec p = x * a;
  return std::vector<double>(p.data(), p.data() + p.size());
}

double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) s += f(lo + i * h);
  return s * h;
}

}  // namespace

TEST_CASE("gaussian log density matches the textbook formula") {
  Vec mu(2);
  mu << 1.0, -2.0;
  Mat s(2, 2);
  s << 2.0, 0.6, 0.6, 1.0;
  EllipticalDensity g(mu, s);
  Vec x(2);
  x << 0.3, -1.1;
  Vec r = x - mu;
  double quad = r.dot(s.inverse() * r);
  double expect = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(s.determinant()) - 0.5 * quad;
  CHECK(g.log_pdf(x) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("non-symmetric or indefinite scatter is rejected") {
  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(EllipticalDensity(Vec::Zero(2), bad), ConfigError);
}

TEST_CASE("power exponential with unit exponent reproduces the gaussian constant") {
  Generator pe = Generator::power_exponential(1.0);
  for (int d : {1, 2, 5, 10}) {
    CHECK(pe.log_norm_const(d) == doctest::Approx(Generator::gaussian().log_norm_const(d)).epsilon(1e-7));
  }
}

TEST_CASE("one-dimensional elliptical laws integrate to one") {
  for (const Generator& gen : {Generator::gaussian(), Generator::logistic(), Generator::power_exponential(0.6)}) {
    EllipticalDensity1D p(0.5, 1.7, gen);
    double mass = trapezoid([&](double t) { return p.pdf(t); }, -60.0, 60.0, 40000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("non-gaussian elliptical sampler follows its own projection law") {
  Mat s(3, 3);
  s << 1.0, 0.3, 0.0, 0.3, 2.0, 0.4, 0.0, 0.4, 1.5;
  EllipticalDensity e(Vec::Zero(3), s, Generator::power_exponential(0.7));
  Vec a(3);
  a << 0.4, -0.7, 1.0;
  auto proj = e.project(a);
  Mat x = sample(e, 3000, 11);
  std::vector<double> t = column(x, a);
  // Tabulated cumulative trapezoid, linearly interpolated.
  const int n = 8000;
  const double lo = -40.0, hi = 40.0, h = (hi - lo) / n;
  std::vector<double> cum(n + 1, 0.0);
  for (int i = 1; i <= n; ++i) cum[i] = cum[i - 1] + 0.5 * h * (proj->pdf(lo + (i - 1) * h) + proj->pdf(lo + i * h));
  auto cdf = [&](double v) {
    double pos = std::clamp((v - lo) / h, 0.0, static_cast<double>(n) - 1e-9);
    int i = static_cast<int>(pos);
    return cum[i] + (pos - i) * (cum[i + 1] - cum[i]);
  };
  CHECK(cum[n] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(testsupport::ks_one_sample(t, cdf) > 0.01);
}

TEST_CASE("gumbel density, cdf and moments agree") {
  GumbelDensity1D g(-3.0, 4.0);
  const double h = 1e-5;
  for (double t : {-10.0, -3.0, 0.0, 7.5}) {
    double deriv = (g.cdf(t + h) - g.cdf(t - h)) / (2 * h);
    CHECK(deriv == doctest::Approx(g.pdf(t)).epsilon(1e-6));
  }
  CHECK(g.mean() == doctest::Approx(-3.0 + 4.0 * 0.5772156649015329));
  CHECK(g.variance() == doctest::Approx(std::numbers::pi * std::numbers::pi / 6.0 * 16.0));
  Rng rng = make_rng(3);
  std::vector<double> xs(4000);
  for (double& v : xs) v = g.sample(rng);
  CHECK(testsupport::ks_one_sample(xs, [&](double t) { return g.cdf(t); }) > 0.01);
}

TEST_CASE("gaussian marginal and conditional match the partitioned formulas") {
  Vec mu(3);
  mu << 1.0, 0.0, -1.0;
  Mat s(3, 3);
  s << 2.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.5;
  EllipticalDensity e(mu, s);
  EllipticalDensity marg = e.marginal({0, 2});
  CHECK(marg.mu()[1] == doctest::Approx(-1.0));
  CHECK(marg.sigma()(0, 1) == doctest::Approx(0.3));

  Vec given(1);
  given << 0.8;
  EllipticalDensity cond = e.conditional({1}, given);
  // mu_1 + S_12 S_22^{-1} (x_2 - mu_2), S_11 - S_12 S_22^{-1} S_21
  CHECK(cond.mu()[0] == doctest::Approx(1.0 + 0.5 * 0.8));
  CHECK(cond.mu()[1] == doctest::Approx(-1.0 + 0.2 * 0.8));
  CHECK(cond.sigma()(0, 0) == doctest::Approx(2.0 - 0.25));
  CHECK(cond.sigma()(0, 1) == doctest::Approx(0.3 - 0.1));
}

TEST_CASE("gaussian projection is exact") {
  Mat s = Mat::Identity(2, 2) * 4.0;
  EllipticalDensity e(Vec::Ones(2), s);
  Vec a(2);
  a << 1.0, 1.0;
  auto p = e.project(a);
  CHECK_FALSE(p->approximate());
  EllipticalDensity1D expect(2.0, std::sqrt(8.0), Generator::gaussian());
  CHECK(p->log_pdf(0.7) == doctest::Approx(expect.log_pdf(0.7)).epsilon(1e-12));
}

TEST_CASE("first simulation law is normalized and has the prescribed projections") {
  auto f = simulation_density(1);
  CHECK(f->dim() == 3);
  // Importance sampling against a broad gaussian.
  EllipticalDensity q(Vec::Constant(3, -1.0), Mat::Identity(3, 3) * 64.0);
  Mat z = sample(q, 200000, 5);
  double s = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double w = std::exp(f->log_pdf(z.row(i).transpose()) - q.log_pdf(z.row(i).transpose()));
    s += w;
    s2 += w * w;
  }
  const double n = static_cast<double>(z.rows());
  double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 4.0 * se + 1e-3);

  Mat x = simulation_sample(1, 3000, 9);
  Vec a(3);
  a << 1.0, 1.0, 0.0;
  GumbelDensity1D g11(1.0, 1.0);
  CHECK(testsupport::ks_one_sample(column(x, a), [&](double t) { return g11.cdf(t); }) > 0.01);
  a << 0.0, 1.0, 1.0;
  CHECK(testsupport::ks_one_sample(column(x, a), [](double t) { return testsupport::normal_cdf(t, -5.0, 2.0); }) >
        0.01);
}

TEST_CASE("third simulation sample carries four outliers") {
  Mat x = simulation_sample(3, 100, 2);
  CHECK(x.rows() == 100);
  CHECK(x.cols() == 20);
  int hits = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Vec expect = Vec::Zero(20);
    expect[0] = 2.0;
    if ((x.row(r).transpose() - expect).norm() == 0.0) ++hits;
  }
  CHECK(hits == 4);
}

TEST_CASE("sampling is deterministic per seed") {
  auto f = simulation_density(2);
  CHECK(sample(*f, 20, 4) == sample(*f, 20, 4));
  CHECK(sample(*f, 20, 4) != sample(*f, 20, 5));
}

TEST_CASE("moment matching copies sample mean and covariance") {
  Mat x = simulation_sample(1, 400, 1);
  EllipticalDensity g = moment_match_instrumental(x);
  Vec mean = x.colwise().mean().transpose();
  Mat c = x.rowwise() - mean.transpose();
  Mat cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  CHECK((g.mu() - mean).norm() < 1e-12);
  CHECK((g.sigma() - cov).norm() < 1e-9 * cov.norm());

  EllipticalDensity gl = moment_match_instrumental(x, Generator::logistic());
  Mat draws = sample(gl, 200000, 3);
  Vec dm = draws.colwise().mean().transpose();
  Mat dc = draws.rowwise() - dm.transpose();
  Mat dcov = dc.transpose() * dc / static_cast<double>(draws.rows() - 1);
  CHECK((dcov - cov).norm() < 0.03 * cov.norm());

  Mat flat = Mat::Zero(10, 2);
  flat.col(0) = Vec::LinSpaced(10, 0.0, 1.0);
  CHECK_THROWS_AS(moment_match_instrumental(flat), NumericalError);
}
