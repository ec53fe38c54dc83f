#include <cmath>
#include <vector>

#include "doctest.h"
#include "ppfactor/direction.hpp"
#include "ppfactor/parallel.hpp"
#include "ppfactor/pursuit.hpp"
#include "support.hpp"

using namespace ppfactor;

namespace {

std::shared_ptr<const EllipticalDensity> wide_base() {
  return std::make_shared<EllipticalDensity>(Vec::Zero(2), Mat::Identity(2, 2) * 4.0);
}

// Base N(0, 4 I_2) with its e1 marginal replaced by N(0.5, 1); the ratio is bounded.
TransformedDensity narrowed_along_e1() {
  auto base = wide_base();
  Vec e1 = Vec::Unit(2, 0);
  auto num = std::make_shared<EllipticalDensity1D>(0.5, 1.0, Generator::gaussian());
  return TransformedDensity(base).update(e1, num, base->project(e1));
}

std::vector<double> column(const Mat& x, int j) { return std::vector<double>(x.col(j).data(), x.col(j).data() + x.rows()); }

PursuitConfig quick_config() {
  PursuitConfig cfg;
  cfg.anneal.n_steps = 300;
  cfg.anneal.n_restarts = 2;
  cfg.anneal.polish_steps = 20;
  return cfg;
}

}  // namespace

TEST_CASE("threshold conventions") {
  CHECK(threshold_quantile(0.9, ThresholdMode::Paper) == doctest::Approx(0.2533).epsilon(1e-3));
  CHECK(threshold_quantile(0.9, ThresholdMode::Corrected) == doctest::Approx(1.28155).epsilon(1e-5));
  CHECK(threshold_quantile(0.9, ThresholdMode::Paper) / std::sqrt(50.0) == doctest::Approx(0.03582203).epsilon(1e-3));
  CHECK(nominal_acceptance(0.9, ThresholdMode::Paper) == doctest::Approx(0.6));
  CHECK(nominal_acceptance(0.9, ThresholdMode::Corrected) == doctest::Approx(0.9));
}

TEST_CASE("stop test decision follows the statistic") {
  CriterionValue cv;
  cv.n_used = 100;
  cv.variance_hat = 4.0;
  cv.value = 0.1;  // s = 0.05, z = 0.5
  StopTestResult t = stop_test(cv, 0.9, ThresholdMode::Corrected);
  CHECK(t.statistic == doctest::Approx(0.05));
  CHECK(t.z == doctest::Approx(0.5));
  CHECK(t.p_value == doctest::Approx(1.0 - testsupport::normal_cdf(0.5)));
  CHECK(t.threshold == doctest::Approx(1.28155 / 10.0).epsilon(1e-4));
  CHECK(t.stop);
  CHECK(t.in_ellipsoid_corrected);
  CHECK_FALSE(t.in_ellipsoid_paper);

  StopTestResult p = stop_test(cv, 0.9, ThresholdMode::Paper);
  CHECK_FALSE(p.stop);

  cv.degenerate = true;
  StopTestResult d = stop_test(cv, 0.9, ThresholdMode::Corrected);
  CHECK(d.degenerate);
  CHECK_FALSE(d.stop);
}

TEST_CASE("identity factor leaves the density unchanged") {
  auto base = wide_base();
  TransformedDensity g0(base);
  Vec a(2);
  a << 0.6, 0.8;
  auto same = base->project(a);
  TransformedDensity g1 = g0.update(a, same, same);
  CHECK(g1.k() == 1);
  Mat pts = sample(*base, 50, 1);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Vec p = pts.row(i).transpose();
    CHECK(std::abs(g1.log_pdf(p) - g0.log_pdf(p)) <= 1e-12);
  }
}

TEST_CASE("two updates reproduce the explicit product") {
  auto base = wide_base();
  Vec a1 = Vec::Unit(2, 0), a2(2);
  a2 << 0.6, -0.8;
  auto n1 = std::make_shared<GumbelDensity1D>(0.0, 1.0);
  auto n2 = std::make_shared<EllipticalDensity1D>(0.2, 1.5, Generator::gaussian());
  auto d1 = base->project(a1), d2 = base->project(a2);
  TransformedDensity g2 = TransformedDensity(base).update(a1, n1, d1).update(a2, n2, d2);
  Vec x(2);
  x << 0.4, -1.3;
  double explicit_log = base->log_pdf(x) + (n1->log_pdf(a1.dot(x)) - d1->log_pdf(a1.dot(x))) +
                        (n2->log_pdf(a2.dot(x)) - d2->log_pdf(a2.dot(x)));
  CHECK(g2.log_pdf(x) == explicit_log);
}

TEST_CASE("base sampling accepts everything") {
  SamplingStats st;
  Mat x = sample_transformed(TransformedDensity(wide_base()), 500, 3, &st);
  CHECK(x.rows() == 500);
  CHECK(st.acceptance_rate() == 1.0);
}

TEST_CASE("rejection sampler reproduces the updated marginal and keeps the complement") {
  TransformedDensity g1 = narrowed_along_e1();
  SamplingStats st;
  Mat x = sample_transformed(g1, 2000, 4, &st);
  CHECK(st.acceptance_rate() > 0.2);
  CHECK(testsupport::ks_one_sample(column(x, 0), [](double t) { return testsupport::normal_cdf(t, 0.5, 1.0); }) >
        0.01);
  CHECK(testsupport::ks_one_sample(column(x, 1), [](double t) { return testsupport::normal_cdf(t, 0.0, 2.0); }) >
        0.01);
}

TEST_CASE("updated density stays normalized") {
  KlEstimate z = normalization_constant(narrowed_along_e1(), 50000, 5);
  CHECK(std::abs(z.value - 1.0) < std::max(0.01, 3.0 * z.se));
}

TEST_CASE("divergence to the truth vanishes for the truth itself") {
  auto base = wide_base();
  KlEstimate k = kl_to_truth(TransformedDensity(base), *base, 5000, 6);
  CHECK(std::abs(k.value) < 1e-9);
}

TEST_CASE("pursuit on a sample from g stops at the initial test") {
  auto g = std::make_shared<EllipticalDensity>(Vec::Zero(3), Mat::Identity(3, 3));
  int stopped = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Mat x = sample(*g, 200, seed);
    PursuitConfig cfg = quick_config();
    cfg.seed = seed;
    auto gm = std::make_shared<EllipticalDensity>(moment_match_instrumental(x));
    PursuitReport rep = run_pursuit(x, gm, cfg);
    CHECK_FALSE(rep.failed);
    if (rep.stop_k == 0 && rep.stopped_by_test) {
      ++stopped;
      CHECK(rep.conclusion() == "f=g");
      CHECK(rep.iterations.empty());
    }
  }
  CHECK(stopped >= 3);
}

TEST_CASE("pursuit report invariants on the first simulation") {
  Mat x = simulation_sample(1, 50, 2);
  auto g = std::make_shared<EllipticalDensity>(moment_match_instrumental(x));
  PursuitConfig cfg = quick_config();
  cfg.stop_on_initial_test = false;
  cfg.seed = 2;
  PursuitReport rep = run_pursuit(x, g, cfg);
  REQUIRE_FALSE(rep.failed);
  REQUIRE_FALSE(rep.iterations.empty());
  CHECK(rep.kl_trace.size() == rep.kl_trace_se.size());
  CHECK(static_cast<int>(rep.kl_trace.size()) == 1 + rep.final_density.k());
  CHECK(rep.final_density.k() == rep.stop_k);
  for (const IterationRecord& it : rep.iterations) {
    CHECK(it.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(line_angle_deg(it.direction, it.paper_style_direction) < 1e-4);
    CHECK(it.paper_style_direction.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
    CHECK(it.n_kept > 3);
  }

  set_thread_count(1);
  PursuitReport again = run_pursuit(x, g, cfg);
  set_thread_count(4);
  PursuitReport threaded = run_pursuit(x, g, cfg);
  set_thread_count(0);
  REQUIRE(again.iterations.size() == rep.iterations.size());
  REQUIRE(threaded.iterations.size() == rep.iterations.size());
  for (std::size_t i = 0; i < rep.iterations.size(); ++i) {
    CHECK(again.iterations[i].direction == rep.iterations[i].direction);
    CHECK(threaded.iterations[i].direction == rep.iterations[i].direction);
    CHECK(threaded.iterations[i].criterion.value == rep.iterations[i].criterion.value);
  }
  CHECK(threaded.kl_trace == rep.kl_trace);
}

TEST_CASE("both methods see the same initial subsample") {
  Mat x = simulation_sample(1, 50, 3);
  auto g = std::make_shared<EllipticalDensity>(moment_match_instrumental(x));
  PursuitConfig cfg = quick_config();
  cfg.k_max = 1;
  cfg.stop_on_initial_test = false;
  PursuitReport ours = run_pursuit(x, g, cfg);
  cfg.method = Method::Huber;
  PursuitReport huber = run_pursuit(x, g, cfg);
  CHECK(ours.initial_n_kept == huber.initial_n_kept);
  CHECK(ours.initial_criterion.value == huber.initial_criterion.value);
}

TEST_CASE("configuration errors propagate") {
  auto g = std::make_shared<EllipticalDensity>(Vec::Zero(3), Mat::Identity(3, 3));
  Mat x = sample(*g, 3, 1);
  CHECK_THROWS_AS(run_pursuit(x, g, PursuitConfig{}), ConfigError);

  Mat ok = sample(*g, 50, 1);
  PursuitConfig bad;
  bad.nu = 0.5;
  CHECK_THROWS_AS(run_pursuit(ok, g, bad), ConfigError);
  bad = PursuitConfig{};
  bad.alpha = 1.2;
  CHECK_THROWS_AS(run_pursuit(ok, g, bad), ConfigError);
}

TEST_CASE("tabulated kernel density follows the exact estimate") {
  Mat x = sample(*wide_base(), 3000, 8);
  Vec a = Vec::Unit(2, 1);
  ProjectedKernelEstimate est = ProjectedKernelEstimate::fit(x, a);
  TabulatedKernelDensity1D tab(est);
  for (double t : {-9.0, -3.3, 0.0, 0.71, 4.2, 40.0}) CHECK(tab.log_pdf(t) == doctest::Approx(est.log_eval(t)).epsilon(1e-4));
}

TEST_CASE("second factor keeps the estimate normalized") {
  Mat x = simulation_sample(1, 50, 1);
  auto g = std::make_shared<EllipticalDensity>(moment_match_instrumental(x));
  PursuitConfig cfg = quick_config();
  cfg.stop_on_initial_test = false;
  cfg.k_max = 2;
  cfg.threshold_mode = ThresholdMode::Paper;
  cfg.alpha = 0.999;  // the test never accepts, so both factors are applied
  PursuitReport rep = run_pursuit(x, g, cfg);
  REQUIRE(rep.final_density.k() == 2);
  KlEstimate z = normalization_constant(rep.final_density, 40000, 9);
  CHECK(std::abs(z.value - 1.0) < std::max(0.02, 3.0 * z.se));
}
