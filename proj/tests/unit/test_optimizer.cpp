#include <atomic>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "ppfactor/direction.hpp"
#include "ppfactor/optimizer.hpp"
#include "ppfactor/parallel.hpp"

using namespace ppfactor;

namespace {

double neg_sq_e1(const Vec& a) { return -a[0] * a[0] / a.squaredNorm(); }

Vec rotated_e1(int d, double degrees) {
  Vec v = Vec::Zero(d);
  const double r = degrees * M_PI / 180.0;
  v[0] = std::cos(r);
  v[1] = std::sin(r);
  return v;
}

}  // namespace

TEST_CASE("direction canonical form and helpers") {
  Vec v(3);
  v << 0.0, -2.0, 1.0;
  Direction dir = Direction::from(v);
  CHECK(dir.canonical);
  CHECK(dir.coords.norm() == doctest::Approx(1.0));
  CHECK(dir.coords[1] > 0.0);
  CHECK_THROWS_AS(Direction::from(Vec::Zero(3)), ConfigError);

  Vec p = paper_style(v);
  CHECK(p[1] == doctest::Approx(1.0));
  CHECK(p[2] == doctest::Approx(-0.5));

  CHECK(line_angle_deg(v, -v) < 1e-4);
  CHECK(line_angle_deg(Vec::Unit(3, 0), Vec::Unit(3, 1)) == doctest::Approx(90.0));

  Mat u(3, 2), w(3, 2);
  u << 1, 0, 0, 1, 0, 0;
  w << 1, 1, 1, -1, 0, 0;
  CHECK(principal_angle_deg(u, w) < 1e-4);
  w << 1, 0, 0, 0, 0, 1;
  CHECK(principal_angle_deg(u, w) == doctest::Approx(90.0));
}

TEST_CASE("annealing finds the axis maximizing the squared projection") {
  AnnealConfig cfg;
  cfg.n_steps = 5000;
  OptResult r = anneal(neg_sq_e1, Sense::Minimize, cfg, 3);
  CHECK(line_angle_deg(r.best_direction.coords, Vec::Unit(3, 0)) < 2.0);
  CHECK(r.best_value == doctest::Approx(neg_sq_e1(r.best_direction.coords)));
  CHECK(r.best_direction.coords.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("annealing maximizes as well") {
  AnnealConfig cfg;
  cfg.n_steps = 2000;
  OptResult r = anneal([](const Vec& a) { return a[2] * a[2]; }, Sense::Maximize, cfg, 4);
  CHECK(line_angle_deg(r.best_direction.coords, Vec::Unit(4, 2)) < 2.0);
}

TEST_CASE("every visited direction is unit norm") {
  std::atomic<bool> off_sphere{false};
  auto obj = [&](const Vec& a) {
    if (std::abs(a.norm() - 1.0) > 1e-12) off_sphere = true;
    return neg_sq_e1(a);
  };
  AnnealConfig cfg;
  cfg.n_steps = 500;
  anneal(obj, Sense::Minimize, cfg, 5);
  polish(obj, rotated_e1(5, 20.0), Sense::Minimize, 50);
  CHECK_FALSE(off_sphere.load());
}

TEST_CASE("running best in the trace never worsens") {
  AnnealConfig cfg;
  cfg.n_steps = 1000;
  cfg.trace_stride = 1;
  OptResult r = anneal(neg_sq_e1, Sense::Minimize, cfg, 3);
  REQUIRE_FALSE(r.trace.empty());
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    if (r.trace[i].restart == r.trace[i - 1].restart) CHECK(r.trace[i].value <= r.trace[i - 1].value);
  }
}

TEST_CASE("constant objective converges immediately") {
  AnnealConfig cfg;
  cfg.n_steps = 200;
  OptResult r = anneal([](const Vec&) { return 2.5; }, Sense::Minimize, cfg, 3);
  CHECK(r.best_value == 2.5);
  CHECK(r.converged);
  CHECK(r.best_direction.coords.norm() == doctest::Approx(1.0));
}

TEST_CASE("annealing is deterministic and independent of the worker count") {
  AnnealConfig cfg;
  cfg.n_steps = 800;
  cfg.rng_seed = 42;
  auto noisy = [](const Vec& a) { return neg_sq_e1(a) + 0.1 * std::sin(17.0 * a[1]); };
  set_thread_count(1);
  OptResult a = anneal(noisy, Sense::Minimize, cfg, 4);
  set_thread_count(4);
  OptResult b = anneal(noisy, Sense::Minimize, cfg, 4);
  set_thread_count(0);
  CHECK(a.best_direction.coords == b.best_direction.coords);
  CHECK(a.best_value == b.best_value);
  CHECK(a.n_evals == b.n_evals);
}

TEST_CASE("polish recovers a nearby optimum and never worsens") {
  Vec start = rotated_e1(3, 10.0);
  OptResult r = polish(neg_sq_e1, start, Sense::Minimize, 200);
  CHECK(line_angle_deg(r.best_direction.coords, Vec::Unit(3, 0)) < 1.0);
  CHECK(r.best_value <= neg_sq_e1(start));
  CHECK(r.best_direction.canonical);

  OptResult still = polish(neg_sq_e1, Vec::Unit(3, 0), Sense::Minimize, 100);
  CHECK(line_angle_deg(still.best_direction.coords, Vec::Unit(3, 0)) < 1e-6);

  auto bumpy = [](const Vec& a) { return std::cos(5.0 * a[0]) + a[2]; };
  Vec s(3);
  s << 0.3, 0.5, 0.8;
  s.normalize();
  CHECK(polish(bumpy, s, Sense::Minimize, 30).best_value <= bumpy(s));
  CHECK(polish(bumpy, s, Sense::Maximize, 30).best_value >= bumpy(s));
}

TEST_CASE("nonfinite objective values are rejected and counted") {
  AnnealConfig cfg;
  cfg.n_steps = 500;
  auto partly = [](const Vec& a) { return std::abs(a[0]) > 0.95 ? std::numeric_limits<double>::quiet_NaN() : neg_sq_e1(a); };
  OptResult r = anneal(partly, Sense::Minimize, cfg, 3);
  CHECK(std::isfinite(r.best_value));
  CHECK(std::abs(r.best_direction.coords[0]) <= 0.95 + 1e-12);

  auto mostly = [](const Vec&) { return std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_AS(anneal(mostly, Sense::Minimize, cfg, 3), NumericalError);
}

TEST_CASE("orthogonal constraint keeps the search in the complement") {
  AnnealConfig cfg;
  cfg.n_steps = 1000;
  Mat q = Vec::Unit(3, 0);
  OptResult r = anneal(neg_sq_e1, Sense::Minimize, cfg, 3, q);
  CHECK(std::abs(r.best_direction.coords[0]) < 1e-10);
}

TEST_CASE("invalid schedules are rejected") {
  AnnealConfig cfg;
  cfg.cooling = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AnnealConfig{};
  cfg.n_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AnnealConfig{};
  cfg.proposal_sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
