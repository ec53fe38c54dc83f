#include "ppfactor/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ppfactor/parallel.hpp"
#include "ppfactor/rng.hpp"

namespace ppfactor {

namespace {

// Projects v onto the orthogonal complement of the columns of Q (Q orthonormal).
Vec restrict(const Vec& v, const Mat& q) {
  if (q.cols() == 0) return v;
  return v - q * (q.transpose() * v);
}

Mat orthonormal_columns(const Mat& m, int d) {
  if (m.cols() == 0) return Mat(d, 0);
  if (m.rows() != d) throw ConfigError("orthogonality constraints do not match dimension");
  Eigen::HouseholderQR<Mat> qr(m);
  return qr.householderQ() * Mat::Identity(d, m.cols());
}

Vec random_unit(int d, Rng& rng, const Mat& q) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = nd(rng);
    z = restrict(z, q);
    double n = z.norm();
    if (n > 1e-8) return z / n;
  }
  throw NumericalError("could not draw a direction in the admissible subspace");
}

bool better(double a, double b, Sense s) { return s == Sense::Minimize ? a < b : a > b; }

// Strictly better, or equal with canonical coordinates ordered first.
bool preferred(double va, const Vec& a, double vb, const Vec& b, Sense s) {
  if (better(va, vb, s)) return true;
  if (va == vb) return canonical_less(canonicalize(a), canonicalize(b));
  return false;
}

struct RestartOutcome {
  Vec best;
  double best_value = 0.0;
  std::vector<TracePoint> trace;
  int evals = 0;
  int nonfinite = 0;
};

}  // namespace

void AnnealConfig::validate() const {
  if (n_steps < 1) throw ConfigError("anneal.n_steps must be at least 1");
  if (!(initial_temp > 0.0)) throw ConfigError("anneal.initial_temp must be positive");
  if (!(cooling > 0.0 && cooling < 1.0)) throw ConfigError("anneal.cooling must lie in (0, 1)");
  if (!(proposal_sigma > 0.0)) throw ConfigError("anneal.proposal_sigma must be positive");
  if (!(min_sigma_fraction > 0.0 && min_sigma_fraction <= 1.0))
    throw ConfigError("anneal.min_sigma_fraction must lie in (0, 1]");
  if (n_restarts < 1) throw ConfigError("anneal.n_restarts must be at least 1");
  if (n_probes < 4) throw ConfigError("anneal.n_probes must be at least 4");
  if (polish_steps < 0) throw ConfigError("anneal.polish_steps must be nonnegative");
  if (trace_stride < 1) throw ConfigError("anneal.trace_stride must be at least 1");
}

OptResult anneal(const Objective& objective, Sense sense, const AnnealConfig& cfg, int d, const Mat& orthogonal_to) {
  cfg.validate();
  if (d < 1) throw ConfigError("dimension must be at least 1");
  const Mat q = orthonormal_columns(orthogonal_to, d);
  if (q.cols() >= d) throw ConfigError("no admissible directions remain after orthogonality constraints");

  // Temperature scale from the spread of the objective over random directions.
  Rng probe_rng = make_rng(cfg.rng_seed, 0xfeedULL);
  std::vector<double> probes;
  int probe_nonfinite = 0;
  for (int i = 0; i < cfg.n_probes; ++i) {
    double v = objective(random_unit(d, probe_rng, q));
    if (std::isfinite(v))
      probes.push_back(v);
    else
      ++probe_nonfinite;
  }
  if (2 * probe_nonfinite > cfg.n_probes)
    throw NumericalError("objective is nonfinite on more than half of the probe directions");
  std::sort(probes.begin(), probes.end());
  auto quantile = [&](double p) {
    double pos = p * (probes.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, probes.size() - 1);
    return probes[lo] + (pos - lo) * (probes[hi] - probes[lo]);
  };
  double iqr = quantile(0.75) - quantile(0.25);
  if (!(iqr > 0.0)) iqr = 1e-12 * (1.0 + std::abs(quantile(0.5)));
  const double t0 = cfg.initial_temp * iqr;

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.n_restarts));
  parallel_for(outcomes.size(), [&](std::size_t r) {
    RestartOutcome& out = outcomes[r];
    Rng rng = make_rng(cfg.rng_seed, r + 1);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec cur = random_unit(d, rng, q);
    double cur_v = objective(cur);
    ++out.evals;
    for (int tries = 0; !std::isfinite(cur_v) && tries < 100; ++tries) {
      ++out.nonfinite;
      cur = random_unit(d, rng, q);
      cur_v = objective(cur);
      ++out.evals;
    }
    if (!std::isfinite(cur_v)) throw NumericalError("objective is nonfinite at every starting direction");
    out.best = cur;
    out.best_value = cur_v;
    double temp = t0;
    for (int step = 1; step <= cfg.n_steps; ++step) {
      temp *= cfg.cooling;
      double sigma = cfg.proposal_sigma * std::max(std::sqrt(temp / t0), cfg.min_sigma_fraction);
      Vec z(d);
      for (int i = 0; i < d; ++i) z[i] = nd(rng);
      z -= z.dot(cur) * cur;
      z = restrict(z, q);
      Vec prop = restrict(cur + sigma * z, q);
      double pn = prop.norm();
      double accept_u = unif(rng);
      if (!(pn > 1e-12)) continue;
      prop /= pn;
      double v = objective(prop);
      ++out.evals;
      if (!std::isfinite(v)) {
        ++out.nonfinite;
        if (2 * out.nonfinite > out.evals)
          throw NumericalError("objective is nonfinite on more than half of the evaluated directions");
        continue;
      }
      double delta = sense == Sense::Minimize ? v - cur_v : cur_v - v;
      if (delta <= 0.0 || accept_u < std::exp(-delta / temp)) {
        cur = prop;
        cur_v = v;
        if (preferred(cur_v, cur, out.best_value, out.best, sense)) {
          out.best = cur;
          out.best_value = cur_v;
        }
      }
      if (step % cfg.trace_stride == 0 || step == cfg.n_steps)
        out.trace.push_back(TracePoint{static_cast<int>(r), step, temp, out.best_value});
    }
  });

  OptResult res;
  std::size_t best_r = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const auto& o = outcomes[r];
    res.n_evals += o.evals;
    res.n_nonfinite += o.nonfinite;
    res.trace.insert(res.trace.end(), o.trace.begin(), o.trace.end());
    if (r > 0 && preferred(o.best_value, o.best, outcomes[best_r].best_value, outcomes[best_r].best, sense)) best_r = r;
  }
  res.n_evals += cfg.n_probes;
  res.n_nonfinite += probe_nonfinite;
  res.best_direction = Direction::from(outcomes[best_r].best);
  res.best_value = outcomes[best_r].best_value;
  // Restarts agree when they reach the same value or the same line.
  res.converged = true;
  for (const auto& o : outcomes) {
    bool same_value = std::abs(o.best_value - res.best_value) <= 1e-6 * (1.0 + std::abs(res.best_value));
    bool same_line = line_angle_deg(o.best, res.best_direction.coords) <= 5.0;
    if (!same_value && !same_line) res.converged = false;
  }
  return res;
}

OptResult polish(const Objective& objective, const Vec& start, Sense sense, int steps, double initial_step,
                 const Mat& orthogonal_to) {
  const int d = static_cast<int>(start.size());
  if (std::abs(start.norm() - 1.0) > 1e-9) throw ConfigError("polish start must be a unit vector");
  const Mat q = orthonormal_columns(orthogonal_to, d);
  OptResult res;
  Vec cur = start;
  double cur_v = objective(cur);
  res.n_evals = 1;
  if (!std::isfinite(cur_v)) throw NumericalError("objective is nonfinite at the polish start");
  double step = initial_step;
  while (res.n_evals < steps && step > 1e-7) {
    // Tangent basis: complement of cur and of the constraint columns.
    Mat span(d, q.cols() + 1);
    span << cur, q;
    Eigen::HouseholderQR<Mat> qr(span);
    Mat full = qr.householderQ();
    bool improved = false;
    for (int i = static_cast<int>(span.cols()); i < d && res.n_evals < steps; ++i) {
      for (double sgn : {1.0, -1.0}) {
        Vec prop = cur + sgn * step * full.col(i);
        prop = restrict(prop, q);
        prop.normalize();
        double v = objective(prop);
        ++res.n_evals;
        if (!std::isfinite(v)) {
          ++res.n_nonfinite;
          continue;
        }
        if (better(v, cur_v, sense)) {
          cur = prop;
          cur_v = v;
          improved = true;
          break;
        }
      }
    }
    res.trace.push_back(TracePoint{0, res.n_evals, step, cur_v});
    if (!improved) step *= 0.5;
  }
  res.converged = step <= 1e-7;
  res.best_direction = Direction::from(cur);
  res.best_value = cur_v;
  return res;
}

}  // namespace ppfactor
