#include "ppfactor/pursuit.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

namespace ppfactor {

namespace {

const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  Rng r = make_rng(seed, stage);
  return r();
}

}  // namespace

const char* threshold_mode_name(ThresholdMode m) { return m == ThresholdMode::Paper ? "paper" : "corrected"; }

double threshold_quantile(double alpha, ThresholdMode mode) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (mode == ThresholdMode::Corrected) return boost::math::quantile(kStdNormal, alpha);
  if (!(alpha > 0.5)) throw ConfigError("paper threshold mode needs alpha in (0.5, 1)");
  return boost::math::quantile(kStdNormal, 1.5 - alpha);
}

double nominal_acceptance(double alpha, ThresholdMode mode) {
  return boost::math::cdf(kStdNormal, threshold_quantile(alpha, mode));
}

StopTestResult stop_test(const CriterionValue& cv, double alpha, ThresholdMode mode) {
  StopTestResult r;
  r.alpha = alpha;
  r.mode = mode;
  r.quantile = threshold_quantile(alpha, mode);
  const double sqrt_n = std::sqrt(static_cast<double>(cv.n_used));
  r.threshold = r.quantile / sqrt_n;
  r.degenerate = cv.degenerate;
  if (cv.degenerate) {
    // No usable scale for the statistic: the pursuit keeps going.
    r.statistic = 0.0;
    r.z = 0.0;
    r.p_value = 1.0;
    r.in_ellipsoid = r.in_ellipsoid_paper = r.in_ellipsoid_corrected = false;
    r.stop = false;
    return r;
  }
  r.statistic = cv.value / std::sqrt(cv.variance_hat);
  r.z = sqrt_n * r.statistic;
  r.p_value = boost::math::cdf(boost::math::complement(kStdNormal, r.z));
  r.in_ellipsoid_corrected = r.z <= threshold_quantile(alpha, ThresholdMode::Corrected);
  r.in_ellipsoid_paper = alpha > 0.5 && r.z <= threshold_quantile(alpha, ThresholdMode::Paper);
  r.in_ellipsoid = r.statistic <= r.threshold;
  r.stop = r.in_ellipsoid;
  return r;
}

StopTestResult stop_test(const CriterionContext& ctx, const Vec& b, double alpha, ThresholdMode mode, Method method) {
  return stop_test(empirical_K(ctx, method, b), alpha, mode);
}

Mat resample_transformed(const TransformedDensity& gk, int m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("sample size must be at least 1");
  Rng rng = make_rng(seed);
  Mat z = gk.base().sample(m, rng);
  if (gk.k() == 0) return z;
  std::vector<double> w(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) w[i] = gk.log_ratio_to_base(z.row(i).transpose());
  const double top = *std::max_element(w.begin(), w.end());
  if (!std::isfinite(top)) throw NumericalError("resampling weights are not finite");
  for (double& v : w) v = std::exp(v - top);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  Mat out(m, z.cols());
  for (int i = 0; i < m; ++i) out.row(i) = z.row(pick(rng));
  return out;
}

Mat sample_transformed(const TransformedDensity& gk, int m, std::uint64_t seed, SamplingStats* stats, int pilot) {
  if (m < 1) throw ConfigError("sample size must be at least 1");
  SamplingStats st;
  Rng rng = make_rng(seed);
  if (gk.k() == 0) {
    Mat out = gk.base().sample(m, rng);
    st.proposals = st.accepted = m;
    if (stats) *stats = st;
    return out;
  }
  Mat pilot_draws = gk.base().sample(pilot, rng);
  double max_lr = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < pilot; ++i) max_lr = std::max(max_lr, gk.log_ratio_to_base(pilot_draws.row(i).transpose()));
  st.log_envelope = max_lr + std::log(1.2);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = gk.dim();
  Mat out(m, d);
  for (int restart = 0;; ++restart) {
    if (restart > 50) throw NumericalError("rejection envelope kept growing; the transformed density looks unbounded");
    int filled = 0;
    int proposals = 0;
    bool violated = false;
    while (filled < m) {
      Vec x = gk.base().sample(1, rng).row(0).transpose();
      double lr = gk.log_ratio_to_base(x);
      ++proposals;
      if (lr > st.log_envelope) {
        ++st.envelope_violations;
        st.log_envelope = lr + std::log(1.2);
        violated = true;
        break;
      }
      if (std::log(unif(rng)) < lr - st.log_envelope) out.row(filled++) = x.transpose();
      if (proposals >= 10000 && static_cast<double>(filled) / proposals < 1e-3)
        throw NumericalError("rejection sampling acceptance rate fell below 0.1%; revise the envelope or sampler");
    }
    st.proposals += proposals;
    if (!violated) {
      st.accepted = m;
      break;
    }
  }
  if (stats) *stats = st;
  return out;
}

KlEstimate normalization_constant(const TransformedDensity& gk, int n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw ConfigError("normalization needs at least two draws");
  Rng rng = make_rng(seed);
  Mat xs = gk.base().sample(n_mc, rng);
  Eigen::ArrayXd w(n_mc);
  for (int i = 0; i < n_mc; ++i) w[i] = std::exp(gk.log_ratio_to_base(xs.row(i).transpose()));
  double mean = w.mean();
  double var = (w - mean).square().sum() / (n_mc - 1.0);
  return KlEstimate{mean, std::sqrt(var / n_mc), false};
}

KlEstimate kl_to_truth(const TransformedDensity& estimate, const AnalyticDensity& truth, int n_mc,
                       std::uint64_t seed) {
  if (estimate.dim() != truth.dim()) throw ConfigError("estimate and truth differ in dimension");
  KlEstimate z = normalization_constant(estimate, n_mc, stage_seed(seed, 1));
  Mat xs = sample_transformed(estimate, n_mc, stage_seed(seed, 2));
  Eigen::ArrayXd terms(n_mc);
  for (int i = 0; i < n_mc; ++i) {
    Vec x = xs.row(i).transpose();
    double lt = truth.log_pdf(x);
    if (!std::isfinite(lt)) throw NumericalError("estimate puts mass where the true density vanishes");
    terms[i] = estimate.log_pdf(x) - std::log(z.value) - lt;
  }
  double mean = terms.mean();
  double var = (terms - mean).square().sum() / (n_mc - 1.0);
  return KlEstimate{mean, std::sqrt(var / n_mc), false};
}

void PursuitConfig::validate(int d) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (threshold_mode == ThresholdMode::Paper && !(alpha > 0.5))
    throw ConfigError("paper threshold mode needs alpha in (0.5, 1)");
  double v = resolved_nu(d);
  if (!(v > 0.0 && v < nu_upper(d)))
    throw ConfigError("nu must satisfy 0 < nu < 1/(4+d) = " + std::to_string(nu_upper(d)));
  if (!(y_factor > 0.0)) throw ConfigError("y_factor must be positive");
  if (marginal_draws != 0 && marginal_draws < 100) throw ConfigError("marginal_draws must be 0 or at least 100");
  anneal.validate();
}

std::string PursuitReport::conclusion() const {
  if (failed) return "aborted: " + failure;
  std::string g = stop_k == 0 ? "g" : "g^(" + std::to_string(stop_k) + ")";
  if (stopped_by_test) return "f=" + g;
  return "no stop before k_max; reporting " + g;
}

CriterionContext build_context(const Mat& f_sample, const TransformedDensity& gk, const PursuitConfig& cfg,
                               std::uint64_t seed, SamplingStats* stats, TruncatedSample* trunc_out,
                               AnalyticPtr f_oracle) {
  const int m = static_cast<int>(f_sample.rows());
  const int d = static_cast<int>(f_sample.cols());
  const int n_y = std::max(2, static_cast<int>(std::lround(cfg.y_factor * m)));
  Mat y = sample_transformed(gk, n_y, seed, stats);
  KernelEstimate f_m = KernelEstimate::fit(f_sample);
  TruncatedSample trunc =
      truncate(f_sample, y, f_m, [&gk](const Vec& x) { return gk.log_pdf(x); }, cfg.resolved_nu(d), cfg.floor_mode);
  if (trunc_out) *trunc_out = trunc;
  return CriterionContext(trunc, gk, cfg.criterion, std::move(f_oracle));
}

PursuitReport run_pursuit(const Mat& f_sample, std::shared_ptr<const EllipticalDensity> g, const PursuitConfig& cfg,
                          AnalyticPtr f_oracle) {
  const int d = static_cast<int>(f_sample.cols());
  const int m = static_cast<int>(f_sample.rows());
  if (!g || g->dim() != d) throw ConfigError("instrumental density does not match the sample dimension");
  if (m <= d) throw ConfigError("pursuit needs more observations than dimensions");
  cfg.validate(d);
  const int k_max = cfg.k_max >= 0 ? cfg.k_max : d;

  TransformedDensity gk(g);
  PursuitReport rep(gk);
  rep.method = cfg.method;
  rep.seed = cfg.seed;
  rep.d = d;
  rep.m = m;
  rep.nu = cfg.resolved_nu(d);
  const Sense sense = cfg.method == Method::Ours ? Sense::Minimize : Sense::Maximize;

  try {
    SamplingStats st;
    TruncatedSample trunc;
    CriterionContext ctx = build_context(f_sample, gk, cfg, stage_seed(cfg.seed, 1000), &st, &trunc, f_oracle);
    rep.initial_criterion = empirical_K_initial(ctx);
    rep.initial_test = stop_test(rep.initial_criterion, cfg.alpha, cfg.threshold_mode);
    rep.initial_n_kept = trunc.n();
    rep.kl_trace.push_back(rep.initial_criterion.value);
    rep.kl_trace_se.push_back(std::sqrt(rep.initial_criterion.variance_hat / rep.initial_criterion.n_used));
    if (rep.initial_test.degenerate) rep.warnings.push_back("initial test: degenerate statistic");
    if (rep.initial_test.stop && cfg.stop_on_initial_test) {
      rep.stopped_by_test = true;
      rep.stop_k = 0;
      return rep;
    }

    Mat applied(d, 0);
    for (int k = 1; k <= k_max; ++k) {
      if (k > 1) ctx = build_context(f_sample, gk, cfg, stage_seed(cfg.seed, 1000 + k), &st, &trunc, f_oracle);
      IterationRecord rec;
      rec.k = k;
      rec.sampling = st;
      rec.n_kept = trunc.n();
      rec.theta = trunc.theta;
      const Mat constraint = cfg.orthogonalize ? applied : Mat(d, 0);
      if (constraint.cols() >= d) break;

      Objective obj = [&ctx, &cfg](const Vec& a) { return empirical_K(ctx, cfg.method, a).value; };
      AnnealConfig acfg = cfg.anneal;
      acfg.rng_seed = stage_seed(cfg.anneal.rng_seed ^ cfg.seed, 2000 + k);
      rec.anneal = anneal(obj, sense, acfg, d, constraint);
      rec.polish = polish(obj, rec.anneal.best_direction.coords, sense, cfg.anneal.polish_steps, 0.1, constraint);
      const Vec a = rec.polish.best_direction.coords;
      rec.direction = a;
      rec.paper_style_direction = paper_style(a);
      rec.criterion = empirical_K(ctx, cfg.method, a);
      rec.ours = cfg.method == Method::Ours ? rec.criterion : empirical_K_ours(ctx, a);
      rec.test = stop_test(rec.criterion, cfg.alpha, cfg.threshold_mode);
      if (rec.test.degenerate) rep.warnings.push_back("iteration " + std::to_string(k) + ": degenerate statistic");
      if (rec.criterion.clamp_events > 0)
        rep.warnings.push_back("iteration " + std::to_string(k) + ": " + std::to_string(rec.criterion.clamp_events) +
                               " ratio clamp events");

      // Ours: an accepted test certifies g^(k). Huber: it certifies g^(k-1).
      rec.applied = cfg.method == Method::Ours || !rec.test.stop;
      if (rec.applied) {
        Density1DPtr den = ctx.g_projection(a);
        if (gk.k() > 0 && cfg.marginal_draws > 0) {
          try {
            Mat draws = resample_transformed(gk, cfg.marginal_draws, stage_seed(cfg.seed, 3000 + k));
            den = std::make_shared<TabulatedKernelDensity1D>(ProjectedKernelEstimate::fit(draws, a));
          } catch (const NumericalError& e) {
            rep.warnings.push_back("iteration " + std::to_string(k) +
                                   ": marginal of g^(k-1) not sampled, using the criterion sample (" + e.what() + ")");
          }
        }
        gk = gk.update(a, ctx.f_projection(a), den, ctx.log_cap_1d());
        applied.conservativeResize(d, applied.cols() + 1);
        applied.col(applied.cols() - 1) = a;
        rep.kl_trace.push_back(rec.ours.value);
        rep.kl_trace_se.push_back(std::sqrt(rec.ours.variance_hat / rec.ours.n_used));
      }
      rep.iterations.push_back(rec);
      rep.stop_k = gk.k();
      rep.final_density = gk;
      if (rec.test.stop) {
        rep.stopped_by_test = true;
        break;
      }
    }
    for (Eigen::Index i = 0; i < applied.cols(); ++i)
      for (Eigen::Index j = i + 1; j < applied.cols(); ++j)
        rep.max_abs_cos = std::max(rep.max_abs_cos, std::abs(applied.col(i).dot(applied.col(j))));
  } catch (const NumericalError& e) {
    rep.failed = true;
    rep.failure = e.what();
    rep.final_density = gk;
    rep.stop_k = gk.k();
  }
  return rep;
}

}  // namespace ppfactor
