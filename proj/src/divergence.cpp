#include "ppfactor/divergence.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ppfactor {

namespace {

const EllipticalDensity* as_gaussian(const AnalyticDensity& d) {
  auto* e = dynamic_cast<const EllipticalDensity*>(&d);
  return (e && e->generator().is_gaussian()) ? e : nullptr;
}

const EllipticalDensity1D* as_gaussian(const Density1D& d) {
  auto* e = dynamic_cast<const EllipticalDensity1D*>(&d);
  return (e && e->generator().is_gaussian()) ? e : nullptr;
}

KlEstimate mc_summary(const Eigen::ArrayXd& terms) {
  const double n = static_cast<double>(terms.size());
  double mean = terms.mean();
  double var = n > 1 ? (terms - mean).square().sum() / (n - 1.0) : 0.0;
  return KlEstimate{mean, std::sqrt(var / n), false};
}

// min(v, cap) elementwise, counting the clamped entries.
Eigen::ArrayXd capped(const Eigen::ArrayXd& v, double cap, int& events) {
  Eigen::ArrayXd out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] > cap) {
      out[i] = cap;
      ++events;
    }
  }
  return out;
}

double sample_variance(const Eigen::ArrayXd& v) {
  if (v.size() < 2) return 0.0;
  double mean = v.mean();
  return (v - mean).square().sum() / static_cast<double>(v.size() - 1);
}

// Combines per-point terms u (over Y) and v (over X) into mean(u) - mean(v).
CriterionValue summarize(const Eigen::ArrayXd& u, const Eigen::ArrayXd& v, int clamps) {
  CriterionValue cv;
  cv.n_used = static_cast<int>(v.size());
  cv.clamp_events = clamps;
  cv.value = u.mean() - v.mean();
  const double ratio = static_cast<double>(v.size()) / static_cast<double>(u.size());
  cv.variance_hat = sample_variance(v) + ratio * sample_variance(u);
  if (!std::isfinite(cv.value) || !std::isfinite(cv.variance_hat))
    throw NumericalError("criterion evaluation produced a nonfinite value");
  cv.degenerate = !(cv.variance_hat > 1e-24 * (1.0 + cv.value * cv.value));
  return cv;
}

}  // namespace

const char* method_name(Method m) { return m == Method::Ours ? "ours" : "huber"; }

double phi(double x) {
  if (!(x >= 0.0)) throw ConfigError("phi is defined for x >= 0");
  if (x == 0.0) return 1.0;
  return x * std::log(x) - x + 1.0;
}

KlEstimate kl_monte_carlo(const AnalyticDensity& p, const std::function<double(const Vec&)>& log_q, int n_mc,
                          std::uint64_t seed) {
  if (n_mc < 2) throw ConfigError("Monte-Carlo KL needs at least two draws");
  Mat xs = sample(p, n_mc, seed);
  Eigen::ArrayXd terms(n_mc);
  for (int i = 0; i < n_mc; ++i) {
    Vec x = xs.row(i).transpose();
    terms[i] = p.log_pdf(x) - log_q(x);
    if (!std::isfinite(terms[i])) {
      std::ostringstream os;
      os << "nonfinite KL integrand at point (" << x.transpose() << ")";
      throw NumericalError(os.str());
    }
  }
  return mc_summary(terms);
}

KlEstimate kl_analytic(const AnalyticDensity& p, const AnalyticDensity& q, int n_mc, std::uint64_t seed) {
  if (p.dim() != q.dim()) throw ConfigError("KL arguments differ in dimension");
  const EllipticalDensity* gp = as_gaussian(p);
  const EllipticalDensity* gq = as_gaussian(q);
  if (gp && gq) {
    const int d = p.dim();
    Eigen::LLT<Mat> lq(gq->sigma());
    Vec dm = gq->mu() - gp->mu();
    double tr = lq.solve(gp->sigma()).trace();
    double maha = dm.dot(lq.solve(dm));
    double v = 0.5 * (tr + maha - d + gq->log_det_sigma() - gp->log_det_sigma());
    return KlEstimate{v, 0.0, true};
  }
  return kl_monte_carlo(p, [&q](const Vec& x) { return q.log_pdf(x); }, n_mc, seed);
}

KlEstimate kl_analytic_1d(const Density1D& p, const Density1D& q, int n_mc, std::uint64_t seed) {
  const EllipticalDensity1D* gp = as_gaussian(p);
  const EllipticalDensity1D* gq = as_gaussian(q);
  if (gp && gq) {
    double sp = gp->scale(), sq = gq->scale(), dm = gp->mu() - gq->mu();
    return KlEstimate{std::log(sq / sp) + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5, 0.0, true};
  }
  if (n_mc < 2) throw ConfigError("Monte-Carlo KL needs at least two draws");
  Rng rng = make_rng(seed);
  Eigen::ArrayXd terms(n_mc);
  for (int i = 0; i < n_mc; ++i) {
    double t = p.sample(rng);
    terms[i] = p.log_pdf(t) - q.log_pdf(t);
    if (!std::isfinite(terms[i])) throw NumericalError("nonfinite KL integrand at t = " + std::to_string(t));
  }
  return mc_summary(terms);
}

CriterionContext::CriterionContext(const TruncatedSample& trunc, TransformedDensity g_prev, CriterionOptions opt,
                                   AnalyticPtr f_oracle)
    : x_(trunc.kept_x), y_(trunc.kept_y), g_prev_(std::move(g_prev)), opt_(opt), f_oracle_(std::move(f_oracle)) {
  if (x_.rows() < 2 || y_.rows() < 2) throw ConfigError("criterion needs at least two X and two Y points");
  if (x_.cols() != y_.cols() || x_.cols() != g_prev_.dim()) throw ConfigError("criterion inputs disagree on dimension");
  if (f_oracle_) {
    log_f_x_.resize(x_.rows());
    log_f_y_.resize(y_.rows());
    for (Eigen::Index i = 0; i < x_.rows(); ++i) log_f_x_[i] = f_oracle_->log_pdf(x_.row(i).transpose());
    for (Eigen::Index i = 0; i < y_.rows(); ++i) log_f_y_[i] = f_oracle_->log_pdf(y_.row(i).transpose());
  } else {
    f_est_.emplace(KernelEstimate::fit(x_));
    KernelEvaluation ex = f_est_->evaluate_leave_one_out();
    KernelEvaluation ey = f_est_->evaluate(y_);
    log_f_x_ = ex.log_value;
    log_f_y_ = ey.log_value;
    rv_f_x_ = ex.rel_var;
    rv_f_y_ = ey.rel_var;
  }
  if (!f_est_ || !opt_.variance_correction) {
    rv_f_x_ = Vec::Zero(x_.rows());
    rv_f_y_ = Vec::Zero(y_.rows());
  }
  smoothing_active_ = opt_.smoothed_reference && !f_oracle_ && g_prev_.base().generator().is_gaussian();
  if (smoothing_active_) {
    const EllipticalDensity& base = g_prev_.base();
    EllipticalDensity smoothed(base.mu(), base.sigma() + Mat(f_est_->bandwidths().array().square().matrix().asDiagonal()));
    auto eval = [&](const Mat& pts) {
      Vec out(pts.rows());
      for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        Vec p = pts.row(i).transpose();
        out[i] = smoothed.log_pdf(p) + g_prev_.log_ratio_to_base(p);
      }
      return out;
    };
    log_g_x_ = eval(x_);
    log_g_y_ = eval(y_);
  } else {
    log_g_x_ = g_prev_.log_pdf_many(x_);
    log_g_y_ = g_prev_.log_pdf_many(y_);
  }
  const double gap = trunc.theta - trunc.y_m;
  if (opt_.clamp_ratios && gap > 0.0) {
    log_cap_1d_ = -std::log(gap);
    log_cap_d_ = dim() * log_cap_1d_;
  } else {
    log_cap_1d_ = log_cap_d_ = std::numeric_limits<double>::infinity();
  }
}

CriterionContext::Projections CriterionContext::project(const Vec& a) const {
  if (a.size() != dim()) throw ConfigError("direction dimension does not match sample");
  Projections p;
  Vec px = x_ * a, py = y_ * a;
  p.rv_fa_x = p.rv_ga_x = Vec::Zero(px.size());
  p.rv_fa_y = p.rv_ga_y = Vec::Zero(py.size());
  if (f_oracle_) {
    auto fa = f_oracle_->project(a);
    p.log_fa_x = px.unaryExpr([&](double t) { return fa->log_pdf(t); });
    p.log_fa_y = py.unaryExpr([&](double t) { return fa->log_pdf(t); });
  } else {
    ProjectedKernelEstimate fa = ProjectedKernelEstimate::fit(px);
    KernelEvaluation ex = fa.evaluate_leave_one_out();
    KernelEvaluation ey = fa.evaluate(py);
    p.log_fa_x = ex.log_value;
    p.log_fa_y = ey.log_value;
    if (opt_.variance_correction) {
      p.rv_fa_x = ex.rel_var;
      p.rv_fa_y = ey.rel_var;
    }
  }
  if (g_prev_.k() == 0) {
    Density1DPtr ga = g_prev_.base().project(a);
    if (smoothing_active_) {
      auto* e = static_cast<const EllipticalDensity1D*>(ga.get());
      double h = bandwidth_rule_1d(px);
      ga = std::make_shared<EllipticalDensity1D>(e->mu(), std::sqrt(e->scale() * e->scale() + h * h), e->generator());
    }
    p.log_ga_x = px.unaryExpr([&](double t) { return ga->log_pdf(t); });
    p.log_ga_y = py.unaryExpr([&](double t) { return ga->log_pdf(t); });
  } else {
    ProjectedKernelEstimate ga = ProjectedKernelEstimate::fit(py);
    KernelEvaluation ey = ga.evaluate_leave_one_out();
    KernelEvaluation ex = ga.evaluate(px);
    p.log_ga_y = ey.log_value;
    p.log_ga_x = ex.log_value;
    if (opt_.variance_correction) {
      p.rv_ga_x = ex.rel_var;
      p.rv_ga_y = ey.rel_var;
    }
  }
  return p;
}

Density1DPtr CriterionContext::f_projection(const Vec& a) const {
  if (f_oracle_) return f_oracle_->project(a);
  return std::make_shared<KernelDensity1D>(ProjectedKernelEstimate::fit(x_, a));
}

Density1DPtr CriterionContext::g_projection(const Vec& a) const {
  if (g_prev_.k() == 0) return g_prev_.base().project(a);
  return std::make_shared<KernelDensity1D>(ProjectedKernelEstimate::fit(y_, a));
}

double CriterionContext::log_f_at(const Vec& x) const {
  return f_oracle_ ? f_oracle_->log_pdf(x) : f_est_->log_eval(x);
}

double CriterionContext::log_fa_at(const Vec& a, double t) const { return f_projection(a)->log_pdf(t); }

double CriterionContext::log_ga_at(const Vec& a, double t) const { return g_projection(a)->log_pdf(t); }

namespace {

// An estimated density D with relative variance rv enters a logarithm as ln D + rv/2 and a
// reciprocal as 1/(D (1 + rv)); linear occurrences are unbiased and left alone.
Eigen::ArrayXd as_log(const Vec& log_d, const Vec& rv) { return log_d.array() + 0.5 * rv.array(); }
Eigen::ArrayXd as_reciprocal(const Vec& log_d, const Vec& rv) { return log_d.array() + rv.array().log1p(); }

}  // namespace

CriterionValue empirical_K_ours(const CriterionContext& ctx, const Vec& a) {
  auto p = ctx.project(a);
  int clamps = 0;
  const double c1 = ctx.log_cap_1d(), cd = ctx.log_cap_d();
  // Y side: logarithmic use of every estimate, plus the weight f_a / g_a.
  Eigen::ArrayXd lr_y = capped(ctx.log_g_y().array() - as_log(ctx.log_f_y(), ctx.rv_f_y()), cd, clamps);
  Eigen::ArrayXd la_y_log = capped(as_log(p.log_fa_y, p.rv_fa_y) - as_log(p.log_ga_y, p.rv_ga_y), c1, clamps);
  Eigen::ArrayXd la_y_w = capped(p.log_fa_y.array() - as_reciprocal(p.log_ga_y, p.rv_ga_y), c1, clamps);
  // X side: the ratio g f_a / (f g_a).
  Eigen::ArrayXd lr_x = capped(ctx.log_g_x().array() - as_reciprocal(ctx.log_f_x(), ctx.rv_f_x()), cd, clamps);
  Eigen::ArrayXd la_x = capped(p.log_fa_x.array() - as_reciprocal(p.log_ga_x, p.rv_ga_x), c1, clamps);
  Eigen::ArrayXd u = (lr_y + la_y_log) * la_y_w.exp();
  Eigen::ArrayXd v = (lr_x + la_x).exp() - 1.0;
  return summarize(u, v, clamps);
}

CriterionValue empirical_K_huber(const CriterionContext& ctx, const Vec& a) {
  auto p = ctx.project(a);
  int clamps = 0;
  const double c1 = ctx.log_cap_1d();
  Eigen::ArrayXd u = capped(as_log(p.log_ga_y, p.rv_ga_y) - as_log(p.log_fa_y, p.rv_fa_y), c1, clamps);
  Eigen::ArrayXd lq_x = capped(p.log_ga_x.array() - as_reciprocal(p.log_fa_x, p.rv_fa_x), c1, clamps);
  Eigen::ArrayXd v = lq_x.exp() - 1.0;
  if (ctx.options().huber_weight == HuberWeight::DensityRatio)
    v *= (p.log_fa_x.array() - as_reciprocal(ctx.log_f_x(), ctx.rv_f_x())).exp();
  return summarize(u, v, clamps);
}

CriterionValue empirical_K_initial(const CriterionContext& ctx) {
  int clamps = 0;
  Eigen::ArrayXd lr_x = capped(ctx.log_g_x().array() - as_reciprocal(ctx.log_f_x(), ctx.rv_f_x()), ctx.log_cap_d(), clamps);
  Eigen::ArrayXd lr_y = capped(ctx.log_g_y().array() - as_log(ctx.log_f_y(), ctx.rv_f_y()), ctx.log_cap_d(), clamps);
  return summarize(lr_y, lr_x.exp() - 1.0, clamps);
}

CriterionValue empirical_K(const CriterionContext& ctx, Method method, const Vec& a) {
  return method == Method::Ours ? empirical_K_ours(ctx, a) : empirical_K_huber(ctx, a);
}

double criterion_M(const CriterionContext& ctx, const Vec& b, const Vec& a, const Vec& x) {
  auto pa = ctx.project(a);
  auto pb = a.isApprox(b, 0.0) ? pa : ctx.project(b);
  int clamps = 0;
  Eigen::ArrayXd la_y = capped(pa.log_fa_y.array() - pa.log_ga_y.array(), ctx.log_cap_1d(), clamps);
  Eigen::ArrayXd lb_y = capped(pb.log_fa_y.array() - pb.log_ga_y.array(), ctx.log_cap_1d(), clamps);
  Eigen::ArrayXd lr_y = capped(ctx.log_g_y().array() - ctx.log_f_y().array(), ctx.log_cap_d(), clamps);
  double inner = ((lr_y + lb_y) * la_y.exp()).mean();
  const double t = b.dot(x);
  double lr = std::min(ctx.g_prev().log_pdf(x) - ctx.log_f_at(x), ctx.log_cap_d());
  double lb = std::min(ctx.log_fa_at(b, t) - ctx.log_ga_at(b, t), ctx.log_cap_1d());
  return inner - (std::exp(lr + lb) - 1.0);
}

double criterion_m(const CriterionContext& ctx, const Vec& b, const Vec& a, const Vec& x) {
  auto fb = ctx.f_projection(b);
  auto gb = ctx.g_projection(b);
  Vec ty = ctx.y() * a;
  double inner = 0.0;
  for (Eigen::Index j = 0; j < ty.size(); ++j)
    inner += std::min(gb->log_pdf(ty[j]) - fb->log_pdf(ty[j]), ctx.log_cap_1d());
  inner /= static_cast<double>(ty.size());
  const double t = b.dot(x);
  double lq = std::min(gb->log_pdf(t) - fb->log_pdf(t), ctx.log_cap_1d());
  return inner - (std::exp(lq) - 1.0);
}

double variance_of_criterion(const CriterionContext& ctx, const Vec& b, Method method) {
  if (ctx.n_x() < 2) throw ConfigError("variance needs at least two points");
  return empirical_K(ctx, method, b).variance_hat;
}

}  // namespace ppfactor
