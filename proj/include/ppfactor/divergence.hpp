#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "ppfactor/distributions.hpp"
#include "ppfactor/kde.hpp"
#include "ppfactor/transformed.hpp"

namespace ppfactor {

enum class Method { Ours, Huber };

const char* method_name(Method m);

// x ln x - x + 1
double phi(double x);

struct KlEstimate {
  double value = 0.0;
  double se = 0.0;  // Monte-Carlo standard error; 0 for closed forms
  bool exact = false;
};

// K(p, q) = int p ln(p/q). Closed form when both are Gaussian, Monte-Carlo otherwise.
KlEstimate kl_analytic(const AnalyticDensity& p, const AnalyticDensity& q, int n_mc, std::uint64_t seed);
KlEstimate kl_analytic_1d(const Density1D& p, const Density1D& q, int n_mc, std::uint64_t seed);
// Monte-Carlo K(p, q) for q given only through its log density.
KlEstimate kl_monte_carlo(const AnalyticDensity& p, const std::function<double(const Vec&)>& log_q, int n_mc,
                          std::uint64_t seed);

enum class HuberWeight {
  Unit,          // each X_i weighted by 1
  DensityRatio,  // each X_i weighted by f_{a,n}(a'X_i) / f_n(X_i)
};

struct CriterionOptions {
  HuberWeight huber_weight = HuberWeight::Unit;
  bool clamp_ratios = true;
  // Compare kernel estimates against the Gaussian base convolved with the same kernel,
  // so that smoothing bias cancels in the ratios.
  bool smoothed_reference = true;
  // Second-order correction for the noise of kernel estimates: ln f_n is raised by half its
  // relative variance where it enters a logarithm, 1/f_n is divided by (1 + relative variance)
  // where it enters a ratio.
  bool variance_correction = true;
};

struct CriterionValue {
  double value = 0.0;
  double variance_hat = 0.0;  // per-point variance, so the standard error is sqrt(variance_hat / n_used)
  int n_used = 0;
  int clamp_events = 0;
  bool degenerate = false;
};

// Everything a criterion evaluation needs for one iteration: the truncated samples,
// the multivariate estimate of f, and the current instrumental density g^(k-1).
class CriterionContext {
 public:
  // If `f_oracle` is given, f and its projections are evaluated exactly instead of estimated.
  CriterionContext(const TruncatedSample& trunc, TransformedDensity g_prev, CriterionOptions opt = {},
                   AnalyticPtr f_oracle = nullptr);

  int dim() const { return static_cast<int>(x_.cols()); }
  int n_x() const { return static_cast<int>(x_.rows()); }
  int n_y() const { return static_cast<int>(y_.rows()); }
  const Mat& x() const { return x_; }
  const Mat& y() const { return y_; }
  const TransformedDensity& g_prev() const { return g_prev_; }
  const std::optional<KernelEstimate>& f_estimate() const { return f_est_; }
  double log_cap_1d() const { return log_cap_1d_; }
  double log_cap_d() const { return log_cap_d_; }
  const CriterionOptions& options() const { return opt_; }

  // Projected densities of f and g^(k-1) along a, evaluated at the X and Y points.
  struct Projections {
    Vec log_fa_x, log_fa_y, log_ga_x, log_ga_y;
    Vec rv_fa_x, rv_fa_y, rv_ga_x, rv_ga_y;  // relative variances, zero for exact densities
  };
  Projections project(const Vec& a) const;
  // 1-D handles used when appending a factor to g^(k-1).
  Density1DPtr f_projection(const Vec& a) const;
  Density1DPtr g_projection(const Vec& a) const;

  double log_f_at(const Vec& x) const;
  double log_fa_at(const Vec& a, double t) const;
  double log_ga_at(const Vec& a, double t) const;

  const Vec& log_f_x() const { return log_f_x_; }
  const Vec& log_f_y() const { return log_f_y_; }
  const Vec& log_g_x() const { return log_g_x_; }
  const Vec& log_g_y() const { return log_g_y_; }
  const Vec& rv_f_x() const { return rv_f_x_; }
  const Vec& rv_f_y() const { return rv_f_y_; }
  // Whether ratios use the kernel-smoothed base (only possible for a Gaussian base).
  bool smoothing_active() const { return smoothing_active_; }

 private:
  Mat x_, y_;
  TransformedDensity g_prev_;
  CriterionOptions opt_;
  AnalyticPtr f_oracle_;
  std::optional<KernelEstimate> f_est_;
  Vec log_f_x_, log_f_y_, log_g_x_, log_g_y_;
  Vec rv_f_x_, rv_f_y_;
  double log_cap_1d_ = 0.0, log_cap_d_ = 0.0;
  bool smoothing_active_ = false;
};

// Pointwise criteria at an arbitrary x; the inner integral over the Y sample is
// recomputed for the given (b, a) on every call.
double criterion_M(const CriterionContext& ctx, const Vec& b, const Vec& a, const Vec& x);
double criterion_m(const CriterionContext& ctx, const Vec& b, const Vec& a, const Vec& x);

// Sample-average criteria over the truncated samples.
CriterionValue empirical_K_ours(const CriterionContext& ctx, const Vec& a);
CriterionValue empirical_K_huber(const CriterionContext& ctx, const Vec& a);
// K(g^(k-1), f) itself, i.e. the ours criterion with the direction factor removed.
CriterionValue empirical_K_initial(const CriterionContext& ctx);
CriterionValue empirical_K(const CriterionContext& ctx, Method method, const Vec& a);

double variance_of_criterion(const CriterionContext& ctx, const Vec& b, Method method = Method::Ours);

}  // namespace ppfactor
