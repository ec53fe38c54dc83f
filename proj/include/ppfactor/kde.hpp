#pragma once

#include <functional>
#include <vector>

#include "ppfactor/types.hpp"

namespace ppfactor {

// Per-coordinate bandwidths sd_j * m^{-1/(4+d)}.
Vec bandwidth_rule(int m, int d, const Vec& sd);
Vec bandwidth_rule(const Mat& sample);
// One-dimensional version of the same rule, sd * n^{-1/5}.
double bandwidth_rule_1d(const Vec& scalars);

// Log estimates together with the estimated relative variance Var(f_n(x)) / f_n(x)^2,
// computed from the kernel weights as sum k^2 / (sum k)^2 - 1/N.
struct KernelEvaluation {
  Vec log_value;
  Vec rel_var;
};

// Gaussian product-kernel estimate on R^d.
class KernelEstimate {
 public:
  KernelEstimate(Mat points, Vec bandwidths);
  static KernelEstimate fit(const Mat& sample);

  int dim() const { return static_cast<int>(points_.cols()); }
  int size() const { return static_cast<int>(points_.rows()); }
  const Mat& points() const { return points_; }
  const Vec& bandwidths() const { return h_; }

  double eval(const Vec& x) const;
  double log_eval(const Vec& x) const;
  Vec log_eval_many(const Mat& queries) const;  // one query per row
  // Estimate at each sample point with that point's own kernel removed.
  Vec log_eval_leave_one_out() const;
  KernelEvaluation evaluate(const Mat& queries) const;
  KernelEvaluation evaluate_leave_one_out() const;

 private:
  double log_sum(const Vec& scaled_query, Eigen::Index skip, double* rel_var = nullptr) const;
  Mat points_;
  Mat scaled_;  // points divided by bandwidths, coordinatewise
  Vec h_;
  double log_norm_ = 0.0;
};

// One-dimensional Gaussian kernel estimate over projected scalars.
class ProjectedKernelEstimate {
 public:
  ProjectedKernelEstimate(Vec scalars, double bandwidth);
  // Projects sample rows on a and applies the one-dimensional bandwidth rule.
  static ProjectedKernelEstimate fit(const Mat& sample, const Vec& a);
  static ProjectedKernelEstimate fit(const Vec& scalars);

  int size() const { return static_cast<int>(scalars_.size()); }
  double bandwidth() const { return h_; }
  const Vec& scalars() const { return scalars_; }

  double eval(double t) const;
  double log_eval(double t) const;
  Vec log_eval_many(const Vec& ts) const;
  Vec log_eval_leave_one_out() const;
  KernelEvaluation evaluate(const Vec& ts) const;
  KernelEvaluation evaluate_leave_one_out() const;

 private:
  double log_sum(double t, double exclude, bool skip_one, double* rel_var = nullptr) const;
  Vec scalars_;
  std::vector<double> sorted_;  // scaled by 1/h
  double h_;
  double log_norm_ = 0.0;
};

enum class FloorMode {
  Absolute,         // density at its own sample point >= theta
  LikelihoodRatio,  // (own density / other density)^{1/d} >= theta
};

struct TruncatedSample {
  Mat kept_x, kept_y;
  std::vector<int> index_x, index_y;  // rows of the original samples that were kept
  double theta = 0.0;
  double nu = 0.0;
  double y_m = 0.0;  // pointwise kernel error scale m^{-2/(4+d)}
  int m_original = 0;
  int passed_x = 0, passed_y = 0;  // before equalizing the two sizes
  FloorMode mode = FloorMode::LikelihoodRatio;
  int n() const { return static_cast<int>(kept_x.rows()); }
};

double theta_m(int m, double nu);
double kernel_error_scale(int m, int d);
// Upper bound of the admissible exponent range (0, 1/(4+d)).
double nu_upper(int d);

// Keeps X_i and Y_i passing the floors, then drops trailing rows so that the kept sizes
// keep the original Y:X ratio (equal sizes when both samples have m rows).
// `log_g` evaluates the instrumental density.
// Throws NumericalError when fewer than d+2 rows survive.
TruncatedSample truncate(const Mat& x_sample, const Mat& y_sample, const KernelEstimate& f_m,
                         const std::function<double(const Vec&)>& log_g, double nu,
                         FloorMode mode = FloorMode::LikelihoodRatio);

}  // namespace ppfactor
