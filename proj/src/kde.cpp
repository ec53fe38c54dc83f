#include "ppfactor/kde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppfactor {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274;
// Kernels further than this many bandwidths contribute below double precision
// relative to any kernel inside the window.
constexpr double kReach = 9.0;

double sample_sd(const Vec& v) {
  const double n = static_cast<double>(v.size());
  double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / (n - 1.0));
}

}  // namespace

Vec bandwidth_rule(int m, int d, const Vec& sd) {
  if (m < 2) throw ConfigError("bandwidth rule needs at least two observations");
  if (sd.size() != d) throw ConfigError("standard deviation vector does not match dimension");
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd[j] > 0.0)) throw NumericalError("zero-variance coordinate " + std::to_string(j) + " in bandwidth rule");
  return sd * std::pow(static_cast<double>(m), -1.0 / (4.0 + d));
}

Vec bandwidth_rule(const Mat& sample) {
  const int m = static_cast<int>(sample.rows());
  const int d = static_cast<int>(sample.cols());
  if (m < 2) throw ConfigError("bandwidth rule needs at least two observations");
  Vec sd(d);
  for (int j = 0; j < d; ++j) sd[j] = sample_sd(sample.col(j));
  return bandwidth_rule(m, d, sd);
}

double bandwidth_rule_1d(const Vec& scalars) {
  return bandwidth_rule(static_cast<int>(scalars.size()), 1, Vec::Constant(1, scalars.size() >= 2 ? sample_sd(scalars) : 0.0))[0];
}

KernelEstimate::KernelEstimate(Mat points, Vec bandwidths) : points_(std::move(points)), h_(std::move(bandwidths)) {
  if (points_.rows() < 1) throw ConfigError("kernel estimate needs at least one point");
  if (h_.size() != points_.cols()) throw ConfigError("bandwidth vector does not match dimension");
  if (!(h_.minCoeff() > 0.0)) throw ConfigError("bandwidths must be positive");
  scaled_ = points_ * h_.cwiseInverse().asDiagonal();
  log_norm_ = -std::log(static_cast<double>(points_.rows())) - dim() * kLogSqrt2Pi - h_.array().log().sum();
}

KernelEstimate KernelEstimate::fit(const Mat& sample) { return KernelEstimate(sample, bandwidth_rule(sample)); }

double KernelEstimate::log_sum(const Vec& q, Eigen::Index skip, double* rel_var) const {
  Eigen::ArrayXd e = -0.5 * (scaled_.rowwise() - q.transpose()).rowwise().squaredNorm().array();
  if (skip >= 0) e[skip] = -std::numeric_limits<double>::infinity();
  double mx = e.maxCoeff();
  if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
  Eigen::ArrayXd k = (e - mx).exp();
  double s = k.sum();
  if (rel_var) {
    double used = static_cast<double>(e.size() - (skip >= 0 ? 1 : 0));
    *rel_var = std::max(0.0, k.square().sum() / (s * s) - 1.0 / used);
  }
  return mx + std::log(s);
}

double KernelEstimate::log_eval(const Vec& x) const {
  if (x.size() != points_.cols()) throw ConfigError("query dimension does not match estimate");
  return log_norm_ + log_sum(x.cwiseQuotient(h_), -1);
}

double KernelEstimate::eval(const Vec& x) const { return std::exp(log_eval(x)); }

Vec KernelEstimate::log_eval_many(const Mat& queries) const {
  Vec out(queries.rows());
  for (Eigen::Index r = 0; r < queries.rows(); ++r) out[r] = log_eval(queries.row(r).transpose());
  return out;
}

Vec KernelEstimate::log_eval_leave_one_out() const {
  const Eigen::Index n = points_.rows();
  if (n < 2) throw ConfigError("leave-one-out evaluation needs at least two points");
  // n-1 remaining kernels
  const double adj = std::log(static_cast<double>(n)) - std::log(static_cast<double>(n - 1));
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = log_norm_ + adj + log_sum(scaled_.row(i).transpose(), i);
  return out;
}

KernelEvaluation KernelEstimate::evaluate(const Mat& queries) const {
  KernelEvaluation out{Vec(queries.rows()), Vec(queries.rows())};
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    if (queries.cols() != points_.cols()) throw ConfigError("query dimension does not match estimate");
    out.log_value[r] = log_norm_ + log_sum(queries.row(r).transpose().cwiseQuotient(h_), -1, &out.rel_var[r]);
  }
  return out;
}

KernelEvaluation KernelEstimate::evaluate_leave_one_out() const {
  const Eigen::Index n = points_.rows();
  if (n < 2) throw ConfigError("leave-one-out evaluation needs at least two points");
  const double adj = std::log(static_cast<double>(n)) - std::log(static_cast<double>(n - 1));
  KernelEvaluation out{Vec(n), Vec(n)};
  for (Eigen::Index i = 0; i < n; ++i)
    out.log_value[i] = log_norm_ + adj + log_sum(scaled_.row(i).transpose(), i, &out.rel_var[i]);
  return out;
}

ProjectedKernelEstimate::ProjectedKernelEstimate(Vec scalars, double bandwidth)
    : scalars_(std::move(scalars)), h_(bandwidth) {
  if (scalars_.size() < 1) throw ConfigError("kernel estimate needs at least one point");
  if (!(h_ > 0.0)) throw ConfigError("bandwidth must be positive");
  sorted_.assign(scalars_.data(), scalars_.data() + scalars_.size());
  for (double& s : sorted_) s /= h_;
  std::sort(sorted_.begin(), sorted_.end());
  log_norm_ = -std::log(static_cast<double>(scalars_.size())) - kLogSqrt2Pi - std::log(h_);
}

ProjectedKernelEstimate ProjectedKernelEstimate::fit(const Vec& scalars) {
  return ProjectedKernelEstimate(scalars, bandwidth_rule_1d(scalars));
}

ProjectedKernelEstimate ProjectedKernelEstimate::fit(const Mat& sample, const Vec& a) {
  if (a.size() != sample.cols()) throw ConfigError("direction dimension does not match sample");
  return fit(Vec(sample * a));
}

double ProjectedKernelEstimate::log_sum(double t, double exclude, bool skip_one, double* rel_var) const {
  const double z = t / h_;
  auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), z - kReach);
  auto hi = std::upper_bound(lo, sorted_.end(), z + kReach);
  bool skipped = !skip_one;
  double s = 0.0, s2 = 0.0;
  for (auto it = lo; it != hi; ++it) {
    if (!skipped && *it == exclude) {
      skipped = true;
      continue;
    }
    double u = z - *it;
    double k = std::exp(-0.5 * u * u);
    s += k;
    s2 += k * k;
  }
  const double n = static_cast<double>(sorted_.size());
  const double used = skip_one ? n - 1.0 : n;
  if (s > n * 1e-10) {
    if (rel_var) *rel_var = std::max(0.0, s2 / (s * s) - 1.0 / used);
    return std::log(s);
  }
  // Far from the window: exact log-sum-exp over every kernel.
  double mx = -std::numeric_limits<double>::infinity();
  skipped = !skip_one;
  std::vector<double> e;
  e.reserve(sorted_.size());
  for (double p : sorted_) {
    if (!skipped && p == exclude) {
      skipped = true;
      continue;
    }
    double u = z - p;
    e.push_back(-0.5 * u * u);
    mx = std::max(mx, e.back());
  }
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0, acc2 = 0.0;
  for (double v : e) {
    double k = std::exp(v - mx);
    acc += k;
    acc2 += k * k;
  }
  if (rel_var) *rel_var = std::max(0.0, acc2 / (acc * acc) - 1.0 / used);
  return mx + std::log(acc);
}

KernelEvaluation ProjectedKernelEstimate::evaluate(const Vec& ts) const {
  KernelEvaluation out{Vec(ts.size()), Vec(ts.size())};
  for (Eigen::Index i = 0; i < ts.size(); ++i) out.log_value[i] = log_norm_ + log_sum(ts[i], 0.0, false, &out.rel_var[i]);
  return out;
}

KernelEvaluation ProjectedKernelEstimate::evaluate_leave_one_out() const {
  const Eigen::Index n = scalars_.size();
  if (n < 2) throw ConfigError("leave-one-out evaluation needs at least two points");
  const double adj = std::log(static_cast<double>(n)) - std::log(static_cast<double>(n - 1));
  KernelEvaluation out{Vec(n), Vec(n)};
  for (Eigen::Index i = 0; i < n; ++i)
    out.log_value[i] = log_norm_ + adj + log_sum(scalars_[i], scalars_[i] / h_, true, &out.rel_var[i]);
  return out;
}

double ProjectedKernelEstimate::log_eval(double t) const { return log_norm_ + log_sum(t, 0.0, false); }

double ProjectedKernelEstimate::eval(double t) const { return std::exp(log_eval(t)); }

Vec ProjectedKernelEstimate::log_eval_many(const Vec& ts) const {
  Vec out(ts.size());
  for (Eigen::Index i = 0; i < ts.size(); ++i) out[i] = log_eval(ts[i]);
  return out;
}

Vec ProjectedKernelEstimate::log_eval_leave_one_out() const {
  const Eigen::Index n = scalars_.size();
  if (n < 2) throw ConfigError("leave-one-out evaluation needs at least two points");
  const double adj = std::log(static_cast<double>(n)) - std::log(static_cast<double>(n - 1));
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = log_norm_ + adj + log_sum(scalars_[i], scalars_[i] / h_, true);
  return out;
}

double theta_m(int m, double nu) { return std::pow(static_cast<double>(m), -nu); }

double kernel_error_scale(int m, int d) { return std::pow(static_cast<double>(m), -2.0 / (4.0 + d)); }

double nu_upper(int d) { return 1.0 / (4.0 + d); }

TruncatedSample truncate(const Mat& x_sample, const Mat& y_sample, const KernelEstimate& f_m,
                         const std::function<double(const Vec&)>& log_g, double nu, FloorMode mode) {
  const int d = static_cast<int>(x_sample.cols());
  if (y_sample.cols() != d || f_m.dim() != d) throw ConfigError("truncation inputs disagree on dimension");
  if (!(nu > 0.0) || !(nu < nu_upper(d)))
    throw ConfigError("nu must satisfy 0 < nu < 1/(4+d) = " + std::to_string(nu_upper(d)));
  TruncatedSample out;
  out.m_original = static_cast<int>(x_sample.rows());
  out.nu = nu;
  out.theta = theta_m(out.m_original, nu);
  out.y_m = kernel_error_scale(out.m_original, d);
  out.mode = mode;
  const double log_theta = std::log(out.theta);

  // f_m at its own sample points excludes the point's own kernel.
  const bool x_is_fit_sample = f_m.points().rows() == x_sample.rows() && f_m.points() == x_sample;
  Vec lf_x = x_is_fit_sample ? f_m.log_eval_leave_one_out() : f_m.log_eval_many(x_sample);
  for (Eigen::Index i = 0; i < x_sample.rows(); ++i) {
    double score = lf_x[i];
    if (mode == FloorMode::LikelihoodRatio) score = (lf_x[i] - log_g(x_sample.row(i).transpose())) / d;
    if (score >= log_theta) out.index_x.push_back(static_cast<int>(i));
  }
  for (Eigen::Index i = 0; i < y_sample.rows(); ++i) {
    Vec y = y_sample.row(i).transpose();
    double lg = log_g(y);
    double score = mode == FloorMode::LikelihoodRatio ? (lg - f_m.log_eval(y)) / d : lg;
    if (score >= log_theta) out.index_y.push_back(static_cast<int>(i));
  }
  out.passed_x = static_cast<int>(out.index_x.size());
  out.passed_y = static_cast<int>(out.index_y.size());
  // Equalize against the original size ratio (1 when both samples have m rows).
  const std::size_t ratio = std::max<std::size_t>(1, static_cast<std::size_t>(y_sample.rows() / x_sample.rows()));
  const std::size_t n = std::min(out.index_x.size(), out.index_y.size() / ratio);
  if (static_cast<int>(n) < d + 2)
    throw NumericalError("truncation too aggressive: " + std::to_string(n) + " rows survive, need at least " +
                         std::to_string(d + 2));
  out.index_x.resize(n);
  out.index_y.resize(n * ratio);
  out.kept_x.resize(static_cast<Eigen::Index>(n), d);
  out.kept_y.resize(static_cast<Eigen::Index>(n * ratio), d);
  for (std::size_t r = 0; r < out.index_x.size(); ++r) out.kept_x.row(static_cast<Eigen::Index>(r)) = x_sample.row(out.index_x[r]);
  for (std::size_t r = 0; r < out.index_y.size(); ++r) out.kept_y.row(static_cast<Eigen::Index>(r)) = y_sample.row(out.index_y[r]);
  return out;
}

}  // namespace ppfactor
