#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ppfactor/rng.hpp"
#include "ppfactor/types.hpp"

namespace ppfactor {

// Radial profile xi of an elliptical family, stored as log xi.
class Generator {
 public:
  static Generator gaussian();                      // xi(u) = exp(-u)
  static Generator power_exponential(double beta);  // xi(u) = exp(-u^beta)
  static Generator logistic();                      // xi(u) = exp(-u) / (1 + exp(-u))^2
  // Registry lookup by label; `param` is only read by parameterized families.
  static Generator from_label(const std::string& label, double param = 1.0);

  const std::string& label() const { return label_; }
  double param() const { return param_; }
  bool is_gaussian() const { return gaussian_; }
  double log_xi(double u) const { return (*log_xi_)(u); }

  // log of the radial integral  int_0^inf x^{d/2-1} xi(x) dx.
  double log_radial_integral(int d) const;
  // log c_d, the constant making c_d |S|^{-1/2} xi(q/2) a density on R^d.
  double log_norm_const(int d) const;
  // E[R^2] / d for R^2 = 2T with T ~ t^{d/2-1} xi(t); equals 1 for the Gaussian.
  double second_moment_factor(int d) const;

  // Generator of a k-dimensional marginal of a d-dimensional law.
  Generator marginal(int d_from, int k) const;
  // Generator of a conditional law: u -> xi(u + shift).
  Generator conditional(double shift) const;

 private:
  Generator(std::string label, double param, bool gaussian, std::function<double(double)> f);
  std::string label_;
  double param_ = 1.0;
  bool gaussian_ = false;
  std::shared_ptr<const std::function<double(double)>> log_xi_;
};

class Density1D {
 public:
  virtual ~Density1D() = default;
  virtual double log_pdf(double t) const = 0;
  double pdf(double t) const;
  virtual double sample(Rng& rng) const = 0;
  // True when the handle is a Monte-Carlo/kernel approximation rather than exact.
  virtual bool approximate() const { return false; }
  virtual std::string describe() const = 0;
};

using Density1DPtr = std::shared_ptr<const Density1D>;

class GumbelDensity1D : public Density1D {
 public:
  GumbelDensity1D(double loc, double scale);
  double log_pdf(double t) const override;
  double cdf(double t) const;
  double sample(Rng& rng) const override;
  std::string describe() const override;
  double loc() const { return loc_; }
  double scale() const { return scale_; }
  double mean() const;
  double variance() const;

 private:
  double loc_, scale_;
};

class EllipticalDensity;

// One-dimensional elliptical law: location, scale (standard-deviation-like), generator.
class EllipticalDensity1D : public Density1D {
 public:
  EllipticalDensity1D(double mu, double scale, Generator gen);
  double log_pdf(double t) const override;
  double sample(Rng& rng) const override;
  std::string describe() const override;
  double mu() const { return mu_; }
  double scale() const { return scale_; }
  const Generator& generator() const { return gen_; }

 private:
  double mu_, scale_;
  Generator gen_;
  double log_c1_;
  std::shared_ptr<const EllipticalDensity> sampler_;
};

// Law of c*Y + b for Y with density `base`.
class AffineDensity1D : public Density1D {
 public:
  AffineDensity1D(Density1DPtr base, double c, double b);
  double log_pdf(double t) const override;
  double sample(Rng& rng) const override;
  bool approximate() const override { return base_->approximate(); }
  std::string describe() const override;

 private:
  Density1DPtr base_;
  double c_, b_;
};

// Kernel estimate over a large Monte-Carlo sample of projections; flagged approximate.
class SampledDensity1D : public Density1D {
 public:
  explicit SampledDensity1D(std::vector<double> draws);
  double log_pdf(double t) const override;
  double sample(Rng& rng) const override;
  bool approximate() const override { return true; }
  std::string describe() const override;

 private:
  std::vector<double> draws_;  // sorted
  double h_;
};

class AnalyticDensity {
 public:
  virtual ~AnalyticDensity() = default;
  virtual int dim() const = 0;
  virtual double log_pdf(const Vec& x) const = 0;
  double pdf(const Vec& x) const;
  virtual Mat sample(int m, Rng& rng) const = 0;  // m x d, one draw per row
  // Law of a'X. Exact where closed forms exist; otherwise approximate().
  virtual Density1DPtr project(const Vec& a) const = 0;
};

using AnalyticPtr = std::shared_ptr<const AnalyticDensity>;

class EllipticalDensity : public AnalyticDensity {
 public:
  // Throws ConfigError if sigma is not symmetric positive-definite.
  EllipticalDensity(Vec mu, Mat sigma, Generator gen = Generator::gaussian());

  int dim() const override { return static_cast<int>(mu_.size()); }
  double log_pdf(const Vec& x) const override;
  Mat sample(int m, Rng& rng) const override;
  Density1DPtr project(const Vec& a) const override;

  const Vec& mu() const { return mu_; }
  const Mat& sigma() const { return sigma_; }
  const Generator& generator() const { return gen_; }
  double log_norm_const() const { return log_cd_; }
  double log_det_sigma() const { return log_det_; }
  // Half the Mahalanobis quadratic form, the generator argument.
  double half_quad(const Vec& x) const;

  // keep / given use 0-based coordinate indices.
  EllipticalDensity marginal(const std::vector<int>& keep) const;
  EllipticalDensity conditional(const std::vector<int>& given, const Vec& values) const;

 private:
  double sample_radius_sq(Rng& rng) const;

  Vec mu_;
  Mat sigma_;
  Mat chol_l_;
  Generator gen_;
  double log_det_ = 0.0;
  double log_cd_ = 0.0;
  // Inverse-CDF table for T = R^2 / 2 when the generator is not Gaussian.
  std::vector<double> radial_cdf_, radial_t_;
};

// f(x) = |det A| * prod_i h_i(a_i'x) * n(a_{j+1}'x, ..., a_d'x), A stacking the a_i as rows.
class ProductDensity : public AnalyticDensity {
 public:
  ProductDensity(Mat basis_rows, std::vector<Density1DPtr> factors,
                 std::shared_ptr<const EllipticalDensity> elliptical);

  int dim() const override { return static_cast<int>(a_.rows()); }
  double log_pdf(const Vec& x) const override;
  Mat sample(int m, Rng& rng) const override;
  Density1DPtr project(const Vec& a) const override;

  const Mat& basis() const { return a_; }
  int nongaussian_count() const { return static_cast<int>(factors_.size()); }

 private:
  Mat a_, a_inv_;
  double log_abs_det_ = 0.0;
  std::vector<Density1DPtr> factors_;
  std::shared_ptr<const EllipticalDensity> elliptical_;
};

// Deterministic draw of m rows given a seed.
Mat sample(const AnalyticDensity& dist, int m, std::uint64_t seed);

// Elliptical law with the sample mean as location and the scale chosen so that its
// covariance equals the sample covariance. Throws NumericalError on a singular covariance.
EllipticalDensity moment_match_instrumental(const Mat& sample, const Generator& gen = Generator::gaussian());

// Built-in simulation laws: 1 (d=3 product of pairwise sums), 2 (d=10 Gumbel x Gaussian),
// 3 (d=20 Gumbel x Gaussian, sampled with outliers).
std::shared_ptr<const ProductDensity> simulation_density(int which);
int simulation_default_m(int which);
// Sample for a preset; preset 3 replaces the last 4% of rows by (2, 0, ..., 0).
Mat simulation_sample(int which, int m, std::uint64_t seed);

}  // namespace ppfactor
