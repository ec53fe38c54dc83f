#pragma once

#include <limits>
#include <memory>
#include <vector>

#include "ppfactor/distributions.hpp"
#include "ppfactor/kde.hpp"

namespace ppfactor {

// Kernel estimate exposed as a one-dimensional density handle.
class KernelDensity1D : public Density1D {
 public:
  explicit KernelDensity1D(ProjectedKernelEstimate est) : est_(std::move(est)) {}
  double log_pdf(double t) const override { return est_.log_eval(t); }
  double sample(Rng& rng) const override;
  std::string describe() const override;
  const ProjectedKernelEstimate& estimate() const { return est_; }

 private:
  ProjectedKernelEstimate est_;
};

// Kernel estimate of a large sample, tabulated on a uniform grid of log densities. Queries
// inside the grid interpolate linearly; queries outside fall back to the exact estimate.
class TabulatedKernelDensity1D : public Density1D {
 public:
  explicit TabulatedKernelDensity1D(ProjectedKernelEstimate est, int grid_size = 4096);
  double log_pdf(double t) const override;
  double sample(Rng& rng) const override;
  bool approximate() const override { return true; }
  std::string describe() const override;

 private:
  ProjectedKernelEstimate est_;
  double lo_ = 0.0, step_ = 1.0;
  std::vector<double> log_values_;
};

struct Factor {
  Vec direction;
  Density1DPtr numerator;
  Density1DPtr denominator;
  // Upper bound applied to log(numerator / denominator); +inf disables it.
  double log_cap = std::numeric_limits<double>::infinity();

  double log_ratio(double t) const;
};

// g^(k)(x) = g(x) * prod_j num_j(a_j'x) / den_j(a_j'x).
class TransformedDensity {
 public:
  explicit TransformedDensity(std::shared_ptr<const EllipticalDensity> base);

  int dim() const { return base_->dim(); }
  int k() const { return static_cast<int>(factors_.size()); }
  const EllipticalDensity& base() const { return *base_; }
  std::shared_ptr<const EllipticalDensity> base_ptr() const { return base_; }
  const std::vector<Factor>& factors() const { return factors_; }

  double log_pdf(const Vec& x) const;
  Vec log_pdf_many(const Mat& xs) const;
  // Log of the factor product alone (the density ratio against the base).
  double log_ratio_to_base(const Vec& x) const;

  TransformedDensity update(const Vec& a, Density1DPtr numerator, Density1DPtr denominator,
                            double log_cap = std::numeric_limits<double>::infinity()) const;

 private:
  std::shared_ptr<const EllipticalDensity> base_;
  std::vector<Factor> factors_;
};

}  // namespace ppfactor
