#include "ppfactor/transformed.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace ppfactor {

double KernelDensity1D::sample(Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, est_.size() - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  double centre = est_.scalars()[pick(rng)];
  return centre + est_.bandwidth() * nd(rng);
}

std::string KernelDensity1D::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << "kde(n=" << est_.size() << ",h=" << est_.bandwidth() << ")";
  return os.str();
}

TabulatedKernelDensity1D::TabulatedKernelDensity1D(ProjectedKernelEstimate est, int grid_size)
    : est_(std::move(est)) {
  if (grid_size < 2) throw ConfigError("tabulation grid needs at least two points");
  const Vec& s = est_.scalars();
  lo_ = s.minCoeff() - 8.0 * est_.bandwidth();
  const double hi = s.maxCoeff() + 8.0 * est_.bandwidth();
  step_ = (hi - lo_) / (grid_size - 1);
  Vec grid(grid_size);
  for (int i = 0; i < grid_size; ++i) grid[i] = lo_ + step_ * i;
  Vec lv = est_.log_eval_many(grid);
  log_values_.assign(lv.data(), lv.data() + lv.size());
}

double TabulatedKernelDensity1D::log_pdf(double t) const {
  const double u = (t - lo_) / step_;
  if (!(u >= 0.0 && u < static_cast<double>(log_values_.size() - 1))) return est_.log_eval(t);
  const auto i = static_cast<std::size_t>(u);
  const double w = u - static_cast<double>(i);
  return (1.0 - w) * log_values_[i] + w * log_values_[i + 1];
}

double TabulatedKernelDensity1D::sample(Rng& rng) const { return KernelDensity1D(est_).sample(rng); }

std::string TabulatedKernelDensity1D::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << "tabulated kde(n=" << est_.size() << ",h=" << est_.bandwidth() << ",grid=" << log_values_.size() << ")";
  return os.str();
}

double Factor::log_ratio(double t) const {
  return std::min(numerator->log_pdf(t) - denominator->log_pdf(t), log_cap);
}

TransformedDensity::TransformedDensity(std::shared_ptr<const EllipticalDensity> base) : base_(std::move(base)) {
  if (!base_) throw ConfigError("transformed density needs a base density");
}

double TransformedDensity::log_ratio_to_base(const Vec& x) const {
  double lr = 0.0;
  for (const Factor& f : factors_) lr += f.log_ratio(f.direction.dot(x));
  return lr;
}

double TransformedDensity::log_pdf(const Vec& x) const { return base_->log_pdf(x) + log_ratio_to_base(x); }

Vec TransformedDensity::log_pdf_many(const Mat& xs) const {
  Vec out(xs.rows());
  for (Eigen::Index r = 0; r < xs.rows(); ++r) out[r] = log_pdf(xs.row(r).transpose());
  return out;
}

TransformedDensity TransformedDensity::update(const Vec& a, Density1DPtr numerator, Density1DPtr denominator,
                                              double log_cap) const {
  if (a.size() != base_->dim()) throw ConfigError("factor direction dimension does not match density");
  if (!numerator || !denominator) throw ConfigError("factor needs numerator and denominator densities");
  TransformedDensity next = *this;
  next.factors_.push_back(Factor{a, std::move(numerator), std::move(denominator), log_cap});
  return next;
}

}  // namespace ppfactor
