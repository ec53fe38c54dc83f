#include "ppfactor/distributions.hpp"

#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace ppfactor {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// log int_0^inf x^p * exp(log_f(x + shift) - log_f(shift)) dx
double log_shifted_moment(const std::function<double(double)>& log_f, double p, double shift) {
  const double base = log_f(shift);
  boost::math::quadrature::exp_sinh<double> integrator;
  auto integrand = [&](double x) {
    if (x <= 0.0) return 0.0;
    double v = p * std::log(x) + log_f(x + shift) - base;
    return v < -745.0 ? 0.0 : std::exp(v);
  };
  double val = integrator.integrate(integrand, 1e-12);
  if (!(val > 0.0) || !std::isfinite(val)) throw NumericalError("generator radial integral failed to converge");
  return std::log(val) + base;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

Generator::Generator(std::string label, double param, bool gaussian, std::function<double(double)> f)
    : label_(std::move(label)),
      param_(param),
      gaussian_(gaussian),
      log_xi_(std::make_shared<const std::function<double(double)>>(std::move(f))) {}

Generator Generator::gaussian() {
  return Generator("gaussian", 1.0, true, [](double u) { return -u; });
}

Generator Generator::power_exponential(double beta) {
  if (!(beta > 0.0)) throw ConfigError("power_exponential requires beta > 0");
  if (beta == 1.0) return gaussian();
  return Generator("power_exponential", beta, false, [beta](double u) { return -std::pow(u, beta); });
}

Generator Generator::logistic() {
  return Generator("logistic", 1.0, false, [](double u) {
    // log(e^{-u} / (1+e^{-u})^2), written to stay finite for large u
    return -u - 2.0 * std::log1p(std::exp(-u));
  });
}

Generator Generator::from_label(const std::string& label, double param) {
  if (label == "gaussian") return gaussian();
  if (label == "power_exponential") return power_exponential(param);
  if (label == "logistic") return logistic();
  throw ConfigError("unknown generator family '" + label + "' (expected gaussian, power_exponential or logistic)");
}

double Generator::log_radial_integral(int d) const {
  if (d < 1) throw ConfigError("dimension must be positive");
  if (gaussian_) return std::lgamma(0.5 * d);
  return log_shifted_moment(*log_xi_, 0.5 * d - 1.0, 0.0);
}

double Generator::log_norm_const(int d) const {
  if (gaussian_) return -0.5 * d * kLog2Pi;
  return std::lgamma(0.5 * d) - 0.5 * d * kLog2Pi - log_radial_integral(d);
}

double Generator::second_moment_factor(int d) const {
  if (gaussian_) return 1.0;
  // E[T] = I_{d+2} / I_d with I_k = int x^{k/2-1} xi
  double et = std::exp(log_radial_integral(d + 2) - log_radial_integral(d));
  return 2.0 * et / d;
}

Generator Generator::marginal(int d_from, int k) const {
  if (k < 1 || k > d_from) throw ConfigError("marginal dimension out of range");
  if (gaussian_ || k == d_from) return *this;
  auto parent = log_xi_;
  const double p = 0.5 * (d_from - k) - 1.0;
  return Generator(label_ + "_marginal", param_, false,
                   [parent, p](double u) { return log_shifted_moment(*parent, p, u); });
}

Generator Generator::conditional(double shift) const {
  if (gaussian_) return *this;
  auto parent = log_xi_;
  return Generator(label_ + "_conditional", param_, false,
                   [parent, shift](double u) { return (*parent)(u + shift); });
}

double Density1D::pdf(double t) const { return std::exp(log_pdf(t)); }

GumbelDensity1D::GumbelDensity1D(double loc, double scale) : loc_(loc), scale_(scale) {
  if (!(scale > 0.0)) throw ConfigError("Gumbel scale must be positive");
}

double GumbelDensity1D::log_pdf(double t) const {
  double z = (t - loc_) / scale_;
  return -std::log(scale_) - (z + std::exp(-z));
}

double GumbelDensity1D::cdf(double t) const { return std::exp(-std::exp(-(t - loc_) / scale_)); }

double GumbelDensity1D::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  while (u <= 0.0) u = unif(rng);
  return loc_ - scale_ * std::log(-std::log(u));
}

std::string GumbelDensity1D::describe() const { return "gumbel(" + fmt(loc_) + "," + fmt(scale_) + ")"; }

double GumbelDensity1D::mean() const { return loc_ + scale_ * boost::math::constants::euler<double>(); }

double GumbelDensity1D::variance() const {
  const double pi = boost::math::constants::pi<double>();
  return pi * pi / 6.0 * scale_ * scale_;
}

EllipticalDensity1D::EllipticalDensity1D(double mu, double scale, Generator gen)
    : mu_(mu), scale_(scale), gen_(std::move(gen)) {
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
  log_c1_ = gen_.log_norm_const(1);
  if (!gen_.is_gaussian()) {
    sampler_ = std::make_shared<const EllipticalDensity>(Vec::Constant(1, mu), Mat::Constant(1, 1, scale * scale), gen_);
  }
}

double EllipticalDensity1D::log_pdf(double t) const {
  double z = (t - mu_) / scale_;
  return log_c1_ - std::log(scale_) + gen_.log_xi(0.5 * z * z);
}

double EllipticalDensity1D::sample(Rng& rng) const {
  if (sampler_) return sampler_->sample(1, rng)(0, 0);
  std::normal_distribution<double> nd(0.0, 1.0);
  return mu_ + scale_ * nd(rng);
}

std::string EllipticalDensity1D::describe() const {
  return gen_.label() + "(" + fmt(mu_) + "," + fmt(scale_) + ")";
}

AffineDensity1D::AffineDensity1D(Density1DPtr base, double c, double b) : base_(std::move(base)), c_(c), b_(b) {
  if (c == 0.0) throw ConfigError("affine scale must be nonzero");
}

double AffineDensity1D::log_pdf(double t) const { return base_->log_pdf((t - b_) / c_) - std::log(std::abs(c_)); }

double AffineDensity1D::sample(Rng& rng) const { return c_ * base_->sample(rng) + b_; }

std::string AffineDensity1D::describe() const {
  return fmt(c_) + "*" + base_->describe() + "+" + fmt(b_);
}

SampledDensity1D::SampledDensity1D(std::vector<double> draws) : draws_(std::move(draws)) {
  if (draws_.size() < 2) throw ConfigError("sampled density needs at least two draws");
  std::sort(draws_.begin(), draws_.end());
  double n = static_cast<double>(draws_.size());
  double mean = std::accumulate(draws_.begin(), draws_.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws_) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / (n - 1.0));
  h_ = sd * std::pow(n, -0.2);
}

double SampledDensity1D::log_pdf(double t) const {
  const double reach = 9.0 * h_;
  auto lo = std::lower_bound(draws_.begin(), draws_.end(), t - reach);
  auto hi = std::upper_bound(lo, draws_.end(), t + reach);
  double s = 0.0;
  for (auto it = lo; it != hi; ++it) {
    double z = (t - *it) / h_;
    s += std::exp(-0.5 * z * z);
  }
  if (s <= 0.0) {
    // Outside the sample's reach: nearest-kernel tail, keeps the estimate positive.
    double nearest = std::min(std::abs(t - draws_.front()), std::abs(t - draws_.back()));
    double z = nearest / h_;
    return -0.5 * z * z - 0.5 * kLog2Pi - std::log(h_) - std::log(static_cast<double>(draws_.size()));
  }
  return std::log(s) - 0.5 * kLog2Pi - std::log(h_) - std::log(static_cast<double>(draws_.size()));
}

double SampledDensity1D::sample(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, draws_.size() - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  double v = draws_[pick(rng)];
  return v + h_ * nd(rng);
}

std::string SampledDensity1D::describe() const { return "sampled_kde(n=" + std::to_string(draws_.size()) + ")"; }

double AnalyticDensity::pdf(const Vec& x) const { return std::exp(log_pdf(x)); }

EllipticalDensity::EllipticalDensity(Vec mu, Mat sigma, Generator gen)
    : mu_(std::move(mu)), sigma_(std::move(sigma)), gen_(std::move(gen)) {
  const Eigen::Index d = mu_.size();
  if (d < 1) throw ConfigError("elliptical density needs dimension >= 1");
  if (sigma_.rows() != d || sigma_.cols() != d) throw ConfigError("sigma dimension does not match mu");
  if (!sigma_.allFinite() || !mu_.allFinite()) throw ConfigError("elliptical parameters must be finite");
  double asym = (sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + sigma_.cwiseAbs().maxCoeff())) throw ConfigError("sigma is not symmetric");
  sigma_ = 0.5 * (sigma_ + sigma_.transpose());
  Eigen::LLT<Mat> llt(sigma_);
  if (llt.info() != Eigen::Success) throw ConfigError("sigma is not positive-definite");
  chol_l_ = llt.matrixL();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(chol_l_(i, i) > 0.0)) throw ConfigError("sigma is not positive-definite");
    log_det_ += 2.0 * std::log(chol_l_(i, i));
  }
  log_cd_ = gen_.log_norm_const(static_cast<int>(d));

  if (!gen_.is_gaussian()) {
    // Tabulate the law of W = sqrt(T), density proportional to w^{d-1} xi(w^2).
    const int n_grid = 4000;
    double w_max = 1.0;
    while (gen_.log_xi(w_max * w_max) + (d - 1) * std::log(w_max) > -60.0 || w_max < 3.0) w_max *= 1.5;
    radial_t_.resize(n_grid + 1);
    radial_cdf_.assign(n_grid + 1, 0.0);
    std::vector<double> dens(n_grid + 1);
    double peak = -1e300;
    std::vector<double> logd(n_grid + 1);
    for (int i = 0; i <= n_grid; ++i) {
      double w = w_max * i / n_grid;
      radial_t_[i] = w;
      logd[i] = (i == 0) ? -1e300 : (d - 1) * std::log(w) + gen_.log_xi(w * w);
      peak = std::max(peak, logd[i]);
    }
    for (int i = 0; i <= n_grid; ++i) dens[i] = (i == 0 && d > 1) ? 0.0 : std::exp(logd[i] - peak);
    if (d == 1) dens[0] = std::exp(gen_.log_xi(0.0) - peak);
    for (int i = 1; i <= n_grid; ++i)
      radial_cdf_[i] = radial_cdf_[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (radial_t_[i] - radial_t_[i - 1]);
    double total = radial_cdf_.back();
    for (double& c : radial_cdf_) c /= total;
  }
}

double EllipticalDensity::half_quad(const Vec& x) const {
  Vec z = chol_l_.triangularView<Eigen::Lower>().solve(x - mu_);
  return 0.5 * z.squaredNorm();
}

double EllipticalDensity::log_pdf(const Vec& x) const {
  if (x.size() != mu_.size()) throw ConfigError("point dimension does not match density");
  return log_cd_ - 0.5 * log_det_ + gen_.log_xi(half_quad(x));
}

double EllipticalDensity::sample_radius_sq(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  auto it = std::upper_bound(radial_cdf_.begin(), radial_cdf_.end(), u);
  std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - radial_cdf_.begin()), 1, radial_cdf_.size() - 1);
  double c0 = radial_cdf_[i - 1], c1 = radial_cdf_[i];
  double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  double w = radial_t_[i - 1] + frac * (radial_t_[i] - radial_t_[i - 1]);
  return 2.0 * w * w;  // R^2 = 2T = 2W^2
}

Mat EllipticalDensity::sample(int m, Rng& rng) const {
  if (m < 1) throw ConfigError("sample size must be at least 1");
  const Eigen::Index d = mu_.size();
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat out(m, d);
  Vec z(d);
  for (int r = 0; r < m; ++r) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = nd(rng);
    if (!gen_.is_gaussian()) z *= std::sqrt(sample_radius_sq(rng)) / z.norm();
    out.row(r) = (mu_ + chol_l_ * z).transpose();
  }
  return out;
}

Density1DPtr EllipticalDensity::project(const Vec& a) const {
  if (a.size() != mu_.size()) throw ConfigError("direction dimension does not match density");
  if (!(a.norm() > 0.0)) throw ConfigError("projection direction must be nonzero");
  double var = a.dot(sigma_ * a);
  return std::make_shared<EllipticalDensity1D>(a.dot(mu_), std::sqrt(var), gen_.marginal(dim(), 1));
}

EllipticalDensity EllipticalDensity::marginal(const std::vector<int>& keep) const {
  if (keep.empty()) throw ConfigError("marginal index set must be nonempty");
  const int k = static_cast<int>(keep.size());
  Vec m(k);
  Mat s(k, k);
  for (int i = 0; i < k; ++i) {
    if (keep[i] < 0 || keep[i] >= dim()) throw ConfigError("marginal index out of range");
    m[i] = mu_[keep[i]];
    for (int j = 0; j < k; ++j) s(i, j) = sigma_(keep[i], keep[j]);
  }
  return EllipticalDensity(m, s, gen_.marginal(dim(), k));
}

EllipticalDensity EllipticalDensity::conditional(const std::vector<int>& given, const Vec& values) const {
  const int d = dim();
  const int g = static_cast<int>(given.size());
  if (g == 0 || g >= d) throw ConfigError("conditioning set must be a proper nonempty subset");
  if (values.size() != g) throw ConfigError("conditioning values do not match the index set");
  std::vector<bool> is_given(d, false);
  for (int idx : given) {
    if (idx < 0 || idx >= d || is_given[idx]) throw ConfigError("conditioning index out of range or repeated");
    is_given[idx] = true;
  }
  std::vector<int> rest;
  for (int i = 0; i < d; ++i)
    if (!is_given[i]) rest.push_back(i);
  const int r = static_cast<int>(rest.size());
  Mat s11(r, r), s12(r, g), s22(g, g);
  Vec m1(r), m2(g);
  for (int i = 0; i < r; ++i) {
    m1[i] = mu_[rest[i]];
    for (int j = 0; j < r; ++j) s11(i, j) = sigma_(rest[i], rest[j]);
    for (int j = 0; j < g; ++j) s12(i, j) = sigma_(rest[i], given[j]);
  }
  for (int i = 0; i < g; ++i) {
    m2[i] = mu_[given[i]];
    for (int j = 0; j < g; ++j) s22(i, j) = sigma_(given[i], given[j]);
  }
  Eigen::LLT<Mat> llt(s22);
  if (llt.info() != Eigen::Success) throw NumericalError("conditioning block is singular");
  Vec diff = values - m2;
  Vec mu_c = m1 + s12 * llt.solve(diff);
  Mat sig_c = s11 - s12 * llt.solve(s12.transpose());
  double shift = 0.5 * diff.dot(llt.solve(diff));
  return EllipticalDensity(mu_c, 0.5 * (sig_c + sig_c.transpose()), gen_.marginal(d, d).conditional(shift));
}

ProductDensity::ProductDensity(Mat basis_rows, std::vector<Density1DPtr> factors,
                               std::shared_ptr<const EllipticalDensity> elliptical)
    : a_(std::move(basis_rows)), factors_(std::move(factors)), elliptical_(std::move(elliptical)) {
  const Eigen::Index d = a_.rows();
  if (a_.cols() != d || d < 1) throw ConfigError("basis must be a square matrix");
  const Eigen::Index j = static_cast<Eigen::Index>(factors_.size());
  const Eigen::Index rest = elliptical_ ? elliptical_->dim() : 0;
  if (j + rest != d) throw ConfigError("factor count plus elliptical dimension must equal d");
  Eigen::FullPivLU<Mat> lu(a_);
  if (!lu.isInvertible()) throw ConfigError("directions do not form a basis");
  a_inv_ = lu.inverse();
  log_abs_det_ = std::log(std::abs(lu.determinant()));
}

double ProductDensity::log_pdf(const Vec& x) const {
  if (x.size() != a_.cols()) throw ConfigError("point dimension does not match density");
  Vec y = a_ * x;
  const Eigen::Index j = static_cast<Eigen::Index>(factors_.size());
  double lp = log_abs_det_;
  for (Eigen::Index i = 0; i < j; ++i) lp += factors_[i]->log_pdf(y[i]);
  if (elliptical_) lp += elliptical_->log_pdf(y.tail(a_.rows() - j));
  return lp;
}

Mat ProductDensity::sample(int m, Rng& rng) const {
  if (m < 1) throw ConfigError("sample size must be at least 1");
  const Eigen::Index d = a_.rows();
  const Eigen::Index j = static_cast<Eigen::Index>(factors_.size());
  Mat y(m, d);
  for (int r = 0; r < m; ++r)
    for (Eigen::Index i = 0; i < j; ++i) y(r, i) = factors_[i]->sample(rng);
  if (elliptical_) y.rightCols(d - j) = elliptical_->sample(m, rng);
  return y * a_inv_.transpose();
}

Density1DPtr ProductDensity::project(const Vec& a) const {
  if (a.size() != a_.cols()) throw ConfigError("direction dimension does not match density");
  if (!(a.norm() > 0.0)) throw ConfigError("projection direction must be nonzero");
  // a'x = w'y with w = A^{-T} a
  Vec w = a_inv_.transpose() * a;
  const Eigen::Index d = a_.rows();
  const Eigen::Index j = static_cast<Eigen::Index>(factors_.size());
  const double tol = 1e-12 * w.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < j; ++i)
    if (std::abs(w[i]) > tol) active.push_back(i);
  bool ell_active = elliptical_ && w.tail(d - j).cwiseAbs().maxCoeff() > tol;
  if (active.empty() && ell_active) return elliptical_->project(w.tail(d - j));
  if (active.size() == 1 && !ell_active) return std::make_shared<AffineDensity1D>(factors_[active[0]], w[active[0]], 0.0);
  Rng rng = make_rng(0x5eedULL, 17);
  Mat s = sample(20000, rng);
  Vec t = s * a;
  return std::make_shared<SampledDensity1D>(std::vector<double>(t.data(), t.data() + t.size()));
}

Mat sample(const AnalyticDensity& dist, int m, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return dist.sample(m, rng);
}

EllipticalDensity moment_match_instrumental(const Mat& sample, const Generator& gen) {
  const Eigen::Index m = sample.rows(), d = sample.cols();
  if (m <= d) throw ConfigError("moment matching needs more observations than dimensions");
  Vec mean = sample.colwise().mean().transpose();
  Mat centered = sample.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * centered / static_cast<double>(m - 1);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  double top = es.eigenvalues().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300)))
    throw NumericalError("sample covariance is singular; regularize the data (e.g. drop constant or collinear columns)");
  return EllipticalDensity(mean, cov / gen.second_moment_factor(static_cast<int>(d)), gen);
}

std::shared_ptr<const ProductDensity> simulation_density(int which) {
  switch (which) {
    case 1: {
      Mat a(3, 3);
      a << 1, 0, 1,  //
          1, 1, 0,   //
          0, 1, 1;
      std::vector<Density1DPtr> factors{std::make_shared<GumbelDensity1D>(-3.0, 4.0),
                                        std::make_shared<GumbelDensity1D>(1.0, 1.0)};
      auto normal = std::make_shared<EllipticalDensity>(Vec::Constant(1, -5.0), Mat::Constant(1, 1, 4.0));
      return std::make_shared<ProductDensity>(a, factors, normal);
    }
    case 2:
    case 3: {
      const int d = which == 2 ? 10 : 20;
      std::vector<Density1DPtr> factors{std::make_shared<GumbelDensity1D>(-5.0, 1.0)};
      auto normal = std::make_shared<EllipticalDensity>(Vec::Zero(d - 1), Mat::Identity(d - 1, d - 1));
      return std::make_shared<ProductDensity>(Mat::Identity(d, d), factors, normal);
    }
    default:
      throw ConfigError("unknown simulation preset " + std::to_string(which));
  }
}

int simulation_default_m(int which) {
  switch (which) {
    case 1:
    case 2:
      return 50;
    case 3:
      return 100;
    default:
      throw ConfigError("unknown simulation preset " + std::to_string(which));
  }
}

Mat simulation_sample(int which, int m, std::uint64_t seed) {
  auto f = simulation_density(which);
  Mat x = sample(*f, m, seed);
  if (which == 3) {
    const int n_out = static_cast<int>(std::lround(0.04 * m));
    Vec outlier = Vec::Zero(f->dim());
    outlier[0] = 2.0;
    for (int r = m - n_out; r < m; ++r) x.row(r) = outlier.transpose();
  }
  return x;
}

}  // namespace ppfactor
