#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppfactor/divergence.hpp"
#include "ppfactor/optimizer.hpp"
#include "ppfactor/transformed.hpp"

namespace ppfactor {

enum class ThresholdMode {
  Paper,      // quantile Phi^{-1}(1.5 - alpha): 0.2533 at alpha = 0.9
  Corrected,  // quantile Phi^{-1}(alpha): 1.2816 at alpha = 0.9
};

const char* threshold_mode_name(ThresholdMode m);
double threshold_quantile(double alpha, ThresholdMode mode);
// Probability of accepting H0 when sqrt(n) * s is standard normal.
double nominal_acceptance(double alpha, ThresholdMode mode);

struct StopTestResult {
  double statistic = 0.0;  // s = value / sqrt(variance)
  double z = 0.0;          // sqrt(n) * s
  double p_value = 1.0;    // 1 - Phi(z)
  double alpha = 0.0;
  ThresholdMode mode = ThresholdMode::Corrected;
  double quantile = 0.0;
  double threshold = 0.0;  // quantile / sqrt(n)
  bool in_ellipsoid = false;
  bool in_ellipsoid_paper = false;
  bool in_ellipsoid_corrected = false;
  bool degenerate = false;
  bool stop = false;
};

StopTestResult stop_test(const CriterionValue& cv, double alpha, ThresholdMode mode);
StopTestResult stop_test(const CriterionContext& ctx, const Vec& b, double alpha, ThresholdMode mode,
                         Method method = Method::Ours);

struct SamplingStats {
  int proposals = 0;
  int accepted = 0;
  int envelope_violations = 0;
  double log_envelope = 0.0;
  double acceptance_rate() const { return proposals > 0 ? static_cast<double>(accepted) / proposals : 1.0; }
};

// Rejection sampling from g^(k) with the base density as proposal.
// Approximate draws from g^(k) by sampling-importance-resampling from the base density.
// Never rejects, so it stays cheap when the rejection envelope is loose.
Mat resample_transformed(const TransformedDensity& gk, int m, std::uint64_t seed);
Mat sample_transformed(const TransformedDensity& gk, int m, std::uint64_t seed, SamplingStats* stats = nullptr,
                       int pilot = 10000);

// Importance-sampling estimate of the integral of g^(k) (1 for an exact density).
KlEstimate normalization_constant(const TransformedDensity& gk, int n_mc, std::uint64_t seed);

// K(normalized estimate, truth), sampling the estimate by rejection.
KlEstimate kl_to_truth(const TransformedDensity& estimate, const AnalyticDensity& truth, int n_mc,
                       std::uint64_t seed);

struct PursuitConfig {
  Method method = Method::Ours;
  double alpha = 0.9;
  double nu = -1.0;  // negative selects 0.8 / (4 + d)
  FloorMode floor_mode = FloorMode::LikelihoodRatio;
  ThresholdMode threshold_mode = ThresholdMode::Corrected;
  int k_max = -1;  // negative selects d
  bool stop_on_initial_test = true;
  bool orthogonalize = false;
  double y_factor = 1.0;  // size of each instrumental sample relative to m
  // Resampled draws from g^(k-1) behind the denominator of each factor after the first;
  // 0 reuses the criterion's instrumental sample.
  int marginal_draws = 20000;
  CriterionOptions criterion;
  AnnealConfig anneal;
  std::uint64_t seed = 1;

  void validate(int d) const;
  double resolved_nu(int d) const { return nu > 0.0 ? nu : 0.8 / (4.0 + d); }
};

struct IterationRecord {
  int k = 0;
  Vec direction;
  Vec paper_style_direction;
  CriterionValue criterion;  // the method's own criterion at the direction
  CriterionValue ours;       // K(g^(k), f) estimate at the direction
  StopTestResult test;
  bool applied = false;  // whether the factor entered the reported density
  int n_kept = 0;
  double theta = 0.0;
  SamplingStats sampling;
  OptResult anneal;
  OptResult polish;
};

struct PursuitReport {
  Method method = Method::Ours;
  std::uint64_t seed = 0;
  int d = 0;
  int m = 0;
  double nu = 0.0;
  CriterionValue initial_criterion;
  StopTestResult initial_test;
  int initial_n_kept = 0;
  std::vector<IterationRecord> iterations;
  TransformedDensity final_density;
  std::vector<double> kl_trace;
  std::vector<double> kl_trace_se;
  int stop_k = 0;          // index j of the reported g^(j)
  bool stopped_by_test = false;
  double max_abs_cos = 0.0;  // largest |a_i . a_j| among applied directions
  std::vector<std::string> warnings;
  bool failed = false;
  std::string failure;

  explicit PursuitReport(TransformedDensity g) : final_density(std::move(g)) {}
  std::string conclusion() const;
};

// Builds the truncated samples and criterion context for g^(k); exposed for tests.
CriterionContext build_context(const Mat& f_sample, const TransformedDensity& gk, const PursuitConfig& cfg,
                               std::uint64_t seed, SamplingStats* stats = nullptr, TruncatedSample* trunc_out = nullptr,
                               AnalyticPtr f_oracle = nullptr);

PursuitReport run_pursuit(const Mat& f_sample, std::shared_ptr<const EllipticalDensity> g, const PursuitConfig& cfg,
                          AnalyticPtr f_oracle = nullptr);

}  // namespace ppfactor
