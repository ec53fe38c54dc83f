#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ppfactor/direction.hpp"
#include "ppfactor/types.hpp"

namespace ppfactor {

enum class Sense { Minimize, Maximize };

struct AnnealConfig {
  int n_steps = 4000;
  double initial_temp = 1.0;  // multiplied by the interquartile range of probe values
  double cooling = 0.995;
  double proposal_sigma = 0.3;
  double min_sigma_fraction = 0.05;  // proposal scale never shrinks below this share of proposal_sigma
  int n_restarts = 4;
  int n_probes = 50;
  std::uint64_t rng_seed = 1;
  int polish_steps = 200;
  int trace_stride = 10;

  void validate() const;  // throws ConfigError
};

struct TracePoint {
  int restart = 0;
  int step = 0;
  double temperature = 0.0;
  double value = 0.0;  // running best of the restart
};

struct OptResult {
  Direction best_direction;
  double best_value = 0.0;
  std::vector<TracePoint> trace;
  int n_evals = 0;
  int n_nonfinite = 0;
  bool converged = false;
};

using Objective = std::function<double(const Vec&)>;

// Simulated annealing on the unit sphere. If `orthogonal_to` has columns, the search is
// restricted to their orthogonal complement. Restarts run in parallel with their own streams.
OptResult anneal(const Objective& objective, Sense sense, const AnnealConfig& cfg, int d,
                 const Mat& orthogonal_to = Mat());

// Coordinate search in the tangent space with a halving step. Never worsens the start value.
OptResult polish(const Objective& objective, const Vec& start, Sense sense, int steps, double initial_step = 0.1,
                 const Mat& orthogonal_to = Mat());

}  // namespace ppfactor
