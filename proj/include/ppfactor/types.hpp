#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ppfactor {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid user input: bad config values, malformed files, inconsistent sizes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical stage could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ppfactor
