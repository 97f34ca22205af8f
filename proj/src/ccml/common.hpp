#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccml {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error kinds map onto CLI exit codes and C API status values.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

inline void require_dim(long got, long want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
}

inline Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace ccml
