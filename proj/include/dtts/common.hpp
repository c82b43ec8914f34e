#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtts {

// All matrices are row-major: rows index time (or tokens), columns index
// channels. Vectors are stored as N x 1 matrices.
template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad caller-supplied data (shape mismatch, empty input, malformed file).
struct InputError : Error {
  using Error::Error;
};

// Bad configuration value (f_min >= f_max, negative counts, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem / serialization failures.
struct IoError : Error {
  using Error::Error;
};

// Unknown speaker/language/token id.
struct LookupError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InputError(msg);
}

}  // namespace dtts
