#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kgzsl {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatXd = MatX<double>;
using VecXd = VecX<double>;
using Index = Eigen::Index;

// Error taxonomy. The CLI maps Parse/Validation/Config/Usage to exit code 2
// and Training/Structural/Capability to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape or graph-structure mismatch.
struct StructuralError : Error {
  using Error::Error;
};
// Caller violated an operation precondition.
struct UsageError : Error {
  using Error::Error;
};
// Input data failed validation.
struct ValidationError : Error {
  using Error::Error;
};
// Malformed file; message carries the line number where known.
struct ParseError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
// Divergence during optimization; message carries the epoch/step index.
struct TrainingError : Error {
  using Error::Error;
};
// Requested differentiation outside the supported operation subset.
struct CapabilityError : Error {
  using Error::Error;
};

template <class Scalar>
MatX<Scalar> cast_matrix(const MatXd& m) {
  return m.template cast<Scalar>();
}

}  // namespace kgzsl
