#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace evsurf {

using Vec3 = Eigen::Vector3d;
using Mat = Eigen::MatrixXd;

/// Thrown on contract violations (bad arguments, malformed files, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on runtime failures (I/O errors, diverged training, ...).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace evsurf
