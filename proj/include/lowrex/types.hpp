#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lowrex {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/* Relative singular value cutoff for pseudo-inverses and rank decisions. */
inline constexpr double kSvdCutoff = 1e-10;

/* Precondition violations (dimensions, invalid parameters, bad config). */
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/* Operation not defined for the given regularizer kind. */
struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/* Constraint set empty or numerically unreachable. */
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace lowrex
