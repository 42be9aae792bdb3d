#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gradflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Bad arguments or configuration; maps to CLI exit code 1.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (divergence, stiffness, non-convergence); CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A sampling chain produced a non-finite state.
struct DivergedChainError : NumericalError {
  explicit DivergedChainError(int step_index)
      : NumericalError("chain diverged at step " + std::to_string(step_index)),
        step(step_index) {}
  int step;
};

/// Fixed-point inversion of an Euler step failed to converge; the step map
/// is not a contraction at this point.
struct InvertibilityError : NumericalError {
  explicit InvertibilityError(int step_index)
      : NumericalError("fixed-point inversion did not converge at step " +
                       std::to_string(step_index)),
        step(step_index) {}
  int step;
};

/// Adaptive solver exceeded its step budget.
struct StiffnessError : NumericalError {
  StiffnessError() : NumericalError("adaptive solver exceeded max_steps") {}
};

/// Integration state became non-finite or escaped the working domain.
struct DivergenceError : NumericalError {
  using NumericalError::NumericalError;
};

/// Training aborted; carries the iteration at which it happened.
struct TrainDivergenceError : NumericalError {
  explicit TrainDivergenceError(long iter, const std::string& detail = "")
      : NumericalError("training diverged at iteration " +
                       std::to_string(iter) +
                       (detail.empty() ? "" : ": " + detail)),
        iteration(iter) {}
  long iteration;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gradflow
