#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace nss {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

enum class ErrorCode {
  NonConvergence,
  IllConditioned,
  SingularShift,
  OverflowRisk,
  NoConvergence,
  SupportViolation,
  GridTooCoarse,
  InfeasibleSpec,
  AmbiguousClassification,
  ContourTouchesSpectrum,
  DegenerateBilinearForm,
  UnresolvedOrder,
  StepTooCoarse,
  PoleAtBasePoint,
  QuadratureNotConverged,
  NoCauchyDecay,
  TailNotConverged,
  ConfigError,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

// Every hard failure in the library is one of these. `detail` carries the
// quantity that triggered it (gap, pivot, distance, ...) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, double detail = 0.0)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        detail_(detail) {}
  ErrorCode code() const noexcept { return code_; }
  double detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  double detail_;
};

// Worker count: NSS_THREADS if set and positive, else hardware concurrency.
unsigned thread_count();

// Runs fn(i) for i in [0, n). Each index must write only its own output slot;
// callers reduce afterwards in index order, so results never depend on
// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nss
