#pragma once

#include "nss/models.hpp"
#include "nss/opcore.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nss {

// Outgoing probes approach the band from above (lambda + i eps), incoming from below.
enum class Side { Outgoing, Incoming };

inline double side_sign(Side s) { return s == Side::Outgoing ? 1.0 : -1.0; }
inline const char* to_string(Side s) { return s == Side::Outgoing ? "+" : "-"; }

// z -> ||C (H - z)^{-1} C W||, restricted to the nonzero columns of C W.
// Uses the eigenbasis of H when it is well conditioned, LU solves otherwise.
class BoundaryResolvent {
 public:
  explicit BoundaryResolvent(const OperatorModel& model, double max_cond = 1e8);

  double norm(cplx z) const;
  const std::vector<cplx>& eigenvalues() const { return eigs_; }
  bool spectral() const { return spectral_; }

 private:
  const OperatorModel* model_;
  std::vector<cplx> eigs_;
  bool spectral_ = false;
  Mat left_;   // C V (spectral) or C (direct)
  Mat right_;  // V^{-1} (C W)_S (spectral) or (C W)_S (direct)
  Vec d_;
};

struct ExponentFit {
  double exponent = 0.0;
  double r2 = 1.0;
};

// Least squares slope of log(norm) against log(1/eps) over the last half of
// the schedule. All-zero norms fit as exponent 0.
ExponentFit fit_exponent(const std::vector<double>& eps, const std::vector<double>& norms);

struct ScheduleOptions {
  int points = 12;
  double span = 8.0;          // eps_max / eps_floor
  double floor_factor = 2.0;  // eps_floor / local level spacing
};

// Twice the local level spacing of the quasi-continuum at lambda.
double epsilon_floor(const OperatorModel& model, double lambda, double floor_factor = 2.0);

// Geometric, strictly decreasing, from span * eps_floor down to eps_floor.
std::vector<double> default_schedule(const OperatorModel& model, double lambda, const ScheduleOptions& opt = {});

struct BoundaryResolventProbe {
  double lambda = 0.0;
  Side side = Side::Outgoing;
  std::vector<double> eps_schedule;
  std::vector<double> norms;
  double fitted_exponent = 0.0;
  double fit_r2 = 1.0;
  double eps_floor = 0.0;
  std::vector<cplx> nearby_eigenvalues;  // within eps_schedule.front() of lambda
};

BoundaryResolventProbe probe_point(const OperatorModel& model, double lambda, Side side,
                                   std::vector<double> schedule = {}, const BoundaryResolvent* ctx = nullptr);

struct SingularityRecord {
  double lambda = 0.0;
  Side side = Side::Outgoing;
  int nu = 1;
  double exponent = 0.0;
  bool unresolved = false;  // |exponent - nu| > window
  BoundaryResolventProbe evidence;
};

struct DetectOptions {
  ScheduleOptions schedule;
  double flag_threshold = 0.75;
  double regular_threshold = 0.25;
  double order_window = 0.3;
  double refine_tol = 1e-3;  // golden-section bracket width relative to the grid step
  double infinity_fraction = 0.9;
};

struct SingularityScan {
  std::vector<SingularityRecord> records;
  std::vector<BoundaryResolventProbe> grid_probes;  // both sides, grid order
  BoundaryResolventProbe infinity_probe[2];
  int nu_inf = 0;
};

SingularityScan detect_singularities(const OperatorModel& model, const std::vector<double>& grid,
                                     const DetectOptions& opt = {});

struct JostCoefficients {
  cplx a;  // coefficient of e^{ikx} left of the support
  cplx b;  // coefficient of e^{-ikx} left of the support
  int steps = 0;
  double richardson = 0.0;  // relative half-step difference
};

// Solution equal to e^{ikx} right of the support, integrated leftward with
// fixed-step RK4 (step <= support length / 2000, aligned with piece endpoints).
JostCoefficients jost_coefficients(const Potential1D& pot, cplx k);
cplx jost_function(const Potential1D& pot, cplx k);

struct RealResonance {
  double k = 0.0;
  int multiplicity = 1;
  double lambda = 0.0;  // k^2
  double residual = 0.0;
};

std::vector<RealResonance> find_real_resonances(const Potential1D& pot, double k_max, int scan_points = 400);

struct TunedWell {
  cplx c;
  double residual = 0.0;
  int iterations = 0;
};

// Newton iteration on c so that c * 1_[a,b] has a(k_star) = 0.
TunedWell tune_square_well(double a, double b, double k_star, cplx c0);

}  // namespace nss
