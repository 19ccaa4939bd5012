#pragma once

#include "nss/models.hpp"
#include "nss/opcore.hpp"
#include "nss/regcalc.hpp"
#include "nss/spectral.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace nss {

// Eigen-coordinates of H with the point spectrum masked exactly, so that
// e^{itH} Pi_ac never amplifies roundoff left on discrete modes. Falls back
// to Pade propagators and the assembled Pi_ac when V is ill conditioned.
class ModalBasis {
 public:
  ModalBasis(const OperatorModel& model, const SpectralData& data, double max_cond = 1e8);

  const OperatorModel& model() const { return *model_; }
  bool spectral() const { return spectral_; }
  const Diagonalization& diag() const { return diag_; }
  // ac_mask[a] = 1 when eigenvector a lies in Ran Pi_ac.
  const std::vector<char>& ac_mask() const { return mask_; }
  const Mat& Pi_ac() const { return Pi_ac_; }

  // e^{-itH} Pi_ac U.
  Mat evolve_ac(double t, const Mat& U) const;
  // f(H) Pi_ac for f given on the eigenvalues.
  Mat function_ac(const std::function<cplx(cplx)>& f) const;
  // Largest and smallest decay rate -Im d over the ac eigenvalues.
  double max_imag_ac() const;
  double min_imag_ac() const;

 private:
  const OperatorModel* model_;
  Diagonalization diag_;
  std::vector<char> mask_;
  Mat Pi_ac_;
  bool spectral_ = false;
};

// W_sign(left, right): limit t -> sign * inf of e^{itL} A e^{-itR}.
enum class WavePair { H_H0, Hstar_H0, H0_H, H0_Hstar };

struct WaveKind {
  WavePair pair = WavePair::H_H0;
  int sign = +1;
  bool local = false;  // A = (h 1_I)(H); pairs H_H0 and H0_H only
  std::string label() const;
};

struct CookOptions {
  double T_max = 100.0;
  double window = 5.0;        // Cauchy window; checkpoints at multiples of it
  double tail_tol = 1e-3;
  double dt = 0.0;            // Simpson step; 0 selects the exact-in-time evaluation
  int gaussians = 16;         // probe basis: standard basis plus this many Gaussians
  std::uint64_t seed = 42;
  double growth_budget = 1e12;  // cap on the a-priori norm of e^{itL} and e^{-itR}
  std::vector<double> t_samples = {1.0, 5.0, 20.0};  // intertwining check
  bool strict = true;         // throw NoCauchyDecay
};

struct WaveOperatorResult {
  WaveKind kind;
  Mat matrix;
  double T_used = 0.0;
  double tail_norm = 0.0;
  double intertwining_residual = std::numeric_limits<double>::quiet_NaN();
  double min_sv_on_ac = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;         // tail <= tail_tol and decreasing over the last 3 windows
  bool no_cauchy_decay = false;  // tail(T_max) > tail(T_max / 2) / 10 without acceptance
  double T_budget = 0.0;         // largest T allowed by growth_budget
  bool budget_limited = false;
  bool spectral = false;
  std::vector<double> checkpoints;  // window ends
  std::vector<double> tails;        // increment norm over the window ending there
};

// Family t -> W(t) = e^{i sign t L} A e^{-i sign t R} for one kind.
class WaveFamily {
 public:
  WaveFamily(const OperatorModel& model, const ModalBasis& basis, const Mat& A_on_H, WaveKind kind);

  const WaveKind& kind() const { return kind_; }
  // A as an operator (t = 0).
  Mat A() const;
  // W at time sign * t, t >= 0.
  Mat at(double t) const;
  // Simpson approximation of A + i int_0^{sign t} e^{isL} (LA - AR) e^{-isR} ds.
  Mat simpson(double t, double dt) const;
  // e^{isL} U and e^{isR} U.
  Mat left_group(double s, const Mat& U) const;
  Mat right_group(double s, const Mat& U) const;
  Mat left_operator() const;
  Mat right_operator() const;
  // A-priori bound on ||e^{i sign t L}|| ||e^{-i sign t R}|| restricted to the masked modes.
  double growth(double t) const;
  bool spectral() const { return spectral_; }

 private:
  struct Side {
    bool is_h0 = false;
    bool star = false;  // H* instead of H
  };
  const OperatorModel* model_;
  const ModalBasis* basis_;
  WaveKind kind_;
  Side left_, right_;
  bool spectral_ = false;
  // Spectral path: W(t) = Pl diag(e^{i s t l}) At diag(e^{-i s t r}) Pr^{-1}.
  Mat Pl_, Pl_inv_, Pr_, Pr_inv_, At_;
  Vec l_, r_;
  // Fallback path.
  Mat A_;
};

// A for each non-local kind: Pi_ac(H) r_{-sign}(H) for W_sign(H, H0),
// Pi_ac(H) r_{sign}(H) for W_sign(H0, H), and the adjoints for the H* pairs,
// so that W_sign(H, H0)^* = W_sign(H0, H^*) holds term by term.
Mat wave_symbol(const ModalBasis& basis, const Regularizer& reg, const WaveKind& kind);

WaveOperatorResult cook_wave_operator(const OperatorModel& model, const SpectralData& data, const Regularizer& reg,
                                      WaveKind kind, const CookOptions& opt = {});
// Same with a precomputed basis (several kinds share one eigendecomposition).
WaveOperatorResult cook_wave_operator(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                      WaveKind kind, const CookOptions& opt = {});

// Local operator with A = (h 1_I)(H) from the regularized calculus.
WaveOperatorResult local_wave_operator(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                       const IntervalCalc& calc, WaveKind kind, const CookOptions& opt = {});

// max over t and probes of ||e^{itL} W u - W e^{itR} u|| / ||u||.
double intertwining_residual(const WaveOperatorResult& result, const WaveFamily& family,
                             const std::vector<double>& t_samples, const Mat& probes);
// ||L W u - W R u|| / ||u|| over probes, relative to ||L||.
double generator_intertwining_residual(const WaveOperatorResult& result, const WaveFamily& family, const Mat& probes);

struct AdjointPairReport {
  int sign = +1;
  double adjoint_residual = 0.0;  // ||W_s(H,H0)^* - W_s(H0,H^*)||
  double budget = 0.0;            // 2 (tail_1 + tail_2)
  // ||W_s(H,H0)||, ||W_s(H0,H^*)||, ||W_-s(H^*,H0)||, ||W_-s(H0,H)||
  double norms[4] = {0, 0, 0, 0};
  double norm_spread = 0.0;       // max - min of the four
  double kernel_residual = 0.0;   // max ||W_s(H0,H^*) v|| over unit v in Hi_p(H^*)
  bool pass = false;
};

AdjointPairReport adjoint_pair_check(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                     int sign, const CookOptions& opt = {});

struct CompletenessReport {
  int sign = +1;
  bool hypothesis_holds = true;  // no singular factor in the regularizer of W_sign(H, H0)
  double min_sv_on_ac = 0.0;     // sigma_{n - rank_p} of W_sign(H, H0)
  double baseline_min_sv = 0.0;  // same for A = W(0)
  double composition_inverse = 0.0;  // ||W_s(H,H0) W_s(H0,H) u - u|| on ac probes
  double composition_adjoint = 0.0;  // ||W_s(H,H0) W_s(H0,H^*) u - u|| on ac probes
  double composition_best = 0.0;
  double similarity_residual = 0.0;  // ||H u - W H0 W^{-1} u|| / ||H|| on ac probes
  double T = 0.0;
};

// sign = -1 examines W_-(H, H0), the operator regularized by r_+ (outgoing side).
CompletenessReport completeness_check(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                      const CookOptions& opt = {}, int sign = +1);

struct SemigroupBounds {
  double m1 = 0.0, m2 = 0.0;
  double t_min = 0.0, t_max = 0.0;
};

// Extremes of ||e^{-itH} u|| / ||u|| over t_grid and ac-range probes.
SemigroupBounds semigroup_bounds(const ModalBasis& basis, const std::vector<double>& t_grid, const Mat& probes);
SemigroupBounds semigroup_bounds(const OperatorModel& model, const SpectralData& data, const std::vector<double>& t_grid,
                                 int gaussians = 16, std::uint64_t seed = 42);

struct SmoothnessOptions {
  double T = 80.0;
  int gaussians = 16;
  std::uint64_t seed = 42;
  double tail_fraction = 0.05;  // allowed share of the [T/2, T] piece
  double eps = 0.0;             // Parseval damping; 0 selects max(1/T, min eps-floor)
  bool strict = true;           // throw TailNotConverged
};

struct SmoothnessReport {
  int side = -1;  // -1: e^{-itH} with r_+; +1: e^{+itH} with r_-
  double T = 0.0;
  double constant_time_domain = 0.0;
  double constant_half_T = 0.0;
  double tail_fraction = 0.0;
  bool tail_converged = false;
  double constant_freq_domain = 0.0;
  double eps = 0.0;
  double ratio = 0.0;  // time / frequency
  double c0_H0 = 0.0;
};

// sup over probes of int_0^T ||C r e^{side itH} Pi_ac u||^2 dt / ||u||^2, exact in
// time on the spectral path (Gram kernel), Simpson otherwise.
SmoothnessReport kato_smoothness(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                 int side, const SmoothnessOptions& opt = {});

// c0^2 = 2 sup_lambda ||C Im R0(lambda + i eps) C|| over a band grid at eps-floor.
double free_smoothness_constant(const OperatorModel& model, int grid_points = 48);

}  // namespace nss
