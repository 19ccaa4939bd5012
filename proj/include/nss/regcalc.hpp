#pragma once

#include "nss/models.hpp"
#include "nss/opcore.hpp"
#include "nss/singular.hpp"
#include "nss/spectral.hpp"

#include <optional>
#include <vector>

namespace nss {

// r_j(z) = (z - lambda_j)^{nu_j} / (z - z0)^{nu_j}, r_inf(z) = (z - z0)^{-nu_inf}.
struct Regularizer {
  std::vector<SingularityRecord> singularities;
  cplx z0;
  int nu_inf = 0;
};

// Default z0 = band center + i * band length. Checks Im z0 != 0, nu_j >= 1 and
// the 0.1 * band-length clearance from the band and from `spectrum`.
Regularizer make_regularizer(const OperatorModel& model, std::vector<SingularityRecord> singularities,
                             const std::vector<cplx>& spectrum, int nu_inf = 0,
                             std::optional<cplx> z0 = std::nullopt);

struct RegSelector {
  enum class Kind { Single, Plus, Minus, All, Interval };
  Kind kind = Kind::All;
  std::size_t j = 0;  // Single
  Band I;             // Interval: factors with lambda_j in I

  static RegSelector single(std::size_t j) { return {Kind::Single, j, {}}; }
  static RegSelector plus() { return {Kind::Plus, 0, {}}; }
  static RegSelector minus() { return {Kind::Minus, 0, {}}; }
  static RegSelector all() { return {Kind::All, 0, {}}; }
  static RegSelector interval(Band I) { return {Kind::Interval, 0, I}; }
};

// Indices of the singularity factors a selector multiplies, and whether r_inf joins.
std::vector<std::size_t> selected_factors(const Regularizer& reg, const RegSelector& sel);
bool selects_infinity(const RegSelector& sel);

cplx reg_eval_scalar(const Regularizer& reg, const RegSelector& sel, cplx z);
Mat reg_eval_operator(const Regularizer& reg, const RegSelector& sel, const Mat& H);
inline Mat reg_eval_operator(const Regularizer& reg, const RegSelector& sel, const OperatorModel& model) {
  return reg_eval_operator(reg, sel, model.H);
}

// Both sides of r_j(H) - r_j(z) = B sum_k A^k a^{nu-1-k} with A = (H - lambda) R0,
// a = r_j(z)^{1/nu}, B = (H - z) R0 (lambda - z0)/(z - z0), R0 = (H - z0)^{-1}.
struct IdentitySides {
  Mat lhs;
  Mat rhs;
  double relative_residual() const;
};
IdentitySides factorization_identity(const Mat& H, cplx z, cplx lambda, int nu, cplx z0);
// r_inf(H) - r_inf(z) = -(H - z) R0/(z - z0) sum_k R0^k (z - z0)^{-(nu-1-k)}.
IdentitySides factorization_identity_infinity(const Mat& H, cplx z, int nu, cplx z0);

struct IntervalCalc {
  Band I;
  std::vector<std::size_t> h_factors;  // indices into reg.singularities with lambda_j in I
  double eps = 0.0;
  int quad_nodes = 8;                  // Gauss-Legendre nodes per panel (initial)
  double pad = 0.0;                    // extension beyond I at endpoints that are band edges
  bool include_infinity = false;       // h also carries r_inf
};

IntervalCalc make_interval_calc(const OperatorModel& model, const Regularizer& reg, Band I, double eps,
                                int quad_nodes = 8);

// Full band with h = full r (all factors and r_inf). Both ends are padded by
// max(8 eps, outside distance + 10 |Im| over the discrete eigenvalues), so
// every discrete pole pair is integrated across and cancels.
IntervalCalc full_band_calc(const OperatorModel& model, const Regularizer& reg, const Classification& cls,
                            double eps, int quad_nodes = 8);

// Default eps. Band levels need |Im| < eps/2 to be counted at both eps and
// eps/2; discrete eigenvalues need |Im| > eps to be excluded. With
// lo = 2.5 max|Im band level| and hi = 0.5 min|Im discrete| the result is
// max(lo, 2e-3 * min H0 spacing near I) capped by hi. Endpoint truncation
// error after extrapolation grows like (eps / endpoint distance)^3, so the
// smallest admissible eps is used.
double default_calc_eps(const OperatorModel& model, const Classification& cls, const Band& I);

struct QuadratureInfo {
  int nodes = 0;        // per eps evaluation, at the accepted order
  int panel_nodes = 0;  // accepted Gauss-Legendre order
  double change = 0.0;  // relative change at the last doubling
  bool spectral = false;
};

// (h 1_I)(H), or e^{itH}(h 1_I)(H) when t != 0, by Gauss-Legendre quadrature
// along Im z = +-eps and +-eps/2 and Richardson extrapolation 2P(eps/2) - P(eps).
Mat regularized_spectral_projection(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc,
                                    QuadratureInfo* info = nullptr);
Mat regularized_evolution(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc, double t,
                          QuadratureInfo* info = nullptr);

// ||r(H) - r(H) Pi_disc - (r 1_band)(H)|| in the operator 2-norm.
double resolution_of_identity_residual(const OperatorModel& model, const Regularizer& reg, const Mat& Pi_disc,
                                       const IntervalCalc& full_band);

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, RVec& x, RVec& w);

}  // namespace nss
