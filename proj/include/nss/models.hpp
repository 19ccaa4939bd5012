#pragma once

#include "nss/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nss {

struct Band {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
  bool contains(double x, double pad = 0.0) const { return x >= lo - pad && x <= hi + pad; }
};

struct Grid1D {
  double L = 0.0;
  int N = 0;
  double h = 0.0;  // 2L/(N-1)
  double x(int k) const { return -L + k * h; }
};

struct PotentialPiece {
  double a = 0.0;
  double b = 0.0;
  cplx value;
};

// Piecewise-constant potential; pieces may touch but the first matching piece
// wins on overlap. Zero outside every piece.
struct Potential1D {
  std::vector<PotentialPiece> pieces;

  cplx operator()(double x) const;
  double support_lo() const;
  double support_hi() const;
  double sup_abs() const;
  bool empty() const { return pieces.empty(); }
};

// J u = P conj(u) with P a signed permutation: (P v)_i = sign_i v_{perm_i}.
// Default: identity permutation, all signs +1.
struct Conjugation {
  std::vector<int> perm;
  std::vector<double> sign;

  static Conjugation identity(int n);
  Vec apply(const Vec& u) const;
  Mat apply(const Mat& U) const;
  // J M J as a linear map.
  Mat conjugate(const Mat& M) const;
  // Real signed-permutation matrix P.
  RMat matrix() const;
};

// Provenance of a toy model's planted features, kept for oracles and reports.
struct PlantedFeature {
  enum class Kind { Discrete, Embedded } kind;
  cplx lambda;
  int jordan = 1;
  bool degenerate = false;
  std::vector<int> indices;  // model-basis indices of the planted block
};

struct OperatorModel {
  std::string label;
  Mat H0, C, W;
  Mat H, Hstar;
  Conjugation J;
  Band ess_band;
  std::optional<Grid1D> grid;
  std::optional<Potential1D> potential;
  double delta = 0.0;
  std::vector<PlantedFeature> planted;
  double planting_tolerance = 0.0;

  // Eigen-decomposition of H0, ascending.
  RVec h0_levels;
  Mat h0_vectors;

  int dim() const { return static_cast<int>(H.rows()); }
  Mat V() const { return H - H0; }
  // Mean gap between consecutive H0 levels around lambda.
  double level_spacing(double lambda) const;
  double min_level_spacing(double lo, double hi) const;
};

// H = H0 + C W C plus the derived fields; checks the structural invariants.
OperatorModel assemble_model(std::string label, Mat H0, Mat C, Mat W, Conjugation J, Band band);

OperatorModel build_schrodinger_1d(double L, int N, const Potential1D& potential, double delta);

struct ToyDiscrete {
  cplx lambda;
  int jordan = 1;
};

struct ToyEmbedded {
  double lambda = 0.0;
  bool degenerate = false;  // plants an isotropic eigenvector, <J phi, phi> = 0
};

struct ToySpec {
  int n_band = 8;
  double band_max = 10.0;
  std::vector<ToyDiscrete> discrete;
  std::vector<ToyEmbedded> embedded;
  double coupling = 1e-4;
  double c_weight = 1.0;
  bool strict = true;  // InfeasibleSpec on a degenerate embedded planting
};

OperatorModel build_toy_model(const ToySpec& spec);

// Complex symmetric nilpotent matrix similar to the m x m Jordan shift.
Mat symmetric_nilpotent(int m);

struct HypothesisReport {
  // (a) sampled sup of ||C R0(z) C||
  double lap_sup = 0.0;
  cplx lap_argmax;
  double lap_sup_coarse = -1.0;  // same sup on the half-resolution grid, -1 if n/a
  int coarse_N = 0;
  // (b)
  int eigenvalue_count = 0;
  int discrete_count = 0;
  int embedded_count = 0;
  std::vector<std::pair<cplx, int>> multiplicities;  // non-band eigenvalues with m
  int lower_half_plane_count = 0;
  // (c)
  double h0_hermitian_residual = 0.0;
  double h0_min_eigenvalue = 0.0;
  double c_min_singular_value = 0.0;
  double jj_residual = 0.0;
  double jh0_residual = 0.0;
  double jc_residual = 0.0;
  double jw_residual = 0.0;
  double jh_residual = 0.0;
  // (d)
  struct Gram {
    cplx lambda;
    int m = 0;
    double det_eigvec = 0.0;      // |det G| on Ker(H - lambda)
    double det_generalized = 0.0; // |det G| on Ker((H - lambda)^m)
    bool degenerate = false;
  };
  std::vector<Gram> grams;
  std::vector<std::string> flags;
};

HypothesisReport validate_hypotheses(const OperatorModel& model, int probes);

}  // namespace nss
