#pragma once

#include "nss/common.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <optional>
#include <vector>

namespace nss {

// One eigenvalue cluster. Each chain is stored bottom-up:
// chain[0] is an eigenvector and (A - lambda) chain[k+1] = chain[k].
struct EigenCluster {
  cplx lambda;
  int alg_mult = 0;
  int geo_mult = 0;
  std::vector<std::vector<Vec>> chains;
  double chain_residual = 0.0;  // max over chain links, relative to ||A||
};

struct JordanSpectralData {
  std::vector<EigenCluster> clusters;  // sorted by (Re, Im)
  double norm = 0.0;                   // ||A||_2 of the decomposed matrix
  double cluster_tol = 0.0;            // absolute radius used for merging

  int dim() const;
  std::vector<cplx> eigenvalues() const;
  // Columns are all chain vectors, cluster by cluster, chain by chain.
  Mat basis() const;
  // Column range of `basis()` owned by cluster i.
  std::pair<int, int> columns_of(std::size_t i) const;
  // A rebuilt from chains: X J X^{-1}.
  Mat reconstruct() const;
  // Spectral projection onto cluster i built from the chain basis.
  Mat projection(std::size_t i) const;
};

// tol is relative to ||A||; nearby eigenvalues are also merged when their
// eigenvectors are nearly parallel, which is how a perturbed Jordan block
// presents itself in floating point.
JordanSpectralData eig_decompose(const Mat& A, double tol = 1e-8);

// Thin wrapper around the diagonalization used by fast paths: A = V diag(d) V^{-1}.
struct Diagonalization {
  Vec d;
  Mat V;
  Mat Vinv;
  double cond = 0.0;  // 2-norm condition number of V (columns unit length)
  bool usable(double max_cond = 1e6) const { return cond < max_cond; }
};
Diagonalization diagonalize(const Mat& A);

template <typename Derived, typename DerivedB>
Mat solve_shifted(const Eigen::MatrixBase<Derived>& A, cplx z,
                  const Eigen::MatrixBase<DerivedB>& B) {
  const Eigen::Index n = A.rows();
  Mat shifted = A.template cast<cplx>();
  shifted.diagonal().array() -= z;
  const double scale = std::max(shifted.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
  Eigen::PartialPivLU<Mat> lu(shifted);
  double min_pivot = std::abs(lu.matrixLU()(0, 0));
  for (Eigen::Index i = 1; i < n; ++i)
    min_pivot = std::min(min_pivot, std::abs(lu.matrixLU()(i, i)));
  if (min_pivot <= 1e-14 * scale)
    throw Error(ErrorCode::SingularShift, "shift is numerically an eigenvalue",
                min_pivot / scale);
  return lu.solve(B.template cast<cplx>());
}

// Factored (A - z) reused across right-hand sides.
class ShiftedSolver {
 public:
  ShiftedSolver(const Mat& A, cplx z);
  Mat solve(const Mat& B) const { return lu_.solve(B); }
  Mat inverse() const { return lu_.inverse(); }

 private:
  Eigen::PartialPivLU<Mat> lu_;
};

// Smallest singular value; exact zero for rank-deficient inputs up to roundoff.
template <typename Derived>
double min_singular_value(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return 0.0;
  using Dense = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (A.rows() <= 32 && A.cols() <= 32) {
    Eigen::JacobiSVD<Dense> svd(A);
    return svd.singularValues().tail(1)(0);
  }
  Eigen::BDCSVD<Dense> svd(A);
  return svd.singularValues().tail(1)(0);
}

template <typename Derived>
RVec singular_values(const Eigen::MatrixBase<Derived>& A) {
  Eigen::BDCSVD<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(A);
  return svd.singularValues();
}

template <typename Derived>
double norm2(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return 0.0;
  return singular_values(A)(0);
}

// e^{-itA}: spectral path when V is well conditioned, Pade scaling and
// squaring otherwise. The decomposition is computed once per instance.
class Propagator {
 public:
  explicit Propagator(const Mat& A, double max_cond = 1e6);

  Vec apply(double t, const Vec& u) const;
  Mat apply(double t, const Mat& U) const;
  Mat matrix(double t) const;
  // Upper bound on ||e^{-itA}||; throws OverflowRisk above 1e30.
  double growth_bound(double t) const;
  bool spectral() const { return spectral_; }
  const Diagonalization& diag() const { return diag_; }

 private:
  Mat A_;
  Diagonalization diag_;
  bool spectral_ = false;
  double norm_ = 0.0;
};

Vec propagate(const Mat& A, double t, const Vec& u);

struct ContourSpec {
  cplx center;
  double radius = 1.0;
  int nodes = 32;
};

struct ContourResult {
  Mat value;
  int nodes_used = 0;
  double last_change = 0.0;
};

// Throws ContourTouchesSpectrum if an eigenvalue lies within radius*1e-3 of
// the circle.
void check_contour(const std::vector<cplx>& eigenvalues, const ContourSpec& spec);

// (1/2 pi i) times the closed integral of f over the circle, trapezoid rule with
// node doubling until successive results agree to 1e-10 (relative to
// max(1, ||result||)); cap 2^14 nodes.
ContourResult contour_integral(const std::function<Mat(cplx)>& f, const ContourSpec& spec);

}  // namespace nss
