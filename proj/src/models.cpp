#include "nss/models.hpp"

#include "nss/opcore.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace nss {

cplx Potential1D::operator()(double x) const {
  for (const auto& p : pieces)
    if (x >= p.a && x <= p.b) return p.value;
  return 0.0;
}

double Potential1D::support_lo() const {
  double lo = INFINITY;
  for (const auto& p : pieces)
    if (p.value != 0.0) lo = std::min(lo, p.a);
  return lo;
}

double Potential1D::support_hi() const {
  double hi = -INFINITY;
  for (const auto& p : pieces)
    if (p.value != 0.0) hi = std::max(hi, p.b);
  return hi;
}

double Potential1D::sup_abs() const {
  double s = 0.0;
  for (const auto& p : pieces) s = std::max(s, std::abs(p.value));
  return s;
}

Conjugation Conjugation::identity(int n) {
  Conjugation J;
  J.perm.resize(n);
  J.sign.assign(n, 1.0);
  for (int i = 0; i < n; ++i) J.perm[i] = i;
  return J;
}

Vec Conjugation::apply(const Vec& u) const {
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = sign[i] * std::conj(u(perm[i]));
  return out;
}

Mat Conjugation::apply(const Mat& U) const {
  Mat out(U.rows(), U.cols());
  for (Eigen::Index i = 0; i < U.rows(); ++i) out.row(i) = sign[i] * U.row(perm[i]).conjugate();
  return out;
}

RMat Conjugation::matrix() const {
  const int n = static_cast<int>(perm.size());
  RMat P = RMat::Zero(n, n);
  for (int i = 0; i < n; ++i) P(i, perm[i]) = sign[i];
  return P;
}

Mat Conjugation::conjugate(const Mat& M) const {
  // J M J u = P conj(M P conj(u)) = P conj(M) P u for real P.
  const Mat P = matrix().cast<cplx>();
  return P * M.conjugate() * P;
}

double OperatorModel::level_spacing(double lambda) const {
  const Eigen::Index n = h0_levels.size();
  if (n < 2) return ess_band.length();
  const double* begin = h0_levels.data();
  Eigen::Index k = std::lower_bound(begin, begin + n, lambda) - begin;
  k = std::clamp<Eigen::Index>(k, 1, n - 1);
  // Gaps on both sides of lambda, averaged when both exist.
  double gap = h0_levels(k) - h0_levels(k - 1);
  if (k + 1 < n) gap = 0.5 * (gap + h0_levels(k + 1) - h0_levels(k));
  return gap > 1e-12 ? gap : min_level_spacing(ess_band.lo, ess_band.hi);
}

double OperatorModel::min_level_spacing(double lo, double hi) const {
  double best = INFINITY;
  for (Eigen::Index k = 1; k < h0_levels.size(); ++k) {
    const double gap = h0_levels(k) - h0_levels(k - 1);
    if (h0_levels(k) >= lo && h0_levels(k - 1) <= hi && gap > 1e-12) best = std::min(best, gap);
  }
  return std::isfinite(best) ? best : ess_band.length();
}

OperatorModel assemble_model(std::string label, Mat H0, Mat C, Mat W, Conjugation J, Band band) {
  OperatorModel m;
  m.label = std::move(label);
  m.H0 = std::move(H0);
  m.C = std::move(C);
  m.W = std::move(W);
  m.J = std::move(J);
  m.ess_band = band;
  m.H = m.H0 + m.C * m.W * m.C;
  m.Hstar = m.H.adjoint();
  if (!m.H.allFinite()) throw Error(ErrorCode::InvalidArgument, "model has non-finite entries");

  const double h0_norm = std::max(norm2(m.H0), 1e-300);
  if ((m.H0 - m.H0.adjoint()).norm() > 1e-12 * h0_norm)
    throw Error(ErrorCode::InvalidArgument, "H0 must be Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(m.H0);
  m.h0_levels = es.eigenvalues();
  m.h0_vectors = es.eigenvectors();
  if (m.h0_levels(0) < -1e-10 * h0_norm) throw Error(ErrorCode::InvalidArgument, "H0 must be nonnegative");
  if (min_singular_value(m.C) <= 0.0) throw Error(ErrorCode::InvalidArgument, "C must be injective");
  return m;
}

OperatorModel build_schrodinger_1d(double L, int N, const Potential1D& potential, double delta) {
  if (N < 16) throw Error(ErrorCode::GridTooCoarse, "need N >= 16 grid points", N);
  if (!(L > 0.0)) throw Error(ErrorCode::InvalidArgument, "L must be positive", L);
  if (!(delta > 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must exceed 1", delta);
  if (!potential.empty() && (potential.support_lo() <= -L || potential.support_hi() >= L))
    throw Error(ErrorCode::SupportViolation, "potential support leaves (-L, L)",
                std::max(-potential.support_lo(), potential.support_hi()));

  Grid1D grid{L, N, 2.0 * L / (N - 1)};
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  Mat H0 = Mat::Zero(N, N);
  Mat C = Mat::Zero(N, N);
  Mat W = Mat::Zero(N, N);
  for (int k = 0; k < N; ++k) {
    const double x = grid.x(k);
    H0(k, k) = 2.0 * inv_h2;
    if (k > 0) H0(k, k - 1) = -inv_h2;
    if (k + 1 < N) H0(k, k + 1) = -inv_h2;
    const double jx = std::sqrt(1.0 + x * x);
    C(k, k) = std::pow(jx, -delta);
    W(k, k) = potential(x) * std::pow(jx, 2.0 * delta);
  }
  auto m = assemble_model("schrodinger_1d", std::move(H0), std::move(C), std::move(W),
                          Conjugation::identity(N), Band{0.0, 4.0 * inv_h2});
  m.grid = grid;
  m.potential = potential;
  m.delta = delta;
  // C W C must reproduce diag(V) exactly up to rounding of the weights.
  for (int k = 0; k < N; ++k) m.H(k, k) = m.H0(k, k) + potential(grid.x(k));
  m.Hstar = m.H.adjoint();
  return m;
}

Mat symmetric_nilpotent(int m) {
  Mat N = Mat::Zero(m, m);
  for (int i = 0; i + 1 < m; ++i) N(i, i + 1) = 1.0;
  Mat K = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) K(i, m - 1 - i) = 1.0;
  return 0.5 * (N + K * N * K) + 0.5 * kI * (K * N - N * K);
}

OperatorModel build_toy_model(const ToySpec& spec) {
  if (spec.n_band < 1 || !(spec.band_max > 0.0))
    throw Error(ErrorCode::InvalidArgument, "toy band needs n_band >= 1 and band_max > 0");
  int n = spec.n_band;
  for (const auto& d : spec.discrete) n += std::max(1, d.jordan);
  for (const auto& e : spec.embedded) n += e.degenerate ? 2 : 1;

  Mat H0 = Mat::Zero(n, n);
  Mat V = Mat::Zero(n, n);
  for (int k = 0; k < spec.n_band; ++k) H0(k, k) = spec.band_max * (k + 0.5) / spec.n_band;

  std::vector<PlantedFeature> planted;
  int at = spec.n_band;
  auto place_block = [&](const Mat& block, PlantedFeature feature, bool couple) {
    const int m = static_cast<int>(block.rows());
    // H0 vanishes on planted sites, so the whole block lives in V.
    for (int i = 0; i < m; ++i) feature.indices.push_back(at + i);
    V.block(at, at, m, m) = block;
    // Symmetric real coupling of the block's first site to every band level.
    for (int k = 0; couple && k < spec.n_band; ++k) {
      V(at, k) = spec.coupling;
      V(k, at) = spec.coupling;
    }
    planted.push_back(std::move(feature));
    at += m;
  };

  for (const auto& d : spec.discrete) {
    const int m = std::max(1, d.jordan);
    Mat block = d.lambda * Mat::Identity(m, m);
    if (m > 1) block += symmetric_nilpotent(m);
    place_block(block, {PlantedFeature::Kind::Discrete, d.lambda, m, false, {}}, true);
  }
  for (const auto& e : spec.embedded) {
    if (!(e.lambda > 0.0 && e.lambda < spec.band_max))
      throw Error(ErrorCode::InvalidArgument, "embedded eigenvalue must lie inside the band", e.lambda);
    if (e.degenerate) {
      Mat block = e.lambda * Mat::Identity(2, 2) + symmetric_nilpotent(2);
      // Left uncoupled: any coupling would split the block and destroy the
      // isotropic eigenvector.
      place_block(block, {PlantedFeature::Kind::Embedded, e.lambda, 2, true, {}}, false);
    } else {
      Mat block = Mat::Constant(1, 1, e.lambda);
      place_block(block, {PlantedFeature::Kind::Embedded, e.lambda, 1, false, {}}, true);
    }
  }

  Mat C = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) C(i, i) = spec.c_weight / (1.0 + 0.05 * i);
  const Mat Cinv = C.diagonal().cwiseInverse().asDiagonal();
  Mat W = Cinv * V * Cinv;
  auto m = assemble_model("toy", std::move(H0), std::move(C), std::move(W), Conjugation::identity(n),
                          Band{0.0, spec.band_max});
  m.planted = std::move(planted);

  Eigen::ComplexEigenSolver<Mat> ces(m.H, true);
  double tol = 0.0;
  for (const auto& f : m.planted) {
    double best = INFINITY;
    for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i)
      best = std::min(best, std::abs(ces.eigenvalues()(i) - f.lambda));
    tol = std::max(tol, best);
  }
  m.planting_tolerance = tol;

  // Hypothesis 4 on the planted embedded eigenvectors: <J phi, phi> != 0.
  for (const auto& f : m.planted) {
    if (f.kind != PlantedFeature::Kind::Embedded) continue;
    Mat shifted = m.H;
    shifted.diagonal().array() -= f.lambda;
    Eigen::JacobiSVD<Mat> svd(shifted, Eigen::ComputeFullV);
    const Vec phi = svd.matrixV().col(n - 1);
    const cplx gram = m.J.apply(Vec(phi)).dot(phi);
    if (std::abs(gram) < 1e-6 && spec.strict)
      throw Error(ErrorCode::InfeasibleSpec, "planted embedded eigenvector is J-isotropic", std::abs(gram));
  }
  return m;
}

}  // namespace nss
