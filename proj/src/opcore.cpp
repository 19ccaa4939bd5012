#include "nss/opcore.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nss {

namespace {

bool lex_less(cplx a, cplx b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

// Orthonormal basis of the numerical null space of M: right singular vectors
// whose singular value is <= thr.
Mat null_space(const Mat& M, double thr) {
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > thr) ++rank;
  return svd.matrixV().rightCols(M.cols() - rank);
}

// Orthonormal basis of the span of the columns of M (rank by thr).
Mat range_basis(const Mat& M, double thr) {
  if (M.cols() == 0) return Mat(M.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU);
  const RVec& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > thr) ++rank;
  return svd.matrixU().leftCols(rank);
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Jordan chains of a nearly nilpotent m x m matrix N. Chains are returned
// bottom-up in the coordinates of N.
std::vector<std::vector<Vec>> nilpotent_chains(const Mat& N, double scale) {
  const int m = static_cast<int>(N.rows());
  std::vector<Mat> kernels(1, Mat(m, 0));
  Mat power = Mat::Identity(m, m);
  for (int k = 1; k <= m; ++k) {
    power = power * N;
    const double thr = 1e-6 * std::pow(std::max(scale, 1e-300), k);
    kernels.push_back(null_space(power, thr));
    if (kernels.back().cols() == m) break;
  }
  // Whatever the rank decisions said, the cluster has dimension m.
  if (kernels.back().cols() != m) kernels.push_back(Mat::Identity(m, m));
  const int p = static_cast<int>(kernels.size()) - 1;
  auto dimk = [&](int k) { return k > p ? m : static_cast<int>(kernels[k].cols()); };

  std::vector<std::vector<Vec>> chains;
  std::vector<Vec> used;  // images N^j top at the current level
  for (int s = p; s >= 1; --s) {
    const int count = (dimk(s) - dimk(s - 1)) - (dimk(s + 1) - dimk(s));
    for (auto& u : used) u = N * u;  // move previous tops down one level
    if (count <= 0) continue;
    Mat lower(m, kernels[s - 1].cols() + static_cast<Eigen::Index>(used.size()));
    lower.leftCols(kernels[s - 1].cols()) = kernels[s - 1];
    for (std::size_t j = 0; j < used.size(); ++j)
      lower.col(kernels[s - 1].cols() + static_cast<Eigen::Index>(j)) = used[j];
    const Mat Z = range_basis(lower, 1e-8);
    Mat cand = kernels[s] - Z * (Z.adjoint() * kernels[s]);
    Eigen::JacobiSVD<Mat> svd(cand, Eigen::ComputeThinU);
    for (int c = 0; c < count && c < svd.matrixU().cols(); ++c) {
      Vec top = svd.matrixU().col(c);
      std::vector<Vec> chain(s);
      chain[s - 1] = top;
      for (int j = s - 2; j >= 0; --j) chain[j] = N * chain[j + 1];
      chains.push_back(chain);
      used.push_back(top);
    }
  }
  return chains;
}

}  // namespace

int JordanSpectralData::dim() const {
  int n = 0;
  for (const auto& c : clusters) n += c.alg_mult;
  return n;
}

std::vector<cplx> JordanSpectralData::eigenvalues() const {
  std::vector<cplx> out;
  for (const auto& c : clusters) out.push_back(c.lambda);
  return out;
}

Mat JordanSpectralData::basis() const {
  const int n = dim();
  Mat X(n, n);
  int col = 0;
  for (const auto& c : clusters)
    for (const auto& chain : c.chains)
      for (const auto& v : chain) X.col(col++) = v;
  return X;
}

std::pair<int, int> JordanSpectralData::columns_of(std::size_t i) const {
  int start = 0;
  for (std::size_t j = 0; j < i; ++j) start += clusters[j].alg_mult;
  return {start, start + clusters[i].alg_mult};
}

Mat JordanSpectralData::reconstruct() const {
  const int n = dim();
  Mat J = Mat::Zero(n, n);
  int col = 0;
  for (const auto& c : clusters)
    for (const auto& chain : c.chains) {
      for (std::size_t k = 0; k < chain.size(); ++k) {
        J(col + k, col + k) = c.lambda;
        if (k > 0) J(col + k - 1, col + k) = 1.0;
      }
      col += static_cast<int>(chain.size());
    }
  const Mat X = basis();
  return X * J * X.partialPivLu().inverse();
}

Mat JordanSpectralData::projection(std::size_t i) const {
  const Mat X = basis();
  const Mat Xinv = X.partialPivLu().inverse();
  auto [a, b] = columns_of(i);
  return X.middleCols(a, b - a) * Xinv.middleRows(a, b - a);
}

JordanSpectralData eig_decompose(const Mat& A, double tol) {
  if (!(tol > 0.0) || tol > 1e-4)
    throw Error(ErrorCode::InvalidArgument, "eig_decompose tol must lie in (0, 1e-4]", tol);
  if (!A.allFinite()) throw Error(ErrorCode::InvalidArgument, "matrix has non-finite entries");
  const int n = static_cast<int>(A.rows());
  Eigen::ComplexEigenSolver<Mat> ces(A, true);
  if (ces.info() != Eigen::Success)
    throw Error(ErrorCode::NonConvergence, "complex Schur iteration did not converge");
  const Vec ev = ces.eigenvalues();
  Mat evec = ces.eigenvectors();
  for (int i = 0; i < n; ++i) evec.col(i).normalize();

  JordanSpectralData out;
  out.norm = norm2(A);
  const double scale = std::max(out.norm, 1e-300);
  out.cluster_tol = tol * scale;

  // Merge radius for defective clusters: eigenvalues of a Jordan block split
  // like (eps ||A||)^{1/m}; their eigenvectors stay nearly parallel.
  const double defect_radius = 1e-3 * scale;
  UnionFind uf(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double gap = std::abs(ev(i) - ev(j));
      if (gap <= out.cluster_tol) {
        uf.unite(i, j);
      } else if (gap <= defect_radius) {
        const double overlap = std::abs(evec.col(i).dot(evec.col(j)));
        const double sine = std::sqrt(std::max(0.0, 1.0 - overlap * overlap));
        if (sine <= std::sqrt(gap / scale)) uf.unite(i, j);
      }
    }
  std::vector<std::vector<int>> groups;
  {
    std::vector<int> root_index(n, -1);
    for (int i = 0; i < n; ++i) {
      int r = uf.find(i);
      if (root_index[r] < 0) {
        root_index[r] = static_cast<int>(groups.size());
        groups.emplace_back();
      }
      groups[root_index[r]].push_back(i);
    }
  }

  // Ambiguity: an outsider as close to a member as the merge radius allows.
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int i : groups[g])
      for (std::size_t h = 0; h < groups.size(); ++h) {
        if (h == g) continue;
        for (int j : groups[h]) {
          const double gap = std::abs(ev(i) - ev(j));
          if (gap <= 2.0 * out.cluster_tol)
            throw Error(ErrorCode::IllConditioned,
                        "eigenvalue clusters are not separated at the clustering tolerance", gap);
        }
      }

  for (const auto& members : groups) {
    EigenCluster c;
    const int m = static_cast<int>(members.size());
    c.alg_mult = m;
    cplx mean = 0.0;
    for (int i : members) mean += ev(i);
    mean /= static_cast<double>(m);
    if (m == 1) {
      c.lambda = ev(members[0]);
      c.geo_mult = 1;
      c.chains.push_back({evec.col(members[0])});
    } else {
      // Invariant subspace of the cluster = null space of (A - mean)^m,
      // whose dimension is known to be m.
      Mat shifted = A;
      shifted.diagonal().array() -= mean;
      Mat power = shifted;
      for (int k = 1; k < m; ++k) power = power * shifted;
      Eigen::JacobiSVD<Mat> svd(power, Eigen::ComputeFullV);
      const Mat Q = svd.matrixV().rightCols(m);
      const Mat M = Q.adjoint() * A * Q;
      c.lambda = M.trace() / static_cast<double>(m);
      Mat Nil = M;
      Nil.diagonal().array() -= c.lambda;
      auto chains = nilpotent_chains(Nil, scale);
      for (auto& chain : chains) {
        std::vector<Vec> lifted;
        for (auto& v : chain) lifted.push_back(Q * v);
        c.chains.push_back(std::move(lifted));
      }
      c.geo_mult = static_cast<int>(c.chains.size());
    }
    double res = 0.0;
    for (const auto& chain : c.chains)
      for (std::size_t k = 0; k < chain.size(); ++k) {
        Vec r = A * chain[k] - c.lambda * chain[k];
        if (k > 0) r -= chain[k - 1];
        res = std::max(res, r.norm() / (scale * std::max(chain[k].norm(), 1e-300)));
      }
    c.chain_residual = res;
    out.clusters.push_back(std::move(c));
  }
  std::stable_sort(out.clusters.begin(), out.clusters.end(),
                   [](const EigenCluster& a, const EigenCluster& b) { return lex_less(a.lambda, b.lambda); });
  return out;
}

Diagonalization diagonalize(const Mat& A) {
  Eigen::ComplexEigenSolver<Mat> ces(A, true);
  if (ces.info() != Eigen::Success)
    throw Error(ErrorCode::NonConvergence, "complex Schur iteration did not converge");
  Diagonalization D;
  D.d = ces.eigenvalues();
  D.V = ces.eigenvectors();
  for (Eigen::Index i = 0; i < D.V.cols(); ++i) D.V.col(i).normalize();
  const RVec s = singular_values(D.V);
  D.cond = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : INFINITY;
  D.Vinv = D.V.partialPivLu().inverse();
  return D;
}

ShiftedSolver::ShiftedSolver(const Mat& A, cplx z) {
  Mat shifted = A;
  shifted.diagonal().array() -= z;
  const double scale = std::max(shifted.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
  lu_.compute(shifted);
  double min_pivot = INFINITY;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i)
    min_pivot = std::min(min_pivot, std::abs(lu_.matrixLU()(i, i)));
  if (min_pivot <= 1e-14 * scale)
    throw Error(ErrorCode::SingularShift, "shift is numerically an eigenvalue", min_pivot / scale);
}

Propagator::Propagator(const Mat& A, double max_cond) : A_(A) {
  norm_ = norm2(A);
  diag_ = diagonalize(A);
  spectral_ = diag_.usable(max_cond);
}

double Propagator::growth_bound(double t) const {
  double log_bound;
  if (spectral_) {
    double worst = -INFINITY;
    for (Eigen::Index i = 0; i < diag_.d.size(); ++i) worst = std::max(worst, t * diag_.d(i).imag());
    log_bound = std::log(diag_.cond) + worst;
  } else {
    // Logarithmic-norm bound: d/dt ||u||^2 = 2 <u, S u> with S = i(A* - A)/2.
    Mat S = (kI * (A_.adjoint() - A_)) / 2.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    const double rate = t >= 0 ? es.eigenvalues().maxCoeff() : -es.eigenvalues().minCoeff();
    log_bound = std::abs(t) * rate;
  }
  if (log_bound > std::log(1e30))
    throw Error(ErrorCode::OverflowRisk, "||e^{-itA}|| estimate exceeds 1e30", log_bound);
  return std::exp(log_bound);
}

Mat Propagator::apply(double t, const Mat& U) const {
  growth_bound(t);
  if (spectral_) {
    Vec phase(diag_.d.size());
    for (Eigen::Index i = 0; i < phase.size(); ++i) phase(i) = std::exp(-kI * t * diag_.d(i));
    return diag_.V * (phase.asDiagonal() * (diag_.Vinv * U));
  }
  return matrix(t) * U;
}

Vec Propagator::apply(double t, const Vec& u) const {
  Mat U = u;
  return apply(t, U).col(0);
}

Mat Propagator::matrix(double t) const {
  growth_bound(t);
  if (spectral_) {
    Vec phase(diag_.d.size());
    for (Eigen::Index i = 0; i < phase.size(); ++i) phase(i) = std::exp(-kI * t * diag_.d(i));
    return diag_.V * phase.asDiagonal() * diag_.Vinv;
  }
  Mat M = (-kI * t) * A_;
  return M.exp();
}

Vec propagate(const Mat& A, double t, const Vec& u) { return Propagator(A).apply(t, u); }

void check_contour(const std::vector<cplx>& eigenvalues, const ContourSpec& spec) {
  if (!(spec.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "contour radius must be positive");
  if (spec.nodes < 8) throw Error(ErrorCode::InvalidArgument, "contour needs at least 8 nodes");
  for (cplx ev : eigenvalues) {
    const double dist = std::abs(std::abs(ev - spec.center) - spec.radius);
    if (dist <= 1e-3 * spec.radius)
      throw Error(ErrorCode::ContourTouchesSpectrum, "eigenvalue lies on the contour", dist);
  }
}

ContourResult contour_integral(const std::function<Mat(cplx)>& f, const ContourSpec& spec) {
  if (!(spec.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "contour radius must be positive");
  if (spec.nodes < 8) throw Error(ErrorCode::InvalidArgument, "contour needs at least 8 nodes");
  constexpr int kCap = 1 << 14;

  // Trapezoid: (1/2 pi i) sum f(z_k) dz_k with dz_k = i r e^{i theta_k} (2 pi/n),
  // i.e. (1/n) sum f(z_k) (z_k - center).
  auto node_sum = [&](int n, int offset_num, int offset_den) {
    std::vector<Mat> terms(static_cast<std::size_t>(n));
    parallel_for(terms.size(), [&](std::size_t k) {
      const double theta = 2.0 * kPi * (static_cast<double>(k) + double(offset_num) / offset_den) / n;
      const cplx w = spec.radius * std::exp(kI * theta);
      terms[k] = f(spec.center + w) * w;
    });
    Mat sum = terms[0];
    for (std::size_t k = 1; k < terms.size(); ++k) sum += terms[k];
    return sum;
  };

  int n = spec.nodes;
  Mat raw = node_sum(n, 0, 1);
  Mat current = raw / static_cast<double>(n);
  double change = INFINITY;
  while (true) {
    if (2 * n > kCap) break;
    Mat mid = node_sum(n, 1, 2);
    raw += mid;
    n *= 2;
    Mat next = raw / static_cast<double>(n);
    change = (next - current).norm();
    const double ref = std::max(1.0, next.norm());
    current = std::move(next);
    if (change <= 1e-10 * ref) return {current, n, change};
  }
  throw Error(ErrorCode::NoConvergence, "contour quadrature hit the 2^14 node cap", change);
}

}  // namespace nss
