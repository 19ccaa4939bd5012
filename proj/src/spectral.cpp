#include "nss/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace nss {

Mat probe_basis(int n, int gaussians, std::uint64_t seed) {
  Mat P = Mat::Zero(n, n + gaussians);
  P.leftCols(n) = Mat::Identity(n, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int j = 0; j < gaussians; ++j)
    for (int i = 0; i < n; ++i) P(i, n + j) = cplx(g(rng), g(rng));
  return P;
}

Classification classify_spectrum(const OperatorModel& model, double tol, double weight_threshold,
                                 double mass_threshold) {
  Classification out;
  out.eig = eig_decompose(model.H);
  out.tol = tol;
  out.weight_threshold = weight_threshold;
  out.mass_threshold = mass_threshold;
  const Mat V = model.V();
  const int n = model.dim();
  // Support of V: indices touched by an entry above 1e-3 max|V|, so weak
  // coupling entries do not count.
  std::vector<char> supp(n, 0);
  int supp_size = 0;
  const double vmax = V.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    supp[i] = vmax > 0.0 && (V.row(i).cwiseAbs().maxCoeff() > 1e-3 * vmax ||
                             V.col(i).cwiseAbs().maxCoeff() > 1e-3 * vmax);
    supp_size += supp[i];
  }
  const Band& band = model.ess_band;

  for (std::size_t i = 0; i < out.eig.clusters.size(); ++i) {
    const auto& c = out.eig.clusters[i];
    ClassifiedEigenvalue e{c.lambda, c.alg_mult, i, 0.0, 0.0};
    if (supp_size > 0) {
      double on = 0.0, all = 0.0;
      for (const auto& chain : c.chains)
        for (const auto& v : chain) {
          for (int k = 0; k < n; ++k)
            if (supp[k]) on += std::norm(v(k));
          all += v.squaredNorm();
        }
      e.mass = on / all;
      e.weight = e.mass / (double(supp_size) / n);
    }
    const bool localized = e.weight >= weight_threshold && e.mass >= mass_threshold;
    const double re = c.lambda.real();
    const bool near_edge = std::abs(re - band.lo) <= tol || std::abs(re - band.hi) <= tol;
    if (near_edge && localized) {
      out.ambiguous.push_back(e);
    } else if (!band.contains(re)) {
      out.discrete.push_back(e);
    } else if (!localized) {
      out.band_levels += c.alg_mult;
    } else if (std::abs(c.lambda.imag()) <= tol) {
      out.embedded.push_back(e);
    } else {
      out.discrete.push_back(e);
    }
  }
  return out;
}

ProjectionResidual projection_residuals(const Mat& P, const Mat& H) {
  ProjectionResidual r;
  r.idempotency = (P * P - P).norm();
  r.commutation = (P * H - H * P).norm() / std::max(H.norm(), 1e-300);
  r.trace = P.trace();
  return r;
}

double default_riesz_radius(const std::vector<cplx>& spectrum, cplx lambda) {
  double gap = INFINITY;
  for (cplx mu : spectrum) {
    const double d = std::abs(mu - lambda);
    if (d > 0.0) gap = std::min(gap, d);
  }
  return std::isfinite(gap) ? 0.5 * gap : 1.0;
}

RieszResult riesz_projection(const OperatorModel& model, cplx lambda, double radius,
                             const std::vector<cplx>* spectrum) {
  std::vector<cplx> own;
  if (!spectrum) {
    Eigen::ComplexEigenSolver<Mat> ces(model.H, false);
    for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i) own.push_back(ces.eigenvalues()(i));
    spectrum = &own;
  }
  ContourSpec spec{lambda, radius, 32};
  check_contour(*spectrum, spec);
  const int n = model.dim();
  const Mat I = Mat::Identity(n, n);
  // (z - H)^{-1} = -(H - z)^{-1}
  auto res = contour_integral([&](cplx z) { return Mat(-ShiftedSolver(model.H, z).solve(I)); }, spec);
  RieszResult out;
  out.P = std::move(res.value);
  out.nodes = res.nodes_used;
  out.residual = projection_residuals(out.P, model.H);
  return out;
}

EmbeddedProjection embedded_projection(const OperatorModel& model, const EigenCluster& cluster, int m) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "embedded projection needs m >= 1", m);
  std::vector<Vec> kernel;
  for (const auto& chain : cluster.chains)
    for (int k = 0; k < m && k < static_cast<int>(chain.size()); ++k) kernel.push_back(chain[k]);
  const int n = model.dim();
  const int d = static_cast<int>(kernel.size());
  Mat K(n, d);
  for (int j = 0; j < d; ++j) K.col(j) = kernel[j];
  Eigen::HouseholderQR<Mat> qr(K);
  Mat Q = qr.householderQ() * Mat::Identity(n, d);

  const Mat P = model.J.matrix().cast<cplx>();
  // <J u, v> = (P conj(u))^* v = u^T P v: bilinear, not sesquilinear.
  auto form = [&](const Vec& u, const Vec& v) { return (u.transpose() * (P * v))(0, 0); };

  const Mat G = Q.transpose() * P * Q;
  EmbeddedProjection out;
  out.gram_det = std::abs(G.determinant());
  const RVec s = singular_values(G);
  out.gram_condition = s(d - 1) > 0 ? s(0) / s(d - 1) : INFINITY;
  if (out.gram_det < 1e-10)
    throw Error(ErrorCode::DegenerateBilinearForm, "J-Gram matrix is singular on the kernel", out.gram_det);

  // Modified Gram-Schmidt in the bilinear form with diagonal pivoting; an
  // isotropic remainder is paired with a partner (u <- u + v) first.
  std::vector<Vec> rest;
  for (int j = 0; j < d; ++j) rest.push_back(Q.col(j));
  std::vector<Vec> basis;
  while (!rest.empty()) {
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t j = 0; j < rest.size(); ++j) {
      const double v = std::abs(form(rest[j], rest[j]));
      if (v > best_val) best_val = v, best = j;
    }
    if (best_val < 1e-6 && rest.size() > 1) {
      std::size_t a = 0, b = 1;
      double pair = -1.0;
      for (std::size_t i = 0; i < rest.size(); ++i)
        for (std::size_t j = i + 1; j < rest.size(); ++j) {
          const double v = std::abs(form(rest[i], rest[j]));
          if (v > pair) pair = v, a = i, b = j;
        }
      rest[a] += rest[b];
      best = a;
    }
    Vec phi = rest[best];
    rest.erase(rest.begin() + static_cast<long>(best));
    phi /= std::sqrt(form(phi, phi));
    for (int pass = 0; pass < 2; ++pass)
      for (auto& r : rest) r -= form(phi, r) * phi;
    basis.push_back(phi);
  }
  out.P = Mat::Zero(n, n);
  for (const auto& phi : basis) out.P += phi * (phi.transpose() * P);
  return out;
}

SpectralData assemble_projections(const OperatorModel& model, const Classification& cls) {
  SpectralData out;
  const int n = model.dim();
  out.band = model.ess_band;
  out.Pi_disc = Mat::Zero(n, n);
  const auto spectrum = cls.eig.eigenvalues();
  for (const auto& e : cls.discrete) {
    const double radius = default_riesz_radius(spectrum, e.lambda);
    auto r = riesz_projection(model, e.lambda, radius, &spectrum);
    out.Pi_disc += r.P;
    out.discrete.push_back({e.lambda, e.m, std::move(r.P), 0.0, r.residual});
  }
  out.Pi_p = out.Pi_disc;
  for (const auto& e : cls.embedded) {
    const auto& cluster = cls.eig.clusters[e.cluster];
    auto ep = embedded_projection(model, cluster, cluster.alg_mult);
    ProjectionEntry entry{e.lambda, e.m, std::move(ep.P), ep.gram_condition, {}};
    entry.residual = projection_residuals(entry.P, model.H);
    out.Pi_p += entry.P;
    out.embedded.push_back(std::move(entry));
  }
  out.Pi_ac = Mat::Identity(n, n) - out.Pi_p;
  out.pp_pac = (out.Pi_p * out.Pi_ac).norm();
  // <J Pi_p e_i, Pi_ac e_j> = (Pi_p^T P Pi_ac)_{ij}
  const Mat P = model.J.matrix().cast<cplx>();
  out.j_orthogonality = (out.Pi_p.transpose() * P * out.Pi_ac).cwiseAbs().maxCoeff();
  out.rank_p = static_cast<int>(std::lround(out.Pi_p.trace().real()));
  return out;
}

namespace {

// Least squares fit of y = a - rate t (+ b log t when with_log).
double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& y, bool with_log) {
  const int cols = with_log ? 3 : 2;
  RMat A(t.size(), cols);
  RVec b(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = -t[i];
    if (with_log) A(i, 2) = std::log(t[i]);
    b(i) = y[i];
  }
  RVec x = A.colPivHouseholderQr().solve(b);
  return x(1);
}

}  // namespace

AdsReport ads_subspace_check(const OperatorModel& model, const Classification& cls,
                             const SpectralData& data, double T, std::uint64_t seed) {
  AdsReport out;
  out.T = T;
  Propagator prop(model.H);
  constexpr int kSamples = 201;
  std::vector<double> ts(kSamples);
  for (int i = 0; i < kSamples; ++i) ts[i] = T * i / (kSamples - 1);

  for (const auto& e : cls.discrete) {
    if (!(e.lambda.imag() < 0.0)) continue;
    const auto& cluster = cls.eig.clusters[e.cluster];
    for (const auto& chain : cluster.chains)
      for (std::size_t k = 0; k < chain.size(); ++k) {
        std::vector<double> tt, yy;
        for (int i = kSamples / 2; i < kSamples; ++i) {
          tt.push_back(ts[i]);
          yy.push_back(std::log(prop.apply(ts[i], chain[k]).norm() / chain[k].norm()));
        }
        AdsEntry entry;
        entry.lambda = e.lambda;
        entry.chain_position = static_cast<int>(k);
        entry.expected_rate = -e.lambda.imag();
        entry.fitted_rate = fit_decay_rate(tt, yy, k > 0);
        entry.pass = std::abs(entry.fitted_rate - entry.expected_rate) <= 0.1 * entry.expected_rate;
        out.entries.push_back(entry);
      }
  }

  const int n = model.dim();
  Mat probes = data.Pi_ac * probe_basis(n, 16, seed);
  RVec norms0 = probes.colwise().norm();
  double worst = 1.0;
  for (double t : ts) {
    const Mat Y = prop.apply(t, probes);
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      if (norms0(j) > 1e-12) worst = std::min(worst, Y.col(j).norm() / norms0(j));
  }
  out.ac_min_ratio = worst;
  out.ac_pass = worst >= 1e-3;
  return out;
}

}  // namespace nss
