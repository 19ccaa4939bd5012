#include "nss/models.hpp"
#include "nss/opcore.hpp"
#include "nss/spectral.hpp"

#include <cmath>

namespace nss {

namespace {

// sup over the sampling grid of ||C R0(z) C||, with R0 from the H0 eigenbasis.
double lap_sup(const Mat& C, const RVec& levels, const Mat& vectors, const Band& band, int probes,
               cplx* argmax) {
  const Mat M = C * vectors;
  const double pad = 0.1 * band.length();
  const double lo = band.lo - pad, hi = band.hi + pad;
  const int nre = std::max(probes, 2);
  const double ims[] = {1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<cplx> zs;
  for (int i = 0; i < nre; ++i) {
    const double re = lo + (hi - lo) * i / (nre - 1);
    for (double im : ims) {
      zs.emplace_back(re, im);
      zs.emplace_back(re, -im);
    }
  }
  std::vector<double> norms(zs.size());
  parallel_for(zs.size(), [&](std::size_t k) {
    Vec s(levels.size());
    for (Eigen::Index i = 0; i < levels.size(); ++i) s(i) = 1.0 / (levels(i) - zs[k]);
    norms[k] = norm2(Mat(M * s.asDiagonal() * M.adjoint()));
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < norms.size(); ++k)
    if (norms[k] > norms[best]) best = k;
  if (argmax) *argmax = zs[best];
  return norms[best];
}

}  // namespace

HypothesisReport validate_hypotheses(const OperatorModel& model, int probes) {
  HypothesisReport r;
  r.lap_sup = lap_sup(model.C, model.h0_levels, model.h0_vectors, model.ess_band, probes, &r.lap_argmax);
  if (model.grid && model.grid->N / 2 >= 16) {
    // Same box, half the points: only H0 and C matter for this quantity.
    auto coarse = build_schrodinger_1d(model.grid->L, model.grid->N / 2, Potential1D{}, model.delta);
    r.coarse_N = coarse.grid->N;
    r.lap_sup_coarse = lap_sup(coarse.C, coarse.h0_levels, coarse.h0_vectors, coarse.ess_band, probes, nullptr);
  }

  const auto cls = classify_spectrum(model);
  r.eigenvalue_count = cls.eig.dim();
  r.discrete_count = static_cast<int>(cls.discrete.size());
  r.embedded_count = static_cast<int>(cls.embedded.size());
  for (const auto* list : {&cls.discrete, &cls.embedded, &cls.ambiguous})
    for (const auto& e : *list) {
      r.multiplicities.emplace_back(e.lambda, e.m);
      if (e.lambda.imag() < 0.0) ++r.lower_half_plane_count;
    }

  const double h0n = std::max(model.H0.norm(), 1e-300);
  r.h0_hermitian_residual = (model.H0 - model.H0.adjoint()).norm() / h0n;
  r.h0_min_eigenvalue = model.h0_levels(0);
  r.c_min_singular_value = min_singular_value(model.C);
  const int n = model.dim();
  {
    Mat I = Mat::Identity(n, n);
    r.jj_residual = (model.J.apply(Mat(model.J.apply(I))) - I).norm();
  }
  r.jh0_residual = (model.J.conjugate(model.H0) - model.H0).norm() / h0n;
  r.jc_residual = (model.J.conjugate(model.C) - model.C).norm() / std::max(model.C.norm(), 1e-300);
  r.jw_residual = (model.J.conjugate(model.W) - model.W.adjoint()).norm() / std::max(model.W.norm(), 1.0);
  r.jh_residual = (model.J.conjugate(model.H) - model.Hstar).norm() / std::max(model.H.norm(), 1e-300);

  const Mat P = model.J.matrix().cast<cplx>();
  auto gram_det = [&](const std::vector<Vec>& vecs) {
    Mat K(n, static_cast<Eigen::Index>(vecs.size()));
    for (std::size_t j = 0; j < vecs.size(); ++j) K.col(static_cast<Eigen::Index>(j)) = vecs[j];
    Eigen::HouseholderQR<Mat> qr(K);
    const Mat Q = qr.householderQ() * Mat::Identity(n, K.cols());
    return std::abs(Mat(Q.transpose() * P * Q).determinant());
  };
  for (const auto& e : cls.embedded) {
    const auto& cluster = cls.eig.clusters[e.cluster];
    std::vector<Vec> eig, gen;
    for (const auto& chain : cluster.chains) {
      eig.push_back(chain[0]);
      gen.insert(gen.end(), chain.begin(), chain.end());
    }
    HypothesisReport::Gram g;
    g.lambda = e.lambda;
    g.m = cluster.alg_mult;
    g.det_eigvec = gram_det(eig);
    g.det_generalized = gram_det(gen);
    g.degenerate = g.det_eigvec < 1e-10 || g.det_generalized < 1e-10;
    if (g.degenerate) r.flags.push_back("degenerate bilinear form");
    r.grams.push_back(g);
  }
  if (r.jh_residual > 1e-10) r.flags.push_back("J H != H* J");
  if (r.h0_min_eigenvalue < -1e-10 * h0n) r.flags.push_back("H0 not nonnegative");
  if (!cls.ambiguous.empty()) r.flags.push_back("eigenvalue at band edge");
  return r;
}

}  // namespace nss
