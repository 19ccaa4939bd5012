#pragma once

#include "nss/models.hpp"
#include "nss/opcore.hpp"

#include <vector>

namespace nss {

struct ClassifiedEigenvalue {
  cplx lambda;
  int m = 1;
  std::size_t cluster = 0;  // index into Classification::eig.clusters
  double weight = 0.0;      // localization on supp V relative to a uniform state
  double mass = 0.0;        // fraction of the mass carried by supp V
};

struct Classification {
  JordanSpectralData eig;
  std::vector<ClassifiedEigenvalue> discrete;
  std::vector<ClassifiedEigenvalue> embedded;
  std::vector<ClassifiedEigenvalue> ambiguous;  // within tol of a band edge
  int band_levels = 0;
  double tol = 0.0;
  double weight_threshold = 0.0;
  double mass_threshold = 0.0;
};

// Band levels of H0 origin are recognized by their localization weight: the
// fraction of the generalized eigenspace mass carried by supp V, divided by
// |supp V| / n. A delocalized level has weight ~ 1; planted or bound states
// concentrate on supp V (weight >> 1). A level counts as localized when both
// weight >= weight_threshold and mass >= mass_threshold; the second condition
// keeps short-wavelength lattice modes of a large grid in the band.
Classification classify_spectrum(const OperatorModel& model, double tol = 1e-6,
                                 double weight_threshold = 2.0,
                                 double mass_threshold = 0.35);

struct ProjectionResidual {
  double idempotency = 0.0;  // ||P^2 - P||
  double commutation = 0.0;  // ||[P, H]|| / ||H||
  cplx trace;
};

ProjectionResidual projection_residuals(const Mat& P, const Mat& H);

struct RieszResult {
  Mat P;
  ProjectionResidual residual;
  int nodes = 0;
};

// Pass the spectrum of H when it is already known; otherwise it is computed
// for the contour precondition.
RieszResult riesz_projection(const OperatorModel& model, cplx lambda, double radius,
                             const std::vector<cplx>* spectrum = nullptr);

// Default radius: half the distance from lambda to the nearest other eigenvalue.
double default_riesz_radius(const std::vector<cplx>& spectrum, cplx lambda);

struct EmbeddedProjection {
  Mat P;
  double gram_condition = 0.0;
  double gram_det = 0.0;  // |det G| on an orthonormal kernel basis
};

// Kernel of (H - lambda)^m taken from the first m links of every chain.
EmbeddedProjection embedded_projection(const OperatorModel& model, const EigenCluster& cluster, int m);

struct ProjectionEntry {
  cplx lambda;
  int m = 1;
  Mat P;
  double gram_condition = 0.0;  // embedded entries only
  ProjectionResidual residual;
};

struct SpectralData {
  std::vector<ProjectionEntry> discrete;
  std::vector<ProjectionEntry> embedded;
  Mat Pi_disc, Pi_p, Pi_ac;
  Band band;
  double j_orthogonality = 0.0;  // max |<J Pi_p u, Pi_ac v>| over basis pairs
  double pp_pac = 0.0;           // ||Pi_p Pi_ac||
  int rank_p = 0;                // round(trace Pi_p)
};

SpectralData assemble_projections(const OperatorModel& model, const Classification& cls);

struct AdsEntry {
  cplx lambda;
  int chain_position = 0;
  double fitted_rate = 0.0;
  double expected_rate = 0.0;
  bool pass = false;
};

struct AdsReport {
  std::vector<AdsEntry> entries;
  double ac_min_ratio = 1.0;  // min over t and ac probes of ||e^{-itH}u|| / ||u||
  bool ac_pass = true;
  double T = 0.0;
};

AdsReport ads_subspace_check(const OperatorModel& model, const Classification& cls,
                             const SpectralData& data, double T, std::uint64_t seed = 42);

// Standard basis followed by `gaussians` random complex Gaussian vectors.
Mat probe_basis(int n, int gaussians, std::uint64_t seed);

}  // namespace nss
