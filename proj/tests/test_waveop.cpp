#include "doctest.h"
#include "nss/waveop.hpp"
#include "support.hpp"

using namespace nss;

namespace {

Potential1D well(double a, double b, cplx v) { return Potential1D{{{a, b, v}}}; }

// Everything a wave-operator computation needs; ModalBasis keeps a pointer
// to the model, so instances are built in place and never moved.
struct Setup {
  OperatorModel model;
  Classification cls;
  SpectralData data;
  ModalBasis basis;
  Regularizer reg;

  explicit Setup(OperatorModel m, std::vector<SingularityRecord> sing = {})
      : model(std::move(m)),
        cls(classify_spectrum(model)),
        data(assemble_projections(model, cls)),
        basis(model, data),
        reg(make_regularizer(model, std::move(sing), cls.eig.eigenvalues())) {}
  Setup(const Setup&) = delete;
};

CookOptions quick(double T_max = 20.0) {
  CookOptions o;
  o.T_max = T_max;
  o.strict = false;
  return o;
}

double max_abs(const Mat& M) { return M.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("free model: every kind is the identity") {
  Setup s(build_schrodinger_1d(10.0, 64, Potential1D{}, 2.0));
  const Mat I = Mat::Identity(64, 64);
  for (WavePair p : {WavePair::H_H0, WavePair::Hstar_H0, WavePair::H0_H, WavePair::H0_Hstar})
    for (int sign : {+1, -1}) {
      const auto r = cook_wave_operator(s.model, s.basis, s.reg, WaveKind{p, sign}, quick());
      CAPTURE(r.kind.label());
      CHECK(max_abs(r.matrix - I) == 0.0);
      CHECK(r.tail_norm == 0.0);
      CHECK(r.accepted);
      CHECK(r.intertwining_residual <= 1e-9);
      CHECK(r.min_sv_on_ac == doctest::Approx(1.0).epsilon(1e-12));
    }
  const auto b = semigroup_bounds(s.basis, {0.0, 10.0, 50.0, 100.0}, probe_basis(64, 16, 42));
  CHECK(std::abs(b.m1 - 1.0) <= 1e-9);
  CHECK(std::abs(b.m2 - 1.0) <= 1e-9);

  const auto c = completeness_check(s.model, s.basis, s.reg, quick());
  CHECK(c.hypothesis_holds);
  CHECK(c.min_sv_on_ac == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.composition_best <= 1e-12);
  CHECK(c.similarity_residual <= 1e-12);

  const auto a = adjoint_pair_check(s.model, s.basis, s.reg, +1, quick());
  CHECK(a.adjoint_residual <= 1e-12);
  CHECK(a.pass);
}

TEST_CASE("Simpson converges to the exact-in-time Cook integral") {
  Setup s(build_schrodinger_1d(8.0, 40, well(-1, 1, cplx(-2, -0.5)), 2.0));
  const WaveKind k{WavePair::H_H0, +1};
  const WaveFamily f(s.model, s.basis, wave_symbol(s.basis, s.reg, k), k);
  const double t = 2.0;
  const Mat exact = f.at(t);
  double prev = INFINITY;
  for (double dt : {0.02, 0.01, 0.005}) {
    const double err = norm2(f.simpson(t, dt) - exact) / norm2(exact);
    CAPTURE(dt);
    CHECK(err <= prev / 2.0);
    prev = err;
  }
  CHECK(prev <= 1e-6);
}

TEST_CASE("dissipative well: kernel law, adjoint pair and composition") {
  Setup s(build_schrodinger_1d(12.0, 96, well(-1, 1, cplx(-2, -0.5)), 2.0));
  REQUIRE(s.data.rank_p >= 1);
  const auto w = cook_wave_operator(s.model, s.basis, s.reg, WaveKind{WavePair::H_H0, +1}, quick());
  const Mat P = probe_basis(96, 16, 42);
  CHECK(norm2(s.data.Pi_p * w.matrix * P) / norm2(P) <= 1e-8);

  for (int sign : {+1, -1}) {
    const auto a = adjoint_pair_check(s.model, s.basis, s.reg, sign, quick());
    CAPTURE(sign);
    CHECK(a.adjoint_residual <= 1e-9);
    CHECK(a.kernel_residual <= 1e-8);
  }

  const auto c = completeness_check(s.model, s.basis, s.reg, quick());
  CHECK(c.hypothesis_holds);
  CHECK(c.composition_best <= 1e-8);
  CHECK(c.min_sv_on_ac >= 0.1 * c.baseline_min_sv);
}

TEST_CASE("toy model: W(H0, H*) annihilates the planted eigenvector of H*") {
  ToySpec spec;
  spec.discrete = {{cplx(2, -0.3), 1}};
  Setup s(build_toy_model(spec));
  REQUIRE(s.data.rank_p == 1);
  for (int sign : {+1, -1}) {
    const auto a = adjoint_pair_check(s.model, s.basis, s.reg, sign, quick(10.0));
    CAPTURE(sign);
    CHECK(a.kernel_residual <= 1e-8);
    CHECK(a.adjoint_residual <= 1e-9);
  }
}

TEST_CASE("semigroup bounds exclude a decaying discrete mode") {
  ToySpec spec;
  spec.discrete = {{cplx(2, -0.3), 1}};
  Setup s(build_toy_model(spec));
  const int n = s.model.dim();
  const cplx lambda = s.data.discrete.at(0).lambda;
  Eigen::ComplexEigenSolver<Mat> ces(s.model.H);
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(ces.eigenvalues()(i) - lambda) < std::abs(ces.eigenvalues()(best) - lambda)) best = i;
  const Vec phi = ces.eigenvectors().col(best);
  const Propagator prop(s.model.H);
  for (double t : {1.0, 5.0, 10.0})
    CHECK(prop.apply(t, phi).norm() / phi.norm() == doctest::Approx(std::exp(lambda.imag() * t)).epsilon(1e-8));
  CHECK(s.basis.evolve_ac(1.0, phi).norm() <= 1e-8 * phi.norm());

  const auto b = semigroup_bounds(s.basis, {0.0, 5.0, 10.0}, probe_basis(n, 16, 42));
  CHECK(b.m1 > 0.5);
  CHECK(b.m1 > std::exp(lambda.imag() * 10.0) * 10.0);
  CHECK(b.m2 < 2.0);
}

// The lattice barrier binds one level above the band, so W is a partial
// isometry onto Ran Pi_ac rather than a unitary.
TEST_CASE("real repulsive barrier: wave operators are partial isometries onto the ac range") {
  Setup s(build_schrodinger_1d(10.0, 64, well(-1, 1, cplx(2.0, 0.0)), 2.0));
  REQUIRE(s.data.rank_p == 1);
  CHECK(s.cls.discrete.at(0).lambda.real() > s.model.ess_band.hi);
  for (int sign : {+1, -1}) {
    const auto r = cook_wave_operator(s.model, s.basis, s.reg, WaveKind{WavePair::H_H0, sign}, quick());
    CAPTURE(sign);
    CHECK(norm2(r.matrix * r.matrix.adjoint() - s.data.Pi_ac) <= 1e-8);
    const RVec sv = singular_values(r.matrix);
    CHECK(sv(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.min_sv_on_ac == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("intertwining at finite T is the Cauchy increment") {
  Setup s(build_schrodinger_1d(12.0, 96, well(-1, 1, cplx(-2, -0.5)), 2.0));
  const WaveKind k{WavePair::H_H0, +1};
  const WaveFamily f(s.model, s.basis, wave_symbol(s.basis, s.reg, k), k);
  const Mat P = probe_basis(96, 16, 42);
  CookOptions o = quick(10.0);
  o.t_samples = {1.0};
  const auto r = cook_wave_operator(s.model, s.basis, s.reg, k, o);
  // e^{itH} W(T) = W(T + t) e^{itH0}, so the residual is ||(W(T + t) - W(T)) e^{itH0} u||.
  const Mat lhs = f.left_group(1.0, r.matrix * P) - r.matrix * f.right_group(1.0, P);
  const Mat incr = (f.at(r.T_used + 1.0) - r.matrix) * f.right_group(1.0, P);
  CHECK(norm2(lhs - incr) <= 1e-9 * norm2(P));
  CHECK(r.intertwining_residual >= 0.0);
}

TEST_CASE("tuned singular well: unregularized Cook integral has no Cauchy decay") {
  const auto tw = tune_square_well(0.0, 1.0, 1.5, cplx(1.5, 2.8));
  Setup plain(build_schrodinger_1d(25.5, 256, well(0.0, 1.0, tw.c), 2.0));
  CookOptions o;
  o.T_max = 100.0;
  CHECK_THROWS_AS(cook_wave_operator(plain.model, plain.basis, plain.reg, WaveKind{WavePair::H_H0, -1}, o), Error);

  // r identically 1: the outgoing side amplifies and the smoothness integral blows up.
  SmoothnessOptions so;
  so.strict = false;
  so.T = 40.0;
  const double c40 = kato_smoothness(plain.model, plain.basis, plain.reg, -1, so).constant_time_domain;
  so.T = 80.0;
  const double c80 = kato_smoothness(plain.model, plain.basis, plain.reg, -1, so).constant_time_domain;
  CHECK(c80 >= 10.0 * c40);
}

TEST_CASE("smoothness of the free box and the dissipative well") {
  Setup free(build_schrodinger_1d(10.0, 64, Potential1D{}, 2.0));
  const double c0 = free_smoothness_constant(free.model);
  CHECK(std::isfinite(c0));
  CHECK(c0 > 0.0);

  Setup s(build_schrodinger_1d(12.0, 96, well(-1, 1, cplx(-2, -0.5)), 2.0));
  SmoothnessOptions so;
  so.strict = false;
  double prev_tail = INFINITY;
  for (double T : {40.0, 80.0, 160.0}) {
    so.T = T;
    const auto r = kato_smoothness(s.model, s.basis, s.reg, -1, so);
    CAPTURE(T);
    CHECK(std::isfinite(r.constant_time_domain));
    CHECK(r.constant_half_T <= r.constant_time_domain);
    CHECK(r.tail_fraction < prev_tail);
    CHECK(r.constant_freq_domain > 0.0);
    prev_tail = r.tail_fraction;
  }
  so.T = 10.0;
  so.strict = true;
  CHECK_THROWS_AS(kato_smoothness(s.model, s.basis, s.reg, -1, so), Error);
}

TEST_CASE("local wave operator on the free band reproduces the spectral projection") {
  Setup s(build_schrodinger_1d(10.0, 64, Potential1D{}, 2.0));
  const Band I{1.0, 20.0};
  const double eps = default_calc_eps(s.model, s.cls, I);
  const auto calc = make_interval_calc(s.model, s.reg, I, eps);
  const Mat P = regularized_spectral_projection(s.model, s.reg, calc);
  const auto r = local_wave_operator(s.model, s.basis, s.reg, calc, WaveKind{WavePair::H_H0, +1}, quick());
  CHECK(r.kind.local);
  CHECK(norm2(r.matrix - P) <= 1e-8);
  CHECK(r.tail_norm <= 1e-8);
  CHECK_THROWS_AS(local_wave_operator(s.model, s.basis, s.reg, calc, WaveKind{WavePair::Hstar_H0, +1}, quick()),
                  Error);
}
