#include "nss/waveop.hpp"

#include "nss/singular.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>

namespace nss {

namespace {

RegSelector side_selector(int sign) { return sign > 0 ? RegSelector::plus() : RegSelector::minus(); }

// Column norms of M U divided by those of U, maximized; zero columns skipped.
double max_ratio(const Mat& MU, const Mat& U) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    const double d = U.col(j).norm();
    if (d > 0.0) best = std::max(best, MU.col(j).norm() / d);
  }
  return best;
}

// Projected probes Pi U with columns that survive the projection.
Mat project_probes(const Mat& Pi, const Mat& U) {
  Mat P = Pi * U;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    if (P.col(j).norm() > 1e-8 * U.col(j).norm()) keep.push_back(j);
  Mat out(P.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = P.col(keep[k]);
  return out;
}

// k-th largest singular value (1-based), 0 when k exceeds the rank range.
double singular_value_at(const Mat& M, int k) {
  if (k < 1) return 0.0;
  const RVec s = singular_values(M);
  return k <= s.size() ? s(k - 1) : 0.0;
}

cplx phi(cplx w, double T) {
  // int_0^T e^{w t} dt
  const cplx x = w * T;
  if (std::abs(x) < 1e-6) return T * (1.0 + x / 2.0 + x * x / 6.0);
  return (std::exp(x) - 1.0) / w;
}

}  // namespace

// ---------------------------------------------------------------- ModalBasis

ModalBasis::ModalBasis(const OperatorModel& model, const SpectralData& data, double max_cond)
    : model_(&model), diag_(diagonalize(model.H)), Pi_ac_(data.Pi_ac) {
  const int n = model.dim();
  spectral_ = diag_.usable(max_cond);
  mask_.assign(static_cast<std::size_t>(n), 1);
  if (!spectral_) return;
  for (int a = 0; a < n; ++a) {
    const Vec v = diag_.V.col(a);
    mask_[a] = (data.Pi_p * v).norm() < 0.5 * v.norm();
  }
  if (std::all_of(mask_.begin(), mask_.end(), [](char c) { return c != 0; })) return;
  Vec m(n);
  for (int a = 0; a < n; ++a) m(a) = mask_[a] ? 1.0 : 0.0;
  Pi_ac_ = diag_.V * m.asDiagonal() * diag_.Vinv;
}

Mat ModalBasis::evolve_ac(double t, const Mat& U) const {
  if (!spectral_) return Propagator(model_->H).apply(t, Mat(Pi_ac_ * U));
  Vec e(diag_.d.size());
  for (Eigen::Index a = 0; a < e.size(); ++a) e(a) = mask_[a] ? std::exp(-kI * t * diag_.d(a)) : cplx(0.0);
  return diag_.V * (e.asDiagonal() * (diag_.Vinv * U));
}

Mat ModalBasis::function_ac(const std::function<cplx(cplx)>& f) const {
  if (!spectral_) throw Error(ErrorCode::IllConditioned, "modal functions need a usable diagonalization", diag_.cond);
  Vec e(diag_.d.size());
  for (Eigen::Index a = 0; a < e.size(); ++a) e(a) = mask_[a] ? f(diag_.d(a)) : cplx(0.0);
  return diag_.V * e.asDiagonal() * diag_.Vinv;
}

double ModalBasis::max_imag_ac() const {
  double v = -INFINITY;
  for (Eigen::Index a = 0; a < diag_.d.size(); ++a)
    if (mask_[a]) v = std::max(v, diag_.d(a).imag());
  return std::isfinite(v) ? v : 0.0;
}

double ModalBasis::min_imag_ac() const {
  double v = INFINITY;
  for (Eigen::Index a = 0; a < diag_.d.size(); ++a)
    if (mask_[a]) v = std::min(v, diag_.d(a).imag());
  return std::isfinite(v) ? v : 0.0;
}

// ------------------------------------------------------------------ WaveKind

std::string WaveKind::label() const {
  const char* s = sign > 0 ? "+" : "-";
  const char* pair_text = "";
  switch (pair) {
    case WavePair::H_H0: pair_text = "H,H0"; break;
    case WavePair::Hstar_H0: pair_text = "H*,H0"; break;
    case WavePair::H0_H: pair_text = "H0,H"; break;
    case WavePair::H0_Hstar: pair_text = "H0,H*"; break;
  }
  return std::string("W") + s + "(" + pair_text + (local ? ",I" : "") + ")";
}

// ---------------------------------------------------------------- WaveFamily

WaveFamily::WaveFamily(const OperatorModel& model, const ModalBasis& basis, const Mat& A, WaveKind kind)
    : model_(&model), basis_(&basis), kind_(kind), A_(A) {
  switch (kind.pair) {
    case WavePair::H_H0: left_ = {false, false}; right_ = {true, false}; break;
    case WavePair::Hstar_H0: left_ = {false, true}; right_ = {true, false}; break;
    case WavePair::H0_H: left_ = {true, false}; right_ = {false, false}; break;
    case WavePair::H0_Hstar: left_ = {true, false}; right_ = {false, true}; break;
  }
  spectral_ = basis.spectral();
  if (!spectral_) return;
  const auto& dg = basis.diag();
  const auto& mask = basis.ac_mask();
  auto coords = [&](const Side& s, Mat& P, Mat& Pinv, Vec& ev) {
    if (s.is_h0) {
      P = model.h0_vectors;
      Pinv = model.h0_vectors.adjoint();
      ev = model.h0_levels.cast<cplx>();
    } else if (s.star) {
      P = dg.Vinv.adjoint();
      Pinv = dg.V.adjoint();
      ev = dg.d.conjugate();
    } else {
      P = dg.V;
      Pinv = dg.Vinv;
      ev = dg.d;
    }
  };
  Mat Pl, Pl_inv, Pr, Pr_inv;
  coords(left_, Pl, Pl_inv, l_);
  coords(right_, Pr, Pr_inv, r_);
  At_ = Pl_inv * A * Pr;
  // A carries Pi_ac of H or H* on its H side: those rows or columns vanish exactly.
  for (Eigen::Index a = 0; a < At_.rows(); ++a)
    if (!mask[a]) {
      if (!left_.is_h0) At_.row(a).setZero();
      if (!right_.is_h0) At_.col(a).setZero();
    }
  Pl_ = std::move(Pl);
  Pl_inv_ = std::move(Pl_inv);
  Pr_ = std::move(Pr);
  Pr_inv_ = std::move(Pr_inv);
}

Mat WaveFamily::left_operator() const {
  if (left_.is_h0) return model_->H0;
  return left_.star ? model_->Hstar : model_->H;
}

Mat WaveFamily::right_operator() const {
  if (right_.is_h0) return model_->H0;
  return right_.star ? model_->Hstar : model_->H;
}

Mat WaveFamily::A() const {
  if (!spectral_) return A_;
  return Pl_ * At_ * Pr_inv_;
}

Mat WaveFamily::at(double t) const {
  const double s = kind_.sign * t;
  if (!spectral_) {
    return Propagator(left_operator()).matrix(-s) * A_ * Propagator(right_operator()).matrix(s);
  }
  Vec el(l_.size()), er(r_.size());
  for (Eigen::Index a = 0; a < el.size(); ++a) el(a) = std::exp(kI * s * l_(a));
  for (Eigen::Index b = 0; b < er.size(); ++b) er(b) = std::exp(-kI * s * r_(b));
  return Pl_ * (el.asDiagonal() * At_ * er.asDiagonal()) * Pr_inv_;
}

Mat WaveFamily::simpson(double t, double dt) const {
  const double s = kind_.sign * t;
  int m = std::max(2, 2 * static_cast<int>(std::ceil(t / (2.0 * dt))));
  const double h = s / m;
  if (spectral_) {
    // In eigen-coordinates the integrand is (l_a - r_b) At_ab e^{i sigma (l_a - r_b)}.
    Mat out = At_;
    for (Eigen::Index a = 0; a < At_.rows(); ++a)
      for (Eigen::Index b = 0; b < At_.cols(); ++b) {
        if (At_(a, b) == cplx(0.0)) continue;
        const cplx w = l_(a) - r_(b);
        const cplx step = std::exp(kI * h * w);
        cplx e = 1.0, sum = 0.0;
        for (int k = 0; k <= m; ++k) {
          const double c = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
          sum += c * e;
          e *= step;
        }
        out(a, b) += kI * w * At_(a, b) * sum * (h / 3.0);
      }
    return Pl_ * out * Pr_inv_;
  }
  const Mat L = left_operator(), R = right_operator();
  const Mat B = L * A_ - A_ * R;
  const Mat stepL = Propagator(L).matrix(-h), stepR = Propagator(R).matrix(h);
  Mat EL = Mat::Identity(L.rows(), L.cols()), ER = EL;
  Mat sum = Mat::Zero(A_.rows(), A_.cols());
  for (int k = 0; k <= m; ++k) {
    const double c = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += c * (EL * B * ER);
    EL = EL * stepL;
    ER = stepR * ER;
  }
  return A_ + kI * sum * (h / 3.0);
}

Mat WaveFamily::left_group(double s, const Mat& U) const {
  if (!spectral_) return Propagator(left_operator()).apply(-s, U);
  const Vec e = (kI * s * l_).array().exp();
  return Pl_ * (e.asDiagonal() * (Pl_inv_ * U));
}

Mat WaveFamily::right_group(double s, const Mat& U) const {
  if (!spectral_) return Propagator(right_operator()).apply(-s, U);
  const Vec e = (kI * s * r_).array().exp();
  return Pr_ * (e.asDiagonal() * (Pr_inv_ * U));
}

double WaveFamily::growth(double t) const {
  const double s = kind_.sign * t;
  if (!spectral_) {
    return Propagator(left_operator()).growth_bound(-s) * Propagator(right_operator()).growth_bound(s);
  }
  const auto& mask = basis_->ac_mask();
  double gl = 0.0, gr = 0.0;
  for (Eigen::Index a = 0; a < l_.size(); ++a)
    if (left_.is_h0 || mask[a]) gl = std::max(gl, std::exp(-s * l_(a).imag()));
  for (Eigen::Index b = 0; b < r_.size(); ++b)
    if (right_.is_h0 || mask[b]) gr = std::max(gr, std::exp(s * r_(b).imag()));
  const double cond = basis_->diag().cond;
  return gl * gr * ((left_.is_h0 ? 1.0 : cond) * (right_.is_h0 ? 1.0 : cond));
}

// ------------------------------------------------------------- Cook integral

Mat wave_symbol(const ModalBasis& basis, const Regularizer& reg, const WaveKind& kind) {
  const bool h_h0_side = kind.pair == WavePair::H_H0 || kind.pair == WavePair::H0_Hstar;
  const RegSelector sel = side_selector(h_h0_side ? -kind.sign : kind.sign);
  Mat A;
  if (selected_factors(reg, sel).empty()) {
    A = basis.Pi_ac();
  } else if (basis.spectral()) {
    A = basis.function_ac([&](cplx z) { return reg_eval_scalar(reg, sel, z); });
  } else {
    A = basis.Pi_ac() * reg_eval_operator(reg, sel, basis.model().H);
  }
  const bool star = kind.pair == WavePair::H0_Hstar || kind.pair == WavePair::Hstar_H0;
  return star ? Mat(A.adjoint()) : A;
}

namespace {

// Largest t in [0, T] with family.growth(t) <= budget (growth is monotone in t).
double time_budget(const WaveFamily& family, double T, double budget) {
  if (family.growth(T) <= budget) return T;
  double lo = 0.0, hi = T;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (family.growth(mid) <= budget ? lo : hi) = mid;
  }
  return lo;
}

WaveOperatorResult run_cook(const OperatorModel& model, const ModalBasis& basis, const Mat& A, WaveKind kind,
                            const CookOptions& opt) {
  if (!(opt.window > 0.0) || !(opt.T_max >= opt.window))
    throw Error(ErrorCode::InvalidArgument, "Cook window must be positive and at most T_max", opt.window);
  WaveFamily family(model, basis, A, kind);
  WaveOperatorResult res;
  res.kind = kind;
  res.spectral = family.spectral();
  res.T_budget = time_budget(family, opt.T_max, opt.growth_budget);
  res.budget_limited = res.T_budget < opt.T_max;
  const int n = model.dim();
  const Mat probes = probe_basis(n, opt.gaussians, opt.seed);
  // When LA = AR exactly the integrand vanishes and W(t) = A for every t.
  const Mat B = family.left_operator() * A - A * family.right_operator();
  const bool trivial = B.cwiseAbs().maxCoeff() == 0.0;
  auto W_at = [&](double t) {
    if (trivial) return A;
    return opt.dt > 0.0 ? family.simpson(t, opt.dt) : family.at(t);
  };

  Mat prev = trivial ? A : family.A();
  const int windows = static_cast<int>(std::floor(res.T_budget / opt.window + 1e-9));
  for (int k = 1; k <= windows; ++k) {
    const double t = k * opt.window;
    Mat cur = W_at(t);
    res.checkpoints.push_back(t);
    res.tails.push_back(max_ratio((cur - prev) * probes, probes));
    prev = std::move(cur);
    const std::size_t m = res.tails.size();
    if (m >= 3 && res.tails[m - 1] <= opt.tail_tol && res.tails[m - 2] >= res.tails[m - 1] &&
        res.tails[m - 3] >= res.tails[m - 2]) {
      res.accepted = true;
      break;
    }
  }
  res.matrix = std::move(prev);
  res.T_used = res.checkpoints.empty() ? 0.0 : res.checkpoints.back();
  res.tail_norm = res.tails.empty() ? 0.0 : res.tails.back();
  if (!res.accepted && !res.tails.empty()) {
    // Compare with the window ending closest to half the horizon.
    std::size_t half = 0;
    for (std::size_t i = 0; i < res.checkpoints.size(); ++i)
      if (std::abs(res.checkpoints[i] - 0.5 * res.T_used) < std::abs(res.checkpoints[half] - 0.5 * res.T_used))
        half = i;
    res.no_cauchy_decay = res.tail_norm > opt.tail_tol && res.tail_norm > 0.1 * res.tails[half];
  }
  if (!kind.local) {
    int rank_p = 0;
    for (char c : basis.ac_mask()) rank_p += !c;
    if (!basis.spectral()) rank_p = static_cast<int>(std::lround((Mat::Identity(n, n) - basis.Pi_ac()).trace().real()));
    res.min_sv_on_ac = singular_value_at(res.matrix, n - rank_p);
  }
  res.intertwining_residual = intertwining_residual(res, family, opt.t_samples, probes);
  if (opt.strict && res.no_cauchy_decay)
    throw Error(ErrorCode::NoCauchyDecay, kind.label() + ": window increment did not decay", res.tail_norm);
  return res;
}

}  // namespace

WaveOperatorResult cook_wave_operator(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                      WaveKind kind, const CookOptions& opt) {
  if (kind.local) throw Error(ErrorCode::InvalidArgument, "local kinds go through local_wave_operator");
  return run_cook(model, basis, wave_symbol(basis, reg, kind), kind, opt);
}

WaveOperatorResult cook_wave_operator(const OperatorModel& model, const SpectralData& data, const Regularizer& reg,
                                      WaveKind kind, const CookOptions& opt) {
  ModalBasis basis(model, data);
  return cook_wave_operator(model, basis, reg, kind, opt);
}

WaveOperatorResult local_wave_operator(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                       const IntervalCalc& calc, WaveKind kind, const CookOptions& opt) {
  if (kind.pair != WavePair::H_H0 && kind.pair != WavePair::H0_H)
    throw Error(ErrorCode::InvalidArgument, "local wave operators pair H with H0");
  kind.local = true;
  const Mat A = regularized_spectral_projection(model, reg, calc);
  return run_cook(model, basis, A, kind, opt);
}

double intertwining_residual(const WaveOperatorResult& result, const WaveFamily& family,
                             const std::vector<double>& t_samples, const Mat& probes) {
  double worst = 0.0;
  const Mat WU = result.matrix * probes;
  for (double t : t_samples) {
    const Mat diff = family.left_group(t, WU) - result.matrix * family.right_group(t, probes);
    worst = std::max(worst, max_ratio(diff, probes));
  }
  return worst;
}

double generator_intertwining_residual(const WaveOperatorResult& result, const WaveFamily& family,
                                       const Mat& probes) {
  const Mat L = family.left_operator();
  const Mat diff = L * (result.matrix * probes) - result.matrix * (family.right_operator() * probes);
  return max_ratio(diff, probes) / std::max(norm2(L), 1e-300);
}

// ------------------------------------------------------------- Diagnostics

AdjointPairReport adjoint_pair_check(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                     int sign, const CookOptions& opt) {
  CookOptions o = opt;
  o.strict = false;
  AdjointPairReport rep;
  rep.sign = sign;
  const WaveKind k1{WavePair::H_H0, sign}, k2{WavePair::H0_Hstar, sign};
  const WaveKind k3{WavePair::Hstar_H0, -sign}, k4{WavePair::H0_H, -sign};
  const auto w1 = cook_wave_operator(model, basis, reg, k1, o);
  const auto w2 = cook_wave_operator(model, basis, reg, k2, o);
  rep.budget = 2.0 * (w1.tail_norm + w2.tail_norm);
  // Compare all four at the same horizon.
  const double T = std::min(w1.T_used, w2.T_used);
  const WaveFamily f1(model, basis, wave_symbol(basis, reg, k1), k1), f2(model, basis, wave_symbol(basis, reg, k2), k2);
  const WaveFamily f3(model, basis, wave_symbol(basis, reg, k3), k3), f4(model, basis, wave_symbol(basis, reg, k4), k4);
  const Mat W1 = f1.at(T), W2 = f2.at(T);
  rep.adjoint_residual = norm2(Mat(W1.adjoint() - W2));
  rep.norms[0] = norm2(W1);
  rep.norms[1] = norm2(W2);
  rep.norms[2] = norm2(f3.at(T));
  rep.norms[3] = norm2(f4.at(T));
  rep.norm_spread = *std::max_element(rep.norms, rep.norms + 4) - *std::min_element(rep.norms, rep.norms + 4);
  // Hi_p(H^*) = Ran(I - Pi_ac(H))^* .
  const int n = model.dim();
  const Mat Pp_star = (Mat::Identity(n, n) - basis.Pi_ac()).adjoint();
  Eigen::JacobiSVD<Mat> svd(Pp_star, Eigen::ComputeThinU);
  const RVec& s = svd.singularValues();
  for (Eigen::Index j = 0; j < s.size(); ++j)
    if (s(j) > 0.5) rep.kernel_residual = std::max(rep.kernel_residual, (W2 * svd.matrixU().col(j)).norm());
  const double floor = 1e-8 * std::max(1.0, rep.norms[0]);
  rep.pass = rep.adjoint_residual <= std::max(rep.budget, floor) && rep.norm_spread <= std::max(2.0 * rep.budget, floor);
  return rep;
}

CompletenessReport completeness_check(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg,
                                      const CookOptions& opt, int sign) {
  CookOptions o = opt;
  o.strict = false;
  CompletenessReport rep;
  rep.hypothesis_holds = selected_factors(reg, side_selector(-sign)).empty();
  rep.sign = sign;
  const WaveKind kw{WavePair::H_H0, sign}, kx1{WavePair::H0_H, sign}, kx2{WavePair::H0_Hstar, sign};
  const auto w = cook_wave_operator(model, basis, reg, kw, o);
  rep.T = w.T_used;
  const WaveFamily fw(model, basis, wave_symbol(basis, reg, kw), kw);
  const WaveFamily f1(model, basis, wave_symbol(basis, reg, kx1), kx1);
  const WaveFamily f2(model, basis, wave_symbol(basis, reg, kx2), kx2);
  const Mat W = w.matrix, X1 = f1.at(rep.T), X2 = f2.at(rep.T);
  const int n = model.dim();
  int rank_p = 0;
  for (char c : basis.ac_mask()) rank_p += !c;
  if (!basis.spectral()) rank_p = static_cast<int>(std::lround((Mat::Identity(n, n) - basis.Pi_ac()).trace().real()));
  rep.min_sv_on_ac = w.min_sv_on_ac;
  rep.baseline_min_sv = singular_value_at(fw.A(), n - rank_p);
  const Mat U = project_probes(basis.Pi_ac(), probe_basis(n, o.gaussians, o.seed));
  rep.composition_inverse = max_ratio(W * (X1 * U) - U, U);
  rep.composition_adjoint = max_ratio(W * (X2 * U) - U, U);
  rep.composition_best = std::min(rep.composition_inverse, rep.composition_adjoint);
  const Mat diff = model.H * U - W * (model.H0 * (X1 * U));
  rep.similarity_residual = max_ratio(diff, U) / std::max(norm2(model.H), 1e-300);
  return rep;
}

SemigroupBounds semigroup_bounds(const ModalBasis& basis, const std::vector<double>& t_grid, const Mat& probes) {
  const Mat U = project_probes(basis.Pi_ac(), probes);
  SemigroupBounds b;
  b.m1 = INFINITY;
  b.m2 = 0.0;
  for (double t : t_grid) {
    const Mat E = basis.evolve_ac(t, U);
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
      const double r = E.col(j).norm() / U.col(j).norm();
      if (r < b.m1) { b.m1 = r; b.t_min = t; }
      if (r > b.m2) { b.m2 = r; b.t_max = t; }
    }
  }
  return b;
}

SemigroupBounds semigroup_bounds(const OperatorModel& model, const SpectralData& data, const std::vector<double>& t_grid,
                                 int gaussians, std::uint64_t seed) {
  return semigroup_bounds(ModalBasis(model, data), t_grid, probe_basis(model.dim(), gaussians, seed));
}

// ---------------------------------------------------------- Kato smoothness

double free_smoothness_constant(const OperatorModel& model, int grid_points) {
  const Band& band = model.ess_band;
  const Mat CU = model.C * model.h0_vectors;
  std::vector<double> sup(static_cast<std::size_t>(grid_points), 0.0);
  parallel_for(sup.size(), [&](std::size_t j) {
    const double lambda = band.lo + band.length() * (j + 0.5) / grid_points;
    const double eps = epsilon_floor(model, lambda);
    RVec w(model.h0_levels.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double x = model.h0_levels(k) - lambda;
      w(k) = eps / (x * x + eps * eps);
    }
    const Mat M = CU * w.cwiseSqrt().cast<cplx>().asDiagonal();
    sup[j] = norm2(M) * norm2(M);
  });
  return std::sqrt(2.0 * *std::max_element(sup.begin(), sup.end()));
}

namespace {

double min_eps_floor(const OperatorModel& model, int points = 48) {
  double e = INFINITY;
  for (int j = 0; j < points; ++j)
    e = std::min(e, epsilon_floor(model, model.ess_band.lo + model.ess_band.length() * (j + 0.5) / points));
  return e;
}

}  // namespace

SmoothnessReport kato_smoothness(const OperatorModel& model, const ModalBasis& basis, const Regularizer& reg, int side,
                                 const SmoothnessOptions& opt) {
  if (side != 1 && side != -1) throw Error(ErrorCode::InvalidArgument, "side must be +1 or -1", side);
  if (!(opt.T > 0.0)) throw Error(ErrorCode::InvalidArgument, "T must be positive", opt.T);
  SmoothnessReport rep;
  rep.side = side;
  rep.T = opt.T;
  rep.eps = opt.eps > 0.0 ? opt.eps : std::max(1.0 / opt.T, min_eps_floor(model));
  const RegSelector sel = side_selector(-side);
  const int n = model.dim();
  const Mat probes = probe_basis(n, opt.gaussians, opt.seed);

  // Each functional is sup_j x_j^* (G o K) x_j / ||u_j||^2.
  std::vector<double> values(3, 0.0);
  if (basis.spectral()) {
    const auto& dg = basis.diag();
    const auto& mask = basis.ac_mask();
    Vec rd(n);
    for (int a = 0; a < n; ++a) rd(a) = mask[a] ? reg_eval_scalar(reg, sel, dg.d(a)) : cplx(0.0);
    const Mat X = rd.asDiagonal() * (dg.Vinv * probes);
    const Mat M = model.C * dg.V;
    const Mat G = M.adjoint() * M;
    Mat K[3] = {Mat(n, n), Mat(n, n), Mat(n, n)};
    bool laplace_ok = true;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const cplx w = kI * double(side) * (dg.d(b) - std::conj(dg.d(a)));
        K[0](a, b) = phi(w, opt.T);
        K[1](a, b) = phi(w, 0.5 * opt.T);
        if (mask[a] && mask[b] && w.real() >= 2.0 * rep.eps) laplace_ok = false;
        K[2](a, b) = 1.0 / (2.0 * rep.eps - w);
      }
    for (int k = 0; k < 3; ++k) {
      const Mat Y = G.cwiseProduct(K[k]) * X;
      for (Eigen::Index j = 0; j < X.cols(); ++j)
        values[k] = std::max(values[k], (X.col(j).adjoint() * Y.col(j))(0).real() / probes.col(j).squaredNorm());
    }
    if (!laplace_ok) values[2] = INFINITY;
    for (double& v : values)
      if (std::isnan(v)) v = INFINITY;
  } else {
    // Simpson in t on a grid fine enough for ||H||.
    const Mat R = basis.Pi_ac() * reg_eval_operator(reg, sel, model.H);
    const Propagator prop(model.H);
    const double dt = std::min(0.05, 0.2 / std::max(1.0, norm2(model.H)));
    auto integrate = [&](double T, double damp) {
      const int m = std::max(2, 2 * static_cast<int>(std::ceil(T / (2.0 * dt))));
      const double h = T / m;
      RVec acc = RVec::Zero(probes.cols());
      for (int k = 0; k <= m; ++k) {
        const double t = k * h, c = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const Mat E = model.C * (R * prop.apply(-side * t, probes));
        for (Eigen::Index j = 0; j < E.cols(); ++j) acc(j) += c * std::exp(-2.0 * damp * t) * E.col(j).squaredNorm();
      }
      double best = 0.0;
      for (Eigen::Index j = 0; j < acc.size(); ++j) best = std::max(best, acc(j) * h / 3.0 / probes.col(j).squaredNorm());
      return best;
    };
    values[0] = integrate(opt.T, 0.0);
    values[1] = integrate(0.5 * opt.T, 0.0);
    values[2] = integrate(20.0 / rep.eps, rep.eps);
  }
  rep.constant_time_domain = values[0];
  rep.constant_half_T = values[1];
  rep.constant_freq_domain = values[2];
  rep.tail_fraction = values[0] > 0.0 ? (values[0] - values[1]) / values[0] : 0.0;
  rep.tail_converged = std::isfinite(values[0]) && rep.tail_fraction <= opt.tail_fraction;
  rep.ratio = values[2] > 0.0 ? values[0] / values[2] : (values[0] > 0.0 ? INFINITY : 1.0);
  rep.c0_H0 = free_smoothness_constant(model);
  if (opt.strict && !rep.tail_converged)
    throw Error(ErrorCode::TailNotConverged, "the [T/2, T] piece exceeds the allowed share", rep.tail_fraction);
  return rep;
}

}  // namespace nss
