#include "nss/regcalc.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace nss {

Regularizer make_regularizer(const OperatorModel& model, std::vector<SingularityRecord> singularities,
                             const std::vector<cplx>& spectrum, int nu_inf, std::optional<cplx> z0) {
  const Band& band = model.ess_band;
  Regularizer reg;
  reg.singularities = std::move(singularities);
  reg.nu_inf = nu_inf;
  reg.z0 = z0 ? *z0 : cplx(band.center(), band.length());
  if (nu_inf < 0) throw Error(ErrorCode::InvalidArgument, "nu_inf must be nonnegative", nu_inf);
  for (const auto& s : reg.singularities)
    if (s.nu < 1) throw Error(ErrorCode::InvalidArgument, "singularity orders must be >= 1", s.nu);
  if (reg.z0.imag() == 0.0) throw Error(ErrorCode::InvalidArgument, "z0 must be off the real axis");
  const double clearance = 0.1 * band.length();
  const double re = std::clamp(reg.z0.real(), band.lo, band.hi);
  if (std::abs(reg.z0 - cplx(re, 0.0)) < clearance)
    throw Error(ErrorCode::SingularShift, "z0 is too close to the band", std::abs(reg.z0 - re));
  for (cplx mu : spectrum)
    if (std::abs(reg.z0 - mu) < clearance)
      throw Error(ErrorCode::SingularShift, "z0 is too close to an eigenvalue", std::abs(reg.z0 - mu));
  return reg;
}

std::vector<std::size_t> selected_factors(const Regularizer& reg, const RegSelector& sel) {
  std::vector<std::size_t> out;
  const auto& s = reg.singularities;
  switch (sel.kind) {
    case RegSelector::Kind::Single:
      if (sel.j >= s.size()) throw Error(ErrorCode::InvalidArgument, "singularity index out of range", sel.j);
      out.push_back(sel.j);
      break;
    case RegSelector::Kind::Plus:
    case RegSelector::Kind::Minus: {
      const Side want = sel.kind == RegSelector::Kind::Plus ? Side::Outgoing : Side::Incoming;
      for (std::size_t j = 0; j < s.size(); ++j)
        if (s[j].side == want) out.push_back(j);
      break;
    }
    case RegSelector::Kind::All:
      for (std::size_t j = 0; j < s.size(); ++j) out.push_back(j);
      break;
    case RegSelector::Kind::Interval:
      for (std::size_t j = 0; j < s.size(); ++j)
        if (sel.I.contains(s[j].lambda)) out.push_back(j);
      break;
  }
  return out;
}

bool selects_infinity(const RegSelector& sel) { return sel.kind == RegSelector::Kind::All; }

namespace {

cplx eval_factors(const Regularizer& reg, const std::vector<std::size_t>& factors, bool infinity, cplx z) {
  const cplx dz = z - reg.z0;
  if (std::abs(dz) <= 1e-14 * std::max(1.0, std::abs(reg.z0)))
    throw Error(ErrorCode::PoleAtBasePoint, "regularizer evaluated at z0");
  cplx v = 1.0;
  for (std::size_t j : factors) {
    const auto& s = reg.singularities[j];
    v *= std::pow((z - s.lambda) / dz, s.nu);
  }
  if (infinity && reg.nu_inf > 0) v *= std::pow(1.0 / dz, reg.nu_inf);
  return v;
}

}  // namespace

cplx reg_eval_scalar(const Regularizer& reg, const RegSelector& sel, cplx z) {
  return eval_factors(reg, selected_factors(reg, sel), selects_infinity(sel), z);
}

Mat reg_eval_operator(const Regularizer& reg, const RegSelector& sel, const Mat& H) {
  const auto factors = selected_factors(reg, sel);
  const int n = static_cast<int>(H.rows());
  const Mat I = Mat::Identity(n, n);
  int poles = selects_infinity(sel) ? reg.nu_inf : 0;
  Mat out = I;
  for (std::size_t j : factors) {
    const auto& s = reg.singularities[j];
    for (int k = 0; k < s.nu; ++k) out = (H - s.lambda * I) * out;
    poles += s.nu;
  }
  if (poles > 0) {
    const ShiftedSolver R0(H, reg.z0);
    for (int k = 0; k < poles; ++k) out = R0.solve(out);
  }
  return out;
}

double IdentitySides::relative_residual() const {
  return (lhs - rhs).norm() / std::max({lhs.norm(), rhs.norm(), 1e-300});
}

IdentitySides factorization_identity(const Mat& H, cplx z, cplx lambda, int nu, cplx z0) {
  if (nu < 1) throw Error(ErrorCode::InvalidArgument, "nu must be >= 1", nu);
  const int n = static_cast<int>(H.rows());
  const Mat I = Mat::Identity(n, n);
  const Mat R0 = ShiftedSolver(H, z0).inverse();
  const Mat A = (H - lambda * I) * R0;
  const cplx a = (z - lambda) / (z - z0);
  IdentitySides out;
  Mat Anu = I;
  for (int k = 0; k < nu; ++k) Anu = Anu * A;
  out.lhs = Anu - std::pow(a, nu) * I;
  const Mat B = (H - z * I) * R0 * ((lambda - z0) / (z - z0));
  Mat sum = Mat::Zero(n, n), Ak = I;
  for (int k = 0; k < nu; ++k) {
    sum += std::pow(a, nu - 1 - k) * Ak;
    Ak = Ak * A;
  }
  out.rhs = B * sum;
  return out;
}

IdentitySides factorization_identity_infinity(const Mat& H, cplx z, int nu, cplx z0) {
  if (nu < 1) throw Error(ErrorCode::InvalidArgument, "nu must be >= 1", nu);
  const int n = static_cast<int>(H.rows());
  const Mat I = Mat::Identity(n, n);
  const Mat R0 = ShiftedSolver(H, z0).inverse();
  const cplx b = 1.0 / (z - z0);
  IdentitySides out;
  Mat Rnu = I;
  for (int k = 0; k < nu; ++k) Rnu = Rnu * R0;
  out.lhs = Rnu - std::pow(b, nu) * I;
  Mat sum = Mat::Zero(n, n), Rk = I;
  for (int k = 0; k < nu; ++k) {
    sum += std::pow(b, nu - 1 - k) * Rk;
    Rk = Rk * R0;
  }
  out.rhs = -(H - z * I) * R0 * b * sum;
  return out;
}

IntervalCalc make_interval_calc(const OperatorModel& model, const Regularizer& reg, Band I, double eps,
                                int quad_nodes) {
  const Band& band = model.ess_band;
  const double slack = 1e-12 * std::max(1.0, band.length());
  if (!(I.lo < I.hi) || I.lo < band.lo - slack || I.hi > band.hi + slack)
    throw Error(ErrorCode::InvalidArgument, "interval must be a nonempty subset of the band");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive", eps);
  if (quad_nodes < 2) throw Error(ErrorCode::InvalidArgument, "quad_nodes must be >= 2", quad_nodes);
  IntervalCalc calc;
  calc.I = I;
  calc.eps = eps;
  calc.quad_nodes = quad_nodes;
  calc.h_factors = selected_factors(reg, RegSelector::interval(I));
  return calc;
}

IntervalCalc full_band_calc(const OperatorModel& model, const Regularizer& reg, const Classification& cls,
                            double eps, int quad_nodes) {
  IntervalCalc calc = make_interval_calc(model, reg, model.ess_band, eps, quad_nodes);
  calc.h_factors = selected_factors(reg, RegSelector::all());
  calc.include_infinity = true;
  calc.pad = 8.0 * eps;
  const Band& band = model.ess_band;
  for (const auto& e : cls.discrete) {
    const double re = e.lambda.real();
    const double outside = std::max({band.lo - re, re - band.hi, 0.0});
    calc.pad = std::max(calc.pad, outside + 10.0 * std::abs(e.lambda.imag()));
  }
  return calc;
}

double default_calc_eps(const OperatorModel& model, const Classification& cls, const Band& I) {
  std::vector<char> special(cls.eig.clusters.size(), 0);
  double hi = INFINITY;
  for (const auto* list : {&cls.discrete, &cls.embedded, &cls.ambiguous})
    for (const auto& e : *list) special[e.cluster] = 1;
  for (const auto& e : cls.discrete)
    if (e.lambda.imag() != 0.0) hi = std::min(hi, 0.5 * std::abs(e.lambda.imag()));
  double lo = 0.0;
  for (std::size_t i = 0; i < cls.eig.clusters.size(); ++i)
    if (!special[i]) lo = std::max(lo, 2.5 * std::abs(cls.eig.clusters[i].lambda.imag()));
  // Treat roundoff-level imaginary parts of a Hermitian spectrum as zero.
  if (lo <= 1e-8 * std::max(1.0, model.ess_band.length())) lo = 0.0;
  const double pad = 0.05 * I.length();
  double spacing = model.min_level_spacing(I.lo - pad, I.hi + pad);
  if (!std::isfinite(spacing) || spacing <= 0.0) spacing = 1e-2 * I.length();
  return std::min(std::max(lo, 2e-3 * spacing), hi);
}

void gauss_legendre(int n, RVec& x, RVec& w) {
  // Golub-Welsch: nodes are eigenvalues of the Jacobi matrix.
  RMat J = RMat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<RMat> es(J);
  x = es.eigenvalues();
  w = 2.0 * es.eigenvectors().row(0).transpose().array().square();
}

namespace {

struct Anchor {
  double x;
  double scale;
};

// Panel breakpoints on [a, b]: lengths grow geometrically away from both ends,
// starting at the end scales, and never exceed max_len.
void graded_panels(double a, double b, double sa, double sb, double max_len, std::vector<double>& cuts) {
  const double mid = 0.5 * (a + b);
  std::vector<double> left, right;
  for (double p = a, len = std::min(sa, max_len); p + len < mid; len = std::min(2.0 * len, max_len)) {
    p += len;
    left.push_back(p);
  }
  for (double p = b, len = std::min(sb, max_len); p - len > mid; len = std::min(2.0 * len, max_len)) {
    p -= len;
    right.push_back(p);
  }
  std::vector<double> pts{a};
  pts.insert(pts.end(), left.begin(), left.end());
  pts.insert(pts.end(), right.rbegin(), right.rend());
  pts.push_back(b);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    cuts.push_back(pts[i]);
    const double len = pts[i + 1] - pts[i];
    if (len > max_len) {
      const int m = static_cast<int>(std::ceil(len / max_len));
      for (int k = 1; k < m; ++k) cuts.push_back(pts[i] + len * k / m);
    }
  }
}

struct Rule {
  std::vector<double> x, w;
};

Rule build_rule(double lo, double hi, std::vector<Anchor> anchors, double max_len, int q) {
  anchors.push_back({lo, INFINITY});
  anchors.push_back({hi, INFINITY});
  std::sort(anchors.begin(), anchors.end(), [](const Anchor& a, const Anchor& b) { return a.x < b.x; });
  std::vector<Anchor> merged;
  const double tiny = 1e-12 * std::max(1.0, hi - lo);
  for (const auto& a : anchors) {
    if (a.x < lo || a.x > hi) continue;
    if (!merged.empty() && a.x - merged.back().x <= tiny)
      merged.back().scale = std::min(merged.back().scale, a.scale);
    else
      merged.push_back(a);
  }
  for (auto& a : merged)
    if (!std::isfinite(a.scale)) a.scale = max_len;
  std::vector<double> cuts;
  for (std::size_t i = 0; i + 1 < merged.size(); ++i)
    graded_panels(merged[i].x, merged[i + 1].x, merged[i].scale, merged[i + 1].scale, max_len, cuts);
  cuts.push_back(hi);
  RVec gx, gw;
  gauss_legendre(q, gx, gw);
  Rule r;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double c = 0.5 * (cuts[i] + cuts[i + 1]), h = 0.5 * (cuts[i + 1] - cuts[i]);
    if (h <= 0.0) continue;
    for (int k = 0; k < q; ++k) {
      r.x.push_back(c + h * gx(k));
      r.w.push_back(h * gw(k));
    }
  }
  return r;
}

struct CalcSetup {
  double lo, hi;
  std::vector<Anchor> base;  // singularity anchors
  double max_len;
};

CalcSetup setup(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc, double t) {
  CalcSetup s;
  const Band& band = model.ess_band;
  const double edge = 1e-12 * std::max(1.0, band.length());
  s.lo = calc.I.lo - (std::abs(calc.I.lo - band.lo) <= edge ? calc.pad : 0.0);
  s.hi = calc.I.hi + (std::abs(calc.I.hi - band.hi) <= edge ? calc.pad : 0.0);
  for (std::size_t j : calc.h_factors) s.base.push_back({reg.singularities[j].lambda, 0.5 * calc.eps});
  s.max_len = std::max(calc.eps, 1e-3 * (s.hi - s.lo)) * 8.0;
  // At least 4 nodes per oscillation period of e^{itz}.
  if (t != 0.0) s.max_len = std::min(s.max_len, calc.quad_nodes * 2.0 * kPi / (4.0 * std::abs(t)));
  return s;
}

// Anchors at the real parts of eigenvalues; the scale resolves the pole of
// 1/(d - lambda -+ i eps) at distance |Im d -+ eps| from the line.
std::vector<Anchor> eigen_anchors(const std::vector<cplx>& eigs, double eps, const CalcSetup& s) {
  std::vector<Anchor> out = s.base;
  const double floor = 1e-9 * std::max(1.0, s.hi - s.lo);
  for (cplx d : eigs) {
    const double dist = std::min(std::abs(d.imag() - eps), std::abs(d.imag() + eps));
    out.push_back({d.real(), std::max(0.5 * std::min(eps, dist), floor)});
  }
  return out;
}

cplx weight_h(const Regularizer& reg, const IntervalCalc& calc, cplx z, double t) {
  cplx v = eval_factors(reg, calc.h_factors, calc.include_infinity, z);
  if (t != 0.0) v *= std::exp(kI * t * z);
  return v;
}

constexpr double kQuadTol = 1e-6;
constexpr int kMaxPanelNodes = 64;

// Coefficients c_a of the rational-times-exponential calculus in the eigenbasis.
Vec spectral_coefficients(const Vec& d, const Regularizer& reg, const IntervalCalc& calc, double eps, double t,
                          const CalcSetup& s, int q, int* nodes) {
  std::vector<cplx> eigs(d.data(), d.data() + d.size());
  const Rule rule = build_rule(s.lo, s.hi, eigen_anchors(eigs, eps, s), s.max_len, q);
  *nodes = static_cast<int>(rule.x.size());
  const Eigen::Index n = d.size();
  std::vector<cplx> hp(rule.x.size()), hm(rule.x.size());
  for (std::size_t k = 0; k < rule.x.size(); ++k) {
    hp[k] = rule.w[k] * weight_h(reg, calc, cplx(rule.x[k], eps), t);
    hm[k] = rule.w[k] * weight_h(reg, calc, cplx(rule.x[k], -eps), t);
  }
  Vec c(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t a) {
    cplx acc = 0.0;
    for (std::size_t k = 0; k < rule.x.size(); ++k) {
      acc += hp[k] / (d(a) - cplx(rule.x[k], eps));
      acc -= hm[k] / (d(a) - cplx(rule.x[k], -eps));
    }
    c(a) = acc / (2.0 * kPi * kI);
  });
  return c;
}

Mat direct_integral(const Mat& H, const std::vector<cplx>& eigs, const Regularizer& reg, const IntervalCalc& calc,
                    double eps, double t, const CalcSetup& s, int q, int* nodes) {
  const Rule rule = build_rule(s.lo, s.hi, eigen_anchors(eigs, eps, s), s.max_len, q);
  *nodes = static_cast<int>(rule.x.size());
  const int n = static_cast<int>(H.rows());
  const Mat I = Mat::Identity(n, n);
  std::vector<Mat> parts(rule.x.size());
  parallel_for(rule.x.size(), [&](std::size_t k) {
    const cplx zp(rule.x[k], eps), zm(rule.x[k], -eps);
    parts[k] = rule.w[k] * (weight_h(reg, calc, zp, t) * ShiftedSolver(H, zp).solve(I) -
                            weight_h(reg, calc, zm, t) * ShiftedSolver(H, zm).solve(I));
  });
  Mat out = Mat::Zero(n, n);
  for (const auto& p : parts) out += p;
  return out / (2.0 * kPi * kI);
}

Mat calculus(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc, double t,
             QuadratureInfo* info) {
  const CalcSetup s = setup(model, reg, calc, t);
  const auto dz = diagonalize(model.H);
  QuadratureInfo qi;
  qi.spectral = dz.usable(1e8);
  auto converge = [&](auto&& eval, auto&& diff) {
    int q = calc.quad_nodes, nodes = 0;
    auto prev = eval(q, &nodes);
    for (;;) {
      if (2 * q > kMaxPanelNodes)
        throw Error(ErrorCode::QuadratureNotConverged, "Gauss-Legendre doubling did not stabilize", qi.change);
      int n2 = 0;
      auto next = eval(2 * q, &n2);
      qi.change = diff(prev, next);
      q *= 2;
      nodes = n2;
      prev = std::move(next);
      if (qi.change <= kQuadTol) break;
    }
    qi.nodes = nodes;
    qi.panel_nodes = q;
    return prev;
  };
  Mat out;
  if (qi.spectral) {
    auto diff = [](const Vec& a, const Vec& b) {
      return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
    };
    const Vec c1 = converge(
        [&](int q, int* n) { return spectral_coefficients(dz.d, reg, calc, calc.eps, t, s, q, n); }, diff);
    const Vec c2 = converge(
        [&](int q, int* n) { return spectral_coefficients(dz.d, reg, calc, 0.5 * calc.eps, t, s, q, n); }, diff);
    const Vec c = 2.0 * c2 - c1;
    out = dz.V * c.asDiagonal() * dz.Vinv;
  } else {
    std::vector<cplx> eigs(dz.d.data(), dz.d.data() + dz.d.size());
    auto diff = [](const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); };
    const Mat P1 = converge(
        [&](int q, int* n) { return direct_integral(model.H, eigs, reg, calc, calc.eps, t, s, q, n); }, diff);
    const Mat P2 = converge(
        [&](int q, int* n) { return direct_integral(model.H, eigs, reg, calc, 0.5 * calc.eps, t, s, q, n); }, diff);
    out = 2.0 * P2 - P1;
  }
  if (info) *info = qi;
  return out;
}

}  // namespace

Mat regularized_spectral_projection(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc,
                                    QuadratureInfo* info) {
  return calculus(model, reg, calc, 0.0, info);
}

Mat regularized_evolution(const OperatorModel& model, const Regularizer& reg, const IntervalCalc& calc, double t,
                          QuadratureInfo* info) {
  return calculus(model, reg, calc, t, info);
}

double resolution_of_identity_residual(const OperatorModel& model, const Regularizer& reg, const Mat& Pi_disc,
                                       const IntervalCalc& full_band) {
  const Mat r = reg_eval_operator(reg, RegSelector::all(), model.H);
  const Mat band_part = regularized_spectral_projection(model, reg, full_band);
  return norm2(Mat(r - r * Pi_disc - band_part));
}

}  // namespace nss
