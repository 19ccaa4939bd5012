#include "nss/singular.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>

namespace nss {

BoundaryResolvent::BoundaryResolvent(const OperatorModel& model, double max_cond) : model_(&model) {
  const Mat CW = model.C * model.W;
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < CW.cols(); ++j)
    if (CW.col(j).squaredNorm() > 0.0) cols.push_back(j);
  Mat CWs(CW.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) CWs.col(static_cast<Eigen::Index>(j)) = CW.col(cols[j]);

  auto dz = diagonalize(model.H);
  for (Eigen::Index i = 0; i < dz.d.size(); ++i) eigs_.push_back(dz.d(i));
  if (dz.usable(max_cond)) {
    spectral_ = true;
    left_ = model.C * dz.V;
    right_ = dz.Vinv * CWs;
    d_ = dz.d;
  } else {
    left_ = model.C;
    right_ = CWs;
  }
}

double BoundaryResolvent::norm(cplx z) const {
  if (right_.cols() == 0) return 0.0;
  Mat M;
  if (spectral_) {
    Vec s = (d_.array() - z).inverse();
    M = left_ * (s.asDiagonal() * right_);
  } else {
    M = left_ * solve_shifted(model_->H, z, right_);
  }
  // Largest eigenvalue of the small Gram matrix M^* M.
  Eigen::SelfAdjointEigenSolver<Mat> es(M.adjoint() * M, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

ExponentFit fit_exponent(const std::vector<double>& eps, const std::vector<double>& norms) {
  ExponentFit fit;
  const std::size_t n = eps.size();
  const std::size_t start = n / 2;
  if (n - start < 2) throw Error(ErrorCode::InvalidArgument, "exponent fit needs at least 4 schedule points");
  bool zero = true;
  for (std::size_t i = start; i < n; ++i) zero = zero && norms[i] == 0.0;
  if (zero) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double m = static_cast<double>(n - start);
  for (std::size_t i = start; i < n; ++i) {
    const double x = std::log(1.0 / eps[i]);
    const double y = std::log(norms[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
  }
  const double vx = sxx - sx * sx / m, vy = syy - sy * sy / m, cxy = sxy - sx * sy / m;
  fit.exponent = cxy / vx;
  fit.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  return fit;
}

double epsilon_floor(const OperatorModel& model, double lambda, double floor_factor) {
  return floor_factor * model.level_spacing(lambda);
}

std::vector<double> default_schedule(const OperatorModel& model, double lambda, const ScheduleOptions& opt) {
  const double lo = epsilon_floor(model, lambda, opt.floor_factor);
  std::vector<double> eps(opt.points);
  for (int i = 0; i < opt.points; ++i)
    eps[i] = lo * std::pow(opt.span, 1.0 - double(i) / (opt.points - 1));
  return eps;
}

BoundaryResolventProbe probe_point(const OperatorModel& model, double lambda, Side side,
                                   std::vector<double> schedule, const BoundaryResolvent* ctx) {
  const Band& band = model.ess_band;
  if (!(lambda > band.lo && lambda < band.hi))
    throw Error(ErrorCode::InvalidArgument, "probe point must lie in the band interior", lambda);
  std::optional<BoundaryResolvent> own;
  if (!ctx) ctx = &own.emplace(model);
  if (schedule.empty()) schedule = default_schedule(model, lambda);
  for (std::size_t i = 0; i < schedule.size(); ++i)
    if (!(schedule[i] > 0.0) || (i > 0 && !(schedule[i] < schedule[i - 1])))
      throw Error(ErrorCode::InvalidArgument, "eps schedule must be positive and strictly decreasing");

  BoundaryResolventProbe p;
  p.lambda = lambda;
  p.side = side;
  p.eps_schedule = schedule;
  p.eps_floor = epsilon_floor(model, lambda);
  const double sgn = side_sign(side);
  for (double e : schedule) {
    const double v = ctx->norm(cplx(lambda, sgn * e));
    if (!std::isfinite(v)) throw Error(ErrorCode::SingularShift, "boundary resolvent norm is not finite", e);
    p.norms.push_back(v);
  }
  const auto fit = fit_exponent(p.eps_schedule, p.norms);
  p.fitted_exponent = fit.exponent;
  p.fit_r2 = fit.r2;
  for (cplx mu : ctx->eigenvalues())
    if (std::abs(mu - lambda) <= schedule.front()) p.nearby_eigenvalues.push_back(mu);
  std::sort(p.nearby_eigenvalues.begin(), p.nearby_eigenvalues.end(),
            [](cplx a, cplx b) { return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag()); });
  return p;
}

namespace {

// Maximizes f on [lo, hi] by golden-section search.
template <typename F>
std::pair<double, double> golden_max(F f, double lo, double hi, double tol) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 >= f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 >= f2 ? std::make_pair(x1, f1) : std::make_pair(x2, f2);
}

}  // namespace

SingularityScan detect_singularities(const OperatorModel& model, const std::vector<double>& grid,
                                     const DetectOptions& opt) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > model.ess_band.lo && grid[i] < model.ess_band.hi))
      throw Error(ErrorCode::InvalidArgument, "singularity grid must lie inside the band", grid[i]);
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw Error(ErrorCode::InvalidArgument, "singularity grid must be increasing");
  }
  const BoundaryResolvent ctx(model);
  auto probe = [&](double lambda, Side side) {
    return probe_point(model, lambda, side, default_schedule(model, lambda, opt.schedule), &ctx);
  };

  SingularityScan scan;
  const std::size_t n = grid.size();
  scan.grid_probes.resize(2 * n);
  parallel_for(2 * n, [&](std::size_t k) {
    scan.grid_probes[k] = probe(grid[k / 2], k % 2 == 0 ? Side::Outgoing : Side::Incoming);
  });

  for (Side side : {Side::Outgoing, Side::Incoming}) {
    const std::size_t off = side == Side::Outgoing ? 0 : 1;
    auto exponent_at = [&](std::size_t i) { return scan.grid_probes[2 * i + off].fitted_exponent; };
    std::size_t i = 0;
    while (i < n) {
      if (exponent_at(i) < opt.flag_threshold) {
        ++i;
        continue;
      }
      std::size_t last = i;
      while (last + 1 < n && exponent_at(last + 1) >= opt.flag_threshold) ++last;
      std::size_t best = i;
      for (std::size_t j = i; j <= last; ++j)
        if (exponent_at(j) > exponent_at(best)) best = j;
      const double lo = grid[i > 0 ? i - 1 : i];
      const double hi = grid[last + 1 < n ? last + 1 : last];
      SingularityRecord rec;
      rec.side = side;
      rec.lambda = grid[best];
      rec.evidence = scan.grid_probes[2 * best + off];
      if (hi > lo) {
        auto [x, fx] = golden_max([&](double l) { return probe(l, side).fitted_exponent; }, lo, hi,
                                  opt.refine_tol * (hi - lo));
        if (fx > rec.evidence.fitted_exponent) {
          rec.lambda = x;
          rec.evidence = probe(x, side);
        }
      }
      rec.exponent = rec.evidence.fitted_exponent;
      rec.nu = std::max(1, static_cast<int>(std::lround(rec.exponent)));
      rec.unresolved = std::abs(rec.exponent - rec.nu) > opt.order_window;
      scan.records.push_back(std::move(rec));
      i = last + 1;
    }
  }
  std::sort(scan.records.begin(), scan.records.end(),
            [](const SingularityRecord& a, const SingularityRecord& b) { return a.lambda < b.lambda; });

  const double lam_inf = model.ess_band.lo + opt.infinity_fraction * model.ess_band.length();
  scan.infinity_probe[0] = probe(lam_inf, Side::Outgoing);
  scan.infinity_probe[1] = probe(lam_inf, Side::Incoming);
  const double e_inf = std::max(scan.infinity_probe[0].fitted_exponent, scan.infinity_probe[1].fitted_exponent);
  scan.nu_inf = e_inf >= opt.flag_threshold ? static_cast<int>(std::lround(e_inf)) : 0;
  return scan;
}

namespace {

// One RK4 pass for u'' = (V - k^2) u from x = b down to x = a on a piecewise
// constant potential; returns (u(a), u'(a)).
std::array<cplx, 2> integrate_left(const Potential1D& pot, cplx k, const std::vector<double>& knots, double hmax,
                                   int* steps) {
  const cplx k2 = k * k;
  const double b = knots.back();
  cplx u = std::exp(kI * k * b), up = kI * k * u;
  *steps = 0;
  for (std::size_t s = knots.size() - 1; s > 0; --s) {
    const double len = knots[s] - knots[s - 1];
    const cplx q = pot(0.5 * (knots[s] + knots[s - 1])) - k2;
    const int m = std::max(1, static_cast<int>(std::ceil(len / hmax)));
    const double h = -len / m;
    for (int i = 0; i < m; ++i) {
      // y' = (up, q u); q is constant on the piece.
      const cplx k1u = up, k1p = q * u;
      const cplx k2u = up + 0.5 * h * k1p, k2p = q * (u + 0.5 * h * k1u);
      const cplx k3u = up + 0.5 * h * k2p, k3p = q * (u + 0.5 * h * k2u);
      const cplx k4u = up + h * k3p, k4p = q * (u + h * k3u);
      u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
      up += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    }
    *steps += m;
  }
  return {u, up};
}

}  // namespace

JostCoefficients jost_coefficients(const Potential1D& pot, cplx k) {
  if (std::abs(k) < 1e-12) throw Error(ErrorCode::InvalidArgument, "Jost function is evaluated away from k = 0");
  JostCoefficients out;
  if (pot.empty()) {
    out.a = 1.0;
    out.b = 0.0;
    return out;
  }
  const double a = pot.support_lo(), b = pot.support_hi();
  std::vector<double> knots{a, b};
  for (const auto& piece : pot.pieces)
    for (double x : {piece.a, piece.b})
      if (x > a && x < b) knots.push_back(x);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  double kappa = std::abs(k);
  for (const auto& piece : pot.pieces) kappa = std::max(kappa, std::sqrt(std::abs(piece.value - k * k)));
  const double hmax = std::min((b - a) / 2000.0, 0.005 / kappa);

  auto coefficients = [&](double hstep, int* steps) {
    auto [u, up] = integrate_left(pot, k, knots, hstep, steps);
    const cplx ik = kI * k;
    return std::array<cplx, 2>{(ik * u + up) * std::exp(-ik * a) / (2.0 * ik),
                               (ik * u - up) * std::exp(ik * a) / (2.0 * ik)};
  };
  int coarse_steps = 0;
  const auto coarse = coefficients(hmax, &coarse_steps);
  const auto fine = coefficients(0.5 * hmax, &out.steps);
  out.a = fine[0];
  out.b = fine[1];
  const double scale = std::abs(fine[0]) + std::abs(fine[1]);
  out.richardson = (std::abs(fine[0] - coarse[0]) + std::abs(fine[1] - coarse[1])) / scale;
  if (out.richardson > 1e-8)
    throw Error(ErrorCode::StepTooCoarse, "RK4 half-step comparison exceeds 1e-8", out.richardson);
  return out;
}

cplx jost_function(const Potential1D& pot, cplx k) { return jost_coefficients(pot, k).a; }

namespace {

cplx jost_derivative(const Potential1D& pot, cplx k, double h) {
  return (jost_function(pot, k + h) - jost_function(pot, k - h)) / (2.0 * h);
}

}  // namespace

std::vector<RealResonance> find_real_resonances(const Potential1D& pot, double k_max, int scan_points) {
  if (!(k_max > 0.0)) throw Error(ErrorCode::InvalidArgument, "k_max must be positive", k_max);
  std::vector<RealResonance> out;
  if (pot.empty()) return out;
  const int n = std::max(scan_points, 8);
  std::vector<double> ks(n), mod(n);
  for (int i = 0; i < n; ++i) ks[i] = k_max * (i + 1) / n;
  parallel_for(n, [&](std::size_t i) { mod[i] = std::abs(jost_function(pot, ks[i])); });

  const double dk = k_max / n;
  for (int i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || mod[i] <= mod[i - 1];
    const bool right_ok = i == n - 1 || mod[i] <= mod[i + 1];
    if (!(left_ok && right_ok)) continue;
    // Newton on the analytic a(k), started from the scan minimum.
    cplx k = ks[i];
    cplx a = jost_function(pot, k);
    for (int it = 0; it < 60 && std::abs(a) > 1e-12; ++it) {
      const cplx da = jost_derivative(pot, k, 1e-6 * std::max(1.0, std::abs(k)));
      if (da == 0.0) break;
      cplx step = a / da;
      if (std::abs(step) > dk) step *= dk / std::abs(step);
      k -= step;
      a = jost_function(pot, k);
    }
    if (!(std::abs(a) <= 1e-10)) continue;
    if (std::abs(k.imag()) > 1e-6 * std::max(1.0, std::abs(k)) || k.real() <= 0.0 || k.real() > k_max) continue;
    bool dup = false;
    for (const auto& r : out) dup = dup || std::abs(r.k - k.real()) < 1e-6;
    if (dup) continue;
    RealResonance r;
    r.k = k.real();
    r.lambda = r.k * r.k;
    r.residual = std::abs(a);
    // First nonvanishing derivative by central differences.
    const double h = 1e-3 * std::max(1.0, r.k);
    const cplx d1 = (jost_function(pot, r.k + h) - jost_function(pot, r.k - h)) / (2.0 * h);
    const cplx d2 = (jost_function(pot, r.k + h) - 2.0 * jost_function(pot, r.k) + jost_function(pot, r.k - h)) / (h * h);
    r.multiplicity = std::abs(d1) > 1e-4 ? 1 : (std::abs(d2) > 1e-4 ? 2 : 3);
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const RealResonance& x, const RealResonance& y) { return x.k < y.k; });
  return out;
}

TunedWell tune_square_well(double a, double b, double k_star, cplx c0) {
  TunedWell t;
  t.c = c0;
  auto f = [&](cplx c) { return jost_function(Potential1D{{{a, b, c}}}, k_star); };
  for (t.iterations = 0; t.iterations < 60; ++t.iterations) {
    const cplx fc = f(t.c);
    t.residual = std::abs(fc);
    if (t.residual < 1e-13) break;
    const double d = 1e-6 * std::max(1.0, std::abs(t.c));
    const cplx fp = (f(t.c + d) - f(t.c - d)) / (2.0 * d);
    t.c -= fc / fp;
  }
  t.residual = std::abs(f(t.c));
  if (t.residual > 1e-10) throw Error(ErrorCode::NonConvergence, "square-well tuning did not converge", t.residual);
  return t;
}

}  // namespace nss
