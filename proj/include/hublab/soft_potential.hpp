// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "hublab/fermi.hpp"
#include "hublab/fft.hpp"
#include "hublab/lanczos.hpp"
#include "hublab/lattice.hpp"
#include "hublab/scattering.hpp"

namespace hublab {

// ---- radial cutoff profile ---------------------------------------------------

/// Fixed quintic smoothstep in t = |p|: 0 below 1, 1 above 2, C^2 across.
struct CutoffProfile {
  double operator()(double t) const { return smoothstep_ramp(t); }
};

inline CutoffProfile build_cutoff() { return {}; }

// ---- periodic box helpers ----------------------------------------------------

/// Side-lambda periodic box with the origin at a corner; fields on it wrap.
inline BoxRegion period_box(int lambda) {
  if (lambda < 2) throw std::invalid_argument("period_box: lambda must be >= 2");
  return BoxRegion::bounds({0, 0, 0}, {lambda - 1, lambda - 1, lambda - 1});
}

namespace detail {

inline int min_image_1d(int v, int n) {
  int r = v % n;
  if (r < 0) r += n;
  return 2 * r > n ? r - n : r;
}

inline Vec3i min_image(Vec3i p, int n) {
  return {min_image_1d(p.x, n), min_image_1d(p.y, n), min_image_1d(p.z, n)};
}

/// theta_{A(R)} on the periodic box, by minimum-image sup-norm.
inline std::vector<double> theta_cube(int radius, int lambda) {
  BoxRegion box = period_box(lambda);
  std::vector<double> theta(box.size(), 0.0);
  box.for_each([&](Vec3i p) {
    if (min_image(p, lambda).norm_inf() <= radius) theta[box.index(p)] = 1.0;
  });
  return theta;
}

/// Symmetrized theta-weighted kinetic form on the periodic box: graph
/// Laplacian with edge weights (theta(x) + theta(y)) / 2.
inline void neumann_theta_apply(const std::vector<double>& theta, int lambda,
                                const double* x, double* y) {
  const std::int64_t n2 = std::int64_t(lambda) * lambda;
  const std::int64_t n3 = n2 * lambda;
  std::fill(y, y + n3, 0.0);
  for (std::int64_t i = 0; i < n3; ++i) {
    const int iz = int(i % lambda);
    const int iy = int((i / lambda) % lambda);
    const int ix = int(i / n2);
    const std::int64_t nbr[3] = {
        (ix + 1 == lambda ? i - (n3 - n2) : i + n2),
        (iy + 1 == lambda ? i - (n2 - lambda) : i + lambda),
        (iz + 1 == lambda ? i - (lambda - 1) : i + 1)};
    for (const std::int64_t j : nbr) {
      const double w = 0.5 * (theta[i] + theta[j]);
      if (w == 0.0) continue;
      const double d = x[i] - x[j];
      y[i] += w * d;
      y[j] -= w * d;
    }
  }
}

/// y = Re IDFT[ table * DFT[x] ]; table is a real spectral multiplier.
inline void spectral_multiply_apply(const std::vector<double>& table, int lambda,
                                    std::vector<cplx>& buf, const double* x,
                                    double* y) {
  const std::int64_t n = std::int64_t(table.size());
  for (std::int64_t i = 0; i < n; ++i) buf[i] = x[i];
  dft3(buf, lambda, lambda, lambda, -1);
  for (std::int64_t i = 0; i < n; ++i) buf[i] *= table[i];
  dft3(buf, lambda, lambda, lambda, +1);
  for (std::int64_t i = 0; i < n; ++i) y[i] = buf[i].real();
}

}  // namespace detail

// ---- momentum filter pair ------------------------------------------------------

/// High/low momentum splitting h, h' with multipliers on the period-lambda
/// grid and the real-space kernel of C_{h'}.
struct FilterPair {
  double s = 0.0;  // cutoff scale; 0 marks the trivial filter (h-hat == 1)
  int lambda = 0;
  bool trivial = false;
  SpectralGrid h_hat;   // l(s|p|)
  SpectralGrid hp_hat;  // 1 - l(s|p|)
  LatticeField hp;      // real-space kernel of C_{h'}, periodic
  double abs_sum = 0.0;     // sum_x |h'(x)|
  double mass = 0.0;        // sum_x h'(x) = 1 - h_hat(0)
  int trunc_radius = 0;     // tail mass of |h'| beyond it is <= trunc_error
  double trunc_error = 0.0;
};

inline FilterPair build_filter(double s, int lambda) {
  if (!(s >= 1.0))
    throw std::invalid_argument("build_filter: scale must satisfy s >= 1");
  if (double(lambda) < 8.0 * s)
    throw std::invalid_argument(
        "build_filter: period too small to resolve the support |p| <= 2/s");
  FilterPair fp;
  fp.s = s;
  fp.lambda = lambda;
  CutoffProfile l;
  fp.h_hat = SpectralGrid(lambda, lambda, lambda);
  fp.hp_hat = SpectralGrid(lambda, lambda, lambda);
  for (std::int64_t i = 0; i < fp.h_hat.size(); ++i) {
    const auto p = fp.h_hat.momentum(i);
    const double pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    const double v = l(s * pn);
    fp.h_hat[i] = v;
    fp.hp_hat[i] = 1.0 - v;
  }
  fp.hp = idft(fp.hp_hat, period_box(lambda));
  double max_imag = 0.0;
  for (auto& v : fp.hp.values()) {
    max_imag = std::max(max_imag, std::abs(v.imag()));
    v = cplx(v.real(), 0.0);
  }
  if (max_imag > 1e-10)
    throw std::logic_error("build_filter: kernel has a complex part");

  // Tail profile of |h'| by minimum-image sup-norm shells.
  std::vector<double> shell(lambda / 2 + 1, 0.0);
  fp.hp.box().for_each([&](Vec3i p) {
    const int d = detail::min_image(p, lambda).norm_inf();
    const double v = fp.hp.at(p).real();
    shell[d] += std::abs(v);
    fp.abs_sum += std::abs(v);
    fp.mass += v;
  });
  double tail = 0.0;
  fp.trunc_radius = lambda / 2;
  for (int r = lambda / 2; r >= 1; --r) {
    if (tail + shell[r] > 1e-12 * std::max(fp.abs_sum, 1.0)) break;
    tail += shell[r];
    fp.trunc_radius = r - 1;
  }
  fp.trunc_error = tail;
  return fp;
}

/// h-hat == 1 everywhere: C_h is the identity and h' vanishes.
inline FilterPair trivial_filter(int lambda) {
  FilterPair fp;
  fp.lambda = lambda;
  fp.trivial = true;
  fp.h_hat = SpectralGrid(lambda, lambda, lambda);
  fp.hp_hat = SpectralGrid(lambda, lambda, lambda);
  for (std::int64_t i = 0; i < fp.h_hat.size(); ++i) fp.h_hat[i] = 1.0;
  fp.hp = LatticeField(period_box(lambda), true);
  return fp;
}

// ---- shift-difference field f_r ------------------------------------------------

/// f_r(x) = max_{y in x + A(r)} |h'(y) - h'(x)| on the periodic box.
inline LatticeField f_r_compute(const FilterPair& pair, int r) {
  if (r < 1) throw std::invalid_argument("f_r_compute: r must be >= 1");
  const int lambda = pair.lambda;
  if (2 * r + 1 > lambda)
    throw std::invalid_argument("f_r_compute: window exceeds the period");
  BoxRegion box = period_box(lambda);
  LatticeField out(box, true);
  if (pair.trivial) return out;

  const std::int64_t n = box.size();
  std::vector<double> cur(n), hi(n), lo(n), tmp(n);
  for (std::int64_t i = 0; i < n; ++i) cur[i] = pair.hp[i].real();
  hi = cur;
  lo = cur;
  // Separable sliding window extrema over x + [-r, r]^3 with wraparound.
  const std::int64_t strides[3] = {std::int64_t(lambda) * lambda, lambda, 1};
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t st = strides[axis];
    auto window = [&](std::vector<double>& f, bool take_max) {
      for (std::int64_t base = 0; base < n; ++base) {
        // base runs over all sites; extract the axis coordinate.
        const std::int64_t c = (base / st) % lambda;
        double best = f[base];
        for (int d = -r; d <= r; ++d) {
          std::int64_t cc = c + d;
          cc -= lambda * ((cc % lambda + lambda) / lambda - 1);  // wrap to [0,lambda)
          cc %= lambda;
          const std::int64_t j = base + (cc - c) * st;
          best = take_max ? std::max(best, f[j]) : std::min(best, f[j]);
        }
        tmp[base] = best;
      }
      f.swap(tmp);
    };
    window(hi, true);
    window(lo, false);
  }
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = std::max(hi[i] - cur[i], cur[i] - lo[i]);
  return out;
}

// ---- soft potential set --------------------------------------------------------

/// (2R+1)^{-3} (theta_{A(R)} - P_{A(R)}): the scaled gap between the cube
/// indicator and the rank-one projection onto constants on the cube.
struct ConstantGapProjector {
  int radius = 0;
  double scale = 0.0;  // (2R+1)^{-3}
};

struct SoftPotentialSet {
  int R = 0;
  double eps = 0.0, eta = 0.0;
  LatticeField u;    // (2R+1)^{-3} theta_{A(R)}
  LatticeField w;    // 16 pi f_R(x) sum_y f_R(y)
  LatticeField f_r;  // shift-difference field at radius R
  double f_sum = 0.0;
  double u_sum = 0.0, u_max = 0.0;
  double w_sum = 0.0, w_max = 0.0;
  ConstantGapProjector v;
};

inline SoftPotentialSet build_soft_set(const FilterPair& pair, int R, double eps,
                                       double eta) {
  if (R < 1) throw std::invalid_argument("build_soft_set: R must be >= 1");
  if (!(eps > 0.0 && eps < 1.0) || !(eta > 0.0 && eta < 1.0))
    throw std::invalid_argument("build_soft_set: eps, eta must lie in (0,1)");
  if (2 * R + 1 > pair.lambda)
    throw std::invalid_argument("build_soft_set: A(R) does not fit the period");
  SoftPotentialSet set;
  set.R = R;
  set.eps = eps;
  set.eta = eta;
  set.v = {R, 1.0 / std::pow(2.0 * R + 1, 3)};

  BoxRegion box = period_box(pair.lambda);
  set.u = LatticeField(box, true);
  box.for_each([&](Vec3i p) {
    if (detail::min_image(p, pair.lambda).norm_inf() <= R)
      set.u.set(p, set.v.scale);
  });
  for (const auto& v : set.u.values()) {
    set.u_sum += v.real();
    set.u_max = std::max(set.u_max, v.real());
  }

  set.f_r = f_r_compute(pair, R);
  for (const auto& v : set.f_r.values()) set.f_sum += v.real();
  set.w = LatticeField(box, true);
  const double c = 16.0 * std::numbers::pi * set.f_sum;
  for (std::int64_t i = 0; i < set.w.size(); ++i) {
    const double wv = c * set.f_r[i].real();
    set.w[i] = wv;
    set.w_sum += wv;
    set.w_max = std::max(set.w_max, wv);
  }
  return set;
}

// ---- scaling survey --------------------------------------------------------

struct ScalingReport {
  int R = 0;
  double s = 0.0;
  double max_w = 0.0;
  double sum_w = 0.0;
  double config_max = 0.0;  // max_x sum_i W(x - y_i) over a separated grid
  int n_centers = 0;
};

/// Lattice centers pairwise farther apart than 2 sqrt(3) R on the torus.
inline std::vector<Vec3i> separated_config(int R, int lambda) {
  const int spacing = int(std::floor(2.0 * std::sqrt(3.0) * R)) + 1;
  const int per_axis = std::max(1, lambda / spacing);
  std::vector<Vec3i> ys;
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j)
      for (int k = 0; k < per_axis; ++k)
        ys.push_back({i * spacing, j * spacing, k * spacing});
  return ys;
}

inline ScalingReport scaling_report(const FilterPair& pair, int R) {
  ScalingReport rep;
  rep.R = R;
  rep.s = pair.s;
  if (pair.trivial) return rep;
  if (!(R >= 1 && double(R) <= pair.s))
    throw std::invalid_argument("scaling_report: requires 1 <= R <= s");

  SoftPotentialSet set = build_soft_set(pair, R, 0.5, 0.5);
  rep.max_w = set.w_max;
  rep.sum_w = set.w_sum;

  const auto ys = separated_config(R, pair.lambda);
  rep.n_centers = int(ys.size());
  // Superpose the translates spectrally: W * comb.
  LatticeField comb(period_box(pair.lambda), true);
  for (const auto& y : ys) comb.set(y, 1.0);
  SpectralGrid wh = dft(set.w), ch = dft(comb);
  for (std::int64_t i = 0; i < wh.size(); ++i) wh[i] *= ch[i];
  LatticeField g = idft(wh, comb.box());
  for (const auto& v : g.values())
    rep.config_max = std::max(rep.config_max, v.real());
  return rep;
}

struct PowerFit {
  double log_c = 0.0;
  double exp_r = 0.0;
  double exp_s = 0.0;
};

/// Least-squares fit of value ~ c R^a s^b over (R, s, value) samples.
inline PowerFit fit_power_law(const std::vector<std::array<double, 3>>& pts) {
  if (pts.size() < 3)
    throw std::invalid_argument("fit_power_law: needs at least 3 samples");
  Eigen::MatrixXd m(pts.size(), 3);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i][0] > 0 && pts[i][1] > 0 && pts[i][2] > 0))
      throw std::invalid_argument("fit_power_law: samples must be positive");
    m(i, 0) = 1.0;
    m(i, 1) = std::log(pts[i][0]);
    m(i, 2) = std::log(pts[i][1]);
    b[i] = std::log(pts[i][2]);
  }
  Eigen::Vector3d x = m.colPivHouseholderQr().solve(b);
  return {x[0], x[1], x[2]};
}

// ---- Fermi-sea momentum split ---------------------------------------------------

struct MomentumSplit {
  double rho_u = 0.0;
  double e_f = 0.0;
  int lambda = 0;
  SpectralGrid m_hat;   // sqrt([1 - E_f / E(p)]_+)
  SpectralGrid mp_hat;  // sqrt(1 - m_hat^2)
};

inline MomentumSplit build_momentum_split(double rho_u, int lambda) {
  if (lambda < 2)
    throw std::invalid_argument("build_momentum_split: lambda must be >= 2");
  MomentumSplit ms;
  ms.rho_u = rho_u;
  ms.e_f = rho_u == 0.0 ? 0.0 : fermi_energy(rho_u);
  ms.lambda = lambda;
  ms.m_hat = SpectralGrid(lambda, lambda, lambda);
  ms.mp_hat = SpectralGrid(lambda, lambda, lambda);
  for (std::int64_t i = 0; i < ms.m_hat.size(); ++i) {
    const double e = dispersion(ms.m_hat.momentum(i));
    const double m2 =
        ms.e_f <= 0.0 ? 1.0 : (e > ms.e_f ? 1.0 - ms.e_f / e : 0.0);
    ms.m_hat[i] = std::sqrt(m2);
    ms.mp_hat[i] = std::sqrt(1.0 - m2);
  }
  return ms;
}

/// min_p [ m_hat(p)^2 E(p) - factor * h_hat(p)^2 E(p) ]; both operators are
/// diagonal in momentum, so the spectral gap of the difference is exact.
inline double momentum_domination_min(const MomentumSplit& split,
                                      const FilterPair& pair, double factor) {
  if (split.lambda != pair.lambda)
    throw std::invalid_argument("momentum_domination_min: grid mismatch");
  double mn = std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < split.m_hat.size(); ++i) {
    const double e = dispersion(split.m_hat.momentum(i));
    const double m2 = split.m_hat[i].real() * split.m_hat[i].real();
    const double h2 = pair.h_hat[i].real() * pair.h_hat[i].real();
    mn = std::min(mn, (m2 - factor * h2) * e);
  }
  return mn;
}

// ---- high-momentum retention margin ----------------------------------------------

struct SesMargin {
  double s = 0.0;
  double rho_u = 0.0;
  double e_f = 0.0;
  double min_band = 0.0;  // min E(p) over |p| >= 1/s, p in [-pi,pi]^3
  double factor = 0.0;    // [1 - e_f / min_band]_+
  double proxy_c = 0.0;   // calibrated constant of the lower-bound proxy
  double proxy = 0.0;     // [1 - proxy_c s^2 rho_u^{2/3}]_+
};

/// min over {|p| >= 1/s} of E(p): by concavity of 4 sin^2(sqrt(u)/2) the
/// constrained minimum sits on a coordinate axis at |p| = 1/s.
inline double min_band_energy(double s) {
  const double x = std::sin(0.5 / s);
  return 4.0 * x * x;
}

/// Proxy constant calibrated once as the max of (1 - factor)/(s^2 rho^{2/3})
/// over a fixed grid, so the proxy lower-bounds the exact factor there.
inline double ses_proxy_constant() {
  static const double c = [] {
    double cmax = 0.0;
    for (double s : {1.0, 2.0, 4.0, 8.0, 16.0})
      for (double rho : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
        const double ef = fermi_energy(rho);
        const double mb = min_band_energy(s);
        const double factor = ef >= mb ? 0.0 : 1.0 - ef / mb;
        cmax = std::max(cmax, (1.0 - factor) / (s * s * std::pow(rho, 2.0 / 3.0)));
      }
    return cmax;
  }();
  return c;
}

inline SesMargin ses_margin(double s, double rho_u) {
  if (!(s >= 1.0)) throw std::invalid_argument("ses_margin: s must be >= 1");
  SesMargin m;
  m.s = s;
  m.rho_u = rho_u;
  m.e_f = rho_u == 0.0 ? 0.0 : fermi_energy(rho_u);
  m.min_band = min_band_energy(s);
  m.factor = m.e_f >= m.min_band ? 0.0 : 1.0 - m.e_f / m.min_band;
  m.proxy_c = ses_proxy_constant();
  m.proxy = std::max(0.0, 1.0 - m.proxy_c * s * s * std::pow(rho_u, 2.0 / 3.0));
  return m;
}

// ---- parameter heuristics ---------------------------------------------------

struct ParamHeuristics {
  double a = 0.0, rho = 0.0;
  double x = 0.0;  // a^3 rho
  double r_raw = 0.0, s_raw = 0.0;
  int R = 0;
  int s = 0;
  double eps = 0.0, eta = 0.0, delta = 0.0;
  bool eps_valid = false;     // 0 < eps < 1
  bool smallness_ok = false;  // (a rho^{1/3})^{1/10} >= rho^{1/3}
  bool range_ok = false;      // 1 <= R <= s
  bool valid = false;
};

inline ParamHeuristics param_heuristics(double a, double rho) {
  if (!(a > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("param_heuristics: a, rho must be positive");
  ParamHeuristics h;
  h.a = a;
  h.rho = rho;
  h.x = a * a * a * rho;
  const double rho3 = std::pow(rho, -1.0 / 3.0);
  h.r_raw = rho3 * std::pow(h.x, 1.0 / 30.0);
  h.s_raw = rho3 * std::pow(h.x, 1.0 / 90.0);
  h.R = std::max(1, int(std::llround(h.r_raw)));
  h.s = std::max(1, int(std::llround(h.s_raw)));
  h.eps = h.eta = h.delta = std::pow(h.x, 1.0 / 45.0);
  h.eps_valid = h.eps > 0.0 && h.eps < 1.0;
  h.smallness_ok =
      std::pow(a * std::pow(rho, 1.0 / 3.0), 0.1) >= std::pow(rho, 1.0 / 3.0);
  h.range_ok = h.R >= 1 && h.R <= h.s;
  h.valid = h.eps_valid && h.smallness_ok && h.range_ok;
  return h;
}

// ---- operator certification -----------------------------------------------------

struct CertificationReport {
  Coupling g = Coupling::finite(0.0);
  int R = 0;
  double s = 0.0;
  double eps = 0.0, eta = 0.0;
  double c_v = 0.0;
  int lambda = 0;
  int n_centers = 1;
  double min_eig = 0.0;
  double residual = 0.0;   // eigensolver residual bound
  double certified = 0.0;  // min_eig - residual
  double lhs_norm = 0.0;
  double tolerance = 0.0;  // pass threshold = 1e-10 * lhs_norm
  bool pass = false;
  bool lambda_rule_ok = true;     // lambda >= 8 max(R, s) guideline
  bool rhs_nonpositive = false;   // soft side <= 0, certification vacuous
  int iterations = 0;
};

namespace detail {

/// Deterministic start vector with the pinned coordinates zeroed.
inline std::vector<double> cert_start(std::int64_t n,
                                      const std::vector<std::int64_t>& pinned) {
  std::vector<double> v(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint64_t h = splitmix64(0xce27ull * 0x100000001b3ull + std::uint64_t(i));
    v[i] = double(h >> 11) * 0x1p-53 * 2.0 - 1.0;
  }
  for (auto i : pinned) v[i] = 0.0;
  return v;
}

inline std::vector<double> real_table(const SpectralGrid& g) {
  std::vector<double> t(g.size());
  for (std::int64_t i = 0; i < g.size(); ++i) t[i] = g[i].real();
  return t;
}

}  // namespace detail

/// <psi| C_h [theta_{A(R)}-weighted symmetrized kinetic form] C_h
///      + (g/2) delta_0 |psi> on the period-lambda box. For infinite g the
/// origin coordinate of psi is projected out first.
inline double soft_bound_lhs_form(Coupling g, const FilterPair& pair, int R,
                                  int lambda, const std::vector<double>& psi) {
  if (!pair.trivial && pair.lambda != lambda)
    throw std::invalid_argument("soft_bound_lhs_form: filter period mismatch");
  BoxRegion box = period_box(lambda);
  const std::int64_t n = box.size();
  if (std::int64_t(psi.size()) != n)
    throw std::invalid_argument("soft_bound_lhs_form: size mismatch");
  std::vector<double> x = psi;
  const std::int64_t origin = box.index({0, 0, 0});
  if (g.infinite) x[origin] = 0.0;

  const std::vector<double> theta = detail::theta_cube(R, lambda);
  std::vector<double> t(n), nt(n), y(n);
  std::vector<cplx> buf(n);
  std::vector<double> htab;
  if (!pair.trivial) htab = detail::real_table(pair.h_hat);

  if (pair.trivial)
    t = x;
  else
    detail::spectral_multiply_apply(htab, lambda, buf, x.data(), t.data());
  detail::neumann_theta_apply(theta, lambda, t.data(), nt.data());
  if (pair.trivial)
    y = nt;
  else
    detail::spectral_multiply_apply(htab, lambda, buf, nt.data(), y.data());

  double form = 0.0;
  for (std::int64_t i = 0; i < n; ++i) form += x[i] * y[i];
  if (!g.infinite) form += 0.5 * g.value * x[origin] * x[origin];
  return form;
}

namespace detail {

struct CertProblem {
  Coupling g;
  double c_v = 0.0, tol = 0.0;
  int lambda = 0;
  std::int64_t n = 0;
  bool trivial = false;
  std::vector<double> htab;       // filter multiplier (single-center form)
  std::vector<double> kin_table;  // h^2 E multiplier (multi-center form)
  std::vector<double> theta;      // single-center A(R) indicator
  std::vector<double> diag;       // all diagonal RHS pieces, signs folded in
  std::vector<std::vector<std::int64_t>> rank1_sites;  // per-center A sites
  double rank1_coef = 0.0;
  std::vector<std::int64_t> pinned;  // delta sites at infinite coupling
  std::vector<std::pair<std::int64_t, double>> delta_diag;  // finite coupling
};

inline void cert_solve(const CertProblem& pr, CertificationReport& rep) {
  std::vector<double> t(pr.n), nt(pr.n);
  std::vector<cplx> buf(pr.n);

  auto lhs_apply = [&](const double* x, double* y) {
    if (!pr.kin_table.empty()) {
      spectral_multiply_apply(pr.kin_table, pr.lambda, buf, x, y);
    } else if (pr.trivial) {
      neumann_theta_apply(pr.theta, pr.lambda, x, y);
    } else {
      spectral_multiply_apply(pr.htab, pr.lambda, buf, x, t.data());
      neumann_theta_apply(pr.theta, pr.lambda, t.data(), nt.data());
      spectral_multiply_apply(pr.htab, pr.lambda, buf, nt.data(), y);
    }
    for (const auto& [site, gv] : pr.delta_diag) y[site] += gv * x[site];
    for (auto i : pr.pinned) y[i] = 0.0;
  };
  auto full_apply = [&](const double* x, double* y) {
    lhs_apply(x, y);
    for (std::int64_t i = 0; i < pr.n; ++i) y[i] += pr.diag[i] * x[i];
    for (const auto& sites : pr.rank1_sites) {
      double sa = 0.0;
      for (auto i : sites) sa += x[i];
      const double c = pr.rank1_coef * sa;
      for (auto i : sites) y[i] -= c;
    }
    for (auto i : pr.pinned) y[i] = 0.0;
  };

  std::vector<double> start = cert_start(pr.n, pr.pinned);

  LanczosOptions no;
  no.tol = 1e-6;
  no.max_iters = 120;
  no.reorth_limit = 150000;
  LanczosResult nr = lanczos_ground(
      pr.n,
      [&](const double* x, double* y) {
        lhs_apply(x, y);
        for (std::int64_t i = 0; i < pr.n; ++i) y[i] = -y[i];
      },
      no, &start);
  rep.lhs_norm = std::abs(nr.value) + nr.residual;

  LanczosOptions go;
  go.tol = pr.tol;
  go.max_iters = 800;
  go.reorth_limit = 150000;
  LanczosResult res = lanczos_ground(pr.n, full_apply, go, &start);
  if (!res.converged) {
    std::ostringstream os;
    os << "certify: eigensolver did not converge; best residual "
       << res.residual;
    throw std::runtime_error(os.str());
  }
  rep.min_eig = res.value;
  rep.residual = res.residual;
  rep.certified = res.value - res.residual;
  rep.iterations = res.iterations;
  rep.tolerance = 1e-10 * rep.lhs_norm;
  rep.pass = rep.min_eig >= -rep.tolerance;
}

}  // namespace detail

/// Certifies, on the period-lambda box, that the filtered localized kinetic
/// form plus (g/2) delta_0 dominates
/// 4 pi a [(1-eps)(1-eta) U - W/eps - (C_V/eta) V]. The inequality's
/// unspecified constant enters as the tunable c_v.
inline CertificationReport certify_soft_bound(Coupling g, const FilterPair& pair,
                                              const SoftPotentialSet& set,
                                              int lambda, double c_v = 10.0,
                                              double tol = 1e-10) {
  if (!pair.trivial && pair.lambda != lambda)
    throw std::invalid_argument(
        "certify_soft_bound: filter was built for a different period");
  if (2 * set.R + 1 > lambda)
    throw std::invalid_argument("certify_soft_bound: A(R) does not fit the period");
  if (!(c_v >= 0.0))
    throw std::invalid_argument("certify_soft_bound: C_V must be nonnegative");

  const double a = scattering_length(g, cached_watson_gamma());
  const double fourpia = 4.0 * std::numbers::pi * a;
  const double scale = 1.0 / std::pow(2.0 * set.R + 1, 3);

  CertificationReport rep;
  rep.g = g;
  rep.R = set.R;
  rep.s = pair.s;
  rep.eps = set.eps;
  rep.eta = set.eta;
  rep.c_v = c_v;
  rep.lambda = lambda;
  rep.n_centers = 1;
  rep.lambda_rule_ok = double(lambda) >= 8.0 * std::max(double(set.R), pair.s);
  rep.rhs_nonpositive =
      set.w_max == 0.0 && (1.0 - set.eps) * (1.0 - set.eta) < 1e-12;

  // A trivial filter keeps the operator local: outside the cube A(R+1) every
  // row vanishes, so the spectrum is that of the dense block plus {0}.
  const int side = 2 * set.R + 3;
  if (pair.trivial && set.w_max == 0.0 && lambda >= side + 1 && side <= 19) {
    BoxRegion block = BoxRegion::cube(set.R + 1);
    const std::int64_t bd = block.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(bd, bd);
    auto theta = [&](Vec3i p) { return p.norm_inf() <= set.R ? 1.0 : 0.0; };
    block.for_each([&](Vec3i p) {
      const std::int64_t i = block.index(p);
      for (int axis = 0; axis < 3; ++axis) {
        Vec3i q = p + kUnitSteps[2 * axis];
        const double w = 0.5 * (theta(p) + theta(q));
        if (w == 0.0 || !block.contains(q)) continue;
        const std::int64_t j = block.index(q);
        m(i, i) += w;
        m(j, j) += w;
        m(i, j) -= w;
        m(j, i) -= w;
      }
    });
    const std::int64_t origin = block.index({0, 0, 0});
    if (!g.infinite) m(origin, origin) += 0.5 * g.value;
    std::vector<std::int64_t> asites;
    block.for_each([&](Vec3i p) {
      if (p.norm_inf() <= set.R) asites.push_back(block.index(p));
    });
    const double dshift =
        -fourpia * (1.0 - set.eps) * (1.0 - set.eta) * scale +
        fourpia * (c_v / set.eta) * scale;
    for (auto i : asites) m(i, i) += dshift;
    const double coef_p = fourpia * (c_v / set.eta) * scale * scale;
    for (auto i : asites)
      for (auto j : asites) m(i, j) -= coef_p;

    Eigen::MatrixXd mr;
    if (g.infinite) {
      mr.resize(bd - 1, bd - 1);
      for (std::int64_t i = 0, ir = 0; i < bd; ++i) {
        if (i == origin) continue;
        for (std::int64_t j = 0, jc = 0; j < bd; ++j) {
          if (j == origin) continue;
          mr(ir, jc++) = m(i, j);
        }
        ++ir;
      }
    } else {
      mr = std::move(m);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mr, Eigen::EigenvaluesOnly);
    rep.lhs_norm = 12.0 + (g.infinite ? 0.0 : 0.5 * g.value);
    // Sites outside A(R+1) are exact null vectors of the full operator.
    rep.min_eig = std::min(0.0, es.eigenvalues()[0]);
    rep.residual = 1e-13 * std::max(1.0, rep.lhs_norm);
    rep.certified = rep.min_eig - rep.residual;
    rep.tolerance = 1e-10 * rep.lhs_norm;
    rep.pass = rep.min_eig >= -rep.tolerance;
    rep.iterations = 0;
    return rep;
  }

  BoxRegion box = period_box(lambda);
  detail::CertProblem pr;
  pr.g = g;
  pr.c_v = c_v;
  pr.tol = tol;
  pr.lambda = lambda;
  pr.n = box.size();
  pr.trivial = pair.trivial;
  if (!pair.trivial) pr.htab = detail::real_table(pair.h_hat);
  pr.theta = detail::theta_cube(set.R, lambda);
  pr.diag.assign(pr.n, 0.0);
  pr.rank1_sites.emplace_back();
  for (std::int64_t i = 0; i < pr.n; ++i) {
    const bool in_a = pr.theta[i] != 0.0;
    const double wv = pair.trivial ? 0.0 : set.w[i].real();
    pr.diag[i] = fourpia * wv / set.eps;
    if (in_a) {
      pr.diag[i] += fourpia * scale *
                    ((c_v / set.eta) - (1.0 - set.eps) * (1.0 - set.eta));
      pr.rank1_sites[0].push_back(i);
    }
  }
  pr.rank1_coef = fourpia * (c_v / set.eta) * scale * scale;
  const std::int64_t origin = box.index({0, 0, 0});
  if (g.infinite)
    pr.pinned.push_back(origin);
  else if (g.value != 0.0)
    pr.delta_diag.push_back({origin, 0.5 * g.value});

  detail::cert_solve(pr, rep);
  return rep;
}

/// Certification of the translated multi-center form: the full filtered
/// Laplacian plus (g/2) sum_i delta_{y_i} against the sum of translated soft
/// potentials. Centers must be pairwise farther apart than 2 sqrt(3) R.
inline CertificationReport certify_soft_bound_multi(
    Coupling g, const FilterPair& pair, const SoftPotentialSet& set,
    const std::vector<Vec3i>& centers, int lambda, double c_v = 10.0,
    double tol = 1e-10) {
  if (!pair.trivial && pair.lambda != lambda)
    throw std::invalid_argument(
        "certify_soft_bound_multi: filter was built for a different period");
  if (centers.empty())
    throw std::invalid_argument("certify_soft_bound_multi: no centers");
  if (2 * set.R + 1 > lambda)
    throw std::invalid_argument(
        "certify_soft_bound_multi: A(R) does not fit the period");
  const double sep2 = 12.0 * double(set.R) * set.R;
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const Vec3i d = detail::min_image(centers[i] - centers[j], lambda);
      const double d2 = double(d.x) * d.x + double(d.y) * d.y + double(d.z) * d.z;
      if (!(d2 > sep2))
        throw std::invalid_argument(
            "certify_soft_bound_multi: centers violate the 2 sqrt(3) R "
            "separation");
    }

  const double a = scattering_length(g, cached_watson_gamma());
  const double fourpia = 4.0 * std::numbers::pi * a;
  const double scale = 1.0 / std::pow(2.0 * set.R + 1, 3);

  CertificationReport rep;
  rep.g = g;
  rep.R = set.R;
  rep.s = pair.s;
  rep.eps = set.eps;
  rep.eta = set.eta;
  rep.c_v = c_v;
  rep.lambda = lambda;
  rep.n_centers = int(centers.size());
  rep.lambda_rule_ok = double(lambda) >= 8.0 * std::max(double(set.R), pair.s);
  rep.rhs_nonpositive =
      set.w_max == 0.0 && (1.0 - set.eps) * (1.0 - set.eta) < 1e-12;

  BoxRegion box = period_box(lambda);
  detail::CertProblem pr;
  pr.g = g;
  pr.c_v = c_v;
  pr.tol = tol;
  pr.lambda = lambda;
  pr.n = box.size();
  pr.trivial = pair.trivial;

  // Kinetic multiplier h(p)^2 E(p); the trivial filter keeps the plain
  // Laplacian, which the stencil path in cert_solve handles without FFTs.
  if (!pair.trivial) {
    pr.kin_table.resize(pr.n);
    for (std::int64_t i = 0; i < pr.n; ++i) {
      const double h = pair.h_hat[i].real();
      pr.kin_table[i] = h * h * dispersion(pair.h_hat.momentum(i));
    }
  } else {
    // Plain -Delta as a theta == 1 weighted form.
    pr.theta.assign(pr.n, 1.0);
  }

  pr.diag.assign(pr.n, 0.0);
  pr.rank1_coef = fourpia * (c_v / set.eta) * scale * scale;
  BoxRegion cube = BoxRegion::cube(set.R);
  for (const auto& y : centers) {
    auto& sites = pr.rank1_sites.emplace_back();
    cube.for_each([&](Vec3i d) {
      const Vec3i q = y + d;
      const std::int64_t i =
          box.index({((q.x % lambda) + lambda) % lambda,
                     ((q.y % lambda) + lambda) % lambda,
                     ((q.z % lambda) + lambda) % lambda});
      pr.diag[i] += fourpia * scale *
                    ((c_v / set.eta) - (1.0 - set.eps) * (1.0 - set.eta));
      sites.push_back(i);
    });
    if (!pair.trivial) {
      // Translate W: W(x - y) accumulated over the whole box.
      box.for_each([&](Vec3i x) {
        const double wv = set.w.at(x - y).real();
        if (wv != 0.0) pr.diag[box.index(x)] += fourpia * wv / set.eps;
      });
    }
    const std::int64_t yi = box.index({((y.x % lambda) + lambda) % lambda,
                                       ((y.y % lambda) + lambda) % lambda,
                                       ((y.z % lambda) + lambda) % lambda});
    if (g.infinite)
      pr.pinned.push_back(yi);
    else if (g.value != 0.0)
      pr.delta_diag.push_back({yi, 0.5 * g.value});
  }

  detail::cert_solve(pr, rep);
  return rep;
}

}  // namespace hublab
