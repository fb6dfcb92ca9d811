// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "hublab/fft.hpp"
#include "hublab/lattice.hpp"
#include "hublab/quadrature.hpp"

namespace hublab {

/// On-site coupling; +infinity is a first-class value, never a large float.
struct Coupling {
  double value = 0.0;
  bool infinite = false;

  static Coupling finite(double g) {
    if (g < 0) throw std::invalid_argument("coupling must be nonnegative");
    return {g, false};
  }
  static Coupling inf() { return {0.0, true}; }

  std::string str() const {
    if (infinite) return "inf";
    std::ostringstream os;
    os << value;
    return os.str();
  }
};

struct ScatteringParams {
  Coupling g;
  double gamma = 0.0;  // (2pi)^-3 integral of dk / (4 sum_i (1 - cos k_i))
  double a = 0.0;      // scattering length
};

/// Quintic smoothstep profile: 0 below 1, 1 above 2, C^2 across.
inline double smoothstep_ramp(double t) {
  if (t <= 1.0) return 0.0;
  if (t >= 2.0) return 1.0;
  double u = t - 1.0;
  return ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
}

namespace detail {

// Radial cutoff used by the singularity subtraction: identically 1 near the
// origin and 0 for |k| >= 2*pi/2.1 < pi, so its support ball fits inside
// the Brillouin zone cube.
inline double subtraction_cutoff(double r) {
  return 1.0 - smoothstep_ramp(2.1 * r / std::numbers::pi);
}
inline constexpr double kCutoffSupport = 2.0 * std::numbers::pi / 2.1;

// Angular factor of the second subtraction term: sum u_i^4 / 12 split into
// the isotropic mean 1/20 plus a pure degree-4 cubic harmonic q4.
inline double q4_harmonic(double ux, double uy, double uz) {
  double s4 = ux * ux * ux * ux + uy * uy * uy * uy + uz * uz * uz * uz;
  return (s4 - 3.0 / 5.0) / 12.0;
}

inline double spherical_j0(double t) {
  if (std::abs(t) < 1e-8) return 1.0 - t * t / 6.0;
  return std::sin(t) / t;
}

// Integrand 1/E(k) minus the cutoff-localized two-term small-k model
// chi(|k|) * (1/|k|^2 + sum k_i^4 / (12 |k|^4)); bounded at the origin.
inline double subtracted_inverse_dispersion(double kx, double ky, double kz) {
  double e = dispersion(kx, ky, kz);
  double r2 = kx * kx + ky * ky + kz * kz;
  double r = std::sqrt(r2);
  double chi = subtraction_cutoff(r);
  double model = 0.0;
  if (chi != 0.0) {
    double s4 = kx * kx * kx * kx + ky * ky * ky * ky + kz * kz * kz * kz;
    model = chi * (1.0 / r2 + s4 / (12.0 * r2 * r2));
  }
  return 1.0 / e - model;
}

// 1D integrals of the subtracted model against spherical waves:
//   ball0(q) = 4pi Int chi(r) j0(qr) dr            (the 1/k^2 term)
//   ball2(q) = (4pi/20) Int r^2 chi(r) j0(qr) dr   (isotropic 1/20 term)
//   ball4(q) = 4pi Int r^2 chi(r) j4(qr) dr        (q4 term, times q4(x^))
inline double ball0_integral(double q) {
  static const GaussRule rule(16);
  int panels = std::max(8, int(kCutoffSupport * std::max(q, 1.0) / 1.5) + 1);
  return 4.0 * std::numbers::pi *
         composite_gauss([&](double r) { return subtraction_cutoff(r) * spherical_j0(q * r); },
                         0.0, kCutoffSupport, panels, rule);
}
inline double ball2_integral(double q) {
  static const GaussRule rule(16);
  int panels = std::max(8, int(kCutoffSupport * std::max(q, 1.0) / 1.5) + 1);
  return (4.0 * std::numbers::pi / 20.0) *
         composite_gauss(
             [&](double r) { return r * r * subtraction_cutoff(r) * spherical_j0(q * r); },
             0.0, kCutoffSupport, panels, rule);
}
inline double ball4_integral(double q) {
  static const GaussRule rule(16);
  int panels = std::max(8, int(kCutoffSupport * std::max(q, 1.0) / 1.5) + 1);
  return 4.0 * std::numbers::pi *
         composite_gauss(
             [&](double r) {
               return r * r * subtraction_cutoff(r) * std::sph_bessel(4, q * r);
             },
             0.0, kCutoffSupport, panels, rule);
}

}  // namespace detail

/// Method A: midpoint-rectangle Brillouin-zone sum of the subtracted
/// integrand plus closed 1D integrals of the subtracted model. Returns
/// Int_{[-pi,pi]^3} dk / E(k).
inline double inverse_dispersion_integral_subtracted(int grid) {
  if (grid < 8) throw std::invalid_argument("grid too coarse");
  const double h = 2.0 * std::numbers::pi / grid;
  double sum = 0.0;
  for (int i = 0; i < grid; ++i) {
    double kx = -std::numbers::pi + (i + 0.5) * h;
    double part = 0.0;
    for (int j = 0; j < grid; ++j) {
      double ky = -std::numbers::pi + (j + 0.5) * h;
      for (int k = 0; k < grid; ++k) {
        double kz = -std::numbers::pi + (k + 0.5) * h;
        part += detail::subtracted_inverse_dispersion(kx, ky, kz);
      }
    }
    sum += part;
  }
  return sum * h * h * h + detail::ball0_integral(0.0) + detail::ball2_integral(0.0);
}

/// Method B: dyadic shell decomposition toward the origin with tensor
/// Gauss-Legendre on each smooth sub-box, plus an analytic estimate for the
/// innermost cube. Fully independent of the subtraction scheme.
inline double inverse_dispersion_integral_shells(int levels = 44, int order = 12) {
  const GaussRule rule(order);
  double total = 0.0;
  double s = std::numbers::pi;
  for (int lvl = 0; lvl < levels; ++lvl) {
    double t = 0.5 * s;
    // shell [-s,s]^3 minus [-t,t]^3 as 26 tensor boxes
    const double edges[4] = {-s, -t, t, s};
    for (int bx = 0; bx < 3; ++bx)
      for (int by = 0; by < 3; ++by)
        for (int bz = 0; bz < 3; ++bz) {
          if (bx == 1 && by == 1 && bz == 1) continue;
          double acc = 0.0;
          for (int i = 0; i < order; ++i) {
            double kx = 0.5 * (edges[bx] + edges[bx + 1]) +
                        0.5 * (edges[bx + 1] - edges[bx]) * rule.nodes[i];
            for (int j = 0; j < order; ++j) {
              double ky = 0.5 * (edges[by] + edges[by + 1]) +
                          0.5 * (edges[by + 1] - edges[by]) * rule.nodes[j];
              for (int k = 0; k < order; ++k) {
                double kz = 0.5 * (edges[bz] + edges[bz + 1]) +
                            0.5 * (edges[bz + 1] - edges[bz]) * rule.nodes[k];
                acc += rule.weights[i] * rule.weights[j] * rule.weights[k] /
                       dispersion(kx, ky, kz);
              }
            }
          }
          double jac = 0.125 * (edges[bx + 1] - edges[bx]) * (edges[by + 1] - edges[by]) *
                       (edges[bz + 1] - edges[bz]);
          total += acc * jac;
        }
    s = t;
  }
  // Innermost cube [-s,s]^3: 1/E(k) ~ 1/|k|^2 there, whose cube integral
  // scales linearly in s. The unit-cube constant comes from the exact
  // geometric shell sum of the same 26-box rule applied to 1/|k|^2.
  double sigma_unit = 0.0;
  {
    const double edges[4] = {-1.0, -0.5, 0.5, 1.0};
    for (int bx = 0; bx < 3; ++bx)
      for (int by = 0; by < 3; ++by)
        for (int bz = 0; bz < 3; ++bz) {
          if (bx == 1 && by == 1 && bz == 1) continue;
          double acc = 0.0;
          for (int i = 0; i < order; ++i) {
            double kx = 0.5 * (edges[bx] + edges[bx + 1]) +
                        0.5 * (edges[bx + 1] - edges[bx]) * rule.nodes[i];
            for (int j = 0; j < order; ++j) {
              double ky = 0.5 * (edges[by] + edges[by + 1]) +
                          0.5 * (edges[by + 1] - edges[by]) * rule.nodes[j];
              for (int k = 0; k < order; ++k) {
                double kz = 0.5 * (edges[bz] + edges[bz + 1]) +
                            0.5 * (edges[bz + 1] - edges[bz]) * rule.nodes[k];
                acc += rule.weights[i] * rule.weights[j] * rule.weights[k] /
                       (kx * kx + ky * ky + kz * kz);
              }
            }
          }
          double jac = 0.125 * (edges[bx + 1] - edges[bx]) * (edges[by + 1] - edges[by]) *
                       (edges[bz + 1] - edges[bz]);
          sigma_unit += acc * jac;
        }
  }
  total += 2.0 * sigma_unit * s;  // sum_{j>=0} sigma * s / 2^j
  return total;
}

struct GammaResult {
  double gamma = 0.0;     // adopted value (method A)
  double method_a = 0.0;
  double method_b = 0.0;
  double err = 0.0;       // |A - B| / A
};

/// Two independent quadratures for gamma; throws if they disagree.
inline GammaResult watson_gamma(double tolerance = 1e-6, int grid = 128) {
  if (tolerance <= 0 || tolerance > 1e-3)
    throw std::invalid_argument("tolerance out of range");
  const double norm = 2.0 * std::pow(2.0 * std::numbers::pi, 3);
  GammaResult r;
  r.method_a = inverse_dispersion_integral_subtracted(grid) / norm;
  r.method_b = inverse_dispersion_integral_shells() / norm;
  r.gamma = r.method_a;
  r.err = std::abs(r.method_a - r.method_b) / std::abs(r.method_a);
  if (r.err > tolerance) {
    std::ostringstream os;
    os << "watson_gamma: quadratures disagree: A=" << r.method_a << " B=" << r.method_b
       << " rel=" << r.err;
    throw std::runtime_error(os.str());
  }
  return r;
}

/// watson_gamma computed once and reused process-wide.
inline double cached_watson_gamma() {
  static const double g = watson_gamma().gamma;
  return g;
}

/// a(g) = g / (8 pi (g gamma + 1)); a(inf) = 1 / (8 pi gamma).
inline double scattering_length(Coupling g, double gamma) {
  if (g.infinite) return 1.0 / (8.0 * std::numbers::pi * gamma);
  if (g.value < 0) throw std::invalid_argument("coupling must be nonnegative");
  return g.value / (8.0 * std::numbers::pi * (g.value * gamma + 1.0));
}

inline ScatteringParams make_scattering_params(Coupling g, double gamma) {
  return {g, gamma, scattering_length(g, gamma)};
}

/// Zero-energy scattering solution phi tabulated on A(r_max + 1); the extra
/// shell lets difference operators act on every nominal table point.
struct ZeroEnergySolution {
  ScatteringParams params;
  int r_max = 0;
  int grid = 0;
  LatticeField table;        // real-valued phi over A(r_max + 1)
  double phi0_closed = 0.0;  // 1 / (g gamma + 1), 0 at g = inf

  double phi(Vec3i x) const { return table.at(x).real(); }
};

/// Green's table G(x) of the symbol 1/E over A(radius) via the subtracted
/// grid sum (whole table in one FFT) plus spherical-wave corrections.
inline std::vector<double> green_table(int radius, int grid) {
  if (2 * radius + 1 > grid)
    throw std::invalid_argument("green_table: grid too coarse for radius");
  const int n = grid;
  const double h = 2.0 * std::numbers::pi / n;

  std::vector<cplx> arr(std::int64_t(n) * n * n);
  for (int i = 0; i < n; ++i) {
    double kx = -std::numbers::pi + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      double ky = -std::numbers::pi + (j + 0.5) * h;
      std::int64_t base = (std::int64_t(i) * n + j) * n;
      for (int k = 0; k < n; ++k) {
        double kz = -std::numbers::pi + (k + 0.5) * h;
        arr[base + k] = detail::subtracted_inverse_dispersion(kx, ky, kz);
      }
    }
  }
  dft3(arr, n, n, n, +1);  // normalized inverse: (1/N^3) sum_j r_j e^{+i 2pi j x / N}

  // midpoint grid phase e^{i(-pi + h/2) x} per axis
  auto phase = [&](int x) {
    double ang = (-std::numbers::pi + 0.5 * h) * x;
    return cplx(std::cos(ang), std::sin(ang));
  };

  // radial corrections per unique |x|^2
  BoxRegion box = BoxRegion::cube(radius);
  std::map<long, std::array<double, 3>> radial;  // |x|^2 -> (ball0, ball2, ball4)
  box.for_each([&](Vec3i x) {
    long n2 = x.norm2();
    if (radial.count(n2)) return;
    double q = std::sqrt(double(n2));
    radial[n2] = {detail::ball0_integral(q), detail::ball2_integral(q),
                  n2 == 0 ? 0.0 : detail::ball4_integral(q)};
  });

  const double inv_cube = 1.0 / std::pow(2.0 * std::numbers::pi, 3);
  std::vector<double> out(box.size());
  box.for_each([&](Vec3i x) {
    int wx = ((x.x % n) + n) % n, wy = ((x.y % n) + n) % n, wz = ((x.z % n) + n) % n;
    cplx grid_part = arr[(std::int64_t(wx) * n + wy) * n + wz] * phase(x.x) * phase(x.y) *
                     phase(x.z);
    const auto& rad = radial[x.norm2()];
    double model_part = rad[0] + rad[1];
    if (x.norm2() > 0) {
      double inv = 1.0 / x.norm();
      model_part += detail::q4_harmonic(x.x * inv, x.y * inv, x.z * inv) * rad[2];
    }
    out[box.index(x)] = grid_part.real() + inv_cube * model_part;
  });
  return out;
}

/// Builds phi(x) = 1 - 4 pi a G(x) on A(r_max + 1).
inline ZeroEnergySolution phi_table(const ScatteringParams& params, int r_max,
                                    int grid = 128) {
  if (r_max < 2) throw std::invalid_argument("phi_table: r_max must be >= 2");
  ZeroEnergySolution sol;
  sol.params = params;
  sol.r_max = r_max;
  sol.grid = grid;
  BoxRegion box = BoxRegion::cube(r_max + 1);
  sol.table = LatticeField(box, false);
  auto g_tab = green_table(r_max + 1, grid);
  double coef = 4.0 * std::numbers::pi * params.a;
  for (std::int64_t i = 0; i < box.size(); ++i) sol.table[i] = 1.0 - coef * g_tab[i];
  sol.phi0_closed =
      params.g.infinite ? 0.0 : 1.0 / (params.g.value * params.gamma + 1.0);
  return sol;
}

/// Residual of the zero-energy equation at x: |-Delta phi + (g/2) delta_0 phi|.
/// At the origin the (g/2) phi(0) product is evaluated in closed form, which
/// covers g = inf where it tends to 4 pi a.
inline double scattering_equation_residual(const ZeroEnergySolution& sol, Vec3i x) {
  double lap = -6.0 * sol.phi(x);
  for (const auto& e : kUnitSteps) lap += sol.phi(x + e);
  if (x == Vec3i{0, 0, 0}) {
    double onsite = sol.params.g.infinite
                        ? 1.0 / (2.0 * sol.params.gamma)
                        : 0.5 * sol.params.g.value * sol.phi0_closed;
    return std::abs(-lap + onsite);
  }
  return std::abs(lap);
}

/// Surface sum of the discrete Gauss law: sum over edges leaving A(r) of
/// phi(outside) - phi(inside); equals 4 pi a independent of r.
inline double identity_ap2(const ZeroEnergySolution& sol, int r) {
  if (r < 1 || r > sol.r_max) throw std::invalid_argument("identity_ap2: bad r");
  BoxRegion A = BoxRegion::cube(r);
  double s = 0.0;
  A.for_each([&](Vec3i x) {
    for (const auto& e : kUnitSteps) {
      Vec3i y = x + e;
      if (!A.contains(y)) s += sol.phi(y) - sol.phi(x);
    }
  });
  return s;
}

/// |sum_{|x|_inf <= r} (Delta phi)(x) - 4 pi a|: the bulk sum telescopes to
/// the outward surface flux of identity_ap2, and the zero-energy equation
/// concentrates it at the origin where (Delta phi)(0) = (g/2) phi(0) = 4 pi a.
inline double identity_ap_residual(const ZeroEnergySolution& sol, int r) {
  BoxRegion A = BoxRegion::cube(r);
  double s = 0.0;
  A.for_each([&](Vec3i x) {
    double lap = -6.0 * sol.phi(x);
    for (const auto& e : kUnitSteps) lap += sol.phi(x + e);
    s += lap;
  });
  return std::abs(s - 4.0 * std::numbers::pi * sol.params.a);
}

struct DecayReport {
  double max_weighted_remainder = 0.0;  // max |x|^3 |phi - 1 + a/|x||
  double tail_coefficient = 0.0;        // least-squares c in (1 - phi) ~ c/|x|
  double axis_ratio = 0.0;              // |x|(1-phi)/a on the axis at r_max/2
  double diag_ratio = 0.0;              // same along the main diagonal
};

inline DecayReport verify_decay(const ZeroEnergySolution& sol) {
  if (sol.r_max < 8) throw std::invalid_argument("verify_decay: r_max must be >= 8");
  DecayReport rep;
  double num = 0.0, den = 0.0;
  BoxRegion box = BoxRegion::cube(sol.r_max);
  box.for_each([&](Vec3i x) {
    double r = x.norm();
    if (r < 4.0 || r > sol.r_max - 1 + 1e-9) return;
    double dev = std::abs(sol.phi(x) - 1.0 + sol.params.a / r);
    rep.max_weighted_remainder = std::max(rep.max_weighted_remainder, r * r * r * dev);
    if (r >= 0.5 * sol.r_max) {
      num += (1.0 - sol.phi(x)) / r;
      den += 1.0 / (r * r);
    }
  });
  rep.tail_coefficient = den > 0 ? num / den : 0.0;
  int m = sol.r_max / 2;
  if (sol.params.a > 0) {
    rep.axis_ratio = Vec3i{m, 0, 0}.norm() * (1.0 - sol.phi({m, 0, 0})) / sol.params.a;
    rep.diag_ratio = Vec3i{m, m, m}.norm() * (1.0 - sol.phi({m, m, m})) / sol.params.a;
  }
  return rep;
}

// ---- phi-table disk cache --------------------------------------------------
//
// Layout (all little-endian):
//   char[8]  magic "HUBLPHI1"
//   u32      format version (1)
//   u32      g-infinity flag
//   f64      g (0 when infinite)
//   i32      r_max (nominal radius; stored table covers A(r_max+1))
//   i32      grid
//   f64      gamma
//   f64      a
//   f64[(2 r_max + 3)^3]  phi values, lexicographic x-order (x slowest)

inline void save_phi_cache(const ZeroEnergySolution& sol, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open cache for writing: " + path);
  const char magic[8] = {'H', 'U', 'B', 'L', 'P', 'H', 'I', '1'};
  f.write(magic, 8);
  std::uint32_t ver = 1, inf = sol.params.g.infinite ? 1 : 0;
  double g = sol.params.g.infinite ? 0.0 : sol.params.g.value;
  std::int32_t rm = sol.r_max, gr = sol.grid;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  f.write(reinterpret_cast<const char*>(&inf), 4);
  f.write(reinterpret_cast<const char*>(&g), 8);
  f.write(reinterpret_cast<const char*>(&rm), 4);
  f.write(reinterpret_cast<const char*>(&gr), 4);
  f.write(reinterpret_cast<const char*>(&sol.params.gamma), 8);
  f.write(reinterpret_cast<const char*>(&sol.params.a), 8);
  for (std::int64_t i = 0; i < sol.table.size(); ++i) {
    double v = sol.table[i].real();
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  if (!f) throw std::runtime_error("short write to cache: " + path);
}

inline std::optional<ZeroEnergySolution> load_phi_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "HUBLPHI1", 8) != 0) return std::nullopt;
  std::uint32_t ver = 0, inf = 0;
  double g = 0;
  std::int32_t rm = 0, gr = 0;
  ZeroEnergySolution sol;
  f.read(reinterpret_cast<char*>(&ver), 4);
  f.read(reinterpret_cast<char*>(&inf), 4);
  f.read(reinterpret_cast<char*>(&g), 8);
  f.read(reinterpret_cast<char*>(&rm), 4);
  f.read(reinterpret_cast<char*>(&gr), 4);
  f.read(reinterpret_cast<char*>(&sol.params.gamma), 8);
  f.read(reinterpret_cast<char*>(&sol.params.a), 8);
  if (!f || ver != 1) return std::nullopt;
  sol.params.g = inf ? Coupling::inf() : Coupling::finite(g);
  sol.r_max = rm;
  sol.grid = gr;
  sol.phi0_closed = inf ? 0.0 : 1.0 / (g * sol.params.gamma + 1.0);
  BoxRegion box = BoxRegion::cube(rm + 1);
  sol.table = LatticeField(box, false);
  for (std::int64_t i = 0; i < box.size(); ++i) {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) return std::nullopt;
    sol.table[i] = v;
  }
  return sol;
}

}  // namespace hublab
