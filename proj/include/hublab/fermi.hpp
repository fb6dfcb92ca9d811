// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "hublab/lattice.hpp"
#include "hublab/quadrature.hpp"

namespace hublab {

// ---- 1D band closed forms ---------------------------------------------------
// One axis contributes e(p) = 2(1 - cos p) = 4 sin^2(p/2), band [0, 4].

inline double band1d(double p) {
  double s = std::sin(0.5 * p);
  return 4.0 * s * s;
}

/// Inverse on [0, pi]: the p with e(p) = t, for t in [0, 4].
inline double band1d_inv(double t) {
  return 2.0 * std::asin(std::sqrt(std::clamp(t, 0.0, 4.0) * 0.25));
}

/// Measure of {p in [-pi, pi] : e(p) <= t}.
inline double level_measure(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 4.0) return 2.0 * std::numbers::pi;
  return 2.0 * band1d_inv(t);
}

/// Integral of e(p) over the same sublevel set: 4 theta - 4 sin theta.
inline double level_first_moment(double t) {
  if (t <= 0.0) return 0.0;
  double th = t >= 4.0 ? std::numbers::pi : band1d_inv(t);
  return 4.0 * (th - std::sin(th));
}

namespace detail {

// Tensor reduction of a sublevel-set integral over [-pi,pi]^3: the third
// axis is summed in closed form, the outer two by tanh-sinh quadrature on
// kink-split smooth pieces. Kinks sit where the remaining energy budget
// crosses a 1D band edge: e(p1) = ef - {0,4,8} outside, e(p2) = budget -
// {0,4} inside. Fixed-node rules keep the inner integral a smooth function
// of p1. Returns {value, error estimate}.
template <class F>
std::pair<double, double> band_reduce(double ef, F&& weight) {
  auto inner = [&](double p1) {
    double budget = ef - band1d(p1);
    std::vector<double> ks;
    for (double c : {0.0, 4.0}) {
      double t = budget - c;
      if (t > 0.0 && t < 4.0) ks.push_back(band1d_inv(t));
    }
    return tanh_sinh_with_knots(
               [&](double p2) { return weight(p1, p2, budget - band1d(p2)); }, 0.0,
               std::numbers::pi, std::move(ks))
        .first;
  };
  std::vector<double> outer_knots;
  for (double c : {0.0, 4.0, 8.0}) {
    double t = ef - c;
    if (t > 0.0 && t < 4.0) outer_knots.push_back(band1d_inv(t));
  }
  auto [v, e] = tanh_sinh_with_knots(inner, 0.0, std::numbers::pi, outer_knots);
  double norm = 4.0 / std::pow(2.0 * std::numbers::pi, 3);
  return {v * norm, e * norm};
}

inline std::pair<double, double> band_volume_raw(double ef) {
  return band_reduce(ef, [](double, double, double t) { return level_measure(t); });
}

}  // namespace detail

struct BandIntegrals {
  double volume = 0.0;      // zone fraction with E <= ef
  double energy = 0.0;      // (2 pi)^-3 integral of E over that set
  double energy_err = 0.0;  // quadrature error estimate for the energy
};

/// Both sublevel-set integrals through one quadrature path, so the Fermi
/// energy solver and the energy density are mutually consistent.
inline BandIntegrals band_integrals(double ef) {
  if (ef <= 0.0) return {0.0, 0.0, 0.0};
  if (ef >= 12.0) return {1.0, 6.0, 0.0};
  BandIntegrals r;
  r.volume = detail::band_volume_raw(ef).first;
  auto [e, err] = detail::band_reduce(ef, [](double p1, double p2, double t) {
    return (band1d(p1) + band1d(p2)) * level_measure(t) + level_first_moment(t);
  });
  r.energy = e;
  r.energy_err = err;
  return r;
}

/// Solves vol{p : E(p) <= E_f} = rho by bisection on the monotone volume.
inline double fermi_energy(double rho, double tol_rho = 1e-8) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("fermi_energy: rho outside [0,1]");
  if (rho == 0.0) return 0.0;
  if (rho == 1.0) return 12.0;
  (void)tol_rho;  // the volume quadrature is accurate far below any useful tol
  double lo = 0.0, hi = 12.0;
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    (detail::band_volume_raw(mid).first < rho ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct EosPoint {
  double rho = 0.0;
  double fermi_energy = 0.0;
  double energy_density = 0.0;
  double err = 0.0;  // quadrature error estimate for the energy density
};

inline EosPoint eos_point(double rho) {
  EosPoint p;
  p.rho = rho;
  p.fermi_energy = fermi_energy(rho);
  auto bi = band_integrals(p.fermi_energy);
  p.energy_density = bi.energy;
  p.err = std::max(bi.energy_err, 1e-15);
  return p;
}

inline double energy_density(double rho) { return eos_point(rho).energy_density; }

/// Ground-state energy density of the two-component free gas.
inline double e0(double rho_u, double rho_d) {
  return energy_density(rho_u) + energy_density(rho_d);
}

// ---- finite-box spectra ------------------------------------------------------

struct BoxMode {
  Vec3i m;
  double energy = 0.0;
};

struct BoxSpectrum {
  int L = 0;
  std::vector<BoxMode> periodic;   // m in {0..L}^3, energy E(2 pi m / (L+1))
  std::vector<BoxMode> dirichlet;  // n in [1,L-1]^3, energy sum_j 2(1-cos(pi n_j/L))
};

/// Plane-wave mode on the (L+1)-site periodic box, orthonormal family.
inline cplx periodic_mode(int L, Vec3i m, Vec3i x) {
  int n = L + 1;
  double ang = 2.0 * std::numbers::pi *
               (double(m.x) * x.x + double(m.y) * x.y + double(m.z) * x.z) / n;
  return cplx(std::cos(ang), std::sin(ang)) / std::pow(double(n), 1.5);
}

/// Sine mode supported on the interior [1, L-1]^3, orthonormal family.
inline double dirichlet_mode(int L, Vec3i n, Vec3i x) {
  double c = std::pow(2.0 / L, 1.5), w = std::numbers::pi / L;
  return c * std::sin(w * n.x * x.x) * std::sin(w * n.y * x.y) *
         std::sin(w * n.z * x.z);
}

namespace detail {

// Sum of three per-axis energies in ascending order, so permuted modes get
// bit-identical totals and shell degeneracies compare exactly.
inline double sorted_sum3(double a, double b, double c) {
  if (a > b) std::swap(a, b);
  if (b > c) std::swap(b, c);
  if (a > b) std::swap(a, b);
  return (a + b) + c;
}

}  // namespace detail

inline BoxSpectrum box_modes(int L) {
  if (L < 2) throw std::invalid_argument("box_modes: L must be >= 2");
  BoxSpectrum bs;
  bs.L = L;
  const int n = L + 1;

  std::vector<double> ep(n), ed(L);
  for (int m = 0; m < n; ++m) ep[m] = band1d(2.0 * std::numbers::pi * m / n);
  for (int j = 1; j < L; ++j) ed[j] = band1d(std::numbers::pi * j / L);

  bs.periodic.reserve(std::size_t(n) * n * n);
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my)
      for (int mz = 0; mz < n; ++mz)
        bs.periodic.push_back(
            {{mx, my, mz}, detail::sorted_sum3(ep[mx], ep[my], ep[mz])});

  bs.dirichlet.reserve(std::size_t(L - 1) * (L - 1) * (L - 1));
  for (int nx = 1; nx < L; ++nx)
    for (int ny = 1; ny < L; ++ny)
      for (int nz = 1; nz < L; ++nz)
        bs.dirichlet.push_back(
            {{nx, ny, nz}, detail::sorted_sum3(ed[nx], ed[ny], ed[nz])});

  // sampled orthonormality check on construction
  std::mt19937 rng(12345);
  std::uniform_int_distribution<std::size_t> up(0, bs.periodic.size() - 1);
  std::uniform_int_distribution<std::size_t> ud(0, bs.dirichlet.size() - 1);
  for (int t = 0; t < 20; ++t) {
    std::size_t a = up(rng), b = t % 4 == 0 ? a : up(rng);
    cplx s = 0.0;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        for (int z = 0; z < n; ++z)
          s += std::conj(periodic_mode(L, bs.periodic[a].m, {x, y, z})) *
               periodic_mode(L, bs.periodic[b].m, {x, y, z});
    if (std::abs(s - (a == b ? 1.0 : 0.0)) > 1e-9)
      throw std::logic_error("box_modes: periodic family not orthonormal");

    std::size_t c = ud(rng), d = t % 4 == 0 ? c : ud(rng);
    double sd = 0.0;
    for (int x = 1; x < L; ++x)
      for (int y = 1; y < L; ++y)
        for (int z = 1; z < L; ++z)
          sd += dirichlet_mode(L, bs.dirichlet[c].m, {x, y, z}) *
                dirichlet_mode(L, bs.dirichlet[d].m, {x, y, z});
    if (std::abs(sd - (c == d ? 1.0 : 0.0)) > 1e-9)
      throw std::logic_error("box_modes: sine family not orthonormal");
  }
  return bs;
}

struct FermiProjection {
  int M = 0;
  int L = 0;
  double fermi_level = 0.0;  // E_f at density M / (L+1)^3
  std::vector<Vec3i> modes;  // selected m
  int rank = 0;
  double rank_ratio = 0.0;  // rank / M
};

/// Projection onto box modes below the Fermi level of the matching density.
inline FermiProjection xi_projection(int M, int L) {
  if (L < 2) throw std::invalid_argument("xi_projection: L must be >= 2");
  long total = long(L + 1) * (L + 1) * (L + 1);
  if (M < 1 || M > total) throw std::invalid_argument("xi_projection: M out of range");
  FermiProjection pr;
  pr.M = M;
  pr.L = L;
  pr.fermi_level = fermi_energy(double(M) / double(total));
  for (const auto& mode : box_modes(L).periodic)
    if (mode.energy <= pr.fermi_level + 1e-9) pr.modes.push_back(mode.m);
  pr.rank = int(pr.modes.size());
  pr.rank_ratio = double(pr.rank) / M;
  return pr;
}

struct FreeGroundEnergy {
  double energy = 0.0;
  bool shell_degenerate = false;  // Fermi level sits inside a degenerate shell
};

/// Dirichlet modes of the box sorted by (energy, lexicographic index); the
/// deterministic fill order for free ground states.
inline std::vector<BoxMode> sorted_dirichlet_modes(int L) {
  auto modes = box_modes(L).dirichlet;
  std::sort(modes.begin(), modes.end(), [](const BoxMode& a, const BoxMode& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    if (a.m.x != b.m.x) return a.m.x < b.m.x;
    if (a.m.y != b.m.y) return a.m.y < b.m.y;
    return a.m.z < b.m.z;
  });
  return modes;
}

inline FreeGroundEnergy free_ground_energy(int n_up, int n_dn, int L) {
  long sites = long(L - 1) * (L - 1) * (L - 1);
  if (n_up < 0 || n_dn < 0 || n_up > sites || n_dn > sites)
    throw std::invalid_argument("free_ground_energy: particle number exceeds site count");
  auto modes = sorted_dirichlet_modes(L);
  FreeGroundEnergy r;
  for (int count : {n_up, n_dn}) {
    for (int i = 0; i < count; ++i) r.energy += modes[i].energy;
    if (count > 0 && count < long(modes.size()) &&
        std::abs(modes[count - 1].energy - modes[count].energy) < 1e-12)
      r.shell_degenerate = true;
  }
  return r;
}

}  // namespace hublab
