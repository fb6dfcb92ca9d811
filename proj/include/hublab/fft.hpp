// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <numbers>
#include <stdexcept>
#include <vector>

#include "hublab/lattice.hpp"

namespace hublab {

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform, sign = -1 forward, +1 inverse
/// (inverse is unnormalized).
inline void fft_pow2(cplx* a, int n, int sign) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * std::numbers::pi / len;
    cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cplx w(1.0);
      for (int k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

/// O(n^2) fallback for non-power-of-two lengths.
inline void dft_naive(cplx* a, int n, int sign, std::vector<cplx>& scratch) {
  scratch.assign(n, cplx{});
  std::vector<cplx> tw(n);
  for (int k = 0; k < n; ++k) {
    double ang = sign * 2.0 * std::numbers::pi * k / n;
    tw[k] = {std::cos(ang), std::sin(ang)};
  }
  for (int k = 0; k < n; ++k) {
    cplx s = 0;
    for (int j = 0; j < n; ++j) s += a[j] * tw[int((std::int64_t(j) * k) % n)];
    scratch[k] = s;
  }
  for (int k = 0; k < n; ++k) a[k] = scratch[k];
}

inline void transform_1d(cplx* a, int n, int sign, std::vector<cplx>& scratch) {
  if (is_pow2(n))
    fft_pow2(a, n, sign);
  else
    dft_naive(a, n, sign, scratch);
}

}  // namespace detail

/// 3D DFT over a (n0,n1,n2) array, index (i0*n1+i1)*n2+i2.
/// sign = -1: forward (matches psi_hat(p) = sum_x e^{-ipx} psi(x)).
/// sign = +1: inverse, normalized by 1/(n0 n1 n2).
inline void dft3(std::vector<cplx>& a, int n0, int n1, int n2, int sign) {
  if (std::int64_t(n0) * n1 * n2 != std::int64_t(a.size()))
    throw std::invalid_argument("dft3: size mismatch");
  std::vector<cplx> line(std::max({n0, n1, n2}));
  std::vector<cplx> scratch;
  // axis 2: contiguous
  for (std::int64_t off = 0; off < std::int64_t(n0) * n1; ++off)
    detail::transform_1d(a.data() + off * n2, n2, sign, scratch);
  // axis 1
  for (int i0 = 0; i0 < n0; ++i0)
    for (int i2 = 0; i2 < n2; ++i2) {
      cplx* base = a.data() + (std::int64_t(i0) * n1) * n2 + i2;
      for (int i1 = 0; i1 < n1; ++i1) line[i1] = base[std::int64_t(i1) * n2];
      detail::transform_1d(line.data(), n1, sign, scratch);
      for (int i1 = 0; i1 < n1; ++i1) base[std::int64_t(i1) * n2] = line[i1];
    }
  // axis 0
  std::int64_t stride0 = std::int64_t(n1) * n2;
  for (std::int64_t rem = 0; rem < stride0; ++rem) {
    cplx* base = a.data() + rem;
    for (int i0 = 0; i0 < n0; ++i0) line[i0] = base[i0 * stride0];
    detail::transform_1d(line.data(), n0, sign, scratch);
    for (int i0 = 0; i0 < n0; ++i0) base[i0 * stride0] = line[i0];
  }
  if (sign > 0) {
    double inv = 1.0 / (double(n0) * n1 * n2);
    for (auto& v : a) v *= inv;
  }
}

/// Discrete momenta p = 2 pi m / Lambda and transformed values of a
/// periodic field. Values are stored in FFT index order m in [0, Lambda);
/// momentum() folds indices to the symmetric zone (-pi, pi].
class SpectralGrid {
 public:
  SpectralGrid() = default;
  SpectralGrid(int nx, int ny, int nz)
      : nx_(nx), ny_(ny), nz_(nz), vals_(std::int64_t(nx) * ny * nz) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  std::int64_t size() const { return std::int64_t(vals_.size()); }

  cplx& operator[](std::int64_t i) { return vals_[i]; }
  const cplx& operator[](std::int64_t i) const { return vals_[i]; }
  std::vector<cplx>& values() { return vals_; }
  const std::vector<cplx>& values() const { return vals_; }

  std::int64_t index(int mx, int my, int mz) const {
    return (std::int64_t(mx) * ny_ + my) * nz_ + mz;
  }
  static double momentum_1d(int m, int n) {
    int f = (m > n / 2) ? m - n : m;  // fold to (-n/2, n/2]
    return 2.0 * std::numbers::pi * f / n;
  }
  std::array<double, 3> momentum(std::int64_t idx) const {
    int mz = int(idx % nz_);
    idx /= nz_;
    int my = int(idx % ny_);
    int mx = int(idx / ny_);
    return {momentum_1d(mx, nx_), momentum_1d(my, ny_), momentum_1d(mz, nz_)};
  }

  double norm2() const {
    double s = 0;
    for (const auto& v : vals_) s += std::norm(v);
    return s / double(size());
  }

 private:
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<cplx> vals_;
};

/// Forward transform of a periodic field. Site x is taken relative to the
/// box origin, so psi_hat(p) = sum_x e^{-ip(x-lo)} psi(x).
inline SpectralGrid dft(const LatticeField& f) {
  if (!f.periodic()) throw std::invalid_argument("dft: field must be periodic");
  SpectralGrid g(f.box().nx(), f.box().ny(), f.box().nz());
  g.values() = f.values();
  dft3(g.values(), g.nx(), g.ny(), g.nz(), -1);
  return g;
}

/// Inverse transform back to a periodic field on the given box.
inline LatticeField idft(const SpectralGrid& g, BoxRegion box) {
  if (box.nx() != g.nx() || box.ny() != g.ny() || box.nz() != g.nz())
    throw std::invalid_argument("idft: box/grid mismatch");
  LatticeField f(box, true);
  f.values() = g.values();
  dft3(f.values(), g.nx(), g.ny(), g.nz(), +1);
  return f;
}

/// (C_h f)(x) = sum_y h(x-y) f(y); adjoint uses the conjugate-reflected
/// kernel. Direct double sum; the spectral route is dft + multiply + idft.
inline LatticeField convolve(const LatticeField& h, const LatticeField& f,
                             bool adjoint = false) {
  if (f.periodic()) {
    LatticeField out(f.box(), true);
    f.box().for_each([&](Vec3i x) {
      cplx s = 0;
      h.box().for_each([&](Vec3i d) {
        cplx hv = adjoint ? std::conj(h.at(d)) : h.at(d);
        Vec3i y = adjoint ? x + d : x - d;
        s += hv * f.at(y);
      });
      out.set(x, s);
    });
    return out;
  }
  BoxRegion out_box = BoxRegion::bounds(f.box().lo + h.box().lo, f.box().hi + h.box().hi);
  if (adjoint)
    out_box = BoxRegion::bounds(f.box().lo - h.box().hi, f.box().hi - h.box().lo);
  LatticeField out(out_box, false);
  out_box.for_each([&](Vec3i x) {
    cplx s = 0;
    h.box().for_each([&](Vec3i d) {
      cplx hv = adjoint ? std::conj(h.at(d)) : h.at(d);
      Vec3i y = adjoint ? x + d : x - d;
      s += hv * f.at(y);
    });
    out.set(x, s);
  });
  return out;
}

}  // namespace hublab
