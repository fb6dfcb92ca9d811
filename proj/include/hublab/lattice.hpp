// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace hublab {

using cplx = std::complex<double>;

/// Point of Z^3, lattice units.
struct Vec3i {
  int x = 0, y = 0, z = 0;

  friend Vec3i operator+(Vec3i a, Vec3i b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3i operator-(Vec3i a, Vec3i b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend bool operator==(Vec3i a, Vec3i b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
  int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  double norm() const { return std::sqrt(double(x) * x + double(y) * y + double(z) * z); }
  long norm2() const { return long(x) * x + long(y) * y + long(z) * z; }
  int norm_inf() const {
    int ax = std::abs(x), ay = std::abs(y), az = std::abs(z);
    return std::max(ax, std::max(ay, az));
  }
};

inline constexpr std::array<Vec3i, 6> kUnitSteps = {
    Vec3i{1, 0, 0}, Vec3i{-1, 0, 0}, Vec3i{0, 1, 0},
    Vec3i{0, -1, 0}, Vec3i{0, 0, 1}, Vec3i{0, 0, -1}};

/// Axis-aligned box of lattice points, bounds inclusive.
struct BoxRegion {
  Vec3i lo, hi;

  static BoxRegion cube(int r, Vec3i center = {}) {
    if (r < 0) throw std::invalid_argument("cube radius must be nonnegative");
    return {{center.x - r, center.y - r, center.z - r},
            {center.x + r, center.y + r, center.z + r}};
  }
  static BoxRegion bounds(Vec3i lo, Vec3i hi) {
    if (hi.x < lo.x || hi.y < lo.y || hi.z < lo.z)
      throw std::invalid_argument("empty box");
    return {lo, hi};
  }

  int nx() const { return hi.x - lo.x + 1; }
  int ny() const { return hi.y - lo.y + 1; }
  int nz() const { return hi.z - lo.z + 1; }
  std::int64_t size() const { return std::int64_t(nx()) * ny() * nz(); }

  bool contains(Vec3i p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
           p.z >= lo.z && p.z <= hi.z;
  }
  /// Lexicographic index, x slowest, z fastest.
  std::int64_t index(Vec3i p) const {
    return (std::int64_t(p.x - lo.x) * ny() + (p.y - lo.y)) * nz() + (p.z - lo.z);
  }
  Vec3i point(std::int64_t idx) const {
    int z = int(idx % nz());
    idx /= nz();
    int y = int(idx % ny());
    int x = int(idx / ny());
    return {lo.x + x, lo.y + y, lo.z + z};
  }
  BoxRegion grown(int shells) const {
    return {{lo.x - shells, lo.y - shells, lo.z - shells},
            {hi.x + shells, hi.y + shells, hi.z + shells}};
  }

  template <class F>
  void for_each(F&& f) const {
    for (int x = lo.x; x <= hi.x; ++x)
      for (int y = lo.y; y <= hi.y; ++y)
        for (int z = lo.z; z <= hi.z; ++z) f(Vec3i{x, y, z});
  }
};

/// Complex function on Z^3 stored dense over a support box. Non-periodic
/// fields are zero outside the box; periodic fields wrap with the box
/// dimensions as periods.
class LatticeField {
 public:
  LatticeField() : box_{{0, 0, 0}, {0, 0, 0}}, vals_(1) {}
  explicit LatticeField(BoxRegion box, bool periodic = false)
      : box_(box), periodic_(periodic), vals_(box.size()) {}

  const BoxRegion& box() const { return box_; }
  bool periodic() const { return periodic_; }
  std::int64_t size() const { return std::int64_t(vals_.size()); }

  cplx& operator[](std::int64_t i) { return vals_[i]; }
  const cplx& operator[](std::int64_t i) const { return vals_[i]; }
  std::vector<cplx>& values() { return vals_; }
  const std::vector<cplx>& values() const { return vals_; }

  cplx at(Vec3i p) const {
    if (periodic_) return vals_[box_.index(wrap(p))];
    if (!box_.contains(p)) return {};
    return vals_[box_.index(p)];
  }
  void set(Vec3i p, cplx v) { vals_[box_.index(periodic_ ? wrap(p) : p)] = v; }

  Vec3i wrap(Vec3i p) const {
    auto m = [](int v, int lo, int n) {
      int r = (v - lo) % n;
      if (r < 0) r += n;
      return lo + r;
    };
    return {m(p.x, box_.lo.x, box_.nx()), m(p.y, box_.lo.y, box_.ny()),
            m(p.z, box_.lo.z, box_.nz())};
  }

  double norm2() const {
    double s = 0;
    for (const auto& v : vals_) s += std::norm(v);
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }

  friend cplx inner(const LatticeField& f, const LatticeField& g) {
    // <f|g> over the union of supports; fields may live on different boxes.
    if (f.box_.lo == g.box_.lo && f.box_.hi == g.box_.hi) {
      cplx s = 0;
      for (std::size_t i = 0; i < f.vals_.size(); ++i)
        s += std::conj(f.vals_[i]) * g.vals_[i];
      return s;
    }
    cplx s = 0;
    g.box_.for_each([&](Vec3i p) { s += std::conj(f.at(p)) * g.at(p); });
    if (!f.periodic_) {
      f.box_.for_each([&](Vec3i p) {
        if (!g.box_.contains(p)) s += std::conj(f.at(p)) * g.at(p);
      });
    }
    return s;
  }

 private:
  BoxRegion box_;
  bool periodic_ = false;
  std::vector<cplx> vals_;
};

/// E(p) = 2 sum_i (1 - cos p_i), the tight-binding dispersion on Z^3,
/// evaluated as 4 sum_i sin^2(p_i/2) which is exact and stable near p = 0.
inline double dispersion(double px, double py, double pz) {
  double sx = std::sin(0.5 * px), sy = std::sin(0.5 * py), sz = std::sin(0.5 * pz);
  return 4.0 * (sx * sx + sy * sy + sz * sz);
}
inline double dispersion(const std::array<double, 3>& p) {
  return dispersion(p[0], p[1], p[2]);
}

/// (Delta f)(x) = sum_{|y-x|=1} (f(y) - f(x)).
inline LatticeField laplacian_apply(const LatticeField& f) {
  BoxRegion out_box = f.periodic() ? f.box() : f.box().grown(1);
  LatticeField out(out_box, f.periodic());
  out_box.for_each([&](Vec3i p) {
    cplx acc = -6.0 * f.at(p);
    for (const auto& e : kUnitSteps) acc += f.at(p + e);
    out.set(p, acc);
  });
  return out;
}

/// Forward difference (nabla^i f)(x) = f(x+e_i) - f(x); adjoint uses x-e_i.
inline std::array<LatticeField, 3> gradient_apply(const LatticeField& f,
                                                  bool adjoint = false) {
  BoxRegion out_box = f.periodic() ? f.box() : f.box().grown(1);
  std::array<LatticeField, 3> out = {LatticeField(out_box, f.periodic()),
                                     LatticeField(out_box, f.periodic()),
                                     LatticeField(out_box, f.periodic())};
  static constexpr std::array<Vec3i, 3> axes = {Vec3i{1, 0, 0}, Vec3i{0, 1, 0},
                                                Vec3i{0, 0, 1}};
  for (int i = 0; i < 3; ++i) {
    out_box.for_each([&](Vec3i p) {
      Vec3i q = adjoint ? p - axes[i] : p + axes[i];
      out[i].set(p, f.at(q) - f.at(p));
    });
  }
  return out;
}

/// Symmetrized Neumann form [nabla^dag theta_A nabla]_s applied to f.
/// Acts as the graph Laplacian with edge weights (theta_A(x)+theta_A(y))/2.
inline LatticeField neumann_form_apply(const BoxRegion& A, const LatticeField& f) {
  BoxRegion out_box = f.periodic() ? f.box() : f.box().grown(1);
  LatticeField out(out_box, f.periodic());
  out_box.for_each([&](Vec3i p) {
    double tp = A.contains(p) ? 1.0 : 0.0;
    cplx acc = 0;
    for (const auto& e : kUnitSteps) {
      Vec3i q = p + e;
      double w = 0.5 * (tp + (A.contains(f.periodic() ? f.wrap(q) : q) ? 1.0 : 0.0));
      if (w != 0.0) acc += w * (f.at(p) - f.at(q));
    }
    out.set(p, acc);
  });
  return out;
}

struct DtResult {
  cplx operator_form;  // <f| ([nabla^dag theta_A nabla]_s + theta_A Delta) |g>
  cplx boundary_sum;   // (1/2) sum_{x in A, y notin A, |x-y|=1} [f(x)+f(y)][g(y)-g(x)]
};

/// Evaluates <f|dt_A|g> both as the operator form and as the boundary
/// double sum; the two agree identically.
inline DtResult dt_apply(const BoxRegion& A, const LatticeField& f,
                         const LatticeField& g) {
  LatticeField kg = neumann_form_apply(A, g);
  LatticeField lg = laplacian_apply(g);
  cplx op = 0;
  kg.box().for_each([&](Vec3i p) {
    cplx v = kg.at(p);
    if (A.contains(p)) v += lg.at(p);
    op += std::conj(f.at(p)) * v;
  });

  cplx bsum = 0;
  A.for_each([&](Vec3i p) {
    for (const auto& e : kUnitSteps) {
      Vec3i q = p + e;
      if (A.contains(q)) continue;
      bsum += 0.5 * std::conj(f.at(p) + f.at(q)) * (g.at(q) - g.at(p));
    }
  });
  return {op, bsum};
}

}  // namespace hublab
