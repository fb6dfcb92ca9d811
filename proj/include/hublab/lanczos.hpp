// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hublab {

enum class LanczosStart {
  kOnes,    // normalized all-ones; safe when the ground vector is sign-definite
  kHashed,  // deterministic index-hash entries; safe against symmetry traps
};

struct LanczosOptions {
  double tol = 1e-10;  // residual target, relative to 1 + |value|
  int max_iters = 1000;
  std::int64_t reorth_limit = 100000;  // full reorthogonalization below this dim
  LanczosStart start = LanczosStart::kOnes;
  std::uint64_t seed = 1;  // start-vector hash seed for kHashed
};

struct LanczosResult {
  double value = 0.0;     // lowest Ritz value
  double residual = 0.0;  // ||A y - value y|| for the returned y
  int iterations = 0;
  bool converged = false;
  std::vector<double> vector;  // unit-norm approximate ground vector
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::vector<double> lanczos_start_vector(std::int64_t dim,
                                                const LanczosOptions& opt) {
  std::vector<double> v(dim);
  if (opt.start == LanczosStart::kOnes) {
    double a = 1.0 / std::sqrt(double(dim));
    for (auto& x : v) x = a;
  } else {
    for (std::int64_t i = 0; i < dim; ++i) {
      std::uint64_t h = splitmix64(opt.seed * 0x100000001b3ull + std::uint64_t(i));
      v[i] = double(h >> 11) * 0x1p-53 * 2.0 - 1.0;
    }
    double n = 0;
    for (double x : v) n += x * x;
    n = 1.0 / std::sqrt(n);
    for (auto& x : v) x *= n;
  }
  return v;
}

// Bottom eigenpair of the tridiagonal (alpha, beta) by Sturm-count bisection
// plus pivoted inverse iteration. Serves as the fallback when the QL sweep
// fails; deterministic and immune to the QL non-convergence cases.
inline std::pair<double, Eigen::VectorXd> tridiag_ground_bisect(
    const std::vector<double>& alpha, const std::vector<double>& beta) {
  const int k = int(alpha.size());
  Eigen::VectorXd s(k);
  if (k == 1) {
    s[0] = 1.0;
    return {alpha[0], s};
  }
  double lo = alpha[0], hi = alpha[0], emax = 0.0, tnorm = 0.0;
  for (int i = 0; i < k; ++i) {
    const double l = i > 0 ? std::abs(beta[i - 1]) : 0.0;
    const double r = i + 1 < k ? std::abs(beta[i]) : 0.0;
    lo = std::min(lo, alpha[i] - l - r);
    hi = std::max(hi, alpha[i] + l + r);
    tnorm = std::max(tnorm, std::abs(alpha[i]) + l + r);
    if (i + 1 < k) emax = std::max(emax, std::abs(beta[i]));
  }
  const double pivmin =
      std::numeric_limits<double>::min() * std::max(1.0, emax * emax);
  auto count_below = [&](double x) {
    int cnt = 0;
    double q = alpha[0] - x;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0) ++cnt;
    for (int i = 1; i < k; ++i) {
      q = alpha[i] - x - beta[i - 1] * (beta[i - 1] / q);
      if (std::abs(q) < pivmin) q = -pivmin;
      if (q < 0) ++cnt;
    }
    return cnt;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (count_below(mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  const double theta = 0.5 * (lo + hi);

  // Pivoted LU of (T - theta I); du2 holds the fill-in second superdiagonal
  // from row swaps. The pivot floor caps the amplification of a single
  // near-singular pivot around 1e128, far below overflow.
  const double pfloor = 1e-128 * std::max(1.0, tnorm);
  std::vector<double> dl(k - 1), dd(k), du(k - 1), du2(std::max(k - 2, 0));
  std::vector<unsigned char> swapped(k - 1, 0);
  for (int i = 0; i < k; ++i) dd[i] = alpha[i] - theta;
  for (int i = 0; i + 1 < k; ++i) dl[i] = du[i] = beta[i];
  for (int i = 0; i + 1 < k; ++i) {
    if (std::abs(dd[i]) >= std::abs(dl[i])) {
      if (std::abs(dd[i]) < pfloor) dd[i] = std::copysign(pfloor, dd[i]);
      const double m = dl[i] / dd[i];
      dl[i] = m;
      dd[i + 1] -= m * du[i];
      if (i + 2 < k) du2[i] = 0.0;
    } else {
      const double m = dd[i] / dl[i];
      dd[i] = dl[i];
      dl[i] = m;
      const double tmp = dd[i + 1];
      dd[i + 1] = du[i] - m * tmp;
      du[i] = tmp;
      if (i + 2 < k) {
        du2[i] = du[i + 1];
        du[i + 1] = -m * du[i + 1];
      }
      swapped[i] = 1;
    }
  }
  if (std::abs(dd[k - 1]) < pfloor) dd[k - 1] = std::copysign(pfloor, dd[k - 1]);

  auto solve_in_place = [&](Eigen::VectorXd& x) {
    for (int i = 0; i + 1 < k; ++i) {
      if (swapped[i]) std::swap(x[i], x[i + 1]);
      x[i + 1] -= dl[i] * x[i];
    }
    auto guard = [&](int i) {
      if (std::abs(x[i]) > 1e250)
        for (int j = i; j < k; ++j) x[j] *= 1e-250;
    };
    x[k - 1] /= dd[k - 1];
    guard(k - 1);
    x[k - 2] = (x[k - 2] - du[k - 2] * x[k - 1]) / dd[k - 2];
    guard(k - 2);
    for (int i = k - 3; i >= 0; --i) {
      x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i];
      guard(i);
    }
  };
  auto residual_of = [&](const Eigen::VectorXd& x) {
    double r2 = 0;
    for (int i = 0; i < k; ++i) {
      double t = (alpha[i] - theta) * x[i];
      if (i > 0) t += beta[i - 1] * x[i - 1];
      if (i + 1 < k) t += beta[i] * x[i + 1];
      r2 += t * t;
    }
    return std::sqrt(r2);
  };
  auto normalize = [&](Eigen::VectorXd& x) {
    double mx = 0;
    for (int i = 0; i < k; ++i) mx = std::max(mx, std::abs(x[i]));
    if (!(mx > 0) || !std::isfinite(mx)) return false;
    x /= mx;
    x /= x.norm();
    return true;
  };

  Eigen::VectorXd best(k);
  double best_res = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 2; ++attempt) {
    Eigen::VectorXd x(k);
    for (int i = 0; i < k; ++i)
      x[i] = attempt == 0 ? 1.0 : (i % 2 ? -1.0 : 1.0) * (1.0 + 0.5 * (i % 3));
    x /= x.norm();
    for (int sweep = 0; sweep < 3; ++sweep) {
      solve_in_place(x);
      if (!normalize(x)) break;
      const double r = residual_of(x);
      if (r < best_res) {
        best_res = r;
        best = x;
      }
      if (r <= 1e-13 * (1.0 + std::abs(theta) + tnorm)) break;
    }
    if (best_res <= 1e-10 * (1.0 + std::abs(theta) + tnorm)) break;
  }
  if (std::isfinite(best_res))
    s = best;
  else
    s.setConstant(1.0 / std::sqrt(double(k)));
  return {theta, s};
}

// Lowest eigenpair of the tridiagonal (alpha, beta); returns {theta, s} with
// s the bottom eigenvector. The QL sweep can fail to converge on rare
// inputs, silently returning unsorted garbage, so its status is checked and
// the bisection fallback takes over.
inline std::pair<double, Eigen::VectorXd> tridiag_ground(
    const std::vector<double>& alpha, const std::vector<double>& beta) {
  int k = int(alpha.size());
  Eigen::VectorXd d(k), e(k > 1 ? k - 1 : 1);
  for (int i = 0; i < k; ++i) d[i] = alpha[i];
  for (int i = 0; i + 1 < k; ++i) e[i] = beta[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(d, e.head(std::max(k - 1, 0)),
                            Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) return tridiag_ground_bisect(alpha, beta);
  return {es.eigenvalues()[0], es.eigenvectors().col(0)};
}

}  // namespace detail

/// Ground eigenpair of a symmetric operator given by its matvec
/// apply(in, out), via Lanczos with a deterministic start vector. Below
/// opt.reorth_limit the Krylov basis is kept and fully reorthogonalized;
/// above it a memory-lean two-pass scheme is used (no stored basis). The
/// returned residual is always computed explicitly from the final vector.
template <class MatVec>
LanczosResult lanczos_ground(std::int64_t dim, MatVec&& apply,
                             const LanczosOptions& opt = {},
                             const std::vector<double>* start = nullptr) {
  if (dim <= 0) throw std::invalid_argument("lanczos_ground: empty space");
  if (!(opt.tol > 0)) throw std::invalid_argument("lanczos_ground: bad tolerance");

  std::vector<double> v0 =
      start ? *start : detail::lanczos_start_vector(dim, opt);
  if (start) {
    double n = 0;
    for (double x : v0) n += x * x;
    if (n <= 0) throw std::invalid_argument("lanczos_ground: zero start vector");
    n = 1.0 / std::sqrt(n);
    for (auto& x : v0) x *= n;
  }

  auto dot = [dim](const double* a, const double* b) {
    double s = 0;
    for (std::int64_t i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
  };

  const bool keep_basis = dim <= opt.reorth_limit;
  std::vector<double> alpha, beta;  // beta[j] couples v_j and v_{j+1}
  LanczosResult res;

  if (dim == 1) {
    std::vector<double> w(1);
    apply(v0.data(), w.data());
    res.value = w[0] / v0[0];
    res.vector = {1.0};
    res.iterations = 1;
    res.converged = true;
    res.residual = 0.0;
    return res;
  }

  std::vector<std::vector<double>> basis;
  std::vector<double> v_prev(dim, 0.0), v_cur = v0, w(dim);
  double theta = 0.0;
  Eigen::VectorXd s;
  int k = 0;
  double beta_prev = 0.0;

  auto run_recurrence = [&](int stop_at, std::vector<double>* accumulate) {
    // Recomputes the recurrence deterministically. When accumulate is given
    // (second pass), adds s[j] * v_j into it using the recorded coefficients.
    std::fill(v_prev.begin(), v_prev.end(), 0.0);
    v_cur = v0;
    double bprev = 0.0;
    for (int j = 0; j < stop_at; ++j) {
      if (accumulate) {
        double c = s[j];
        for (std::int64_t i = 0; i < dim; ++i) (*accumulate)[i] += c * v_cur[i];
        if (j + 1 == stop_at) break;
      }
      apply(v_cur.data(), w.data());
      double a = accumulate ? alpha[j] : dot(w.data(), v_cur.data());
      for (std::int64_t i = 0; i < dim; ++i) w[i] -= a * v_cur[i] + bprev * v_prev[i];
      if (!accumulate && keep_basis) {
        for (int pass = 0; pass < 2; ++pass)
          for (const auto& q : basis) {
            double c = dot(w.data(), q.data());
            for (std::int64_t i = 0; i < dim; ++i) w[i] -= c * q[i];
          }
      }
      double b = accumulate ? beta[j] : std::sqrt(dot(w.data(), w.data()));
      if (!accumulate) {
        alpha.push_back(a);
        beta.push_back(b);
      }
      if (b < 1e-13 * (1.0 + std::abs(accumulate ? theta : a))) return j + 1;
      double inv = 1.0 / b;
      std::swap(v_prev, v_cur);
      for (std::int64_t i = 0; i < dim; ++i) v_cur[i] = w[i] * inv;
      bprev = b;
    }
    return stop_at;
  };

  // Pass 1: build the tridiagonal until the bottom Ritz pair converges.
  {
    std::fill(v_prev.begin(), v_prev.end(), 0.0);
    v_cur = v0;
    if (keep_basis) basis.push_back(v_cur);
    for (k = 0; k < opt.max_iters; ++k) {
      apply(v_cur.data(), w.data());
      double a = dot(w.data(), v_cur.data());
      for (std::int64_t i = 0; i < dim; ++i) w[i] -= a * v_cur[i] + beta_prev * v_prev[i];
      if (keep_basis) {
        for (int pass = 0; pass < 2; ++pass)
          for (const auto& q : basis) {
            double c = dot(w.data(), q.data());
            for (std::int64_t i = 0; i < dim; ++i) w[i] -= c * q[i];
          }
      }
      double b = std::sqrt(dot(w.data(), w.data()));
      alpha.push_back(a);
      beta.push_back(b);

      bool check = (k < 32) || (k % 4 == 3) || (k + 1 == opt.max_iters);
      if (check || b < 1e-13) {
        auto [th, vec] = detail::tridiag_ground(alpha, beta);
        theta = th;
        s = vec;
        double est = std::abs(b * s[k]);
        if (est < opt.tol * (1.0 + std::abs(theta)) || b < 1e-13 * (1.0 + std::abs(a))) {
          ++k;
          break;
        }
      }
      if (b < 1e-13 * (1.0 + std::abs(a))) {
        ++k;
        break;
      }
      double inv = 1.0 / b;
      std::swap(v_prev, v_cur);
      for (std::int64_t i = 0; i < dim; ++i) v_cur[i] = w[i] * inv;
      beta_prev = b;
      if (keep_basis) basis.push_back(v_cur);
    }
    if (s.size() == 0 || s.size() != long(alpha.size())) {
      auto [th, vec] = detail::tridiag_ground(alpha, beta);
      theta = th;
      s = vec;
    }
  }

  // Assemble the Ritz vector.
  std::vector<double> y(dim, 0.0);
  if (keep_basis) {
    for (std::size_t j = 0; j < basis.size() && j < std::size_t(s.size()); ++j) {
      double c = s[long(j)];
      for (std::int64_t i = 0; i < dim; ++i) y[i] += c * basis[j][i];
    }
  } else {
    run_recurrence(int(s.size()), &y);
  }
  double n = std::sqrt(dot(y.data(), y.data()));
  for (auto& x : y) x /= n;

  apply(y.data(), w.data());
  double val = dot(w.data(), y.data());
  double r2 = 0;
  for (std::int64_t i = 0; i < dim; ++i) {
    double d = w[i] - val * y[i];
    r2 += d * d;
  }

  res.value = val;
  res.residual = std::sqrt(r2);
  res.iterations = k;
  res.vector = std::move(y);
  res.converged = res.residual <= 10.0 * opt.tol * (1.0 + std::abs(val));
  return res;
}

}  // namespace hublab
