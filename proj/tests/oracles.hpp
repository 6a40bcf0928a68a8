// Independent reference computations used by the unit tests and the
// acceptance binary. None of these call into the library's solvers.
#ifndef CPMTL_TESTS_ORACLES_HPP_
#define CPMTL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec combine(const std::vector<Vec>& vs, const Vec& w) {
  Vec d(vs[0].size(), 0.0);
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += w[i] * vs[i][k];
  return d;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// Two-vector min-norm point: gamma * v1 + (1 - gamma) * v2.
inline Vec two_vector_min_norm(const Vec& v1, const Vec& v2, double* gamma_out = nullptr) {
  Vec diff(v1.size());
  for (std::size_t k = 0; k < v1.size(); ++k) diff[k] = v1[k] - v2[k];
  const double dd = dot(diff, diff);
  double gamma = 0.5;
  if (dd > 0.0) {
    Vec v2m1(v1.size());
    for (std::size_t k = 0; k < v1.size(); ++k) v2m1[k] = v2[k] - v1[k];
    gamma = std::clamp(dot(v2m1, v2) / dd, 0.0, 1.0);
  }
  if (gamma_out) *gamma_out = gamma;
  return combine({v1, v2}, {gamma, 1.0 - gamma});
}

// min ||sum w_i v_i|| over a simplex grid with spacing 1/steps.
inline double grid_min_norm(const std::vector<Vec>& vs, int steps) {
  const std::size_t n = vs.size();
  // Precompute the Gram matrix: ||d||^2 = w^T G w.
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g[i * n + j] = dot(vs[i], vs[j]);
  std::vector<int> counts(n, 0);
  double best = std::numeric_limits<double>::infinity();
  Vec w(n);
  // Recursive enumeration of compositions of `steps` into n parts.
  auto rec = [&](auto&& self, std::size_t idx, int left) -> void {
    if (idx + 1 == n) {
      counts[idx] = left;
      for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(counts[i]) / steps;
      double q = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] == 0.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += g[i * n + j] * w[j];
        q += w[i] * row;
      }
      best = std::min(best, q);
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[idx] = c;
      self(self, idx + 1, left - c);
    }
  };
  rec(rec, 0, steps);
  return std::sqrt(std::max(best, 0.0));
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Returns false when A is numerically singular.
inline bool solve(std::vector<double> a, Vec b, std::size_t n, Vec& x) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) < 1e-12) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c * n + k] * x[k];
    x[c] = s / a[c * n + c];
  }
  return true;
}

// Exact min-norm point of the convex hull by enumerating faces: on each
// support set S the affine-constrained minimizer solves [G_S 1; 1^T 0]. The
// optimum lies in the relative interior of some face, so the smallest value
// over faces whose minimizer has nonnegative weights is the global minimum.
inline double kkt_min_norm(const std::vector<Vec>& vs, Vec* weights = nullptr) {
  const std::size_t n = vs.size();
  double best = std::numeric_limits<double>::infinity();
  Vec best_w(n, 0.0);
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(i);
    const std::size_t k = s.size();
    const std::size_t sz = k + 1;
    std::vector<double> a(sz * sz, 0.0);
    Vec b(sz, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) a[i * sz + j] = dot(vs[s[i]], vs[s[j]]);
      a[i * sz + k] = 1.0;
      a[k * sz + i] = 1.0;
    }
    b[k] = 1.0;
    Vec x;
    if (!solve(a, b, sz, x)) continue;
    bool feasible = true;
    for (std::size_t i = 0; i < k; ++i)
      if (x[i] < -1e-12) feasible = false;
    if (!feasible) continue;
    Vec w(n, 0.0);
    for (std::size_t i = 0; i < k; ++i) w[s[i]] = std::max(x[i], 0.0);
    const double v = norm(combine(vs, w));
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  if (weights) *weights = best_w;
  return best;
}

// Area of [0, ref]^2 dominated by the points, counted on a grid of cell
// centers with the given resolution.
inline double grid_hypervolume(const std::vector<Vec>& pts, double r1, double r2, double res) {
  const long nx = std::lround(r1 / res), ny = std::lround(r2 / res);
  long count = 0;
  for (long i = 0; i < nx; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * res;
    for (long j = 0; j < ny; ++j) {
      const double y = (static_cast<double>(j) + 0.5) * res;
      for (const auto& p : pts)
        if (p[0] <= x && p[1] <= y) {
          ++count;
          break;
        }
    }
  }
  return static_cast<double>(count) * res * res;
}

inline bool dominates(const Vec& a, const Vec& b) {
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strict = true;
  }
  return strict;
}

// Indices of points no other point dominates, in input order.
inline std::vector<std::size_t> nondominated(const std::vector<Vec>& pts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dom = false;
    for (std::size_t j = 0; j < pts.size() && !dom; ++j)
      if (j != i && dominates(pts[j], pts[i])) dom = true;
    if (!dom) out.push_back(i);
  }
  return out;
}

// Both synthetic objectives evaluated straight from the formula; the
// residual enters f1 only, averaged over the n - 1 trailing coordinates.
inline Vec synthetic(const Vec& theta) {
  const double n = static_cast<double>(theta.size());
  double resid = 0.0;
  for (std::size_t i = 1; i < theta.size(); ++i) {
    const double e = theta[i] - std::sin(5.0 * theta[0]);
    resid += e * e;
  }
  const double r1 = (theta[0] - 1.0) * (theta[0] - 1.0) + resid / (n - 1.0);
  const double r2 = (theta[0] + 1.0) * (theta[0] + 1.0);
  return {1.0 - std::exp(-r1), 1.0 - std::exp(-r2)};
}

}  // namespace oracle

#endif  // CPMTL_TESTS_ORACLES_HPP_
