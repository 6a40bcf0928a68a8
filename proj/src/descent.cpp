#include "cpmtl/descent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpmtl/kernels.hpp"

namespace cpmtl {

ActiveSet ActiveSet::from_values(std::span<const double> g, double epsilon) {
  ActiveSet a;
  a.epsilon = epsilon;
  for (std::size_t j = 0; j < g.size(); ++j)
    if (g[j] >= -epsilon) a.indices.push_back(j);
  return a;
}

namespace {

void check_uniform(std::span<const ParamVector> vs, const char* what) {
  if (vs.empty()) throw Error(ErrorKind::Shape, std::string("no ") + what, what);
  for (std::size_t i = 1; i < vs.size(); ++i)
    if (!vs[i].same_shape(vs[0]))
      throw Error(ErrorKind::Shape, std::string(what) + " " + std::to_string(i) + " has a different shape",
                  what);
}

double quad(const DenseMatrix& G, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    double r = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) r += G(i, j) * w[j];
    s += w[i] * r;
  }
  return s;
}

// Minimizer of w^T G w over the affine hull of the vertices in `support`,
// from the bordered KKT system. Entries may come out negative. Returns false
// when the system is numerically singular.
bool affine_minimizer(const DenseMatrix& G, const std::vector<std::size_t>& support, Vector& x) {
  const std::size_t k = support.size(), sz = k + 1;
  std::vector<double> A(sz * sz, 0.0);
  Vector b(sz, 0.0);
  double scale = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) A[i * sz + j] = G(support[i], support[j]);
    A[i * sz + k] = 1.0;
    A[k * sz + i] = 1.0;
    scale = std::max(scale, std::abs(G(support[i], support[i])));
  }
  b[k] = 1.0;
  for (std::size_t c = 0; c < sz; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < sz; ++r)
      if (std::abs(A[r * sz + c]) > std::abs(A[piv * sz + c])) piv = r;
    if (std::abs(A[piv * sz + c]) <= 1e-12 * scale) return false;
    if (piv != c) {
      for (std::size_t j = 0; j < sz; ++j) std::swap(A[c * sz + j], A[piv * sz + j]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < sz; ++r) {
      const double f = A[r * sz + c] / A[c * sz + c];
      for (std::size_t j = c; j < sz; ++j) A[r * sz + j] -= f * A[c * sz + j];
      b[r] -= f * b[c];
    }
  }
  Vector y(sz);
  for (std::size_t c = sz; c-- > 0;) {
    double v = b[c];
    for (std::size_t j = c + 1; j < sz; ++j) v -= A[c * sz + j] * y[j];
    y[c] = v / A[c * sz + c];
  }
  x.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(k));
  return true;
}

// Wolfe's minor cycle: move from w toward the affine minimizer of the
// support, stopping at the simplex boundary and dropping the vertex that hits
// zero, until the minimizer is feasible. A singular system stops it early
// with w still feasible.
void minor_cycles(const DenseMatrix& G, Vector& w) {
  for (;;) {
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) support.push_back(i);
    if (support.size() < 2) return;
    Vector x;
    if (!affine_minimizer(G, support, x)) return;
    double theta = 1.0;
    std::size_t drop = support.size();
    for (std::size_t i = 0; i < support.size(); ++i)
      if (x[i] < 0.0) {
        const double wi = w[support[i]];
        const double r = wi / (wi - x[i]);
        if (r < theta) {
          theta = r;
          drop = i;
        }
      }
    for (std::size_t i = 0; i < support.size(); ++i) {
      double& wi = w[support[i]];
      wi += theta * (x[i] - wi);
      if (wi < 0.0) wi = 0.0;
    }
    if (drop == support.size()) return;
    w[support[drop]] = 0.0;
    double sum = 0.0;
    for (double v : w) sum += v;
    for (double& v : w) v /= sum;
  }
}

ParamVector combination(std::span<const double> w, std::span<const ParamVector> vs) {
  ParamVector out = ParamVector::zeros(vs[0].layout);
  kernels::combine(w, kernels::views(vs), out.data);
  return out;
}

}  // namespace

DescentDirection linear_direction(const PreferenceVector& p, std::span<const ParamVector> grads,
                                  double criticality) {
  check_uniform(grads, "gradients");
  if (grads.size() != p.size())
    throw Error(ErrorKind::Shape, "preference length != gradient count", "gradients");
  DescentDirection out;
  out.d = combination(p.values(), grads);
  out.weights.alpha = p.values();
  out.norm = norm2(out.d.data);
  out.is_critical = out.norm < criticality;
  return out;
}

DualSolution min_norm_dual(std::span<const ParamVector> vectors, std::size_t max_iters, double tol,
                           bool corrective) {
  check_uniform(vectors, "vectors");
  const std::size_t n = vectors.size();
  const DenseMatrix G = kernels::gram_matrix(kernels::views(vectors));

  Vector w(n, 0.0);
  if (n == 1) {
    w[0] = 1.0;
  } else {
    // Closed-form optimum on every edge; start from the best one.
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double denom = G(i, i) - 2.0 * G(i, j) + G(j, j);
        double gamma = 0.5;
        if (denom > 0.0) gamma = std::clamp((G(j, j) - G(i, j)) / denom, 0.0, 1.0);
        const double value = gamma * gamma * G(i, i) + 2.0 * gamma * (1.0 - gamma) * G(i, j) +
                             (1.0 - gamma) * (1.0 - gamma) * G(j, j);
        if (value < best) {
          best = value;
          std::fill(w.begin(), w.end(), 0.0);
          w[i] = gamma;
          w[j] = 1.0 - gamma;
        }
      }
  }

  DualSolution sol;
  double a = quad(G, w);
  sol.objective_trace.push_back(a);
  Vector Gw(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j) r += G(i, j) * w[j];
      Gw[i] = r;
    }
    const std::size_t t = static_cast<std::size_t>(std::min_element(Gw.begin(), Gw.end()) - Gw.begin());
    const double gap = a - Gw[t];
    if (gap <= tol) break;

    const double denom = a - 2.0 * Gw[t] + G(t, t);
    if (!(denom > 0.0)) break;
    const double gamma = std::clamp(gap / denom, 0.0, 1.0);
    for (double& x : w) x *= 1.0 - gamma;
    w[t] += gamma;
    if (corrective) {
      // Re-optimize over the support the step just extended.
      Vector trial = w;
      minor_cycles(G, trial);
      if (quad(G, trial) <= quad(G, w)) w = std::move(trial);
    }
    const double next = quad(G, w);
    const double improvement = a - next;
    a = std::min(a, next);
    sol.objective_trace.push_back(a);
    sol.iterations = it + 1;
    if (improvement < 1e-12 && gap <= 0.5 * a) break;
  }

  sol.lambda = w;
  sol.direction = combination(w, vectors);
  double alpha = -std::numeric_limits<double>::infinity();
  for (const auto& v : vectors) alpha = std::max(alpha, -dot(v.data, sol.direction.data));
  sol.alpha = alpha;
  return sol;
}

namespace {

// Shared by the single- and multi-preference constrained solvers. Each row of
// `coeffs` expresses one active constraint gradient as a combination of the
// loss gradients.
DescentDirection solve_constrained(std::span<const ParamVector> loss_grads, const std::vector<Vector>& coeffs,
                                   ActiveSet active, const DescentOptions& options) {
  const std::size_t n = loss_grads.size();
  Vector scale(n, 1.0);
  std::vector<ParamVector> vectors;
  vectors.reserve(n + coeffs.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (options.normalize_gradients) {
      const double g = norm2(loss_grads[i].data);
      if (g > 0.0) scale[i] = 1.0 / g;
      ParamVector v = loss_grads[i];
      for (double& x : v.data) x *= scale[i];
      vectors.push_back(std::move(v));
    } else {
      vectors.push_back(loss_grads[i]);
    }
  }
  for (const auto& row : coeffs) vectors.push_back(combination(row, std::span<const ParamVector>(vectors.data(), n)));

  DualSolution dual = min_norm_dual(vectors, options.max_iters, options.tol, options.corrective);
  Vector lambda(dual.lambda.begin(), dual.lambda.begin() + static_cast<std::ptrdiff_t>(n));
  Vector beta(dual.lambda.begin() + static_cast<std::ptrdiff_t>(n), dual.lambda.end());

  DescentDirection out;
  out.weights.alpha = lambda;
  for (std::size_t r = 0; r < coeffs.size(); ++r)
    for (std::size_t i = 0; i < n; ++i) out.weights.alpha[i] += beta[r] * coeffs[r][i];
  for (std::size_t i = 0; i < n; ++i) out.weights.alpha[i] *= scale[i];

  dual.lambda = std::move(lambda);
  dual.beta = std::move(beta);
  out.d = dual.direction;
  out.norm = norm2(out.d.data);
  out.is_critical = out.norm < options.criticality;
  out.active = std::move(active);
  out.dual = std::move(dual);
  return out;
}

}  // namespace

std::vector<ParamVector> constraint_gradients(const RegionSpec& region, const ActiveSet& active,
                                              std::span<const ParamVector> loss_grads) {
  check_uniform(loss_grads, "gradients");
  const auto& p = region.preference().values();
  if (loss_grads.size() != p.size())
    throw Error(ErrorKind::Shape, "gradient count != preference length", "gradients");
  std::vector<ParamVector> out;
  for (std::size_t j : active.indices) {
    const auto& u = region.references().vectors.at(j);
    Vector c(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) c[i] = u[i] - p[i];
    out.push_back(combination(c, loss_grads));
  }
  return out;
}

DescentDirection constrained_direction(const RegionSpec& region, const LossVector& losses,
                                       std::span<const ParamVector> loss_grads, const DescentOptions& options) {
  check_uniform(loss_grads, "gradients");
  const auto& p = region.preference().values();
  if (loss_grads.size() != p.size())
    throw Error(ErrorKind::Shape, "gradient count != preference length", "gradients");
  if (options.activation_slack < 0.0)
    throw Error(ErrorKind::InvalidArgument, "activation slack must be >= 0", "eps");
  const Vector g = constraint_values(region, losses);
  ActiveSet active = ActiveSet::from_values(g, options.activation_slack);
  std::vector<Vector> coeffs;
  for (std::size_t j : active.indices) {
    const auto& u = region.references().vectors[j];
    Vector c(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) c[i] = u[i] - p[i];
    coeffs.push_back(std::move(c));
  }
  return solve_constrained(loss_grads, coeffs, std::move(active), options);
}

bool lemma1_check(const DescentDirection& d, std::span<const ParamVector> loss_grads,
                  std::span<const ParamVector> active_constraint_grads, double tol) {
  if (d.is_critical) throw Error(ErrorKind::InvalidArgument, "lemma check needs a non-critical direction", "d");
  const double bound = -0.5 * dot(d.d.data, d.d.data) + tol;
  auto ok = [&](const ParamVector& g) { return -dot(g.data, d.d.data) <= bound; };
  return std::all_of(loss_grads.begin(), loss_grads.end(), ok) &&
         std::all_of(active_constraint_grads.begin(), active_constraint_grads.end(), ok);
}

std::vector<CrossConstraint> cross_constraints(std::size_t k) {
  std::vector<CrossConstraint> out;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      if (a != b) out.push_back({a, b});
  return out;
}

DescentDirection batched_direction(std::span<const PreferenceVector> prefs, std::span<const LossVector> losses,
                                   std::span<const std::vector<ParamVector>> loss_grads, BatchMode mode,
                                   const DescentOptions& options) {
  const std::size_t K = prefs.size();
  if (K == 0) throw Error(ErrorKind::InvalidArgument, "batched direction needs at least one preference", "prefs");
  if (losses.size() != K || loss_grads.size() != K)
    throw Error(ErrorKind::Shape, "prefs, losses and gradients disagree on K", "prefs");
  const std::size_t m = prefs[0].size();
  std::vector<ParamVector> flat;
  flat.reserve(K * m);
  for (std::size_t k = 0; k < K; ++k) {
    if (prefs[k].size() != m || losses[k].size() != m || loss_grads[k].size() != m)
      throw Error(ErrorKind::Shape, "preference " + std::to_string(k) + " has the wrong task count", "prefs");
    for (const auto& g : loss_grads[k]) flat.push_back(g);
  }
  check_uniform(flat, "gradients");

  if (mode == BatchMode::Linear) {
    Vector w;
    w.reserve(K * m);
    for (const auto& p : prefs) w.insert(w.end(), p.values().begin(), p.values().end());
    DescentDirection out;
    out.d = combination(w, flat);
    out.weights.alpha = std::move(w);
    out.norm = norm2(out.d.data);
    out.is_critical = out.norm < options.criticality;
    return out;
  }

  std::vector<Vector> unit;
  unit.reserve(K);
  for (const auto& p : prefs) unit.push_back(p.as(NormMode::Sphere).values());
  const auto pairs = cross_constraints(K);
  Vector g;
  g.reserve(pairs.size());
  for (const auto& [k, j] : pairs) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += (unit[j][i] - unit[k][i]) * losses[k][i];
    g.push_back(s);
  }
  ActiveSet active = ActiveSet::from_values(g, options.activation_slack);
  std::vector<Vector> coeffs;
  for (std::size_t r : active.indices) {
    const auto [k, j] = pairs[r];
    Vector c(K * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) c[k * m + i] = unit[j][i] - unit[k][i];
    coeffs.push_back(std::move(c));
  }
  return solve_constrained(flat, coeffs, std::move(active), options);
}

}  // namespace cpmtl
