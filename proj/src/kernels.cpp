#include "cpmtl/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cpmtl::kernels {

namespace {

void check_uniform(const VectorViews& vectors) {
  for (const auto& v : vectors)
    if (v.size() != vectors.front().size())
      throw Error(ErrorKind::Shape, "vectors must share one length");
}

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

}  // namespace

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

DenseMatrix gram_matrix(const VectorViews& vectors) {
  check_uniform(vectors);
  const std::size_t n = vectors.size();
  DenseMatrix G(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double s = dot(vectors[i], vectors[j]);
      G(i, j) = s;
      G(j, i) = s;
    }
  return G;
}

void combine(std::span<const double> weights, const VectorViews& vectors, std::span<double> out) {
  check_uniform(vectors);
  const std::size_t n = vectors.size();
  const std::size_t dim = out.size();
  for (std::size_t c = 0; c < dim; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += weights[i] * vectors[i][c];
    out[c] = s;
  }
}

}  // namespace serial

DenseMatrix gram_matrix(const VectorViews& vectors) {
  check_uniform(vectors);
  const std::size_t n = vectors.size();
  DenseMatrix G(n, n);
  if (n == 0) return G;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);
  const bool parallel = pairs.size() * vectors.front().size() >= kParallelThreshold;
  const long count = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (long k = 0; k < count; ++k) {
    const auto [i, j] = pairs[static_cast<std::size_t>(k)];
    const double s = dot(vectors[i], vectors[j]);
    G(i, j) = s;
    G(j, i) = s;
  }
  return G;
}

void combine(std::span<const double> weights, const VectorViews& vectors, std::span<double> out) {
  check_uniform(vectors);
  const std::size_t n = vectors.size();
  const long dim = static_cast<long>(out.size());
  const bool parallel = out.size() * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (parallel)
  for (long c = 0; c < dim; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += weights[i] * vectors[i][static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(c)] = s;
  }
}

}  // namespace cpmtl::kernels
