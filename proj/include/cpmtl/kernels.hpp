#ifndef CPMTL_KERNELS_HPP_
#define CPMTL_KERNELS_HPP_

#include <span>
#include <vector>

#include "cpmtl/numerics.hpp"

// Data-parallel inner loops. Each OpenMP kernel keeps a serial twin with the
// same per-element arithmetic, so the two agree bit-for-bit and the serial
// one serves as the reference in tests and benchmarks.
namespace cpmtl::kernels {

using VectorViews = std::vector<std::span<const double>>;

bool openmp_enabled();
int max_threads();

/// G(i, j) = v_i . v_j, parallel over (i, j) pairs.
DenseMatrix gram_matrix(const VectorViews& vectors);

/// out = sum_i w_i v_i, parallel over coordinates.
void combine(std::span<const double> weights, const VectorViews& vectors, std::span<double> out);

namespace serial {

DenseMatrix gram_matrix(const VectorViews& vectors);
void combine(std::span<const double> weights, const VectorViews& vectors, std::span<double> out);

}  // namespace serial

template <typename Container>
VectorViews views(const Container& params) {
  VectorViews v;
  v.reserve(params.size());
  for (const auto& p : params) v.emplace_back(p.data);
  return v;
}

}  // namespace cpmtl::kernels

#endif  // CPMTL_KERNELS_HPP_
