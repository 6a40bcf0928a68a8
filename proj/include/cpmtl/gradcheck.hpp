#ifndef CPMTL_GRADCHECK_HPP_
#define CPMTL_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cpmtl/hypergen.hpp"
#include "cpmtl/objectives.hpp"

namespace cpmtl {

struct NamedGenerator {
  std::string name;
  GeneratorSpec spec;
};

/// Small generators covering direct / hyper-main x raw / embedded x chunked /
/// unchunked; two of the hyper-main ones also share main-network segments.
std::vector<NamedGenerator> gradcheck_configurations();

struct GradcheckResult {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

/// Compares the pullback against central differences along random unit
/// directions in phi, each probe at a fresh random preference. The scalar is
/// sum_i c_i L_i(g(p|phi)) when `problem` is given, otherwise a fixed smooth
/// function of theta. Relative error is |a - b| / max(|a|, |b|, 1e-8).
GradcheckResult check_generator_gradient(const NamedGenerator& gen, std::size_t probes, std::uint64_t seed,
                                         const Problem* problem = nullptr, double h = 1e-6);

}  // namespace cpmtl

#endif  // CPMTL_GRADCHECK_HPP_
