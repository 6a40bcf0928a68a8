#ifndef CPMTL_EVALUATION_HPP_
#define CPMTL_EVALUATION_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cpmtl/checkpoint.hpp"
#include "cpmtl/hypergen.hpp"
#include "cpmtl/objectives.hpp"
#include "cpmtl/preferences.hpp"

namespace cpmtl {

struct FrontSample {
  PreferenceVector p;
  LossVector losses;
};

struct FrontMetrics {
  double hypervolume = 0.0;
  double mean_oracle_distance = 0.0;
  double max_oracle_gap = 0.0;
  double region_compliance_rate = 0.0;
  std::size_t dominated_count = 0;
  std::size_t samples = 0;
  std::size_t hypervolume_excluded = 0;
};

inline constexpr std::size_t kOracleSamples = 1000;
inline constexpr std::size_t kEvaluationReferences = 32;

/// Losses of the generated solution for `p` on the problem's full dataset.
/// The sweep, the CLI and the HTTP layer all go through here.
LossVector evaluate_preference(const Problem& problem, const GeneratorSpec& spec, const GeneratorParams& params,
                               const PreferenceVector& p);

/// preference_grid(m, grid_size, mode), generated and evaluated in grid order.
std::vector<FrontSample> sweep_front(const Problem& problem, const GeneratorSpec& spec,
                                     const GeneratorParams& params, NormMode mode, std::size_t grid_size);
std::vector<FrontSample> sweep_front(const Checkpoint& ckpt, const Problem& problem, std::size_t grid_size);

namespace serial {

std::vector<FrontSample> sweep_front(const Problem& problem, const GeneratorSpec& spec,
                                     const GeneratorParams& params, NormMode mode, std::size_t grid_size);

}  // namespace serial

/// Throws unless the checkpoint was trained on `problem`.
void check_compatible(const Checkpoint& ckpt, const Problem& problem);

struct Hypervolume {
  double value = 0.0;
  // Samples that do not weakly dominate the reference point.
  std::size_t excluded = 0;
};

Hypervolume hypervolume_2d(std::span<const LossVector> samples, const LossVector& reference);

struct FrontDistance {
  double mean_oracle_distance = 0.0;
  double max_oracle_gap = 0.0;
};

FrontDistance front_distance(std::span<const LossVector> samples, std::span<const LossVector> oracle);

/// Fixed seeded set of unit vectors in the nonnegative orthant.
ReferenceSet evaluation_reference_grid(std::size_t m, std::size_t count = kEvaluationReferences);

/// Share of samples whose loss has its largest inner product with p among p
/// and the references farther than 1e-6 from p. Preferences are taken in
/// sphere normalization.
double region_compliance(std::span<const FrontSample> samples, const ReferenceSet& eval_refs);

struct DominanceResult {
  std::vector<std::size_t> kept;  // indices into the input, in order
  std::size_t dominated_count = 0;
};

DominanceResult dominance_filter(std::span<const LossVector> samples);

std::vector<LossVector> losses_of(std::span<const FrontSample> samples);

FrontMetrics compute_metrics(std::span<const FrontSample> samples, const Problem& problem);

void write_front_csv(std::ostream& out, std::span<const FrontSample> samples);
std::string format_metrics(const FrontMetrics& m);

}  // namespace cpmtl

#endif  // CPMTL_EVALUATION_HPP_
