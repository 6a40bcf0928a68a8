#ifndef CPMTL_PREFERENCES_HPP_
#define CPMTL_PREFERENCES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cpmtl/numerics.hpp"
#include "cpmtl/objectives.hpp"

namespace cpmtl {

enum class NormMode { Simplex, Sphere };

const char* to_string(NormMode mode);
NormMode norm_mode_from_string(const std::string& s);

/// A trade-off preference over m tasks: nonnegative and normalized either to
/// unit sum (simplex) or unit Euclidean length (sphere).
class PreferenceVector {
 public:
  static constexpr double kNormTolerance = 1e-12;

  PreferenceVector() = default;
  // Validates; throws unless `values` already satisfies `mode`.
  PreferenceVector(Vector values, NormMode mode);

  // Rescales a nonnegative, nonzero raw vector into `mode`.
  static PreferenceVector normalized(std::span<const double> raw, NormMode mode);

  const Vector& values() const { return values_; }
  NormMode mode() const { return mode_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  // Same direction, other normalization.
  PreferenceVector as(NormMode mode) const;

  friend bool operator==(const PreferenceVector&, const PreferenceVector&) = default;

 private:
  Vector values_;
  NormMode mode_ = NormMode::Simplex;
};

/// K unit vectors in the nonnegative orthant.
struct ReferenceSet {
  std::vector<Vector> vectors;

  std::size_t size() const { return vectors.size(); }
  void validate(std::size_t m) const;
};

/// The angular region of loss space closer to p than to any reference.
class RegionSpec {
 public:
  static constexpr double kDuplicateTolerance = 1e-9;

  RegionSpec(PreferenceVector p, ReferenceSet refs);

  const PreferenceVector& preference() const { return p_; }
  const ReferenceSet& references() const { return refs_; }

 private:
  PreferenceVector p_;
  ReferenceSet refs_;
};

enum class PreferenceDistribution { UniformSimplex, UniformSphereOrthant };

struct SamplerConfig {
  PreferenceDistribution preference_distribution = PreferenceDistribution::UniformSphereOrthant;
  std::size_t reference_count = 3;
  std::uint64_t rng_seed = 1;
};

/// Symmetric Dirichlet(1, ..., 1) draw: uniform on the simplex.
Vector sample_dirichlet(std::size_t m, Rng& rng);

PreferenceVector sample_preference(const SamplerConfig& cfg, std::size_t m, Rng& rng);

/// K sphere-orthant references; any draw within 1e-9 of p is redrawn.
ReferenceSet sample_references(std::size_t k, const PreferenceVector& p, Rng& rng);

/// G_j = (u_j - p) . L for every reference.
Vector constraint_values(const RegionSpec& region, const LossVector& losses);

/// True iff p . L >= u_j . L for every reference (ties count as inside).
/// A zero loss vector is inside by definition.
bool in_region(const RegionSpec& region, const LossVector& losses);

struct EmbeddingTable {
  DenseMatrix rows;  // m x q
  bool trainable = true;

  std::size_t num_tasks() const { return rows.rows; }
  std::size_t dim() const { return rows.cols; }
};

/// sum_i p_i e_i
Vector embed(std::span<const double> p, const EmbeddingTable& table);
inline Vector embed(const PreferenceVector& p, const EmbeddingTable& table) {
  return embed(p.values(), table);
}

/// Evenly spaced preferences over the m = 2 trade-off, one-hot endpoints first
/// and last. For m > 2 the one-hot vertices come first, then seeded draws.
std::vector<PreferenceVector> preference_grid(std::size_t m, std::size_t count, NormMode mode);

}  // namespace cpmtl

#endif  // CPMTL_PREFERENCES_HPP_
