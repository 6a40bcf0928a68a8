#include "cpmtl/preferences.hpp"

#include <cmath>
#include <numbers>

namespace cpmtl {

const char* to_string(NormMode mode) { return mode == NormMode::Simplex ? "simplex" : "sphere"; }

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "simplex") return NormMode::Simplex;
  if (s == "sphere") return NormMode::Sphere;
  throw Error(ErrorKind::InvalidArgument, "unknown preference mode '" + s + "'", "preference_mode");
}

namespace {

double mode_norm(std::span<const double> v, NormMode mode) {
  if (mode == NormMode::Sphere) return norm2(v);
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

PreferenceVector::PreferenceVector(Vector values, NormMode mode) : values_(std::move(values)), mode_(mode) {
  if (values_.empty()) throw Error(ErrorKind::Shape, "empty preference", "preference");
  for (double x : values_)
    if (!(x >= 0.0) || !std::isfinite(x))
      throw Error(ErrorKind::InvalidArgument, "preference entries must be finite and nonnegative",
                  "preference");
  if (std::abs(mode_norm(values_, mode_) - 1.0) > kNormTolerance)
    throw Error(ErrorKind::InvalidArgument, std::string("preference is not ") + to_string(mode_) +
                                                "-normalized", "preference");
}

PreferenceVector PreferenceVector::normalized(std::span<const double> raw, NormMode mode) {
  for (double x : raw)
    if (!(x >= 0.0) || !std::isfinite(x))
      throw Error(ErrorKind::InvalidArgument, "preference entries must be finite and nonnegative",
                  "preference");
  const double n = mode_norm(raw, mode);
  if (!(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "preference needs a positive entry", "preference");
  Vector v(raw.begin(), raw.end());
  for (double& x : v) x /= n;
  return PreferenceVector(std::move(v), mode);
}

PreferenceVector PreferenceVector::as(NormMode mode) const {
  if (mode == mode_) return *this;
  return normalized(values_, mode);
}

void ReferenceSet::validate(std::size_t m) const {
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    const auto& u = vectors[j];
    if (u.size() != m)
      throw Error(ErrorKind::Shape, "reference length mismatch", "reference " + std::to_string(j));
    for (double x : u)
      if (!(x >= 0.0))
        throw Error(ErrorKind::InvalidArgument, "reference outside the nonnegative orthant",
                    "reference " + std::to_string(j));
    if (std::abs(norm2(u) - 1.0) > PreferenceVector::kNormTolerance)
      throw Error(ErrorKind::InvalidArgument, "reference is not a unit vector",
                  "reference " + std::to_string(j));
  }
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

RegionSpec::RegionSpec(PreferenceVector p, ReferenceSet refs) : p_(std::move(p)), refs_(std::move(refs)) {
  if (p_.mode() != NormMode::Sphere) p_ = p_.as(NormMode::Sphere);
  refs_.validate(p_.size());
  for (std::size_t j = 0; j < refs_.size(); ++j)
    if (distance(refs_.vectors[j], p_.values()) <= kDuplicateTolerance)
      throw Error(ErrorKind::InvalidArgument, "reference coincides with the preference",
                  "reference " + std::to_string(j));
}

Vector sample_dirichlet(std::size_t m, Rng& rng) {
  Vector v(m);
  double s = 0.0;
  for (auto& x : v) {
    x = -std::log(uniform01(rng));
    s += x;
  }
  for (auto& x : v) x /= s;
  return v;
}

PreferenceVector sample_preference(const SamplerConfig& cfg, std::size_t m, Rng& rng) {
  Vector v = sample_dirichlet(m, rng);
  if (cfg.preference_distribution == PreferenceDistribution::UniformSimplex)
    return PreferenceVector::normalized(v, NormMode::Simplex);
  return PreferenceVector::normalized(v, NormMode::Sphere);
}

ReferenceSet sample_references(std::size_t k, const PreferenceVector& p, Rng& rng) {
  const PreferenceVector unit = p.as(NormMode::Sphere);
  ReferenceSet refs;
  refs.vectors.reserve(k);
  while (refs.vectors.size() < k) {
    auto u = PreferenceVector::normalized(sample_dirichlet(p.size(), rng), NormMode::Sphere);
    if (distance(u.values(), unit.values()) <= RegionSpec::kDuplicateTolerance) continue;
    refs.vectors.push_back(u.values());
  }
  return refs;
}

Vector constraint_values(const RegionSpec& region, const LossVector& losses) {
  const auto& p = region.preference().values();
  if (losses.size() != p.size())
    throw Error(ErrorKind::Shape, "loss vector length " + std::to_string(losses.size()) +
                                      " != preference length " + std::to_string(p.size()), "losses");
  Vector g;
  g.reserve(region.references().size());
  for (const auto& u : region.references().vectors) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (u[i] - p[i]) * losses[i];
    g.push_back(s);
  }
  return g;
}

bool in_region(const RegionSpec& region, const LossVector& losses) {
  if (norm2(losses.values) == 0.0) return true;
  for (double g : constraint_values(region, losses))
    if (g > 0.0) return false;
  return true;
}

Vector embed(std::span<const double> p, const EmbeddingTable& table) {
  if (p.size() != table.num_tasks())
    throw Error(ErrorKind::Shape, "embedding table has " + std::to_string(table.num_tasks()) +
                                      " rows, preference has " + std::to_string(p.size()), "embedding");
  Vector out(table.dim(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto row = table.rows.row(i);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[i] * row[c];
  }
  return out;
}

std::vector<PreferenceVector> preference_grid(std::size_t m, std::size_t count, NormMode mode) {
  if (count < 2) throw Error(ErrorKind::InvalidArgument, "preference grid needs >= 2 points", "samples");
  std::vector<PreferenceVector> grid;
  grid.reserve(count);
  if (m == 2) {
    for (std::size_t k = 0; k < count; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(count - 1);
      Vector v;
      if (k == 0) {
        v = {1.0, 0.0};
      } else if (k + 1 == count) {
        v = {0.0, 1.0};
      } else if (mode == NormMode::Simplex) {
        v = {1.0 - s, s};
      } else {
        const double a = s * std::numbers::pi / 2.0;
        v = {std::cos(a), std::sin(a)};
      }
      grid.push_back(PreferenceVector::normalized(v, mode));
    }
    return grid;
  }
  for (std::size_t i = 0; i < m && grid.size() < count; ++i) {
    Vector v(m, 0.0);
    v[i] = 1.0;
    grid.emplace_back(std::move(v), mode);
  }
  Rng rng(0x9e3779b97f4a7c15ULL);
  while (grid.size() < count) grid.push_back(PreferenceVector::normalized(sample_dirichlet(m, rng), mode));
  return grid;
}

}  // namespace cpmtl
