#include "cpmtl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>

namespace cpmtl {

LossVector evaluate_preference(const Problem& problem, const GeneratorSpec& spec, const GeneratorParams& params,
                               const PreferenceVector& p) {
  GeneratedParams g = generate(spec, params, p);
  const Layout layout = problem.theta_layout();
  if (g.theta.size() != layout->total_size())
    throw Error(ErrorKind::Shape, "generated parameters do not fit the problem", "theta");
  const std::vector<std::size_t> batch = problem.full_batch();
  LossVector l = problem.losses(ParamVector(layout, std::move(g.theta.data)), batch);
  if (!all_finite(l.values)) throw Error(ErrorKind::NonFinite, "non-finite loss", "losses");
  return l;
}

void check_compatible(const Checkpoint& ckpt, const Problem& problem) {
  if (!(ckpt.problem == problem.descriptor()))
    throw Error(ErrorKind::InvalidArgument, "checkpoint was trained on a different problem", "problem");
  if (ckpt.spec.num_tasks != problem.num_tasks() ||
      ckpt.spec.theta_size() != problem.theta_layout()->total_size())
    throw Error(ErrorKind::Shape, "checkpoint generator does not fit the problem", "generator");
}

namespace serial {

std::vector<FrontSample> sweep_front(const Problem& problem, const GeneratorSpec& spec,
                                     const GeneratorParams& params, NormMode mode, std::size_t grid_size) {
  const auto grid = preference_grid(problem.num_tasks(), grid_size, mode);
  std::vector<FrontSample> out;
  out.reserve(grid.size());
  for (const auto& p : grid) out.push_back({p, evaluate_preference(problem, spec, params, p)});
  return out;
}

}  // namespace serial

std::vector<FrontSample> sweep_front(const Problem& problem, const GeneratorSpec& spec,
                                     const GeneratorParams& params, NormMode mode, std::size_t grid_size) {
  const auto grid = preference_grid(problem.num_tasks(), grid_size, mode);
  std::vector<std::optional<LossVector>> slots(grid.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(grid.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    try {
      slots[static_cast<std::size_t>(i)] = evaluate_preference(problem, spec, params, grid[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical(cpmtl_front_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<FrontSample> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.push_back({grid[i], std::move(*slots[i])});
  return out;
}

std::vector<FrontSample> sweep_front(const Checkpoint& ckpt, const Problem& problem, std::size_t grid_size) {
  check_compatible(ckpt, problem);
  return sweep_front(problem, ckpt.spec, ckpt.params, ckpt.preference_mode, grid_size);
}

Hypervolume hypervolume_2d(std::span<const LossVector> samples, const LossVector& reference) {
  if (reference.size() != 2) throw Error(ErrorKind::Shape, "hypervolume_2d needs m = 2", "reference");
  Hypervolume hv;
  std::vector<std::pair<double, double>> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.size() != 2) throw Error(ErrorKind::Shape, "hypervolume_2d needs m = 2", "samples");
    if (!(s[0] <= reference[0] && s[1] <= reference[1])) {
      ++hv.excluded;
      continue;
    }
    pts.emplace_back(s[0], s[1]);
  }
  std::sort(pts.begin(), pts.end());
  double best = reference[1];
  for (const auto& [x, y] : pts) {
    if (y >= best) continue;
    hv.value += (reference[0] - x) * (best - y);
    best = y;
  }
  return hv;
}

namespace {

double dist(const LossVector& a, const LossVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double nearest(const LossVector& x, std::span<const LossVector> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& y : set) best = std::min(best, dist(x, y));
  return best;
}

}  // namespace

FrontDistance front_distance(std::span<const LossVector> samples, std::span<const LossVector> oracle) {
  if (samples.empty() || oracle.empty())
    throw Error(ErrorKind::InvalidArgument, "front_distance needs nonempty inputs", "samples");
  FrontDistance fd;
  for (const auto& s : samples) fd.mean_oracle_distance += nearest(s, oracle);
  fd.mean_oracle_distance /= static_cast<double>(samples.size());
  for (const auto& o : oracle) fd.max_oracle_gap = std::max(fd.max_oracle_gap, nearest(o, samples));
  return fd;
}

ReferenceSet evaluation_reference_grid(std::size_t m, std::size_t count) {
  Rng rng(0xc0ffee5eedULL + m);
  ReferenceSet refs;
  refs.vectors.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    refs.vectors.push_back(PreferenceVector::normalized(sample_dirichlet(m, rng), NormMode::Sphere).values());
  return refs;
}

double region_compliance(std::span<const FrontSample> samples, const ReferenceSet& eval_refs) {
  if (samples.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& s : samples) {
    const Vector p = s.p.as(NormMode::Sphere).values();
    const double own = dot(p, s.losses.values);
    bool ok = true;
    for (const auto& u : eval_refs.vectors) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) d2 += (u[i] - p[i]) * (u[i] - p[i]);
      if (std::sqrt(d2) <= 1e-6) continue;
      if (dot(u, s.losses.values) > own) {
        ok = false;
        break;
      }
    }
    inside += ok ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(samples.size());
}

DominanceResult dominance_filter(std::span<const LossVector> samples) {
  DominanceResult r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < samples.size() && !dominated; ++j)
      dominated = j != i && dominates(samples[j].values, samples[i].values);
    if (dominated)
      ++r.dominated_count;
    else
      r.kept.push_back(i);
  }
  return r;
}

std::vector<LossVector> losses_of(std::span<const FrontSample> samples) {
  std::vector<LossVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.losses);
  return out;
}

FrontMetrics compute_metrics(std::span<const FrontSample> samples, const Problem& problem) {
  FrontMetrics m;
  const auto losses = losses_of(samples);
  m.samples = samples.size();
  if (problem.num_tasks() == 2) {
    const auto hv = hypervolume_2d(losses, LossVector{{1.0, 1.0}});
    m.hypervolume = hv.value;
    m.hypervolume_excluded = hv.excluded;
  }
  if (problem.has_oracle() && !samples.empty()) {
    const auto fd = front_distance(losses, problem.oracle_front(kOracleSamples));
    m.mean_oracle_distance = fd.mean_oracle_distance;
    m.max_oracle_gap = fd.max_oracle_gap;
  }
  m.region_compliance_rate = region_compliance(samples, evaluation_reference_grid(problem.num_tasks()));
  m.dominated_count = dominance_filter(losses).dominated_count;
  return m;
}

namespace {

std::string real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_front_csv(std::ostream& out, std::span<const FrontSample> samples) {
  const std::size_t m = samples.empty() ? 0 : samples[0].p.size();
  for (std::size_t i = 0; i < m; ++i) out << (i ? "," : "") << "p_" << i + 1;
  for (std::size_t i = 0; i < m; ++i) out << ",f_" << i + 1;
  out << '\n';
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < m; ++i) out << (i ? "," : "") << real(s.p[i]);
    for (std::size_t i = 0; i < m; ++i) out << ',' << real(s.losses[i]);
    out << '\n';
  }
}

std::string format_metrics(const FrontMetrics& m) {
  std::string out;
  out += "samples=" + std::to_string(m.samples) + "\n";
  out += "hypervolume=" + real(m.hypervolume) + "\n";
  out += "hypervolume_excluded=" + std::to_string(m.hypervolume_excluded) + "\n";
  out += "mean_oracle_distance=" + real(m.mean_oracle_distance) + "\n";
  out += "max_oracle_gap=" + real(m.max_oracle_gap) + "\n";
  out += "region_compliance_rate=" + real(m.region_compliance_rate) + "\n";
  out += "dominated_count=" + std::to_string(m.dominated_count) + "\n";
  return out;
}

}  // namespace cpmtl
