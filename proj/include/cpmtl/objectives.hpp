#ifndef CPMTL_OBJECTIVES_HPP_
#define CPMTL_OBJECTIVES_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cpmtl/numerics.hpp"

namespace cpmtl {

/// Per-task losses of one solution.
struct LossVector {
  Vector values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const LossVector&, const LossVector&) = default;
};

enum class ProblemKind { Synthetic, Regression };

const char* to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& s);

struct ProblemDescriptor {
  std::size_t m = 2;
  std::size_t theta_dim = 10;
  ProblemKind kind = ProblemKind::Synthetic;
  std::uint64_t data_seed = 0;
  std::size_t dataset_size = 0;

  friend bool operator==(const ProblemDescriptor&, const ProblemDescriptor&) = default;
};

// Indices into the problem's dataset; ignored by data-free problems.
using Batch = std::span<const std::size_t>;

struct LossGradients {
  LossVector losses;
  std::vector<ParamVector> grads;  // one per task, shaped like theta
};

/// A multiobjective problem over a parameter vector theta.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual const ProblemDescriptor& descriptor() const = 0;
  virtual Layout theta_layout() const = 0;
  std::size_t num_tasks() const { return descriptor().m; }

  // Size of the dataset batches index into; 0 when there is none.
  virtual std::size_t dataset_size() const { return 0; }
  std::vector<std::size_t> full_batch() const;

  virtual LossVector losses(const ParamVector& theta, Batch batch) const = 0;
  virtual LossGradients loss_gradients(const ParamVector& theta, Batch batch) const = 0;

  // Ground-truth front, ordered from the task-1 extreme to the task-2 extreme.
  virtual std::vector<LossVector> oracle_front(std::size_t samples) const = 0;
  virtual bool has_oracle() const { return true; }
};

/// Two objectives over R^n whose Pareto set is theta_i = sin(5 theta_1),
/// theta_1 in [-1, 1]; the front is concave.
class SyntheticProblem final : public Problem {
 public:
  explicit SyntheticProblem(std::size_t n = 10);

  std::size_t n() const { return descriptor_.theta_dim; }
  const ProblemDescriptor& descriptor() const override { return descriptor_; }
  Layout theta_layout() const override { return layout_; }
  LossVector losses(const ParamVector& theta, Batch batch) const override;
  LossGradients loss_gradients(const ParamVector& theta, Batch batch) const override;
  std::vector<LossVector> oracle_front(std::size_t samples) const override;

 private:
  ProblemDescriptor descriptor_;
  Layout layout_;
};

LossVector eval_synthetic(std::span<const double> theta);

/// Loss values at the point theta = (t, sin 5t, ..., sin 5t) of the Pareto set.
LossVector synthetic_pareto_point(double t);

/// Two regression targets, sin(pi x) and cos(pi x), fitted by one shared
/// scalar output of a 1-16-16-1 tanh network.
class RegressionProblem final : public Problem {
 public:
  static constexpr std::size_t kDefaultSize = 512;
  static constexpr std::uint64_t kDefaultSeed = 20210333;

  explicit RegressionProblem(std::uint64_t data_seed = kDefaultSeed, std::size_t size = kDefaultSize);

  static MLPSpec main_spec();

  const ProblemDescriptor& descriptor() const override { return descriptor_; }
  Layout theta_layout() const override { return layout_; }
  std::size_t dataset_size() const override { return inputs_.size(); }
  LossVector losses(const ParamVector& theta, Batch batch) const override;
  LossGradients loss_gradients(const ParamVector& theta, Batch batch) const override;
  std::vector<LossVector> oracle_front(std::size_t samples) const override;

  const Vector& inputs() const { return inputs_; }
  const Vector& targets1() const { return targets1_; }
  const Vector& targets2() const { return targets2_; }
  /// Mean of (sin - cos)^2 over the whole dataset.
  double empirical_c() const;

 private:
  ProblemDescriptor descriptor_;
  MLPSpec spec_;
  Layout layout_;
  Vector inputs_, targets1_, targets2_;
};

LossVector eval_regression(const RegressionProblem& problem, const ParamVector& theta, Batch batch);

std::unique_ptr<Problem> make_problem(const ProblemDescriptor& descriptor);
ProblemDescriptor synthetic_descriptor(std::size_t n = 10);
ProblemDescriptor regression_descriptor(std::uint64_t seed = RegressionProblem::kDefaultSeed,
                                        std::size_t size = RegressionProblem::kDefaultSize);

/// Pareto dominance for minimization: a <= b everywhere and a < b somewhere.
bool dominates(std::span<const double> a, std::span<const double> b);

}  // namespace cpmtl

#endif  // CPMTL_OBJECTIVES_HPP_
