#ifndef CPMTL_DESCENT_HPP_
#define CPMTL_DESCENT_HPP_

#include <span>
#include <vector>

#include "cpmtl/numerics.hpp"
#include "cpmtl/objectives.hpp"
#include "cpmtl/preferences.hpp"

namespace cpmtl {

/// Constraints with G_j >= -epsilon.
struct ActiveSet {
  std::vector<std::size_t> indices;
  double epsilon = 0.0;

  static ActiveSet from_values(std::span<const double> g, double epsilon);
  std::size_t size() const { return indices.size(); }
};

/// Solution of the min-norm dual: simplex weights over the loss gradients
/// (lambda) and the active constraint gradients (beta).
struct DualSolution {
  Vector lambda;
  Vector beta;
  // Tightest alpha for the primal: max_i v_i . (-direction).
  double alpha = 0.0;
  ParamVector direction;
  std::size_t iterations = 0;
  // Squared norm of the iterate after initialization and after every step.
  Vector objective_trace;
};

struct CombinationWeights {
  Vector alpha;
};

/// d_t = sum_i alpha_i grad L_i. The parameter update is phi -= eta * d.
struct DescentDirection {
  ParamVector d;
  bool is_critical = false;
  CombinationWeights weights;
  ActiveSet active;
  DualSolution dual;
  double norm = 0.0;
};

struct DescentOptions {
  double activation_slack = 1e-3;
  double criticality = 1e-8;
  std::size_t max_iters = 100;
  double tol = 1e-12;
  bool corrective = true;
  bool normalize_gradients = false;
};

DescentDirection linear_direction(const PreferenceVector& p, std::span<const ParamVector> grads,
                                  double criticality = 1e-8);

/// Frank-Wolfe on min ||sum w_i v_i||^2 over the simplex, started from the
/// best pair and using exact line search. Stops when the duality gap drops to
/// `tol`, when a step improves the objective by less than 1e-12 (once the gap
/// is within half the objective), or after `max_iters` steps.
///
/// With `corrective` each step is followed by Wolfe's minor cycles: the
/// weights move to the minimizer over the affine hull of their support,
/// dropping vertices that would turn negative. Plain Frank-Wolfe zigzags when
/// the optimum sits on a face of the simplex and can stay percent-level off
/// after 1e5 iterations; the corrective form terminates at the exact optimum.
DualSolution min_norm_dual(std::span<const ParamVector> vectors, std::size_t max_iters = 100,
                           double tol = 1e-12, bool corrective = true);

/// grad G_j = sum_i (u_j,i - p_i) grad L_i for each index in `active`.
std::vector<ParamVector> constraint_gradients(const RegionSpec& region, const ActiveSet& active,
                                              std::span<const ParamVector> loss_grads);

DescentDirection constrained_direction(const RegionSpec& region, const LossVector& losses,
                                       std::span<const ParamVector> loss_grads,
                                       const DescentOptions& options = {});

/// Checks the descent inequalities for -d: every loss gradient and active
/// constraint gradient g satisfies g . (-d) <= -||d||^2 / 2 + tol.
bool lemma1_check(const DescentDirection& d, std::span<const ParamVector> loss_grads,
                  std::span<const ParamVector> active_constraint_grads, double tol = 1e-7);

enum class BatchMode { Linear, Constrained };

/// Cross-preference constraint (k, j), j != k: (p_j - p_k) . L_k <= 0.
struct CrossConstraint {
  std::size_t k;
  std::size_t j;
};

/// All K(K-1) constraints, k-major then ascending j; ActiveSet indices refer
/// to this order.
std::vector<CrossConstraint> cross_constraints(std::size_t k);

/// Direction over K preferences at once. loss_grads[k][i] = grad L_i at p_k;
/// the returned weights are flattened k-major (K*m entries).
DescentDirection batched_direction(std::span<const PreferenceVector> prefs,
                                   std::span<const LossVector> losses,
                                   std::span<const std::vector<ParamVector>> loss_grads, BatchMode mode,
                                   const DescentOptions& options = {});

}  // namespace cpmtl

#endif  // CPMTL_DESCENT_HPP_
