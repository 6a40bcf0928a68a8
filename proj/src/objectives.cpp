#include "cpmtl/objectives.hpp"

#include <cmath>
#include <numbers>

namespace cpmtl {

const char* to_string(ProblemKind k) {
  return k == ProblemKind::Synthetic ? "synthetic" : "regression";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "synthetic") return ProblemKind::Synthetic;
  if (s == "regression") return ProblemKind::Regression;
  throw Error(ErrorKind::InvalidArgument, "unknown problem '" + s + "'", "problem");
}

std::vector<std::size_t> Problem::full_batch() const {
  std::vector<std::size_t> idx(dataset_size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

bool dominates(std::span<const double> a, std::span<const double> b) {
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

// ---------------------------------------------------------------- synthetic

LossVector eval_synthetic(std::span<const double> theta) {
  const std::size_t n = theta.size();
  if (n < 2) throw Error(ErrorKind::Shape, "synthetic problem needs n >= 2", "theta");
  const double s = std::sin(5.0 * theta[0]);
  double resid = 0.0;
  for (std::size_t i = 1; i < n; ++i) resid += (theta[i] - s) * (theta[i] - s);
  const double a = (theta[0] - 1.0) * (theta[0] - 1.0) + resid / static_cast<double>(n - 1);
  const double b = (theta[0] + 1.0) * (theta[0] + 1.0);
  return LossVector{{-std::expm1(-a), -std::expm1(-b)}};
}

LossVector synthetic_pareto_point(double t) {
  return LossVector{{-std::expm1(-(t - 1.0) * (t - 1.0)), -std::expm1(-(t + 1.0) * (t + 1.0))}};
}

SyntheticProblem::SyntheticProblem(std::size_t n) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "synthetic problem needs n >= 2", "n");
  descriptor_ = synthetic_descriptor(n);
  auto table = std::make_shared<SegmentTable>();
  table->append("theta", {n});
  layout_ = table;
}

LossVector SyntheticProblem::losses(const ParamVector& theta, Batch) const {
  if (theta.size() != n())
    throw Error(ErrorKind::Shape, "theta length " + std::to_string(theta.size()) + " != " +
                                      std::to_string(n()), "theta");
  return eval_synthetic(theta.data);
}

LossGradients SyntheticProblem::loss_gradients(const ParamVector& theta, Batch batch) const {
  LossGradients out;
  out.losses = losses(theta, batch);
  const auto& x = theta.data;
  const std::size_t dim = n();
  const double inv = 1.0 / static_cast<double>(dim - 1);
  const double s = std::sin(5.0 * x[0]);
  const double ds = 5.0 * std::cos(5.0 * x[0]);
  // f = 1 - exp(-A)  =>  grad f = exp(-A) grad A = (1 - f) grad A
  ParamVector g1 = ParamVector::zeros(layout_);
  const double e1 = 1.0 - out.losses[0];
  double d0 = 2.0 * (x[0] - 1.0);
  for (std::size_t i = 1; i < dim; ++i) {
    const double r = x[i] - s;
    d0 -= 2.0 * inv * r * ds;
    g1.data[i] = e1 * 2.0 * inv * r;
  }
  g1.data[0] = e1 * d0;
  ParamVector g2 = ParamVector::zeros(layout_);
  g2.data[0] = (1.0 - out.losses[1]) * 2.0 * (x[0] + 1.0);
  out.grads.push_back(std::move(g1));
  out.grads.push_back(std::move(g2));
  return out;
}

std::vector<LossVector> SyntheticProblem::oracle_front(std::size_t samples) const {
  if (samples < 2) throw Error(ErrorKind::InvalidArgument, "oracle front needs >= 2 samples", "samples");
  std::vector<LossVector> front;
  front.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = 1.0 - 2.0 * static_cast<double>(k) / static_cast<double>(samples - 1);
    front.push_back(synthetic_pareto_point(t));
  }
  return front;
}

// --------------------------------------------------------------- regression

RegressionProblem::RegressionProblem(std::uint64_t data_seed, std::size_t size)
    : spec_(main_spec()), layout_(spec_.layout()) {
  if (size == 0) throw Error(ErrorKind::InvalidArgument, "dataset must be nonempty", "size");
  descriptor_ = regression_descriptor(data_seed, size);
  Rng rng(data_seed);
  inputs_.resize(size);
  targets1_.resize(size);
  targets2_.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double x = 2.0 * uniform01(rng) - 1.0;
    inputs_[i] = x;
    targets1_[i] = std::sin(std::numbers::pi * x);
    targets2_[i] = std::cos(std::numbers::pi * x);
  }
}

MLPSpec RegressionProblem::main_spec() {
  return MLPSpec{{1, 16, 16, 1}, {Activation::Tanh, Activation::Tanh, Activation::Identity}};
}

double RegressionProblem::empirical_c() const {
  double s = 0.0;
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    const double d = targets1_[i] - targets2_[i];
    s += d * d;
  }
  return s / static_cast<double>(inputs_.size());
}

LossVector RegressionProblem::losses(const ParamVector& theta, Batch batch) const {
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch", "batch");
  check_params(spec_, theta);
  MlpTape tape;
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t idx : batch) {
    const double x = inputs_.at(idx);
    detail::mlp_forward_tape(spec_, theta.data, std::span<const double>(&x, 1), tape);
    const double y = tape.result()[0];
    l1 += (y - targets1_[idx]) * (y - targets1_[idx]);
    l2 += (y - targets2_[idx]) * (y - targets2_[idx]);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  return LossVector{{l1 * inv, l2 * inv}};
}

LossGradients RegressionProblem::loss_gradients(const ParamVector& theta, Batch batch) const {
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch", "batch");
  check_params(spec_, theta);
  LossGradients out;
  out.grads.push_back(ParamVector::zeros(layout_));
  out.grads.push_back(ParamVector::zeros(layout_));
  const double inv = 1.0 / static_cast<double>(batch.size());
  MlpTape tape;
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t idx : batch) {
    const double x = inputs_.at(idx);
    detail::mlp_forward_tape(spec_, theta.data, std::span<const double>(&x, 1), tape);
    const double y = tape.result()[0];
    const double r1 = y - targets1_[idx];
    const double r2 = y - targets2_[idx];
    l1 += r1 * r1;
    l2 += r2 * r2;
    const double u1 = 2.0 * r1 * inv;
    const double u2 = 2.0 * r2 * inv;
    detail::mlp_backward(spec_, theta.data, tape, std::span<const double>(&u1, 1), out.grads[0].data, {});
    detail::mlp_backward(spec_, theta.data, tape, std::span<const double>(&u2, 1), out.grads[1].data, {});
  }
  out.losses = LossVector{{l1 * inv, l2 * inv}};
  if (!all_finite(out.losses.values))
    throw Error(ErrorKind::NonFinite, "non-finite regression loss", "losses");
  return out;
}

std::vector<LossVector> RegressionProblem::oracle_front(std::size_t samples) const {
  if (samples < 2) throw Error(ErrorKind::InvalidArgument, "oracle front needs >= 2 samples", "samples");
  // Population value of E[(sin pi x - cos pi x)^2] for x ~ U[-1, 1].
  constexpr double c = 1.0;
  std::vector<LossVector> front;
  front.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double w = 1.0 - static_cast<double>(k) / static_cast<double>(samples - 1);
    front.push_back(LossVector{{(1.0 - w) * (1.0 - w) * c, w * w * c}});
  }
  return front;
}

LossVector eval_regression(const RegressionProblem& problem, const ParamVector& theta, Batch batch) {
  return problem.losses(theta, batch);
}

ProblemDescriptor synthetic_descriptor(std::size_t n) {
  return ProblemDescriptor{2, n, ProblemKind::Synthetic, 0, 0};
}

ProblemDescriptor regression_descriptor(std::uint64_t seed, std::size_t size) {
  return ProblemDescriptor{2, RegressionProblem::main_spec().param_count(), ProblemKind::Regression, seed,
                           size};
}

std::unique_ptr<Problem> make_problem(const ProblemDescriptor& d) {
  switch (d.kind) {
    case ProblemKind::Synthetic: return std::make_unique<SyntheticProblem>(d.theta_dim);
    case ProblemKind::Regression: return std::make_unique<RegressionProblem>(d.data_seed, d.dataset_size);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown problem kind", "kind");
}

}  // namespace cpmtl
