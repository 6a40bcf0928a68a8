#include <doctest.h>

#include <cmath>

#include "cpmtl/checkpoint.hpp"
#include "cpmtl/trainer.hpp"

using namespace cpmtl;

namespace {

// One task: L = 0.5 |theta|^2.
class BowlProblem final : public Problem {
 public:
  BowlProblem() {
    descriptor_.m = 1;
    descriptor_.theta_dim = 3;
    auto t = std::make_shared<SegmentTable>();
    t->append("theta", {3});
    layout_ = t;
  }
  const ProblemDescriptor& descriptor() const override { return descriptor_; }
  Layout theta_layout() const override { return layout_; }
  LossVector losses(const ParamVector& theta, Batch) const override {
    double s = 0.0;
    for (double x : theta.data) s += 0.5 * x * x;
    return LossVector{{s}};
  }
  LossGradients loss_gradients(const ParamVector& theta, Batch b) const override {
    return {losses(theta, b), {ParamVector(layout_, theta.data)}};
  }
  std::vector<LossVector> oracle_front(std::size_t) const override { return {LossVector{{0.0}}}; }

 private:
  ProblemDescriptor descriptor_;
  Layout layout_;
};

// Two constant tasks: every gradient vanishes, so every step is critical.
class FlatProblem final : public Problem {
 public:
  FlatProblem() {
    descriptor_.theta_dim = 2;
    auto t = std::make_shared<SegmentTable>();
    t->append("theta", {2});
    layout_ = t;
  }
  const ProblemDescriptor& descriptor() const override { return descriptor_; }
  Layout theta_layout() const override { return layout_; }
  LossVector losses(const ParamVector&, Batch) const override { return LossVector{{0.3, 0.6}}; }
  LossGradients loss_gradients(const ParamVector& theta, Batch b) const override {
    return {losses(theta, b), {ParamVector::zeros(layout_), ParamVector::zeros(layout_)}};
  }
  std::vector<LossVector> oracle_front(std::size_t) const override { return {}; }
  bool has_oracle() const override { return false; }

 private:
  ProblemDescriptor descriptor_;
  Layout layout_;
};

GeneratorSpec small_direct(std::size_t m, std::size_t theta_dim) {
  GeneratorSpec s;
  s.num_tasks = m;
  s.theta_dim = theta_dim;
  s.hyper_spec = MLPSpec{{m, 8, theta_dim}, {Activation::Tanh, Activation::Identity}};
  return s;
}

TrainingConfig short_config(TrainMode mode, std::uint64_t steps) {
  TrainingConfig c;
  c.mode = mode;
  c.steps = steps;
  return c;
}

std::vector<std::string> log_lines(const TrainResult& r) {
  std::vector<std::string> out;
  for (const auto& s : r.log) out.push_back(format_log_record(s));
  return out;
}

}  // namespace

TEST_CASE("same seed gives identical logs and parameters") {
  const SyntheticProblem syn(10);
  const RegressionProblem reg;
  for (const Problem* p : {static_cast<const Problem*>(&syn), static_cast<const Problem*>(&reg)}) {
    for (TrainMode mode : {TrainMode::Linear, TrainMode::Constrained}) {
      const TrainingConfig cfg = short_config(mode, 10);
      const TrainResult a = train(cfg, *p);
      const TrainResult b = train(cfg, *p);
      REQUIRE(a.log.size() == 10);
      CHECK(log_lines(a) == log_lines(b));
      CHECK(a.state.params.flatten(a.state.spec).data == b.state.params.flatten(b.state.spec).data);
      TrainingConfig other = cfg;
      other.seed = 2;
      CHECK(log_lines(train(other, *p)) != log_lines(a));
    }
  }
}

TEST_CASE("one-task problem: the direction is the gradient and the loss falls") {
  const BowlProblem bowl;
  TrainingConfig cfg = short_config(TrainMode::Constrained, 200);
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.05;
  TrainerState state = init_state(cfg, bowl, small_direct(1, 3));
  const PreferenceVector p({1.0}, NormMode::Sphere);
  const double before = bowl.losses(generate(state.spec, state.params, p).theta, {})[0];
  std::vector<StepReport> log;
  run_until(state, cfg, bowl, [&](const StepReport& r) { log.push_back(r); });
  const double after = bowl.losses(generate(state.spec, state.params, p).theta, {})[0];
  CHECK(after < 0.01 * before);
  for (const auto& r : log) {
    CHECK(r.preferences[0].values() == Vector{1.0});
    CHECK(r.active_constraints == 0);
  }
}

TEST_CASE("no references: the update is the plain min-norm step") {
  const SyntheticProblem problem(10);
  TrainingConfig cfg = short_config(TrainMode::Constrained, 1);
  cfg.reference_count = 0;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.01;
  TrainerState state = init_state(cfg, problem);
  TrainerState manual = state;

  // Replay the step by hand from the same RNG state.
  SamplerConfig sampler{PreferenceDistribution::UniformSphereOrthant, 3, 1};
  const PreferenceVector p = sample_preference(sampler, 2, manual.rng);
  (void)sample_references(0, p, manual.rng);
  GeneratorPass pass(manual.spec, manual.params, p);
  const LossGradients lg = problem.loss_gradients(ParamVector(problem.theta_layout(), pass.output().theta.data), {});
  const Layout flat = generator_flat_layout(manual.spec);
  std::vector<ParamVector> g;
  for (const auto& t : lg.grads) g.push_back(pass.pullback(ParamVector(manual.spec.theta_layout(), t.data), flat));
  const DualSolution dual = min_norm_dual(g);
  ParamVector phi = manual.params.flatten(manual.spec);
  for (std::size_t k = 0; k < phi.size(); ++k) phi.data[k] -= 0.01 * (dual.lambda[0] * g[0].data[k] + dual.lambda[1] * g[1].data[k]);

  const StepReport r = train_step(state, cfg, problem);
  CHECK(r.preferences[0].values() == p.values());
  CHECK_FALSE(r.critical);
  const ParamVector got = state.params.flatten(state.spec);
  for (std::size_t k = 0; k < phi.size(); ++k) CHECK(got.data[k] == doctest::Approx(phi.data[k]).epsilon(1e-13).scale(1e-13));
}

TEST_CASE("one step gives one report and advances the counter") {
  const SyntheticProblem problem(10);
  const TrainResult r = train(short_config(TrainMode::Linear, 1), problem);
  CHECK(r.log.size() == 1);
  CHECK(r.log[0].step == 0);
  CHECK(r.state.step == 1);
  CHECK(r.log[0].losses.size() == 1);
  CHECK_FALSE(r.log[0].lemma1.has_value());
}

TEST_CASE("config validation names the field") {
  auto where = [](TrainingConfig c) {
    try {
      c.validate();
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidArgument);
      return e.where();
    }
    return std::string("none");
  };
  TrainingConfig c;
  CHECK(where(c) == "none");
  c.steps = 0;
  CHECK(where(c) == "steps");
  c = {};
  c.learning_rate = 0.0;
  CHECK(where(c) == "lr");
  c = {};
  c.batch_preferences = 0;
  CHECK(where(c) == "batch_preferences");
  c = {};
  c.activation_slack = -1.0;
  CHECK(where(c) == "eps");
  c = {};
  c.data_batch = 0;
  CHECK(where(c) == "data_batch");
  c = {};
  c.beta1 = 1.0;
  CHECK(where(c) == "beta1");
  CHECK_THROWS_AS(train_mode_from_string("pareto"), Error);
  CHECK_THROWS_AS(init_state(TrainingConfig{}, SyntheticProblem(10), small_direct(2, 7)), Error);
}

TEST_CASE("log record format") {
  StepReport r;
  r.step = 7;
  r.mode = TrainMode::Constrained;
  r.preferences = {PreferenceVector({0.6, 0.8}, NormMode::Sphere)};
  r.losses = {LossVector{{0.5, 0.25}}};
  r.direction_norm = 0.125;
  r.critical = true;
  CHECK(format_log_record(r) == "step=7 mode=constrained p=[0.59999999999999998,0.80000000000000004] L=[0.5,0.25] norm=0.125 critical=1");
  r.preferences.push_back(PreferenceVector({1.0, 0.0}, NormMode::Sphere));
  r.losses.push_back(LossVector{{1.0, 2.0}});
  r.critical = false;
  r.mode = TrainMode::Linear;
  CHECK(format_log_record(r) ==
        "step=7 mode=linear p=[0.59999999999999998,0.80000000000000004;1,0] L=[0.5,0.25;1,2] norm=0.125 critical=0");
}

TEST_CASE("descent inequalities hold on every non-critical constrained step") {
  const SyntheticProblem problem(10);
  const TrainResult r = train(short_config(TrainMode::Constrained, 300), problem);
  std::size_t checked = 0;
  for (const auto& s : r.log) {
    CHECK(s.lemma1.has_value() != s.critical);
    if (s.lemma1) {
      CHECK(*s.lemma1);
      ++checked;
    }
  }
  CHECK(checked > 250);
}

TEST_CASE("critical steps leave the parameters alone") {
  const FlatProblem flat;
  const TrainingConfig cfg = short_config(TrainMode::Constrained, 5);
  TrainerState state = init_state(cfg, flat, small_direct(2, 2));
  const Vector before = state.params.flatten(state.spec).data;
  std::vector<StepReport> log;
  run_until(state, cfg, flat, [&](const StepReport& r) { log.push_back(r); });
  CHECK(state.step == 5);
  CHECK(state.params.flatten(state.spec).data == before);
  CHECK(state.opt.updates == 0);
  for (const auto& r : log) {
    CHECK(r.critical);
    CHECK(r.direction_norm == 0.0);
  }
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run") {
  const RegressionProblem problem;
  for (TrainMode mode : {TrainMode::Linear, TrainMode::Constrained}) {
    const TrainingConfig cfg = short_config(mode, 20);
    const TrainResult full = train(cfg, problem);

    TrainingConfig half = cfg;
    half.steps = 10;
    const TrainResult first = train(half, problem);
    TrainerState resumed = restore_state(decode_checkpoint(encode_checkpoint(make_checkpoint(first.state, cfg))));
    std::vector<StepReport> rest;
    run_until(resumed, cfg, problem, [&](const StepReport& r) { rest.push_back(r); });

    CHECK(resumed.params.flatten(resumed.spec).data == full.state.params.flatten(full.state.spec).data);
    CHECK(resumed.opt == full.state.opt);
    REQUIRE(rest.size() == 10);
    for (std::size_t k = 0; k < 10; ++k) CHECK(format_log_record(rest[k]) == format_log_record(full.log[10 + k]));
  }
}

TEST_CASE("periodic checkpoints fire on multiples, not at the end") {
  const SyntheticProblem problem(10);
  TrainingConfig cfg = short_config(TrainMode::Linear, 10);
  cfg.checkpoint_every = 3;
  std::vector<std::uint64_t> at;
  (void)train(cfg, problem, [&](const TrainerState& s) { at.push_back(s.step); });
  CHECK(at == std::vector<std::uint64_t>{3, 6, 9});
}

TEST_CASE("batched steps carry every preference") {
  const SyntheticProblem problem(10);
  TrainingConfig cfg = short_config(TrainMode::Constrained, 3);
  cfg.batch_preferences = 4;
  const TrainResult r = train(cfg, problem);
  for (const auto& s : r.log) {
    CHECK(s.preferences.size() == 4);
    CHECK(s.losses.size() == 4);
  }
}
