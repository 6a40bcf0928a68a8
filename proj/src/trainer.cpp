#include "cpmtl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace cpmtl {

const char* to_string(TrainMode m) { return m == TrainMode::Linear ? "linear" : "constrained"; }
const char* to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "linear") return TrainMode::Linear;
  if (s == "constrained") return TrainMode::Constrained;
  throw Error(ErrorKind::InvalidArgument, "unknown training mode '" + s + "'", "mode");
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorKind::InvalidArgument, "unknown optimizer '" + s + "'", "optimizer");
}

NormMode preference_mode(TrainMode m) { return m == TrainMode::Linear ? NormMode::Simplex : NormMode::Sphere; }

void TrainingConfig::validate() const {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1", "steps");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorKind::InvalidArgument, "learning rate must be positive", "lr");
  if (batch_preferences < 1)
    throw Error(ErrorKind::InvalidArgument, "batch_preferences must be >= 1", "batch_preferences");
  if (!(activation_slack >= 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be >= 0", "eps");
  if (!(criticality >= 0.0)) throw Error(ErrorKind::InvalidArgument, "delta must be >= 0", "delta");
  if (data_batch < 1) throw Error(ErrorKind::InvalidArgument, "data_batch must be >= 1", "data_batch");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta1 must be in [0, 1)", "beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta2 must be in [0, 1)", "beta2");
  if (!(adam_epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "adam epsilon must be positive", "adam_eps");
}

DescentOptions TrainingConfig::descent_options() const {
  DescentOptions o;
  o.activation_slack = activation_slack;
  o.criticality = criticality;
  o.normalize_gradients = normalize_gradients;
  return o;
}

namespace {

void append_real(std::string& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

void append_list(std::string& out, const std::vector<Vector>& rows) {
  out += '[';
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k) out += ';';
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      if (i) out += ',';
      append_real(out, rows[k][i]);
    }
  }
  out += ']';
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t want, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (want >= n) return idx;
  // Partial Fisher-Yates: the first `want` slots become a uniform subset.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t span = n - i;
    std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(span));
    if (j >= n) j = n - 1;
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  return idx;
}

std::string describe(const PreferenceVector& p) {
  std::string s;
  append_list(s, {p.values()});
  return s;
}

void apply_update(TrainerState& state, const TrainingConfig& cfg, const ParamVector& d) {
  ParamVector phi = state.params.flatten(state.spec);
  auto& opt = state.opt;
  if (cfg.optimizer == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < phi.size(); ++i) phi.data[i] -= cfg.learning_rate * d.data[i];
  } else {
    if (opt.m.size() != phi.size()) {
      opt.m.assign(phi.size(), 0.0);
      opt.v.assign(phi.size(), 0.0);
    }
    ++opt.updates;
    const double t = static_cast<double>(opt.updates);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < phi.size(); ++i) {
      const double g = d.data[i];
      opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
      opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = opt.m[i] / c1;
      const double vhat = opt.v[i] / c2;
      phi.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
  state.params.assign_flat(state.spec, phi.data);
}

}  // namespace

std::string format_log_record(const StepReport& r) {
  std::string out = "step=" + std::to_string(r.step) + " mode=" + to_string(r.mode) + " p=";
  std::vector<Vector> prefs, losses;
  for (const auto& p : r.preferences) prefs.push_back(p.values());
  for (const auto& l : r.losses) losses.push_back(l.values);
  append_list(out, prefs);
  out += " L=";
  append_list(out, losses);
  out += " norm=";
  append_real(out, r.direction_norm);
  out += r.critical ? " critical=1" : " critical=0";
  return out;
}

TrainerState init_state(const TrainingConfig& cfg, const Problem& problem) {
  return init_state(cfg, problem, default_generator_spec(problem.descriptor()));
}

TrainerState init_state(const TrainingConfig& cfg, const Problem& problem, const GeneratorSpec& spec) {
  cfg.validate();
  spec.validate();
  if (spec.num_tasks != problem.num_tasks())
    throw Error(ErrorKind::Shape, "generator task count != problem task count", "num_tasks");
  if (spec.theta_size() != problem.theta_layout()->total_size())
    throw Error(ErrorKind::Shape, "generator output size != problem parameter size", "theta");
  TrainerState s;
  s.problem = problem.descriptor();
  s.spec = spec;
  s.rng.seed(cfg.seed);
  s.params = init_generator(spec, s.rng);
  const std::size_t n = generator_flat_layout(spec)->total_size();
  if (cfg.optimizer == OptimizerKind::Adam) {
    s.opt.m.assign(n, 0.0);
    s.opt.v.assign(n, 0.0);
  }
  return s;
}

StepReport train_step(TrainerState& state, const TrainingConfig& cfg, const Problem& problem) {
  const std::size_t m = problem.num_tasks();
  const std::size_t K = cfg.batch_preferences;
  const bool batched = K > 1;
  const NormMode norm = preference_mode(cfg.mode);
  SamplerConfig sampler;
  sampler.preference_distribution = norm == NormMode::Simplex ? PreferenceDistribution::UniformSimplex
                                                              : PreferenceDistribution::UniformSphereOrthant;

  StepReport report;
  report.step = state.step;
  report.mode = cfg.mode;
  for (std::size_t k = 0; k < K; ++k) report.preferences.push_back(sample_preference(sampler, m, state.rng));
  std::optional<ReferenceSet> refs;
  if (cfg.mode == TrainMode::Constrained && !batched)
    refs = m > 1 ? sample_references(cfg.reference_count, report.preferences[0], state.rng) : ReferenceSet{};
  std::vector<std::size_t> batch;
  if (problem.dataset_size() > 0) batch = sample_batch(problem.dataset_size(), cfg.data_batch, state.rng);

  const Layout flat_layout = generator_flat_layout(state.spec);
  const Layout theta_layout = problem.theta_layout();
  std::vector<std::vector<ParamVector>> phi_grads(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& p = report.preferences[k];
    GeneratorPass pass(state.spec, state.params, p);
    if (pass.output().theta.size() != theta_layout->total_size())
      throw Error(ErrorKind::Shape, "generated parameters do not fit the problem", "theta");
    const ParamVector theta(theta_layout, pass.output().theta.data);
    LossGradients lg;
    try {
      lg = problem.loss_gradients(theta, batch);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      throw Error(ErrorKind::NonFinite, "step " + std::to_string(state.step) + ": " + e.what() +
                                            " at preference " + describe(p), "step " + std::to_string(state.step));
    }
    if (!all_finite(lg.losses.values))
      throw Error(ErrorKind::NonFinite, "step " + std::to_string(state.step) + ": non-finite loss at preference " +
                                            describe(p), "step " + std::to_string(state.step));
    for (const auto& g : lg.grads) {
      ParamVector tg(state.spec.theta_layout(), g.data);
      phi_grads[k].push_back(pass.pullback(tg, flat_layout));
    }
    report.losses.push_back(std::move(lg.losses));
  }

  const DescentOptions options = cfg.descent_options();
  DescentDirection dir;
  if (batched) {
    dir = batched_direction(report.preferences, report.losses, phi_grads,
                            cfg.mode == TrainMode::Linear ? BatchMode::Linear : BatchMode::Constrained, options);
  } else if (cfg.mode == TrainMode::Linear) {
    dir = linear_direction(report.preferences[0], phi_grads[0], cfg.criticality);
  } else {
    const RegionSpec region(report.preferences[0], *refs);
    dir = constrained_direction(region, report.losses[0], phi_grads[0], options);
    if (!dir.is_critical) {
      const auto cg = constraint_gradients(region, dir.active, phi_grads[0]);
      report.lemma1 = lemma1_check(dir, phi_grads[0], cg);
    }
  }
  report.direction_norm = dir.norm;
  report.critical = dir.is_critical;
  report.active_constraints = dir.active.size();

  if (!dir.is_critical) apply_update(state, cfg, dir.d);
  ++state.step;
  return report;
}

void run_until(TrainerState& state, const TrainingConfig& cfg, const Problem& problem, const LogSink& log,
               const CheckpointSink& checkpoint) {
  cfg.validate();
  while (state.step < cfg.steps) {
    StepReport r = train_step(state, cfg, problem);
    if (log) log(r);
    if (checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.steps)
      checkpoint(state);
  }
}

TrainResult train(const TrainingConfig& cfg, const Problem& problem, const CheckpointSink& checkpoint) {
  TrainResult out{init_state(cfg, problem), {}};
  out.log.reserve(cfg.steps);
  run_until(out.state, cfg, problem, [&](const StepReport& r) { out.log.push_back(r); }, checkpoint);
  return out;
}

}  // namespace cpmtl
