#include "cpmtl/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cpmtl/checkpoint.hpp"
#include "cpmtl/evaluation.hpp"
#include "cpmtl/gradcheck.hpp"
#include "cpmtl/serving.hpp"
#include "cpmtl/trainer.hpp"

namespace cpmtl {

namespace {

struct TrainArgs {
  std::string problem = "synthetic";
  std::size_t n = 10;
  std::string mode = "constrained";
  std::uint64_t steps = 10000;
  double lr = 3e-4;
  std::string optimizer = "adam";
  std::size_t refs = 3;
  std::size_t batch_prefs = 1;
  double eps = 1e-3;
  double delta = 1e-8;
  std::size_t data_batch = 128;
  std::uint64_t seed = 1;
  std::uint64_t checkpoint_every = 0;
  bool normalize = false;
  std::string out;
  std::string log;
  std::string resume;
};

struct SweepArgs {
  std::string ckpt;
  std::size_t samples = 200;
  std::string out = "-";
};

struct GradcheckArgs {
  std::size_t probes = 100;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
};

struct ServeArgs {
  std::string ckpt;
  std::string host = "127.0.0.1";
  std::optional<int> port;
};

std::unique_ptr<Problem> build_problem(const TrainArgs& a) {
  switch (problem_kind_from_string(a.problem)) {
    case ProblemKind::Synthetic: return std::make_unique<SyntheticProblem>(a.n);
    case ProblemKind::Regression: return std::make_unique<RegressionProblem>();
  }
  return nullptr;
}

TrainingConfig build_config(const TrainArgs& a) {
  TrainingConfig c;
  c.mode = train_mode_from_string(a.mode);
  c.steps = a.steps;
  c.learning_rate = a.lr;
  c.optimizer = optimizer_from_string(a.optimizer);
  c.reference_count = a.refs;
  c.batch_preferences = a.batch_prefs;
  c.activation_slack = a.eps;
  c.criticality = a.delta;
  c.data_batch = a.data_batch;
  c.seed = a.seed;
  c.checkpoint_every = a.checkpoint_every;
  c.normalize_gradients = a.normalize;
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainingConfig cfg;
  TrainerState state;
  std::unique_ptr<Problem> problem;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    cfg = ck.config;
    cfg.steps = a.steps;
    cfg.validate();
    problem = make_problem(ck.problem);
    state = restore_state(ck);
    if (state.step >= cfg.steps)
      throw Error(ErrorKind::InvalidArgument, "checkpoint is already at step " + std::to_string(state.step), "steps");
  } else {
    cfg = build_config(a);
    problem = build_problem(a);
    state = init_state(cfg, *problem);
  }

  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw Error(ErrorKind::Io, "cannot open log '" + log_path + "'", log_path);
  std::size_t critical = 0;
  run_until(
      state, cfg, *problem,
      [&](const StepReport& r) {
        log << format_log_record(r) << '\n';
        critical += r.critical ? 1 : 0;
      },
      [&](const TrainerState& s) { save_checkpoint(make_checkpoint(s, cfg), a.out); });
  log.flush();
  if (!log) throw Error(ErrorKind::Io, "write to log '" + log_path + "' failed", log_path);
  const Checkpoint ck = make_checkpoint(state, cfg);
  save_checkpoint(ck, a.out);
  out << "checkpoint=" << a.out << "\nlog=" << log_path << "\nsteps=" << state.step
      << "\ncritical_steps=" << critical << "\ndigest=" << payload_digest(ck) << "\n";
  return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto problem = make_problem(ck.problem);
  const auto front = sweep_front(ck, *problem, a.samples);
  if (a.out == "-") {
    write_front_csv(out, front);
    return kExitOk;
  }
  std::ofstream f(a.out, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + a.out + "'", a.out);
  write_front_csv(f, front);
  if (!f) throw Error(ErrorKind::Io, "write to '" + a.out + "' failed", a.out);
  return kExitOk;
}

int cmd_eval(const SweepArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto problem = make_problem(ck.problem);
  const auto front = sweep_front(ck, *problem, a.samples);
  const std::string doc = format_metrics(compute_metrics(front, *problem));
  if (a.out == "-") {
    out << doc;
    return kExitOk;
  }
  std::ofstream f(a.out, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + a.out + "'", a.out);
  f << doc;
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  bool ok = true;
  auto report = [&](const GradcheckResult& r) {
    const bool pass = r.max_rel_error < a.tolerance;
    ok = ok && pass;
    char line[256];
    std::snprintf(line, sizeof line, "%-32s probes=%zu max_rel_error=%.3e mean_rel_error=%.3e %s\n", r.name.c_str(),
                  r.probes, r.max_rel_error, r.mean_rel_error, pass ? "ok" : "FAIL");
    out << line;
  };
  for (const auto& gen : gradcheck_configurations()) report(check_generator_gradient(gen, a.probes, a.seed));
  // The two shipped presets, chained through their problems' losses.
  SyntheticProblem synthetic;
  RegressionProblem regression;
  report(check_generator_gradient({"preset/synthetic", default_generator_spec(synthetic.descriptor())}, a.probes,
                                  a.seed, &synthetic));
  report(check_generator_gradient({"preset/regression", default_generator_spec(regression.descriptor())},
                                  a.probes, a.seed, &regression));
  return ok ? kExitOk : kExitRuntime;
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (HttpServer* s = g_server.load()) s->stop();
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  auto snap = Snapshot::load(a.ckpt);
  HttpServer server(snap);
  const int port = server.bind(a.host, resolve_port(a.port));
  out << "serving " << a.ckpt << " on http://" << a.host << ":" << port << "\n" << std::flush;
  g_server.store(&server);
  auto old_int = std::signal(SIGINT, on_signal);
  auto old_term = std::signal(SIGTERM, on_signal);
  server.serve();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
  g_server.store(nullptr);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Preference-conditioned Pareto solution generator", "cpmtl"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a generator and write a checkpoint plus a log");
  t->add_option("--problem", train.problem, "synthetic | regression")
      ->check(CLI::IsMember({"synthetic", "regression"}))
      ->capture_default_str();
  t->add_option("--n", train.n, "Synthetic problem dimension")->check(CLI::Range(2, 100000))->capture_default_str();
  t->add_option("--mode", train.mode, "linear | constrained")
      ->check(CLI::IsMember({"linear", "constrained"}))
      ->capture_default_str();
  t->add_option("--steps", train.steps, "Total steps T")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--lr", train.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--optimizer", train.optimizer, "adam | sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  t->add_option("--refs", train.refs, "Reference vectors K per step")->capture_default_str();
  t->add_option("--batch-prefs", train.batch_prefs, "Preferences per step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--eps", train.eps, "Constraint activation slack")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--delta", train.delta, "Criticality threshold")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--data-batch", train.data_batch, "Dataset rows per step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--seed", train.seed, "RNG seed")->capture_default_str();
  t->add_option("--checkpoint-every", train.checkpoint_every, "Write --out every N steps (0 = only at the end)")
      ->capture_default_str();
  t->add_flag("--normalize-gradients", train.normalize, "Scale task gradients to unit norm before the dual solve");
  t->add_option("--out", train.out, "Checkpoint path")->required();
  t->add_option("--log", train.log, "Log path (default: <out>.log)");
  t->add_option("--resume", train.resume, "Continue from this checkpoint up to --steps");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Export the generated front as CSV");
  s->add_option("--ckpt", sweep.ckpt, "Checkpoint path")->required();
  s->add_option("--samples", sweep.samples, "Grid size")->check(CLI::Range(2, 1000000))->capture_default_str();
  s->add_option("--out", sweep.out, "CSV path, - for stdout")->capture_default_str();

  SweepArgs eval;
  auto* e = app.add_subcommand("eval", "Print front-quality metrics");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint path")->required();
  e->add_option("--samples", eval.samples, "Grid size")->check(CLI::Range(2, 1000000))->capture_default_str();
  e->add_option("--out", eval.out, "Metrics path, - for stdout")->capture_default_str();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Check generator gradients against finite differences");
  g->add_option("--probes", gc.probes, "Random directions per configuration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  g->add_option("--seed", gc.seed, "RNG seed")->capture_default_str();
  g->add_option("--tolerance", gc.tolerance, "Largest accepted relative error")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  ServeArgs serve;
  auto* v = app.add_subcommand("serve", "Serve /meta, /infer and /front over HTTP");
  v->add_option("--ckpt", serve.ckpt, "Checkpoint path")->required();
  v->add_option("--host", serve.host, "Bind address")->capture_default_str();
  v->add_option("--port", serve.port, "Port (CPMTL_PORT overrides; default 8080)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: usage: " << ex.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out);
    if (s->parsed()) return cmd_sweep(sweep, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
    if (v->parsed()) return cmd_serve(serve, out);
  } catch (const Error& ex) {
    err << "error: kind=" << to_string(ex.kind());
    if (!ex.where().empty()) err << " where=" << ex.where();
    err << " message=" << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: kind=internal message=" << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cpmtl
