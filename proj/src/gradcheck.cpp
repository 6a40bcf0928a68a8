#include "cpmtl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cpmtl {

namespace {

const std::vector<Activation> kTanh3{Activation::Tanh, Activation::Tanh, Activation::Identity};

GeneratorSpec direct(InputMode input, std::size_t m, std::optional<ChunkingSpec> chunking) {
  GeneratorSpec s;
  s.mode = GeneratorMode::Direct;
  s.input_mode = input;
  s.num_tasks = m;
  s.embedding_dim = input == InputMode::Embedded ? 5 : 0;
  s.theta_dim = 10;
  s.chunking = chunking;
  const std::size_t in = s.preference_input_dim() + (chunking ? chunking->chunk_embedding_dim : 0);
  const std::size_t out = chunking ? chunking->chunk_size : s.theta_dim;
  s.hyper_spec = MLPSpec{{in, 12, 12, out}, kTanh3};
  return s;
}

GeneratorSpec hyper_main(InputMode input, std::size_t m, std::optional<ChunkingSpec> chunking,
                         std::vector<std::string> shared) {
  GeneratorSpec s;
  s.mode = GeneratorMode::HyperMain;
  s.input_mode = input;
  s.num_tasks = m;
  s.embedding_dim = input == InputMode::Embedded ? 6 : 0;
  s.main_spec = MLPSpec{{1, 4, 4, 1}, kTanh3};
  s.shared_partition = std::move(shared);
  s.chunking = chunking;
  const std::size_t in = s.preference_input_dim() + (chunking ? chunking->chunk_embedding_dim : 0);
  const std::size_t out = chunking ? chunking->chunk_size : s.generated_count();
  s.hyper_spec = MLPSpec{{in, 12, 12, out}, kTanh3};
  return s;
}

double smooth_scalar(std::span<const double> theta, std::span<const double> w, std::span<double> grad) {
  double s = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double t = std::tanh(theta[k]);
    s += w[k] * t + 0.25 * theta[k] * theta[k];
    if (!grad.empty()) grad[k] = w[k] * (1.0 - t * t) + 0.5 * theta[k];
  }
  return s;
}

}  // namespace

std::vector<NamedGenerator> gradcheck_configurations() {
  const ChunkingSpec c4{4, 3};
  const ChunkingSpec c7{7, 4};
  return {
      {"direct/raw/unchunked", direct(InputMode::Raw, 2, std::nullopt)},
      {"direct/raw/chunked", direct(InputMode::Raw, 2, c4)},
      {"direct/embedded/unchunked", direct(InputMode::Embedded, 3, std::nullopt)},
      {"direct/embedded/chunked", direct(InputMode::Embedded, 3, c4)},
      {"hyper-main/raw/unchunked", hyper_main(InputMode::Raw, 2, std::nullopt, {"L2.b"})},
      {"hyper-main/raw/chunked", hyper_main(InputMode::Raw, 2, c7, {})},
      {"hyper-main/embedded/unchunked", hyper_main(InputMode::Embedded, 3, std::nullopt, {})},
      {"hyper-main/embedded/chunked", hyper_main(InputMode::Embedded, 3, c7, {"L0.W", "L0.b"})},
  };
}

GradcheckResult check_generator_gradient(const NamedGenerator& gen, std::size_t probes, std::uint64_t seed,
                                         const Problem* problem, double h) {
  const GeneratorSpec& spec = gen.spec;
  spec.validate();
  if (problem && (problem->num_tasks() != spec.num_tasks ||
                  problem->theta_layout()->total_size() != spec.theta_size()))
    throw Error(ErrorKind::Shape, "generator does not fit the problem", "generator");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GeneratorParams params = init_generator(spec, rng);
  const Layout flat_layout = generator_flat_layout(spec);
  ParamVector phi = params.flatten(spec);
  // Move biases and heads off their special initial values.
  for (double& x : phi.data) x += 0.1 * normal(rng);
  params.assign_flat(spec, phi.data);

  const Layout theta_layout = problem ? problem->theta_layout() : spec.theta_layout();
  const std::vector<std::size_t> batch = problem ? problem->full_batch() : std::vector<std::size_t>{};

  GradcheckResult r;
  r.name = gen.name;
  r.probes = probes;
  for (std::size_t probe = 0; probe < probes; ++probe) {
    const auto p = PreferenceVector::normalized(sample_dirichlet(spec.num_tasks, rng), NormMode::Simplex);
    Vector c(spec.num_tasks), w(spec.theta_size());
    for (double& x : c) x = uniform01(rng) + 0.5;
    for (double& x : w) x = normal(rng);
    Vector v(phi.size());
    for (double& x : v) x = normal(rng);
    const double vn = norm2(v);
    for (double& x : v) x /= vn;

    auto scalar = [&](const GeneratorParams& at, std::span<double> theta_grad) {
      const GeneratedParams g = generate(spec, at, p);
      if (!problem) return smooth_scalar(g.theta.data, w, theta_grad);
      const ParamVector theta(theta_layout, g.theta.data);
      if (theta_grad.empty()) {
        const LossVector l = problem->losses(theta, batch);
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * l[i];
        return s;
      }
      const LossGradients lg = problem->loss_gradients(theta, batch);
      double s = 0.0;
      std::fill(theta_grad.begin(), theta_grad.end(), 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        s += c[i] * lg.losses[i];
        for (std::size_t k = 0; k < theta_grad.size(); ++k) theta_grad[k] += c[i] * lg.grads[i].data[k];
      }
      return s;
    };

    GeneratorPass pass(spec, params, p);
    ParamVector tg = ParamVector::zeros(spec.theta_layout());
    scalar(params, tg.data);
    const ParamVector grad = pass.pullback(tg, flat_layout);
    const double analytic = dot(grad.data, v);

    GeneratorParams shifted = params;
    Vector probe_phi = phi.data;
    for (std::size_t k = 0; k < v.size(); ++k) probe_phi[k] = phi.data[k] + h * v[k];
    shifted.assign_flat(spec, probe_phi);
    const double up = scalar(shifted, {});
    for (std::size_t k = 0; k < v.size(); ++k) probe_phi[k] = phi.data[k] - h * v[k];
    shifted.assign_flat(spec, probe_phi);
    const double down = scalar(shifted, {});
    const double numeric = (up - down) / (2.0 * h);

    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    r.max_rel_error = std::max(r.max_rel_error, err);
    r.mean_rel_error += err;
  }
  if (probes) r.mean_rel_error /= static_cast<double>(probes);
  return r;
}

}  // namespace cpmtl
