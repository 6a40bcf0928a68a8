#include "cpmtl/hypergen.hpp"

#include <algorithm>
#include <cmath>

namespace cpmtl {

const char* to_string(GeneratorMode m) { return m == GeneratorMode::Direct ? "direct" : "hyper-main"; }
const char* to_string(InputMode m) { return m == InputMode::Raw ? "raw" : "embedded"; }

GeneratorMode generator_mode_from_string(const std::string& s) {
  if (s == "direct") return GeneratorMode::Direct;
  if (s == "hyper-main") return GeneratorMode::HyperMain;
  throw Error(ErrorKind::InvalidArgument, "unknown generator mode '" + s + "'", "mode");
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "raw") return InputMode::Raw;
  if (s == "embedded") return InputMode::Embedded;
  throw Error(ErrorKind::InvalidArgument, "unknown input mode '" + s + "'", "input_mode");
}

// ------------------------------------------------------------------ spec

Layout GeneratorSpec::theta_layout() const {
  if (mode == GeneratorMode::HyperMain) return main_spec->layout();
  auto t = std::make_shared<SegmentTable>();
  t->append("theta", {theta_dim});
  return t;
}

std::size_t GeneratorSpec::theta_size() const {
  return mode == GeneratorMode::HyperMain ? main_spec->param_count() : theta_dim;
}

bool GeneratorSpec::is_shared(const std::string& segment) const {
  return std::find(shared_partition.begin(), shared_partition.end(), segment) != shared_partition.end();
}

std::size_t GeneratorSpec::generated_count() const {
  if (mode == GeneratorMode::Direct) return theta_dim;
  std::size_t n = 0;
  const auto layout = main_spec->layout();
  for (const auto& s : layout->segments())
    if (!is_shared(s.name)) n += s.size();
  return n;
}

std::size_t GeneratorSpec::chunk_count() const {
  if (!chunking) return 1;
  const std::size_t g = generated_count();
  return (g + chunking->chunk_size - 1) / chunking->chunk_size;
}

std::size_t GeneratorSpec::preference_input_dim() const {
  return input_mode == InputMode::Raw ? num_tasks : embedding_dim;
}

std::size_t GeneratorSpec::hyper_input_dim() const {
  return preference_input_dim() + (chunking ? chunking->chunk_embedding_dim : 0);
}

std::size_t GeneratorSpec::hyper_output_dim() const {
  return chunking ? chunking->chunk_size : generated_count();
}

void GeneratorSpec::validate() const {
  if (num_tasks < 1) throw Error(ErrorKind::InvalidArgument, "generator needs at least one task", "num_tasks");
  if (input_mode == InputMode::Embedded && embedding_dim == 0)
    throw Error(ErrorKind::Shape, "embedded input needs q >= 1", "embedding_dim");
  hyper_spec.validate();
  if (mode == GeneratorMode::HyperMain) {
    if (!main_spec) throw Error(ErrorKind::Shape, "hyper-main mode needs a main network", "main_spec");
    main_spec->validate();
    const auto layout = main_spec->layout();
    for (const auto& name : shared_partition)
      if (!layout->contains(name))
        throw Error(ErrorKind::Shape, "shared segment '" + name + "' is not in the main network", name);
    if (generated_count() == 0)
      throw Error(ErrorKind::Shape, "every main-network segment is shared", "shared_partition");
  } else {
    if (theta_dim == 0) throw Error(ErrorKind::Shape, "direct mode needs theta_dim >= 1", "theta_dim");
    if (!shared_partition.empty())
      throw Error(ErrorKind::Shape, "direct mode cannot share segments", "shared_partition");
  }
  if (chunking) {
    if (chunking->chunk_size == 0) throw Error(ErrorKind::Shape, "chunk size must be positive", "chunk_size");
    if (chunking->chunk_embedding_dim == 0)
      throw Error(ErrorKind::Shape, "chunk embedding dim must be positive", "chunk_embedding_dim");
  }
  if (hyper_spec.input_size() != hyper_input_dim())
    throw Error(ErrorKind::Shape, "hypernetwork input " + std::to_string(hyper_spec.input_size()) +
                                      " != expected " + std::to_string(hyper_input_dim()), "hyper.L0.W");
  if (hyper_spec.output_size() != hyper_output_dim())
    throw Error(ErrorKind::Shape, "hypernetwork output " + std::to_string(hyper_spec.output_size()) +
                                      " != expected " + std::to_string(hyper_output_dim()),
                "hyper.L" + std::to_string(hyper_spec.num_layers() - 1) + ".W");
}

Layout shared_layout(const GeneratorSpec& spec) {
  auto t = std::make_shared<SegmentTable>();
  if (spec.mode != GeneratorMode::HyperMain) return t;
  const auto main = spec.main_spec->layout();
  for (const auto& s : main->segments())
    if (spec.is_shared(s.name)) t->append(s.name, s.shape);
  return t;
}

Layout generator_flat_layout(const GeneratorSpec& spec) {
  auto t = std::make_shared<SegmentTable>();
  const auto hyper = spec.hyper_spec.layout();
  const auto shared = shared_layout(spec);
  for (const auto& s : hyper->segments()) t->append("hyper." + s.name, s.shape);
  for (const auto& s : shared->segments()) t->append("shared." + s.name, s.shape);
  if (spec.input_mode == InputMode::Embedded) t->append("embedding", {spec.num_tasks, spec.embedding_dim});
  if (spec.chunking) t->append("chunk_embeddings", {spec.chunk_count(), spec.chunking->chunk_embedding_dim});
  return t;
}

ParamVector GeneratorParams::flatten(const GeneratorSpec& spec) const {
  auto layout = generator_flat_layout(spec);
  Vector flat;
  flat.reserve(layout->total_size());
  flat.insert(flat.end(), hyper.data.begin(), hyper.data.end());
  if (shared) flat.insert(flat.end(), shared->data.begin(), shared->data.end());
  if (embedding) flat.insert(flat.end(), embedding->rows.data.begin(), embedding->rows.data.end());
  if (chunk_embeddings) flat.insert(flat.end(), chunk_embeddings->data.begin(), chunk_embeddings->data.end());
  return ParamVector(std::move(layout), std::move(flat));
}

void GeneratorParams::assign_flat(const GeneratorSpec& spec, std::span<const double> flat) {
  const auto layout = generator_flat_layout(spec);
  if (flat.size() != layout->total_size())
    throw Error(ErrorKind::Shape, "flat generator vector has the wrong length", "phi");
  auto it = flat.begin();
  auto take = [&](Vector& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(hyper.data);
  if (shared) take(shared->data);
  if (embedding) take(embedding->rows.data);
  if (chunk_embeddings) take(chunk_embeddings->data);
}

GeneratorSpec default_generator_spec(const ProblemDescriptor& problem) {
  GeneratorSpec spec;
  spec.num_tasks = problem.m;
  const std::size_t width = 64;
  const std::vector<Activation> acts{Activation::Tanh, Activation::Tanh, Activation::Identity};
  if (problem.kind == ProblemKind::Synthetic) {
    spec.mode = GeneratorMode::Direct;
    spec.input_mode = problem.m >= 3 ? InputMode::Embedded : InputMode::Raw;
    spec.embedding_dim = spec.input_mode == InputMode::Embedded ? 8 : 0;
    spec.theta_dim = problem.theta_dim;
    spec.hyper_spec = MLPSpec{{spec.preference_input_dim(), width, width, problem.theta_dim}, acts};
  } else {
    spec.mode = GeneratorMode::HyperMain;
    spec.input_mode = InputMode::Embedded;
    spec.embedding_dim = 8;
    spec.main_spec = RegressionProblem::main_spec();
    spec.hyper_spec = MLPSpec{{8, width, width, spec.main_spec->param_count()}, acts};
  }
  spec.validate();
  return spec;
}

GeneratorParams init_generator(const GeneratorSpec& spec, Rng& rng) {
  spec.validate();
  GeneratorParams params;
  params.hyper = init_mlp(spec.hyper_spec, rng, 0.1);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (spec.mode == GeneratorMode::HyperMain && !spec.shared_partition.empty()) {
    // Same scheme as a standalone main network.
    ParamVector full = init_mlp(*spec.main_spec, rng);
    ParamVector shared = ParamVector::zeros(shared_layout(spec));
    for (const auto& s : shared.layout->segments()) {
      auto src = full.segment(s.name);
      std::copy(src.begin(), src.end(), shared.segment(s.name).begin());
    }
    params.shared = std::move(shared);
  }
  if (spec.input_mode == InputMode::Embedded) {
    EmbeddingTable table{DenseMatrix(spec.num_tasks, spec.embedding_dim), true};
    for (double& x : table.rows.data) x = normal(rng);
    params.embedding = std::move(table);
  }
  if (spec.chunking) {
    DenseMatrix ce(spec.chunk_count(), spec.chunking->chunk_embedding_dim);
    for (double& x : ce.data) x = 0.1 * normal(rng);
    params.chunk_embeddings = std::move(ce);
  }
  return params;
}

// --------------------------------------------------------------- forward

namespace {

void check_generator_params(const GeneratorSpec& spec, const GeneratorParams& params) {
  check_params(spec.hyper_spec, params.hyper);
  const bool wants_shared = spec.mode == GeneratorMode::HyperMain && !spec.shared_partition.empty();
  if (wants_shared != params.shared.has_value())
    throw Error(ErrorKind::Shape, "shared parameters do not match the generator spec", "shared");
  if (params.shared && !same_layout(*params.shared->layout, *shared_layout(spec)))
    throw Error(ErrorKind::Shape, "shared parameter layout does not match the generator spec", "shared");
  const bool wants_embedding = spec.input_mode == InputMode::Embedded;
  if (wants_embedding != params.embedding.has_value())
    throw Error(ErrorKind::Shape, "embedding table does not match the generator spec", "embedding");
  if (params.embedding &&
      (params.embedding->num_tasks() != spec.num_tasks || params.embedding->dim() != spec.embedding_dim))
    throw Error(ErrorKind::Shape, "embedding table has the wrong shape", "embedding");
  if (spec.chunking.has_value() != params.chunk_embeddings.has_value())
    throw Error(ErrorKind::Shape, "chunk embeddings do not match the generator spec", "chunk_embeddings");
  if (params.chunk_embeddings && (params.chunk_embeddings->rows != spec.chunk_count() ||
                                  params.chunk_embeddings->cols != spec.chunking->chunk_embedding_dim))
    throw Error(ErrorKind::Shape, "chunk embeddings have the wrong shape", "chunk_embeddings");
}

}  // namespace

GeneratorPass::GeneratorPass(const GeneratorSpec& spec, const GeneratorParams& params, const PreferenceVector& p)
    : spec_(spec), params_(params) {
  spec.validate();
  check_generator_params(spec, params);
  if (p.size() != spec.num_tasks)
    throw Error(ErrorKind::Shape, "preference length " + std::to_string(p.size()) + " != task count " +
                                      std::to_string(spec.num_tasks), "preference");
  pref_input_ = spec.input_mode == InputMode::Raw ? p.values() : embed(p, *params.embedding);

  const std::size_t chunks = spec.chunk_count();
  const std::size_t generated = spec.generated_count();
  Vector stream;
  stream.reserve(chunks * spec.hyper_output_dim());
  tapes_.resize(chunks);
  Vector input(spec.hyper_input_dim());
  std::copy(pref_input_.begin(), pref_input_.end(), input.begin());
  for (std::size_t c = 0; c < chunks; ++c) {
    if (spec.chunking) {
      const auto ce = params.chunk_embeddings->row(c);
      std::copy(ce.begin(), ce.end(), input.begin() + static_cast<std::ptrdiff_t>(pref_input_.size()));
    }
    detail::mlp_forward_tape(spec.hyper_spec, params.hyper.data, input, tapes_[c]);
    const auto& out = tapes_[c].result();
    stream.insert(stream.end(), out.begin(), out.end());
  }
  stream.resize(generated);
  if (!all_finite(stream)) throw Error(ErrorKind::NonFinite, "generator produced non-finite parameters", "theta");

  auto layout = spec.theta_layout();
  ParamVector theta = ParamVector::zeros(layout);
  if (spec.mode == GeneratorMode::Direct) {
    theta.data = std::move(stream);
  } else {
    std::size_t pos = 0;
    for (const auto& s : layout->segments()) {
      auto dst = theta.segment(s.name);
      if (spec.is_shared(s.name)) {
        auto src = params.shared->segment(s.name);
        std::copy(src.begin(), src.end(), dst.begin());
      } else {
        std::copy(stream.begin() + static_cast<std::ptrdiff_t>(pos),
                  stream.begin() + static_cast<std::ptrdiff_t>(pos + s.size()), dst.begin());
        pos += s.size();
      }
    }
  }
  output_ = GeneratedParams{std::move(theta), p};
}

ParamVector GeneratorPass::pullback(const ParamVector& theta_grad, const Layout& flat_layout) const {
  const auto& spec = spec_;
  if (theta_grad.size() != spec.theta_size())
    throw Error(ErrorKind::Shape, "theta gradient length " + std::to_string(theta_grad.size()) + " != " +
                                      std::to_string(spec.theta_size()), "theta");
  ParamVector grad = ParamVector::zeros(flat_layout);

  const std::size_t out_dim = spec.hyper_output_dim();
  Vector stream(spec.chunk_count() * out_dim, 0.0);
  if (spec.mode == GeneratorMode::Direct) {
    std::copy(theta_grad.data.begin(), theta_grad.data.end(), stream.begin());
  } else {
    const auto layout = spec.main_spec->layout();
    std::size_t pos = 0;
    for (const auto& s : layout->segments()) {
      std::span<const double> src(theta_grad.data.data() + s.offset, s.size());
      if (spec.is_shared(s.name)) {
        auto dst = grad.segment("shared." + s.name);
        std::copy(src.begin(), src.end(), dst.begin());
      } else {
        std::copy(src.begin(), src.end(), stream.begin() + static_cast<std::ptrdiff_t>(pos));
        pos += s.size();
      }
    }
  }

  const std::size_t hyper_size = spec.hyper_spec.param_count();
  std::span<double> hyper_grad(grad.data.data(), hyper_size);
  const std::size_t pdim = spec.preference_input_dim();
  Vector input_grad(spec.hyper_input_dim());
  Vector pref_grad(pdim, 0.0);
  for (std::size_t c = 0; c < tapes_.size(); ++c) {
    std::span<const double> upstream(stream.data() + c * out_dim, out_dim);
    detail::mlp_backward(spec.hyper_spec, params_.hyper.data, tapes_[c], upstream, hyper_grad, input_grad);
    for (std::size_t i = 0; i < pdim; ++i) pref_grad[i] += input_grad[i];
    if (spec.chunking) {
      auto ce = grad.segment("chunk_embeddings");
      const std::size_t d = spec.chunking->chunk_embedding_dim;
      for (std::size_t k = 0; k < d; ++k) ce[c * d + k] += input_grad[pdim + k];
    }
  }
  if (spec.input_mode == InputMode::Embedded && params_.embedding->trainable) {
    auto eg = grad.segment("embedding");
    const auto& p = output_.source_preference.values();
    for (std::size_t i = 0; i < spec.num_tasks; ++i)
      for (std::size_t k = 0; k < pdim; ++k) eg[i * pdim + k] = p[i] * pref_grad[k];
  }
  return grad;
}

GeneratedParams generate(const GeneratorSpec& spec, const GeneratorParams& params, const PreferenceVector& p) {
  return GeneratorPass(spec, params, p).output();
}

std::vector<ParamVector> pullback_grad(const GeneratorSpec& spec, const GeneratorParams& params,
                                       const PreferenceVector& p, std::span<const ParamVector> theta_grads) {
  GeneratorPass pass(spec, params, p);
  const auto layout = generator_flat_layout(spec);
  std::vector<ParamVector> out;
  out.reserve(theta_grads.size());
  for (const auto& g : theta_grads) out.push_back(pass.pullback(g, layout));
  return out;
}

namespace serial {

std::vector<GeneratedParams> front_sweep_generate(const GeneratorSpec& spec, const GeneratorParams& params,
                                                  std::span<const PreferenceVector> grid) {
  std::vector<GeneratedParams> out;
  out.reserve(grid.size());
  for (const auto& p : grid) out.push_back(generate(spec, params, p));
  return out;
}

}  // namespace serial

std::vector<GeneratedParams> front_sweep_generate(const GeneratorSpec& spec, const GeneratorParams& params,
                                                  std::span<const PreferenceVector> grid) {
  if (grid.empty()) return {};
  spec.validate();
  check_generator_params(spec, params);
  std::vector<std::optional<GeneratedParams>> slots(grid.size());
  const long n = static_cast<long>(grid.size());
  // Exceptions cannot cross the parallel region; the first one is rethrown.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    try {
      slots[static_cast<std::size_t>(i)] = generate(spec, params, grid[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical(cpmtl_sweep_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<GeneratedParams> out;
  out.reserve(grid.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace cpmtl
