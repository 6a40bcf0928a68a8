#ifndef CPMTL_HYPERGEN_HPP_
#define CPMTL_HYPERGEN_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpmtl/numerics.hpp"
#include "cpmtl/objectives.hpp"
#include "cpmtl/preferences.hpp"

namespace cpmtl {

enum class GeneratorMode { Direct, HyperMain };
enum class InputMode { Raw, Embedded };

const char* to_string(GeneratorMode m);
const char* to_string(InputMode m);
GeneratorMode generator_mode_from_string(const std::string& s);
InputMode input_mode_from_string(const std::string& s);

struct ChunkingSpec {
  std::size_t chunk_size = 0;
  std::size_t chunk_embedding_dim = 4;

  friend bool operator==(const ChunkingSpec&, const ChunkingSpec&) = default;
};

/// Shape of the preference -> parameters generator.
///
/// Direct mode: the hypernetwork output is the solution itself. Hyper-main
/// mode: the output fills the main network's segments in order, except the
/// segments listed in `shared_partition`, which come straight from the
/// generator's own shared parameters. With chunking, the hypernetwork is run
/// once per chunk on [input; chunk embedding] and the chunks are concatenated.
struct GeneratorSpec {
  GeneratorMode mode = GeneratorMode::Direct;
  InputMode input_mode = InputMode::Raw;
  std::size_t num_tasks = 2;
  std::size_t embedding_dim = 0;
  MLPSpec hyper_spec;
  std::optional<MLPSpec> main_spec;
  std::size_t theta_dim = 0;
  std::optional<ChunkingSpec> chunking;
  std::vector<std::string> shared_partition;

  void validate() const;
  Layout theta_layout() const;
  std::size_t theta_size() const;
  // Entries of theta produced by the hypernetwork (everything not shared).
  std::size_t generated_count() const;
  std::size_t chunk_count() const;
  std::size_t preference_input_dim() const;
  std::size_t hyper_input_dim() const;
  std::size_t hyper_output_dim() const;
  bool is_shared(const std::string& segment) const;

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Trainable state of the generator.
struct GeneratorParams {
  ParamVector hyper;
  std::optional<ParamVector> shared;
  std::optional<EmbeddingTable> embedding;
  std::optional<DenseMatrix> chunk_embeddings;

  ParamVector flatten(const GeneratorSpec& spec) const;
  void assign_flat(const GeneratorSpec& spec, std::span<const double> flat);
};

/// Segment table of GeneratorParams::flatten: "hyper.*", "shared.*",
/// "embedding", "chunk_embeddings".
Layout generator_flat_layout(const GeneratorSpec& spec);

Layout shared_layout(const GeneratorSpec& spec);

struct GeneratedParams {
  ParamVector theta;
  PreferenceVector source_preference;
};

/// Hidden widths 64-64 with tanh. Synthetic: direct with raw preference
/// input. Regression: hyper-main over the 1-16-16-1 main network with an
/// 8-dimensional preference embedding.
GeneratorSpec default_generator_spec(const ProblemDescriptor& problem);

GeneratorParams init_generator(const GeneratorSpec& spec, Rng& rng);

/// One forward pass through the generator, recorded for reuse by several
/// pullbacks. Holds references: `spec` and `params` must outlive it.
class GeneratorPass {
 public:
  GeneratorPass(const GeneratorSpec& spec, const GeneratorParams& params, const PreferenceVector& p);

  const GeneratedParams& output() const { return output_; }

  // J^T g for one theta-shaped gradient, laid out as generator_flat_layout.
  ParamVector pullback(const ParamVector& theta_grad, const Layout& flat_layout) const;

 private:
  const GeneratorSpec& spec_;
  const GeneratorParams& params_;
  Vector pref_input_;
  std::vector<MlpTape> tapes_;
  GeneratedParams output_;
};

GeneratedParams generate(const GeneratorSpec& spec, const GeneratorParams& params, const PreferenceVector& p);

std::vector<ParamVector> pullback_grad(const GeneratorSpec& spec, const GeneratorParams& params,
                                       const PreferenceVector& p, std::span<const ParamVector> theta_grads);

/// Element-wise generate over a preference grid, parallel across grid points.
std::vector<GeneratedParams> front_sweep_generate(const GeneratorSpec& spec, const GeneratorParams& params,
                                                  std::span<const PreferenceVector> grid);

namespace serial {

std::vector<GeneratedParams> front_sweep_generate(const GeneratorSpec& spec, const GeneratorParams& params,
                                                  std::span<const PreferenceVector> grid);

}  // namespace serial

}  // namespace cpmtl

#endif  // CPMTL_HYPERGEN_HPP_
