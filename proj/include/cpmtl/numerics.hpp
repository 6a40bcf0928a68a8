#ifndef CPMTL_NUMERICS_HPP_
#define CPMTL_NUMERICS_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cpmtl/error.hpp"

namespace cpmtl {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Uniform draw in (0, 1] built from the top 53 bits of one engine output.
double uniform01(Rng& rng);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Row-major dense matrix.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0);
  DenseMatrix(std::size_t r, std::size_t c, Vector values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const;
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Ordered, disjoint, gap-free map from names to spans of a flat vector.
class SegmentTable {
 public:
  SegmentTable() = default;

  // Appends a segment directly after the last one.
  void append(std::string name, std::vector<std::size_t> shape);

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }
  const Segment& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  friend bool operator==(const SegmentTable&, const SegmentTable&) = default;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

using Layout = std::shared_ptr<const SegmentTable>;

/// Flat parameter storage plus the segment table that gives it structure.
struct ParamVector {
  Vector data;
  Layout layout;

  ParamVector() = default;
  ParamVector(Layout l, Vector values);

  static ParamVector zeros(Layout l);

  std::size_t size() const { return data.size(); }
  std::span<const double> segment(const std::string& name) const;
  std::span<double> segment(const std::string& name);
  bool same_shape(const ParamVector& other) const;
};

bool same_layout(const SegmentTable& a, const SegmentTable& b);

enum class Activation { Tanh, Relu, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MLPSpec {
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> activations;

  void validate() const;
  std::size_t num_layers() const { return activations.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  // Segments "L{k}.W" (out x in) and "L{k}.b" (out) for k = 0..layers-1.
  Layout layout() const;

  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

struct GradResult {
  Vector value;
  ParamVector param_grad;
  Vector input_grad;
};

// Activations recorded by a forward pass so several backward passes can
// reuse it. inputs[k] feeds layer k; outputs[k] is its post-activation.
struct MlpTape {
  std::vector<Vector> inputs;
  std::vector<Vector> outputs;

  const Vector& result() const { return outputs.back(); }
};

/// Throws Error(Shape) naming the first segment of `params` that disagrees
/// with the layout the MLPSpec implies.
void check_params(const MLPSpec& spec, const ParamVector& params);

Vector mlp_forward(const MLPSpec& spec, const ParamVector& params, std::span<const double> input);

GradResult mlp_grad(const MLPSpec& spec, const ParamVector& params, std::span<const double> input,
                    std::span<const double> upstream);

namespace detail {

// Unchecked raw-span variants used on the training hot path.
void mlp_forward_tape(const MLPSpec& spec, std::span<const double> params,
                      std::span<const double> input, MlpTape& tape);

// Accumulates (+=) the parameter gradient; writes input_grad when non-empty.
void mlp_backward(const MLPSpec& spec, std::span<const double> params, const MlpTape& tape,
                  std::span<const double> upstream, std::span<double> param_grad,
                  std::span<double> input_grad);

}  // namespace detail

/// Central differences, one coordinate at a time.
ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& at, double h);

/// Weights ~ N(0, 1/fan_in) scaled by `head_scale` on the last layer; biases zero.
ParamVector init_mlp(const MLPSpec& spec, Rng& rng, double head_scale = 1.0);

}  // namespace cpmtl

#endif  // CPMTL_NUMERICS_HPP_
