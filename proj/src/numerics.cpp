#include "cpmtl/numerics.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace cpmtl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::VersionMismatch: return "version-mismatch";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::DigestMismatch: return "digest-mismatch";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, double fill)
    : rows(r), cols(c), data(r * c, fill) {}

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, Vector values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c)
    throw Error(ErrorKind::Shape, "matrix data length " + std::to_string(data.size()) +
                                      " != " + std::to_string(r) + "x" + std::to_string(c));
  if (!all_finite(data)) throw Error(ErrorKind::NonFinite, "matrix entries must be finite");
}

std::size_t Segment::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void SegmentTable::append(std::string name, std::vector<std::size_t> shape) {
  if (contains(name)) throw Error(ErrorKind::Shape, "duplicate segment", name);
  Segment s{std::move(name), total_, std::move(shape)};
  total_ += s.size();
  segments_.push_back(std::move(s));
}

const Segment& SegmentTable::at(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw Error(ErrorKind::Shape, "no segment named '" + name + "'", name);
}

bool SegmentTable::contains(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return true;
  return false;
}

bool same_layout(const SegmentTable& a, const SegmentTable& b) { return a == b; }

ParamVector::ParamVector(Layout l, Vector values) : data(std::move(values)), layout(std::move(l)) {
  if (!layout) throw Error(ErrorKind::Shape, "parameter vector without a layout");
  if (data.size() != layout->total_size())
    throw Error(ErrorKind::Shape, "parameter data length " + std::to_string(data.size()) +
                                      " != layout size " + std::to_string(layout->total_size()));
}

ParamVector ParamVector::zeros(Layout l) {
  const std::size_t n = l->total_size();
  return ParamVector(std::move(l), Vector(n, 0.0));
}

std::span<const double> ParamVector::segment(const std::string& name) const {
  const auto& s = layout->at(name);
  return {data.data() + s.offset, s.size()};
}

std::span<double> ParamVector::segment(const std::string& name) {
  const auto& s = layout->at(name);
  return {data.data() + s.offset, s.size()};
}

bool ParamVector::same_shape(const ParamVector& other) const {
  if (data.size() != other.data.size()) return false;
  if (layout == other.layout) return true;
  return layout && other.layout && *layout == *other.layout;
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw Error(ErrorKind::InvalidArgument, "unknown activation '" + s + "'", "activation");
}

void MLPSpec::validate() const {
  if (layer_sizes.size() < 2) throw Error(ErrorKind::Shape, "an MLP needs at least 2 layer sizes");
  for (std::size_t k = 0; k < layer_sizes.size(); ++k)
    if (layer_sizes[k] == 0)
      throw Error(ErrorKind::Shape, "layer size must be positive", "layer " + std::to_string(k));
  if (activations.size() != layer_sizes.size() - 1)
    throw Error(ErrorKind::Shape, "activation count must equal layer count - 1");
}

std::size_t MLPSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k)
    n += layer_sizes[k + 1] * layer_sizes[k] + layer_sizes[k + 1];
  return n;
}

Layout MLPSpec::layout() const {
  validate();
  auto table = std::make_shared<SegmentTable>();
  for (std::size_t k = 0; k < num_layers(); ++k) {
    const std::string prefix = "L" + std::to_string(k);
    table->append(prefix + ".W", {layer_sizes[k + 1], layer_sizes[k]});
    table->append(prefix + ".b", {layer_sizes[k + 1]});
  }
  return table;
}

void check_params(const MLPSpec& spec, const ParamVector& params) {
  spec.validate();
  if (!params.layout) throw Error(ErrorKind::Shape, "parameter vector without a layout");
  const auto expected = spec.layout();
  const auto& want = expected->segments();
  const auto& have = params.layout->segments();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= have.size()) throw Error(ErrorKind::Shape, "missing segment " + want[i].name, want[i].name);
    if (have[i].shape != want[i].shape || have[i].offset != want[i].offset)
      throw Error(ErrorKind::Shape, "segment " + have[i].name + " does not match " + want[i].name,
                  have[i].name);
  }
  if (have.size() != want.size())
    throw Error(ErrorKind::Shape, "unexpected segment " + have[want.size()].name, have[want.size()].name);
  if (params.data.size() != spec.param_count())
    throw Error(ErrorKind::Shape, "parameter count mismatch");
}

namespace {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative expressed through the post-activation value (and its sign for relu).
inline double activate_deriv(Activation a, double out) {
  switch (a) {
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

namespace detail {

void mlp_forward_tape(const MLPSpec& spec, std::span<const double> params,
                      std::span<const double> input, MlpTape& tape) {
  const std::size_t layers = spec.num_layers();
  tape.inputs.resize(layers);
  tape.outputs.resize(layers);
  tape.inputs[0].assign(input.begin(), input.end());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = spec.layer_sizes[k];
    const std::size_t out = spec.layer_sizes[k + 1];
    const double* W = params.data() + offset;
    const double* b = W + out * in;
    offset += out * in + out;
    const Vector& x = tape.inputs[k];
    Vector& y = tape.outputs[k];
    y.resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      const double* w = W + r * in;
      double z = 0.0;
      for (std::size_t c = 0; c < in; ++c) z += w[c] * x[c];
      y[r] = activate(spec.activations[k], z + b[r]);
    }
    if (k + 1 < layers) tape.inputs[k + 1] = y;
  }
}

void mlp_backward(const MLPSpec& spec, std::span<const double> params, const MlpTape& tape,
                  std::span<const double> upstream, std::span<double> param_grad,
                  std::span<double> input_grad) {
  const std::size_t layers = spec.num_layers();
  std::vector<std::size_t> offsets(layers);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < layers; ++k) {
    offsets[k] = offset;
    offset += spec.layer_sizes[k + 1] * spec.layer_sizes[k] + spec.layer_sizes[k + 1];
  }
  Vector delta(upstream.begin(), upstream.end());
  Vector next;
  for (std::size_t kk = layers; kk-- > 0;) {
    const std::size_t in = spec.layer_sizes[kk];
    const std::size_t out = spec.layer_sizes[kk + 1];
    const double* W = params.data() + offsets[kk];
    double* dW = param_grad.data() + offsets[kk];
    double* db = dW + out * in;
    const Vector& x = tape.inputs[kk];
    const Vector& y = tape.outputs[kk];
    for (std::size_t r = 0; r < out; ++r) {
      delta[r] *= activate_deriv(spec.activations[kk], y[r]);
      if (!std::isfinite(delta[r]))
        throw Error(ErrorKind::NonFinite, "non-finite gradient in layer " + std::to_string(kk),
                    "layer " + std::to_string(kk));
    }
    for (std::size_t r = 0; r < out; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      double* g = dW + r * in;
      for (std::size_t c = 0; c < in; ++c) g[c] += dr * x[c];
      db[r] += dr;
    }
    if (kk == 0 && input_grad.empty()) break;
    next.assign(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      const double* w = W + r * in;
      for (std::size_t c = 0; c < in; ++c) next[c] += w[c] * dr;
    }
    if (kk == 0) {
      std::copy(next.begin(), next.end(), input_grad.begin());
    } else {
      delta.swap(next);
    }
  }
}

}  // namespace detail

Vector mlp_forward(const MLPSpec& spec, const ParamVector& params, std::span<const double> input) {
  check_params(spec, params);
  if (input.size() != spec.input_size())
    throw Error(ErrorKind::Shape, "input length " + std::to_string(input.size()) + " != " +
                                      std::to_string(spec.input_size()), "input");
  MlpTape tape;
  detail::mlp_forward_tape(spec, params.data, input, tape);
  for (std::size_t k = 0; k < tape.outputs.size(); ++k)
    if (!all_finite(tape.outputs[k]))
      throw Error(ErrorKind::NonFinite, "non-finite activation in layer " + std::to_string(k),
                  "layer " + std::to_string(k));
  return tape.result();
}

GradResult mlp_grad(const MLPSpec& spec, const ParamVector& params, std::span<const double> input,
                    std::span<const double> upstream) {
  check_params(spec, params);
  if (input.size() != spec.input_size())
    throw Error(ErrorKind::Shape, "input length mismatch", "input");
  if (upstream.size() != spec.output_size())
    throw Error(ErrorKind::Shape, "upstream length mismatch", "upstream");
  MlpTape tape;
  detail::mlp_forward_tape(spec, params.data, input, tape);
  for (std::size_t k = 0; k < tape.outputs.size(); ++k)
    if (!all_finite(tape.outputs[k]))
      throw Error(ErrorKind::NonFinite, "non-finite activation in layer " + std::to_string(k),
                  "layer " + std::to_string(k));
  GradResult result;
  result.value = tape.result();
  result.param_grad = ParamVector::zeros(params.layout);
  result.input_grad.assign(spec.input_size(), 0.0);
  detail::mlp_backward(spec, params.data, tape, upstream, result.param_grad.data, result.input_grad);
  return result;
}

ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& at, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite difference step must be positive", "h");
  ParamVector grad = ParamVector::zeros(at.layout);
  ParamVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double x = at.data[i];
    probe.data[i] = x + h;
    const double up = f(probe);
    probe.data[i] = x - h;
    const double down = f(probe);
    probe.data[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error(ErrorKind::NonFinite, "non-finite evaluation at coordinate " + std::to_string(i),
                  "coordinate " + std::to_string(i));
    grad.data[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

ParamVector init_mlp(const MLPSpec& spec, Rng& rng, double head_scale) {
  auto layout = spec.layout();
  ParamVector params = ParamVector::zeros(layout);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < spec.num_layers(); ++k) {
    auto W = params.segment("L" + std::to_string(k) + ".W");
    double scale = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[k]));
    if (k + 1 == spec.num_layers()) scale *= head_scale;
    for (double& w : W) w = scale * normal(rng);
  }
  return params;
}

}  // namespace cpmtl
