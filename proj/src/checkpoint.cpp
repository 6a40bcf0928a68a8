#include "cpmtl/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cpmtl {

using nlohmann::json;

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 failed", "digest");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

// ------------------------------------------------------------ byte helpers

std::uint64_t to_le(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xff) << (8 * (7 - i));
    return r;
  }
  return x;
}

void put_u64(std::string& out, std::uint64_t x) {
  x = to_le(x);
  char b[8];
  std::memcpy(b, &x, 8);
  out.append(b, 8);
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t x;
  std::memcpy(&x, p, 8);
  return to_le(x);
}

void put_reals(std::string& out, std::span<const double> v) {
  for (double d : v) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

Vector get_reals(const char* p, std::size_t n) {
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<double>(get_u64(p + 8 * i));
  return v;
}

// ------------------------------------------------------------------ json

json mlp_to_json(const MLPSpec& s) {
  json acts = json::array();
  for (auto a : s.activations) acts.push_back(to_string(a));
  return {{"layer_sizes", s.layer_sizes}, {"activations", acts}};
}

MLPSpec mlp_from_json(const json& j) {
  MLPSpec s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("activations")) s.activations.push_back(activation_from_string(a.get<std::string>()));
  return s;
}

json spec_to_json(const GeneratorSpec& s, bool embedding_trainable) {
  json j = {{"mode", to_string(s.mode)},
            {"input_mode", to_string(s.input_mode)},
            {"num_tasks", s.num_tasks},
            {"embedding_dim", s.embedding_dim},
            {"embedding_trainable", embedding_trainable},
            {"hyper", mlp_to_json(s.hyper_spec)},
            {"theta_dim", s.theta_dim},
            {"shared_partition", s.shared_partition}};
  j["main"] = s.main_spec ? mlp_to_json(*s.main_spec) : json(nullptr);
  j["chunking"] = s.chunking ? json{{"chunk_size", s.chunking->chunk_size},
                                    {"chunk_embedding_dim", s.chunking->chunk_embedding_dim}}
                             : json(nullptr);
  return j;
}

GeneratorSpec spec_from_json(const json& j) {
  GeneratorSpec s;
  s.mode = generator_mode_from_string(j.at("mode").get<std::string>());
  s.input_mode = input_mode_from_string(j.at("input_mode").get<std::string>());
  s.num_tasks = j.at("num_tasks").get<std::size_t>();
  s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  s.hyper_spec = mlp_from_json(j.at("hyper"));
  s.theta_dim = j.at("theta_dim").get<std::size_t>();
  s.shared_partition = j.at("shared_partition").get<std::vector<std::string>>();
  if (!j.at("main").is_null()) s.main_spec = mlp_from_json(j.at("main"));
  if (!j.at("chunking").is_null())
    s.chunking = ChunkingSpec{j.at("chunking").at("chunk_size").get<std::size_t>(),
                              j.at("chunking").at("chunk_embedding_dim").get<std::size_t>()};
  return s;
}

json config_to_json(const TrainingConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"optimizer", to_string(c.optimizer)},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"reference_count", c.reference_count},
          {"batch_preferences", c.batch_preferences},
          {"activation_slack", c.activation_slack},
          {"criticality", c.criticality},
          {"data_batch", c.data_batch},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"normalize_gradients", c.normalize_gradients}};
}

TrainingConfig config_from_json(const json& j) {
  TrainingConfig c;
  c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  c.steps = j.at("steps").get<std::uint64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.reference_count = j.at("reference_count").get<std::size_t>();
  c.batch_preferences = j.at("batch_preferences").get<std::size_t>();
  c.activation_slack = j.at("activation_slack").get<double>();
  c.criticality = j.at("criticality").get<double>();
  c.data_batch = j.at("data_batch").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::uint64_t>();
  c.normalize_gradients = j.at("normalize_gradients").get<bool>();
  return c;
}

json problem_to_json(const ProblemDescriptor& d) {
  return {{"kind", to_string(d.kind)},
          {"m", d.m},
          {"theta_dim", d.theta_dim},
          {"data_seed", d.data_seed},
          {"dataset_size", d.dataset_size}};
}

ProblemDescriptor problem_from_json(const json& j) {
  ProblemDescriptor d;
  d.kind = problem_kind_from_string(j.at("kind").get<std::string>());
  d.m = j.at("m").get<std::size_t>();
  d.theta_dim = j.at("theta_dim").get<std::size_t>();
  d.data_seed = j.at("data_seed").get<std::uint64_t>();
  d.dataset_size = j.at("dataset_size").get<std::size_t>();
  return d;
}

json table_to_json(const SegmentTable& t) {
  json out = json::array();
  for (const auto& s : t.segments()) out.push_back({{"name", s.name}, {"offset", s.offset}, {"shape", s.shape}});
  return out;
}

std::string payload_bytes(const Checkpoint& c) {
  std::string out;
  const ParamVector phi = c.params.flatten(c.spec);
  out.reserve(8 * (phi.size() + c.opt.m.size() + c.opt.v.size()));
  put_reals(out, phi.data);
  put_reals(out, c.opt.m);
  put_reals(out, c.opt.v);
  return out;
}

GeneratorParams empty_params(const GeneratorSpec& spec, bool embedding_trainable) {
  GeneratorParams p;
  p.hyper = ParamVector::zeros(spec.hyper_spec.layout());
  if (spec.mode == GeneratorMode::HyperMain && !spec.shared_partition.empty())
    p.shared = ParamVector::zeros(shared_layout(spec));
  if (spec.input_mode == InputMode::Embedded)
    p.embedding = EmbeddingTable{DenseMatrix(spec.num_tasks, spec.embedding_dim), embedding_trainable};
  if (spec.chunking) p.chunk_embeddings = DenseMatrix(spec.chunk_count(), spec.chunking->chunk_embedding_dim);
  return p;
}

}  // namespace

Checkpoint make_checkpoint(const TrainerState& state, const TrainingConfig& cfg) {
  Checkpoint c;
  c.problem = state.problem;
  c.spec = state.spec;
  c.params = state.params;
  c.preference_mode = preference_mode(cfg.mode);
  c.config = cfg;
  c.step = state.step;
  std::ostringstream rng;
  rng << state.rng;
  c.rng_state = rng.str();
  c.rng_digest = sha256_hex(c.rng_state.data(), c.rng_state.size());
  c.opt = state.opt;
  return c;
}

TrainerState restore_state(const Checkpoint& c) {
  TrainerState s;
  s.problem = c.problem;
  s.spec = c.spec;
  s.params = c.params;
  s.opt = c.opt;
  s.step = c.step;
  if (sha256_hex(c.rng_state.data(), c.rng_state.size()) != c.rng_digest)
    throw Error(ErrorKind::DigestMismatch, "rng state does not match its digest", "rng_state");
  std::istringstream in(c.rng_state);
  in >> s.rng;
  if (!in) throw Error(ErrorKind::InvalidArgument, "unreadable rng state", "rng_state");
  return s;
}

std::string payload_digest(const Checkpoint& c) {
  const std::string bytes = payload_bytes(c);
  return sha256_hex(bytes.data(), bytes.size());
}

std::string encode_checkpoint(const Checkpoint& c) {
  c.spec.validate();
  const std::string payload = payload_bytes(c);
  const bool trainable = c.params.embedding ? c.params.embedding->trainable : true;
  const std::size_t nphi = generator_flat_layout(c.spec)->total_size();
  json header = {
      {"version", std::to_string(kFormatMajor) + "." + std::to_string(kFormatMinor)},
      {"problem", problem_to_json(c.problem)},
      {"generator", spec_to_json(c.spec, trainable)},
      {"preference_mode", to_string(c.preference_mode)},
      {"segments", table_to_json(*generator_flat_layout(c.spec))},
      {"blocks", json::array({json{{"name", "params"}, {"size", nphi}},
                              json{{"name", "adam_m"}, {"size", c.opt.m.size()}},
                              json{{"name", "adam_v"}, {"size", c.opt.v.size()}}})},
      {"digest", sha256_hex(payload.data(), payload.size())},
      {"config", config_to_json(c.config)},
      {"step", c.step},
      {"optimizer", {{"updates", c.opt.updates}}},
      {"rng_state", c.rng_state},
      {"rng_digest", c.rng_digest},
  };
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::Truncated, "file shorter than the magic", "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 7) != 0)
    throw Error(ErrorKind::InvalidArgument, "not a checkpoint file", "magic");
  if (bytes[7] != kCheckpointMagic[7])
    throw Error(ErrorKind::VersionMismatch, "unsupported magic version byte " + std::to_string(int(bytes[7])),
                "magic");
  if (bytes.size() < 16) throw Error(ErrorKind::Truncated, "missing header length", "header");
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw Error(ErrorKind::Truncated, "header runs past end of file", "header");

  json h;
  try {
    h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed header: ") + e.what(), "header");
  }

  Checkpoint c;
  try {
    c.format_version = h.at("version").get<std::string>();
    int major = 0, minor = 0;
    if (std::sscanf(c.format_version.c_str(), "%d.%d", &major, &minor) != 2)
      throw Error(ErrorKind::VersionMismatch, "unreadable format version '" + c.format_version + "'", "version");
    if (major != kFormatMajor)
      throw Error(ErrorKind::VersionMismatch, "format version " + c.format_version + " is not readable by 1.x",
                  "version");
    if (minor > kFormatMinor)
      c.warnings.push_back("format version " + c.format_version + " is newer than " +
                           std::to_string(kFormatMajor) + "." + std::to_string(kFormatMinor) +
                           "; loaded with the 1.0 layout");

    c.problem = problem_from_json(h.at("problem"));
    c.spec = spec_from_json(h.at("generator"));
    c.spec.validate();
    c.preference_mode = norm_mode_from_string(h.at("preference_mode").get<std::string>());
    c.config = config_from_json(h.at("config"));
    c.step = h.at("step").get<std::uint64_t>();
    c.opt.updates = h.at("optimizer").at("updates").get<std::uint64_t>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.rng_digest = h.at("rng_digest").get<std::string>();

    const auto layout = generator_flat_layout(c.spec);
    if (h.at("segments") != table_to_json(*layout))
      throw Error(ErrorKind::Shape, "segment table does not match the generator spec", "segments");
    std::size_t sizes[3] = {0, 0, 0};
    const char* names[3] = {"params", "adam_m", "adam_v"};
    const auto& blocks = h.at("blocks");
    if (blocks.size() != 3) throw Error(ErrorKind::Shape, "expected three payload blocks", "blocks");
    for (int b = 0; b < 3; ++b) {
      if (blocks[b].at("name").get<std::string>() != names[b])
        throw Error(ErrorKind::Shape, "unexpected payload block order", "blocks");
      sizes[b] = blocks[b].at("size").get<std::size_t>();
    }
    if (sizes[0] != layout->total_size())
      throw Error(ErrorKind::Shape, "params block size disagrees with the segment table", "params");
    if (sizes[1] != sizes[2]) throw Error(ErrorKind::Shape, "optimizer moment blocks differ in size", "adam_v");

    const std::size_t offset = 16 + hlen;
    const std::size_t need = 8 * (sizes[0] + sizes[1] + sizes[2]);
    if (bytes.size() - offset < need)
      throw Error(ErrorKind::Truncated, "payload has " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                                            std::to_string(need), "payload");
    if (bytes.size() - offset > need) throw Error(ErrorKind::InvalidArgument, "trailing bytes after payload", "payload");
    const std::string digest = sha256_hex(bytes.data() + offset, need);
    if (digest != h.at("digest").get<std::string>())
      throw Error(ErrorKind::DigestMismatch, "payload digest mismatch", "digest");

    const char* p = bytes.data() + offset;
    c.params = empty_params(c.spec, h.at("generator").at("embedding_trainable").get<bool>());
    const Vector phi = get_reals(p, sizes[0]);
    c.params.assign_flat(c.spec, phi);
    c.opt.m = get_reals(p + 8 * sizes[0], sizes[1]);
    c.opt.v = get_reals(p + 8 * (sizes[0] + sizes[1]), sizes[2]);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed header field: ") + e.what(), "header");
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace cpmtl
