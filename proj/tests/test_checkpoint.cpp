#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>

#include "cpmtl/checkpoint.hpp"
#include "json.hpp"

using namespace cpmtl;

namespace {

Checkpoint trained(TrainMode mode, std::uint64_t steps) {
  TrainingConfig cfg;
  cfg.mode = mode;
  cfg.steps = steps;
  const RegressionProblem problem;
  return make_checkpoint(train(cfg, problem).state, cfg);
}

std::uint64_t header_length(const std::string& bytes) {
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(bytes[8 + i]);
  return n;
}

// Re-serializes the file with `edit` applied to its JSON header.
std::string edit_header(const std::string& bytes, const std::function<void(nlohmann::json&)>& edit) {
  const std::uint64_t n = header_length(bytes);
  nlohmann::json h = nlohmann::json::parse(bytes.substr(16, n));
  edit(h);
  const std::string text = h.dump();
  std::string out = bytes.substr(0, 8);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((text.size() >> (8 * i)) & 0xff);
  return out + text + bytes.substr(16 + n);
}

ErrorKind decode_error(const std::string& bytes) {
  try {
    (void)decode_checkpoint(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("encode/decode round-trips byte for byte") {
  for (TrainMode mode : {TrainMode::Linear, TrainMode::Constrained}) {
    const Checkpoint c = trained(mode, 3);
    const std::string bytes = encode_checkpoint(c);
    CHECK(bytes.compare(0, 8, std::string(kCheckpointMagic, 8)) == 0);
    const Checkpoint d = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(d) == bytes);
    CHECK(d.spec == c.spec);
    CHECK(d.problem == c.problem);
    CHECK(d.config == c.config);
    CHECK(d.step == 3);
    CHECK(d.preference_mode == preference_mode(mode));
    CHECK(d.params.flatten(d.spec).data == c.params.flatten(c.spec).data);
    CHECK(d.opt == c.opt);
    CHECK(d.warnings.empty());
    CHECK(payload_digest(d) == payload_digest(c));
  }
}

TEST_CASE("header is JSON with the version and payload digest") {
  const Checkpoint c = trained(TrainMode::Linear, 1);
  const std::string bytes = encode_checkpoint(c);
  const nlohmann::json h = nlohmann::json::parse(bytes.substr(16, header_length(bytes)));
  CHECK(h.at("version") == "1.0");
  CHECK(h.at("digest") == payload_digest(c));
  CHECK(payload_digest(c).size() == 64);
}

TEST_CASE("sha256 of known strings") {
  CHECK(sha256_hex("", 0) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc", 3) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("corrupted payload is a digest mismatch") {
  const std::string bytes = encode_checkpoint(trained(TrainMode::Linear, 2));
  std::string bad = bytes;
  bad[bad.size() - 3] ^= 0x40;
  CHECK(decode_error(bad) == ErrorKind::DigestMismatch);
  const std::string forged = edit_header(bytes, [](nlohmann::json& h) { h["digest"] = std::string(64, '0'); });
  CHECK(decode_error(forged) == ErrorKind::DigestMismatch);
}

TEST_CASE("truncation is reported as truncated") {
  const std::string bytes = encode_checkpoint(trained(TrainMode::Linear, 1));
  CHECK(decode_error(bytes.substr(0, 5)) == ErrorKind::Truncated);
  CHECK(decode_error(bytes.substr(0, 12)) == ErrorKind::Truncated);
  CHECK(decode_error(bytes.substr(0, 16 + header_length(bytes) / 2)) == ErrorKind::Truncated);
  CHECK(decode_error(bytes.substr(0, bytes.size() - 8)) == ErrorKind::Truncated);
}

TEST_CASE("foreign magic and major versions are rejected") {
  const std::string bytes = encode_checkpoint(trained(TrainMode::Linear, 1));
  std::string v2 = bytes;
  v2[7] = 2;
  CHECK(decode_error(v2) == ErrorKind::VersionMismatch);
  std::string other = bytes;
  other[0] = 'X';
  CHECK(decode_error(other) == ErrorKind::InvalidArgument);
  CHECK(decode_error(edit_header(bytes, [](nlohmann::json& h) { h["version"] = "2.0"; })) ==
        ErrorKind::VersionMismatch);
  CHECK(decode_error(edit_header(bytes, [](nlohmann::json& h) { h["version"] = "one"; })) ==
        ErrorKind::VersionMismatch);
}

TEST_CASE("a newer minor version loads with a warning") {
  const Checkpoint c = trained(TrainMode::Linear, 1);
  const std::string bytes = edit_header(encode_checkpoint(c), [](nlohmann::json& h) { h["version"] = "1.1"; });
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d.format_version == "1.1");
  REQUIRE(d.warnings.size() == 1);
  CHECK(d.warnings[0].find("1.1") != std::string::npos);
  CHECK(d.params.flatten(d.spec).data == c.params.flatten(c.spec).data);
}

TEST_CASE("save and load through a file") {
  const Checkpoint c = trained(TrainMode::Constrained, 2);
  const auto path = (std::filesystem::temp_directory_path() / "cpmtl_test_ckpt.cpm").string();
  save_checkpoint(c, path);
  const Checkpoint d = load_checkpoint(path);
  CHECK(encode_checkpoint(d) == encode_checkpoint(c));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  CHECK_THROWS_AS(save_checkpoint(c, "/nonexistent-dir/x.cpm"), Error);
}

TEST_CASE("rng state carries its digest and is checked on restore") {
  Checkpoint c = trained(TrainMode::Linear, 2);
  CHECK(c.rng_digest == sha256_hex(c.rng_state.data(), c.rng_state.size()));
  const TrainerState s = restore_state(c);
  CHECK(s.step == 2);
  std::ostringstream os;
  os << s.rng;
  CHECK(os.str() == c.rng_state);
  c.rng_state += " ";
  try {
    (void)restore_state(c);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DigestMismatch);
  }
}
