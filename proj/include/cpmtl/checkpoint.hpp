#ifndef CPMTL_CHECKPOINT_HPP_
#define CPMTL_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cpmtl/hypergen.hpp"
#include "cpmtl/trainer.hpp"

namespace cpmtl {

// File layout:
//   8 bytes   magic "CPMTL\0\0\1"
//   8 bytes   header length, little-endian u64
//   N bytes   UTF-8 JSON header
//   payload   little-endian f64 blocks "params", "adam_m", "adam_v" in that
//             order; within "params" the segments follow the header's table.
// The header's "digest" is the SHA-256 of the payload bytes.

inline constexpr char kCheckpointMagic[8] = {'C', 'P', 'M', 'T', 'L', '\0', '\0', '\1'};
inline constexpr int kFormatMajor = 1;
inline constexpr int kFormatMinor = 0;

struct Checkpoint {
  ProblemDescriptor problem;
  GeneratorSpec spec;
  GeneratorParams params;
  NormMode preference_mode = NormMode::Sphere;
  TrainingConfig config;
  std::uint64_t step = 0;
  // Text form of the engine state and its SHA-256.
  std::string rng_state;
  std::string rng_digest;
  OptimizerState opt;
  // Filled by decode: the version read and anything worth telling the caller.
  std::string format_version = "1.0";
  std::vector<std::string> warnings;
};

Checkpoint make_checkpoint(const TrainerState& state, const TrainingConfig& cfg);
TrainerState restore_state(const Checkpoint& ckpt);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Hex SHA-256 of the parameter payload (params, adam_m, adam_v).
std::string payload_digest(const Checkpoint& ckpt);

std::string sha256_hex(const void* data, std::size_t size);

}  // namespace cpmtl

#endif  // CPMTL_CHECKPOINT_HPP_
