#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swisenet/error.hpp"
#include "swisenet/model.hpp"

namespace swisenet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float array: the unit of storage in checkpoints and tensor caches.
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

struct OptimizerState {
  std::string kind;
  std::uint64_t step = 0;
  // Per-parameter moment buffers, e.g. "m/<param>" and "v/<param>".
  std::vector<NamedArray> slots;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t config_digest = 0;
  std::string config_text;
  std::uint32_t epoch = 0;
  std::uint64_t seed = 0;
  std::vector<NamedArray> arrays;
  std::optional<OptimizerState> optimizer;
};

enum class CheckpointErrorKind { NotACheckpoint, VersionMismatch, Truncated, DigestMismatch, Malformed };

class CheckpointError : public DataError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Little-endian layout:
//   "SWSE" | u32 version | u64 config digest | u32 len + config text |
//   u32 epoch | u64 seed | array table | u8 has_optimizer [u32 len + kind |
//   u64 step | array table]
// Array table: u32 count, then per array u32 len + name, u32 rank,
// u32 dims[rank], f32 values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::vector<NamedArray> export_parameters(const ParameterStore<float>& store);
// Every parameter must be present with an identical shape; extra arrays are
// rejected too.
void import_parameters(ParameterStore<float>& store, const std::vector<NamedArray>& arrays);

void save_checkpoint(const SwiSENet<float>& model, const std::filesystem::path& path, std::uint32_t epoch = 0,
                     const OptimizerState* optimizer = nullptr);

/// Rebuilds the model stored at `path`. With `expected`, the stored
/// architecture digest must equal expected->digest().
SwiSENet<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr,
                                Checkpoint* meta = nullptr);

// Preprocessed-tensor cache file: "SWSC" | u32 version | u64 key | array table.
void write_tensor_cache(const std::filesystem::path& path, std::uint64_t key, const NamedArray& array);
// nullopt if the file is absent, unreadable or was written for another key.
std::optional<NamedArray> read_tensor_cache(const std::filesystem::path& path, std::uint64_t key);

}  // namespace swisenet
