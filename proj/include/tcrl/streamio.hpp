#pragma once

#include "tcrl/core.hpp"
#include "tcrl/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tcrl {

namespace fs = std::filesystem;

// ActivationStream layout, little-endian throughout:
//   header  "ACTS" | u32 version = 1 | u32 dim | u8 dtype = 0 | 3 zero bytes   (16 bytes)
//   record  u64 seq_id | u32 length | length * dim f32 values, row-major in time
inline constexpr std::uint32_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 16;
inline constexpr std::size_t kRecordHeaderBytes = 12;

/// Writes atomically (temporary file then rename). Values are rounded to
/// 32-bit floats. Returns the file size in bytes.
std::uint64_t write_stream(const SeriesBatch& batch, const fs::path& path);
SeriesBatch read_stream(const fs::path& path, SeriesKind kind = SeriesKind::Observed);

struct StreamSummary {
    std::uint32_t dim = 0;
    std::uint64_t sequences = 0;
    std::uint64_t rows = 0;
    bool finite = true;
};
StreamSummary inspect_stream(const fs::path& path);

// Ground-truth sidecar:
//   header  "TCGS" | u32 version = 1 | u32 lag count | u32 zero        (16 bytes)
//   blocks  4-byte tag | u32 rows | u32 cols | rows * cols f64 values
// Tags: "MIXA" (mixing), "LAGB" once per lag in order, "INST" (M), "NOIS" (1 x 1).
inline constexpr std::uint32_t kSidecarVersion = 1;
void write_sidecar(const GroundTruthSystem& system, const fs::path& path);
GroundTruthSystem read_sidecar(const fs::path& path);

// Checkpoint:
//   header  "TCKP" | u32 version = 1 | u32 topk | u32 tensor count | i64 adam step
//           | f64 beta1 | f64 beta2 | f64 eps                            (48 bytes)
//   tensors u32 name length | name | u32 rows | u32 cols | rows * cols f64 values
// Parameter tensors use tensor_names() order; Adam moments follow as
// "adam.m.<name>" and "adam.v.<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const ModelParams& params, const AdamState* adam, const fs::path& path);

struct Checkpoint {
    ModelParams params;
    std::optional<AdamState> adam;
};
Checkpoint read_checkpoint(const fs::path& path);

/// Shortest round-trip decimal text with '.' radix.
std::string format_double(double v);

/// Header "step,recon,noise,sparsity_b,sparsity_m,total".
void write_loss_csv(const std::vector<LossRecord>& curve, const fs::path& path);
std::vector<LossRecord> read_loss_csv(const fs::path& path);

/// Writes `contents` to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::string read_file(const fs::path& path);

}  // namespace tcrl
