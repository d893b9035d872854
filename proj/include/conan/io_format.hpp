#pragma once

// On-disk formats. Everything binary is little-endian regardless of host and
// ends in a 64-bit FNV-1a checksum; structured text is YAML.
//
// Embedding container (".cnan"):
//   "CNAN" | u32 version | u32 d | u64 count | u8 float width (4 or 8)
//   | count * d floats | u64 FNV-1a of the float payload
//
// Checkpoint (".ckpt"):
//   "CNANCKPT" | u32 version | u64 header length | YAML header
//   | f64 tensor payload | u64 FNV-1a of header and payload
//
// Manifest: YAML listing the templates of a dataset and the container rows
// that hold their embeddings. The README documents every field.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conan/model.hpp"
#include "conan/template_model.hpp"
#include "conan/trainer.hpp"

namespace conan::io {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kManifestVersion = 1;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

struct EmbeddingContainer {
  std::uint32_t d = 0;
  std::uint64_t count = 0;
  std::uint8_t float_width = 8;
  std::vector<double> values;  // count * d, row-major

  std::span<const double> row(std::size_t i) const { return {values.data() + i * d, d}; }
  friend bool operator==(const EmbeddingContainer&, const EmbeddingContainer&) = default;
};

// Width-4 containers round values to float on encode.
std::vector<std::uint8_t> encode_container(const EmbeddingContainer& c);
EmbeddingContainer decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const EmbeddingContainer& c);
EmbeddingContainer read_container(const std::filesystem::path& path);

struct ManifestEntry {
  std::string template_id;
  std::string subject_id;
  Distribution distribution = Distribution::gallery;
  Split split = Split::train;
  std::vector<std::uint64_t> rows;
  std::vector<std::string> media;                      // empty: "<template_id>/<i>"
  std::vector<std::optional<double>> quality;          // empty or one per row
};

struct Manifest {
  std::uint32_t version = kManifestVersion;
  std::uint32_t d = 0;
  std::string container;  // relative to the manifest's directory
  std::vector<ManifestEntry> templates;
  std::string provenance;  // free-form YAML, echoed configuration
};

std::string emit_manifest(const Manifest& m);
// SchemaError on unknown keys, duplicate template ids or malformed fields.
Manifest parse_manifest(const std::string& text);

// Row indices inside the container and not shared between templates.
void check_manifest(const Manifest& m, std::uint64_t container_rows);

// Writes <stem>.yaml and <stem>.cnan next to each other; returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& manifest_path, const Dataset& ds,
                                   std::uint8_t float_width = 8, const std::string& provenance = {});
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct Checkpoint {
  Model model;
  double tau = 0.1;
  std::optional<TrainerState> trainer;  // present for resumable checkpoints
  std::string provenance;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
// When `expect` is given, a different d, head count or block order is a
// SchemaError.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                             const std::optional<ModelConfig>& expect = std::nullopt);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expect = std::nullopt);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace conan::io
