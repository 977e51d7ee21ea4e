#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinyann/compression.hpp"
#include "tinyann/model.hpp"
#include "tinyann/synth.hpp"

namespace tinyann {

inline constexpr int kFormatVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct ModelFile {
  ModelSpec spec;
  Parameters params;
  Metadata metadata;
};

struct CompressedFile {
  CompressedModel model;
  Metadata metadata;
};

struct Dataset {
  AnnotatedSequence sequence;
  double fps = 40.0;
};

// In-memory encodings. Parameters are rounded to 32-bit floats; loading
// throws VersionUnsupported, Truncated, ChecksumMismatch or ParseError.
std::vector<std::uint8_t> serialize_model(const ModelSpec& spec, const Parameters& params,
                                          const Metadata& metadata = {});
ModelFile parse_model(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_compressed(const CompressedModel& model, const Metadata& metadata = {});
CompressedFile parse_compressed(std::span<const std::uint8_t> bytes);
/// Bytes of the binary section of a compressed file: layer descriptors,
/// weight stream and biases.
std::size_t compressed_payload_size(const CompressedModel& model);

/// Throws PixelOutOfRange, ShapeMismatch or InvalidArgument for invalid content.
std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::span<const std::uint8_t> bytes);

// Files are written to a temporary sibling and renamed into place.
void save_model(const std::filesystem::path& path, const ModelSpec& spec, const Parameters& params,
                const Metadata& metadata = {});
ModelFile load_model(const std::filesystem::path& path);
void save_compressed(const std::filesystem::path& path, const CompressedModel& model,
                     const Metadata& metadata = {});
CompressedFile load_compressed(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace tinyann
