#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "holmes/nn.hpp"

namespace holmes {

/// Model file layout (all integers little-endian):
///
///   offset  size  field
///   0       8     magic "HOLMESNN"
///   8       4     u32 format version (kModelFormatVersion)
///   12      8     u64 header length H
///   20      H     UTF-8 JSON header: input_dim, layers[{kind, in, out}], init_seed, metadata
///   20+H    ...   for each dense layer in order: weights (in*out f64, row-major), bias (out f64)
///
/// The file must end exactly after the last parameter.
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "HOLMESNN";

struct ModelFile {
    Network network;
    /// Caller-defined JSON object stored under "metadata" (e.g. victim class count).
    std::string metadata_json = "{}";
};

std::vector<std::uint8_t> encode_model(const Network& net, std::string_view metadata_json = "{}");

/// Throws ParseError (with byte offset) or UnsupportedVersionError. Never returns a partial network.
ModelFile decode_model(std::span<const std::uint8_t> bytes);

void save_network(const Network& net, const std::filesystem::path& path, std::string_view metadata_json = "{}");
ModelFile load_model(const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace holmes
