#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "holmes/tensor.hpp"

namespace holmes {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

/// Labelled images stored normalized to [-0.5, 0.5]. `ids` are stable sample
/// identifiers (index in the source) carried through every derived subset.
struct Dataset {
    std::string name;
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> ids;
    std::size_t num_classes = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    /// SHA-256 of the raw source bytes (hex); for synthetic data, of the generator parameters.
    std::string source_checksum;

    std::size_t size() const noexcept { return images.size(); }
    std::size_t dims() const noexcept { return rows * cols; }
    bool empty() const noexcept { return images.empty(); }

    /// Throws ArgumentError if any pixel leaves [-0.5, 0.5] or a label is out of range.
    void validate() const;
};

/// Maps a raw byte to the normalized pixel range.
inline double normalize_pixel(std::uint8_t byte) { return static_cast<double>(byte) / 255.0 - 0.5; }

/// Parses IDX image (magic 2051) and label (magic 2049) files. `limit` keeps the
/// first `limit` records when non-zero. Throws ParseError on bad magic,
/// truncated payloads and count mismatches.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit = 0);

/// Same as load_idx() on in-memory file contents.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::size_t limit = 0);

/// Writes `ds` in IDX layout, quantizing pixels back to bytes.
void write_idx(const Dataset& ds, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// k Gaussian blobs in m dimensions (m must be a perfect square or 1 x m is used),
/// n samples per class, clipped to the pixel box. Deterministic per seed.
Dataset synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dims, std::uint64_t seed);

struct Split {
    Dataset train;
    Dataset test;
    Dataset detector_pool;
};

/// Disjoint, exhaustive three-way split after a seeded shuffle. Part sizes use
/// largest-remainder rounding; fractions must be non-negative and sum to 1.
Split split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

/// Part sizes for `total` items under largest-remainder rounding (ties to the earlier part).
std::vector<std::size_t> largest_remainder_sizes(std::size_t total, std::span<const double> fractions);

/// Rows of `ds` at positions `positions` (not ids), in the given order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> positions);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace holmes
