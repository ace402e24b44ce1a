#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "holmes/attacks.hpp"
#include "holmes/evaluation.hpp"
#include "holmes/tensor.hpp"

namespace holmes {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on characters outside the base-64 alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Tensor values as little-endian f64, base-64 encoded.
std::string encode_values(const Tensor& t);
Tensor decode_values(std::string_view text, std::vector<std::size_t> shape);

/// One generated adversarial example together with where it came from.
struct AttackRecord {
    std::string set;              // attack set name, e.g. "cw_l2"
    std::size_t sample_id = 0;    // dataset id of the original image
    AttackFamily family = AttackFamily::cw_l2;
    double kappa = 0.0;
    AttackResult result;
};

/// Single-line JSON object (no trailing newline).
std::string attack_record_to_json(const AttackRecord& record);
AttackRecord attack_record_from_json(std::string_view line);

/// JSON-lines file, one record per line. With `sidecar` set, every adversarial
/// tensor is also appended to `<path>.f64` as raw little-endian doubles.
void write_attack_records(const std::filesystem::path& path, std::span<const AttackRecord> records,
                          bool sidecar = false);
std::vector<AttackRecord> read_attack_records(const std::filesystem::path& path);

std::string attack_config_to_json(const AttackConfig& cfg);
/// Missing keys keep AttackConfig defaults; unknown keys are rejected.
AttackConfig attack_config_from_json(std::string_view json);

std::string histogram_to_json(const Histogram& h);
std::string logit_stats_to_json(const LogitStats& stats, bool with_values = false);

/// Stable key order; see docs/formats.md.
std::string metrics_to_json(const MetricsReport& report);

}  // namespace holmes
