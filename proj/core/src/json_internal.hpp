#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include "holmes/attacks.hpp"
#include "holmes/evaluation.hpp"
#include "holmes/nn.hpp"
#include "holmes/serialize.hpp"
#include "json.hpp"

namespace holmes::detail {

using Json = nlohmann::ordered_json;

/// Parses text, turning library errors into ParseError with the byte offset.
Json parse_json(std::string_view text, const std::string& what);

/// Throws ArgumentError naming the first key of `obj` not in `allowed`.
void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where);

/// Non-finite doubles become null.
Json number(double v);

template <typename T>
T get_or(const Json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    return it->template get<T>();
}

Json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from(const Json& j, AttackConfig base = {});

Json to_json(const AttackRecord& record);
AttackRecord attack_record_from(const Json& j);

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from(const Json& j, TrainConfig base);

Json to_json(const Histogram& h);
Json to_json(const LogitStats& stats, bool with_values);
Json to_json(const MetricsReport& report);

}  // namespace holmes::detail
