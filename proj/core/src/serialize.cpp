#include "holmes/serialize.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "holmes/errors.hpp"
#include "json_internal.hpp"

namespace holmes {

namespace detail {

Json parse_json(std::string_view text, const std::string& what) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + ": " + e.what(), e.byte == 0 ? 0 : e.byte - 1);
    }
}

void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw ArgumentError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (std::string_view a : allowed) known = known || key == a;
        if (!known) throw ArgumentError("unknown key '" + key + "' in " + where);
    }
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

namespace {

std::string to_string(TauSchedule s) { return s == TauSchedule::multiplicative ? "multiplicative" : "subtractive"; }

TauSchedule tau_schedule_from(const std::string& s) {
    if (s == "multiplicative") return TauSchedule::multiplicative;
    if (s == "subtractive") return TauSchedule::subtractive;
    throw ArgumentError("unknown tau_schedule '" + s + "'");
}

}  // namespace

Json to_json(const AttackConfig& cfg) {
    Json j;
    j["family"] = to_string(cfg.family);
    j["target"] = cfg.target ? Json(*cfg.target) : Json(nullptr);
    j["epsilon"] = cfg.epsilon;
    j["kappa"] = cfg.kappa;
    j["c_init"] = cfg.c_init;
    j["c_growth"] = cfg.c_growth;
    j["c_steps"] = cfg.c_steps;
    j["max_iters"] = cfg.max_iters;
    j["inner_lr"] = cfg.inner_lr;
    j["early_abort"] = cfg.early_abort;
    j["gamma"] = cfg.gamma;
    j["theta"] = cfg.theta;
    j["tau_schedule"] = to_string(cfg.tau_schedule);
    j["tau_factor"] = cfg.tau_factor;
    j["tau_step"] = cfg.tau_step;
    j["tau_min"] = cfg.tau_min;
    j["linf_c_max"] = cfg.linf_c_max;
    j["l0_freeze_per_round"] = cfg.l0_freeze_per_round;
    j["e_init"] = cfg.e_init ? Json(*cfg.e_init) : Json(nullptr);
    j["seed"] = cfg.seed;
    return j;
}

AttackConfig attack_config_from(const Json& j, AttackConfig base) {
    require_known_keys(j,
                       {"family", "target", "epsilon", "kappa", "c_init", "c_growth", "c_steps", "max_iters",
                        "inner_lr", "early_abort", "gamma", "theta", "tau_schedule", "tau_factor", "tau_step",
                        "tau_min", "linf_c_max", "l0_freeze_per_round", "e_init", "seed"},
                       "attack config");
    AttackConfig c = base;
    if (j.contains("family")) c.family = attack_family_from_string(j["family"].get<std::string>());
    if (j.contains("target")) {
        c.target = j["target"].is_null() ? std::nullopt : std::optional<std::size_t>(j["target"].get<std::size_t>());
    }
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.kappa = get_or(j, "kappa", c.kappa);
    c.c_init = get_or(j, "c_init", c.c_init);
    c.c_growth = get_or(j, "c_growth", c.c_growth);
    c.c_steps = get_or(j, "c_steps", c.c_steps);
    c.max_iters = get_or(j, "max_iters", c.max_iters);
    c.inner_lr = get_or(j, "inner_lr", c.inner_lr);
    c.early_abort = get_or(j, "early_abort", c.early_abort);
    c.gamma = get_or(j, "gamma", c.gamma);
    c.theta = get_or(j, "theta", c.theta);
    if (j.contains("tau_schedule")) c.tau_schedule = tau_schedule_from(j["tau_schedule"].get<std::string>());
    c.tau_factor = get_or(j, "tau_factor", c.tau_factor);
    c.tau_step = get_or(j, "tau_step", c.tau_step);
    c.tau_min = get_or(j, "tau_min", c.tau_min);
    c.linf_c_max = get_or(j, "linf_c_max", c.linf_c_max);
    c.l0_freeze_per_round = get_or(j, "l0_freeze_per_round", c.l0_freeze_per_round);
    if (j.contains("e_init")) {
        c.e_init = j["e_init"].is_null() ? std::nullopt : std::optional<double>(j["e_init"].get<double>());
    }
    c.seed = get_or(j, "seed", c.seed);
    c.validate();
    return c;
}

Json to_json(const AttackRecord& record) {
    const AttackResult& r = record.result;
    Json j;
    j["set"] = record.set;
    j["sample_id"] = record.sample_id;
    j["family"] = to_string(record.family);
    j["kappa"] = record.kappa;
    j["original_label"] = r.original_label;
    j["target"] = r.target ? Json(*r.target) : Json(nullptr);
    j["achieved_label"] = r.achieved_label;
    j["success"] = r.success;
    j["iterations_used"] = r.iterations_used;
    j["noise"] = {{"l0", r.noise.l0}, {"l2", r.noise.l2}, {"linf", r.noise.linf}};
    j["final_const"] = r.final_const;
    j["tau_history"] = r.tau_history;
    j["detector_scores"] = r.detector_scores;
    j["bypassed"] = r.bypassed;
    j["shape"] = r.adversarial.shape();
    j["x_adv"] = encode_values(r.adversarial);
    return j;
}

AttackRecord attack_record_from(const Json& j) {
    AttackRecord rec;
    rec.set = j.at("set").get<std::string>();
    rec.sample_id = j.at("sample_id").get<std::size_t>();
    rec.family = attack_family_from_string(j.at("family").get<std::string>());
    rec.kappa = j.at("kappa").get<double>();
    AttackResult& r = rec.result;
    r.original_label = j.at("original_label").get<std::size_t>();
    if (!j.at("target").is_null()) r.target = j.at("target").get<std::size_t>();
    r.achieved_label = j.at("achieved_label").get<std::size_t>();
    r.success = j.at("success").get<bool>();
    r.iterations_used = j.at("iterations_used").get<int>();
    r.noise = {j.at("noise").at("l0").get<double>(), j.at("noise").at("l2").get<double>(),
               j.at("noise").at("linf").get<double>()};
    r.final_const = j.at("final_const").get<double>();
    r.tau_history = j.at("tau_history").get<std::vector<double>>();
    r.detector_scores = j.at("detector_scores").get<std::vector<double>>();
    r.bypassed = j.at("bypassed").get<std::vector<bool>>();
    r.adversarial = decode_values(j.at("x_adv").get<std::string>(), j.at("shape").get<std::vector<std::size_t>>());
    return rec;
}

Json to_json(const TrainConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"seed", cfg.seed},
            {"loss", cfg.loss == LossKind::cross_entropy ? "cross_entropy" : "binary_cross_entropy"}};
}

TrainConfig train_config_from(const Json& j, TrainConfig base) {
    require_known_keys(j, {"learning_rate", "epochs", "batch_size"}, "train config");
    base.learning_rate = get_or(j, "learning_rate", base.learning_rate);
    base.epochs = get_or(j, "epochs", base.epochs);
    base.batch_size = get_or(j, "batch_size", base.batch_size);
    return base;
}

Json to_json(const Histogram& h) {
    Json bins = Json::array();
    for (const auto& [edge, count] : h.bins) bins.push_back(Json::array({edge, count}));
    return {{"bin_width", h.bin_width}, {"bins", bins}};
}

Json to_json(const LogitStats& stats, bool with_values) {
    Json j;
    j["count"] = stats.maxima.size();
    j["mean_max"] = number(stats.mean_max);
    j["mean_variance"] = number(stats.mean_variance);
    j["max_histogram"] = to_json(stats.max_histogram);
    j["variance_histogram"] = to_json(stats.variance_histogram);
    if (with_values) {
        j["maxima"] = stats.maxima;
        j["variances"] = stats.variances;
    }
    return j;
}

Json to_json(const MetricsReport& report) {
    auto per_policy = [](const std::map<Policy, double>& m) {
        Json j;
        for (Policy p : kAllPolicies) {
            const auto it = m.find(p);
            j[to_string(p)] = it == m.end() ? Json(nullptr) : number(it->second);
        }
        return j;
    };
    Json j;
    j["schema"] = "holmes.metrics/1";
    j["voters"] = report.voter_names;
    j["benign"] = {{"count", report.benign_count},
                   {"false_adversarial_rate", per_policy(report.far)},
                   {"logit_stats", to_json(report.benign_stats, false)}};
    Json attacks = Json::array();
    for (const AttackMetrics& m : report.attacks) {
        Json a;
        a["attack"] = m.attack;
        a["count"] = m.count;
        a["true_adversarial_rate"] = per_policy(m.tar);
        a["auc_roc"] = number(m.auc);
        Json points;
        for (Policy p : kAllPolicies) {
            const auto it = m.operating_points.find(p);
            if (it != m.operating_points.end()) points[to_string(p)] = {{"far", it->second.far}, {"tar", it->second.tar}};
        }
        a["operating_points"] = points;
        a["logit_stats"] = to_json(m.stats, false);
        attacks.push_back(std::move(a));
    }
    j["attacks"] = std::move(attacks);
    return j;
}

}  // namespace detail

using detail::Json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return {};
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.empty()) return {};
    if (text.size() % 4 != 0) throw ParseError("base-64 text length is not a multiple of 4", text.size());
    std::size_t padding = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        const bool alpha = (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') ||
                           ch == '+' || ch == '/';
        if (ch == '=' && i + 2 >= text.size()) {
            ++padding;
        } else if (!alpha || padding > 0) {
            throw ParseError("invalid base-64 character", i);
        }
    }
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ParseError("malformed base-64 text", 0);
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

std::string encode_values(const Tensor& t) {
    std::vector<std::uint8_t> bytes(t.size() * 8);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(t[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return base64_encode(bytes);
}

Tensor decode_values(std::string_view text, std::vector<std::size_t> shape) {
    const std::vector<std::uint8_t> bytes = base64_decode(text);
    if (bytes.size() % 8 != 0) throw ParseError("tensor payload is not a whole number of f64 values", bytes.size());
    std::vector<double> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    if (shape.empty() && values.empty()) return {};
    std::size_t expected = 1;
    for (std::size_t d : shape) expected *= d;
    if (expected != values.size()) throw ParseError("tensor payload does not match its shape", bytes.size());
    return Tensor(std::move(shape), std::move(values));
}

std::string attack_record_to_json(const AttackRecord& record) { return detail::to_json(record).dump(); }

AttackRecord attack_record_from_json(std::string_view line) {
    try {
        return detail::attack_record_from(detail::parse_json(line, "attack record"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("attack record: ") + e.what(), 0);
    }
}

void write_attack_records(const std::filesystem::path& path, std::span<const AttackRecord> records, bool sidecar) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const AttackRecord& r : records) out << attack_record_to_json(r) << '\n';
    if (!out) throw Error("failed writing " + path.string());
    if (sidecar) {
        std::vector<std::uint8_t> raw;
        for (const AttackRecord& r : records) {
            for (double v : r.result.adversarial.values()) {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int b = 0; b < 8; ++b) raw.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
            }
        }
        std::ofstream side(path.string() + ".f64", std::ios::binary | std::ios::trunc);
        side.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!side) throw Error("failed writing sidecar for " + path.string());
    }
}

std::vector<AttackRecord> read_attack_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<AttackRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(attack_record_from_json(line));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what(), e.offset());
        }
    }
    return out;
}

std::string attack_config_to_json(const AttackConfig& cfg) { return detail::to_json(cfg).dump(2); }

AttackConfig attack_config_from_json(std::string_view json) {
    try {
        return detail::attack_config_from(detail::parse_json(json, "attack config"));
    } catch (const nlohmann::json::type_error& e) {
        throw ArgumentError(std::string("attack config: ") + e.what());
    }
}

std::string histogram_to_json(const Histogram& h) { return detail::to_json(h).dump(); }

std::string logit_stats_to_json(const LogitStats& stats, bool with_values) {
    return detail::to_json(stats, with_values).dump(2);
}

std::string metrics_to_json(const MetricsReport& report) { return detail::to_json(report).dump(2) + "\n"; }

}  // namespace holmes
