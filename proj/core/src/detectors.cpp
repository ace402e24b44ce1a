#include "holmes/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holmes/errors.hpp"
#include "holmes/evaluation.hpp"
#include "holmes/model_io.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"
#include "json.hpp"

namespace holmes {

namespace {

using json = nlohmann::json;

void check_logit(std::span<const double> logit, std::size_t num_classes) {
    if (num_classes != 0 && logit.size() != num_classes) {
        throw DimensionError("detector expects a logit of " + std::to_string(num_classes) + " scores, got " +
                             std::to_string(logit.size()));
    }
}

json transform_to_json(const Transform& t) {
    switch (t.kind) {
        case Transform::Kind::full: return {{"kind", "full"}};
        case Transform::Kind::top_k: return {{"kind", "top_k"}, {"k", t.k}};
        case Transform::Kind::dedicated: return {{"kind", "dedicated"}, {"class", t.cls}};
    }
    return {};
}

Transform transform_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "full") return Transform::full();
    if (kind == "top_k") return Transform::top_k(j.at("k").get<std::size_t>());
    if (kind == "dedicated") return Transform::dedicated(j.at("class").get<std::size_t>());
    throw ParseError("unknown detector transform '" + kind + "'", 0);
}

}  // namespace

std::size_t Transform::output_dim(std::size_t num_classes) const { return kind == Kind::top_k ? k : num_classes; }

std::vector<double> Transform::apply(std::span<const double> logit) const {
    if (kind == Kind::top_k) return topk_transform(logit, k);
    return {logit.begin(), logit.end()};
}

std::string Transform::name() const {
    switch (kind) {
        case Kind::full: return "full";
        case Kind::top_k: return "top" + std::to_string(k);
        case Kind::dedicated: return "dedicated" + std::to_string(cls);
    }
    return "unknown";
}

std::vector<std::size_t> topk_indices(std::span<const double> logit, std::size_t k) {
    if (k < 1 || k > logit.size()) {
        throw ArgumentError("top-k size " + std::to_string(k) + " outside [1, " + std::to_string(logit.size()) + "]");
    }
    std::vector<std::size_t> idx(logit.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logit[a] > logit[b]; });
    idx.resize(k);
    return idx;
}

std::vector<double> topk_transform(std::span<const double> logit, std::size_t k) {
    std::vector<double> out;
    for (std::size_t i : topk_indices(logit, k)) out.push_back(logit[i]);
    return out;
}

double DetectorUnit::score(std::span<const double> logit) const {
    check_logit(logit, num_classes);
    return infer(net, transform.apply(logit))[0];
}

ScoreGradient DetectorUnit::score_with_gradient(std::span<const double> logit) const {
    check_logit(logit, num_classes);
    const ActivationTrace trace = forward(net, Tensor::vector(transform.apply(logit)));
    const Gradients g = backward(net, trace, Tensor::vector({1.0}), false);
    ScoreGradient out{trace.output()[0], std::vector<double>(logit.size(), 0.0)};
    if (transform.kind == Transform::Kind::top_k) {
        const auto idx = topk_indices(logit, transform.k);
        for (std::size_t r = 0; r < idx.size(); ++r) out.grad[idx[r]] += g.input[r];
    } else {
        std::copy(g.input.values().begin(), g.input.values().end(), out.grad.begin());
    }
    return out;
}

const DetectorUnit& Voter::route(std::span<const double> logit) const {
    if (units.empty()) throw StructuralError("voter '" + name + "' has no units");
    if (kind == Kind::single) return units.front();
    const std::size_t cls = argmax(logit);
    if (cls >= units.size()) {
        throw StructuralError("voter '" + name + "' has no dedicated unit for class " + std::to_string(cls));
    }
    return units[cls];
}

const Voter& DetectorRoster::voter(const std::string& name) const {
    for (const Voter& v : voters) {
        if (v.name == name) return v;
    }
    throw ArgumentError("roster has no voter named '" + name + "'");
}

std::vector<DetectorSample> build_training_set(const VictimModel& model, std::span<const Tensor> benign,
                                               std::span<const Tensor> adversarial) {
    if (benign.empty() && adversarial.empty()) throw ArgumentError("detector training set would be empty");
    std::vector<DetectorSample> out;
    out.reserve(benign.size() + adversarial.size());
    std::size_t id = 0;
    auto add = [&](const Tensor& x, int label) {
        Logit y = logits(model, x);
        const std::size_t cls = argmax(y);
        out.push_back({std::move(y), label, cls, id++});
    };
    for (const Tensor& x : benign) add(x, 0);
    for (const Tensor& x : adversarial) add(x, 1);
    return out;
}

std::map<std::size_t, std::vector<DetectorSample>> partition_by_predicted_label(std::span<const DetectorSample> samples) {
    std::map<std::size_t, std::vector<DetectorSample>> parts;
    for (const DetectorSample& s : samples) parts[s.predicted_class].push_back(s);
    return parts;
}

DetectorUnit train_detector(std::span<const DetectorSample> samples, Transform transform,
                            const DetectorTrainConfig& cfg, std::size_t num_classes) {
    std::size_t positives = 0;
    for (const DetectorSample& s : samples) {
        if (s.label != 0 && s.label != 1) throw ArgumentError("detector labels must be 0 or 1");
        check_logit(s.logit, num_classes);
        positives += static_cast<std::size_t>(s.label);
    }
    if (positives == 0 || positives == samples.size()) {
        throw ArgumentError("detector '" + transform.name() + "' needs both benign and adversarial samples (got " +
                            std::to_string(samples.size() - positives) + " benign, " + std::to_string(positives) +
                            " adversarial)");
    }
    if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
        throw ArgumentError("holdout fraction must lie in [0, 1)");
    }

    // Stratified hold-out so both classes appear on each side whenever possible.
    Rng rng(Rng::derive(cfg.train.seed, 0x401d));
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label ? pos : neg).push_back(i);
    rng.shuffle(std::span<std::size_t>(neg));
    rng.shuffle(std::span<std::size_t>(pos));
    std::vector<std::size_t> train_idx, hold_idx;
    for (const auto* group : {&neg, &pos}) {
        auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(group->size())));
        if (n_hold >= group->size()) n_hold = group->size() - 1;
        hold_idx.insert(hold_idx.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(n_hold));
        train_idx.insert(train_idx.end(), group->begin() + static_cast<std::ptrdiff_t>(n_hold), group->end());
    }
    std::sort(train_idx.begin(), train_idx.end());

    const std::size_t k = num_classes ? num_classes : samples.front().logit.size();
    std::vector<Tensor> inputs;
    std::vector<double> labels;
    for (std::size_t i : train_idx) {
        inputs.push_back(Tensor::vector(transform.apply(samples[i].logit)));
        labels.push_back(samples[i].label);
    }
    DetectorUnit unit;
    unit.transform = transform;
    unit.num_classes = k;
    unit.net = Network::multilayer(transform.output_dim(k), cfg.hidden, 1, true, cfg.train.seed);
    TrainConfig run = cfg.train;
    run.loss = LossKind::binary_cross_entropy;
    run.batch_size = std::min<int>(run.batch_size, static_cast<int>(inputs.size()));
    fit(unit.net, inputs, labels, run);

    std::vector<double> hold_benign, hold_adv;
    for (std::size_t i : hold_idx) {
        (samples[i].label ? hold_adv : hold_benign).push_back(unit.score(samples[i].logit));
    }
    if (!hold_benign.empty() && !hold_adv.empty()) unit.held_out_auc = auc_roc(hold_benign, hold_adv);
    return unit;
}

DetectorRoster train_roster(std::span<const DetectorSample> samples, std::size_t num_classes, const RosterSpec& spec,
                            const DetectorTrainConfig& cfg, std::size_t workers) {
    if (samples.empty()) throw ArgumentError("cannot train detectors without samples");
    struct Job {
        std::size_t voter;
        std::vector<DetectorSample> data;
        Transform transform;
    };
    DetectorRoster roster;
    roster.num_classes = num_classes;
    std::vector<Job> jobs;
    if (spec.dedicated) {
        roster.voters.push_back({"d_star", Voter::Kind::dedicated, {}});
        auto parts = partition_by_predicted_label(samples);
        for (std::size_t c = 0; c < num_classes; ++c) {
            jobs.push_back({roster.voters.size() - 1, std::move(parts[c]), Transform::dedicated(c)});
        }
    }
    if (spec.full) {
        roster.voters.push_back({"d_full", Voter::Kind::single, {}});
        jobs.push_back({roster.voters.size() - 1, {samples.begin(), samples.end()}, Transform::full()});
    }
    for (std::size_t k : spec.top_k) {
        if (k < 1 || k > num_classes) throw ArgumentError("top-k size " + std::to_string(k) + " out of range");
        roster.voters.push_back({"d_top" + std::to_string(k), Voter::Kind::single, {}});
        jobs.push_back({roster.voters.size() - 1, {samples.begin(), samples.end()}, Transform::top_k(k)});
    }
    if (roster.voters.empty()) throw ArgumentError("roster spec selects no detectors");

    std::vector<DetectorUnit> units(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t j) {
        DetectorTrainConfig unit_cfg = cfg;
        unit_cfg.train.seed = Rng::derive(cfg.train.seed, j);
        units[j] = train_detector(jobs[j].data, jobs[j].transform, unit_cfg, num_classes);
    });
    for (std::size_t j = 0; j < jobs.size(); ++j) roster.voters[jobs[j].voter].units.push_back(std::move(units[j]));
    return roster;
}

std::filesystem::path save_roster(const DetectorRoster& roster, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest{{"format", "holmes-roster"}, {"version", 1}, {"num_classes", roster.num_classes}};
    manifest["voters"] = json::array();
    for (const Voter& v : roster.voters) {
        json jv{{"name", v.name}, {"kind", v.kind == Voter::Kind::dedicated ? "dedicated" : "single"}};
        jv["units"] = json::array();
        for (const DetectorUnit& u : v.units) {
            const std::string file = v.name + "_" + u.transform.name() + ".hnn";
            json meta{{"role", "detector"}, {"transform", transform_to_json(u.transform)}};
            save_network(u.net, dir / file, meta.dump());
            jv["units"].push_back({{"file", file},
                                   {"transform", transform_to_json(u.transform)},
                                   {"threshold", u.threshold},
                                   {"held_out_auc", std::isnan(u.held_out_auc) ? json(nullptr) : json(u.held_out_auc)}});
        }
        manifest["voters"].push_back(jv);
    }
    const auto path = dir / "roster.json";
    const std::string text = manifest.dump(2) + "\n";
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return path;
}

DetectorRoster load_roster(const std::filesystem::path& manifest_path) {
    const auto bytes = read_file_bytes(manifest_path);
    json manifest;
    try {
        manifest = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed roster manifest: ") + e.what(), e.byte);
    }
    const auto dir = manifest_path.parent_path();
    DetectorRoster roster;
    try {
        roster.num_classes = manifest.at("num_classes").get<std::size_t>();
        for (const json& jv : manifest.at("voters")) {
            Voter v;
            v.name = jv.at("name").get<std::string>();
            v.kind = jv.at("kind").get<std::string>() == "dedicated" ? Voter::Kind::dedicated : Voter::Kind::single;
            for (const json& ju : jv.at("units")) {
                DetectorUnit u;
                u.net = load_network(dir / ju.at("file").get<std::string>());
                u.transform = transform_from_json(ju.at("transform"));
                u.threshold = ju.value("threshold", 0.5);
                u.num_classes = roster.num_classes;
                if (ju.contains("held_out_auc") && !ju["held_out_auc"].is_null()) {
                    u.held_out_auc = ju["held_out_auc"].get<double>();
                }
                v.units.push_back(std::move(u));
            }
            roster.voters.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid roster manifest: ") + e.what(), 0);
    }
    return roster;
}

}  // namespace holmes
