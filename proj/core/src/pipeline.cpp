#include "holmes/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "holmes/data.hpp"
#include "holmes/errors.hpp"
#include "holmes/evaluation.hpp"
#include "holmes/model_io.hpp"
#include "holmes/parallel.hpp"
#include "holmes/rng.hpp"
#include "holmes/serialize.hpp"
#include "json_internal.hpp"

namespace holmes {

namespace fs = std::filesystem;
using detail::get_or;
using detail::Json;
using detail::number;
using detail::require_known_keys;

// ---------------------------------------------------------------------------
// configuration

std::string to_string(TargetMode mode) {
    switch (mode) {
        case TargetMode::random: return "random";
        case TargetMode::all: return "all";
        case TargetMode::untargeted: return "untargeted";
    }
    return "unknown";
}

TargetMode target_mode_from_string(const std::string& name) {
    if (name == "random") return TargetMode::random;
    if (name == "all") return TargetMode::all;
    if (name == "untargeted") return TargetMode::untargeted;
    throw ArgumentError("unknown target mode '" + name + "' (expected random, all or untargeted)");
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

AttackSetSpec attack_set_from(const Json& j) {
    require_known_keys(j, {"name", "attack", "targets", "count"}, "attack set");
    AttackSetSpec s;
    s.name = j.at("name").get<std::string>();
    if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos) {
        throw ArgumentError("attack set name '" + s.name + "' must be a non-empty word");
    }
    s.attack = detail::attack_config_from(j.at("attack"));
    s.targets = target_mode_from_string(get_or<std::string>(j, "targets", "random"));
    s.count = get_or<std::size_t>(j, "count", 0);
    if (s.attack.target) throw ArgumentError("attack set '" + s.name + "' fixes a target; use the targets mode");
    if (s.targets == TargetMode::untargeted && s.attack.family == AttackFamily::jsma) {
        throw UnsupportedModeError("attack set '" + s.name + "': JSMA supports targeted mode only");
    }
    if (s.attack.family == AttackFamily::adaptive_cw) {
        throw ArgumentError("attack set '" + s.name + "': the adaptive attack runs in its own stage");
    }
    return s;
}

Json to_json(const AttackSetSpec& s) {
    return {{"name", s.name}, {"attack", detail::to_json(s.attack)}, {"targets", to_string(s.targets)}, {"count", s.count}};
}

void check_unique_names(const std::vector<AttackSetSpec>& sets, const std::string& where) {
    std::set<std::string> seen;
    for (const auto& s : sets) {
        if (!seen.insert(s.name).second) throw ArgumentError("duplicate attack set '" + s.name + "' in " + where);
    }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
    const Json j = detail::parse_json(text, "experiment config");
    try {
        require_known_keys(j,
                           {"name", "seed", "workers", "output_dir", "sidecar", "dataset", "victim", "detectors",
                            "evaluation", "adaptive", "kappa_sweep"},
                           "experiment config");
        if (!j.contains("seed")) throw ArgumentError("experiment config needs an explicit \"seed\"");
        ExperimentConfig c;
        c.name = get_or<std::string>(j, "name", c.name);
        c.seed = j.at("seed").get<std::uint64_t>();
        c.workers = get_or<std::size_t>(j, "workers", c.workers);
        if (c.workers == 0) throw ArgumentError("workers must be >= 1");
        c.output_dir = j.contains("output_dir") ? resolve(base_dir, j["output_dir"].get<std::string>()) : c.output_dir;
        c.sidecar = get_or(j, "sidecar", c.sidecar);

        if (j.contains("dataset")) {
            const Json& d = j["dataset"];
            require_known_keys(d,
                               {"kind", "images", "labels", "reference_images", "reference_labels", "limit",
                                "fractions", "classes", "per_class", "dims"},
                               "dataset");
            DatasetSpec& s = c.dataset;
            s.kind = get_or<std::string>(d, "kind", s.kind);
            if (s.kind != "mnist" && s.kind != "synthetic") throw ArgumentError("dataset kind must be mnist or synthetic");
            s.images = resolve(base_dir, get_or<std::string>(d, "images", ""));
            s.labels = resolve(base_dir, get_or<std::string>(d, "labels", ""));
            s.reference_images = resolve(base_dir, get_or<std::string>(d, "reference_images", ""));
            s.reference_labels = resolve(base_dir, get_or<std::string>(d, "reference_labels", ""));
            s.limit = get_or(d, "limit", s.limit);
            if (d.contains("fractions")) {
                const auto f = d["fractions"].get<std::vector<double>>();
                if (f.size() != 3) throw ArgumentError("dataset fractions need three entries");
                s.fractions = {f[0], f[1], f[2]};
            }
            s.classes = get_or(d, "classes", s.classes);
            s.per_class = get_or(d, "per_class", s.per_class);
            s.dims = get_or(d, "dims", s.dims);
            if (s.kind == "mnist" && (s.images.empty() || s.labels.empty())) {
                throw ArgumentError("mnist dataset needs images and labels paths");
            }
        }
        if (j.contains("victim")) {
            const Json& v = j["victim"];
            require_known_keys(v, {"train", "hidden", "max_shift", "decay_epochs", "decay_factor"}, "victim");
            if (v.contains("train")) c.victim.train = detail::train_config_from(v["train"], c.victim.train);
            c.victim.recipe.hidden = get_or(v, "hidden", c.victim.recipe.hidden);
            c.victim.recipe.max_shift = get_or(v, "max_shift", c.victim.recipe.max_shift);
            c.victim.recipe.decay_epochs = get_or(v, "decay_epochs", c.victim.recipe.decay_epochs);
            c.victim.recipe.decay_factor = get_or(v, "decay_factor", c.victim.recipe.decay_factor);
        }
        if (j.contains("detectors")) {
            const Json& d = j["detectors"];
            require_known_keys(d, {"benign", "attacks", "train", "hidden", "holdout_fraction", "roster"}, "detectors");
            c.detectors.benign = get_or(d, "benign", c.detectors.benign);
            for (const Json& a : get_or(d, "attacks", Json::array())) c.detectors.attacks.push_back(attack_set_from(a));
            if (d.contains("train")) c.detectors.train.train = detail::train_config_from(d["train"], c.detectors.train.train);
            c.detectors.train.hidden = get_or(d, "hidden", c.detectors.train.hidden);
            c.detectors.train.holdout_fraction = get_or(d, "holdout_fraction", c.detectors.train.holdout_fraction);
            if (d.contains("roster")) {
                const Json& r = d["roster"];
                require_known_keys(r, {"dedicated", "full", "top_k"}, "roster");
                c.detectors.roster.dedicated = get_or(r, "dedicated", c.detectors.roster.dedicated);
                c.detectors.roster.full = get_or(r, "full", c.detectors.roster.full);
                c.detectors.roster.top_k = get_or(r, "top_k", c.detectors.roster.top_k);
            }
        }
        if (j.contains("evaluation")) {
            const Json& e = j["evaluation"];
            require_known_keys(e, {"benign", "attacks"}, "evaluation");
            c.evaluation.benign = get_or(e, "benign", c.evaluation.benign);
            for (const Json& a : get_or(e, "attacks", Json::array())) c.evaluation.attacks.push_back(attack_set_from(a));
        }
        if (j.contains("adaptive")) {
            const Json& a = j["adaptive"];
            require_known_keys(a, {"enabled", "baseline", "count", "voters", "attack"}, "adaptive");
            AdaptiveSpec& s = c.adaptive;
            s.enabled = get_or(a, "enabled", true);
            s.baseline = get_or(a, "baseline", s.baseline);
            s.count = get_or(a, "count", s.count);
            s.voters = get_or(a, "voters", s.voters);
            AttackConfig base;
            base.family = AttackFamily::adaptive_cw;
            s.attack = a.contains("attack") ? detail::attack_config_from(a["attack"], base) : base;
            s.attack.family = AttackFamily::adaptive_cw;
            s.attack.kappa = 0.0;
            if (s.voters.empty()) throw ArgumentError("adaptive stage needs at least one voter to bypass");
        }
        if (j.contains("kappa_sweep")) {
            const Json& k = j["kappa_sweep"];
            require_known_keys(k,
                               {"enabled", "baseline", "kappas", "count", "attack", "retrain_kappa", "retrain_count",
                                "retrain_targets", "retrain_keep_original"},
                               "kappa_sweep");
            KappaSweepSpec& s = c.kappa_sweep;
            s.enabled = get_or(k, "enabled", true);
            s.baseline = get_or(k, "baseline", s.baseline);
            s.kappas = get_or(k, "kappas", s.kappas);
            s.count = get_or(k, "count", s.count);
            AttackConfig base;
            s.attack = k.contains("attack") ? detail::attack_config_from(k["attack"], base) : base;
            s.attack.family = AttackFamily::cw_l2;
            s.retrain_kappa = get_or(k, "retrain_kappa", s.retrain_kappa);
            s.retrain_count = get_or(k, "retrain_count", s.retrain_count);
            s.retrain_targets = get_or(k, "retrain_targets", s.retrain_targets);
            s.retrain_keep_original = get_or(k, "retrain_keep_original", s.retrain_keep_original);
            if (s.kappas.empty()) throw ArgumentError("kappa sweep needs at least one kappa");
            for (double kappa : s.kappas) {
                if (!(kappa >= 0.0)) throw ArgumentError("kappa values must be >= 0");
            }
        }
        check_unique_names(c.detectors.attacks, "detectors.attacks");
        check_unique_names(c.evaluation.attacks, "evaluation.attacks");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("experiment config: ") + e.what());
    }
}

ExperimentConfig load_config(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                        path.parent_path());
}

namespace {

Json config_json(const ExperimentConfig& c, bool with_run_settings) {
    Json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    if (with_run_settings) {
        j["workers"] = c.workers;
        j["output_dir"] = c.output_dir.string();
    }
    j["sidecar"] = c.sidecar;
    const DatasetSpec& d = c.dataset;
    j["dataset"] = {{"kind", d.kind},
                    {"images", d.images.string()},
                    {"labels", d.labels.string()},
                    {"reference_images", d.reference_images.string()},
                    {"reference_labels", d.reference_labels.string()},
                    {"limit", d.limit},
                    {"fractions", d.fractions},
                    {"classes", d.classes},
                    {"per_class", d.per_class},
                    {"dims", d.dims}};
    Json victim_train = detail::to_json(c.victim.train);
    victim_train.erase("loss");
    victim_train.erase("seed");
    j["victim"] = {{"train", victim_train},
                   {"hidden", c.victim.recipe.hidden},
                   {"max_shift", c.victim.recipe.max_shift},
                   {"decay_epochs", c.victim.recipe.decay_epochs},
                   {"decay_factor", c.victim.recipe.decay_factor}};
    Json det_attacks = Json::array();
    for (const auto& s : c.detectors.attacks) det_attacks.push_back(to_json(s));
    Json det_train = detail::to_json(c.detectors.train.train);
    det_train.erase("loss");
    det_train.erase("seed");
    j["detectors"] = {{"benign", c.detectors.benign},
                      {"attacks", det_attacks},
                      {"train", det_train},
                      {"hidden", c.detectors.train.hidden},
                      {"holdout_fraction", c.detectors.train.holdout_fraction},
                      {"roster",
                       {{"dedicated", c.detectors.roster.dedicated},
                        {"full", c.detectors.roster.full},
                        {"top_k", c.detectors.roster.top_k}}}};
    Json eval_attacks = Json::array();
    for (const auto& s : c.evaluation.attacks) eval_attacks.push_back(to_json(s));
    j["evaluation"] = {{"benign", c.evaluation.benign}, {"attacks", eval_attacks}};
    j["adaptive"] = {{"enabled", c.adaptive.enabled},
                     {"baseline", c.adaptive.baseline},
                     {"count", c.adaptive.count},
                     {"voters", c.adaptive.voters},
                     {"attack", detail::to_json(c.adaptive.attack)}};
    j["kappa_sweep"] = {{"enabled", c.kappa_sweep.enabled},
                        {"baseline", c.kappa_sweep.baseline},
                        {"kappas", c.kappa_sweep.kappas},
                        {"count", c.kappa_sweep.count},
                        {"attack", detail::to_json(c.kappa_sweep.attack)},
                        {"retrain_kappa", c.kappa_sweep.retrain_kappa},
                        {"retrain_count", c.kappa_sweep.retrain_count},
                        {"retrain_targets", c.kappa_sweep.retrain_targets},
                        {"retrain_keep_original", c.kappa_sweep.retrain_keep_original}};
    return j;
}

std::string sha256_of(const std::string& text) {
    return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg, true).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) { return sha256_of(config_json(cfg, false).dump()); }

// ---------------------------------------------------------------------------
// stages

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::train_victim: return "train-victim";
        case Stage::gen_attacks: return "gen-attacks";
        case Stage::train_detectors: return "train-detectors";
        case Stage::evaluate: return "evaluate";
        case Stage::adaptive: return "adaptive";
        case Stage::kappa_sweep: return "kappa-sweep";
        case Stage::stats: return "stats";
    }
    return "unknown";
}

Stage stage_from_string(const std::string& name) {
    for (Stage s : kAllStages) {
        if (to_string(s) == name) return s;
    }
    throw ArgumentError("unknown stage '" + name + "'");
}

std::vector<Stage> stage_dependencies(Stage stage) {
    switch (stage) {
        case Stage::train_victim: return {};
        case Stage::gen_attacks: return {Stage::train_victim};
        case Stage::train_detectors: return {Stage::gen_attacks};
        case Stage::evaluate:
        case Stage::adaptive:
        case Stage::kappa_sweep: return {Stage::train_detectors};
        case Stage::stats: return {Stage::gen_attacks};
    }
    return {};
}

SeedPlan SeedPlan::from(std::uint64_t master) {
    SeedPlan p;
    p.master = master;
    p.data = Rng::derive(master, 1);
    p.split = Rng::derive(master, 2);
    p.victim = Rng::derive(master, 3);
    p.targets = Rng::derive(master, 4);
    p.detectors = Rng::derive(master, 5);
    return p;
}

namespace {

using Clock = std::chrono::steady_clock;

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Json read_json(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return detail::parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                              path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

bool is_downstream(Stage candidate, Stage changed) {
    for (Stage dep : stage_dependencies(candidate)) {
        if (dep == changed || is_downstream(dep, changed)) return true;
    }
    return false;
}

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    template <typename... Args>
    void operator()(const Args&... args) {
        if (!out_) return;
        std::ostringstream line;
        (line << ... << args);
        std::lock_guard lock(mutex_);
        *out_ << line.str() << std::endl;
    }

private:
    std::ostream* out_;
    std::mutex mutex_;
};

// --- data ------------------------------------------------------------------

struct Data {
    Dataset full;
    Split parts;
    std::optional<Dataset> reference;
    std::map<std::size_t, std::size_t> pool_position;  // sample id -> index in detector_pool
};

Data load_data(const ExperimentConfig& cfg, const SeedPlan& seeds) {
    Data d;
    const DatasetSpec& s = cfg.dataset;
    if (s.kind == "synthetic") {
        d.full = synth_dataset(s.classes, s.per_class, s.dims, seeds.data);
        if (s.limit > 0 && s.limit < d.full.size()) {
            std::vector<std::size_t> keep(s.limit);
            for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
            d.full = subset(d.full, keep);
        }
    } else {
        d.full = load_idx(s.images, s.labels, s.limit);
        if (!s.reference_images.empty() && !s.reference_labels.empty()) {
            d.reference = load_idx(s.reference_images, s.reference_labels);
        }
    }
    d.parts = split(d.full, s.fractions, seeds.split);
    for (std::size_t i = 0; i < d.parts.detector_pool.size(); ++i) d.pool_position[d.parts.detector_pool.ids[i]] = i;
    return d;
}

const Tensor& pool_image(const Data& d, std::size_t sample_id) {
    const auto it = d.pool_position.find(sample_id);
    if (it == d.pool_position.end()) {
        throw StructuralError("sample id " + std::to_string(sample_id) + " is not in the detector pool");
    }
    return d.parts.detector_pool.images[it->second];
}

// --- attack jobs -----------------------------------------------------------

struct Job {
    std::size_t sample_id = 0;
    std::optional<std::size_t> target;
};

std::size_t random_target(std::uint64_t seed, std::size_t sample_id, std::size_t label, std::size_t k) {
    Rng rng(Rng::derive(seed, sample_id));
    const auto r = static_cast<std::size_t>(rng.below(k - 1));
    return (label + 1 + r) % k;
}

std::vector<Job> make_jobs(const std::vector<std::size_t>& ids, const std::vector<std::size_t>& labels, TargetMode mode,
                           std::size_t count, std::size_t k, std::uint64_t target_seed) {
    const std::size_t n = count == 0 ? ids.size() : std::min(count, ids.size());
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < n; ++i) {
        switch (mode) {
            case TargetMode::untargeted: jobs.push_back({ids[i], std::nullopt}); break;
            case TargetMode::random: jobs.push_back({ids[i], random_target(target_seed, ids[i], labels[i], k)}); break;
            case TargetMode::all:
                for (std::size_t t = 0; t < k; ++t) {
                    if (t != labels[i]) jobs.push_back({ids[i], t});
                }
                break;
        }
    }
    return jobs;
}

std::vector<AttackRecord> run_jobs(const std::string& set, const std::vector<Job>& jobs, const AttackConfig& base,
                                   const VictimModel& model, const Data& data, std::size_t workers, Logger& log,
                                   const DetectorHandles& detectors = {}) {
    std::vector<AttackRecord> out(jobs.size());
    std::atomic<std::size_t> done{0};
    const std::size_t report_every = std::max<std::size_t>(1, jobs.size() / 10);
    const auto start = Clock::now();
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        AttackConfig cfg = base;
        cfg.target = jobs[i].target;
        AttackRecord& rec = out[i];
        rec.set = set;
        rec.sample_id = jobs[i].sample_id;
        rec.family = cfg.family;
        rec.kappa = cfg.kappa;
        rec.result = run_attack(model, pool_image(data, jobs[i].sample_id), cfg, detectors);
        const std::size_t n = ++done;
        if (n % report_every == 0 || n == jobs.size()) {
            log("  ", set, ": ", n, "/", jobs.size(), " (",
                std::chrono::duration<double>(Clock::now() - start).count(), " s)");
        }
    });
    return out;
}

std::vector<Tensor> successful(const std::vector<AttackRecord>& records) {
    std::vector<Tensor> out;
    for (const auto& r : records) {
        if (r.result.success) out.push_back(r.result.adversarial);
    }
    return out;
}

double success_rate(const std::vector<AttackRecord>& records) {
    if (records.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& r : records) ok += r.result.success ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

double mean_noise(const std::vector<AttackRecord>& records, Metric metric) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
        if (!r.result.success) continue;
        sum += r.result.noise.get(metric);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<Logit> logits_of(const VictimModel& model, const std::vector<Tensor>& xs) {
    std::vector<Logit> out;
    out.reserve(xs.size());
    for (const Tensor& x : xs) out.push_back(logits(model, x));
    return out;
}

Json policy_rates(const DetectorRoster& roster, const std::vector<Logit>& ys) {
    Json j;
    for (Policy p : kAllPolicies) j[to_string(p)] = ys.empty() ? Json(nullptr) : Json(flag_rate(roster, p, ys));
    return j;
}

// --- samples ---------------------------------------------------------------

struct Samples {
    std::vector<std::size_t> train_benign_ids, train_benign_labels;
    std::vector<std::size_t> eval_benign_ids, eval_benign_labels;
};

Samples read_samples(const RunLayout& layout) {
    const Json j = read_json(layout.samples());
    Samples s;
    s.train_benign_ids = j.at("detector_train_benign").at("ids").get<std::vector<std::size_t>>();
    s.train_benign_labels = j.at("detector_train_benign").at("labels").get<std::vector<std::size_t>>();
    s.eval_benign_ids = j.at("evaluation_benign").at("ids").get<std::vector<std::size_t>>();
    s.eval_benign_labels = j.at("evaluation_benign").at("labels").get<std::vector<std::size_t>>();
    return s;
}

std::vector<Tensor> images_of(const Data& data, const std::vector<std::size_t>& ids) {
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(pool_image(data, id));
    return out;
}

// --- status ------------------------------------------------------------------

class Status {
public:
    Status(const RunLayout& layout, std::string hash) : layout_(layout), hash_(std::move(hash)) {
        if (fs::exists(layout_.status())) json_ = read_json(layout_.status());
        if (!json_.is_object()) json_ = Json::object();
        if (!json_.contains("stages")) json_["stages"] = Json::object();
    }

    void require_complete(Stage dep) const {
        const std::string name = to_string(dep);
        const Json& stages = json_["stages"];
        if (!stages.contains(name)) throw Error("prerequisite stage '" + name + "' has not run");
        const Json& s = stages[name];
        if (s.value("state", "") != "complete") {
            throw Error("prerequisite stage '" + name + "' is " + s.value("state", "unknown"));
        }
        if (s.value("config_hash", "") != hash_) {
            throw Error("prerequisite stage '" + name + "' ran with a different config");
        }
    }

    void begin(Stage stage) {
        Json& stages = json_["stages"];
        for (Stage other : kAllStages) {
            const std::string name = to_string(other);
            if (other != stage && is_downstream(other, stage) && stages.contains(name)) stages[name]["state"] = "stale";
        }
        stages[to_string(stage)] = {{"state", "running"}, {"config_hash", hash_}};
        save();
    }

    void finish(Stage stage, double seconds) {
        json_["stages"][to_string(stage)] = {{"state", "complete"}, {"config_hash", hash_}, {"wall_seconds", seconds}};
        save();
    }

    void fail(Stage stage, double seconds, const std::string& cause) {
        json_["stages"][to_string(stage)] = {{"state", "failed"},
                                             {"config_hash", hash_},
                                             {"wall_seconds", seconds},
                                             {"error", cause},
                                             {"outputs", "stale"}};
        save();
    }

    const Json& json() const { return json_; }

private:
    void save() {
        fs::create_directories(layout_.root);
        write_json(layout_.status(), json_);
    }

    RunLayout layout_;
    std::string hash_;
    Json json_;
};

// --- report ------------------------------------------------------------------

void write_report(const ExperimentConfig& cfg, const RunLayout& layout, const Status& status, const Data* data) {
    const SeedPlan seeds = SeedPlan::from(cfg.seed);
    Json r;
    r["schema"] = "holmes.report/1";
    r["name"] = cfg.name;
    r["config_hash"] = config_hash(cfg);
    r["config"] = config_json(cfg, true);
    r["seeds"] = {{"master", seeds.master},
                  {"data", seeds.data},
                  {"split", seeds.split},
                  {"victim", seeds.victim},
                  {"targets", seeds.targets},
                  {"detectors", seeds.detectors}};
    if (data) {
        Json ds = {{"name", data->full.name},
                   {"checksum", data->full.source_checksum},
                   {"size", data->full.size()},
                   {"num_classes", data->full.num_classes},
                   {"victim_train", data->parts.train.size()},
                   {"victim_test", data->parts.test.size()},
                   {"detector_pool", data->parts.detector_pool.size()}};
        if (data->reference) {
            ds["reference"] = {{"name", data->reference->name},
                               {"checksum", data->reference->source_checksum},
                               {"size", data->reference->size()}};
        }
        r["dataset"] = ds;
    }
    Json stages = Json::object();
    for (const auto& [name, s] : status.json()["stages"].items()) {
        stages[name] = {{"state", s.value("state", "")}, {"wall_seconds", s.contains("wall_seconds") ? s["wall_seconds"] : Json(nullptr)}};
    }
    r["stages"] = stages;

    Json ids = Json::object();
    std::set<std::size_t> training_ids, evaluation_ids;
    if (fs::exists(layout.victim_summary())) {
        const Json v = read_json(layout.victim_summary());
        r["victim"] = {{"train_accuracy", v.at("train_accuracy")},
                       {"test_accuracy", v.at("test_accuracy")},
                       {"reference_test_accuracy", v.at("reference_test_accuracy")}};
        ids["victim_train"] = v.at("train_ids");
        ids["victim_test"] = v.at("test_ids");
    }
    if (fs::exists(layout.samples())) {
        const Json s = read_json(layout.samples());
        ids["detector_train_benign"] = s.at("detector_train_benign").at("ids");
        ids["evaluation_benign"] = s.at("evaluation_benign").at("ids");
        for (std::size_t id : s.at("detector_train_benign").at("ids").get<std::vector<std::size_t>>()) training_ids.insert(id);
        for (std::size_t id : s.at("evaluation_benign").at("ids").get<std::vector<std::size_t>>()) evaluation_ids.insert(id);
        ids["attack_origins"] = s.at("attack_origins");
        for (const auto& [set, list] : s.at("attack_origins").items()) {
            auto& target = set.rfind("train_", 0) == 0 ? training_ids : evaluation_ids;
            for (std::size_t id : list.get<std::vector<std::size_t>>()) target.insert(id);
        }
        std::vector<std::size_t> overlap;
        std::set_intersection(training_ids.begin(), training_ids.end(), evaluation_ids.begin(), evaluation_ids.end(),
                              std::back_inserter(overlap));
        r["disjoint_training_and_evaluation"] = overlap.empty();
    }
    r["sample_ids"] = ids;
    if (fs::exists(layout.detectors_summary())) r["detectors"] = read_json(layout.detectors_summary());
    write_json(layout.report(), r);
}

// --- stage bodies ----------------------------------------------------------

struct Context {
    const ExperimentConfig& cfg;
    RunLayout layout;
    SeedPlan seeds;
    Data data;
    Logger& log;
};

void stage_train_victim(Context& ctx) {
    TrainConfig train = ctx.cfg.victim.train;
    train.seed = ctx.seeds.victim;
    train.loss = LossKind::cross_entropy;
    ctx.log("train-victim: ", ctx.data.parts.train.size(), " training images, ", train.epochs, " epochs");
    VictimTraining vt = train_victim(ctx.data.parts.train, ctx.data.parts.test, train, ctx.cfg.victim.recipe);
    std::optional<double> reference;
    if (ctx.data.reference) reference = accuracy(vt.model, *ctx.data.reference);
    save_victim(vt.model, ctx.layout.victim_model());
    Json j;
    j["train_accuracy"] = vt.train_accuracy;
    j["test_accuracy"] = number(vt.test_accuracy);
    j["reference_test_accuracy"] = reference ? Json(*reference) : Json(nullptr);
    j["epoch_loss"] = vt.history.epoch_loss;
    j["train_ids"] = ctx.data.parts.train.ids;
    j["test_ids"] = ctx.data.parts.test.ids;
    write_json(ctx.layout.victim_summary(), j);
    ctx.log("train-victim: train accuracy ", vt.train_accuracy, ", test accuracy ", vt.test_accuracy,
            reference ? ", reference test accuracy " + std::to_string(*reference) : std::string());
}

void stage_gen_attacks(Context& ctx) {
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const Dataset& pool = ctx.data.parts.detector_pool;
    const std::size_t k = model.num_classes();

    std::vector<std::size_t> correct_ids, correct_labels;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (predict(model, pool.images[i]) == pool.labels[i]) {
            correct_ids.push_back(pool.ids[i]);
            correct_labels.push_back(pool.labels[i]);
        }
    }
    const std::size_t need = ctx.cfg.detectors.benign + ctx.cfg.evaluation.benign;
    if (correct_ids.size() < need) {
        throw ArgumentError("detector pool has " + std::to_string(correct_ids.size()) +
                            " correctly classified images, config needs " + std::to_string(need));
    }
    Samples s;
    const auto mid = static_cast<std::ptrdiff_t>(ctx.cfg.detectors.benign);
    const auto end = static_cast<std::ptrdiff_t>(need);
    s.train_benign_ids.assign(correct_ids.begin(), correct_ids.begin() + mid);
    s.train_benign_labels.assign(correct_labels.begin(), correct_labels.begin() + mid);
    s.eval_benign_ids.assign(correct_ids.begin() + mid, correct_ids.begin() + end);
    s.eval_benign_labels.assign(correct_labels.begin() + mid, correct_labels.begin() + end);

    Json origins = Json::object();
    Json summary = Json::object();
    auto generate = [&](const AttackSetSpec& spec, bool training) {
        const auto& ids = training ? s.train_benign_ids : s.eval_benign_ids;
        const auto& labels = training ? s.train_benign_labels : s.eval_benign_labels;
        const std::vector<Job> jobs = make_jobs(ids, labels, spec.targets, spec.count, k, ctx.seeds.targets);
        const std::string key = (training ? "train_" : "eval_") + spec.name;
        ctx.log("gen-attacks: ", key, " (", to_string(spec.attack.family), ", ", jobs.size(), " runs)");
        const auto records = run_jobs(spec.name, jobs, spec.attack, model, ctx.data, ctx.cfg.workers, ctx.log);
        write_attack_records(training ? ctx.layout.training_attacks(spec.name) : ctx.layout.evaluation_attacks(spec.name),
                             records, ctx.cfg.sidecar);
        std::vector<std::size_t> origin_ids;
        for (const Job& j : jobs) {
            if (origin_ids.empty() || origin_ids.back() != j.sample_id) origin_ids.push_back(j.sample_id);
        }
        origins[key] = origin_ids;
        summary[key] = {{"runs", records.size()},
                        {"success_rate", success_rate(records)},
                        {"mean_noise",
                         {{"l0", number(mean_noise(records, Metric::l0))},
                          {"l2", number(mean_noise(records, Metric::l2))},
                          {"linf", number(mean_noise(records, Metric::linf))}}}};
        ctx.log("gen-attacks: ", key, " success rate ", success_rate(records));
    };
    for (const auto& spec : ctx.cfg.detectors.attacks) generate(spec, true);
    for (const auto& spec : ctx.cfg.evaluation.attacks) generate(spec, false);

    Json j;
    j["detector_train_benign"] = {{"ids", s.train_benign_ids}, {"labels", s.train_benign_labels}};
    j["evaluation_benign"] = {{"ids", s.eval_benign_ids}, {"labels", s.eval_benign_labels}};
    j["attack_origins"] = origins;
    j["attack_summary"] = summary;
    write_json(ctx.layout.samples(), j);
}

std::vector<DetectorSample> training_samples(const Context& ctx, const VictimModel& model, const Samples& s,
                                             const std::vector<std::vector<AttackRecord>>& sets) {
    std::vector<Tensor> adversarial;
    for (const auto& records : sets) {
        for (Tensor& x : successful(records)) adversarial.push_back(std::move(x));
    }
    return build_training_set(model, images_of(ctx.data, s.train_benign_ids), adversarial);
}

DetectorTrainConfig detector_config(const Context& ctx) {
    DetectorTrainConfig dc = ctx.cfg.detectors.train;
    dc.train.seed = ctx.seeds.detectors;
    dc.train.loss = LossKind::binary_cross_entropy;
    return dc;
}

Json roster_summary(const DetectorRoster& roster, const std::vector<DetectorSample>& samples) {
    Json voters = Json::array();
    for (const Voter& v : roster.voters) {
        Json units = Json::array();
        for (const DetectorUnit& u : v.units) {
            units.push_back({{"transform", u.transform.name()}, {"held_out_auc", number(u.held_out_auc)}});
        }
        voters.push_back({{"name", v.name}, {"units", units}});
    }
    std::size_t adversarial = 0;
    for (const auto& s : samples) adversarial += static_cast<std::size_t>(s.label);
    return {{"samples", samples.size()},
            {"benign", samples.size() - adversarial},
            {"adversarial", adversarial},
            {"voters", voters}};
}

void stage_train_detectors(Context& ctx) {
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const Samples s = read_samples(ctx.layout);
    std::vector<std::vector<AttackRecord>> sets;
    for (const auto& spec : ctx.cfg.detectors.attacks) sets.push_back(read_attack_records(ctx.layout.training_attacks(spec.name)));
    const auto samples = training_samples(ctx, model, s, sets);
    ctx.log("train-detectors: ", samples.size(), " samples");
    const DetectorRoster roster =
        train_roster(samples, model.num_classes(), ctx.cfg.detectors.roster, detector_config(ctx), ctx.cfg.workers);
    if (fs::exists(ctx.layout.roster_dir())) fs::remove_all(ctx.layout.roster_dir());
    save_roster(roster, ctx.layout.roster_dir());
    write_json(ctx.layout.detectors_summary(), roster_summary(roster, samples));
}

DetectorRoster load_run_roster(const fs::path& dir) { return load_roster(dir / "roster.json"); }

void stage_evaluate(Context& ctx) {
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const DetectorRoster roster = load_run_roster(ctx.layout.roster_dir());
    const Samples s = read_samples(ctx.layout);
    std::set<std::size_t> train_ids(s.train_benign_ids.begin(), s.train_benign_ids.end());
    for (std::size_t id : s.eval_benign_ids) {
        if (train_ids.count(id)) throw StructuralError("evaluation sample " + std::to_string(id) + " was used in training");
    }
    const std::vector<Logit> benign = logits_of(model, images_of(ctx.data, s.eval_benign_ids));
    std::vector<std::pair<std::string, std::vector<Logit>>> adversarial;
    for (const auto& spec : ctx.cfg.evaluation.attacks) {
        const auto records = read_attack_records(ctx.layout.evaluation_attacks(spec.name));
        for (const auto& r : records) {
            if (train_ids.count(r.sample_id)) {
                throw StructuralError("evaluation attack origin " + std::to_string(r.sample_id) + " was used in training");
            }
        }
        auto ys = logits_of(model, successful(records));
        if (ys.empty()) {
            ctx.log("evaluate: skipping ", spec.name, " (no successful examples)");
            continue;
        }
        adversarial.emplace_back(spec.name, std::move(ys));
    }
    const MetricsReport report = evaluate(roster, benign, adversarial);
    write_text(ctx.layout.metrics(), metrics_to_json(report));
    ctx.log("evaluate: FAR any/major/all ", report.far.at(Policy::any), " / ", report.far.at(Policy::major), " / ",
            report.far.at(Policy::all));
    for (const auto& m : report.attacks) {
        ctx.log("evaluate: ", m.attack, " TAR any/major/all ", m.tar.at(Policy::any), " / ", m.tar.at(Policy::major),
                " / ", m.tar.at(Policy::all), ", AUC ", m.auc);
    }
}

std::vector<AttackRecord> baseline_records(const Context& ctx, const std::string& set, std::size_t count) {
    auto records = read_attack_records(ctx.layout.evaluation_attacks(set));
    for (const auto& r : records) {
        if (!r.result.target) throw ArgumentError("baseline set '" + set + "' must be targeted");
    }
    if (count < records.size()) records.resize(count);
    if (records.empty()) throw ArgumentError("baseline set '" + set + "' is empty");
    return records;
}

std::vector<Job> jobs_from(const std::vector<AttackRecord>& records) {
    std::vector<Job> jobs;
    for (const auto& r : records) jobs.push_back({r.sample_id, r.result.target});
    return jobs;
}

void stage_adaptive(Context& ctx) {
    const AdaptiveSpec& spec = ctx.cfg.adaptive;
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const DetectorRoster roster = load_run_roster(ctx.layout.roster_dir());
    const auto baseline = baseline_records(ctx, spec.baseline, spec.count);

    DetectorHandles handles;
    DetectorRoster remaining{roster.num_classes, {}};
    for (const Voter& v : roster.voters) {
        if (std::find(spec.voters.begin(), spec.voters.end(), v.name) != spec.voters.end()) {
            handles.push_back(&v);
        } else {
            remaining.voters.push_back(v);
        }
    }
    if (handles.size() != spec.voters.size()) throw ArgumentError("adaptive stage names a voter the roster lacks");

    ctx.log("adaptive: bypassing ", handles.size(), " voter(s) on ", baseline.size(), " pairs");
    const auto records = run_jobs("adaptive", jobs_from(baseline), spec.attack, model, ctx.data, ctx.cfg.workers,
                                  ctx.log, handles);
    write_attack_records(ctx.layout.root / "attacks" / "adaptive.jsonl", records, ctx.cfg.sidecar);

    std::size_t fool_network = 0, fool_detectors = 0;
    for (const auto& r : records) {
        fool_network += r.result.achieved_label == r.result.target ? 1 : 0;
        bool all = !r.result.bypassed.empty();
        for (bool b : r.result.bypassed) all = all && b;
        fool_detectors += all ? 1 : 0;
    }
    const double n = static_cast<double>(records.size());
    const auto ys = logits_of(model, successful(records));
    Json j;
    j["targeted_voters"] = spec.voters;
    j["remaining_voters"] = Json::array();
    for (const Voter& v : remaining.voters) j["remaining_voters"].push_back(v.name);
    j["pairs"] = records.size();
    j["baseline"] = {{"set", spec.baseline},
                     {"success_rate", success_rate(baseline)},
                     {"mean_l2", number(mean_noise(baseline, Metric::l2))}};
    j["adaptive"] = {{"fool_network_rate", static_cast<double>(fool_network) / n},
                     {"fool_detectors_rate", static_cast<double>(fool_detectors) / n},
                     {"success_rate", success_rate(records)},
                     {"successes", ys.size()},
                     {"mean_l2", number(mean_noise(records, Metric::l2))}};
    const double ratio = mean_noise(records, Metric::l2) / mean_noise(baseline, Metric::l2);
    j["noise_ratio"] = number(ratio);
    j["tar_full_roster"] = policy_rates(roster, ys);
    j["tar_remaining_voters"] = remaining.voters.empty() ? Json(nullptr) : policy_rates(remaining, ys);
    write_json(ctx.layout.adaptive(), j);
    ctx.log("adaptive: success rate ", success_rate(records), " vs baseline ", success_rate(baseline),
            ", noise ratio ", ratio);
}

void stage_kappa_sweep(Context& ctx) {
    const KappaSweepSpec& spec = ctx.cfg.kappa_sweep;
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const DetectorRoster roster = load_run_roster(ctx.layout.roster_dir());
    const auto baseline = baseline_records(ctx, spec.baseline, spec.count);
    const std::vector<Job> pairs = jobs_from(baseline);
    const Samples s = read_samples(ctx.layout);
    const std::size_t k = model.num_classes();

    std::vector<std::vector<Logit>> per_kappa;
    Json rows = Json::array();
    for (double kappa : spec.kappas) {
        AttackConfig cfg = spec.attack;
        cfg.kappa = kappa;
        std::ostringstream name;
        name << "kappa_" << kappa;
        ctx.log("kappa-sweep: kappa ", kappa);
        const auto records = run_jobs(name.str(), pairs, cfg, model, ctx.data, ctx.cfg.workers, ctx.log);
        write_attack_records(ctx.layout.root / "attacks" / (name.str() + ".jsonl"), records, ctx.cfg.sidecar);
        per_kappa.push_back(logits_of(model, successful(records)));
        rows.push_back({{"kappa", kappa},
                        {"pairs", records.size()},
                        {"successes", per_kappa.back().size()},
                        {"success_rate", success_rate(records)},
                        {"mean_l2", number(mean_noise(records, Metric::l2))},
                        {"tar", policy_rates(roster, per_kappa.back())}});
    }

    // Countermeasure: retrain with high-confidence CW-L2 examples.
    std::vector<Job> jobs;
    const std::size_t originals = spec.retrain_count == 0 ? s.train_benign_ids.size()
                                                          : std::min(spec.retrain_count, s.train_benign_ids.size());
    for (std::size_t i = 0; i < originals; ++i) {
        const std::size_t id = s.train_benign_ids[i];
        const std::size_t label = s.train_benign_labels[i];
        // Consecutive labels after a random first target, skipping the true label.
        const std::size_t first = random_target(ctx.seeds.targets, id, label, k);
        const std::size_t first_step = (first + k - label - 1) % k;
        for (std::size_t t = 0; t < std::min(spec.retrain_targets, k - 1); ++t) {
            jobs.push_back({id, (label + 1 + (first_step + t) % (k - 1)) % k});
        }
    }
    AttackConfig high = spec.attack;
    high.kappa = spec.retrain_kappa;
    ctx.log("kappa-sweep: retraining set at kappa ", spec.retrain_kappa, " (", jobs.size(), " runs)");
    const auto high_records = run_jobs("retrain", jobs, high, model, ctx.data, ctx.cfg.workers, ctx.log);
    write_attack_records(ctx.layout.root / "attacks" / "train_retrain.jsonl", high_records, ctx.cfg.sidecar);

    std::vector<std::vector<AttackRecord>> sets{high_records};
    for (const auto& a : ctx.cfg.detectors.attacks) {
        if (a.attack.family == AttackFamily::cw_l2 && !spec.retrain_keep_original) continue;
        sets.push_back(read_attack_records(ctx.layout.training_attacks(a.name)));
    }
    const auto samples = training_samples(ctx, model, s, sets);
    const DetectorRoster retrained =
        train_roster(samples, k, ctx.cfg.detectors.roster, detector_config(ctx), ctx.cfg.workers);
    if (fs::exists(ctx.layout.retrained_roster_dir())) fs::remove_all(ctx.layout.retrained_roster_dir());
    save_roster(retrained, ctx.layout.retrained_roster_dir());

    for (std::size_t i = 0; i < rows.size(); ++i) rows[i]["retrained_tar"] = policy_rates(retrained, per_kappa[i]);
    const auto benign = logits_of(model, images_of(ctx.data, s.eval_benign_ids));
    Json j;
    j["pairs_from"] = spec.baseline;
    j["retrain_kappa"] = spec.retrain_kappa;
    j["retrain_samples"] = roster_summary(retrained, samples);
    j["rows"] = rows;
    j["far"] = {{"original", policy_rates(roster, benign)}, {"retrained", policy_rates(retrained, benign)}};
    write_json(ctx.layout.kappa_sweep(), j);
    for (const auto& row : rows) {
        ctx.log("kappa-sweep: kappa ", row["kappa"].get<double>(), " TAR(major) ",
                row["tar"]["major"].is_null() ? -1.0 : row["tar"]["major"].get<double>(), " retrained ",
                row["retrained_tar"]["major"].is_null() ? -1.0 : row["retrained_tar"]["major"].get<double>());
    }
}

void stage_stats(Context& ctx) {
    const VictimModel model = load_victim(ctx.layout.victim_model());
    const Samples s = read_samples(ctx.layout);
    Json j;
    const auto benign = logits_of(model, images_of(ctx.data, s.eval_benign_ids));
    j["benign"] = detail::to_json(logit_stats(benign), true);
    Json sets = Json::object();
    auto add = [&](const std::string& key, const fs::path& path) {
        const auto ys = logits_of(model, successful(read_attack_records(path)));
        if (!ys.empty()) sets[key] = detail::to_json(logit_stats(ys), true);
    };
    for (const auto& spec : ctx.cfg.detectors.attacks) add("train_" + spec.name, ctx.layout.training_attacks(spec.name));
    for (const auto& spec : ctx.cfg.evaluation.attacks) add("eval_" + spec.name, ctx.layout.evaluation_attacks(spec.name));
    j["adversarial"] = sets;
    write_json(ctx.layout.stats(), j);
    ctx.log("stats: benign mean max ", j["benign"]["mean_max"], ", mean variance ", j["benign"]["mean_variance"]);
}

}  // namespace

void run_stage(const ExperimentConfig& cfg, Stage stage, std::ostream* log_stream) {
    Logger log(log_stream);
    const RunLayout layout{cfg.output_dir};
    Status status(layout, config_hash(cfg));
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
    try {
        for (Stage dep : stage_dependencies(stage)) status.require_complete(dep);
    } catch (const Error& e) {
        throw StageError(to_string(stage), e.what());
    }
    status.begin(stage);
    std::optional<Data> data;
    try {
        const SeedPlan seeds = SeedPlan::from(cfg.seed);
        data = load_data(cfg, seeds);
        Context ctx{cfg, layout, seeds, *data, log};
        switch (stage) {
            case Stage::train_victim: stage_train_victim(ctx); break;
            case Stage::gen_attacks: stage_gen_attacks(ctx); break;
            case Stage::train_detectors: stage_train_detectors(ctx); break;
            case Stage::evaluate: stage_evaluate(ctx); break;
            case Stage::adaptive: stage_adaptive(ctx); break;
            case Stage::kappa_sweep: stage_kappa_sweep(ctx); break;
            case Stage::stats: stage_stats(ctx); break;
        }
    } catch (const std::exception& e) {
        status.fail(stage, elapsed(), e.what());
        try {
            write_report(cfg, layout, status, data ? &*data : nullptr);
        } catch (...) {
        }
        throw StageError(to_string(stage), e.what());
    }
    status.finish(stage, elapsed());
    write_report(cfg, layout, status, &*data);
    log(to_string(stage), ": done in ", elapsed(), " s");
}

void run_pipeline(const ExperimentConfig& cfg, std::ostream* log) {
    for (Stage stage : kAllStages) {
        if (stage == Stage::adaptive && !cfg.adaptive.enabled) continue;
        if (stage == Stage::kappa_sweep && !cfg.kappa_sweep.enabled) continue;
        run_stage(cfg, stage, log);
    }
}

}  // namespace holmes
