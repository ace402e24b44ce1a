#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "holmes/attacks.hpp"
#include "holmes/detectors.hpp"
#include "holmes/victim.hpp"

namespace holmes {

struct DatasetSpec {
    std::string kind = "mnist";  // "mnist" (IDX files) or "synthetic"
    std::filesystem::path images;
    std::filesystem::path labels;
    /// Optional second IDX pair used only to report an extra test accuracy.
    std::filesystem::path reference_images;
    std::filesystem::path reference_labels;
    std::size_t limit = 0;  // keep the first `limit` records (0: all)
    std::array<double, 3> fractions{0.625, 0.125, 0.25};  // victim train / victim test / detector pool

    // synthetic only
    std::size_t classes = 10;
    std::size_t per_class = 200;
    std::size_t dims = 64;
};

struct VictimSpec {
    TrainConfig train{0.1, 40, 32, 0, LossKind::cross_entropy};
    VictimRecipe recipe;
};

/// random: one target per original, drawn from the seed and sample id;
/// all: every label except the prediction; untargeted: no target.
enum class TargetMode { random, all, untargeted };

std::string to_string(TargetMode mode);
TargetMode target_mode_from_string(const std::string& name);

struct AttackSetSpec {
    std::string name;
    AttackConfig attack;
    TargetMode targets = TargetMode::random;
    std::size_t count = 0;  // originals used (0: every available benign example)
};

struct DetectorStageSpec {
    std::size_t benign = 100;  // correctly classified pool images used for training
    std::vector<AttackSetSpec> attacks;
    DetectorTrainConfig train;
    RosterSpec roster;
};

struct EvaluationSpec {
    std::size_t benign = 500;  // pool images disjoint from detector training
    std::vector<AttackSetSpec> attacks;
};

struct AdaptiveSpec {
    bool enabled = false;
    std::string baseline = "cw_l2";  // evaluation set whose (sample, target) pairs are reused
    std::size_t count = 50;
    std::vector<std::string> voters{"d_top9"};  // voters the attack must bypass
    AttackConfig attack;
};

struct KappaSweepSpec {
    bool enabled = false;
    std::string baseline = "cw_l2";
    std::vector<double> kappas{0, 2, 4, 6, 8, 10, 12};
    std::size_t count = 40;
    AttackConfig attack;
    /// Countermeasure: detectors retrained with CW-L2 examples at this kappa in
    /// place of the kappa-0 CW-L2 training sets.
    double retrain_kappa = 12.0;
    std::size_t retrain_count = 0;    // training originals attacked (0: all)
    std::size_t retrain_targets = 9;  // targets per training original
    bool retrain_keep_original = false;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::filesystem::path output_dir = "runs/experiment";
    bool sidecar = false;  // also write raw f64 tensors next to each attack file
    DatasetSpec dataset;
    VictimSpec victim;
    DetectorStageSpec detectors;
    EvaluationSpec evaluation;
    AdaptiveSpec adaptive;
    KappaSweepSpec kappa_sweep;
};

/// Relative dataset paths are resolved against `base_dir`. Unknown keys and a
/// missing top-level "seed" are errors.
ExperimentConfig parse_config(std::string_view json, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

/// SHA-256 of the canonical config without output_dir and workers, which do not
/// affect results.
std::string config_hash(const ExperimentConfig& cfg);

enum class Stage { train_victim, gen_attacks, train_detectors, evaluate, adaptive, kappa_sweep, stats };

inline constexpr std::array<Stage, 7> kAllStages{Stage::train_victim, Stage::gen_attacks, Stage::train_detectors,
                                                 Stage::evaluate,     Stage::adaptive,    Stage::kappa_sweep,
                                                 Stage::stats};

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);
std::vector<Stage> stage_dependencies(Stage stage);

/// Seeds derived from the master seed, one per consumer.
struct SeedPlan {
    std::uint64_t master = 0;
    std::uint64_t data = 0;
    std::uint64_t split = 0;
    std::uint64_t victim = 0;
    std::uint64_t targets = 0;
    std::uint64_t detectors = 0;

    static SeedPlan from(std::uint64_t master);
};

/// Output file names inside ExperimentConfig::output_dir.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path status() const { return root / "status.json"; }
    std::filesystem::path report() const { return root / "report.json"; }
    std::filesystem::path victim_model() const { return root / "victim.hnn"; }
    std::filesystem::path victim_summary() const { return root / "victim.json"; }
    std::filesystem::path samples() const { return root / "samples.json"; }
    std::filesystem::path training_attacks(const std::string& set) const {
        return root / "attacks" / ("train_" + set + ".jsonl");
    }
    std::filesystem::path evaluation_attacks(const std::string& set) const {
        return root / "attacks" / ("eval_" + set + ".jsonl");
    }
    std::filesystem::path roster_dir() const { return root / "detectors"; }
    std::filesystem::path detectors_summary() const { return root / "detectors.json"; }
    std::filesystem::path metrics() const { return root / "metrics.json"; }
    std::filesystem::path adaptive() const { return root / "adaptive.json"; }
    std::filesystem::path kappa_sweep() const { return root / "kappa_sweep.json"; }
    std::filesystem::path retrained_roster_dir() const { return root / "detectors_retrained"; }
    std::filesystem::path stats() const { return root / "stats.json"; }
};

/// Runs one stage on the outputs of earlier ones. Throws StageError naming the
/// stage when it fails or when a prerequisite is missing or stale; on failure
/// the stage is recorded as failed and its outputs as stale.
void run_stage(const ExperimentConfig& cfg, Stage stage, std::ostream* log = nullptr);

/// Every stage in order; adaptive and kappa-sweep only when enabled.
void run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace holmes
