#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "holmes/nn.hpp"
#include "holmes/victim.hpp"

namespace holmes {

/// One detector training example: the victim's logit for an input, labelled
/// 0 (benign) or 1 (adversarial), plus the victim's predicted class for routing.
struct DetectorSample {
    Logit logit;
    int label = 0;
    std::size_t predicted_class = 0;
    std::size_t sample_id = 0;
};

/// How a detector sees a logit before its network runs.
struct Transform {
    enum class Kind { full, top_k, dedicated };

    Kind kind = Kind::full;
    std::size_t k = 0;    // top_k only
    std::size_t cls = 0;  // dedicated only: the predicted class this unit serves

    static Transform full() { return {Kind::full, 0, 0}; }
    static Transform top_k(std::size_t k) { return {Kind::top_k, k, 0}; }
    static Transform dedicated(std::size_t cls) { return {Kind::dedicated, 0, cls}; }

    std::size_t output_dim(std::size_t num_classes) const;
    std::vector<double> apply(std::span<const double> logit) const;
    std::string name() const;
};

/// The k largest scores sorted descending. Throws ArgumentError unless 1 <= k <= size.
std::vector<double> topk_transform(std::span<const double> logit, std::size_t k);

/// Positions of the k largest scores in descending order (equal scores: lower index first).
std::vector<std::size_t> topk_indices(std::span<const double> logit, std::size_t k);

struct ScoreGradient {
    double score = 0.0;
    std::vector<double> grad;  // d score / d logit
};

/// Trained binary classifier over (transformed) logits; output is a sigmoid score.
struct DetectorUnit {
    Network net;
    Transform transform;
    double threshold = 0.5;
    double held_out_auc = std::numeric_limits<double>::quiet_NaN();
    std::size_t num_classes = 0;

    double score(std::span<const double> logit) const;
    ScoreGradient score_with_gradient(std::span<const double> logit) const;
    bool vote(std::span<const double> logit) const { return score(logit) >= threshold; }
};

/// A single vote in the ensemble: either one unit or a dedicated set routed by
/// the predicted class (the per-class units count as one voter).
struct Voter {
    enum class Kind { single, dedicated };

    std::string name;
    Kind kind = Kind::single;
    std::vector<DetectorUnit> units;  // dedicated: units[c] serves predicted class c

    const DetectorUnit& route(std::span<const double> logit) const;
    double score(std::span<const double> logit) const { return route(logit).score(logit); }
    bool vote(std::span<const double> logit) const { return route(logit).vote(logit); }
    ScoreGradient score_with_gradient(std::span<const double> logit) const {
        return route(logit).score_with_gradient(logit);
    }
};

struct DetectorRoster {
    std::size_t num_classes = 0;
    std::vector<Voter> voters;

    const Voter& voter(const std::string& name) const;
};

struct DetectorTrainConfig {
    TrainConfig train{0.01, 80, 32, 0, LossKind::binary_cross_entropy};
    std::vector<std::size_t> hidden{16, 32, 64};
    /// Fraction of samples held out to measure AUC; 0 trains on everything.
    double holdout_fraction = 0.2;
};

/// Which voters a roster contains. The default is d_* + d^9 + d^8.
struct RosterSpec {
    bool dedicated = true;
    bool full = false;
    std::vector<std::size_t> top_k{9, 8};
};

std::vector<DetectorSample> build_training_set(const VictimModel& model, std::span<const Tensor> benign,
                                               std::span<const Tensor> adversarial);

std::map<std::size_t, std::vector<DetectorSample>> partition_by_predicted_label(std::span<const DetectorSample> samples);

/// Throws ArgumentError unless both labels are present.
DetectorUnit train_detector(std::span<const DetectorSample> samples, Transform transform,
                            const DetectorTrainConfig& cfg, std::size_t num_classes);

/// Trains every unit of the roster. Units get independent seeds derived from cfg.train.seed.
DetectorRoster train_roster(std::span<const DetectorSample> samples, std::size_t num_classes, const RosterSpec& spec,
                            const DetectorTrainConfig& cfg, std::size_t workers = 1);

/// Writes `dir/roster.json` plus one model file per unit; returns the manifest path.
std::filesystem::path save_roster(const DetectorRoster& roster, const std::filesystem::path& dir);
DetectorRoster load_roster(const std::filesystem::path& manifest);

}  // namespace holmes
