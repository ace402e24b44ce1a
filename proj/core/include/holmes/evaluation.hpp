#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "holmes/detectors.hpp"
#include "holmes/victim.hpp"

namespace holmes {

enum class Policy { any, major, all };

inline constexpr std::array<Policy, 3> kAllPolicies{Policy::any, Policy::major, Policy::all};

std::string to_string(Policy p);
Policy policy_from_string(const std::string& name);

/// Any: at least one vote; Major: strictly more than half; All: unanimous.
/// Throws ArgumentError on an empty vote list.
bool verdict(Policy policy, const std::vector<bool>& votes);

struct Verdict {
    bool is_adversarial = false;
    std::vector<bool> votes;
    std::vector<double> scores;
};

Verdict judge(const DetectorRoster& roster, Policy policy, std::span<const double> logit);

/// Area under the ROC curve with adversarial as the positive class, by sweeping
/// the threshold over every distinct score and integrating with trapezoids.
/// Equal scores across classes contribute one half.
double auc_roc(std::span<const double> benign_scores, std::span<const double> adversarial_scores);

/// Population variance (divides by the length).
double population_variance(std::span<const double> values);

struct Histogram {
    double bin_width = 1.0;
    std::vector<std::pair<double, std::size_t>> bins;  // (lower edge, count), ascending
};

Histogram histogram(std::span<const double> values, double bin_width);

struct LogitStats {
    std::vector<double> maxima;
    std::vector<double> variances;
    double mean_max = 0.0;
    double mean_variance = 0.0;
    Histogram max_histogram;       // width 1
    Histogram variance_histogram;  // width 5
};

LogitStats logit_stats(std::span<const Logit> logits);

/// ROC operating point of one policy: (false adversarial rate, true adversarial rate).
struct OperatingPoint {
    double far = 0.0;
    double tar = 0.0;
};

struct AttackMetrics {
    std::string attack;
    std::size_t count = 0;
    std::map<Policy, double> tar;
    double auc = 0.0;
    std::map<Policy, OperatingPoint> operating_points;
    LogitStats stats;
};

struct MetricsReport {
    std::size_t benign_count = 0;
    std::map<Policy, double> far;
    std::vector<AttackMetrics> attacks;
    LogitStats benign_stats;
    std::vector<std::string> voter_names;
};

/// Continuous ensemble score used for the ROC: mean of voter scores (the
/// dedicated voter contributes its routed unit's score).
double ensemble_score(const DetectorRoster& roster, std::span<const double> logit);

/// Fraction of logits flagged adversarial under `policy`.
double flag_rate(const DetectorRoster& roster, Policy policy, std::span<const Logit> logits);

/// FAR over `benign`, and per attack the TAR under every policy plus AUC against `benign`.
/// Throws ArgumentError when the benign set or any adversarial set is empty.
MetricsReport evaluate(const DetectorRoster& roster, std::span<const Logit> benign,
                       const std::vector<std::pair<std::string, std::vector<Logit>>>& adversarial);

}  // namespace holmes
