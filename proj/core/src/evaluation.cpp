#include "holmes/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holmes/errors.hpp"

namespace holmes {

namespace {

struct Judged {
    std::vector<bool> votes;
    double mean_score = 0.0;
};

Judged judge_all(const DetectorRoster& roster, std::span<const double> logit) {
    Judged j;
    j.votes.reserve(roster.voters.size());
    for (const Voter& v : roster.voters) {
        const DetectorUnit& unit = v.route(logit);
        const double s = unit.score(logit);
        j.votes.push_back(s >= unit.threshold);
        j.mean_score += s;
    }
    j.mean_score /= static_cast<double>(roster.voters.size());
    return j;
}

}  // namespace

std::string to_string(Policy p) {
    switch (p) {
        case Policy::any: return "any";
        case Policy::major: return "major";
        case Policy::all: return "all";
    }
    return "unknown";
}

Policy policy_from_string(const std::string& name) {
    if (name == "any") return Policy::any;
    if (name == "major") return Policy::major;
    if (name == "all") return Policy::all;
    throw ArgumentError("unknown policy '" + name + "' (expected any, major or all)");
}

bool verdict(Policy policy, const std::vector<bool>& votes) {
    if (votes.empty()) throw ArgumentError("verdict needs at least one vote");
    const auto yes = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), true));
    switch (policy) {
        case Policy::any: return yes > 0;
        case Policy::major: return 2 * yes > votes.size();
        case Policy::all: return yes == votes.size();
    }
    return false;
}

Verdict judge(const DetectorRoster& roster, Policy policy, std::span<const double> logit) {
    Verdict v;
    for (const Voter& voter : roster.voters) {
        const DetectorUnit& unit = voter.route(logit);
        const double s = unit.score(logit);
        v.scores.push_back(s);
        v.votes.push_back(s >= unit.threshold);
    }
    v.is_adversarial = verdict(policy, v.votes);
    return v;
}

double auc_roc(std::span<const double> benign_scores, std::span<const double> adversarial_scores) {
    if (benign_scores.empty() || adversarial_scores.empty()) {
        throw ArgumentError("AUC needs at least one benign and one adversarial score");
    }
    std::vector<std::pair<double, bool>> all;
    all.reserve(benign_scores.size() + adversarial_scores.size());
    for (double s : benign_scores) all.emplace_back(s, false);
    for (double s : adversarial_scores) all.emplace_back(s, true);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const auto n_pos = static_cast<double>(adversarial_scores.size());
    const auto n_neg = static_cast<double>(benign_scores.size());
    double tp = 0.0, fp = 0.0, area = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        const double threshold = all[i].first;
        const double tp0 = tp, fp0 = fp;
        for (; i < all.size() && all[i].first == threshold; ++i) (all[i].second ? tp : fp) += 1.0;
        area += (fp - fp0) / n_neg * (tp0 + tp) / (2.0 * n_pos);
    }
    return area;
}

double population_variance(std::span<const double> values) {
    if (values.empty()) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(values.size());
}

Histogram histogram(std::span<const double> values, double bin_width) {
    if (!(bin_width > 0.0)) throw ArgumentError("histogram bin width must be positive");
    std::map<long long, std::size_t> counts;
    for (double v : values) ++counts[static_cast<long long>(std::floor(v / bin_width))];
    Histogram h{bin_width, {}};
    for (const auto& [bin, count] : counts) h.bins.emplace_back(static_cast<double>(bin) * bin_width, count);
    return h;
}

LogitStats logit_stats(std::span<const Logit> logits) {
    if (logits.empty()) throw ArgumentError("logit statistics need at least one logit");
    LogitStats s;
    for (const Logit& y : logits) {
        s.maxima.push_back(*std::max_element(y.begin(), y.end()));
        s.variances.push_back(population_variance(y));
    }
    const auto n = static_cast<double>(logits.size());
    s.mean_max = std::accumulate(s.maxima.begin(), s.maxima.end(), 0.0) / n;
    s.mean_variance = std::accumulate(s.variances.begin(), s.variances.end(), 0.0) / n;
    s.max_histogram = histogram(s.maxima, 1.0);
    s.variance_histogram = histogram(s.variances, 5.0);
    return s;
}

double ensemble_score(const DetectorRoster& roster, std::span<const double> logit) {
    if (roster.voters.empty()) throw ArgumentError("roster has no voters");
    return judge_all(roster, logit).mean_score;
}

double flag_rate(const DetectorRoster& roster, Policy policy, std::span<const Logit> logits) {
    if (logits.empty()) throw ArgumentError("flag rate of an empty set");
    std::size_t flagged = 0;
    for (const Logit& y : logits) flagged += verdict(policy, judge_all(roster, y).votes) ? 1 : 0;
    return static_cast<double>(flagged) / static_cast<double>(logits.size());
}

MetricsReport evaluate(const DetectorRoster& roster, std::span<const Logit> benign,
                       const std::vector<std::pair<std::string, std::vector<Logit>>>& adversarial) {
    if (benign.empty()) throw ArgumentError("evaluation needs benign examples");
    if (roster.voters.empty()) throw ArgumentError("roster has no voters");

    MetricsReport report;
    report.benign_count = benign.size();
    for (const Voter& v : roster.voters) report.voter_names.push_back(v.name);

    std::vector<double> benign_scores;
    std::map<Policy, std::size_t> benign_flags;
    for (const Logit& y : benign) {
        const Judged j = judge_all(roster, y);
        benign_scores.push_back(j.mean_score);
        for (Policy p : kAllPolicies) benign_flags[p] += verdict(p, j.votes) ? 1 : 0;
    }
    for (Policy p : kAllPolicies) {
        report.far[p] = static_cast<double>(benign_flags[p]) / static_cast<double>(benign.size());
    }
    report.benign_stats = logit_stats(benign);

    for (const auto& [name, logits] : adversarial) {
        if (logits.empty()) throw ArgumentError("adversarial set '" + name + "' is empty");
        AttackMetrics m;
        m.attack = name;
        m.count = logits.size();
        std::vector<double> scores;
        std::map<Policy, std::size_t> flags;
        for (const Logit& y : logits) {
            const Judged j = judge_all(roster, y);
            scores.push_back(j.mean_score);
            for (Policy p : kAllPolicies) flags[p] += verdict(p, j.votes) ? 1 : 0;
        }
        for (Policy p : kAllPolicies) {
            m.tar[p] = static_cast<double>(flags[p]) / static_cast<double>(logits.size());
            m.operating_points[p] = {report.far[p], m.tar[p]};
        }
        m.auc = auc_roc(benign_scores, scores);
        m.stats = logit_stats(logits);
        report.attacks.push_back(std::move(m));
    }
    return report;
}

}  // namespace holmes
