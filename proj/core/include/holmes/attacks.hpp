#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holmes/detectors.hpp"
#include "holmes/tensor.hpp"
#include "holmes/victim.hpp"

namespace holmes {

enum class Metric { l0, l2, linf };

/// L0 counts positions whose stored values differ (exact comparison), L2 is the
/// Euclidean norm of the difference, Linf its largest absolute entry.
double distance(Metric metric, const Tensor& x, const Tensor& x_adv);

struct NoiseProfile {
    double l0 = 0.0;
    double l2 = 0.0;
    double linf = 0.0;

    static NoiseProfile between(const Tensor& x, const Tensor& x_adv);
    double get(Metric m) const { return m == Metric::l0 ? l0 : (m == Metric::l2 ? l2 : linf); }
};

enum class AttackFamily { fgsm, jsma, cw_l0, cw_l2, cw_linf, adaptive_cw };

std::string to_string(AttackFamily family);
AttackFamily attack_family_from_string(const std::string& name);

/// The metric each family minimizes; untargeted_wrap() selects by it.
Metric native_metric(AttackFamily family);

enum class TauSchedule { multiplicative, subtractive };

struct AttackConfig {
    AttackFamily family = AttackFamily::cw_l2;
    std::optional<std::size_t> target;  // nullopt: untargeted

    double epsilon = 0.2;  // FGSM step
    double kappa = 0.0;    // CW confidence margin

    // CW constant schedule: c_init, multiplied by c_growth for up to c_steps outer steps.
    double c_init = 1e-2;
    double c_growth = 10.0;
    int c_steps = 6;
    int max_iters = 1000;
    double inner_lr = 1e-2;
    /// Stop an inner run when the objective has not improved by 1e-4 (relative)
    /// over a window of max_iters / 10 iterations.
    bool early_abort = true;

    // JSMA
    double gamma = 0.15;  // max fraction of pixels modified
    double theta = 1.0;   // per-pixel increase, clipped to the box

    // CW-Linf: tau starts at 1 and shrinks after every success; c doubles up to linf_c_max.
    TauSchedule tau_schedule = TauSchedule::multiplicative;
    double tau_factor = 0.9;
    double tau_step = 0.1;
    double tau_min = 1.0 / 256.0;
    double linf_c_max = 20.0;

    // CW-L0: least-important changed pixels frozen per round.
    int l0_freeze_per_round = 1;

    // Adaptive CW: detector-term weight; unset means it tracks c.
    std::optional<double> e_init;

    std::uint64_t seed = 0;

    /// Throws ArgumentError when a hyperparameter leaves its valid range.
    void validate() const;
};

struct AttackResult {
    Tensor adversarial;
    bool success = false;
    std::size_t original_label = 0;
    std::optional<std::size_t> target;
    std::size_t achieved_label = 0;
    int iterations_used = 0;
    NoiseProfile noise;

    double final_const = 0.0;         // CW families: constant of the returned example
    std::vector<double> tau_history;  // CW-Linf: tau after each successful round
    std::vector<double> detector_scores;  // adaptive: score of every targeted detector on x'
    std::vector<bool> bypassed;           // adaptive: score < 0.5 per targeted detector
};

using DetectorHandles = std::vector<const Voter*>;

AttackResult fgsm(const VictimModel& model, const Tensor& x, const AttackConfig& cfg);
AttackResult jsma(const VictimModel& model, const Tensor& x, const AttackConfig& cfg);
AttackResult cw_l2(const VictimModel& model, const Tensor& x, const AttackConfig& cfg);
AttackResult cw_l0(const VictimModel& model, const Tensor& x, const AttackConfig& cfg);
AttackResult cw_linf(const VictimModel& model, const Tensor& x, const AttackConfig& cfg);
AttackResult adaptive_cw(const VictimModel& model, const DetectorHandles& detectors, const Tensor& x,
                         const AttackConfig& cfg);

/// CW-L2 restricted to pixels where `allowed` is true; the rest stay equal to x.
/// Optimization starts from `start` (x when empty).
AttackResult cw_l2_masked(const VictimModel& model, const Tensor& x, const AttackConfig& cfg,
                          const std::vector<bool>& allowed, const Tensor& start = {});

using TargetedAttack = std::function<AttackResult(const VictimModel&, const Tensor&, const AttackConfig&)>;

/// Runs `attack` against every label other than the current prediction and keeps
/// the successful result with the smallest distance under `metric`.
AttackResult untargeted_wrap(const TargetedAttack& attack, Metric metric, const VictimModel& model, const Tensor& x,
                             const AttackConfig& cfg);

/// Dispatches on cfg.family. Untargeted CW requests go through untargeted_wrap();
/// untargeted JSMA raises UnsupportedModeError.
AttackResult run_attack(const VictimModel& model, const Tensor& x, const AttackConfig& cfg,
                        const DetectorHandles& detectors = {});

/// One inner solve of the CW-Linf subproblem for fixed c and tau:
/// minimize c * F(x + d) + sum_i max(|d_i| - tau, 0) over the box.
struct LinfSolve {
    Tensor best_x;           // iterate with the lowest objective
    double best_objective = 0.0;
    int iterations = 0;
};

LinfSolve solve_linf_subproblem(const VictimModel& model, const Tensor& x, std::size_t target, double kappa,
                                double c, double tau, const Tensor& start, int iterations, double lr);

/// CW objective term F(x') = max(max_{i != t} y_i - y_t, -kappa) for a logit y.
double cw_margin_loss(std::span<const double> logit, std::size_t target, double kappa);

/// y_t - max_{i != t} y_i.
double target_margin(std::span<const double> logit, std::size_t target);

}  // namespace holmes
