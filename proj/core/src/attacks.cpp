#include "holmes/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "holmes/errors.hpp"

namespace holmes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// x' = 0.5 * tanh(w) keeps every pixel inside [-0.5, 0.5]. The 1 - 1e-6 factor
// keeps atanh finite for pixels sitting on the boundary.
double to_tanh_space(double x) { return std::atanh(std::clamp(2.0 * x, -1.0, 1.0) * (1.0 - 1e-6)); }
double from_tanh_space(double w) { return 0.5 * std::tanh(w); }

// Pixels this close to the original are reset to it before reporting; the
// reparametrization cannot represent the original value exactly.
constexpr double kSnapTolerance = 1e-6;

class Adam {
public:
    Adam(std::size_t n, double lr) : m_(n, 0.0), v_(n, 0.0), lr_(lr) {}

    void step(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    std::vector<double> m_, v_;
    double lr_;
    int t_ = 0;
};

std::size_t strongest_other(std::span<const double> y, std::size_t target) {
    std::size_t best = target == 0 ? 1 : 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (i != target && y[i] > y[best]) best = i;
    }
    return best;
}

Tensor input_gradient(const VictimModel& model, const ActivationTrace& trace, std::vector<double> logit_grad) {
    return backward(model.network(), trace, Tensor::vector(std::move(logit_grad)), false).input;
}

void require_target(const AttackConfig& cfg, const VictimModel& model, const char* name) {
    if (!cfg.target) throw UnsupportedModeError(std::string(name) + " is a targeted attack; wrap it for untargeted use");
    if (*cfg.target >= model.num_classes()) {
        throw ArgumentError("target class " + std::to_string(*cfg.target) + " outside [0, " +
                            std::to_string(model.num_classes()) + ")");
    }
}

AttackResult make_result(const VictimModel& model, const Tensor& x, Tensor x_adv, std::size_t original,
                         std::optional<std::size_t> target) {
    AttackResult r;
    r.original_label = original;
    r.target = target;
    r.achieved_label = predict(model, x_adv);
    r.success = target ? r.achieved_label == *target : r.achieved_label != original;
    r.noise = NoiseProfile::between(x, x_adv);
    r.adversarial = std::move(x_adv);
    return r;
}

struct Candidate {
    Tensor x;
    double dist2 = kInf;
    double c = 0.0;
};

bool meets_target(std::span<const double> y, std::size_t target, double kappa) {
    return argmax(y) == target && target_margin(y, target) >= kappa;
}

/// Shared CW-L2 machinery: plain, pixel-masked and detector-aware variants.
struct L2Problem {
    const VictimModel& model;
    const Tensor& x;
    const AttackConfig& cfg;
    const std::vector<bool>& allowed;
    const DetectorHandles& detectors;
    std::size_t target;
    double kappa;
};

// Success test for a candidate iterate; for the adaptive variant every detector
// must also score below 0.5.
bool acceptable(const L2Problem& p, std::span<const double> y) {
    if (!meets_target(y, p.target, p.kappa)) return false;
    for (const Voter* d : p.detectors) {
        if (!(d->score(y) < 0.5)) return false;
    }
    return true;
}

Tensor snap_to_original(const Tensor& x, const Tensor& x_adv) {
    Tensor out = x_adv;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::abs(out[i] - x[i]) <= kSnapTolerance) out[i] = x[i];
    }
    return out;
}

struct L2Outcome {
    std::optional<Candidate> best;
    Tensor last;
    int iterations = 0;
};

L2Outcome run_cw_l2(const L2Problem& p, const Tensor& start) {
    const std::size_t m = p.x.size();
    const Network& net = p.model.network();
    L2Outcome out;
    std::vector<double> w(m, 0.0);
    Tensor cur = p.x;
    const int check_every = std::max(1, p.cfg.max_iters / 10);

    for (int step = 0; step < p.cfg.c_steps; ++step) {
        const double c = p.cfg.c_init * std::pow(p.cfg.c_growth, step);
        const double e = (p.cfg.e_init ? *p.cfg.e_init : p.cfg.c_init) * std::pow(p.cfg.c_growth, step);
        for (std::size_t i = 0; i < m; ++i) w[i] = p.allowed[i] ? to_tanh_space(start[i]) : 0.0;
        Adam adam(m, p.cfg.inner_lr);
        double prev = kInf;
        std::optional<Candidate> best_here;
        std::vector<double> gw(m, 0.0);

        for (int it = 0; it < p.cfg.max_iters; ++it) {
            for (std::size_t i = 0; i < m; ++i) cur[i] = p.allowed[i] ? from_tanh_space(w[i]) : p.x[i];
            const ActivationTrace trace = forward(net, cur);
            const Tensor& y = trace.output();
            ++out.iterations;

            const std::size_t other = strongest_other(y.values(), p.target);
            const double diff = y[other] - y[p.target];
            double dist2 = 0.0;
            for (std::size_t i = 0; i < m; ++i) dist2 += (cur[i] - p.x[i]) * (cur[i] - p.x[i]);
            double objective = dist2 + c * std::max(diff, -p.kappa);

            std::vector<double> dy(y.size(), 0.0);
            if (diff > -p.kappa) {
                dy[other] += c;
                dy[p.target] -= c;
            }
            bool all_bypassed = true;
            for (const Voter* d : p.detectors) {
                const ScoreGradient sg = d->score_with_gradient(y.values());
                objective += e * (sg.score - 0.5);
                all_bypassed = all_bypassed && sg.score < 0.5;
                for (std::size_t k = 0; k < dy.size(); ++k) dy[k] += e * sg.grad[k];
            }
            if (all_bypassed && meets_target(y.values(), p.target, p.kappa) &&
                (!best_here || dist2 < best_here->dist2)) {
                best_here = Candidate{cur, dist2, c};
            }

            if (p.cfg.early_abort && it % check_every == 0) {
                if (objective > prev - 1e-4 * std::abs(prev)) break;
                prev = objective;
            }

            const Tensor gx = input_gradient(p.model, trace, std::move(dy));
            for (std::size_t i = 0; i < m; ++i) {
                if (!p.allowed[i]) {
                    gw[i] = 0.0;
                    continue;
                }
                const double g = gx[i] + 2.0 * (cur[i] - p.x[i]);
                const double t = std::tanh(w[i]);
                gw[i] = g * 0.5 * (1.0 - t * t);
            }
            adam.step(w, gw);
        }
        out.last = cur;
        if (best_here) {
            out.best = std::move(best_here);
            break;
        }
    }
    return out;
}

AttackResult finish_l2(const L2Problem& p, L2Outcome outcome, std::size_t original) {
    AttackResult r;
    if (outcome.best) {
        Tensor chosen = outcome.best->x;
        Tensor snapped = snap_to_original(p.x, chosen);
        if (acceptable(p, infer(p.model.network(), snapped.values()))) chosen = std::move(snapped);
        r = make_result(p.model, p.x, std::move(chosen), original, p.target);
        r.final_const = outcome.best->c;
    } else {
        // Best effort: the last iterate, unless it reached the target label without
        // meeting the margin, in which case the unmodified input is reported.
        Tensor fallback = outcome.last.empty() ? p.x : outcome.last;
        if (p.detectors.empty() && predict(p.model, fallback) == p.target) fallback = p.x;
        r = make_result(p.model, p.x, std::move(fallback), original, p.target);
        if (!p.detectors.empty()) r.success = false;
    }
    r.iterations_used = outcome.iterations;
    if (!p.detectors.empty()) {
        const Logit y = logits(p.model, r.adversarial);
        bool all = true;
        for (const Voter* d : p.detectors) {
            const double s = d->score(y);
            r.detector_scores.push_back(s);
            r.bypassed.push_back(s < 0.5);
            all = all && s < 0.5;
        }
        r.success = r.achieved_label == p.target && all;
    }
    return r;
}

// Objective and gradient pieces of the Linf subproblem at one iterate.
struct LinfEval {
    double objective = 0.0;
    double max_abs_delta = 0.0;
    bool on_target = false;
};

template <typename OnIterate>
int linf_descent(const VictimModel& model, const Tensor& x, std::size_t target, double kappa, double c, double tau,
                 const Tensor& start, int iterations, double lr, OnIterate&& on_iterate) {
    const std::size_t m = x.size();
    std::vector<double> w(m), gw(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = to_tanh_space(start[i]);
    Adam adam(m, lr);
    Tensor cur = x;
    int used = 0;
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < m; ++i) cur[i] = from_tanh_space(w[i]);
        const ActivationTrace trace = forward(model.network(), cur);
        const Tensor& y = trace.output();
        ++used;
        const std::size_t other = strongest_other(y.values(), target);
        const double diff = y[other] - y[target];
        LinfEval ev;
        ev.objective = c * std::max(diff, -kappa);
        for (std::size_t i = 0; i < m; ++i) {
            const double a = std::abs(cur[i] - x[i]);
            ev.max_abs_delta = std::max(ev.max_abs_delta, a);
            ev.objective += std::max(a - tau, 0.0);
        }
        ev.on_target = meets_target(y.values(), target, kappa);
        if (on_iterate(cur, ev)) break;

        std::vector<double> dy(y.size(), 0.0);
        if (diff > -kappa) {
            dy[other] += c;
            dy[target] -= c;
        }
        const Tensor gx = input_gradient(model, trace, std::move(dy));
        for (std::size_t i = 0; i < m; ++i) {
            const double d = cur[i] - x[i];
            double g = gx[i];
            if (std::abs(d) > tau) g += d > 0 ? 1.0 : -1.0;
            const double t = std::tanh(w[i]);
            gw[i] = g * 0.5 * (1.0 - t * t);
        }
        adam.step(w, gw);
    }
    return used;
}

}  // namespace

double distance(Metric metric, const Tensor& x, const Tensor& x_adv) {
    if (x.size() != x_adv.size()) {
        throw DimensionError("distance between tensors of " + std::to_string(x.size()) + " and " +
                             std::to_string(x_adv.size()) + " values");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x_adv[i] - x[i];
        switch (metric) {
            case Metric::l0: acc += x_adv[i] != x[i] ? 1.0 : 0.0; break;
            case Metric::l2: acc += d * d; break;
            case Metric::linf: acc = std::max(acc, std::abs(d)); break;
        }
    }
    return metric == Metric::l2 ? std::sqrt(acc) : acc;
}

NoiseProfile NoiseProfile::between(const Tensor& x, const Tensor& x_adv) {
    return {distance(Metric::l0, x, x_adv), distance(Metric::l2, x, x_adv), distance(Metric::linf, x, x_adv)};
}

std::string to_string(AttackFamily family) {
    switch (family) {
        case AttackFamily::fgsm: return "fgsm";
        case AttackFamily::jsma: return "jsma";
        case AttackFamily::cw_l0: return "cw_l0";
        case AttackFamily::cw_l2: return "cw_l2";
        case AttackFamily::cw_linf: return "cw_linf";
        case AttackFamily::adaptive_cw: return "adaptive_cw";
    }
    return "unknown";
}

AttackFamily attack_family_from_string(const std::string& name) {
    for (AttackFamily f : {AttackFamily::fgsm, AttackFamily::jsma, AttackFamily::cw_l0, AttackFamily::cw_l2,
                           AttackFamily::cw_linf, AttackFamily::adaptive_cw}) {
        if (to_string(f) == name) return f;
    }
    throw ArgumentError("unknown attack family '" + name + "'");
}

Metric native_metric(AttackFamily family) {
    switch (family) {
        case AttackFamily::jsma:
        case AttackFamily::cw_l0: return Metric::l0;
        case AttackFamily::fgsm:
        case AttackFamily::cw_linf: return Metric::linf;
        case AttackFamily::cw_l2:
        case AttackFamily::adaptive_cw: return Metric::l2;
    }
    return Metric::l2;
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0)) throw ArgumentError("epsilon must be >= 0");
    if (!(kappa >= 0.0)) throw ArgumentError("kappa must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError("gamma must lie in (0, 1]");
    if (!(c_init > 0.0)) throw ArgumentError("c_init must be > 0");
    if (!(c_growth >= 1.0)) throw ArgumentError("c_growth must be >= 1");
    if (c_steps < 1) throw ArgumentError("c_steps must be >= 1");
    if (max_iters < 0) throw ArgumentError("max_iters must be >= 0");
    if (!(inner_lr > 0.0)) throw ArgumentError("inner_lr must be > 0");
    if (e_init && !(*e_init > 0.0)) throw ArgumentError("detector weights e_i must be > 0");
    if (!(theta > 0.0)) throw ArgumentError("theta must be > 0");
    if (!(tau_factor > 0.0 && tau_factor < 1.0)) throw ArgumentError("tau_factor must lie in (0, 1)");
    if (!(tau_step > 0.0)) throw ArgumentError("tau_step must be > 0");
    if (l0_freeze_per_round < 1) throw ArgumentError("l0_freeze_per_round must be >= 1");
}

double target_margin(std::span<const double> logit, std::size_t target) {
    return logit[target] - logit[strongest_other(logit, target)];
}

double cw_margin_loss(std::span<const double> logit, std::size_t target, double kappa) {
    return std::max(-target_margin(logit, target), -kappa);
}

AttackResult fgsm(const VictimModel& model, const Tensor& x, const AttackConfig& cfg) {
    cfg.validate();
    const ActivationTrace trace = forward(model.network(), x);
    check_pixel_box(x.values());
    const Tensor& y = trace.output();
    const std::size_t original = argmax(y.values());
    if (cfg.target && *cfg.target >= model.num_classes()) throw ArgumentError("target class out of range");
    // Cross-entropy gradient with respect to the logits: softmax(y) - onehot(label).
    const std::size_t label = cfg.target ? *cfg.target : original;
    std::vector<double> dy = softmax(y.values());
    dy[label] -= 1.0;
    const Tensor g = input_gradient(model, trace, std::move(dy));
    const double direction = cfg.target ? -1.0 : 1.0;
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        const double s = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
        adv[i] = std::clamp(x[i] + direction * cfg.epsilon * s, -0.5, 0.5);
    }
    AttackResult r = make_result(model, x, std::move(adv), original, cfg.target);
    r.iterations_used = 1;
    return r;
}

AttackResult jsma(const VictimModel& model, const Tensor& x, const AttackConfig& cfg) {
    cfg.validate();
    require_target(cfg, model, "JSMA");
    check_pixel_box(x.values());
    const std::size_t t = *cfg.target;
    const std::size_t m = x.size();
    const auto budget = static_cast<std::size_t>(std::floor(cfg.gamma * static_cast<double>(m)));
    Tensor adv = x;
    std::vector<bool> used(m, false);
    const std::size_t original = predict(model, x);
    int changed = 0;

    for (std::size_t step = 0; step < budget; ++step) {
        const ActivationTrace trace = forward(model.network(), adv);
        if (argmax(trace.output().values()) == t) break;
        std::vector<double> dy(model.num_classes(), 0.0);
        dy[t] = 1.0;
        const Tensor saliency = input_gradient(model, trace, std::move(dy));
        std::size_t pick = m;
        for (std::size_t i = 0; i < m; ++i) {
            if (used[i] || adv[i] >= 0.5 || !(saliency[i] > 0.0)) continue;
            if (pick == m || saliency[i] > saliency[pick]) pick = i;
        }
        if (pick == m) break;
        adv[pick] = std::min(0.5, adv[pick] + cfg.theta);
        used[pick] = true;
        ++changed;
    }
    AttackResult r = make_result(model, x, std::move(adv), original, t);
    r.iterations_used = changed;
    return r;
}

AttackResult cw_l2_masked(const VictimModel& model, const Tensor& x, const AttackConfig& cfg,
                          const std::vector<bool>& allowed, const Tensor& start) {
    cfg.validate();
    require_target(cfg, model, "CW-L2");
    check_pixel_box(x.values());
    if (allowed.size() != x.size()) throw DimensionError("pixel mask length does not match the input");
    const DetectorHandles none;
    const L2Problem p{model, x, cfg, allowed, none, *cfg.target, cfg.kappa};
    const std::size_t original = predict(model, x);
    return finish_l2(p, run_cw_l2(p, start.empty() ? x : start), original);
}

AttackResult cw_l2(const VictimModel& model, const Tensor& x, const AttackConfig& cfg) {
    return cw_l2_masked(model, x, cfg, std::vector<bool>(x.size(), true));
}

AttackResult adaptive_cw(const VictimModel& model, const DetectorHandles& detectors, const Tensor& x,
                         const AttackConfig& cfg) {
    cfg.validate();
    require_target(cfg, model, "adaptive CW");
    check_pixel_box(x.values());
    if (detectors.empty()) throw ArgumentError("adaptive attack needs at least one detector handle");
    for (const Voter* d : detectors) {
        if (!d) throw ArgumentError("null detector handle");
    }
    const std::vector<bool> allowed(x.size(), true);
    const L2Problem p{model, x, cfg, allowed, detectors, *cfg.target, 0.0};
    const std::size_t original = predict(model, x);
    return finish_l2(p, run_cw_l2(p, x), original);
}

AttackResult cw_l0(const VictimModel& model, const Tensor& x, const AttackConfig& cfg) {
    cfg.validate();
    require_target(cfg, model, "CW-L0");
    check_pixel_box(x.values());
    const std::size_t t = *cfg.target;
    const std::size_t m = x.size();
    const double c_max = cfg.c_init * std::pow(cfg.c_growth, cfg.c_steps - 1);

    std::vector<bool> allowed(m, true);
    Tensor start = x;
    AttackConfig round = cfg;
    std::optional<AttackResult> last_success;
    int iterations = 0;

    while (true) {
        AttackResult r = cw_l2_masked(model, x, round, allowed, start);
        iterations += r.iterations_used;
        if (!r.success) break;

        const ActivationTrace trace = forward(model.network(), r.adversarial);
        std::vector<double> dy(model.num_classes(), 0.0);
        dy[strongest_other(trace.output().values(), t)] = 1.0;
        dy[t] = -1.0;
        const Tensor grad_f = input_gradient(model, trace, std::move(dy));

        std::vector<std::pair<double, std::size_t>> changed;
        for (std::size_t i = 0; i < m; ++i) {
            if (!allowed[i]) continue;
            const double d = r.adversarial[i] - x[i];
            if (d == 0.0) {
                allowed[i] = false;
            } else {
                changed.emplace_back(std::abs(grad_f[i] * d), i);
            }
        }
        start = r.adversarial;
        round.c_init = r.final_const;
        round.c_steps = static_cast<int>(std::floor(std::log(c_max / r.final_const) / std::log(cfg.c_growth) + 1e-9)) + 1;
        round.c_steps = std::max(1, round.c_steps);
        last_success = std::move(r);
        if (changed.empty()) break;

        std::stable_sort(changed.begin(), changed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const std::size_t freeze = std::min<std::size_t>(changed.size(), static_cast<std::size_t>(cfg.l0_freeze_per_round));
        for (std::size_t k = 0; k < freeze; ++k) {
            allowed[changed[k].second] = false;
            start[changed[k].second] = x[changed[k].second];
        }
    }

    if (last_success) {
        last_success->iterations_used = iterations;
        return *std::move(last_success);
    }
    AttackResult fail = make_result(model, x, x, predict(model, x), t);
    fail.iterations_used = iterations;
    return fail;
}

LinfSolve solve_linf_subproblem(const VictimModel& model, const Tensor& x, std::size_t target, double kappa,
                                double c, double tau, const Tensor& start, int iterations, double lr) {
    LinfSolve out;
    out.best_objective = kInf;
    out.iterations = linf_descent(model, x, target, kappa, c, tau, start.empty() ? x : start, iterations, lr,
                                  [&](const Tensor& cur, const LinfEval& ev) {
                                      if (ev.objective < out.best_objective) {
                                          out.best_objective = ev.objective;
                                          out.best_x = cur;
                                      }
                                      return false;
                                  });
    return out;
}

AttackResult cw_linf(const VictimModel& model, const Tensor& x, const AttackConfig& cfg) {
    cfg.validate();
    require_target(cfg, model, "CW-Linf");
    check_pixel_box(x.values());
    const std::size_t t = *cfg.target;
    const std::size_t original = predict(model, x);

    double tau = 1.0;
    double c = cfg.c_init;
    Tensor start = x;
    std::optional<Tensor> best;
    double best_c = 0.0;
    std::vector<double> taus;
    int iterations = 0;

    while (tau >= cfg.tau_min) {
        std::optional<Tensor> found;
        double c_try = c;
        while (c_try <= cfg.linf_c_max) {
            iterations += linf_descent(model, x, t, cfg.kappa, c_try, tau, start, cfg.max_iters, cfg.inner_lr,
                                       [&](const Tensor& cur, const LinfEval& ev) {
                                           if (ev.on_target && ev.max_abs_delta <= tau) {
                                               found = cur;
                                               return true;
                                           }
                                           return false;
                                       });
            if (found) break;
            c_try *= 2.0;
        }
        if (!found) break;

        double actual = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) actual = std::max(actual, std::abs((*found)[i] - x[i]));
        taus.push_back(tau);
        start = *found;
        best = std::move(found);
        best_c = c_try;
        c = c_try;
        tau = std::min(tau, actual);
        tau = cfg.tau_schedule == TauSchedule::multiplicative ? tau * cfg.tau_factor : tau - cfg.tau_step;
    }

    AttackResult r;
    if (best) {
        Tensor chosen = *best;
        Tensor snapped = snap_to_original(x, chosen);
        if (meets_target(infer(model.network(), snapped.values()), t, cfg.kappa)) chosen = std::move(snapped);
        r = make_result(model, x, std::move(chosen), original, t);
        r.final_const = best_c;
    } else {
        r = make_result(model, x, x, original, t);
    }
    r.tau_history = std::move(taus);
    r.iterations_used = iterations;
    return r;
}

AttackResult untargeted_wrap(const TargetedAttack& attack, Metric metric, const VictimModel& model, const Tensor& x,
                             const AttackConfig& cfg) {
    const std::size_t original = predict(model, x);
    std::optional<AttackResult> best;
    int iterations = 0;
    for (std::size_t t = 0; t < model.num_classes(); ++t) {
        if (t == original) continue;
        AttackConfig targeted = cfg;
        targeted.target = t;
        AttackResult r = attack(model, x, targeted);
        iterations += r.iterations_used;
        if (!r.success) continue;
        if (!best || r.noise.get(metric) < best->noise.get(metric)) best = std::move(r);
    }
    AttackResult out = best ? *std::move(best) : make_result(model, x, x, original, std::nullopt);
    out.target.reset();
    out.success = out.achieved_label != original;
    out.iterations_used = iterations;
    return out;
}

AttackResult run_attack(const VictimModel& model, const Tensor& x, const AttackConfig& cfg,
                        const DetectorHandles& detectors) {
    switch (cfg.family) {
        case AttackFamily::fgsm: return fgsm(model, x, cfg);
        case AttackFamily::jsma:
            if (!cfg.target) throw UnsupportedModeError("JSMA supports targeted mode only");
            return jsma(model, x, cfg);
        case AttackFamily::cw_l2:
            return cfg.target ? cw_l2(model, x, cfg) : untargeted_wrap(cw_l2, Metric::l2, model, x, cfg);
        case AttackFamily::cw_l0:
            return cfg.target ? cw_l0(model, x, cfg) : untargeted_wrap(cw_l0, Metric::l0, model, x, cfg);
        case AttackFamily::cw_linf:
            return cfg.target ? cw_linf(model, x, cfg) : untargeted_wrap(cw_linf, Metric::linf, model, x, cfg);
        case AttackFamily::adaptive_cw: {
            if (!cfg.target) throw UnsupportedModeError("the adaptive attack is targeted");
            return adaptive_cw(model, detectors, x, cfg);
        }
    }
    throw ArgumentError("unknown attack family");
}

}  // namespace holmes
