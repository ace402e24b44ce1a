#include "holmes/victim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "holmes/errors.hpp"
#include "holmes/model_io.hpp"
#include "holmes/rng.hpp"
#include "json.hpp"

namespace holmes {

VictimModel::VictimModel(Network net, std::size_t num_classes, Normalization norm)
    : net_(std::move(net)), num_classes_(num_classes), norm_(norm) {
    if (num_classes_ < 2) throw ArgumentError("a classifier needs at least two classes");
    if (net_.output_dim() != num_classes_) {
        throw DimensionError("victim network emits " + std::to_string(net_.output_dim()) + " scores for " +
                             std::to_string(num_classes_) + " classes");
    }
}

void check_pixel_box(std::span<const double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= -0.5 && x[i] <= 0.5)) {
            throw DomainError("pixel " + std::to_string(i) + " = " + std::to_string(x[i]) +
                              " lies outside [-0.5, 0.5]");
        }
    }
}

Logit logits(const VictimModel& model, const Tensor& x) {
    check_pixel_box(x.values());
    return infer(model.network(), x.values());
}

std::vector<double> softmax(std::span<const double> scores) {
    std::vector<double> p(scores.begin(), scores.end());
    if (p.empty()) return p;
    const double m = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

std::size_t argmax(std::span<const double> scores) {
    if (scores.empty()) throw ArgumentError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

std::size_t predict(const VictimModel& model, const Tensor& x) { return argmax(logits(model, x)); }

Network default_victim_network(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed,
                               const std::vector<std::size_t>& hidden) {
    return Network::multilayer(input_dim, hidden, num_classes, false, seed);
}

double accuracy(const VictimModel& model, const Dataset& ds) {
    if (ds.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        if (predict(model, ds.images[n]) == ds.labels[n]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace {

Tensor translate(const Tensor& x, std::size_t rows, std::size_t cols, int dr, int dc) {
    Tensor out(x.shape());
    out.fill(-0.5);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto sr = static_cast<long long>(r) - dr;
        if (sr < 0 || sr >= static_cast<long long>(rows)) continue;
        for (std::size_t c = 0; c < cols; ++c) {
            const auto sc = static_cast<long long>(c) - dc;
            if (sc < 0 || sc >= static_cast<long long>(cols)) continue;
            out[r * cols + c] = x[static_cast<std::size_t>(sr) * cols + static_cast<std::size_t>(sc)];
        }
    }
    return out;
}

}  // namespace

VictimTraining train_victim(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                            const VictimRecipe& recipe) {
    if (train.empty()) throw ArgumentError("victim training set is empty");
    if (recipe.max_shift < 0) throw ArgumentError("max_shift must be >= 0");
    if (recipe.decay_epochs < 0 || recipe.decay_epochs > cfg.epochs) {
        throw ArgumentError("decay_epochs must lie in [0, epochs]");
    }
    train.validate();
    TrainConfig run = cfg;
    run.loss = LossKind::cross_entropy;
    Network net = default_victim_network(train.dims(), train.num_classes, cfg.seed, recipe.hidden);
    std::vector<double> labels(train.labels.begin(), train.labels.end());

    TrainHistory history;
    if (recipe.max_shift == 0 && recipe.decay_epochs == 0) {
        history = fit(net, train.images, labels, run);
    } else {
        Rng shifts(Rng::derive(cfg.seed, 0x5348));
        const auto span = static_cast<std::uint64_t>(2 * recipe.max_shift + 1);
        std::vector<Tensor> epoch_images;
        for (int e = 0; e < cfg.epochs; ++e) {
            const std::vector<Tensor>* images = &train.images;
            if (recipe.max_shift > 0) {
                epoch_images.clear();
                for (const Tensor& x : train.images) {
                    const int dr = static_cast<int>(shifts.below(span)) - recipe.max_shift;
                    const int dc = static_cast<int>(shifts.below(span)) - recipe.max_shift;
                    epoch_images.push_back(translate(x, train.rows, train.cols, dr, dc));
                }
                images = &epoch_images;
            }
            TrainConfig one = run;
            one.epochs = 1;
            one.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(e));
            if (e >= cfg.epochs - recipe.decay_epochs) one.learning_rate *= recipe.decay_factor;
            history.epoch_loss.push_back(fit(net, *images, labels, one).epoch_loss.front());
        }
    }

    VictimTraining out{VictimModel(std::move(net), train.num_classes), std::move(history), 0.0, 0.0};
    out.train_accuracy = accuracy(out.model, train);
    out.test_accuracy = test.empty() ? std::numeric_limits<double>::quiet_NaN() : accuracy(out.model, test);
    return out;
}

void save_victim(const VictimModel& model, const std::filesystem::path& path) {
    nlohmann::json meta{{"role", "victim"},
                        {"num_classes", model.num_classes()},
                        {"normalization",
                         {{"scale_divisor", model.normalization().scale_divisor},
                          {"offset", model.normalization().offset}}}};
    save_network(model.network(), path, meta.dump());
}

VictimModel load_victim(const std::filesystem::path& path) {
    ModelFile file = load_model(path);
    const auto meta = nlohmann::json::parse(file.metadata_json);
    if (!meta.contains("num_classes")) {
        throw ParseError("model file '" + path.string() + "' lacks victim metadata (num_classes)", 0);
    }
    Normalization norm;
    if (meta.contains("normalization")) {
        norm.scale_divisor = meta["normalization"].value("scale_divisor", 255.0);
        norm.offset = meta["normalization"].value("offset", -0.5);
    }
    return VictimModel(std::move(file.network), meta["num_classes"].get<std::size_t>(), norm);
}

}  // namespace holmes
