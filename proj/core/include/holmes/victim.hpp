#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "holmes/data.hpp"
#include "holmes/nn.hpp"

namespace holmes {

/// Pre-softmax class scores, one per class.
using Logit = std::vector<double>;

/// Byte-to-pixel map applied at ingestion: x / scale_divisor + offset.
struct Normalization {
    double scale_divisor = 255.0;
    double offset = -0.5;
};

/// The attacked classifier. Logits are the output of the last Dense layer.
class VictimModel {
public:
    VictimModel() = default;
    VictimModel(Network net, std::size_t num_classes, Normalization norm = {});

    const Network& network() const noexcept { return net_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t input_dim() const noexcept { return net_.input_dim(); }
    const Normalization& normalization() const noexcept { return norm_; }

private:
    Network net_;
    std::size_t num_classes_ = 0;
    Normalization norm_;
};

/// Throws DomainError if any pixel leaves [-0.5, 0.5].
void check_pixel_box(std::span<const double> x);

Logit logits(const VictimModel& model, const Tensor& x);

/// Max-shifted softmax; entries sum to 1.
std::vector<double> softmax(std::span<const double> scores);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores);

std::size_t predict(const VictimModel& model, const Tensor& x);

/// Default architecture: Dense(m->256)+ReLU, Dense(256->128)+ReLU, Dense(128->k).
Network default_victim_network(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed,
                               const std::vector<std::size_t>& hidden = {256, 128});

struct VictimTraining {
    VictimModel model;
    TrainHistory history;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Training options beyond the SGD settings. Augmentation draws one random
/// translation of up to `max_shift` pixels per image and epoch (vacated pixels
/// take the background value -0.5); the last `decay_epochs` epochs run at
/// learning_rate * decay_factor.
struct VictimRecipe {
    std::vector<std::size_t> hidden{256, 128};
    int max_shift = 0;
    int decay_epochs = 0;
    double decay_factor = 0.1;
};

/// Trains a fresh default-architecture victim with cross-entropy SGD; cfg.seed
/// seeds the initial weights, the sample order and the augmentation.
VictimTraining train_victim(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                            const VictimRecipe& recipe = {});

double accuracy(const VictimModel& model, const Dataset& ds);

void save_victim(const VictimModel& model, const std::filesystem::path& path);
VictimModel load_victim(const std::filesystem::path& path);

}  // namespace holmes
