#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holmes/tensor.hpp"

namespace holmes {

enum class LayerKind { dense, relu, sigmoid };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One stage of a feed-forward stack. Dense layers own weights of shape
/// [in_dim, out_dim] and a bias of shape [out_dim]; activations carry nothing.
struct Layer {
    LayerKind kind = LayerKind::relu;
    Tensor weights;
    Tensor bias;

    static Layer dense(std::size_t in_dim, std::size_t out_dim);
    static Layer relu() { return Layer{LayerKind::relu, {}, {}}; }
    static Layer sigmoid() { return Layer{LayerKind::sigmoid, {}, {}}; }

    bool has_parameters() const noexcept { return kind == LayerKind::dense; }
    std::size_t in_dim() const { return weights.shape().at(0); }
    std::size_t out_dim() const { return weights.shape().at(1); }
};

/// Ordered layer stack. Construction validates that Dense dimensions chain.
class Network {
public:
    Network() = default;
    Network(std::size_t input_dim, std::vector<Layer> layers);

    /// Dense+ReLU blocks for every hidden width, then a final Dense to `output_dim`,
    /// optionally followed by a Sigmoid. Weights are Glorot-uniform from `seed`.
    static Network multilayer(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                              bool sigmoid_output, std::uint64_t seed);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }

    /// Redraws every Dense weight uniformly in +-sqrt(6 / (fan_in + fan_out)); biases zero.
    void initialize(std::uint64_t seed);

    /// Seed used by the last initialize(), recorded in saved model files.
    std::optional<std::uint64_t> init_seed() const noexcept { return init_seed_; }
    void set_init_seed(std::optional<std::uint64_t> seed) noexcept { init_seed_ = seed; }

    std::size_t parameter_count() const noexcept;

private:
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
    std::vector<Layer> layers_;
    std::optional<std::uint64_t> init_seed_;
};

/// Input followed by the output of every layer; `values.back()` is the network output.
struct ActivationTrace {
    std::vector<Tensor> values;

    const Tensor& input() const { return values.front(); }
    const Tensor& output() const { return values.back(); }
};

ActivationTrace forward(const Network& net, const Tensor& input);

/// Output only, without keeping intermediate activations.
std::vector<double> infer(const Network& net, std::span<const double> input);

/// Gradient of a Dense layer's parameters; empty tensors for activation layers.
struct ParamGrad {
    Tensor weights;
    Tensor bias;
};

struct Gradients {
    std::vector<ParamGrad> params;
    Tensor input;
};

/// Backpropagates `output_grad` (d loss / d output) through the whole stack.
/// Pass `with_params = false` when only the input gradient is needed.
Gradients backward(const Network& net, const ActivationTrace& trace, const Tensor& output_grad,
                   bool with_params = true);

/// Same as backward() but `grad` is taken with respect to the output of layer
/// `end_layer - 1` (the input of layer `end_layer`), skipping the tail of the stack.
/// Used to seed gradients below a sigmoid head without dividing by p(1 - p).
Gradients backward_from(const Network& net, const ActivationTrace& trace, std::size_t end_layer,
                        const Tensor& grad, bool with_params = true);

enum class LossKind { cross_entropy, binary_cross_entropy };

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::cross_entropy;
};

struct TrainHistory {
    std::vector<double> epoch_loss;
};

/// Mini-batch SGD with a fixed learning rate. Labels are class indices for
/// cross-entropy (network emits logits) and 0/1 targets for binary cross-entropy
/// (network ends in a Sigmoid). Sample order is reshuffled per epoch from cfg.seed.
TrainHistory fit(Network& net, std::span<const Tensor> inputs, std::span<const double> labels, const TrainConfig& cfg);

/// Mean loss of `net` over a labelled set, with the same conventions as fit().
double mean_loss(const Network& net, std::span<const Tensor> inputs, std::span<const double> labels, LossKind loss);

}  // namespace holmes
