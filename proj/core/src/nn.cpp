#include "holmes/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Four independent partial sums let the compiler vectorize without reassociating.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) s0 += a[j] * b[j];
    return (s0 + s1) + (s2 + s3);
}

void dense_forward(const Layer& layer, std::span<const double> in, std::span<double> out) {
    const std::size_t n_out = out.size();
    const double* w = layer.weights.data();
    std::copy(layer.bias.data(), layer.bias.data() + n_out, out.begin());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double xi = in[i];
        const double* row = w + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) out[j] += xi * row[j];
    }
}

void apply_activation(LayerKind kind, std::span<const double> in, std::span<double> out) {
    if (kind == LayerKind::relu) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid(in[i]);
    }
}

std::string layer_label(std::size_t index, const Layer& layer) {
    return "layer " + std::to_string(index) + " (" + to_string(layer.kind) + ")";
}

// Parameter gradients are added into `accum` (same layout as the network) when
// non-null; the input gradient is written to `input_grad` when non-null.
void backprop(const Network& net, const ActivationTrace& trace, std::size_t end_layer, std::vector<double> grad,
              std::vector<ParamGrad>* accum, Tensor* input_grad) {
    const auto& layers = net.layers();
    if (trace.values.size() != layers.size() + 1) {
        throw StructuralError("activation trace has " + std::to_string(trace.values.size()) +
                              " entries, network needs " + std::to_string(layers.size() + 1));
    }
    if (end_layer > layers.size()) throw StructuralError("backward start beyond the last layer");
    const std::size_t expected = end_layer == 0 ? net.input_dim() : trace.values[end_layer].size();
    if (grad.size() != expected) {
        throw StructuralError("output gradient has " + std::to_string(grad.size()) + " entries, expected " +
                              std::to_string(expected));
    }

    std::vector<double> next;
    for (std::size_t l = end_layer; l-- > 0;) {
        const Layer& layer = layers[l];
        const Tensor& in = trace.values[l];
        const Tensor& out = trace.values[l + 1];
        if (in.size() != (layer.has_parameters() ? layer.in_dim() : out.size())) {
            throw StructuralError("activation trace does not match " + layer_label(l, layer));
        }
        switch (layer.kind) {
            case LayerKind::relu:
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    if (!(in[i] > 0.0)) grad[i] = 0.0;
                }
                break;
            case LayerKind::sigmoid:
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= out[i] * (1.0 - out[i]);
                break;
            case LayerKind::dense: {
                const std::size_t n_in = layer.in_dim();
                const std::size_t n_out = layer.out_dim();
                if (accum) {
                    double* dw = (*accum)[l].weights.data();
                    double* db = (*accum)[l].bias.data();
                    for (std::size_t j = 0; j < n_out; ++j) db[j] += grad[j];
                    for (std::size_t i = 0; i < n_in; ++i) {
                        const double xi = in[i];
                        if (xi == 0.0) continue;
                        double* row = dw + i * n_out;
                        for (std::size_t j = 0; j < n_out; ++j) row[j] += xi * grad[j];
                    }
                }
                if (l == 0 && !input_grad) return;
                next.assign(n_in, 0.0);
                const double* w = layer.weights.data();
                for (std::size_t i = 0; i < n_in; ++i) {
                    next[i] = dot(w + i * n_out, grad.data(), n_out);
                }
                grad.swap(next);
                break;
            }
        }
    }
    if (input_grad) {
        const std::size_t n = grad.size();
        *input_grad = Tensor({n}, std::move(grad));
    }
}

std::vector<ParamGrad> zero_param_grads(const Network& net) {
    std::vector<ParamGrad> grads;
    grads.reserve(net.layers().size());
    for (const Layer& layer : net.layers()) {
        if (layer.has_parameters()) {
            grads.push_back({Tensor(layer.weights.shape()), Tensor(layer.bias.shape())});
        } else {
            grads.push_back({});
        }
    }
    return grads;
}

// Loss of one sample and, when `grad` is non-null, the gradient to seed backprop
// with. Returns the layer index the gradient refers to.
std::size_t sample_loss(const Network& net, const ActivationTrace& trace, double label, LossKind loss,
                        double* loss_out, std::vector<double>* grad) {
    const auto& layers = net.layers();
    if (loss == LossKind::cross_entropy) {
        const Tensor& z = trace.output();
        const auto cls = static_cast<std::size_t>(label);
        if (label < 0 || cls >= z.size() || static_cast<double>(cls) != label) {
            throw ArgumentError("class label " + std::to_string(label) + " outside [0, " + std::to_string(z.size()) +
                                ")");
        }
        const double zmax = *std::max_element(z.values().begin(), z.values().end());
        double sum = 0.0;
        for (double v : z.values()) sum += std::exp(v - zmax);
        const double lse = zmax + std::log(sum);
        *loss_out = lse - z[cls];
        if (grad) {
            grad->resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) (*grad)[i] = std::exp(z[i] - lse);
            (*grad)[cls] -= 1.0;
        }
        return layers.size();
    }
    if (layers.empty() || layers.back().kind != LayerKind::sigmoid || net.output_dim() != 1) {
        throw ArgumentError("binary cross-entropy needs a single-output network ending in a sigmoid");
    }
    if (label != 0.0 && label != 1.0) throw ArgumentError("binary label must be 0 or 1");
    const double z = trace.values[layers.size() - 1][0];
    *loss_out = softplus(z) - label * z;
    if (grad) grad->assign(1, sigmoid(z) - label);
    return layers.size() - 1;
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "relu") return LayerKind::relu;
    if (name == "sigmoid") return LayerKind::sigmoid;
    throw ArgumentError("unknown layer kind '" + name + "'");
}

Layer Layer::dense(std::size_t in_dim, std::size_t out_dim) {
    if (in_dim == 0 || out_dim == 0) throw DimensionError("dense layer dimensions must be positive");
    return Layer{LayerKind::dense, Tensor({in_dim, out_dim}), Tensor({out_dim})};
}

Network::Network(std::size_t input_dim, std::vector<Layer> layers) : input_dim_(input_dim), layers_(std::move(layers)) {
    if (input_dim_ == 0) throw DimensionError("network input dimension must be positive");
    std::size_t width = input_dim_;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        if (!layer.has_parameters()) {
            if (!layer.weights.empty() || !layer.bias.empty()) {
                throw DimensionError(layer_label(l, layer) + " must not carry parameters");
            }
            continue;
        }
        if (layer.weights.rank() != 2 || layer.bias.rank() != 1) {
            throw DimensionError(layer_label(l, layer) + " needs rank-2 weights and rank-1 bias");
        }
        if (layer.in_dim() != width) {
            throw DimensionError(layer_label(l, layer) + " expects " + std::to_string(layer.in_dim()) +
                                 " inputs but the previous layer produces " + std::to_string(width));
        }
        if (layer.bias.size() != layer.out_dim()) {
            throw DimensionError(layer_label(l, layer) + " bias length " + std::to_string(layer.bias.size()) +
                                 " does not match output width " + std::to_string(layer.out_dim()));
        }
        width = layer.out_dim();
    }
    output_dim_ = width;
}

Network Network::multilayer(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                            bool sigmoid_output, std::uint64_t seed) {
    std::vector<Layer> layers;
    std::size_t width = input_dim;
    for (std::size_t h : hidden) {
        layers.push_back(Layer::dense(width, h));
        layers.push_back(Layer::relu());
        width = h;
    }
    layers.push_back(Layer::dense(width, output_dim));
    if (sigmoid_output) layers.push_back(Layer::sigmoid());
    Network net(input_dim, std::move(layers));
    net.initialize(seed);
    return net;
}

void Network::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (Layer& layer : layers_) {
        if (!layer.has_parameters()) continue;
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
        for (double& w : layer.weights.values()) w = rng.uniform(-limit, limit);
        layer.bias.fill(0.0);
    }
    init_seed_ = seed;
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const Layer& layer : layers_) n += layer.weights.size() + layer.bias.size();
    return n;
}

ActivationTrace forward(const Network& net, const Tensor& input) {
    if (input.size() != net.input_dim()) {
        const std::string who = net.layers().empty() ? std::string("network") : layer_label(0, net.layers().front());
        throw DimensionError(who + " expects " + std::to_string(net.input_dim()) + " inputs, got tensor of shape " +
                             shape_string(input.shape()));
    }
    ActivationTrace trace;
    trace.values.reserve(net.layers().size() + 1);
    trace.values.push_back(Tensor({input.size()}, std::vector<double>(input.values().begin(), input.values().end())));
    for (const Layer& layer : net.layers()) {
        const Tensor& in = trace.values.back();
        Tensor out({layer.has_parameters() ? layer.out_dim() : in.size()});
        if (layer.has_parameters()) {
            dense_forward(layer, in.values(), out.values());
        } else {
            apply_activation(layer.kind, in.values(), out.values());
        }
        trace.values.push_back(std::move(out));
    }
    return trace;
}

std::vector<double> infer(const Network& net, std::span<const double> input) {
    if (input.size() != net.input_dim()) {
        throw DimensionError("network expects " + std::to_string(net.input_dim()) + " inputs, got " +
                             std::to_string(input.size()));
    }
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (const Layer& layer : net.layers()) {
        if (layer.has_parameters()) {
            next.resize(layer.out_dim());
            dense_forward(layer, cur, next);
            cur.swap(next);
        } else {
            apply_activation(layer.kind, cur, cur);
        }
    }
    return cur;
}

Gradients backward(const Network& net, const ActivationTrace& trace, const Tensor& output_grad, bool with_params) {
    return backward_from(net, trace, net.layers().size(), output_grad, with_params);
}

Gradients backward_from(const Network& net, const ActivationTrace& trace, std::size_t end_layer, const Tensor& grad,
                        bool with_params) {
    Gradients out;
    if (with_params) out.params = zero_param_grads(net);
    backprop(net, trace, end_layer, std::vector<double>(grad.values().begin(), grad.values().end()),
             with_params ? &out.params : nullptr, &out.input);
    return out;
}

double mean_loss(const Network& net, std::span<const Tensor> inputs, std::span<const double> labels, LossKind loss) {
    if (inputs.empty()) throw ArgumentError("cannot evaluate loss on an empty dataset");
    if (inputs.size() != labels.size()) throw ArgumentError("inputs and labels differ in length");
    double total = 0.0;
    for (std::size_t n = 0; n < inputs.size(); ++n) {
        const ActivationTrace trace = forward(net, inputs[n]);
        double l = 0.0;
        sample_loss(net, trace, labels[n], loss, &l, nullptr);
        total += l;
    }
    return total / static_cast<double>(inputs.size());
}

TrainHistory fit(Network& net, std::span<const Tensor> inputs, std::span<const double> labels, const TrainConfig& cfg) {
    if (inputs.empty()) throw ArgumentError("cannot fit on an empty dataset");
    if (inputs.size() != labels.size()) {
        throw ArgumentError("inputs (" + std::to_string(inputs.size()) + ") and labels (" +
                            std::to_string(labels.size()) + ") differ in length");
    }
    if (!(cfg.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (cfg.epochs < 0) throw ArgumentError("epoch count must be non-negative");
    if (cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) > inputs.size()) {
        throw ArgumentError("batch size must lie in [1, " + std::to_string(inputs.size()) + "]");
    }

    TrainHistory history;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<ParamGrad> accum = zero_param_grads(net);
    std::vector<double> seed_grad;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            for (ParamGrad& g : accum) {
                g.weights.fill(0.0);
                g.bias.fill(0.0);
            }
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t n = order[k];
                const ActivationTrace trace = forward(net, inputs[n]);
                double l = 0.0;
                const std::size_t end = sample_loss(net, trace, labels[n], cfg.loss, &l, &seed_grad);
                epoch_loss += l;
                backprop(net, trace, end, seed_grad, &accum, nullptr);
            }
            const double step = cfg.learning_rate / static_cast<double>(stop - start);
            for (std::size_t l = 0; l < accum.size(); ++l) {
                Layer& layer = net.layers()[l];
                if (!layer.has_parameters()) continue;
                auto w = layer.weights.values();
                auto dw = accum[l].weights.values();
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * dw[i];
                auto b = layer.bias.values();
                auto db = accum[l].bias.values();
                for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * db[i];
            }
        }
        history.epoch_loss.push_back(epoch_loss / static_cast<double>(inputs.size()));
        if (!std::isfinite(history.epoch_loss.back())) {
            throw Error("training diverged in epoch " + std::to_string(epoch) + " (non-finite loss)");
        }
    }
    return history;
}

}  // namespace holmes
