#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vleto/matrix.hpp"
#include "vleto/rng.hpp"

namespace vleto {

enum class Activation { Identity, ReLU };

/// One dense layer: y = act(x W + b), W is in x out, b is 1 x out.
struct Layer {
    Matrix weight;
    Matrix bias;
    Activation act = Activation::Identity;

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
};

/// Per-parameter matrices mirroring a network's layer shapes.
struct ParamSet {
    std::vector<Matrix> weight;
    std::vector<Matrix> bias;

    std::size_t layer_count() const { return weight.size(); }

    std::size_t entry_count() const {
        std::size_t n = 0;
        for (const auto& w : weight) n += w.size();
        for (const auto& b : bias) n += b.size();
        return n;
    }
};

struct GradientSet {
    ParamSet params;
    Matrix input_gradient;
};

/// Per-parameter boolean map; true entries are excluded from SGD updates.
struct FreezeMask {
    std::vector<std::vector<std::uint8_t>> weight;  // row-major per layer
    std::vector<std::vector<std::uint8_t>> bias;

    bool empty() const { return weight.empty() && bias.empty(); }

    std::size_t frozen_count() const {
        std::size_t n = 0;
        for (const auto& w : weight)
            for (auto f : w) n += f != 0;
        for (const auto& b : bias)
            for (auto f : b) n += f != 0;
        return n;
    }

    std::size_t entry_count() const {
        std::size_t n = 0;
        for (const auto& w : weight) n += w.size();
        for (const auto& b : bias) n += b.size();
        return n;
    }
};

/// Fully connected network with a cached forward pass for backprop.
/// Instances are single-threaded; distinct instances are independent.
class DenseNet {
public:
    DenseNet() = default;

    /// Builds input -> hidden... -> output with ReLU on hidden layers and
    /// identity output. Weights are uniform Xavier draws, biases zero.
    DenseNet(std::size_t input_dim, const std::vector<std::size_t>& hidden,
             std::size_t output_dim, Rng& rng) {
        std::vector<std::size_t> dims;
        dims.push_back(input_dim);
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(output_dim);
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const bool last = (l + 2 == dims.size());
            layers_.push_back(make_layer(dims[l], dims[l + 1],
                                         last ? Activation::Identity : Activation::ReLU,
                                         rng));
        }
    }

    static DenseNet from_layers(std::vector<Layer> layers) {
        if (layers.empty()) throw ShapeError("from_layers: no layers");
        for (std::size_t l = 0; l + 1 < layers.size(); ++l)
            if (layers[l].out_dim() != layers[l + 1].in_dim())
                throw ShapeError("from_layers: layer " + std::to_string(l) +
                                 " output dim does not chain into layer " +
                                 std::to_string(l + 1));
        DenseNet net;
        net.layers_ = std::move(layers);
        return net;
    }

    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.back().out_dim(); }
    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    Layer& layer(std::size_t i) { return layers_[i]; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Batch forward; caches intermediate activations for backward.
    Matrix forward(const Matrix& batch) {
        if (batch.cols() != input_dim())
            throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                             " columns, network expects " + std::to_string(input_dim()));
        cache_.emplace();
        cache_->inputs.clear();
        cache_->preacts.clear();
        cache_->inputs.push_back(batch);
        Matrix x = batch;
        for (const auto& l : layers_) {
            Matrix z = add_row_broadcast(matmul(x, l.weight), l.bias);
            cache_->preacts.push_back(z);
            x = apply_activation(z, l.act);
            cache_->inputs.push_back(x);
        }
        return x;
    }

    /// Backprop from d(loss)/d(output) using the cached forward pass.
    GradientSet backward(const Matrix& d_output) const {
        if (!cache_)
            throw StateError("backward: no cached forward pass");
        const Matrix& out = cache_->inputs.back();
        check_same_shape(d_output, out, "backward");

        GradientSet g;
        g.params.weight.resize(layers_.size());
        g.params.bias.resize(layers_.size());
        Matrix da = d_output;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const Layer& l = layers_[li];
            Matrix dz = da;
            if (l.act == Activation::ReLU) {
                const Matrix& z = cache_->preacts[li];
                for (std::size_t i = 0; i < dz.size(); ++i)
                    if (z.data()[i] <= 0.0) dz.data()[i] = 0.0;
            }
            g.params.weight[li] = matmul(transpose(cache_->inputs[li]), dz);
            g.params.bias[li] = column_sums(dz);
            da = matmul(dz, transpose(l.weight));
        }
        g.input_gradient = da;
        return g;
    }

    void clear_cache() { cache_.reset(); }

    /// FIL input growth: appends freshly initialized rows to the first weight
    /// matrix; surviving rows keep their exact values.
    void grow_input(std::size_t new_input_dim, Rng& rng) {
        Layer& first = layers_.front();
        const std::size_t old_dim = first.in_dim();
        if (new_input_dim < old_dim)
            throw ShapeError("grow_input: cannot shrink input from " +
                             std::to_string(old_dim) + " to " + std::to_string(new_input_dim));
        if (new_input_dim == old_dim) return;
        const double bound = xavier_bound(new_input_dim, first.out_dim());
        Matrix w(new_input_dim, first.out_dim());
        for (std::size_t r = 0; r < old_dim; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = first.weight(r, c);
        for (std::size_t r = old_dim; r < new_input_dim; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
        first.weight = std::move(w);
        cache_.reset();
    }

    /// CIL output growth: appends freshly initialized columns for new classes;
    /// existing class columns and bias entries are preserved bit-exactly.
    void grow_output(std::size_t new_output_dim, Rng& rng) {
        Layer& last = layers_.back();
        const std::size_t old_dim = last.out_dim();
        if (new_output_dim < old_dim)
            throw ShapeError("grow_output: cannot shrink output from " +
                             std::to_string(old_dim) + " to " + std::to_string(new_output_dim));
        if (new_output_dim == old_dim) return;
        const double bound = xavier_bound(last.in_dim(), new_output_dim);
        Matrix w(last.in_dim(), new_output_dim);
        Matrix b(1, new_output_dim);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            for (std::size_t c = 0; c < old_dim; ++c) w(r, c) = last.weight(r, c);
            for (std::size_t c = old_dim; c < new_output_dim; ++c)
                w(r, c) = rng.uniform(-bound, bound);
        }
        for (std::size_t c = 0; c < old_dim; ++c) b(0, c) = last.bias(0, c);
        last.weight = std::move(w);
        last.bias = std::move(b);
        cache_.reset();
    }

    static double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    }

    static Layer make_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
        Layer l;
        l.weight = Matrix(in, out);
        const double bound = xavier_bound(in, out);
        for (std::size_t r = 0; r < in; ++r)
            for (std::size_t c = 0; c < out; ++c) l.weight(r, c) = rng.uniform(-bound, bound);
        l.bias = Matrix(1, out);
        l.act = act;
        return l;
    }

private:
    struct ForwardCache {
        std::vector<Matrix> inputs;   // inputs[l] feeds layer l; back() is the output
        std::vector<Matrix> preacts;  // pre-activation of each layer
    };

    static Matrix apply_activation(const Matrix& z, Activation act) {
        if (act == Activation::Identity) return z;
        Matrix out = z;
        for (double& v : out.data())
            if (v < 0.0) v = 0.0;
        return out;
    }

    std::vector<Layer> layers_;
    mutable std::optional<ForwardCache> cache_;
};

inline void check_grad_shapes(const DenseNet& net, const GradientSet& grads) {
    if (grads.params.weight.size() != net.layer_count() ||
        grads.params.bias.size() != net.layer_count())
        throw ShapeError("gradients: layer count mismatch");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        if (!grads.params.weight[l].same_shape(net.layer(l).weight) ||
            !grads.params.bias[l].same_shape(net.layer(l).bias))
            throw ShapeError("gradients: shape mismatch at layer " + std::to_string(l));
    }
}

inline void check_mask_shapes(const DenseNet& net, const FreezeMask& mask) {
    if (mask.weight.size() != net.layer_count() || mask.bias.size() != net.layer_count())
        throw ShapeError("freeze mask: layer count mismatch");
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        if (mask.weight[l].size() != net.layer(l).weight.size() ||
            mask.bias[l].size() != net.layer(l).bias.size())
            throw ShapeError("freeze mask: shape mismatch at layer " + std::to_string(l));
    }
}

/// theta <- theta - lr * g where the mask is false; masked parameters are
/// left bit-exactly untouched.
inline void sgd_step(DenseNet& net, const GradientSet& grads, double lr,
                     const FreezeMask* mask = nullptr) {
    if (!(lr > 0.0)) throw ConfigError("sgd_step: lr must be > 0");
    check_grad_shapes(net, grads);
    if (mask && !mask->empty()) check_mask_shapes(net, *mask);
    const bool masked = mask && !mask->empty();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        Layer& layer = net.layer(l);
        for (std::size_t i = 0; i < layer.weight.size(); ++i) {
            if (masked && mask->weight[l][i]) continue;
            layer.weight.data()[i] -= lr * grads.params.weight[l].data()[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            if (masked && mask->bias[l][i]) continue;
            layer.bias.data()[i] -= lr * grads.params.bias[l].data()[i];
        }
        check_finite(layer.weight, "sgd_step weight");
        check_finite(layer.bias, "sgd_step bias");
    }
}

/// Row-stabilized softmax (per-row max subtraction).
inline Matrix softmax(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double mx = out(r, 0);
        for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = std::exp(out(r, c) - mx);
            sum += out(r, c);
        }
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= sum;
    }
    return out;
}

struct SoftmaxLoss {
    double loss = 0.0;
    Matrix dlogits;
};

/// Mean cross-entropy over rows; dlogits = (softmax - onehot) / rows.
inline SoftmaxLoss softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows())
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows()) + " rows");
    for (std::size_t r = 0; r < labels.size(); ++r)
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= logits.cols())
            throw DomainError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                              " out of range at row " + std::to_string(r));
    const double n = static_cast<double>(logits.rows());
    SoftmaxLoss result;
    result.dlogits = Matrix(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double mx = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits(r, c) - mx);
        const double log_sum = std::log(sum);
        const std::size_t y = static_cast<std::size_t>(labels[r]);
        result.loss -= (logits(r, y) - mx - log_sum);
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            const double p = std::exp(logits(r, c) - mx) / sum;
            result.dlogits(r, c) = (p - (c == y ? 1.0 : 0.0)) / n;
        }
    }
    result.loss /= n;
    check_finite(result.dlogits, "softmax_cross_entropy");
    return result;
}

}  // namespace vleto
