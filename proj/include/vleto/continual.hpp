#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "vleto/nn.hpp"
#include "vleto/prototypes.hpp"

namespace vleto {

/// Weighting factors of the composite loss; all must be finite and >= 0.
struct LossWeights {
    double lambda_ce = 0.5;
    double lambda_a = 0.5;
    double lambda_f = 0.5;

    void validate() const {
        for (double v : {lambda_ce, lambda_a, lambda_f})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ConfigError("loss weights must be finite and >= 0");
    }
};

/// Per-parameter mean squared gradient over a pass of singleton batches.
struct FisherInfo {
    ParamSet values;
    std::size_t sample_count = 0;
};

/// Threshold schedule: delta = k0 + alpha * ln(t + 1) grows the emphasis on
/// earlier tasks as the schedule advances.
struct FreezePolicy {
    double k0 = 15.0;
    double alpha = 3.0;
    std::size_t task_index = 0;

    double delta() const { return k0 + alpha * std::log(static_cast<double>(task_index) + 1.0); }
};

struct ComposeResult {
    double total = 0.0;
    double ce = 0.0;  // cross-entropy on the real batch
    double a = 0.0;   // evolved-class prototype batch
    double f = 0.0;   // fused-feature prototype batch
    GradientSet server_grads;      // weighted accumulation over all active terms
    Matrix embedding_gradient;     // d(total)/d(global embedding); the CE path only
};

namespace detail {

inline void accumulate_params(ParamSet& into, const ParamSet& from, double weight) {
    if (into.weight.empty()) {
        into = from;
        for (auto& w : into.weight)
            for (double& v : w.data()) v *= weight;
        for (auto& b : into.bias)
            for (double& v : b.data()) v *= weight;
        return;
    }
    for (std::size_t l = 0; l < into.weight.size(); ++l) {
        accumulate(into.weight[l], from.weight[l], weight);
        accumulate(into.bias[l], from.bias[l], weight);
    }
}

}  // namespace detail

/// Composite loss over the real batch and the optional prototype batches.
/// Labels must already be mapped to server logit indices. Gradients of every
/// term accumulate into server_grads with the stated weights; only the real
/// batch contributes an embedding gradient, since prototype batches are fed
/// to the server directly and do not depend on party embeddings.
inline ComposeResult compose_loss(DenseNet& server, const Matrix& global_emb,
                                  const std::vector<int>& labels,
                                  const std::optional<PrototypeBatch>& cil_batch,
                                  const std::optional<PrototypeBatch>& fil_batch,
                                  const LossWeights& w) {
    w.validate();
    ComposeResult result;

    {
        Matrix logits = server.forward(global_emb);
        SoftmaxLoss sl = softmax_cross_entropy(logits, labels);
        GradientSet g = server.backward(sl.dlogits);
        result.ce = sl.loss;
        result.embedding_gradient = scale(g.input_gradient, w.lambda_ce);
        detail::accumulate_params(result.server_grads.params, g.params, w.lambda_ce);
    }
    if (cil_batch) {
        Matrix logits = server.forward(cil_batch->vectors);
        SoftmaxLoss sl = softmax_cross_entropy(logits, cil_batch->labels);
        GradientSet g = server.backward(sl.dlogits);
        result.a = sl.loss;
        detail::accumulate_params(result.server_grads.params, g.params, w.lambda_a);
    }
    if (fil_batch) {
        Matrix logits = server.forward(fil_batch->vectors);
        SoftmaxLoss sl = softmax_cross_entropy(logits, fil_batch->labels);
        GradientSet g = server.backward(sl.dlogits);
        result.f = sl.loss;
        detail::accumulate_params(result.server_grads.params, g.params, w.lambda_f);
    }
    result.total = w.lambda_ce * result.ce + w.lambda_a * result.a + w.lambda_f * result.f;
    return result;
}

/// Elementwise mean of squared per-sample parameter gradients (Fisher
/// Information approximation). Gradients must share one shape family.
inline FisherInfo estimate_fisher(const std::vector<GradientSet>& gradient_samples) {
    if (gradient_samples.empty())
        throw StateError("estimate_fisher: no gradient samples");
    FisherInfo fisher;
    fisher.sample_count = gradient_samples.size();
    const ParamSet& first = gradient_samples.front().params;
    fisher.values.weight.reserve(first.weight.size());
    fisher.values.bias.reserve(first.bias.size());
    for (const auto& w : first.weight) fisher.values.weight.emplace_back(w.rows(), w.cols());
    for (const auto& b : first.bias) fisher.values.bias.emplace_back(b.rows(), b.cols());

    const double inv_n = 1.0 / static_cast<double>(gradient_samples.size());
    for (const auto& sample : gradient_samples) {
        if (sample.params.weight.size() != first.weight.size())
            throw ShapeError("estimate_fisher: inconsistent layer counts");
        for (std::size_t l = 0; l < first.weight.size(); ++l) {
            check_same_shape(sample.params.weight[l], fisher.values.weight[l], "estimate_fisher");
            for (std::size_t i = 0; i < sample.params.weight[l].size(); ++i) {
                const double g = sample.params.weight[l].data()[i];
                fisher.values.weight[l].data()[i] += g * g * inv_n;
            }
            for (std::size_t i = 0; i < sample.params.bias[l].size(); ++i) {
                const double g = sample.params.bias[l].data()[i];
                fisher.values.bias[l].data()[i] += g * g * inv_n;
            }
        }
    }
    return fisher;
}

namespace detail {

inline std::pair<double, double> mean_and_population_std(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

inline std::vector<double> flatten_fisher(const FisherInfo& f) {
    std::vector<double> values;
    for (const auto& w : f.values.weight) values.insert(values.end(), w.data().begin(), w.data().end());
    for (const auto& b : f.values.bias) values.insert(values.end(), b.data().begin(), b.data().end());
    return values;
}

}  // namespace detail

/// kappa = mean(F) - delta * population_std(F) over every scalar entry.
inline double compute_threshold(const FisherInfo& fisher, const FreezePolicy& policy) {
    const std::vector<double> values = detail::flatten_fisher(fisher);
    if (values.empty()) throw StateError("compute_threshold: empty Fisher information");
    const auto [mean, stddev] = detail::mean_and_population_std(values);
    return mean - policy.delta() * stddev;
}

/// Per-layer alternative to compute_threshold: statistics pooled over each
/// layer's weight and bias entries separately.
inline std::vector<double> compute_layer_thresholds(const FisherInfo& fisher,
                                                    const FreezePolicy& policy) {
    std::vector<double> kappas;
    for (std::size_t l = 0; l < fisher.values.weight.size(); ++l) {
        std::vector<double> values(fisher.values.weight[l].data());
        values.insert(values.end(), fisher.values.bias[l].data().begin(),
                      fisher.values.bias[l].data().end());
        if (values.empty()) throw StateError("compute_layer_thresholds: empty layer");
        const auto [mean, stddev] = detail::mean_and_population_std(values);
        kappas.push_back(mean - policy.delta() * stddev);
    }
    return kappas;
}

/// True (frozen) where F >= kappa, false (updatable) otherwise.
inline FreezeMask build_freeze_mask(const FisherInfo& fisher, double kappa) {
    FreezeMask mask;
    for (const auto& w : fisher.values.weight) {
        std::vector<std::uint8_t> flags(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) flags[i] = w.data()[i] >= kappa ? 1 : 0;
        mask.weight.push_back(std::move(flags));
    }
    for (const auto& b : fisher.values.bias) {
        std::vector<std::uint8_t> flags(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) flags[i] = b.data()[i] >= kappa ? 1 : 0;
        mask.bias.push_back(std::move(flags));
    }
    return mask;
}

/// build_freeze_mask with one kappa per layer.
inline FreezeMask build_freeze_mask_per_layer(const FisherInfo& fisher,
                                              const std::vector<double>& kappas) {
    if (kappas.size() != fisher.values.weight.size())
        throw ShapeError("build_freeze_mask_per_layer: kappa count != layer count");
    FreezeMask mask;
    for (std::size_t l = 0; l < fisher.values.weight.size(); ++l) {
        const Matrix& w = fisher.values.weight[l];
        const Matrix& b = fisher.values.bias[l];
        std::vector<std::uint8_t> wf(w.size()), bf(b.size());
        for (std::size_t i = 0; i < w.size(); ++i) wf[i] = w.data()[i] >= kappas[l] ? 1 : 0;
        for (std::size_t i = 0; i < b.size(); ++i) bf[i] = b.data()[i] >= kappas[l] ? 1 : 0;
        mask.weight.push_back(std::move(wf));
        mask.bias.push_back(std::move(bf));
    }
    return mask;
}

/// Elementwise max of two Fisher estimates (accumulated mode). When the newer
/// estimate is larger because the input layer grew, the older one's entries
/// align with the leading flat positions of the grown tensors.
inline FisherInfo fisher_elementwise_max(const FisherInfo& older, const FisherInfo& newer) {
    FisherInfo out = newer;
    for (std::size_t l = 0; l < out.values.weight.size() && l < older.values.weight.size(); ++l) {
        if (older.values.weight[l].size() > out.values.weight[l].size() ||
            older.values.bias[l].size() > out.values.bias[l].size())
            throw ShapeError("fisher_elementwise_max: older estimate is larger than newer");
        for (std::size_t i = 0; i < older.values.weight[l].size(); ++i)
            out.values.weight[l].data()[i] =
                std::max(out.values.weight[l].data()[i], older.values.weight[l].data()[i]);
        for (std::size_t i = 0; i < older.values.bias[l].size(); ++i)
            out.values.bias[l].data()[i] =
                std::max(out.values.bias[l].data()[i], older.values.bias[l].data()[i]);
    }
    return out;
}

/// An all-frozen local model cannot learn the current task, so the frozen
/// fraction is capped by unfreezing the lowest-Fisher frozen entries (stable
/// order on ties). Returns how many entries were unfrozen.
inline std::size_t apply_frozen_cap(FreezeMask& mask, const FisherInfo& fisher,
                                    double max_frozen_fraction) {
    if (max_frozen_fraction < 0.0 || max_frozen_fraction > 1.0)
        throw ConfigError("max_frozen_fraction must be in [0, 1]");
    const std::size_t total = mask.entry_count();
    if (total == 0) return 0;
    const std::size_t allowed =
        static_cast<std::size_t>(std::floor(max_frozen_fraction * static_cast<double>(total)));
    const std::size_t frozen = mask.frozen_count();
    if (frozen <= allowed) return 0;

    // (fisher value, tensor index, entry index); tensors ordered weights then biases.
    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    std::size_t tensor = 0;
    for (std::size_t l = 0; l < mask.weight.size(); ++l, ++tensor)
        for (std::size_t i = 0; i < mask.weight[l].size(); ++i)
            if (mask.weight[l][i])
                candidates.emplace_back(fisher.values.weight[l].data()[i], tensor, i);
    for (std::size_t l = 0; l < mask.bias.size(); ++l, ++tensor)
        for (std::size_t i = 0; i < mask.bias[l].size(); ++i)
            if (mask.bias[l][i])
                candidates.emplace_back(fisher.values.bias[l].data()[i], tensor, i);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });

    const std::size_t to_unfreeze = frozen - allowed;
    for (std::size_t n = 0; n < to_unfreeze; ++n) {
        const auto& [value, t, i] = candidates[n];
        if (t < mask.weight.size())
            mask.weight[t][i] = 0;
        else
            mask.bias[t - mask.weight.size()][i] = 0;
    }
    return to_unfreeze;
}

}  // namespace vleto
