#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vleto/matrix.hpp"
#include "vleto/rng.hpp"

namespace vleto {

/// Per-class mean embedding (1 x d_emb) with the task that produced it.
struct Prototype {
    int class_id = 0;
    Matrix vector;
    std::size_t source_task = 0;
};

/// Evolving cross-task prototype store: the latest vector per class, plus a
/// cache of each class's raw prototype from the most recent task that
/// contained it (used as the previous-task side of drift pairs).
class GlobalPrototypeList {
public:
    bool contains(int class_id) const { return entries_.count(class_id) != 0; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const Prototype& at(int class_id) const {
        auto it = entries_.find(class_id);
        if (it == entries_.end())
            throw DomainError("prototype list: class " + std::to_string(class_id) + " absent");
        return it->second;
    }

    std::vector<int> classes() const {
        std::vector<int> out;
        out.reserve(entries_.size());
        for (const auto& [cls, proto] : entries_) out.push_back(cls);
        return out;
    }

    std::vector<Prototype> snapshot() const {
        std::vector<Prototype> out;
        out.reserve(entries_.size());
        for (const auto& [cls, proto] : entries_) out.push_back(proto);
        return out;
    }

    const Matrix* previous_raw(int class_id) const {
        auto it = prev_cache_.find(class_id);
        return it == prev_cache_.end() ? nullptr : &it->second;
    }

    void store(const Prototype& proto) { entries_[proto.class_id] = proto; }

    void cache_raw(int class_id, const Matrix& raw) { prev_cache_[class_id] = raw; }

private:
    std::map<int, Prototype> entries_;
    std::map<int, Matrix> prev_cache_;
};

/// Per-class arithmetic mean of global embeddings. Every requested class must
/// have at least one sample; an empty class is an error, not a skip.
inline std::vector<Prototype> generate_prototypes(const Matrix& global_emb,
                                                  const std::vector<int>& labels,
                                                  const std::vector<int>& classes,
                                                  std::size_t task_id) {
    if (labels.size() != global_emb.rows())
        throw ShapeError("generate_prototypes: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(global_emb.rows()) + " embeddings");
    std::map<int, std::pair<Matrix, std::size_t>> sums;
    for (int cls : classes) sums.emplace(cls, std::make_pair(Matrix(1, global_emb.cols()), 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = sums.find(labels[i]);
        if (it == sums.end()) continue;
        for (std::size_t j = 0; j < global_emb.cols(); ++j)
            it->second.first(0, j) += global_emb(i, j);
        ++it->second.second;
    }
    std::vector<Prototype> out;
    for (int cls : classes) {
        auto& [sum, count] = sums.at(cls);
        if (count == 0)
            throw DomainError("generate_prototypes: class " + std::to_string(cls) +
                              " has no samples");
        Prototype p;
        p.class_id = cls;
        p.vector = scale(sum, 1.0 / static_cast<double>(count));
        p.source_task = task_id;
        out.push_back(std::move(p));
    }
    return out;
}

/// a.b / (|a| |b|); zero vectors are rejected so degenerate inputs cannot
/// silently pull drift means toward zero.
inline double cosine_sim(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "cosine_sim");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a.data()[i] * b.data()[i];
        na += a.data()[i] * a.data()[i];
        nb += b.data()[i] * b.data()[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw DomainError("cosine_sim: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// A (previous-task, current-task) prototype pair for one shared class.
struct DriftPair {
    Matrix previous;
    Matrix current;
};

/// Class-incremental evolution: the mean pairwise cosine similarity of the
/// drift pairs, scaled by gamma, is added elementwise (scalar broadcast) to
/// the stored previous-class prototype. With no shared classes between
/// adjacent tasks there is nothing to measure drift on; the prototype is kept
/// as stored and fell_back reports the degenerate case for logging.
inline Prototype evolve_class_prototype(const Prototype& previous,
                                        const std::vector<DriftPair>& drift_pairs, double gamma,
                                        bool* fell_back = nullptr) {
    if (gamma < 0.0) throw ConfigError("evolve_class_prototype: gamma must be >= 0");
    Prototype out = previous;
    if (drift_pairs.empty()) {
        if (fell_back) *fell_back = true;
        return out;
    }
    if (fell_back) *fell_back = false;
    double mean_sim = 0.0;
    for (const auto& pair : drift_pairs) mean_sim += cosine_sim(pair.previous, pair.current);
    mean_sim /= static_cast<double>(drift_pairs.size());
    for (double& v : out.vector.data()) v += gamma * mean_sim;
    return out;
}

/// Feature-incremental fusion: beta * current + (1-beta) * global when the
/// class already has a global entry; the current prototype otherwise.
inline Prototype fuse_feature_prototype(const Prototype& current,
                                        const GlobalPrototypeList& list, double beta) {
    if (beta < 0.0 || beta > 1.0)
        throw ConfigError("fuse_feature_prototype: beta must be in [0, 1]");
    if (!list.contains(current.class_id)) return current;
    const Prototype& global = list.at(current.class_id);
    check_same_shape(current.vector, global.vector, "fuse_feature_prototype");
    Prototype out = current;
    for (std::size_t i = 0; i < out.vector.size(); ++i)
        out.vector.data()[i] =
            beta * current.vector.data()[i] + (1.0 - beta) * global.vector.data()[i];
    return out;
}

/// Installs the task's outgoing prototypes: evolved/fused vectors overwrite
/// or insert entries, and the raw current-task prototypes refresh the
/// previous-task cache used for the next task's drift pairs.
inline void update_global_list(GlobalPrototypeList& list, const std::vector<Prototype>& fused,
                               const std::vector<Prototype>& raw_current) {
    for (const auto& p : fused) list.store(p);
    for (const auto& p : raw_current) list.cache_raw(p.class_id, p.vector);
}

/// Synthetic batch replayed through the server model in place of real data.
struct PrototypeBatch {
    Matrix vectors;           // n x d_emb
    std::vector<int> labels;  // class ids
};

/// Rows are drawn round-robin over the prototype list; jitter_sigma > 0 adds
/// elementwise Gaussian noise, 0 replays the vectors exactly.
inline PrototypeBatch make_prototype_batch(const std::vector<Prototype>& prototypes,
                                           std::size_t batch_size, double jitter_sigma,
                                           Rng& rng) {
    if (prototypes.empty())
        throw DomainError("make_prototype_batch: no prototypes");
    if (batch_size < 1)
        throw ConfigError("make_prototype_batch: batch_size must be >= 1");
    const std::size_t dim = prototypes.front().vector.cols();
    PrototypeBatch batch;
    batch.vectors = Matrix(batch_size, dim);
    batch.labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const Prototype& p = prototypes[i % prototypes.size()];
        if (p.vector.cols() != dim)
            throw ShapeError("make_prototype_batch: inconsistent prototype dimensions");
        for (std::size_t j = 0; j < dim; ++j) {
            double v = p.vector(0, j);
            if (jitter_sigma > 0.0) v += jitter_sigma * rng.gaussian();
            batch.vectors(i, j) = v;
        }
        batch.labels[i] = p.class_id;
    }
    check_finite(batch.vectors, "make_prototype_batch");
    return batch;
}

}  // namespace vleto
