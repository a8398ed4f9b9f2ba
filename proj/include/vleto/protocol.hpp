#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vleto/continual.hpp"
#include "vleto/metrics.hpp"
#include "vleto/nn.hpp"
#include "vleto/prototypes.hpp"
#include "vleto/tasks.hpp"

namespace vleto {

enum class Direction { EmbeddingUp, GradientDown };

/// One payload exchanged between a passive party and the server during a
/// training step.
struct RoundMessage {
    Direction direction = Direction::EmbeddingUp;
    std::size_t party_id = 0;
    std::size_t batch_index = 0;
    Matrix payload;
};

/// Elementwise sum of the parties' embedding uploads. All expected parties
/// must have reported with identical payload shapes.
inline Matrix aggregate_embeddings(const std::vector<RoundMessage>& messages,
                                   const std::vector<std::size_t>& expected_parties) {
    if (messages.empty()) throw ProtocolError("aggregate: no embedding messages");
    std::vector<std::size_t> missing;
    for (std::size_t id : expected_parties) {
        bool found = false;
        for (const auto& m : messages)
            if (m.party_id == id && m.direction == Direction::EmbeddingUp) found = true;
        if (!found) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::string who;
        for (std::size_t id : missing) who += (who.empty() ? "" : ", ") + std::to_string(id);
        throw ProtocolError("aggregate: missing embedding upload from party " + who);
    }
    Matrix sum = messages.front().payload;
    for (std::size_t i = 1; i < messages.size(); ++i) {
        if (!messages[i].payload.same_shape(sum))
            throw ProtocolError("aggregate: payload shape mismatch from party " +
                                std::to_string(messages[i].party_id));
        accumulate(sum, messages[i].payload);
    }
    return sum;
}

/// Feature-holding participant: local model, Fisher estimate and freeze mask.
/// Never touches labels; its inputs are feature columns only.
class PassiveParty {
public:
    PassiveParty(std::size_t id, std::vector<std::size_t> local_hidden, std::size_t d_emb)
        : id_(id), local_hidden_(std::move(local_hidden)), d_emb_(d_emb) {}

    std::size_t id() const { return id_; }
    const DenseNet& model() const { return model_; }
    DenseNet& model() { return model_; }
    const FreezeMask& freeze_mask() const { return mask_; }
    const FisherInfo& fisher() const { return fisher_; }
    const std::vector<std::size_t>& feature_view() const { return view_; }
    bool initialized() const { return model_.layer_count() > 0; }

    /// Installs the task's feature view. The first call builds the local
    /// model; later calls may only append columns (cumulative views) and
    /// grow the input layer, carrying surviving rows and extending the
    /// freeze mask and Fisher info with fresh unfrozen entries.
    void set_feature_view(const std::vector<std::size_t>& view, Rng& rng) {
        if (!initialized()) {
            view_ = view;
            model_ = DenseNet(view.size(), local_hidden_, d_emb_, rng);
            return;
        }
        if (view.size() < view_.size())
            throw StateError("party " + std::to_string(id_) + ": feature view cannot shrink");
        for (std::size_t i = 0; i < view_.size(); ++i)
            if (view_[i] != view[i])
                throw StateError("party " + std::to_string(id_) +
                                 ": new feature view must extend the old one");
        if (view.size() == view_.size()) return;
        const std::size_t added = view.size() - view_.size();
        view_ = view;
        model_.grow_input(view.size(), rng);
        // New first-layer rows sit at the end of the row-major weight data.
        const std::size_t new_entries = added * model_.layer(0).out_dim();
        if (!mask_.empty()) mask_.weight[0].insert(mask_.weight[0].end(), new_entries, 0);
        if (fisher_.sample_count > 0) {
            Matrix grown(model_.layer(0).weight.rows(), model_.layer(0).weight.cols());
            const Matrix& old = fisher_.values.weight[0];
            for (std::size_t r = 0; r < old.rows(); ++r)
                for (std::size_t c = 0; c < old.cols(); ++c) grown(r, c) = old(r, c);
            fisher_.values.weight[0] = std::move(grown);
        }
    }

    /// Embedding upload for the given sample rows; reads only this party's
    /// visible feature columns. Columns at positions >= visible_columns are
    /// fed as zero (used to evaluate earlier feature-incremental views).
    RoundMessage forward_batch(const std::vector<std::size_t>& rows, const VerticalDataset& ds,
                               std::size_t batch_index,
                               std::size_t visible_columns = static_cast<std::size_t>(-1)) {
        if (!initialized()) throw StateError("party " + std::to_string(id_) + ": no model");
        if (model_.input_dim() != view_.size())
            throw StateError("party " + std::to_string(id_) +
                             ": model input dim does not match feature view");
        Matrix batch(rows.size(), view_.size());
        const Matrix& f = ds.features();
        const std::size_t limit = std::min(visible_columns, view_.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < limit; ++j) batch(i, j) = f(rows[i], view_[j]);
        RoundMessage msg;
        msg.direction = Direction::EmbeddingUp;
        msg.party_id = id_;
        msg.batch_index = batch_index;
        msg.payload = model_.forward(batch);
        return msg;
    }

    /// Chain-rule gradients from the server's embedding gradient; requires
    /// the matching cached forward pass.
    GradientSet backward_only(const RoundMessage& grad_msg) const {
        if (grad_msg.direction != Direction::GradientDown)
            throw ProtocolError("party " + std::to_string(id_) + ": expected GradientDown");
        return model_.backward(grad_msg.payload);
    }

    /// Masked local update: gradients chained from the downloaded embedding
    /// gradient, applied by SGD under the current freeze mask.
    void backward_apply(const RoundMessage& grad_msg, double lr) {
        GradientSet grads = backward_only(grad_msg);
        sgd_step(model_, grads, lr, &mask_);
    }

    void install_mask(FreezeMask mask) {
        if (!mask.empty()) check_mask_shapes(model_, mask);
        mask_ = std::move(mask);
    }

    void install_fisher(FisherInfo fisher) { fisher_ = std::move(fisher); }

private:
    std::size_t id_;
    std::vector<std::size_t> local_hidden_;
    std::size_t d_emb_;
    std::vector<std::size_t> view_;
    DenseNet model_;
    FisherInfo fisher_;
    FreezeMask mask_;
};

/// Label-holding participant: owns the server model, the evolving prototype
/// list and the composite-loss hyperparameters.
class ActiveParty {
public:
    ActiveParty(std::vector<std::size_t> server_hidden, std::size_t d_emb, LossWeights weights,
                double gamma, double beta)
        : server_hidden_(std::move(server_hidden)),
          d_emb_(d_emb),
          weights_(weights),
          gamma_(gamma),
          beta_(beta) {
        weights_.validate();
    }

    const DenseNet& server() const { return server_; }
    DenseNet& server() { return server_; }
    const GlobalPrototypeList& prototypes() const { return prototypes_; }
    GlobalPrototypeList& prototypes() { return prototypes_; }
    const LossWeights& weights() const { return weights_; }
    double gamma() const { return gamma_; }
    double beta() const { return beta_; }
    bool initialized() const { return server_.layer_count() > 0; }

    const std::vector<int>& known_classes() const { return known_classes_; }

    int logit_of(int class_id) const {
        for (std::size_t i = 0; i < known_classes_.size(); ++i)
            if (known_classes_[i] == class_id) return static_cast<int>(i);
        throw DomainError("active party: class " + std::to_string(class_id) + " unknown");
    }

    /// Expands the server output layer for unseen classes; logits of classes
    /// already known keep their parameters bit-exactly.
    void ensure_classes(const std::vector<int>& classes, Rng& rng) {
        std::vector<int> fresh;
        for (int c : classes) {
            bool known = false;
            for (int k : known_classes_)
                if (k == c) known = true;
            if (!known) fresh.push_back(c);
        }
        if (fresh.empty()) return;
        known_classes_.insert(known_classes_.end(), fresh.begin(), fresh.end());
        if (!initialized())
            server_ = DenseNet(d_emb_, server_hidden_, known_classes_.size(), rng);
        else
            server_.grow_output(known_classes_.size(), rng);
    }

    std::vector<int> map_labels(const std::vector<int>& class_ids) const {
        std::vector<int> out(class_ids.size());
        for (std::size_t i = 0; i < class_ids.size(); ++i) out[i] = logit_of(class_ids[i]);
        return out;
    }

    struct StepResult {
        double loss = 0.0;
        double ce = 0.0;
        double a = 0.0;
        double f = 0.0;
        std::vector<RoundMessage> grad_messages;
    };

    /// One global optimization step: composite loss, server SGD update, and
    /// the embedding gradient fanned out to every party. Under sum
    /// aggregation the gradient of the sum w.r.t. each summand is identity,
    /// so all parties receive the same payload.
    StepResult step(const Matrix& global_emb, const std::vector<int>& batch_classes,
                    const std::optional<PrototypeBatch>& cil_batch,
                    const std::optional<PrototypeBatch>& fil_batch, double lr,
                    const std::vector<std::size_t>& party_ids, std::size_t batch_index) {
        ComposeResult composed = compose_loss(server_, global_emb, map_labels(batch_classes),
                                              remap(cil_batch), remap(fil_batch), weights_);
        sgd_step(server_, composed.server_grads, lr);
        StepResult result;
        result.loss = composed.total;
        result.ce = composed.ce;
        result.a = composed.a;
        result.f = composed.f;
        for (std::size_t id : party_ids) {
            RoundMessage msg;
            msg.direction = Direction::GradientDown;
            msg.party_id = id;
            msg.batch_index = batch_index;
            msg.payload = composed.embedding_gradient;
            result.grad_messages.push_back(std::move(msg));
        }
        return result;
    }

    /// Embedding gradient of the weighted cross-entropy term only, with no
    /// parameter update; used for the Fisher estimation pass.
    Matrix embedding_gradient(const Matrix& global_emb, const std::vector<int>& batch_classes) {
        Matrix logits = server_.forward(global_emb);
        SoftmaxLoss sl = softmax_cross_entropy(logits, map_labels(batch_classes));
        GradientSet g = server_.backward(sl.dlogits);
        return scale(g.input_gradient, weights_.lambda_ce);
    }

    Matrix predict_logits(const Matrix& global_emb) { return server_.forward(global_emb); }

private:
    std::optional<PrototypeBatch> remap(const std::optional<PrototypeBatch>& batch) const {
        if (!batch) return std::nullopt;
        PrototypeBatch mapped = *batch;
        mapped.labels = map_labels(batch->labels);
        return mapped;
    }

    std::vector<std::size_t> server_hidden_;
    std::size_t d_emb_;
    LossWeights weights_;
    double gamma_;
    double beta_;
    DenseNet server_;
    GlobalPrototypeList prototypes_;
    std::vector<int> known_classes_;
};

/// Everything the round orchestration needs beyond the data and schedule.
struct ProtocolOptions {
    std::size_t k_parties = 4;
    std::size_t d_emb = 16;
    std::vector<std::size_t> local_hidden = {16};
    std::vector<std::size_t> server_hidden = {32};
    double lr = 1e-3;
    LossWeights weights;
    double gamma = 0.5;
    double beta = 0.5;
    double k0 = 15.0;
    double alpha = 3.0;
    double jitter_sigma = 0.0;
    double max_frozen_fraction = 0.9;
    bool lmo_enabled = true;
    bool accumulate_fisher = false;
    bool kappa_per_layer = false;
    bool parallel_parties = false;
    std::uint64_t seed = 1;
    bool log_warnings = true;
};

/// Synchronous-round driver for one active and K passive parties across a
/// task schedule. Sequential mode fixes party iteration order; parallel mode
/// runs party forward/backward concurrently but still aggregates in party-id
/// order after the barrier, so results are bit-identical.
class Orchestrator {
public:
    using MessageHook = std::function<void(const RoundMessage&)>;
    using FisherHook = std::function<void(std::size_t party, std::size_t task,
                                          const FisherInfo&, const FreezeMask&, double kappa)>;

    Orchestrator(VerticalDataset dataset, SplitIndices split, TaskSchedule schedule,
                 ProtocolOptions options)
        : ds_(std::move(dataset)),
          split_(std::move(split)),
          schedule_(std::move(schedule)),
          opt_(std::move(options)),
          active_(opt_.server_hidden, opt_.d_emb, opt_.weights, opt_.gamma, opt_.beta),
          rng_(opt_.seed) {
        if (opt_.k_parties != ds_.n_parties())
            throw ConfigError("orchestrator: config has " + std::to_string(opt_.k_parties) +
                              " parties but the dataset partition has " +
                              std::to_string(ds_.n_parties()));
        for (std::size_t k = 0; k < opt_.k_parties; ++k)
            parties_.emplace_back(k, opt_.local_hidden, opt_.d_emb);
    }

    const VerticalDataset& dataset() const { return ds_; }
    const TaskSchedule& schedule() const { return schedule_; }
    const ActiveParty& active_party() const { return active_; }
    const std::vector<PassiveParty>& parties() const { return parties_; }
    std::size_t tasks_completed() const { return cursor_; }

    void set_message_hook(MessageHook hook) { message_hook_ = std::move(hook); }
    void set_fisher_hook(FisherHook hook) { fisher_hook_ = std::move(hook); }

    /// Prototype store snapshots taken after each task, for export.
    const std::vector<Prototype>& prototype_snapshots() const { return snapshots_; }

    TaskMetrics run_next_task() {
        if (cursor_ >= schedule_.size()) throw StateError("orchestrator: schedule exhausted");
        return run_task(schedule_.at(cursor_));
    }

    std::vector<TaskMetrics> run_all() {
        std::vector<TaskMetrics> all;
        while (cursor_ < schedule_.size()) all.push_back(run_next_task());
        return all;
    }

    /// Full cycle for one task: resize hooks, epoch/batch training rounds,
    /// prototype generation + evolution, Fisher estimation + mask refresh,
    /// then evaluation over all seen tasks.
    TaskMetrics run_task(const TaskDescriptor& task) {
        if (task.task_id != cursor_)
            throw StateError("orchestrator: task " + std::to_string(task.task_id) +
                             " run out of order");
        const auto wall_start = std::chrono::steady_clock::now();

        resize_for_task(task);
        TaskDataView train_view(ds_, task, split_.train);
        if (train_view.rows().empty())
            throw ConfigError("task " + std::to_string(task.task_id) + ": no training samples");

        const std::vector<Prototype> replay_cil = replay_prototypes(task, /*previous_only=*/true);
        const std::vector<Prototype> replay_fil = replay_prototypes(task, /*previous_only=*/false);
        const bool use_cil = task.mode == TaskMode::CIL &&
                             active_.weights().lambda_a > 0.0 && !replay_cil.empty();
        const bool use_fil = task.mode == TaskMode::FIL &&
                             active_.weights().lambda_f > 0.0 && !replay_fil.empty();

        double final_loss = 0.0;
        std::size_t batch_index = 0;
        std::vector<std::size_t> order = train_view.rows();
        for (std::size_t epoch = 0; epoch < task.epochs; ++epoch) {
            rng_.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += task.batch_size) {
                const std::size_t end = std::min(start + task.batch_size, order.size());
                const std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
                try {
                    std::vector<RoundMessage> ups = forward_parties(rows, batch_index);
                    Matrix global_emb = aggregate_embeddings(ups, party_ids());
                    const std::vector<int> labels = train_view.gather_labels(rows);

                    std::optional<PrototypeBatch> cil_batch, fil_batch;
                    if (use_cil)
                        cil_batch =
                            make_prototype_batch(replay_cil, rows.size(), opt_.jitter_sigma, rng_);
                    if (use_fil)
                        fil_batch =
                            make_prototype_batch(replay_fil, rows.size(), opt_.jitter_sigma, rng_);

                    ActiveParty::StepResult step =
                        active_.step(global_emb, labels, cil_batch, fil_batch, opt_.lr,
                                     party_ids(), batch_index);
                    if (!std::isfinite(step.loss))
                        throw DivergenceError("non-finite training loss", task.task_id, epoch,
                                              batch_index, step.loss);
                    backward_parties(step.grad_messages);
                    if (message_hook_) {
                        for (const auto& m : ups) message_hook_(m);
                        for (const auto& m : step.grad_messages) message_hook_(m);
                    }
                    final_loss = step.loss;
                } catch (const DomainError& e) {
                    // Parameter blow-ups trip the finite guards before the
                    // loss itself reads as NaN; both end in the same abort.
                    throw DivergenceError(std::string("diverged: ") + e.what(), task.task_id,
                                          epoch, batch_index,
                                          std::numeric_limits<double>::quiet_NaN());
                }
                ++batch_index;
            }
        }

        update_prototypes(task, train_view);
        if (opt_.lmo_enabled) refresh_freeze_masks(task, train_view);

        TaskMetrics metrics = evaluate(task);
        metrics.final_train_loss = final_loss;
        metrics.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - wall_start)
                              .count();
        ++cursor_;
        return metrics;
    }

    /// Accuracy of the current models on one task's test split, using that
    /// task's own feature view.
    double evaluate_task(std::size_t eval_task_id) {
        const TaskDescriptor& eval_task = schedule_.at(eval_task_id);
        TaskDataView view(ds_, eval_task, split_.test);
        if (view.rows().empty()) return 0.0;
        return accuracy_on_rows(view.rows(), visible_columns_for(eval_task));
    }

private:
    std::vector<std::size_t> party_ids() const {
        std::vector<std::size_t> ids(parties_.size());
        for (std::size_t k = 0; k < parties_.size(); ++k) ids[k] = parties_[k].id();
        return ids;
    }

    void resize_for_task(const TaskDescriptor& task) {
        active_.ensure_classes(task.resolved_classes(ds_), rng_);
        for (std::size_t k = 0; k < parties_.size(); ++k)
            parties_[k].set_feature_view(task.resolved_view(ds_, k), rng_);
    }

    /// Prototype list entries replayed during this task's training:
    /// previous-task classes for CIL, the current class set for FIL.
    std::vector<Prototype> replay_prototypes(const TaskDescriptor& task,
                                             bool previous_only) const {
        const std::vector<int> classes = task.resolved_classes(ds_);
        std::vector<Prototype> out;
        for (const Prototype& p : active_.prototypes().snapshot()) {
            const bool in_task =
                std::find(classes.begin(), classes.end(), p.class_id) != classes.end();
            if (previous_only ? !in_task : in_task) out.push_back(p);
        }
        return out;
    }

    static constexpr std::size_t kAllColumns = static_cast<std::size_t>(-1);

    std::vector<RoundMessage> forward_parties(const std::vector<std::size_t>& rows,
                                              std::size_t batch_index,
                                              const std::vector<std::size_t>& visible = {}) {
        std::vector<RoundMessage> ups(parties_.size());
        auto visible_for = [&visible](std::size_t k) {
            return k < visible.size() ? visible[k] : kAllColumns;
        };
        if (opt_.parallel_parties) {
            std::vector<std::future<RoundMessage>> futures;
            for (std::size_t k = 0; k < parties_.size(); ++k) {
                PassiveParty& party = parties_[k];
                const std::size_t vis = visible_for(k);
                futures.push_back(std::async(std::launch::async, [&party, &rows, batch_index,
                                                                  vis, this]() {
                    return party.forward_batch(rows, ds_, batch_index, vis);
                }));
            }
            for (std::size_t k = 0; k < futures.size(); ++k) ups[k] = futures[k].get();
        } else {
            for (std::size_t k = 0; k < parties_.size(); ++k)
                ups[k] = parties_[k].forward_batch(rows, ds_, batch_index, visible_for(k));
        }
        return ups;
    }

    void backward_parties(const std::vector<RoundMessage>& grad_messages) {
        if (grad_messages.size() != parties_.size())
            throw ProtocolError("gradient fan-out count mismatch");
        if (opt_.parallel_parties) {
            std::vector<std::future<void>> futures;
            for (std::size_t k = 0; k < parties_.size(); ++k)
                futures.push_back(std::async(std::launch::async, [this, k, &grad_messages]() {
                    parties_[k].backward_apply(grad_messages[k], opt_.lr);
                }));
            for (auto& f : futures) f.get();
        } else {
            for (std::size_t k = 0; k < parties_.size(); ++k)
                parties_[k].backward_apply(grad_messages[k], opt_.lr);
        }
    }

    /// End-of-task prototype generation over the full task training view,
    /// followed by the mode's evolution step and the global-list update.
    void update_prototypes(const TaskDescriptor& task, const TaskDataView& train_view) {
        const std::vector<std::size_t>& rows = train_view.rows();
        std::vector<RoundMessage> ups = forward_parties(rows, 0);
        Matrix global_emb = aggregate_embeddings(ups, party_ids());
        const std::vector<int> labels = train_view.gather_labels(rows);
        const std::vector<int> classes = task.resolved_classes(ds_);
        const std::vector<Prototype> raw =
            generate_prototypes(global_emb, labels, classes, task.task_id);

        GlobalPrototypeList& list = active_.prototypes();
        std::vector<Prototype> outgoing;
        if (task.mode == TaskMode::CIL) {
            // Drift pairs: classes of this task that already have a cached
            // raw prototype from an earlier task.
            std::vector<DriftPair> pairs;
            for (const Prototype& p : raw)
                if (const Matrix* prev = list.previous_raw(p.class_id))
                    pairs.push_back(DriftPair{*prev, p.vector});
            bool any_fallback = false;
            for (const Prototype& stored : list.snapshot()) {
                const bool in_task =
                    std::find(classes.begin(), classes.end(), stored.class_id) != classes.end();
                if (in_task) continue;
                bool fell_back = false;
                outgoing.push_back(
                    evolve_class_prototype(stored, pairs, active_.gamma(), &fell_back));
                any_fallback = any_fallback || fell_back;
            }
            if (any_fallback && opt_.log_warnings)
                std::cerr << "[vleto] task " << task.task_id
                          << ": no classes shared with an earlier task; previous-class "
                             "prototypes carried over unchanged\n";
            outgoing.insert(outgoing.end(), raw.begin(), raw.end());
        } else {
            for (const Prototype& p : raw)
                outgoing.push_back(fuse_feature_prototype(p, list, active_.beta()));
        }
        update_global_list(list, outgoing, raw);

        for (const Prototype& p : list.snapshot()) {
            Prototype snap = p;
            snap.source_task = task.task_id;
            snapshots_.push_back(std::move(snap));
        }
    }

    /// Fisher estimation pass: one epoch-equivalent of singleton
    /// forward/backward chains with no parameter updates, then threshold and
    /// mask refresh per party.
    void refresh_freeze_masks(const TaskDescriptor& task, const TaskDataView& train_view) {
        std::vector<std::vector<GradientSet>> samples(parties_.size());
        for (std::size_t row : train_view.rows()) {
            const std::vector<std::size_t> one{row};
            std::vector<RoundMessage> ups = forward_parties(one, 0);
            Matrix emb = aggregate_embeddings(ups, party_ids());
            const std::vector<int> label = train_view.gather_labels(one);
            Matrix grad = active_.embedding_gradient(emb, label);
            RoundMessage down;
            down.direction = Direction::GradientDown;
            down.payload = std::move(grad);
            for (std::size_t k = 0; k < parties_.size(); ++k) {
                down.party_id = parties_[k].id();
                samples[k].push_back(parties_[k].backward_only(down));
            }
        }
        for (std::size_t k = 0; k < parties_.size(); ++k) {
            FisherInfo fisher = estimate_fisher(samples[k]);
            if (opt_.accumulate_fisher && parties_[k].fisher().sample_count > 0)
                fisher = fisher_elementwise_max(parties_[k].fisher(), fisher);
            FreezePolicy policy{opt_.k0, opt_.alpha, task.task_id};
            double kappa = 0.0;
            FreezeMask mask;
            if (opt_.kappa_per_layer) {
                const std::vector<double> kappas = compute_layer_thresholds(fisher, policy);
                mask = build_freeze_mask_per_layer(fisher, kappas);
                kappa = kappas.empty() ? 0.0 : kappas.front();
            } else {
                kappa = compute_threshold(fisher, policy);
                mask = build_freeze_mask(fisher, kappa);
            }
            const std::size_t unfrozen = apply_frozen_cap(mask, fisher, opt_.max_frozen_fraction);
            if (unfrozen > 0 && opt_.log_warnings)
                std::cerr << "[vleto] task " << task.task_id << ", party " << k
                          << ": freeze mask saturated; unfroze " << unfrozen
                          << " lowest-Fisher parameters to keep the model trainable\n";
            if (fisher_hook_) fisher_hook_(k, task.task_id, fisher, mask, kappa);
            parties_[k].install_fisher(std::move(fisher));
            parties_[k].install_mask(std::move(mask));
        }
    }

    /// Earlier feature-incremental tasks are evaluated with their own view:
    /// the current models run with columns outside that task's (prefix) view
    /// fed as zeros. A full view disables masking.
    std::vector<std::size_t> visible_columns_for(const TaskDescriptor& eval_task) const {
        if (eval_task.feature_view.empty()) return {};
        std::vector<std::size_t> visible(parties_.size());
        for (std::size_t k = 0; k < parties_.size(); ++k)
            visible[k] = eval_task.resolved_view(ds_, k).size();
        return visible;
    }

    double accuracy_on_rows(const std::vector<std::size_t>& rows,
                            const std::vector<std::size_t>& visible) {
        std::vector<RoundMessage> ups = forward_parties(rows, 0, visible);
        Matrix emb = aggregate_embeddings(ups, party_ids());
        Matrix logits = active_.predict_logits(emb);
        const auto& labels = ds_.active_labels();
        const auto& known = active_.known_classes();
        std::size_t correct = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c)
                if (logits(i, c) > logits(i, best)) best = c;
            if (known[best] == labels[rows[i]]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(rows.size());
    }

    TaskMetrics evaluate(const TaskDescriptor& task) {
        TaskMetrics metrics;
        metrics.task_id = task.task_id;
        std::set<std::size_t> union_rows;
        for (std::size_t t = 0; t <= task.task_id; ++t) {
            const TaskDescriptor& eval_task = schedule_.at(t);
            TaskDataView view(ds_, eval_task, split_.test);
            metrics.per_task_accuracy.emplace_back(
                t, view.rows().empty()
                       ? 0.0
                       : accuracy_on_rows(view.rows(), visible_columns_for(eval_task)));
            union_rows.insert(view.rows().begin(), view.rows().end());
        }
        const std::vector<std::size_t> all_rows(union_rows.begin(), union_rows.end());
        metrics.aggregate_accuracy =
            all_rows.empty() ? 0.0
                             : accuracy_on_rows(all_rows, visible_columns_for(task));
        return metrics;
    }

    VerticalDataset ds_;
    SplitIndices split_;
    TaskSchedule schedule_;
    ProtocolOptions opt_;
    ActiveParty active_;
    std::vector<PassiveParty> parties_;
    Rng rng_;
    std::size_t cursor_ = 0;
    std::vector<Prototype> snapshots_;
    MessageHook message_hook_;
    FisherHook fisher_hook_;
};

}  // namespace vleto
