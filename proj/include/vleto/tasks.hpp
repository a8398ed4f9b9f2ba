#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "vleto/data.hpp"

namespace vleto {

enum class TaskMode { CIL, FIL };

inline const char* task_mode_name(TaskMode m) { return m == TaskMode::CIL ? "CIL" : "FIL"; }

/// One task of the continual schedule. Empty class_set means "all classes";
/// empty feature_view means "every party sees its full column block".
struct TaskDescriptor {
    std::size_t task_id = 0;
    TaskMode mode = TaskMode::CIL;
    std::vector<int> class_set;
    std::vector<std::vector<std::size_t>> feature_view;  // per party, ascending columns
    std::size_t epochs = 1;
    std::size_t batch_size = 32;

    std::vector<int> resolved_classes(const VerticalDataset& ds) const {
        if (!class_set.empty()) return class_set;
        std::vector<int> all(static_cast<std::size_t>(ds.n_classes()));
        for (int c = 0; c < ds.n_classes(); ++c) all[static_cast<std::size_t>(c)] = c;
        return all;
    }

    std::vector<std::size_t> resolved_view(const VerticalDataset& ds, std::size_t party) const {
        if (feature_view.empty()) return ds.partition().at(party);
        return feature_view.at(party);
    }
};

struct TaskSchedule {
    std::vector<TaskDescriptor> tasks;

    std::size_t size() const { return tasks.size(); }
    const TaskDescriptor& at(std::size_t t) const { return tasks.at(t); }
};

/// Splits classes into n_tasks disjoint contiguous groups; the first
/// n_classes mod n_tasks groups take the larger size.
inline TaskSchedule make_cil_schedule(int n_classes, std::size_t n_tasks) {
    if (n_tasks < 1) throw ConfigError("cil schedule: need at least one task");
    if (n_tasks > static_cast<std::size_t>(n_classes))
        throw ConfigError("cil schedule: " + std::to_string(n_tasks) + " tasks for " +
                          std::to_string(n_classes) + " classes");
    TaskSchedule schedule;
    const std::size_t base = static_cast<std::size_t>(n_classes) / n_tasks;
    const std::size_t extra = static_cast<std::size_t>(n_classes) % n_tasks;
    int next_class = 0;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        TaskDescriptor task;
        task.task_id = t;
        task.mode = TaskMode::CIL;
        const std::size_t len = base + (t < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) task.class_set.push_back(next_class++);
        schedule.tasks.push_back(std::move(task));
    }
    return schedule;
}

/// Cumulative per-party feature views: task t exposes the first
/// ceil((t+1)/n_tasks * |columns|) columns of every party's block.
inline TaskSchedule make_fil_schedule(const std::vector<std::vector<std::size_t>>& partition,
                                      std::size_t n_tasks) {
    if (n_tasks < 1) throw ConfigError("fil schedule: need at least one task");
    TaskSchedule schedule;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        TaskDescriptor task;
        task.task_id = t;
        task.mode = TaskMode::FIL;
        for (const auto& cols : partition) {
            const std::size_t visible = ((t + 1) * cols.size() + n_tasks - 1) / n_tasks;
            task.feature_view.emplace_back(cols.begin(),
                                           cols.begin() + static_cast<std::ptrdiff_t>(visible));
        }
        schedule.tasks.push_back(std::move(task));
    }
    return schedule;
}

/// The only sample access handed to training for a task: rows filtered to the
/// task's class set, feature gathers restricted to the task's view. Data
/// outside the view is unreachable by construction.
class TaskDataView {
public:
    TaskDataView(const VerticalDataset& ds, const TaskDescriptor& task,
                 const std::vector<std::size_t>& split_rows)
        : ds_(&ds), task_(&task) {
        const std::vector<int> classes = task.resolved_classes(ds);
        const std::set<int> class_set(classes.begin(), classes.end());
        const auto& labels = ds.active_labels();
        for (std::size_t row : split_rows)
            if (class_set.count(labels[row])) rows_.push_back(row);
    }

    const std::vector<std::size_t>& rows() const { return rows_; }

    std::vector<std::size_t> party_columns(std::size_t party) const {
        return task_->resolved_view(*ds_, party);
    }

    /// Sub-matrix of the given rows over the given party's visible columns.
    Matrix gather(const std::vector<std::size_t>& row_ids, std::size_t party) const {
        const std::vector<std::size_t> cols = party_columns(party);
        Matrix out(row_ids.size(), cols.size());
        const Matrix& f = ds_->features();
        for (std::size_t i = 0; i < row_ids.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                out(i, j) = f(row_ids[i], cols[j]);
        return out;
    }

    std::vector<int> gather_labels(const std::vector<std::size_t>& row_ids) const {
        const auto& labels = ds_->active_labels();
        std::vector<int> out(row_ids.size());
        for (std::size_t i = 0; i < row_ids.size(); ++i) out[i] = labels[row_ids[i]];
        return out;
    }

private:
    const VerticalDataset* ds_;
    const TaskDescriptor* task_;
    std::vector<std::size_t> rows_;
};

}  // namespace vleto
