#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace vleto {

/// Result of one completed task: accuracy on every seen task's test split
/// plus the aggregate over their union.
struct TaskMetrics {
    std::size_t task_id = 0;
    std::vector<std::pair<std::size_t, double>> per_task_accuracy;  // (eval_task, accuracy)
    double aggregate_accuracy = 0.0;
    double final_train_loss = 0.0;
    std::int64_t wall_ms = 0;

    double accuracy_on(std::size_t eval_task) const {
        for (const auto& [task, acc] : per_task_accuracy)
            if (task == eval_task) return acc;
        return -1.0;
    }
};

}  // namespace vleto
