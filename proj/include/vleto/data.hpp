#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vleto/matrix.hpp"
#include "vleto/rng.hpp"

namespace vleto {

/// Aligned samples whose feature columns are split across parties. Labels are
/// held by the active party only; passive-side code must never call
/// active_labels(). Immutable after construction, safe for concurrent reads.
class VerticalDataset {
public:
    VerticalDataset() = default;

    VerticalDataset(Matrix features, std::vector<int> labels, int n_classes)
        : features_(std::move(features)), labels_(std::move(labels)), n_classes_(n_classes) {
        if (labels_.size() != features_.rows())
            throw ShapeError("dataset: " + std::to_string(labels_.size()) + " labels for " +
                             std::to_string(features_.rows()) + " samples");
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] < 0 || labels_[i] >= n_classes_)
                throw DomainError("dataset: label " + std::to_string(labels_[i]) +
                                  " out of range at sample " + std::to_string(i));
        // Single implicit party until a partition is installed.
        partition_.resize(1);
        for (std::size_t c = 0; c < features_.cols(); ++c) partition_[0].push_back(c);
    }

    std::size_t n_samples() const { return features_.rows(); }
    std::size_t n_features() const { return features_.cols(); }
    int n_classes() const { return n_classes_; }

    const Matrix& features() const { return features_; }

    /// Label view for active-party code paths (loss, prototypes, metrics).
    const std::vector<int>& active_labels() const { return labels_; }

    const std::vector<std::vector<std::size_t>>& partition() const { return partition_; }
    std::size_t n_parties() const { return partition_.size(); }

    void set_partition(std::vector<std::vector<std::size_t>> partition) {
        validate_partition(partition, features_.cols());
        partition_ = std::move(partition);
    }

    static void validate_partition(const std::vector<std::vector<std::size_t>>& partition,
                                   std::size_t n_cols) {
        std::vector<char> seen(n_cols, 0);
        std::size_t total = 0;
        for (const auto& block : partition) {
            for (std::size_t c : block) {
                if (c >= n_cols)
                    throw ConfigError("partition: column " + std::to_string(c) + " out of range");
                if (seen[c])
                    throw ConfigError("partition: column " + std::to_string(c) + " assigned twice");
                seen[c] = 1;
                ++total;
            }
        }
        if (total != n_cols)
            throw ConfigError("partition: covers " + std::to_string(total) + " of " +
                              std::to_string(n_cols) + " columns");
    }

private:
    Matrix features_;
    std::vector<int> labels_;
    int n_classes_ = 0;
    std::vector<std::vector<std::size_t>> partition_;
};

/// Contiguous near-equal column blocks, one per party; the first M mod K
/// parties receive the larger block.
inline std::vector<std::vector<std::size_t>> partition_vertically(const Matrix& features,
                                                                  std::size_t k_parties,
                                                                  std::uint64_t /*seed*/) {
    const std::size_t m = features.cols();
    if (k_parties < 1) throw ConfigError("partition: need at least one party");
    if (k_parties > m)
        throw ConfigError("partition: " + std::to_string(k_parties) + " parties for " +
                          std::to_string(m) + " columns");
    std::vector<std::vector<std::size_t>> blocks(k_parties);
    const std::size_t base = m / k_parties;
    const std::size_t extra = m % k_parties;
    std::size_t col = 0;
    for (std::size_t k = 0; k < k_parties; ++k) {
        const std::size_t len = base + (k < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) blocks[k].push_back(col++);
    }
    return blocks;
}

/// Gaussian class blobs: class means drawn uniformly on a sphere of radius
/// class_separation, unit-variance features, balanced classes, seeded shuffle.
inline VerticalDataset generate_synthetic(std::size_t n_samples, std::size_t n_features,
                                          int n_classes, double class_separation,
                                          std::uint64_t seed) {
    if (n_samples < 1 || n_features < 1 || n_classes < 1)
        throw ConfigError("generate_synthetic: all counts must be >= 1");
    Rng rng(seed);

    std::vector<std::vector<double>> means(n_classes, std::vector<double>(n_features, 0.0));
    for (auto& mean : means) {
        double norm_sq = 0.0;
        for (double& v : mean) {
            v = rng.gaussian();
            norm_sq += v * v;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > 0.0)
            for (double& v : mean) v *= class_separation / norm;
    }

    std::vector<int> labels;
    labels.reserve(n_samples);
    const std::size_t base = n_samples / static_cast<std::size_t>(n_classes);
    const std::size_t extra = n_samples % static_cast<std::size_t>(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        const std::size_t count = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
        labels.insert(labels.end(), count, c);
    }
    rng.shuffle(labels);

    Matrix features(n_samples, n_features);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto& mean = means[static_cast<std::size_t>(labels[i])];
        for (std::size_t j = 0; j < n_features; ++j)
            features(i, j) = mean[j] + rng.gaussian();
    }
    return VerticalDataset(std::move(features), std::move(labels), n_classes);
}

/// Partition request for CSV ingestion: explicit per-party column names, or
/// an automatic contiguous split into k_parties blocks.
struct PartitionSpec {
    std::size_t k_parties = 1;
    std::vector<std::vector<std::string>> explicit_columns;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    cells.push_back(cell);
    return cells;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

/// Loads a comma-separated file with a header row. Feature columns are parsed
/// as doubles and z-score normalized per column (std fallback 1 for constant
/// columns); labels are re-indexed densely by first appearance.
inline VerticalDataset load_csv(const std::string& path, const std::string& label_column,
                                const PartitionSpec& spec = {}) {
    std::ifstream in(path);
    if (!in) throw IngestError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty())
        throw IngestError("load_csv: '" + path + "' is empty or has no header row");
    const std::vector<std::string> header = detail::split_csv_line(line);

    std::size_t label_idx = header.size();
    std::vector<std::string> feature_names;
    std::vector<std::size_t> feature_idx;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (detail::trim(header[i]) == label_column) {
            label_idx = i;
        } else {
            feature_names.push_back(detail::trim(header[i]));
            feature_idx.push_back(i);
        }
    }
    if (label_idx == header.size())
        throw IngestError("load_csv: label column '" + label_column + "' not found in header");
    if (feature_idx.empty())
        throw IngestError("load_csv: no feature columns besides the label");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::map<std::string, int> label_index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw IngestError("load_csv: row " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(header.size()));
        std::vector<double> row(feature_idx.size());
        for (std::size_t f = 0; f < feature_idx.size(); ++f) {
            const std::string cell = detail::trim(cells[feature_idx[f]]);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw IngestError("load_csv: non-numeric feature cell '" + cell + "' at row " +
                                  std::to_string(line_no) + ", column '" + feature_names[f] + "'");
            row[f] = v;
        }
        const std::string key = detail::trim(cells[label_idx]);
        auto [it, inserted] = label_index.try_emplace(key, static_cast<int>(label_index.size()));
        labels.push_back(it->second);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestError("load_csv: '" + path + "' has no data rows");

    Matrix features(rows.size(), feature_idx.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < feature_idx.size(); ++j) features(i, j) = rows[i][j];

    // z-score per column
    for (std::size_t j = 0; j < features.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) mean += features(i, j);
        mean /= static_cast<double>(features.rows());
        double var = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            const double d = features(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(features.rows());
        const double std_dev = var > 0.0 ? std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < features.rows(); ++i)
            features(i, j) = (features(i, j) - mean) / std_dev;
    }

    VerticalDataset ds(std::move(features), std::move(labels),
                       static_cast<int>(label_index.size()));

    if (!spec.explicit_columns.empty()) {
        std::map<std::string, std::size_t> name_to_col;
        for (std::size_t f = 0; f < feature_names.size(); ++f) name_to_col[feature_names[f]] = f;
        std::vector<std::vector<std::size_t>> partition;
        for (const auto& party : spec.explicit_columns) {
            std::vector<std::size_t> cols;
            for (const auto& name : party) {
                auto it = name_to_col.find(name);
                if (it == name_to_col.end())
                    throw ConfigError("partition: unknown feature column '" + name + "'");
                cols.push_back(it->second);
            }
            partition.push_back(std::move(cols));
        }
        ds.set_partition(std::move(partition));
    } else if (spec.k_parties > 1) {
        ds.set_partition(partition_vertically(ds.features(), spec.k_parties, spec.seed));
    }
    return ds;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified per-class split; each class contributes floor(count *
/// test_fraction) test samples, at least 1 when it has 2+ samples.
inline SplitIndices stratified_split(const VerticalDataset& ds, double test_fraction,
                                     std::uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("stratified_split: test_fraction must be in [0, 1)");
    Rng rng(seed);
    std::map<int, std::vector<std::size_t>> by_class;
    const auto& labels = ds.active_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    SplitIndices split;
    for (auto& [cls, ids] : by_class) {
        rng.shuffle(ids);
        std::size_t n_test = static_cast<std::size_t>(
            std::floor(static_cast<double>(ids.size()) * test_fraction));
        if (n_test == 0 && ids.size() >= 2 && test_fraction > 0.0) n_test = 1;
        for (std::size_t i = 0; i < ids.size(); ++i)
            (i < n_test ? split.test : split.train).push_back(ids[i]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

}  // namespace vleto
