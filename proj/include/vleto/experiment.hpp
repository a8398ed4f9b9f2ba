#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vleto/protocol.hpp"

namespace vleto {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 step; decouples the data, split, and training streams.
    std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SyntheticSpec {
    std::size_t n_samples = 1600;
    std::size_t n_features = 16;
    int n_classes = 8;
    double class_separation = 4.0;
};

struct CsvSpec {
    std::string path;
    std::string label_column = "label";
    std::vector<std::vector<std::string>> partition;  // optional explicit party columns
};

struct DatasetConfig {
    enum class Source { Synthetic, Csv };
    Source source = Source::Synthetic;
    SyntheticSpec synthetic;
    CsvSpec csv;
};

struct AblationFlags {
    bool no_ce = false;
    bool no_a = false;
    bool no_f = false;
    bool no_lmo = false;
};

/// Full experiment description; defaults mirror the reference setup
/// (four tasks, four parties, lr 1e-3, lambdas and beta 0.5, k0 15, alpha 3).
struct ExperimentConfig {
    DatasetConfig dataset;
    std::size_t k_parties = 4;
    std::size_t d_emb = 16;
    std::vector<std::size_t> local_hidden = {16};
    std::vector<std::size_t> server_hidden = {32};
    TaskMode mode = TaskMode::CIL;
    std::size_t n_tasks = 4;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lambda_ce = 0.5;
    double lambda_a = 0.5;
    double lambda_f = 0.5;
    double gamma = 0.5;
    double beta = 0.5;
    double k0 = 15.0;
    double alpha = 3.0;
    double jitter_sigma = 0.0;
    double test_fraction = 0.2;
    double max_frozen_fraction = 0.9;
    bool accumulate_fisher = false;
    bool kappa_per_layer = false;
    bool parallel_parties = false;
    AblationFlags ablation;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool record_wall_time = true;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown field '" + key + "' in " + where);
}

template <typename T>
inline void read_field(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) {
        try {
            into = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config: field '" + std::string(key) + "' has the wrong type");
        }
    }
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(k_parties >= 1, "k_parties must be >= 1");
    require(d_emb >= 1, "d_emb must be >= 1");
    require(n_tasks >= 1, "n_tasks must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(lr > 0.0, "lr must be > 0");
    require(lambda_ce >= 0.0, "lambda_ce must be >= 0");
    require(lambda_a >= 0.0, "lambda_a must be >= 0");
    require(lambda_f >= 0.0, "lambda_f must be >= 0");
    require(gamma >= 0.0, "gamma must be >= 0");
    require(beta >= 0.0 && beta <= 1.0, "beta must be in [0, 1]");
    require(jitter_sigma >= 0.0, "jitter_sigma must be >= 0");
    require(test_fraction >= 0.0 && test_fraction < 1.0, "test_fraction must be in [0, 1)");
    require(max_frozen_fraction >= 0.0 && max_frozen_fraction <= 1.0,
            "max_frozen_fraction must be in [0, 1]");
    require(!output_dir.empty(), "output_dir must not be empty");
    if (dataset.source == DatasetConfig::Source::Synthetic) {
        require(dataset.synthetic.n_samples >= 1, "dataset.n_samples must be >= 1");
        require(dataset.synthetic.n_features >= 1, "dataset.n_features must be >= 1");
        require(dataset.synthetic.n_classes >= 1, "dataset.n_classes must be >= 1");
        require(dataset.synthetic.class_separation >= 0.0,
                "dataset.class_separation must be >= 0");
        require(dataset.synthetic.n_features >= k_parties,
                "dataset.n_features must be >= k_parties");
    } else {
        require(!dataset.csv.path.empty(), "dataset.path must not be empty");
        require(!dataset.csv.label_column.empty(), "dataset.label_column must not be empty");
        if (!dataset.csv.partition.empty())
            require(dataset.csv.partition.size() == k_parties,
                    "dataset.partition lists " + std::to_string(dataset.csv.partition.size()) +
                        " parties but k_parties is " + std::to_string(k_parties));
    }
    if (mode == TaskMode::CIL && dataset.source == DatasetConfig::Source::Synthetic)
        require(n_tasks <= static_cast<std::size_t>(dataset.synthetic.n_classes),
                "n_tasks must not exceed the class count for CIL");
}

inline nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    nlohmann::json d;
    if (dataset.source == DatasetConfig::Source::Synthetic) {
        d["type"] = "synthetic";
        d["n_samples"] = dataset.synthetic.n_samples;
        d["n_features"] = dataset.synthetic.n_features;
        d["n_classes"] = dataset.synthetic.n_classes;
        d["class_separation"] = dataset.synthetic.class_separation;
    } else {
        d["type"] = "csv";
        d["path"] = dataset.csv.path;
        d["label_column"] = dataset.csv.label_column;
        if (!dataset.csv.partition.empty()) d["partition"] = dataset.csv.partition;
    }
    j["dataset"] = std::move(d);
    j["k_parties"] = k_parties;
    j["d_emb"] = d_emb;
    j["local_hidden"] = local_hidden;
    j["server_hidden"] = server_hidden;
    j["mode"] = task_mode_name(mode);
    j["n_tasks"] = n_tasks;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["lambda_ce"] = lambda_ce;
    j["lambda_a"] = lambda_a;
    j["lambda_f"] = lambda_f;
    j["gamma"] = gamma;
    j["beta"] = beta;
    j["k0"] = k0;
    j["alpha"] = alpha;
    j["jitter_sigma"] = jitter_sigma;
    j["test_fraction"] = test_fraction;
    j["max_frozen_fraction"] = max_frozen_fraction;
    j["accumulate_fisher"] = accumulate_fisher;
    j["kappa_per_layer"] = kappa_per_layer;
    j["parallel_parties"] = parallel_parties;
    j["ablation"] = {{"no_ce", ablation.no_ce},
                     {"no_a", ablation.no_a},
                     {"no_f", ablation.no_f},
                     {"no_lmo", ablation.no_lmo}};
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["record_wall_time"] = record_wall_time;
    return j;
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    detail::reject_unknown_keys(
        j,
        {"dataset", "k_parties", "d_emb", "local_hidden", "server_hidden", "mode", "n_tasks",
         "epochs", "batch_size", "lr", "lambda_ce", "lambda_a", "lambda_f", "gamma", "beta",
         "k0", "alpha", "jitter_sigma", "test_fraction", "max_frozen_fraction",
         "accumulate_fisher", "kappa_per_layer", "parallel_parties", "ablation", "seed",
         "output_dir", "record_wall_time"},
        "config");
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::reject_unknown_keys(d,
                                    {"type", "n_samples", "n_features", "n_classes",
                                     "class_separation", "path", "label_column", "partition"},
                                    "dataset");
        std::string type = "synthetic";
        detail::read_field(d, "type", type);
        if (type == "synthetic") {
            cfg.dataset.source = DatasetConfig::Source::Synthetic;
            detail::read_field(d, "n_samples", cfg.dataset.synthetic.n_samples);
            detail::read_field(d, "n_features", cfg.dataset.synthetic.n_features);
            detail::read_field(d, "n_classes", cfg.dataset.synthetic.n_classes);
            detail::read_field(d, "class_separation", cfg.dataset.synthetic.class_separation);
        } else if (type == "csv") {
            cfg.dataset.source = DatasetConfig::Source::Csv;
            detail::read_field(d, "path", cfg.dataset.csv.path);
            detail::read_field(d, "label_column", cfg.dataset.csv.label_column);
            detail::read_field(d, "partition", cfg.dataset.csv.partition);
        } else {
            throw ConfigError("config: dataset.type must be 'synthetic' or 'csv'");
        }
    }
    detail::read_field(j, "k_parties", cfg.k_parties);
    detail::read_field(j, "d_emb", cfg.d_emb);
    detail::read_field(j, "local_hidden", cfg.local_hidden);
    detail::read_field(j, "server_hidden", cfg.server_hidden);
    if (j.contains("mode")) {
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "CIL") cfg.mode = TaskMode::CIL;
        else if (mode == "FIL") cfg.mode = TaskMode::FIL;
        else throw ConfigError("config: mode must be 'CIL' or 'FIL'");
    }
    detail::read_field(j, "n_tasks", cfg.n_tasks);
    detail::read_field(j, "epochs", cfg.epochs);
    detail::read_field(j, "batch_size", cfg.batch_size);
    detail::read_field(j, "lr", cfg.lr);
    detail::read_field(j, "lambda_ce", cfg.lambda_ce);
    detail::read_field(j, "lambda_a", cfg.lambda_a);
    detail::read_field(j, "lambda_f", cfg.lambda_f);
    detail::read_field(j, "gamma", cfg.gamma);
    detail::read_field(j, "beta", cfg.beta);
    detail::read_field(j, "k0", cfg.k0);
    detail::read_field(j, "alpha", cfg.alpha);
    detail::read_field(j, "jitter_sigma", cfg.jitter_sigma);
    detail::read_field(j, "test_fraction", cfg.test_fraction);
    detail::read_field(j, "max_frozen_fraction", cfg.max_frozen_fraction);
    detail::read_field(j, "accumulate_fisher", cfg.accumulate_fisher);
    detail::read_field(j, "kappa_per_layer", cfg.kappa_per_layer);
    detail::read_field(j, "parallel_parties", cfg.parallel_parties);
    if (j.contains("ablation")) {
        const auto& a = j.at("ablation");
        detail::reject_unknown_keys(a, {"no_ce", "no_a", "no_f", "no_lmo"}, "ablation");
        detail::read_field(a, "no_ce", cfg.ablation.no_ce);
        detail::read_field(a, "no_a", cfg.ablation.no_a);
        detail::read_field(a, "no_f", cfg.ablation.no_f);
        detail::read_field(a, "no_lmo", cfg.ablation.no_lmo);
    }
    detail::read_field(j, "seed", cfg.seed);
    detail::read_field(j, "output_dir", cfg.output_dir);
    detail::read_field(j, "record_wall_time", cfg.record_wall_time);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

struct RunOptions {
    bool export_prototypes = false;
    bool dump_fisher = false;
    bool dump_trace = false;
    bool quiet = false;
};

struct RunArtifacts {
    std::vector<TaskMetrics> metrics;
    std::string metrics_path;
    std::string output_dir;
};

namespace detail {

inline VerticalDataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.source == DatasetConfig::Source::Synthetic) {
        const SyntheticSpec& s = cfg.dataset.synthetic;
        VerticalDataset ds = generate_synthetic(s.n_samples, s.n_features, s.n_classes,
                                                s.class_separation, derive_seed(cfg.seed, 1));
        ds.set_partition(
            partition_vertically(ds.features(), cfg.k_parties, derive_seed(cfg.seed, 2)));
        return ds;
    }
    PartitionSpec spec;
    spec.k_parties = cfg.k_parties;
    spec.explicit_columns = cfg.dataset.csv.partition;
    spec.seed = derive_seed(cfg.seed, 2);
    return load_csv(cfg.dataset.csv.path, cfg.dataset.csv.label_column, spec);
}

inline TaskSchedule build_schedule(const ExperimentConfig& cfg, const VerticalDataset& ds) {
    TaskSchedule schedule = cfg.mode == TaskMode::CIL
                                ? make_cil_schedule(ds.n_classes(), cfg.n_tasks)
                                : make_fil_schedule(ds.partition(), cfg.n_tasks);
    for (auto& task : schedule.tasks) {
        task.epochs = cfg.epochs;
        task.batch_size = cfg.batch_size;
    }
    return schedule;
}

inline ProtocolOptions build_protocol_options(const ExperimentConfig& cfg, bool quiet) {
    ProtocolOptions opt;
    opt.k_parties = cfg.k_parties;
    opt.d_emb = cfg.d_emb;
    opt.local_hidden = cfg.local_hidden;
    opt.server_hidden = cfg.server_hidden;
    opt.lr = cfg.lr;
    opt.weights.lambda_ce = cfg.ablation.no_ce ? 0.0 : cfg.lambda_ce;
    opt.weights.lambda_a = cfg.ablation.no_a ? 0.0 : cfg.lambda_a;
    opt.weights.lambda_f = cfg.ablation.no_f ? 0.0 : cfg.lambda_f;
    opt.gamma = cfg.gamma;
    opt.beta = cfg.beta;
    opt.k0 = cfg.k0;
    opt.alpha = cfg.alpha;
    opt.jitter_sigma = cfg.jitter_sigma;
    opt.max_frozen_fraction = cfg.max_frozen_fraction;
    opt.lmo_enabled = !cfg.ablation.no_lmo;
    opt.accumulate_fisher = cfg.accumulate_fisher;
    opt.kappa_per_layer = cfg.kappa_per_layer;
    opt.parallel_parties = cfg.parallel_parties;
    opt.seed = derive_seed(cfg.seed, 3);
    opt.log_warnings = !quiet;
    return opt;
}

inline nlohmann::json round_message_to_json(const RoundMessage& msg) {
    nlohmann::json j;
    j["direction"] = msg.direction == Direction::EmbeddingUp ? "embedding_up" : "gradient_down";
    j["party_id"] = msg.party_id;
    j["batch_index"] = msg.batch_index;
    j["rows"] = msg.payload.rows();
    j["cols"] = msg.payload.cols();
    j["payload"] = msg.payload.data();
    return j;
}

inline nlohmann::json fisher_dump_json(std::size_t party, std::size_t task,
                                       const FisherInfo& fisher, const FreezeMask& mask,
                                       double kappa) {
    nlohmann::json j;
    j["party"] = party;
    j["task"] = task;
    j["kappa"] = kappa;
    j["sample_count"] = fisher.sample_count;
    j["fisher_weight"] = nlohmann::json::array();
    j["fisher_bias"] = nlohmann::json::array();
    for (const auto& w : fisher.values.weight) j["fisher_weight"].push_back(w.data());
    for (const auto& b : fisher.values.bias) j["fisher_bias"].push_back(b.data());
    j["mask_weight"] = mask.weight;
    j["mask_bias"] = mask.bias;
    const std::size_t total = mask.entry_count();
    j["frozen_fraction"] =
        total ? static_cast<double>(mask.frozen_count()) / static_cast<double>(total) : 0.0;
    return j;
}

inline void write_metrics_csv(const std::string& path, const std::vector<TaskMetrics>& metrics,
                              bool record_wall_time) {
    std::ofstream out(path);
    if (!out) throw IngestError("metrics: cannot open '" + path + "' for writing");
    out << "task_id,eval_task,accuracy,loss,wall_ms\n";
    for (const auto& m : metrics) {
        const std::int64_t wall = record_wall_time ? m.wall_ms : 0;
        for (const auto& [eval_task, acc] : m.per_task_accuracy)
            out << m.task_id << "," << eval_task << "," << fmt_double(acc) << ","
                << fmt_double(m.final_train_loss) << "," << wall << "\n";
        out << m.task_id << ",all," << fmt_double(m.aggregate_accuracy) << ","
            << fmt_double(m.final_train_loss) << "," << wall << "\n";
    }
}

}  // namespace detail

/// Runs the configured task sequence end to end and writes metrics.csv, a
/// config echo, and the requested dumps into the output directory.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    VerticalDataset ds = detail::build_dataset(cfg);
    TaskSchedule schedule = detail::build_schedule(cfg, ds);
    SplitIndices split = stratified_split(ds, cfg.test_fraction, derive_seed(cfg.seed, 4));

    Orchestrator orch(std::move(ds), std::move(split), std::move(schedule),
                      detail::build_protocol_options(cfg, options.quiet));

    std::ofstream trace;
    if (options.dump_trace) {
        const std::string trace_path = (fs::path(cfg.output_dir) / "trace.jsonl").string();
        trace.open(trace_path);
        if (!trace) throw IngestError("trace: cannot open '" + trace_path + "' for writing");
        orch.set_message_hook([&trace](const RoundMessage& msg) {
            trace << detail::round_message_to_json(msg).dump() << "\n";
        });
    }
    if (options.dump_fisher) {
        const std::string dir = cfg.output_dir;
        orch.set_fisher_hook([dir](std::size_t party, std::size_t task, const FisherInfo& fisher,
                                   const FreezeMask& mask, double kappa) {
            const std::string path =
                (fs::path(dir) / ("fisher_" + std::to_string(party) + "_" +
                                  std::to_string(task) + ".json"))
                    .string();
            std::ofstream out(path);
            out << detail::fisher_dump_json(party, task, fisher, mask, kappa).dump(2) << "\n";
        });
    }

    {
        std::ofstream echo((fs::path(cfg.output_dir) / "config.json").string());
        echo << cfg.to_json().dump(2) << "\n";
    }

    RunArtifacts artifacts;
    artifacts.output_dir = cfg.output_dir;
    try {
        while (orch.tasks_completed() < cfg.n_tasks) {
            TaskMetrics m = orch.run_next_task();
            if (!options.quiet) {
                std::cout << "task " << m.task_id << " |";
                for (const auto& [t, acc] : m.per_task_accuracy)
                    std::cout << " T" << t << ": " << acc;
                std::cout << " | all: " << m.aggregate_accuracy
                          << " | loss: " << m.final_train_loss << " | " << m.wall_ms << " ms\n";
            }
            artifacts.metrics.push_back(std::move(m));
        }
    } catch (const DivergenceError& e) {
        nlohmann::json diag;
        diag["error"] = "non-finite training loss";
        diag["task_id"] = e.task_id;
        diag["epoch"] = e.epoch;
        diag["batch"] = e.batch;
        diag["loss"] = detail::fmt_double(e.loss);
        std::ofstream out((fs::path(cfg.output_dir) / "diagnostic.json").string());
        out << diag.dump(2) << "\n";
        throw;
    }

    artifacts.metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
    detail::write_metrics_csv(artifacts.metrics_path, artifacts.metrics, cfg.record_wall_time);

    if (options.export_prototypes) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Prototype& p : orch.prototype_snapshots()) {
            nlohmann::json e;
            e["class_id"] = p.class_id;
            e["task_id"] = p.source_task;
            e["vector"] = p.vector.data();
            arr.push_back(std::move(e));
        }
        std::ofstream out((fs::path(cfg.output_dir) / "prototypes.json").string());
        out << arr.dump(2) << "\n";
    }
    return artifacts;
}

/// Writes a synthetic dataset as CSV (columns f0..f{M-1} plus a label column).
inline void write_synthetic_csv(const std::string& path, std::size_t n_samples,
                                std::size_t n_features, int n_classes, double class_separation,
                                std::uint64_t seed) {
    VerticalDataset ds = generate_synthetic(n_samples, n_features, n_classes, class_separation,
                                            seed);
    std::ofstream out(path);
    if (!out) throw IngestError("gen-data: cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < n_features; ++j) out << "f" << j << ",";
    out << "label\n";
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t j = 0; j < n_features; ++j)
            out << detail::fmt_double(ds.features()(i, j)) << ",";
        out << ds.active_labels()[i] << "\n";
    }
}

// ---- run comparison ------------------------------------------------------

struct ParsedMetrics {
    std::string name;
    // (task_id, eval_key) -> accuracy; eval_key is a task id or "all"
    std::map<std::pair<std::size_t, std::string>, double> rows;
    std::vector<std::size_t> task_ids;

    double aggregate(std::size_t task_id) const {
        auto it = rows.find({task_id, "all"});
        if (it == rows.end())
            throw ConfigError("comparison: missing aggregate row for task " +
                              std::to_string(task_id));
        return it->second;
    }

    /// Mean over tasks of the post-task aggregate accuracy.
    double avg() const {
        double sum = 0.0;
        for (std::size_t t : task_ids) sum += aggregate(t);
        return task_ids.empty() ? 0.0 : sum / static_cast<double>(task_ids.size());
    }
};

inline ParsedMetrics parse_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("compare: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw IngestError("compare: '" + path + "' is empty");
    if (detail::trim(line) != "task_id,eval_task,accuracy,loss,wall_ms")
        throw IngestError("compare: '" + path + "' has an unexpected header");
    ParsedMetrics parsed;
    parsed.name = path;
    std::set<std::size_t> tasks;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != 5)
            throw IngestError("compare: row " + std::to_string(line_no) + " of '" + path +
                              "' has " + std::to_string(cells.size()) + " cells");
        try {
            const std::size_t task_id = std::stoul(cells[0]);
            parsed.rows[{task_id, detail::trim(cells[1])}] = std::stod(cells[2]);
            tasks.insert(task_id);
        } catch (const std::exception&) {
            throw IngestError("compare: malformed row " + std::to_string(line_no) + " in '" +
                              path + "'");
        }
    }
    parsed.task_ids.assign(tasks.begin(), tasks.end());
    return parsed;
}

struct ComparisonTable {
    std::vector<ParsedMetrics> runs;

    std::string render_text() const {
        std::ostringstream out;
        out << "run";
        for (std::size_t t : runs.front().task_ids) out << "\tT" << t;
        out << "\tAVG\n";
        for (const auto& run : runs) {
            out << run.name;
            for (std::size_t t : run.task_ids) out << "\t" << detail::fmt_double(run.aggregate(t));
            out << "\t" << detail::fmt_double(run.avg()) << "\n";
        }
        out << "delta vs " << runs.front().name << "\n";
        for (std::size_t i = 1; i < runs.size(); ++i) {
            out << runs[i].name;
            for (std::size_t t : runs[i].task_ids)
                out << "\t"
                    << detail::fmt_double(runs[i].aggregate(t) - runs.front().aggregate(t));
            out << "\t" << detail::fmt_double(runs[i].avg() - runs.front().avg()) << "\n";
        }
        return out.str();
    }

    std::string render_csv() const {
        std::ostringstream out;
        out << "run";
        for (std::size_t t : runs.front().task_ids) out << ",T" << t;
        out << ",AVG";
        for (std::size_t t : runs.front().task_ids) out << ",delta_T" << t;
        out << ",delta_AVG\n";
        for (const auto& run : runs) {
            out << run.name;
            for (std::size_t t : run.task_ids) out << "," << detail::fmt_double(run.aggregate(t));
            out << "," << detail::fmt_double(run.avg());
            for (std::size_t t : run.task_ids)
                out << "," << detail::fmt_double(run.aggregate(t) - runs.front().aggregate(t));
            out << "," << detail::fmt_double(run.avg() - runs.front().avg()) << "\n";
        }
        return out.str();
    }
};

/// Per-task aggregate accuracies and AVG deltas across metric files; the
/// files must describe identical schedules.
inline ComparisonTable compare_runs(const std::vector<std::string>& paths) {
    if (paths.size() < 2) throw ConfigError("compare: need at least two metric files");
    ComparisonTable table;
    for (const auto& path : paths) table.runs.push_back(parse_metrics_csv(path));
    const auto& reference = table.runs.front();
    for (const auto& run : table.runs) {
        if (run.rows.size() != reference.rows.size() || run.task_ids != reference.task_ids)
            throw ConfigError("compare: '" + run.name + "' has a different schedule than '" +
                              reference.name + "'");
        for (const auto& [key, acc] : reference.rows)
            if (!run.rows.count(key))
                throw ConfigError("compare: '" + run.name + "' is missing task " +
                                  std::to_string(key.first) + " eval '" + key.second + "'");
    }
    return table;
}

}  // namespace vleto
