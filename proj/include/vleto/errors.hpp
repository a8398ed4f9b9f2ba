#pragma once

#include <stdexcept>
#include <string>

namespace vleto {

/// Matrix/tensor dimension disagreement.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operation called in an invalid order (e.g. backward without forward).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Value outside its admissible domain (bad label, zero vector, ...).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid experiment or module configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Violation of the party message protocol.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Data ingestion failure; message carries row/column location.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss; carries the abort context.
struct DivergenceError : std::runtime_error {
    std::size_t task_id;
    std::size_t epoch;
    std::size_t batch;
    double loss;

    DivergenceError(const std::string& msg, std::size_t task, std::size_t ep,
                    std::size_t b, double l)
        : std::runtime_error(msg), task_id(task), epoch(ep), batch(b), loss(l) {}
};

}  // namespace vleto
