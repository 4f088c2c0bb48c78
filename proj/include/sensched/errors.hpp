#pragma once

#include <stdexcept>
#include <string>

namespace sensched {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleAction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All per-state likelihoods vanished: the observation is impossible under the
// model. Callers at the simulation level fall back to the prediction-only
// belief and flag the slot.
struct DegenerateLikelihood : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& msg, int iterations, double span)
        : std::runtime_error(msg), iterations(iterations), span(span) {}
    int iterations;
    double span;
};

struct MissingTangents : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TableMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sensched
