#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ntr {

using index_t = std::int64_t;

/// Element precision of a run. All tests and oracles use F64; F32 exists for
/// faster training and smaller checkpoints and is selected once per run.
enum class Precision { F32, F64 };

inline index_t bytes_per_element(Precision p) { return p == Precision::F32 ? 4 : 8; }

inline const char* to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

/// Elementwise nonlinearities used inside and between layers.
enum class Activation { Identity, Relu, Tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

/// Extent/element-count violations (mismatched reshape, contraction extents, ...).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid arguments that are not shape mismatches (bad axis, bad enum, ...).
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Inconsistent composite structures (broken ring ranks, core count mismatch).
struct StructureError : std::runtime_error {
    explicit StructureError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed files (IDX, checkpoints, manifests).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values where finite ones are required (diverged training).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API called in the wrong order (backward before forward, grad before backward).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thread count used by tensor kernels (Eigen products and OpenMP loops).
/// 0 restores the hardware default. Results are bit-reproducible for a fixed
/// thread count; every parallel loop writes disjoint outputs in a fixed order.
void set_num_threads(int n);
int num_threads();

} // namespace ntr
