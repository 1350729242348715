#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ntr/common.hpp"

namespace ntr {

/// Config/usage problems; carries the 1-based line number when it came from a
/// config file (0 otherwise).
struct ConfigError : std::runtime_error {
    int line;
    ConfigError(int line_, const std::string& msg)
        : std::runtime_error(line_ > 0 ? "config line " + std::to_string(line_) + ": " + msg : msg),
          line(line_) {}
};

struct OptimizerConfig {
    std::string id = "adam"; // adam | sgd-momentum
    std::optional<double> lr; // default depends on id
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.9;

    double learning_rate() const { return lr ? *lr : (id == "adam" ? 1e-3 : 0.01); }
};

struct TrainConfig {
    index_t epochs = 50;
    index_t batch_size = 128;
    OptimizerConfig optimizer;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    Precision precision = Precision::F64;
    bool shuffle = true;
    bool drop_last = false;
};

/// Per-layer compression spec: tensorization dims and the uniform TR rank.
struct LayerSpec {
    std::vector<index_t> in_dims;
    std::vector<index_t> out_dims;
    index_t rank = 0;
    bool present = false;
};

/// One layer of a fixed architecture.
struct ArchLayer {
    enum class Kind { Fc, Conv } kind = Kind::Fc;
    index_t in = 0;  // input length (fc) or channels (conv)
    index_t out = 0; // output length (fc) or kernels (conv)
    index_t kernel = 0;
    index_t stride = 1;
    index_t padding = 0;
    bool compressible = true;
};

/// Layer table for "mlp", "cnn" or "lenet5"; ArgumentError otherwise.
const std::vector<ArchLayer>& architecture_layers(const std::string& arch);

/// Full experiment description: architecture + compression plan + training
/// protocol. Parsed from a plain-text `key = value` format with [section]
/// headers; unknown keys are rejected with their line number.
struct ExperimentConfig {
    std::string arch = "mlp";       // mlp | cnn | lenet5
    std::string dataset = "mnist";  // mnist | fashion-mnist
    std::string mode = "original";  // ntrn | trn | original
    Activation inner_activation = Activation::Tanh;
    bool use_bias = true;
    std::string data_dir;           // empty -> default_data_dir() at load time
    std::string out_dir = "ntr-out";
    int threads = 0;                // 0 -> hardware
    std::vector<LayerSpec> layers;  // indexed like architecture_layers(arch)
    TrainConfig train;

    /// The nonlinearity actually used inside compressed layers: trn mode runs
    /// the same layers with identity inside.
    Activation effective_inner() const {
        return mode == "trn" ? Activation::Identity : inner_activation;
    }

    /// Cross-field validation, including dims-product checks against the
    /// architecture table. Throws ConfigError.
    void validate() const;

    /// Canonical round-trippable rendering with every default resolved.
    std::string echo() const;

    /// Applies a "section.key=value" override (same grammar as file lines).
    void apply_override(const std::string& assignment);

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
};

} // namespace ntr
