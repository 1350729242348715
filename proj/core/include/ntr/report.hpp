#pragma once

#include <string>
#include <vector>

#include "ntr/config.hpp"

namespace ntr {

/// Parameter accounting for one layer of a configured experiment.
struct CrLayerRow {
    std::string name;
    index_t original = 0;    // weight elements of the dense layer
    index_t compressed = 0;  // weight elements of the TR factors
    index_t rank = 0;
    bool counted = false;    // enters the CR quotient (uncompressed layers do not)
};

/// Whole-model compression report. CR follows the paper's accounting: weight
/// elements only (biases excluded), and only over the layers the mode
/// actually compresses.
struct CrReport {
    std::vector<CrLayerRow> rows;
    index_t original_total = 0;    // over counted layers
    index_t compressed_total = 0;  // over counted layers
    double ratio = 1.0;
    std::string ratio_str;         // table-style rendering
    index_t bias_total = 0;        // stored alongside weights when biases are on
    bool has_uncounted_layers = false;
};

CrReport make_cr_report(const ExperimentConfig& cfg);

/// Human-readable report: per-layer counts, CR, storage in both MB
/// conventions at the configured precision.
std::string render_cr_report(const ExperimentConfig& cfg, const CrReport& rep);

/// Aggregate row mirroring the experiment tables: CR, Acc, Std, H, L, Storage.
struct ResultRow {
    std::string model;
    std::string mode;
    std::string cr;
    double acc_mean_pct = 0.0;
    double std_fraction = 0.0;
    double high_pct = 0.0;
    double low_pct = 0.0;
    std::string storage;
};

std::string render_result_table(const ResultRow& row);
std::string result_row_csv_header();
std::string result_row_csv(const ResultRow& row);

/// Per-epoch metrics CSV: header "epoch,trial,loss,train_acc,test_acc".
std::string epoch_csv_header();
std::string epoch_csv_line(index_t epoch, index_t trial, double loss, double train_acc, double test_acc);

/// Per-trial CSV with one aggregate row at the end; fixed schema
/// "trial,seed,test_acc,acc_mean,acc_std,acc_high,acc_low".
std::string trials_csv_header();
std::string trials_csv_line(index_t trial, std::uint64_t seed, double test_acc);
std::string trials_csv_aggregate(double mean, double stddev, double high, double low);

} // namespace ntr
