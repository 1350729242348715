#include "ntr/report.hpp"

#include <cstdio>
#include <sstream>

#include "ntr/tr_format.hpp"

namespace ntr {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

} // namespace

CrReport make_cr_report(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<ArchLayer>& table = architecture_layers(cfg.arch);
    const bool compressed_mode = cfg.mode != "original";

    CrReport rep;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const ArchLayer& a = table[i];
        CrLayerRow row;
        row.name = "layer" + std::to_string(i + 1) + (a.kind == ArchLayer::Kind::Conv ? " (conv)" : " (fc)");
        row.original = a.kind == ArchLayer::Kind::Conv ? a.kernel * a.kernel * a.in * a.out : a.in * a.out;
        const bool layer_compressed = compressed_mode && a.compressible;
        if (layer_compressed) {
            const LayerSpec& spec = cfg.layers[i];
            row.rank = spec.rank;
            row.compressed = a.kind == ArchLayer::Kind::Conv
                                 ? tr_param_count_conv(a.kernel, spec.in_dims, spec.out_dims, spec.rank)
                                 : tr_param_count_fc(spec.in_dims, spec.out_dims, spec.rank);
        } else {
            row.compressed = row.original;
        }
        // The CR quotient covers exactly the layers this mode compresses; an
        // uncompressed layer in a compressed model (the cnn's fc) stays out
        // of both sides, as the tables do.
        row.counted = !compressed_mode || layer_compressed;
        if (row.counted) {
            rep.original_total += row.original;
            rep.compressed_total += row.compressed;
        } else {
            rep.has_uncounted_layers = true;
        }
        if (cfg.use_bias) rep.bias_total += a.out;
        rep.rows.push_back(row);
    }
    rep.ratio = compression_ratio(rep.original_total, rep.compressed_total);
    rep.ratio_str = format_cr(rep.ratio);
    return rep;
}

std::string render_cr_report(const ExperimentConfig& cfg, const CrReport& rep) {
    std::ostringstream os;
    os << "model: " << cfg.arch << " (" << cfg.dataset << "), mode " << cfg.mode << "\n";
    os << "  layer          original    compressed  rank\n";
    for (const CrLayerRow& r : rep.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %-12s %10lld  %10lld  %4s%s\n", r.name.c_str(),
                      static_cast<long long>(r.original), static_cast<long long>(r.compressed),
                      r.rank > 0 ? std::to_string(r.rank).c_str() : "-",
                      r.counted ? "" : "   [uncompressed, excluded from CR]");
        os << line;
    }
    os << "  totals (counted layers): original " << rep.original_total << ", compressed "
       << rep.compressed_total << "\n";
    os << "  compression ratio: " << rep.ratio_str << " (" << fmt("%.2f", rep.ratio) << ")\n";

    const Precision prec = cfg.train.precision;
    index_t compressed_weights = 0;
    index_t original_weights = 0;
    for (const CrLayerRow& r : rep.rows) {
        compressed_weights += r.compressed;
        original_weights += r.original;
    }
    os << "  storage, weights (" << to_string(prec)
       << "): " << format_storage(storage_bytes(compressed_weights, prec)) << " (original "
       << format_storage(storage_bytes(original_weights, prec)) << ")\n";
    if (rep.bias_total > 0)
        os << "  storage, weights+biases: "
           << format_storage(storage_bytes(compressed_weights + rep.bias_total, prec)) << "\n";
    if (prec != Precision::F32) {
        os << "  storage at f32, weights: "
           << format_storage(storage_bytes(compressed_weights, Precision::F32)) << " (original "
           << format_storage(storage_bytes(original_weights, Precision::F32)) << ")\n";
        if (rep.bias_total > 0)
            os << "  storage at f32, weights+biases: "
               << format_storage(storage_bytes(compressed_weights + rep.bias_total, Precision::F32))
               << "\n";
    }
    if (rep.has_uncounted_layers)
        os << "  note: the fully-connected layer is not compressed; CR covers the conv layers only\n";
    return os.str();
}

std::string render_result_table(const ResultRow& row) {
    std::ostringstream os;
    os << "  model  mode      CR     Acc     Std      H       L       Storage\n";
    char line[256];
    std::snprintf(line, sizeof(line), "  %-6s %-9s %-6s %-7.2f %-8.4f %-7.2f %-7.2f %s\n",
                  row.model.c_str(), row.mode.c_str(), row.cr.c_str(), row.acc_mean_pct,
                  row.std_fraction, row.high_pct, row.low_pct, row.storage.c_str());
    os << line;
    return os.str();
}

std::string result_row_csv_header() { return "model,mode,cr,acc,std,high,low,storage_bytes\n"; }

std::string result_row_csv(const ResultRow& row) {
    std::ostringstream os;
    os << row.model << ',' << row.mode << ',' << row.cr << ',' << fmt("%.4f", row.acc_mean_pct) << ','
       << fmt("%.6f", row.std_fraction) << ',' << fmt("%.4f", row.high_pct) << ','
       << fmt("%.4f", row.low_pct) << ',' << row.storage << "\n";
    return os.str();
}

std::string epoch_csv_header() { return "epoch,trial,loss,train_acc,test_acc\n"; }

std::string epoch_csv_line(index_t epoch, index_t trial, double loss, double train_acc, double test_acc) {
    std::ostringstream os;
    os << epoch << ',' << trial << ',' << fmt("%.8f", loss) << ',' << fmt("%.6f", train_acc) << ','
       << fmt("%.6f", test_acc) << "\n";
    return os.str();
}

std::string trials_csv_header() { return "trial,seed,test_acc,acc_mean,acc_std,acc_high,acc_low\n"; }

std::string trials_csv_line(index_t trial, std::uint64_t seed, double test_acc) {
    std::ostringstream os;
    os << trial << ',' << seed << ',' << fmt("%.6f", test_acc) << ",,,,\n";
    return os.str();
}

std::string trials_csv_aggregate(double mean, double stddev, double high, double low) {
    std::ostringstream os;
    os << "aggregate,," << ',' << fmt("%.6f", mean) << ',' << fmt("%.6f", stddev) << ','
       << fmt("%.6f", high) << ',' << fmt("%.6f", low) << "\n";
    return os.str();
}

} // namespace ntr
