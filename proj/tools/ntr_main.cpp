#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntr/checkpoint.hpp"
#include "ntr/report.hpp"
#include "ntr/train.hpp"
#include "fetch.hpp"

namespace fs = std::filesystem;
using namespace ntr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;   // usage / config problems
constexpr int kExitNumeric = 2; // divergence or failed numeric gate

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : ExperimentConfig::parse_file(path);
    for (const std::string& kv : overrides) cfg.apply_override(kv);
    cfg.validate();
    if (cfg.threads != 0) set_num_threads(cfg.threads);
    return cfg;
}

std::string resolve_data_dir(const ExperimentConfig& cfg) {
    if (!cfg.data_dir.empty()) return cfg.data_dir;
    const std::string d = default_data_dir();
    if (d.empty())
        throw FormatError("no dataset directory found: set data_dir in the config, export "
                          "NTR_DATA_DIR, or run `ntr fetch all`");
    return d;
}

template <typename T>
int run_train(const ExperimentConfig& cfg) {
    const std::string data_dir = resolve_data_dir(cfg);
    std::printf("loading %s from %s\n", cfg.dataset.c_str(), data_dir.c_str());
    const Dataset<T> train_ds = load_dataset<T>(data_dir, cfg.dataset, "train");
    const Dataset<T> test_ds = load_dataset<T>(data_dir, cfg.dataset, "test");

    fs::create_directories(cfg.out_dir);
    std::ofstream epochs_csv(fs::path(cfg.out_dir) / "epochs.csv", std::ios::trunc);
    std::ofstream trials_csv(fs::path(cfg.out_dir) / "trials.csv", std::ios::trunc);
    epochs_csv << epoch_csv_header();
    trials_csv << trials_csv_header();

    const index_t total_trials = static_cast<index_t>(cfg.train.seeds.size());
    RunHooks<T> hooks;
    hooks.on_trial_start = [&](index_t trial, std::uint64_t seed) {
        std::printf("trial %lld/%lld (seed %llu)\n", static_cast<long long>(trial + 1),
                    static_cast<long long>(total_trials), static_cast<unsigned long long>(seed));
        std::fflush(stdout);
    };
    hooks.on_epoch = [&](index_t trial, const EpochRecord& r) {
        epochs_csv << epoch_csv_line(r.epoch, trial, r.loss, r.train_acc, r.test_acc);
        epochs_csv.flush();
        std::printf("  epoch %3lld/%lld  loss %.4f  train %.4f  test %.4f\n",
                    static_cast<long long>(r.epoch), static_cast<long long>(cfg.train.epochs), r.loss,
                    r.train_acc, r.test_acc);
        std::fflush(stdout);
    };
    hooks.on_trial_end = [&](index_t trial, const TrialResult& res, Network<T>& net) {
        if (res.diverged) {
            std::printf("  trial %lld diverged: %s\n", static_cast<long long>(trial + 1),
                        res.error.c_str());
        } else {
            trials_csv << trials_csv_line(trial, res.seed, res.final_test_acc);
            trials_csv.flush();
            const fs::path ckpt = fs::path(cfg.out_dir) / ("trial" + std::to_string(trial) + ".ckpt");
            save_model<T>(ckpt.string(), net);
        }
    };

    RunResult<T> run = run_trials<T>(cfg, train_ds, test_ds, hooks);
    const TrialStats& st = run.stats;
    trials_csv << trials_csv_aggregate(st.mean, st.stddev, st.high, st.low);

    const CrReport rep = make_cr_report(cfg);
    ResultRow row;
    row.model = cfg.arch;
    row.mode = cfg.mode;
    row.cr = cfg.mode == "original" ? "1x" : rep.ratio_str;
    row.acc_mean_pct = st.mean * 100.0;
    row.std_fraction = st.stddev;
    row.high_pct = st.high * 100.0;
    row.low_pct = st.low * 100.0;
    index_t stored = rep.bias_total;
    for (const CrLayerRow& r : rep.rows) stored += r.compressed;
    row.storage = format_storage(storage_bytes(stored, cfg.train.precision));

    const std::string table = render_result_table(row);
    std::printf("\n%s", table.c_str());
    std::ofstream report_txt(fs::path(cfg.out_dir) / "report.txt", std::ios::trunc);
    report_txt << render_cr_report(cfg, rep) << "\n" << table;
    std::ofstream report_csv(fs::path(cfg.out_dir) / "report.csv", std::ios::trunc);
    report_csv << result_row_csv_header() << result_row_csv(row);

    if (st.diverged > 0) {
        std::fprintf(stderr, "%d trial(s) diverged\n", st.diverged);
        return kExitNumeric;
    }
    return kExitOk;
}

template <typename T>
int run_eval(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& split) {
    const std::string data_dir = resolve_data_dir(cfg);
    const Dataset<T> ds = load_dataset<T>(data_dir, cfg.dataset, split);
    Network<T> net = build_network<T>(cfg, cfg.train.seeds.front());
    load_model<T>(checkpoint, net);
    const double acc = evaluate(net, ds);
    std::printf("%s accuracy: %.4f (%.2f%%) on %lld samples\n", split.c_str(), acc, acc * 100.0,
                static_cast<long long>(ds.size()));
    return kExitOk;
}

/// Scaled-down model of the configured kind, small enough for exhaustive
/// central differences: two TR-FC layers for mlp, a TR conv + TR-FC head for
/// the conv architectures (dense baselines in original mode).
template <typename T>
Network<T> tiny_model(const ExperimentConfig& cfg, std::uint64_t seed) {
    Network<T> net;
    const bool compressed = cfg.mode != "original";
    const Activation inner = cfg.effective_inner();
    if (cfg.arch == "mlp") {
        net.add(FlattenLayer{});
        if (compressed) {
            net.add(NtrFcLayer<T>::random({2, 3}, {2, 2}, 2, mix_seed(seed, 1), inner, cfg.use_bias));
            net.add(ReluLayer{});
            net.add(NtrFcLayer<T>::random({2, 2}, {10}, 2, mix_seed(seed, 2), inner, cfg.use_bias));
        } else {
            net.add(DenseFcLayer<T>::random(6, 4, mix_seed(seed, 1), cfg.use_bias));
            net.add(ReluLayer{});
            net.add(DenseFcLayer<T>::random(4, 10, mix_seed(seed, 2), cfg.use_bias));
        }
    } else {
        if (compressed) {
            net.add(NtrConvLayer<T>::random(3, {1}, {2, 2}, 2, 1, 0, mix_seed(seed, 1), inner,
                                            cfg.use_bias));
        } else {
            net.add(ConvBaselineLayer<T>::random(3, 1, 4, 1, 0, mix_seed(seed, 1), cfg.use_bias));
        }
        net.add(ReluLayer{});
        net.add(MaxPool2Layer{});
        net.add(FlattenLayer{});
        if (compressed) {
            net.add(NtrFcLayer<T>::random({4, 4}, {10}, 2, mix_seed(seed, 2), inner, cfg.use_bias));
        } else {
            net.add(DenseFcLayer<T>::random(16, 10, mix_seed(seed, 2), cfg.use_bias));
        }
    }
    return net;
}

int run_gradcheck(const ExperimentConfig& cfg, double eps) {
    using T = double; // finite differences are only meaningful in 64-bit mode
    const index_t batch = 3;
    const index_t side = cfg.arch == "mlp" ? 0 : 6;

    GradCheckReport report;
    bool well_posed = false;
    for (std::uint64_t attempt = 0; attempt < 32 && !well_posed; ++attempt) {
        Network<T> net = tiny_model<T>(cfg, 7 + attempt);
        Rng rng(mix_seed(1234, attempt));
        Tensor<T> x = cfg.arch == "mlp" ? Tensor<T>{Shape{batch, 2, 3, 1}}
                                        : Tensor<T>{Shape{batch, side, side, 1}};
        for (auto& v : x.data()) v = rng.normal();
        std::vector<int> labels;
        for (index_t i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng.below(10)));

        // Inputs whose relu preactivations sit on the kink make the central
        // difference ill-posed; re-roll until clear of it.
        {
            Tape<T> probe;
            auto fwd = net.forward(probe, probe.leaf(x), false);
            (void)fwd;
            if (probe.min_abs_preactivation(Activation::Relu) < 1e-4) continue;
        }
        well_posed = true;

        std::vector<ParamRef<T>> refs = net.params();
        std::vector<Tensor<T>*> params;
        for (auto& r : refs) params.push_back(r.tensor);
        report = grad_check<T>(
            std::span<Tensor<T>* const>(params),
            [&](Tape<T>& tape, std::span<const typename Tape<T>::Var> vars) {
                // Rebuild the forward pass against the tape's own leaves.
                typename Tape<T>::Var xs = tape.leaf(x);
                typename Tape<T>::Var cur = xs;
                std::size_t used = 0;
                for (std::size_t li = 0; li < net.layer_count(); ++li) {
                    std::visit(
                        [&](auto& l) {
                            using L = std::decay_t<decltype(l)>;
                            if constexpr (std::is_same_v<L, ReluLayer>) {
                                cur = tape.activation(cur, Activation::Relu);
                            } else if constexpr (std::is_same_v<L, MaxPool2Layer>) {
                                cur = tape.maxpool2(cur);
                            } else if constexpr (std::is_same_v<L, FlattenLayer>) {
                                const Shape& s = tape.value(cur).shape();
                                cur = tape.reshape(cur, Shape{s[0], tape.value(cur).size() / s[0]});
                            } else {
                                const std::size_t n = static_cast<std::size_t>(l.num_params());
                                cur = l.forward(tape, cur, vars.subspan(used, n));
                                used += n;
                            }
                        },
                        net.layer(li));
                }
                return tape.softmax_cross_entropy(cur, labels);
            },
            eps, /*seed=*/99);
    }

    if (!well_posed) {
        std::fprintf(stderr, "gradcheck: could not find a kink-free input in 32 attempts\n");
        return kExitNumeric;
    }
    std::printf("gradcheck (%s, mode %s): max relative error %.3e over %lld elements (eps %.1e)\n",
                cfg.arch.c_str(), cfg.mode.c_str(), report.max_rel_error,
                static_cast<long long>(report.elements_checked), eps);
    if (report.max_rel_error >= 1e-5) {
        std::fprintf(stderr, "gradcheck FAILED (threshold 1e-5)\n");
        return kExitNumeric;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonlinear tensor ring network compression toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string checkpoint;
    std::string split = "test";
    std::string dataset = "all";
    std::string data_dir = "data";
    std::string manifest_path;
    double eps = 1e-5;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("config", config_path, "experiment config file")->required(config_required);
        sub->add_option("--set", overrides, "override entries, e.g. --set train.epochs=3")
            ->take_all();
    };

    CLI::App* sc_train = app.add_subcommand("train", "train the configured model over all seeds");
    add_common(sc_train, true);
    CLI::App* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(sc_eval, true);
    sc_eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    sc_eval->add_option("--split", split, "train|test (default test)");
    CLI::App* sc_cr = app.add_subcommand("cr", "compression-ratio and storage report (no training)");
    add_common(sc_cr, true);
    CLI::App* sc_grad = app.add_subcommand("gradcheck", "finite-difference check of the configured model");
    add_common(sc_grad, true);
    sc_grad->add_option("--eps", eps, "central difference step (default 1e-5)");
    CLI::App* sc_print = app.add_subcommand("print-config", "echo the fully resolved config");
    add_common(sc_print, true);
    CLI::App* sc_fetch = app.add_subcommand("fetch", "download datasets with checksum verification");
    sc_fetch->add_option("dataset", dataset, "mnist|fashion-mnist|all (default all)");
    sc_fetch->add_option("--data", data_dir, "destination directory (default ./data)");
    sc_fetch->add_option("--manifest", manifest_path, "manifest file overriding the built-in list");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc_fetch->parsed()) {
            const std::vector<FetchItem> items =
                manifest_path.empty() ? builtin_manifest(dataset) : parse_manifest_file(manifest_path);
            return fetch_items(items, data_dir, false) == 0 ? kExitOk : kExitNumeric;
        }

        ExperimentConfig cfg = load_config(config_path, overrides);

        if (sc_print->parsed()) {
            std::fputs(cfg.echo().c_str(), stdout);
            return kExitOk;
        }
        if (sc_cr->parsed()) {
            const CrReport rep = make_cr_report(cfg);
            std::fputs(render_cr_report(cfg, rep).c_str(), stdout);
            return kExitOk;
        }
        if (sc_grad->parsed()) return run_gradcheck(cfg, eps);
        if (sc_eval->parsed()) {
            if (split != "train" && split != "test")
                throw ConfigError(0, "--split must be train or test");
            return cfg.train.precision == Precision::F32 ? run_eval<float>(cfg, checkpoint, split)
                                                         : run_eval<double>(cfg, checkpoint, split);
        }
        if (sc_train->parsed()) {
            return cfg.train.precision == Precision::F32 ? run_train<float>(cfg)
                                                         : run_train<double>(cfg);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
