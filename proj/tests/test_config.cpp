#include <doctest.h>

#include <sstream>

#include "ntr/config.hpp"
#include "ntr/report.hpp"

using namespace ntr;

namespace {

std::string preset(const char* name) { return std::string(NTR_CONFIGS_DIR) + "/" + name; }

} // namespace

TEST_SUITE("config") {

TEST_CASE("empty text gives the all-defaults original mlp") {
    ExperimentConfig cfg = ExperimentConfig::parse("");
    cfg.validate();
    CHECK(cfg.arch == "mlp");
    CHECK(cfg.dataset == "mnist");
    CHECK(cfg.mode == "original");
    CHECK(cfg.train.epochs == 50);
    CHECK(cfg.train.batch_size == 128);
    CHECK(cfg.train.optimizer.id == "adam");
    CHECK(cfg.train.optimizer.learning_rate() == doctest::Approx(1e-3));
    CHECK(cfg.train.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.train.precision == Precision::F64);
    CHECK(cfg.use_bias);
}

TEST_CASE("all shipped presets parse, validate, and hit the table CRs") {
    const struct {
        const char* file;
        const char* cr;
    } rows[] = {
        {"mlp-mnist-57x.cfg", "57x"},   {"mlp-mnist-359x.cfg", "359x"},
        {"cnn-mnist-4.3x.cfg", "4.3x"}, {"cnn-mnist-8.9x.cfg", "8.9x"},
        {"lenet5-fmnist-13x.cfg", "13x"}, {"lenet5-fmnist-72x.cfg", "72x"},
    };
    for (const auto& row : rows) {
        CAPTURE(row.file);
        ExperimentConfig cfg = ExperimentConfig::parse_file(preset(row.file));
        cfg.validate();
        const CrReport rep = make_cr_report(cfg);
        CHECK(rep.ratio_str == row.cr);
    }
    for (const char* file :
         {"mlp-mnist-original.cfg", "cnn-mnist-original.cfg", "lenet5-fmnist-original.cfg"}) {
        CAPTURE(file);
        ExperimentConfig cfg = ExperimentConfig::parse_file(preset(file));
        cfg.validate();
        CHECK(make_cr_report(cfg).ratio == doctest::Approx(1.0));
    }
}

TEST_CASE("compressed-layer totals match the spec'd counts") {
    ExperimentConfig cfg = ExperimentConfig::parse_file(preset("mlp-mnist-57x.cfg"));
    const CrReport rep = make_cr_report(cfg);
    CHECK(rep.original_total == 1332224);
    CHECK(rep.compressed_total == 23360);
    ExperimentConfig cnn = ExperimentConfig::parse_file(preset("cnn-mnist-4.3x.cfg"));
    const CrReport crep = make_cr_report(cnn);
    CHECK(crep.original_total == 4752);
    CHECK(crep.compressed_total == 1116);
    CHECK(crep.has_uncounted_layers); // the fc layer stays out of the quotient
}

TEST_CASE("dims product mismatch is rejected with the offending layer") {
    ExperimentConfig cfg = ExperimentConfig::parse(R"(
[experiment]
arch = mlp
mode = ntrn

[layer1]
rank = 4
in_dims = 4,7,4,6
out_dims = 4,8,4,8

[layer2]
rank = 4
in_dims = 4,8,4,8
out_dims = 8,8,8

[layer3]
rank = 4
in_dims = 8,8,8
out_dims = 10
)");
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("layer1") != std::string::npos);
        CHECK(msg.find("784") != std::string::npos);
    }
}

TEST_CASE("unknown keys and sections are rejected with line numbers") {
    try {
        ExperimentConfig::parse("[experiment]\narch = mlp\nbogus_key = 1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::parse("[bogus]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nepochs = soon\n"), ConfigError);
    try {
        ExperimentConfig::parse("[train]\n\n\nepochs = soon\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 4);
    }
}

TEST_CASE("missing layer spec in compressed mode is rejected") {
    ExperimentConfig cfg = ExperimentConfig::parse("[experiment]\narch = mlp\nmode = trn\n");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("the cnn's fully-connected layer takes no spec") {
    ExperimentConfig cfg = ExperimentConfig::parse_file(preset("cnn-mnist-4.3x.cfg"));
    cfg.layers.resize(3);
    cfg.layers[2].present = true;
    cfg.layers[2].rank = 2;
    cfg.layers[2].in_dims = {800};
    cfg.layers[2].out_dims = {10};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("echo round-trips and trn/ntrn differ only in mode and inner activation") {
    ExperimentConfig ntrn = ExperimentConfig::parse_file(preset("mlp-mnist-57x.cfg"));
    ExperimentConfig reparsed = ExperimentConfig::parse(ntrn.echo());
    CHECK(reparsed.echo() == ntrn.echo());

    ExperimentConfig trn = ntrn;
    trn.apply_override("experiment.mode=trn");
    trn.validate();

    std::istringstream a(ntrn.echo()), b(trn.echo());
    std::string la, lb;
    int diffs = 0;
    while (std::getline(a, la) && std::getline(b, lb)) {
        if (la == lb) continue;
        ++diffs;
        const bool is_mode = la.rfind("mode =", 0) == 0;
        const bool is_inner = la.rfind("inner_activation =", 0) == 0;
        CHECK((is_mode || is_inner));
        if (is_inner) CHECK(lb == "inner_activation = identity");
    }
    CHECK(diffs == 2);
}

TEST_CASE("overrides use the section.key grammar") {
    ExperimentConfig cfg = ExperimentConfig::parse_file(preset("mlp-mnist-57x.cfg"));
    cfg.apply_override("train.epochs=7");
    cfg.apply_override("train.seeds=4,5");
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.train.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK_THROWS_AS(cfg.apply_override("epochs=7"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("train.epochs"), ConfigError);
}

TEST_CASE("sgd default learning rate differs from adam's") {
    ExperimentConfig cfg = ExperimentConfig::parse("[train]\noptimizer = sgd-momentum\n");
    CHECK(cfg.train.optimizer.learning_rate() == doctest::Approx(0.01));
    ExperimentConfig cfg2 = ExperimentConfig::parse("[train]\noptimizer = sgd-momentum\nlr = 0.2\n");
    CHECK(cfg2.train.optimizer.learning_rate() == doctest::Approx(0.2));
}

} // TEST_SUITE
