#include <doctest.h>

#include <array>
#include <cstdio>
#include <string>

TEST_SUITE("cli") {

namespace {

struct CmdResult {
    int exit_code;
    std::string output;
};

CmdResult run(const std::string& args) {
    const std::string cmd = std::string(NTR_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string preset(const char* name) { return std::string(NTR_CONFIGS_DIR) + "/" + name; }

} // namespace

TEST_CASE("cr subcommand prints the table ratios") {
    CmdResult r = run("cr " + preset("mlp-mnist-57x.cfg"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("57x") != std::string::npos);

    CmdResult cnn = run("cr " + preset("cnn-mnist-4.3x.cfg"));
    CHECK(cnn.exit_code == 0);
    CHECK(cnn.output.find("4.3x") != std::string::npos);
    CHECK(cnn.output.find("not compressed") != std::string::npos);

    CmdResult orig = run("cr " + preset("mlp-mnist-original.cfg"));
    CHECK(orig.exit_code == 0);
    CHECK(orig.output.find("1x (1.00)") != std::string::npos);
}

TEST_CASE("print-config echoes a parseable config and applies --set") {
    CmdResult r = run("print-config " + preset("mlp-mnist-359x.cfg") + " --set train.epochs=9");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("epochs = 9") != std::string::npos);
    CHECK(r.output.find("mode = ntrn") != std::string::npos);
    CHECK(r.output.find("inner_activation = tanh") != std::string::npos);

    CmdResult trn = run("print-config " + preset("mlp-mnist-359x.cfg") + " --set experiment.mode=trn");
    CHECK(trn.exit_code == 0);
    CHECK(trn.output.find("inner_activation = identity") != std::string::npos);
}

TEST_CASE("config errors exit with the usage code and name the key") {
    CmdResult r = run("print-config " + preset("mlp-mnist-57x.cfg") + " --set train.epochs=zero");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("epochs") != std::string::npos);

    CmdResult missing = run("cr /nonexistent.cfg");
    CHECK(missing.exit_code == 1);
}

TEST_CASE("gradcheck passes for compressed models and rejects bad eps setups") {
    CmdResult mlp = run("gradcheck " + preset("mlp-mnist-57x.cfg"));
    CHECK(mlp.exit_code == 0);
    CHECK(mlp.output.find("max relative error") != std::string::npos);

    CmdResult conv = run("gradcheck " + preset("cnn-mnist-4.3x.cfg"));
    CHECK(conv.exit_code == 0);

    // A huge step makes central differences useless; the gate must trip.
    CmdResult bad = run("gradcheck " + preset("mlp-mnist-57x.cfg") + " --eps 10.0");
    CHECK(bad.exit_code == 2);
}

} // TEST_SUITE
