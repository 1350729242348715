#include "ntr/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ntr {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

index_t parse_int(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return static_cast<index_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(line, "key '" + key + "': expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(line, "key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(line, "key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<index_t> parse_int_list(const std::string& v, int line, const std::string& key) {
    std::vector<index_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(line, "key '" + key + "': empty list entry");
        out.push_back(parse_int(item, line, key));
    }
    if (out.empty()) throw ConfigError(line, "key '" + key + "': empty list");
    return out;
}

Activation parse_activation(const std::string& v, int line, const std::string& key) {
    if (v == "identity") return Activation::Identity;
    if (v == "relu") return Activation::Relu;
    if (v == "tanh") return Activation::Tanh;
    throw ConfigError(line, "key '" + key + "': unknown activation '" + v +
                                "' (identity|relu|tanh)");
}

/// Routes one (section, key, value) triple into the config.
void assign(ExperimentConfig& cfg, const std::string& section, const std::string& key,
            const std::string& value, int line) {
    if (section == "experiment") {
        if (key == "arch") cfg.arch = value;
        else if (key == "dataset") cfg.dataset = value;
        else if (key == "mode") cfg.mode = value;
        else if (key == "inner_activation") cfg.inner_activation = parse_activation(value, line, key);
        else if (key == "use_bias") cfg.use_bias = parse_bool(value, line, key);
        else if (key == "data_dir") cfg.data_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "threads") cfg.threads = static_cast<int>(parse_int(value, line, key));
        else throw ConfigError(line, "unknown key '" + key + "' in [experiment]");
    } else if (section == "train") {
        TrainConfig& t = cfg.train;
        if (key == "epochs") t.epochs = parse_int(value, line, key);
        else if (key == "batch_size") t.batch_size = parse_int(value, line, key);
        else if (key == "optimizer") t.optimizer.id = value;
        else if (key == "lr") t.optimizer.lr = parse_double(value, line, key);
        else if (key == "beta1") t.optimizer.beta1 = parse_double(value, line, key);
        else if (key == "beta2") t.optimizer.beta2 = parse_double(value, line, key);
        else if (key == "eps") t.optimizer.eps = parse_double(value, line, key);
        else if (key == "momentum") t.optimizer.momentum = parse_double(value, line, key);
        else if (key == "seeds") {
            t.seeds.clear();
            for (index_t s : parse_int_list(value, line, key)) {
                if (s < 0) throw ConfigError(line, "key 'seeds': seeds must be non-negative");
                t.seeds.push_back(static_cast<std::uint64_t>(s));
            }
        } else if (key == "precision") {
            if (value == "f32") t.precision = Precision::F32;
            else if (value == "f64") t.precision = Precision::F64;
            else throw ConfigError(line, "key 'precision': expected f32 or f64, got '" + value + "'");
        } else if (key == "shuffle") t.shuffle = parse_bool(value, line, key);
        else if (key == "drop_last") t.drop_last = parse_bool(value, line, key);
        else throw ConfigError(line, "unknown key '" + key + "' in [train]");
    } else if (section.rfind("layer", 0) == 0) {
        const std::string idx_str = section.substr(5);
        index_t idx = 0;
        try {
            idx = std::stoll(idx_str);
        } catch (const std::exception&) {
            throw ConfigError(line, "bad layer section '[" + section + "]'");
        }
        if (idx < 1 || idx > 16) throw ConfigError(line, "layer index out of range in '[" + section + "]'");
        if (static_cast<std::size_t>(idx) > cfg.layers.size()) cfg.layers.resize(static_cast<std::size_t>(idx));
        LayerSpec& l = cfg.layers[static_cast<std::size_t>(idx - 1)];
        l.present = true;
        if (key == "rank") l.rank = parse_int(value, line, key);
        else if (key == "in_dims") l.in_dims = parse_int_list(value, line, key);
        else if (key == "out_dims") l.out_dims = parse_int_list(value, line, key);
        else throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
    } else {
        throw ConfigError(line, "unknown section [" + section + "]");
    }
}

index_t product(const std::vector<index_t>& v) {
    index_t p = 1;
    for (index_t x : v) p *= x;
    return p;
}

std::string join(const std::vector<index_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

const std::vector<ArchLayer>& architecture_layers(const std::string& arch) {
    using K = ArchLayer::Kind;
    // mlp: 784-1024-512-10 fully-connected stack.
    static const std::vector<ArchLayer> mlp = {
        {K::Fc, 784, 1024, 0, 1, 0, true},
        {K::Fc, 1024, 512, 0, 1, 0, true},
        {K::Fc, 512, 10, 0, 1, 0, true},
    };
    // cnn: two 3x3 conv layers (16, 32 kernels, stride 1, padding 0) with 2x2
    // max pooling, then one uncompressed fully-connected layer. 28x28 input
    // gives 26->13->11->5, so the flattened width is 5*5*32 = 800.
    static const std::vector<ArchLayer> cnn = {
        {K::Conv, 1, 16, 3, 1, 0, true},
        {K::Conv, 16, 32, 3, 1, 0, true},
        {K::Fc, 800, 10, 0, 1, 0, false},
    };
    // lenet5: 5x5 convs with 20 and 50 kernels; the first conv pads by 2 so
    // the stack ends at 5x5x50 = 1250, matching the 1250 -> 512 -> 10
    // fully-connected tail.
    static const std::vector<ArchLayer> lenet5 = {
        {K::Conv, 1, 20, 5, 1, 2, true},
        {K::Conv, 20, 50, 5, 1, 0, true},
        {K::Fc, 1250, 512, 0, 1, 0, true},
        {K::Fc, 512, 10, 0, 1, 0, true},
    };
    if (arch == "mlp") return mlp;
    if (arch == "cnn") return cnn;
    if (arch == "lenet5") return lenet5;
    throw ArgumentError("unknown architecture '" + arch + "' (mlp|cnn|lenet5)");
}

void ExperimentConfig::validate() const {
    if (arch != "mlp" && arch != "cnn" && arch != "lenet5")
        throw ConfigError(0, "key 'arch': unknown architecture '" + arch + "'");
    if (dataset != "mnist" && dataset != "fashion-mnist")
        throw ConfigError(0, "key 'dataset': unknown dataset '" + dataset + "' (mnist|fashion-mnist)");
    if (mode != "ntrn" && mode != "trn" && mode != "original")
        throw ConfigError(0, "key 'mode': unknown mode '" + mode + "' (ntrn|trn|original)");
    if (train.epochs < 1) throw ConfigError(0, "key 'epochs': must be >= 1");
    if (train.batch_size < 1) throw ConfigError(0, "key 'batch_size': must be >= 1");
    if (train.seeds.empty()) throw ConfigError(0, "key 'seeds': need at least one seed");
    if (train.optimizer.id != "adam" && train.optimizer.id != "sgd-momentum")
        throw ConfigError(0, "key 'optimizer': unknown id '" + train.optimizer.id +
                                 "' (adam|sgd-momentum)");

    const std::vector<ArchLayer>& table = architecture_layers(arch);
    if (layers.size() > table.size())
        throw ConfigError(0, "architecture '" + arch + "' has " + std::to_string(table.size()) +
                                 " layers but config describes " + std::to_string(layers.size()));

    const bool compressed = mode != "original";
    for (std::size_t i = 0; i < table.size(); ++i) {
        const ArchLayer& a = table[i];
        const LayerSpec* spec = i < layers.size() && layers[i].present ? &layers[i] : nullptr;
        const std::string name = "[layer" + std::to_string(i + 1) + "]";
        if (!a.compressible) {
            if (spec)
                throw ConfigError(0, name + ": this layer is not compressed in architecture '" + arch +
                                         "' and takes no spec");
            continue;
        }
        if (!compressed) continue; // original mode ignores layer specs except basic sanity
        if (!spec)
            throw ConfigError(0, name + " is required in mode '" + mode + "' (rank, in_dims, out_dims)");
        if (spec->rank < 1) throw ConfigError(0, name + ": rank must be >= 1");
        if (spec->in_dims.empty() || spec->out_dims.empty())
            throw ConfigError(0, name + ": in_dims and out_dims are required");
        if (product(spec->in_dims) != a.in)
            throw ConfigError(0, name + ": in_dims " + join(spec->in_dims) + " multiply to " +
                                     std::to_string(product(spec->in_dims)) + ", architecture needs " +
                                     std::to_string(a.in));
        if (product(spec->out_dims) != a.out)
            throw ConfigError(0, name + ": out_dims " + join(spec->out_dims) + " multiply to " +
                                     std::to_string(product(spec->out_dims)) + ", architecture needs " +
                                     std::to_string(a.out));
    }
    // In original mode a present spec must still be shape-consistent, so a
    // shared preset can flip modes without edits.
    if (!compressed) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i].present) continue;
            const ArchLayer& a = table[i];
            if (!layers[i].in_dims.empty() && product(layers[i].in_dims) != a.in)
                throw ConfigError(0, "[layer" + std::to_string(i + 1) + "]: in_dims do not match architecture");
            if (!layers[i].out_dims.empty() && product(layers[i].out_dims) != a.out)
                throw ConfigError(0, "[layer" + std::to_string(i + 1) + "]: out_dims do not match architecture");
        }
    }
}

std::string ExperimentConfig::echo() const {
    std::ostringstream os;
    os << "[experiment]\n";
    os << "arch = " << arch << "\n";
    os << "dataset = " << dataset << "\n";
    os << "mode = " << mode << "\n";
    os << "inner_activation = " << to_string(effective_inner()) << "\n";
    os << "use_bias = " << (use_bias ? "true" : "false") << "\n";
    os << "data_dir = " << data_dir << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "threads = " << threads << "\n";
    os << "\n[train]\n";
    os << "epochs = " << train.epochs << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "optimizer = " << train.optimizer.id << "\n";
    os << "lr = " << fmt_double(train.optimizer.learning_rate()) << "\n";
    os << "beta1 = " << fmt_double(train.optimizer.beta1) << "\n";
    os << "beta2 = " << fmt_double(train.optimizer.beta2) << "\n";
    os << "eps = " << fmt_double(train.optimizer.eps) << "\n";
    os << "momentum = " << fmt_double(train.optimizer.momentum) << "\n";
    os << "seeds = ";
    for (std::size_t i = 0; i < train.seeds.size(); ++i) os << (i ? "," : "") << train.seeds[i];
    os << "\n";
    os << "precision = " << to_string(train.precision) << "\n";
    os << "shuffle = " << (train.shuffle ? "true" : "false") << "\n";
    os << "drop_last = " << (train.drop_last ? "true" : "false") << "\n";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].present) continue;
        os << "\n[layer" << (i + 1) << "]\n";
        os << "rank = " << layers[i].rank << "\n";
        os << "in_dims = " << join(layers[i].in_dims) << "\n";
        os << "out_dims = " << join(layers[i].out_dims) << "\n";
    }
    return os.str();
}

void ExperimentConfig::apply_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError(0, "override '" + assignment + "' is not of the form section.key=value");
    const std::string lhs = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const std::size_t dot = lhs.find('.');
    if (dot == std::string::npos)
        throw ConfigError(0, "override '" + assignment + "' needs a section prefix (e.g. train.epochs=3)");
    assign(*this, lhs.substr(0, dot), lhs.substr(dot + 1), value, 0);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section = "experiment";
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const std::size_t hash = s.find_first_of("#;");
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "unterminated section header '" + raw + "'");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError(line, "empty section header");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line, "expected 'key = value', got '" + raw + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "empty key");
        assign(cfg, section, key, value, line);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(0, "cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

} // namespace ntr
