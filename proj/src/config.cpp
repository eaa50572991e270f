#include "ppt/config.hpp"

#include <fstream>

namespace ppt {

namespace {

std::string trim(const std::string& s) {
    size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got \"" + value + "\"");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        // stoull quietly wraps negative input, so refuse the sign up front
        if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got \"" + value +
                          "\"");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got \"" + value + "\"");
    }
}

}  // namespace

void RunConfig::validate() const {
    pyramid();  // side/patch/channel/head constraints
    train();
    if (epochs < 0) {
        throw ConfigError("epochs must be >= 0");
    }
}

PyramidConfig RunConfig::pyramid() const {
    PatchConfig level;
    level.patch_side = patch_side;
    level.channels = channels;
    level.blocks = blocks;
    level.heads = heads;
    return PyramidConfig::uniform(input_side, level);
}

TrainConfig RunConfig::train() const {
    TrainConfig t;
    t.lr = lr;
    t.epochs = epochs;
    t.seed = seed;
    t.validate();
    return t;
}

void apply_config_value(RunConfig& config, const std::string& key,
                        const std::string& value) {
    if (key == "input_side") {
        config.input_side = parse_int(key, value);
    } else if (key == "patch_side") {
        config.patch_side = parse_int(key, value);
    } else if (key == "channels") {
        config.channels = parse_int(key, value);
    } else if (key == "blocks") {
        config.blocks = parse_int(key, value);
    } else if (key == "heads") {
        config.heads = parse_int(key, value);
    } else if (key == "decoder") {
        if (value == "gelu-tanh") {
            config.decoder = DecoderVariant::gelu_tanh;
        } else if (value == "tanh") {
            config.decoder = DecoderVariant::tanh;
        } else {
            throw ConfigError("decoder: expected gelu-tanh or tanh, got \"" + value +
                              "\"");
        }
    } else if (key == "lr") {
        config.lr = parse_double(key, value);
        if (!(config.lr > 0.0)) {
            throw ConfigError("lr must be positive");
        }
    } else if (key == "epochs") {
        config.epochs = parse_int(key, value);
    } else if (key == "seed") {
        config.seed = parse_u64(key, value);
    } else if (key == "strategy") {
        config.strategy = parse_strategy(value);
    } else if (key == "corpus_dir") {
        config.corpus_dir = value;
    } else if (key == "out_dir") {
        config.out_dir = value;
    } else {
        throw ConfigError("unknown config key \"" + key + "\"");
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    RunConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key=value, got \"" + text + "\"");
        }
        apply_config_value(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
    return config;
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "input_side = " << config.input_side << "\n"
        << "patch_side = " << config.patch_side << "\n"
        << "channels = " << config.channels << "\n"
        << "blocks = " << config.blocks << "\n"
        << "heads = " << config.heads << "\n"
        << "decoder = "
        << (config.decoder == DecoderVariant::gelu_tanh ? "gelu-tanh" : "tanh") << "\n";
    char lr[64];
    std::snprintf(lr, sizeof(lr), "%.9g", config.lr);
    out << "lr = " << lr << "\n"
        << "epochs = " << config.epochs << "\n"
        << "seed = " << config.seed << "\n"
        << "strategy = " << strategy_name(config.strategy) << "\n";
    if (!config.corpus_dir.empty()) {
        out << "corpus_dir = " << config.corpus_dir << "\n";
    }
    if (!config.out_dir.empty()) {
        out << "out_dir = " << config.out_dir << "\n";
    }
    if (!out.flush()) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace ppt
