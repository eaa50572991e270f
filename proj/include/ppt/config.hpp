#pragma once

#include <filesystem>
#include <string>

#include "ppt/fusion.hpp"
#include "ppt/model.hpp"

namespace ppt {

// One flat bag of settings shared by every CLI command. File values load
// first, command-line flags override them, and the resolved result can be
// snapshotted next to the outputs to make a run reproducible.
struct RunConfig {
    int input_side = 256;
    int patch_side = 32;
    int channels = 16;
    int blocks = 2;
    int heads = 4;
    DecoderVariant decoder = DecoderVariant::gelu_tanh;
    double lr = 1e-4;
    int epochs = 50;
    uint64_t seed = 1;
    FusionStrategy strategy = FusionStrategy::average;
    std::string corpus_dir;
    std::string out_dir;

    void validate() const;

    PyramidConfig pyramid() const;
    TrainConfig train() const;
};

// Applies one key=value setting; unknown keys and unparsable values both
// raise ConfigError.
void apply_config_value(RunConfig& config, const std::string& key,
                        const std::string& value);

// key=value lines, blank lines and '#' comments.
RunConfig load_run_config(const std::filesystem::path& path);

void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace ppt
