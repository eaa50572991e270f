#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppt/config.hpp"
#include "ppt/fusion.hpp"
#include "ppt/metrics.hpp"

namespace fs = std::filesystem;

namespace {

using ppt::RunConfig;

// Raw string values for every flag that mirrors a config key; applied on top
// of the config file through the same parser, so validation is uniform.
struct Overrides {
    std::map<std::string, std::string> values;

    void add_flag(CLI::App* cmd, const std::string& flag, const std::string& key,
                  const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }

    void apply(RunConfig& config) const {
        for (const auto& [key, value] : values) {
            ppt::apply_config_value(config, key, value);
        }
    }
};

RunConfig resolve_config(const std::string& config_path, const Overrides& overrides) {
    RunConfig config;
    if (!config_path.empty()) {
        config = ppt::load_run_config(config_path);
    }
    overrides.apply(config);
    config.validate();
    return config;
}

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw ppt::IoError(dir.string() + " is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

ppt::RawImage load_gray(const fs::path& path) {
    return ppt::to_gray(ppt::load_image(path));
}

// ---- train ------------------------------------------------------------------

void run_train(const RunConfig& config) {
    if (config.corpus_dir.empty() || config.out_dir.empty()) {
        throw ppt::ConfigError("train needs --corpus and --out (or corpus_dir/out_dir)");
    }
    std::vector<fs::path> files = list_images(config.corpus_dir);
    if (files.empty()) {
        throw ppt::IoError("no .pgm/.png images in " + config.corpus_dir);
    }
    std::vector<ppt::Tensor> corpus;
    corpus.reserve(files.size());
    for (const fs::path& file : files) {
        corpus.push_back(
            ppt::normalize(ppt::fit_to_square(load_gray(file), config.input_side)));
    }
    std::cout << "training on " << corpus.size() << " images, " << config.epochs
              << " epochs\n";

    ppt::PptModel model = ppt::PptModel::init(config.pyramid(), config.decoder,
                                              config.seed);
    ppt::TrainResult result =
        ppt::train(model, corpus, config.train(), [](const ppt::StepRecord& r) {
            std::printf("step %d  epoch %d  loss %.6f\n", r.step, r.epoch,
                        static_cast<double>(r.loss));
            std::fflush(stdout);
        });

    fs::create_directories(config.out_dir);
    fs::path out_dir = config.out_dir;
    ppt::save_model(model, out_dir / "model.pptm");
    ppt::write_loss_csv(out_dir / "loss.csv", result.curve);
    ppt::save_run_config(config, out_dir / "config.txt");
    std::cout << "wrote " << (out_dir / "model.pptm").string() << "\n";
}

// ---- fuse -------------------------------------------------------------------

void run_fuse(const std::string& model_path, const std::string& a_path,
              const std::string& b_path, const std::string& out_path,
              ppt::FusionStrategy strategy) {
    ppt::PptModel model = ppt::load_model(model_path);
    ppt::RawImage a = ppt::load_image(a_path);
    ppt::RawImage b = ppt::load_image(b_path);
    if (a.height != b.height || a.width != b.width) {
        throw ppt::IoError("input extents differ: " + a_path + " is " +
                           std::to_string(a.height) + "x" + std::to_string(a.width) +
                           ", " + b_path + " is " + std::to_string(b.height) + "x" +
                           std::to_string(b.width));
    }
    ppt::RawImage fused;
    if (a.channels == 3 && b.channels == 3) {
        fused = ppt::fuse_rgb(a, b, model, strategy);
    } else {
        fused = ppt::tile_and_fuse(ppt::to_gray(a), ppt::to_gray(b), model, strategy);
    }
    ppt::save_image(fused, out_path);
    std::cout << "wrote " << out_path << "\n";
}

// ---- eval -------------------------------------------------------------------

void write_report(const std::vector<ppt::NamedReport>& rows,
                  const std::string& report_path) {
    if (report_path.empty()) {
        ppt::write_report_csv(std::cout, rows);
        return;
    }
    std::ofstream out(report_path);
    if (!out) {
        throw ppt::IoError("cannot write " + report_path);
    }
    fs::path path(report_path);
    if (path.extension() == ".json") {
        ppt::write_report_json(out, rows);
    } else {
        ppt::write_report_csv(out, rows);
    }
    if (!out.flush()) {
        throw ppt::IoError("failed writing " + report_path);
    }
}

void run_eval(const std::string& fused_path, const std::string& a_path,
              const std::string& b_path, const std::string& report_path) {
    bool dirs = fs::is_directory(fused_path);
    if (dirs != fs::is_directory(a_path) || dirs != fs::is_directory(b_path)) {
        throw ppt::IoError("eval needs three files or three directories");
    }
    std::vector<ppt::NamedReport> rows;
    if (!dirs) {
        ppt::MetricReport report = ppt::evaluate_all(
            load_gray(fused_path), load_gray(a_path), load_gray(b_path));
        rows.emplace_back(fs::path(fused_path).filename().string(), report);
    } else {
        std::vector<fs::path> files = list_images(fused_path);
        if (files.empty()) {
            throw ppt::IoError("no .pgm/.png images in " + fused_path);
        }
        std::vector<ppt::MetricReport> reports;
        for (const fs::path& file : files) {
            fs::path in_a = fs::path(a_path) / file.filename();
            fs::path in_b = fs::path(b_path) / file.filename();
            if (!fs::exists(in_a) || !fs::exists(in_b)) {
                throw ppt::IoError("no counterpart for " + file.filename().string() +
                                   " in both source directories");
            }
            reports.push_back(
                ppt::evaluate_all(load_gray(file), load_gray(in_a), load_gray(in_b)));
            rows.emplace_back(file.filename().string(), reports.back());
        }
        rows.emplace_back("average", ppt::average_reports(reports));
    }
    write_report(rows, report_path);
}

// ---- features ---------------------------------------------------------------

void run_features(const std::string& model_path, const std::string& image_path,
                  int level, const std::string& out_dir) {
    ppt::PptModel model = ppt::load_model(model_path);
    if (level < 0 || level > model.config.depth()) {
        throw ppt::ConfigError("level must be 0.." +
                               std::to_string(model.config.depth()) + ", got " +
                               std::to_string(level));
    }
    ppt::Tensor image = ppt::normalize(
        ppt::fit_to_square(load_gray(image_path), model.config.input_side));
    ppt::FeatureStack stack = model.encode(image);
    ppt::Tensor block = stack.level(level);

    int side = model.config.input_side;
    int channels = model.config.channels();
    auto values = block.data();
    fs::create_directories(out_dir);
    for (int c = 0; c < channels; ++c) {
        float lo = values[c];
        float hi = values[c];
        for (int64_t s = 0; s < static_cast<int64_t>(side) * side; ++s) {
            float v = values[s * channels + c];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        ppt::RawImage img = ppt::RawImage::create(side, side, 1, 128);
        if (hi > lo) {
            double span = static_cast<double>(hi) - lo;
            for (int64_t s = 0; s < static_cast<int64_t>(side) * side; ++s) {
                double v = (values[s * channels + c] - lo) / span;
                img.samples[static_cast<size_t>(s)] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
        char name[64];
        std::snprintf(name, sizeof(name), "level%d_channel%02d.pgm", level, c);
        ppt::save_pgm(img, fs::path(out_dir) / name);
    }
    std::cout << "wrote " << channels << " channel images to " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pyramid patch-transformer auto-encoder: training, two-image fusion, "
                 "metrics and feature visualization"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 success, 2 configuration error, 3 I/O error, "
               "4 numeric failure (NaN).\n"
               "PPT_THREADS caps the tile-fusion worker count.");

    // train
    CLI::App* train = app.add_subcommand("train", "Train the auto-encoder on an image corpus");
    std::string train_config;
    Overrides train_over;
    train->add_option("--config", train_config, "Config file (key=value lines)");
    train_over.add_flag(train, "--corpus", "corpus_dir", "Directory of training images");
    train_over.add_flag(train, "--out", "out_dir", "Output directory");
    train_over.add_flag(train, "--input-side", "input_side", "Model input side");
    train_over.add_flag(train, "--patch-side", "patch_side", "Patch side");
    train_over.add_flag(train, "--channels", "channels", "Token channels per level");
    train_over.add_flag(train, "--blocks", "blocks", "Transformer blocks per level");
    train_over.add_flag(train, "--heads", "heads", "Attention heads");
    train_over.add_flag(train, "--decoder", "decoder", "Decoder head: gelu-tanh or tanh");
    train_over.add_flag(train, "--lr", "lr", "Adam learning rate");
    train_over.add_flag(train, "--epochs", "epochs", "Training epochs");
    train_over.add_flag(train, "--seed", "seed", "RNG seed");
    train->callback([&] { run_train(resolve_config(train_config, train_over)); });

    // fuse
    CLI::App* fuse = app.add_subcommand("fuse", "Fuse two registered images");
    std::string fuse_config, fuse_model, fuse_a, fuse_b, fuse_out, fuse_strategy;
    fuse->add_option("--config", fuse_config, "Config file (for the default strategy)");
    fuse->add_option("--model", fuse_model, "Trained model file")->required();
    fuse->add_option("--a", fuse_a, "First source image")->required();
    fuse->add_option("--b", fuse_b, "Second source image")->required();
    fuse->add_option("--out", fuse_out, "Fused output image (.pgm or .png)")->required();
    fuse->add_option("--strategy", fuse_strategy, "average, max or softmax");
    fuse->callback([&] {
        Overrides over;
        if (!fuse_strategy.empty()) over.values["strategy"] = fuse_strategy;
        RunConfig config = resolve_config(fuse_config, over);
        run_fuse(fuse_model, fuse_a, fuse_b, fuse_out, config.strategy);
    });

    // eval
    CLI::App* eval = app.add_subcommand("eval", "Score a fused image against its sources");
    std::string eval_fused, eval_a, eval_b, eval_report;
    eval->add_option("--fused", eval_fused, "Fused image or directory")->required();
    eval->add_option("--a", eval_a, "First source image or directory")->required();
    eval->add_option("--b", eval_b, "Second source image or directory")->required();
    eval->add_option("--report", eval_report,
                     "Report file (.json for JSON, anything else CSV); stdout if omitted");
    eval->callback([&] { run_eval(eval_fused, eval_a, eval_b, eval_report); });

    // features
    CLI::App* features = app.add_subcommand("features",
                                            "Dump one pyramid level's feature channels");
    std::string feat_model, feat_image, feat_out;
    int feat_level = 0;
    features->add_option("--model", feat_model, "Trained model file")->required();
    features->add_option("--image", feat_image, "Input image")->required();
    features->add_option("--level", feat_level, "Pyramid level index")->required();
    features->add_option("--out-dir", feat_out, "Output directory")->required();
    features->callback([&] { run_features(feat_model, feat_image, feat_level, feat_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ppt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ppt::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const ppt::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
