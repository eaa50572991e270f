#include "ppt/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ppt/adam.hpp"
#include "ppt/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "model persistence assumes a little-endian host");

namespace ppt {

PptModel PptModel::init(const PyramidConfig& config, DecoderVariant variant,
                        uint64_t seed) {
    config.validate();
    PptModel model;
    model.config = config;
    model.decoder_variant = variant;
    Rng rng(seed);
    for (int i = 0; i < config.num_levels(); ++i) {
        int grid = config.level_side(i) / config.patch_side();
        model.levels.push_back(
            PatchTransformerWeights::init(config.levels[i], grid, grid, rng));
    }
    int64_t k = config.stack_channels();
    int64_t hidden = model.decoder_hidden();
    auto gaussian = [&rng](Shape shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (float& v : t.mutable_data()) {
            v = static_cast<float>(rng.normal(0.02));
        }
        return t;
    };
    model.decoder.w1 = gaussian({k, hidden}).set_requires_grad(true);
    model.decoder.b1 = Tensor::zeros({hidden}).set_requires_grad(true);
    model.decoder.w2 = gaussian({hidden, 1}).set_requires_grad(true);
    model.decoder.b2 = Tensor::zeros({1}).set_requires_grad(true);
    return model;
}

std::vector<Tensor> PptModel::parameters() const {
    std::vector<Tensor> out;
    for (const PatchTransformerWeights& level : levels) {
        auto p = level.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    out.insert(out.end(), {decoder.w1, decoder.b1, decoder.w2, decoder.b2});
    return out;
}

FeatureStack PptModel::encode(const Tensor& image) const {
    return pyramid_encode(image, levels, config);
}

Tensor PptModel::decode(const FeatureStack& stack) const {
    return decode_features(stack, decoder, decoder_variant);
}

Tensor PptModel::reconstruct(const Tensor& image) const {
    return decode(encode(image));
}

Tensor decode_features(const FeatureStack& stack, const DecoderWeights& decoder,
                       DecoderVariant variant) {
    const Tensor& f = stack.features;
    if (f.rank() != 3 || f.extent(2) != decoder.w1.extent(0)) {
        throw ShapeError("decode: features " + shape_str(f.shape()) +
                         " do not match decoder input width " +
                         shape_str(decoder.w1.shape()));
    }
    int64_t h = f.extent(0);
    int64_t w = f.extent(1);
    Tensor x = reshape(f, {h * w, f.extent(2)});
    x = gelu(add_bias(matmul(x, decoder.w1), decoder.b1));
    x = add_bias(matmul(x, decoder.w2), decoder.b2);
    if (variant == DecoderVariant::gelu_tanh) {
        x = gelu(x);
    }
    x = tanh(x);
    return reshape(x, {h, w});
}

Tensor reconstruct_loss(const Tensor& image, const PptModel& model) {
    return mse(image, model.reconstruct(image));
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw ConfigError("train: lr must be positive");
    }
    if (epochs < 0) {
        throw ConfigError("train: epochs must be >= 0");
    }
}

TrainResult train(PptModel& model, std::span<const Tensor> corpus,
                  const TrainConfig& config,
                  const std::function<void(const StepRecord&)>& on_step) {
    config.validate();
    if (corpus.empty()) {
        throw ContractError("train: corpus is empty");
    }
    std::vector<Tensor> params = model.parameters();
    AdamConfig adam;
    adam.lr = config.lr;
    AdamState state(params, adam);
    Rng order_rng(config.seed);

    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainResult result;
    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (size_t idx : order) {
            float loss_value = 0.0f;
            {
                GradTape tape;
                Tensor loss = reconstruct_loss(corpus[idx], model);
                loss_value = loss.item();
                if (!std::isfinite(loss_value)) {
                    throw NumericError("train: loss became non-finite at step " +
                                       std::to_string(step + 1));
                }
                tape.backward(loss);
            }
            adam_step(params, state);
            for (Tensor& p : params) p.clear_grad();

            StepRecord record{++step, epoch, loss_value};
            result.curve.push_back(record);
            if (on_step) on_step(record);
        }
    }
    return result;
}

void write_loss_csv(const std::filesystem::path& path,
                    std::span<const StepRecord> curve) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "step,epoch,loss\n";
    char line[128];
    for (const StepRecord& r : curve) {
        std::snprintf(line, sizeof(line), "%d,%d,%.9g\n", r.step, r.epoch,
                      static_cast<double>(r.loss));
        out << line;
    }
    if (!out.flush()) {
        throw IoError("failed writing " + path.string());
    }
}

// ---- persistence ----------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'P', 'P', 'T', 'M'};
constexpr uint32_t kFormatVersion = 1;

uint32_t crc32_update(uint32_t crc, const void* bytes, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            }
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(bytes);
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) {
        crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    }
    return crc ^ 0xffffffffu;
}

struct CountingWriter {
    std::ofstream out;
    uint32_t crc = 0;

    void write(const void* bytes, size_t len) {
        out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(len));
        crc = crc32_update(crc, bytes, len);
    }
    void write_u32(uint32_t v) { write(&v, sizeof v); }
};

struct CheckingReader {
    std::ifstream in;
    uint32_t crc = 0;

    void read(void* bytes, size_t len, const char* what) {
        in.read(static_cast<char*>(bytes), static_cast<std::streamsize>(len));
        if (static_cast<size_t>(in.gcount()) != len) {
            throw IoError(std::string("model file truncated while reading ") + what);
        }
        crc = crc32_update(crc, bytes, len);
    }
    uint32_t read_u32(const char* what) {
        uint32_t v = 0;
        read(&v, sizeof v, what);
        return v;
    }
};

}  // namespace

void save_model(const PptModel& model, const std::filesystem::path& path) {
    model.config.validate();
    CountingWriter w;
    w.out.open(path, std::ios::binary);
    if (!w.out) {
        throw IoError("cannot write " + path.string());
    }
    w.write(kMagic.data(), kMagic.size());
    w.write_u32(kFormatVersion);
    w.write_u32(static_cast<uint32_t>(model.config.input_side));
    w.write_u32(static_cast<uint32_t>(model.config.patch_side()));
    w.write_u32(static_cast<uint32_t>(model.config.channels()));
    w.write_u32(static_cast<uint32_t>(model.config.levels.front().blocks));
    w.write_u32(static_cast<uint32_t>(model.config.levels.front().heads));
    w.write_u32(static_cast<uint32_t>(model.decoder_variant));

    for (const Tensor& p : model.parameters()) {
        auto v = p.data();
        w.write(v.data(), v.size() * sizeof(float));
    }
    uint32_t crc = w.crc;
    w.out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!w.out.flush()) {
        throw IoError("failed writing " + path.string());
    }
}

PptModel load_model(const std::filesystem::path& path) {
    CheckingReader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) {
        throw IoError("cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    r.read(magic.data(), magic.size(), "magic");
    if (magic != kMagic) {
        throw IoError(path.string() + " is not a model file (bad magic)");
    }
    uint32_t version = r.read_u32("version");
    if (version != kFormatVersion) {
        throw IoError("unsupported model format version " + std::to_string(version));
    }
    PatchConfig level;
    uint32_t side = r.read_u32("config");
    level.patch_side = static_cast<int>(r.read_u32("config"));
    level.channels = static_cast<int>(r.read_u32("config"));
    level.blocks = static_cast<int>(r.read_u32("config"));
    level.heads = static_cast<int>(r.read_u32("config"));
    uint32_t variant = r.read_u32("config");
    if (variant > static_cast<uint32_t>(DecoderVariant::tanh)) {
        throw IoError("model file names an unknown decoder variant " +
                      std::to_string(variant));
    }

    // Reconstructs the parameter skeleton from the config, then overwrites
    // every tensor in canonical order.
    PptModel model;
    try {
        PyramidConfig config = PyramidConfig::uniform(static_cast<int>(side), level);
        model = PptModel::init(config, static_cast<DecoderVariant>(variant), 0);
    } catch (const ConfigError& e) {
        throw IoError(path.string() + " carries an invalid config block: " + e.what());
    }
    for (Tensor p : model.parameters()) {
        auto v = p.mutable_data();
        r.read(v.data(), v.size() * sizeof(float), "parameters");
    }
    uint32_t expected = r.crc;
    uint32_t stored = 0;
    r.in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (r.in.gcount() != sizeof stored) {
        throw IoError("model file truncated while reading checksum");
    }
    if (stored != expected) {
        throw IoError("model file checksum mismatch (corrupted file)");
    }
    return model;
}

}  // namespace ppt
