#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ppt/pyramid.hpp"

namespace ppt {

// Decoder head shape. The default applies GELU after both linear layers and
// finishes with Tanh; the alternative drops the second GELU.
enum class DecoderVariant : uint32_t {
    gelu_tanh = 0,  // FC → GELU → FC → GELU → Tanh
    tanh = 1,       // FC → GELU → FC → Tanh
};

struct DecoderWeights {
    Tensor w1, b1;  // stack channels → hidden
    Tensor w2, b2;  // hidden → 1
};

// The full auto-encoder: one patch transformer per pyramid level (weights not
// shared across levels) plus the per-pixel MLP decoder.
struct PptModel {
    PyramidConfig config;
    DecoderVariant decoder_variant = DecoderVariant::gelu_tanh;
    std::vector<PatchTransformerWeights> levels;
    DecoderWeights decoder;

    static PptModel init(const PyramidConfig& config, DecoderVariant variant,
                         uint64_t seed);

    int decoder_hidden() const { return 2 * config.stack_channels(); }

    // Every parameter in canonical order: per level (embed_w, embed_b, pos,
    // then per block ln1 γ/β, Wq, bq, Wk, bk, Wv, bv, Wo, bo, ln2 γ/β,
    // mlp W1, b1, W2, b2), then decoder w1, b1, w2, b2. Persistence, the
    // optimizer and gradient checks all rely on this order.
    std::vector<Tensor> parameters() const;

    FeatureStack encode(const Tensor& image) const;
    Tensor decode(const FeatureStack& stack) const;
    Tensor reconstruct(const Tensor& image) const;
};

// Per-pixel decode of a feature stack: each spatial position's channel vector
// goes through the two-layer MLP head independently. Returns [S, S].
Tensor decode_features(const FeatureStack& stack, const DecoderWeights& decoder,
                       DecoderVariant variant);

// Scalar MSE between the image and its reconstruction; differentiable.
Tensor reconstruct_loss(const Tensor& image, const PptModel& model);

struct TrainConfig {
    double lr = 1e-4;
    int epochs = 50;
    uint64_t seed = 1;

    void validate() const;
};

struct StepRecord {
    int step = 0;   // 1-based, across epochs
    int epoch = 0;  // 1-based
    float loss = 0.0f;
};

struct TrainResult {
    std::vector<StepRecord> curve;
};

// Adam on reconstruct_loss, one image per step (batch size 1), visiting the
// corpus in a seed-shuffled order each epoch. Deterministic for a fixed seed.
// Throws NumericError if the loss stops being finite.
TrainResult train(PptModel& model, std::span<const Tensor> corpus,
                  const TrainConfig& config,
                  const std::function<void(const StepRecord&)>& on_step = {});

void write_loss_csv(const std::filesystem::path& path,
                    std::span<const StepRecord> curve);

// Binary model file: magic, format version, config block, parameters as
// little-endian float32 in canonical order, CRC32 trailer.
void save_model(const PptModel& model, const std::filesystem::path& path);
PptModel load_model(const std::filesystem::path& path);

}  // namespace ppt
