#include "ppt/pyramid.hpp"

namespace ppt {

namespace {

bool power_of_two(int v) {
    return v > 0 && (v & (v - 1)) == 0;
}

}  // namespace

PyramidConfig PyramidConfig::uniform(int input_side, const PatchConfig& level) {
    level.validate();
    if (!power_of_two(input_side) || !power_of_two(level.patch_side) ||
        input_side < level.patch_side) {
        throw ConfigError("pyramid: input side " + std::to_string(input_side) +
                          " and patch side " + std::to_string(level.patch_side) +
                          " must be powers of two with side >= patch");
    }
    PyramidConfig config;
    config.input_side = input_side;
    for (int side = input_side; side >= level.patch_side; side /= 2) {
        config.levels.push_back(level);
    }
    return config;
}

void PyramidConfig::validate() const {
    if (levels.empty()) {
        throw ConfigError("pyramid: need at least one level");
    }
    for (const PatchConfig& level : levels) {
        level.validate();
        if (level.patch_side != levels.front().patch_side ||
            level.channels != levels.front().channels) {
            throw ConfigError("pyramid: levels must share patch side and channels");
        }
    }
    if (!power_of_two(input_side) || !power_of_two(patch_side())) {
        throw ConfigError("pyramid: input side and patch side must be powers of two");
    }
    // Exactly enough levels that the deepest one sees a single patch.
    if (level_side(depth()) != patch_side()) {
        throw ConfigError("pyramid: " + std::to_string(num_levels()) +
                          " levels do not take side " + std::to_string(input_side) +
                          " down to one patch of side " + std::to_string(patch_side()));
    }
}

Tensor FeatureStack::level(int index) const {
    if (index < 0 || index >= num_levels) {
        throw ContractError("feature stack has levels 0.." +
                            std::to_string(num_levels - 1) + ", got " +
                            std::to_string(index));
    }
    int64_t h = features.extent(0);
    int64_t w = features.extent(1);
    int64_t k = features.extent(2);
    int64_t c = channels_per_level;
    auto src = features.data();
    std::vector<float> out(static_cast<size_t>(h * w * c));
    for (int64_t s = 0; s < h * w; ++s) {
        const float* row = src.data() + s * k + index * c;
        std::copy_n(row, c, out.data() + s * c);
    }
    return Tensor::from_data({h, w, c}, std::move(out));
}

Tensor downsample(const Tensor& image) {
    if (image.rank() != 2) {
        throw ShapeError("downsample: need a [H, W] image, got " +
                         shape_str(image.shape()));
    }
    int64_t h = image.extent(0);
    int64_t w = image.extent(1);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ContractError("downsample: extents must be even, got " +
                            shape_str(image.shape()));
    }
    auto src = image.data();
    std::vector<float> out(static_cast<size_t>(h / 2 * (w / 2)));
    for (int64_t y = 0; y < h / 2; ++y) {
        const float* top = src.data() + 2 * y * w;
        const float* bot = top + w;
        float* dst = out.data() + y * (w / 2);
        for (int64_t x = 0; x < w / 2; ++x) {
            dst[x] = (top[2 * x] + top[2 * x + 1] + bot[2 * x] + bot[2 * x + 1]) * 0.25f;
        }
    }
    return make_op({h / 2, w / 2}, std::move(out), {image}, [h, w](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gi = ctx.in_grad(0);
        for (int64_t y = 0; y < h / 2; ++y) {
            float* top = gi.data() + 2 * y * w;
            float* bot = top + w;
            const float* src = g.data() + y * (w / 2);
            for (int64_t x = 0; x < w / 2; ++x) {
                float quarter = src[x] * 0.25f;
                top[2 * x] += quarter;
                top[2 * x + 1] += quarter;
                bot[2 * x] += quarter;
                bot[2 * x + 1] += quarter;
            }
        }
    });
}

Tensor upsample(const Tensor& features, int target_h, int target_w) {
    if (features.rank() != 3) {
        throw ShapeError("upsample: need [h, w, C] features, got " +
                         shape_str(features.shape()));
    }
    int64_t h = features.extent(0);
    int64_t w = features.extent(1);
    int64_t c = features.extent(2);
    if (target_h < h || target_h % h != 0 || target_w % w != 0 ||
        target_h / h != target_w / w ||
        !power_of_two(static_cast<int>(target_h / h))) {
        throw ContractError("upsample: cannot scale " + shape_str(features.shape()) +
                            " to " + std::to_string(target_h) + "x" +
                            std::to_string(target_w) +
                            " by a power-of-two factor shared by both axes");
    }
    int64_t f = target_h / h;
    auto src = features.data();
    std::vector<float> out(static_cast<size_t>(target_h) * target_w * c);
    for (int64_t y = 0; y < target_h; ++y) {
        for (int64_t x = 0; x < target_w; ++x) {
            const float* cell = src.data() + ((y / f) * w + x / f) * c;
            std::copy_n(cell, c, out.data() + (y * target_w + x) * c);
        }
    }
    return make_op({target_h, target_w, c}, std::move(out), {features},
                   [h, w, c, f](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gi = ctx.in_grad(0);
        int64_t tw = w * f;
        // Adjoint of replication: sum each f×f output block into its source.
        for (int64_t y = 0; y < h * f; ++y) {
            for (int64_t x = 0; x < tw; ++x) {
                float* cell = gi.data() + ((y / f) * w + x / f) * c;
                const float* src = g.data() + (y * tw + x) * c;
                for (int64_t ch = 0; ch < c; ++ch) cell[ch] += src[ch];
            }
        }
    });
}

FeatureStack pyramid_encode(const Tensor& image,
                            std::span<const PatchTransformerWeights> weights,
                            const PyramidConfig& config) {
    config.validate();
    if (static_cast<int>(weights.size()) != config.num_levels()) {
        throw ContractError("pyramid_encode: config has " +
                            std::to_string(config.num_levels()) + " levels, got " +
                            std::to_string(weights.size()) + " weight sets");
    }
    if (image.rank() != 2 || image.extent(0) != config.input_side ||
        image.extent(1) != config.input_side) {
        throw ShapeError("pyramid_encode: image " + shape_str(image.shape()) +
                         " does not match input side " +
                         std::to_string(config.input_side));
    }

    std::vector<Tensor> levels;
    levels.reserve(config.num_levels());
    Tensor current = image;
    for (int i = 0; i < config.num_levels(); ++i) {
        if (i > 0) current = downsample(current);
        Tensor f = encode_patches(current, weights[i], config.levels[i]);
        if (i > 0) f = upsample(f, config.input_side, config.input_side);
        levels.push_back(std::move(f));
    }

    FeatureStack stack;
    stack.features = concat(levels, 2);
    stack.channels_per_level = config.channels();
    stack.num_levels = config.num_levels();
    return stack;
}

}  // namespace ppt
