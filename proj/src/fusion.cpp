#include "ppt/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

namespace ppt {

FusionStrategy parse_strategy(std::string_view name) {
    if (name == "average") return FusionStrategy::average;
    if (name == "max") return FusionStrategy::max;
    if (name == "softmax") return FusionStrategy::softmax;
    throw ConfigError("unknown fusion strategy \"" + std::string(name) +
                      "\" (average, max, softmax)");
}

std::string_view strategy_name(FusionStrategy strategy) {
    switch (strategy) {
        case FusionStrategy::average: return "average";
        case FusionStrategy::max: return "max";
        case FusionStrategy::softmax: return "softmax";
    }
    throw ContractError("corrupt fusion strategy value");
}

FeatureStack fuse_features(const FeatureStack& a, const FeatureStack& b,
                           FusionStrategy strategy) {
    if (a.features.shape() != b.features.shape() ||
        a.channels_per_level != b.channels_per_level || a.num_levels != b.num_levels) {
        throw ShapeError("fuse_features: stacks differ, " +
                         shape_str(a.features.shape()) + " vs " +
                         shape_str(b.features.shape()));
    }
    auto av = a.features.data();
    auto bv = b.features.data();
    std::vector<float> out(av.size());
    switch (strategy) {
        case FusionStrategy::average:
            for (size_t i = 0; i < out.size(); ++i) out[i] = (av[i] + bv[i]) * 0.5f;
            break;
        case FusionStrategy::max:
            for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(av[i], bv[i]);
            break;
        case FusionStrategy::softmax:
            // Two-way softmax weights with max-subtraction. Written so that
            // swapping the inputs produces bitwise-identical results.
            for (size_t i = 0; i < out.size(); ++i) {
                double x = av[i];
                double y = bv[i];
                double peak = std::max(x, y);
                double ex = std::exp(x - peak);
                double ey = std::exp(y - peak);
                double sum = ex + ey;
                out[i] = static_cast<float>((ex / sum) * x + (ey / sum) * y);
            }
            break;
    }
    FeatureStack fused;
    fused.features = Tensor::from_data(a.features.shape(), std::move(out));
    fused.channels_per_level = a.channels_per_level;
    fused.num_levels = a.num_levels;
    return fused;
}

Tensor fuse_pair(const Tensor& a, const Tensor& b, const PptModel& model,
                 FusionStrategy strategy) {
    FeatureStack fa = model.encode(a);
    FeatureStack fb = model.encode(b);
    return model.decode(fuse_features(fa, fb, strategy));
}

std::vector<TilePlan::Tile> TilePlan::tiles() const {
    std::vector<Tile> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out.push_back({r, c, r * window, c * window});
        }
    }
    return out;
}

TilePlan plan_tiles(int height, int width, int window) {
    if (height < 1 || width < 1 || window < 1) {
        throw ContractError("plan_tiles: need positive extents and window");
    }
    TilePlan plan;
    plan.source_h = height;
    plan.source_w = width;
    plan.window = window;
    plan.rows = (height + window - 1) / window;
    plan.cols = (width + window - 1) / window;
    return plan;
}

RawImage pad_for_tiles(const RawImage& gray, const TilePlan& plan) {
    if (gray.channels != 1) {
        throw ContractError("pad_for_tiles: need a grayscale image");
    }
    if (gray.height != plan.source_h || gray.width != plan.source_w) {
        throw ContractError("pad_for_tiles: plan was built for " +
                            std::to_string(plan.source_h) + "x" +
                            std::to_string(plan.source_w));
    }
    RawImage out = RawImage::create(plan.padded_h(), plan.padded_w(), 1,
                                    TilePlan::kPadValue);
    for (int y = 0; y < gray.height; ++y) {
        std::copy_n(gray.samples.data() + static_cast<size_t>(y) * gray.width,
                    gray.width,
                    out.samples.data() + static_cast<size_t>(y) * out.width);
    }
    return out;
}

int worker_count() {
    if (const char* env = std::getenv("PPT_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0') {
            return static_cast<int>(std::clamp(v, 1L, 256L));
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

namespace {

// Runs fn(0..count-1) on up to worker_count() threads; rethrows the first
// worker exception. Iterations must touch disjoint state.
void parallel_for(int count, const std::function<void(int)>& fn) {
    int workers = std::min(worker_count(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

RawImage crop(const RawImage& image, int y0, int x0, int height, int width) {
    RawImage out = RawImage::create(height, width, 1);
    for (int y = 0; y < height; ++y) {
        std::copy_n(image.samples.data() + (static_cast<size_t>(y0 + y) * image.width + x0),
                    width, out.samples.data() + static_cast<size_t>(y) * width);
    }
    return out;
}

}  // namespace

RawImage tile_and_fuse(const RawImage& a, const RawImage& b, const PptModel& model,
                       FusionStrategy strategy) {
    if (a.channels != 1 || b.channels != 1) {
        throw ContractError("tile_and_fuse: need grayscale sources");
    }
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("tile_and_fuse: source extents differ, " +
                         std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
    }
    int window = model.config.input_side;
    TilePlan plan = plan_tiles(a.height, a.width, window);
    RawImage pa = pad_for_tiles(a, plan);
    RawImage pb = pad_for_tiles(b, plan);
    RawImage canvas = RawImage::create(plan.padded_h(), plan.padded_w(), 1);
    std::vector<TilePlan::Tile> tiles = plan.tiles();

    parallel_for(static_cast<int>(tiles.size()), [&](int index) {
        const TilePlan::Tile& tile = tiles[static_cast<size_t>(index)];
        Tensor ta = normalize(crop(pa, tile.y, tile.x, window, window));
        Tensor tb = normalize(crop(pb, tile.y, tile.x, window, window));
        RawImage fused = denormalize(fuse_pair(ta, tb, model, strategy));
        for (int y = 0; y < window; ++y) {
            std::copy_n(fused.samples.data() + static_cast<size_t>(y) * window, window,
                        canvas.samples.data() +
                            (static_cast<size_t>(tile.y + y) * canvas.width + tile.x));
        }
    });

    return crop(canvas, 0, 0, a.height, a.width);
}

RawImage fuse_rgb(const RawImage& a, const RawImage& b, const PptModel& model,
                  FusionStrategy strategy) {
    if (a.channels != 3 || b.channels != 3) {
        throw ContractError("fuse_rgb: need RGB sources");
    }
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("fuse_rgb: source extents differ");
    }
    std::vector<RawImage> planes;
    planes.reserve(3);
    for (int c = 0; c < 3; ++c) {
        planes.push_back(
            tile_and_fuse(extract_channel(a, c), extract_channel(b, c), model, strategy));
    }
    return merge_channels(planes[0], planes[1], planes[2]);
}

}  // namespace ppt
