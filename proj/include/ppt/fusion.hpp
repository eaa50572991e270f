#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ppt/image.hpp"
#include "ppt/model.hpp"

namespace ppt {

// Elementwise rule merging two feature stacks from the shared encoder.
enum class FusionStrategy {
    average,  // (a + b) / 2
    max,      // elementwise maximum
    softmax,  // convex combination weighted by the two-way softmax of (a, b)
};

FusionStrategy parse_strategy(std::string_view name);
std::string_view strategy_name(FusionStrategy strategy);

// All three rules are symmetric in their arguments and return the common
// value when both stacks are equal.
FeatureStack fuse_features(const FeatureStack& a, const FeatureStack& b,
                           FusionStrategy strategy);

// Siamese fusion of one model-sized tile pair: encode both normalized images
// with the same model, merge, decode. Returns the fused [S, S] tensor.
Tensor fuse_pair(const Tensor& a, const Tensor& b, const PptModel& model,
                 FusionStrategy strategy);

// Non-overlapping tiling of an H×W image into window×window tiles, padding
// the right/bottom remainder with raw value 128.
struct TilePlan {
    static constexpr uint8_t kPadValue = 128;

    int source_h = 0;
    int source_w = 0;
    int window = 0;
    int rows = 0;
    int cols = 0;

    int padded_h() const { return rows * window; }
    int padded_w() const { return cols * window; }

    struct Tile {
        int row = 0;
        int col = 0;
        int y = 0;  // origin in the padded image
        int x = 0;
    };
    std::vector<Tile> tiles() const;
};

TilePlan plan_tiles(int height, int width, int window);
RawImage pad_for_tiles(const RawImage& gray, const TilePlan& plan);

// Fuses two equal-size grayscale images of arbitrary extents: pad both to the
// tile grid, fuse every tile pair independently, splice in grid order, crop
// the padding away. Tiles run in parallel (capped by PPT_THREADS).
RawImage tile_and_fuse(const RawImage& a, const RawImage& b, const PptModel& model,
                       FusionStrategy strategy);

// RGB fusion: each channel pair is fused independently like a grayscale pair,
// then the channels are re-stacked.
RawImage fuse_rgb(const RawImage& a, const RawImage& b, const PptModel& model,
                  FusionStrategy strategy);

// Worker cap for data-parallel sections: PPT_THREADS when set (minimum 1),
// otherwise the hardware concurrency.
int worker_count();

}  // namespace ppt
