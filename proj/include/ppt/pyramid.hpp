#pragma once

#include <span>
#include <vector>

#include "ppt/patch.hpp"
#include "ppt/tensor.hpp"

namespace ppt {

// Multi-scale encoder configuration: a square power-of-two input side and one
// PatchConfig per level. depth() is the number of halvings until the image
// equals one patch, so there are depth()+1 levels in total.
struct PyramidConfig {
    int input_side = 256;
    std::vector<PatchConfig> levels;

    // All levels share the same patch side and channel width.
    static PyramidConfig uniform(int input_side, const PatchConfig& level);

    int depth() const { return static_cast<int>(levels.size()) - 1; }
    int num_levels() const { return static_cast<int>(levels.size()); }
    int patch_side() const { return levels.front().patch_side; }
    int channels() const { return levels.front().channels; }
    int stack_channels() const { return num_levels() * channels(); }
    // Image side seen by one level.
    int level_side(int level) const { return input_side >> level; }

    void validate() const;
};

// Encoder output: features is [S, S, num_levels·C] with channels
// [i·C, (i+1)·C) coming from pyramid level i.
struct FeatureStack {
    Tensor features;
    int channels_per_level = 0;
    int num_levels = 0;

    // Copy of one level's channel block as [S, S, C] (not differentiable).
    Tensor level(int index) const;
};

// 2×2 average pooling; extents must be even.
Tensor downsample(const Tensor& image);

// Nearest-neighbor replication of [h, w, C] features to [target_h, target_w, C].
// The two axes must scale by the same power-of-two factor.
Tensor upsample(const Tensor& features, int target_h, int target_w);

// Level 0 encodes the image as-is; level i encodes downsample^i(image) and is
// upsampled back; all levels concatenate channelwise in level order.
FeatureStack pyramid_encode(const Tensor& image,
                            std::span<const PatchTransformerWeights> weights,
                            const PyramidConfig& config);

}  // namespace ppt
