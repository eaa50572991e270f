#pragma once

#include <vector>

#include "ppt/rng.hpp"
#include "ppt/tensor.hpp"

namespace ppt {

// Per-level transformer hyperparameters.
struct PatchConfig {
    int patch_side = 32;  // pixels per patch edge
    int channels = 16;    // token width after embedding
    int blocks = 2;       // transformer blocks applied per patch
    int heads = 4;

    int head_dim() const { return channels / heads; }
    void validate() const;
};

// Geometry of one patch decomposition: a (grid_h × grid_w) grid of square
// patches tiling an image_h × image_w image exactly.
struct PatchLayout {
    int grid_h = 0;
    int grid_w = 0;
    int patch_side = 0;
    int image_h = 0;
    int image_w = 0;

    int num_patches() const { return grid_h * grid_w; }
    int tokens_per_patch() const { return patch_side * patch_side; }
};

// Token view of an image: every pixel is one token, grouped by patch.
// tokens has shape [grid_h·grid_w, patch_side², channels].
struct PatchSequence {
    Tensor tokens;
    PatchLayout layout;
};

struct TransformerBlockWeights {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // channels → 4·channels → channels
};

// All learnable state of one pyramid level. The blocks are shared across
// every patch of the level; the position table is not (one entry per
// grid cell, per within-patch pixel, per channel).
struct PatchTransformerWeights {
    Tensor embed_w;  // [1, channels] per-pixel lift
    Tensor embed_b;  // [channels]
    Tensor pos;      // [grid_h, grid_w, patch_side², channels]
    std::vector<TransformerBlockWeights> blocks;

    // Gaussian σ=0.02 projections and position table, zero biases,
    // unit-gamma/zero-beta layer norms.
    static PatchTransformerWeights init(const PatchConfig& config, int grid_h,
                                        int grid_w, Rng& rng);

    // Parameters in their canonical (persistence) order.
    std::vector<Tensor> parameters() const;
};

// Splits an image into patch token sequences (channel width 1). Extents must
// be divisible by patch_side; nothing is ever cropped silently.
PatchSequence t2p(const Tensor& image, int patch_side);

// Inverse of t2p for any channel width: splices [n, p², C] tokens back into
// the [H, W, C] spatial layout.
Tensor reconstruct(const Tensor& tokens, const PatchLayout& layout);

// Lifts channel-1 tokens to the working width with the shared affine + GELU.
Tensor embed(const PatchSequence& seq, const Tensor& embed_w, const Tensor& embed_b);

// Adds the learned position table; pos is [grid_h, grid_w, p², C] and must
// match the token layout exactly.
Tensor add_position(const Tensor& tokens, const Tensor& pos, const PatchLayout& layout);

// Multi-head self-attention over the tokens of each patch independently:
// Q/K/V projections, per-head scaled dot-product attention, head merge,
// output projection. Accepts [t, C] (one patch) or [n, t, C].
Tensor msa(const Tensor& tokens, const TransformerBlockWeights& block, int heads);

// Pre-norm residual block: z' = msa(ln(z)) + z; z'' = mlp(ln(z')) + z',
// where mlp is FC(C→4C), GELU, FC(4C→C).
Tensor transformer_block(const Tensor& tokens, const TransformerBlockWeights& block,
                         int heads);

// Full level pipeline: t2p → embed → add_position → blocks → reconstruct.
// Output F[y, x, :] is the final token vector of pixel (y, x).
Tensor encode_patches(const Tensor& image, const PatchTransformerWeights& weights,
                      const PatchConfig& config);

}  // namespace ppt
