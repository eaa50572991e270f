#include "ppt/patch.hpp"

namespace ppt {

void PatchConfig::validate() const {
    if (patch_side < 1) {
        throw ConfigError("patch_side must be >= 1, got " + std::to_string(patch_side));
    }
    if (blocks < 1) {
        throw ConfigError("blocks must be >= 1, got " + std::to_string(blocks));
    }
    if (heads < 1 || channels < 1 || channels % heads != 0) {
        throw ConfigError("channels (" + std::to_string(channels) +
                          ") must be positive and divisible by heads (" +
                          std::to_string(heads) + ")");
    }
}

PatchTransformerWeights PatchTransformerWeights::init(const PatchConfig& config,
                                                      int grid_h, int grid_w,
                                                      Rng& rng) {
    config.validate();
    if (grid_h < 1 || grid_w < 1) {
        throw ConfigError("patch grid extents must be positive");
    }
    int64_t c = config.channels;
    auto gaussian = [&rng](Shape shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (float& v : t.mutable_data()) {
            v = static_cast<float>(rng.normal(0.02));
        }
        return t;
    };

    PatchTransformerWeights w;
    w.embed_w = gaussian({1, c});
    w.embed_b = Tensor::zeros({c});
    w.pos = gaussian({grid_h, grid_w,
                      static_cast<int64_t>(config.patch_side) * config.patch_side, c});
    w.blocks.resize(config.blocks);
    for (TransformerBlockWeights& b : w.blocks) {
        b.ln1_gamma = Tensor::full({c}, 1.0f);
        b.ln1_beta = Tensor::zeros({c});
        b.wq = gaussian({c, c});
        b.bq = Tensor::zeros({c});
        b.wk = gaussian({c, c});
        b.bk = Tensor::zeros({c});
        b.wv = gaussian({c, c});
        b.bv = Tensor::zeros({c});
        b.wo = gaussian({c, c});
        b.bo = Tensor::zeros({c});
        b.ln2_gamma = Tensor::full({c}, 1.0f);
        b.ln2_beta = Tensor::zeros({c});
        b.mlp_w1 = gaussian({c, 4 * c});
        b.mlp_b1 = Tensor::zeros({4 * c});
        b.mlp_w2 = gaussian({4 * c, c});
        b.mlp_b2 = Tensor::zeros({c});
    }
    for (Tensor p : w.parameters()) p.set_requires_grad(true);
    return w;
}

std::vector<Tensor> PatchTransformerWeights::parameters() const {
    std::vector<Tensor> out{embed_w, embed_b, pos};
    for (const TransformerBlockWeights& b : blocks) {
        out.insert(out.end(), {b.ln1_gamma, b.ln1_beta, b.wq, b.bq, b.wk, b.bk, b.wv,
                               b.bv, b.wo, b.bo, b.ln2_gamma, b.ln2_beta, b.mlp_w1,
                               b.mlp_b1, b.mlp_w2, b.mlp_b2});
    }
    return out;
}

PatchSequence t2p(const Tensor& image, int patch_side) {
    if (image.rank() != 2) {
        throw ShapeError("t2p: need a [H, W] image, got " + shape_str(image.shape()));
    }
    int64_t h = image.extent(0);
    int64_t w = image.extent(1);
    if (patch_side < 1 || h % patch_side != 0 || w % patch_side != 0) {
        throw ContractError("t2p: extents " + shape_str(image.shape()) +
                            " are not divisible by patch side " +
                            std::to_string(patch_side));
    }
    PatchLayout layout;
    layout.patch_side = patch_side;
    layout.image_h = static_cast<int>(h);
    layout.image_w = static_cast<int>(w);
    layout.grid_h = static_cast<int>(h / patch_side);
    layout.grid_w = static_cast<int>(w / patch_side);

    int64_t p = patch_side;
    int64_t gw = layout.grid_w;
    auto src = image.data();
    std::vector<float> out(static_cast<size_t>(h * w));
    // Token (n, py·p + px) is pixel (gy·p + py, gx·p + px) with n = gy·gw + gx.
    int64_t o = 0;
    for (int64_t gy = 0; gy < layout.grid_h; ++gy) {
        for (int64_t gx = 0; gx < gw; ++gx) {
            for (int64_t py = 0; py < p; ++py) {
                const float* row = src.data() + (gy * p + py) * w + gx * p;
                for (int64_t px = 0; px < p; ++px) out[o++] = row[px];
            }
        }
    }
    Tensor tokens = make_op({layout.num_patches(), p * p, 1}, std::move(out), {image},
                            [layout](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gi = ctx.in_grad(0);
        int64_t p = layout.patch_side;
        int64_t w = layout.image_w;
        int64_t o = 0;
        for (int64_t gy = 0; gy < layout.grid_h; ++gy) {
            for (int64_t gx = 0; gx < layout.grid_w; ++gx) {
                for (int64_t py = 0; py < p; ++py) {
                    float* row = gi.data() + (gy * p + py) * w + gx * p;
                    for (int64_t px = 0; px < p; ++px) row[px] += g[o++];
                }
            }
        }
    });
    return PatchSequence{std::move(tokens), layout};
}

Tensor reconstruct(const Tensor& tokens, const PatchLayout& layout) {
    int64_t p = layout.patch_side;
    if (tokens.rank() != 3 || tokens.extent(0) != layout.num_patches() ||
        tokens.extent(1) != p * p) {
        throw ShapeError("reconstruct: tokens " + shape_str(tokens.shape()) +
                         " do not match a " + std::to_string(layout.grid_h) + "x" +
                         std::to_string(layout.grid_w) + " grid of side-" +
                         std::to_string(layout.patch_side) + " patches");
    }
    int64_t c = tokens.extent(2);
    int64_t w = layout.image_w;
    auto src = tokens.data();
    std::vector<float> out(static_cast<size_t>(layout.image_h * w * c));
    int64_t i = 0;
    for (int64_t gy = 0; gy < layout.grid_h; ++gy) {
        for (int64_t gx = 0; gx < layout.grid_w; ++gx) {
            for (int64_t py = 0; py < p; ++py) {
                float* row = out.data() + ((gy * p + py) * w + gx * p) * c;
                for (int64_t px = 0; px < p * c; ++px) row[px] = src[i++];
            }
        }
    }
    return make_op({layout.image_h, w, c}, std::move(out), {tokens},
                   [layout, c](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gt = ctx.in_grad(0);
        int64_t p = layout.patch_side;
        int64_t w = layout.image_w;
        int64_t i = 0;
        for (int64_t gy = 0; gy < layout.grid_h; ++gy) {
            for (int64_t gx = 0; gx < layout.grid_w; ++gx) {
                for (int64_t py = 0; py < p; ++py) {
                    const float* row = g.data() + ((gy * p + py) * w + gx * p) * c;
                    for (int64_t px = 0; px < p * c; ++px) gt[i++] += row[px];
                }
            }
        }
    });
}

Tensor embed(const PatchSequence& seq, const Tensor& embed_w, const Tensor& embed_b) {
    if (seq.tokens.extent(-1) != 1) {
        throw ShapeError("embed: expected channel-1 tokens, got " +
                         shape_str(seq.tokens.shape()));
    }
    return gelu(add_bias(matmul(seq.tokens, embed_w), embed_b));
}

Tensor add_position(const Tensor& tokens, const Tensor& pos, const PatchLayout& layout) {
    Shape want{layout.grid_h, layout.grid_w,
               static_cast<int64_t>(layout.tokens_per_patch()), tokens.extent(-1)};
    if (pos.shape() != want) {
        throw ShapeError("add_position: pos is " + shape_str(pos.shape()) +
                         ", layout wants " + shape_str(want));
    }
    return add(tokens, reshape(pos, tokens.shape()));
}

Tensor msa(const Tensor& tokens, const TransformerBlockWeights& block, int heads) {
    bool single = tokens.rank() == 2;
    Tensor z = single ? reshape(tokens, {1, tokens.extent(0), tokens.extent(1)}) : tokens;
    if (z.rank() != 3) {
        throw ShapeError("msa: need [t, C] or [n, t, C] tokens, got " +
                         shape_str(tokens.shape()));
    }
    int64_t n = z.extent(0);
    int64_t t = z.extent(1);
    int64_t c = z.extent(2);
    if (heads < 1 || c % heads != 0) {
        throw ConfigError("msa: channels " + std::to_string(c) +
                          " not divisible by heads " + std::to_string(heads));
    }
    int64_t d = c / heads;

    auto split_heads = [&](const Tensor& x) {
        // [n, t, C] → [n, heads, t, d]
        return permute(reshape(x, {n, t, heads, d}), {0, 2, 1, 3});
    };
    Tensor q = split_heads(add_bias(matmul(z, block.wq), block.bq));
    Tensor k = split_heads(add_bias(matmul(z, block.wk), block.bk));
    Tensor v = split_heads(add_bias(matmul(z, block.wv), block.bv));

    Tensor mixed = attention(q, k, v);
    Tensor merged = reshape(permute(mixed, {0, 2, 1, 3}), {n, t, c});
    Tensor out = add_bias(matmul(merged, block.wo), block.bo);
    return single ? reshape(out, {t, c}) : out;
}

Tensor transformer_block(const Tensor& tokens, const TransformerBlockWeights& block,
                         int heads) {
    Tensor z1 = add(msa(layer_norm(tokens, block.ln1_gamma, block.ln1_beta), block, heads),
                    tokens);
    Tensor h = gelu(add_bias(matmul(layer_norm(z1, block.ln2_gamma, block.ln2_beta),
                                    block.mlp_w1),
                             block.mlp_b1));
    Tensor m = add_bias(matmul(h, block.mlp_w2), block.mlp_b2);
    return add(m, z1);
}

Tensor encode_patches(const Tensor& image, const PatchTransformerWeights& weights,
                      const PatchConfig& config) {
    config.validate();
    PatchSequence seq = t2p(image, config.patch_side);
    Tensor z = embed(seq, weights.embed_w, weights.embed_b);
    z = add_position(z, weights.pos, seq.layout);
    for (const TransformerBlockWeights& block : weights.blocks) {
        z = transformer_block(z, block, config.heads);
    }
    return reconstruct(z, seq.layout);
}

}  // namespace ppt
