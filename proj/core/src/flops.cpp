#include "microcount/flops.hpp"

#include "microcount/errors.hpp"

namespace microcount::models {

namespace {

double linear_flops(double rows, double in, double out, bool bias = true) {
    return rows * in * out + (bias ? rows * out : 0.0);
}

// Pre-norm MHSA block at sequence length n.
double block_flops(double n, double dim, double heads, double dim_head, double mlp,
                   bool reattention) {
    const double inner = heads * dim_head;
    double f = 0.0;
    f += n * dim;                           // layernorm
    f += linear_flops(n, dim, 3 * inner, false);  // qkv
    f += n * n * inner;                     // scores
    f += heads * n * n * 2;                 // scale + softmax
    if (reattention) {
        f += heads * heads * n * n;         // head mixing
        f += heads * n * n;                 // row renormalization
    }
    f += n * n * inner;                     // apply to values
    f += linear_flops(n, inner, dim);       // output projection
    f += n * dim;                           // residual
    f += n * dim;                           // layernorm
    f += linear_flops(n, dim, mlp) + n * mlp;  // fc1 + gelu
    f += linear_flops(n, mlp, dim);
    f += n * dim;                           // residual
    return f;
}

double embed_flops(double n_patches, double patch, double dim, bool with_cls) {
    double f = linear_flops(n_patches, patch * patch * 3, dim);
    f += (n_patches + (with_cls ? 1 : 0)) * dim;  // positional add
    return f;
}

double head_flops(HeadType type, double tokens, double dim, double hidden) {
    double f = 0.0;
    if (type == HeadType::gap) f += tokens * dim;  // pooling
    if (hidden > 0)
        f += linear_flops(1, dim, hidden) + hidden + linear_flops(1, hidden, 1);
    else
        f += linear_flops(1, dim, 1);
    return f;
}

double conv_flops(double out_h, double out_w, double in_ch, double out_ch, double kernel,
                  bool bias) {
    return out_h * out_w * out_ch * (in_ch * kernel * kernel + (bias ? 1.0 : 0.0));
}

double cnn_flops(const BackboneConfig& c) {
    double f = 0.0;
    double side = c.input_size;
    double in = 3;
    for (int ch : c.channels) {
        side /= 2;
        f += conv_flops(side, side, in, ch, 3, true);
        f += side * side * ch;  // relu
        in = ch;
    }
    f += linear_flops(1, in * side * side, 1);
    return f;
}

double resnet_flops(const BackboneConfig& c) {
    double f = 0.0;
    double side = c.input_size / 2.0;
    f += conv_flops(side, side, 3, 64, 7, false) + side * side * 64 * 2;  // stem + gn + relu
    side /= 2;
    f += side * side * 64 * 9;  // maxpool compares
    const int mids[4] = {64, 128, 256, 512};
    double in = 64;
    for (int s = 0; s < 4; ++s) {
        for (int i = 0; i < c.stage_blocks[s]; ++i) {
            const bool downsample = s > 0 && i == 0;
            const double out_side = downsample ? side / 2 : side;
            const double mid = mids[s];
            const double out = mid * 4;
            f += conv_flops(side, side, in, mid, 1, false) + side * side * mid * 2;
            f += conv_flops(out_side, out_side, mid, mid, 3, false) + out_side * out_side * mid * 2;
            f += conv_flops(out_side, out_side, mid, out, 1, false) + out_side * out_side * out;
            if (downsample || in != out)
                f += conv_flops(out_side, out_side, in, out, 1, false) + out_side * out_side * out;
            f += out_side * out_side * out * 2;  // residual + relu
            side = out_side;
            in = out;
        }
    }
    f += side * side * in;  // global average pool
    f += linear_flops(1, in, 1);
    return f;
}

double vit_like_flops(const BackboneConfig& c, bool reattention) {
    const double grid = c.tokens_per_side();
    const double n = grid * grid + 1;  // patches + class token
    double f = embed_flops(grid * grid, c.patch_size, c.dim, true);
    for (int i = 0; i < c.depth; ++i)
        f += block_flops(n, c.dim, c.heads, c.resolved_dim_head(), c.mlp_dim, reattention);
    f += n * c.dim;  // final layernorm
    f += head_flops(c.head_type, n, c.dim, c.head_hidden);
    return f;
}

double parallelvit_flops(const BackboneConfig& c) {
    const double grid = c.tokens_per_side();
    const double n = grid * grid + 1;
    double f = embed_flops(grid * grid, c.patch_size, c.dim, true);
    // depth counts sequential-equivalent sub-block pairs; each parallel
    // layer runs two attention and two feed-forward branches.
    f += c.depth * block_flops(n, c.dim, c.heads, c.resolved_dim_head(), c.mlp_dim, false);
    f += (c.depth / 2) * 2 * n * c.dim;  // extra branch merges
    f += n * c.dim;
    f += head_flops(c.head_type, n, c.dim, c.head_hidden);
    return f;
}

double xcit_flops(const BackboneConfig& c) {
    const double grid = c.tokens_per_side();
    const double n = grid * grid;
    const double dh = c.resolved_dim_head();
    const double inner = c.heads * dh;
    double f = embed_flops(n, c.patch_size, c.dim, false);
    for (int i = 0; i < c.depth; ++i) {
        f += n * c.dim;                               // layernorm
        f += linear_flops(n, c.dim, 3 * inner);       // qkv (with bias)
        f += 2 * n * inner;                           // q/k l2 normalization
        f += inner * dh * n;                          // channel gram
        f += c.heads * dh * dh * 2;                   // temperature + softmax
        f += inner * dh * n;                          // apply to values
        f += linear_flops(n, inner, c.dim);           // output projection
        f += n * c.dim;                               // residual
        f += n * c.dim;                               // layernorm (lpi)
        f += 2 * (n * c.dim * 9 + n * c.dim) + n * c.dim;  // two dw convs + gelu
        f += n * c.dim;                               // residual
        f += n * c.dim;                               // layernorm (ffn)
        f += linear_flops(n, c.dim, c.mlp_dim) + n * c.mlp_dim;
        f += linear_flops(n, c.mlp_dim, c.dim);
        f += n * c.dim;                               // residual
    }
    const double nc = n + 1;
    for (int i = 0; i < c.cls_attn_layers; ++i) {
        f += nc * c.dim;                              // layernorm
        f += linear_flops(1, c.dim, inner);           // class query
        f += linear_flops(nc, c.dim, 2 * inner);      // keys/values
        f += 2 * nc * inner;                          // scores + apply
        f += linear_flops(1, inner, c.dim);
        f += c.dim;                                   // class layernorm + ffn
        f += linear_flops(1, c.dim, c.mlp_dim) + c.mlp_dim;
        f += linear_flops(1, c.mlp_dim, c.dim);
    }
    f += nc * c.dim;
    f += head_flops(c.head_type, nc, c.dim, c.head_hidden);
    return f;
}

double crossvit_flops(const BackboneConfig& c) {
    const double grid_sm = c.input_size / c.patch_size;
    const double grid_lg = c.input_size / c.patch_size2;
    const double n_sm = grid_sm * grid_sm + 1;
    const double n_lg = grid_lg * grid_lg + 1;
    double f = embed_flops(grid_sm * grid_sm, c.patch_size, c.dim, true);
    f += embed_flops(grid_lg * grid_lg, c.patch_size2, c.dim2, true);
    for (int i = 0; i < c.depth; ++i) {
        f += block_flops(n_sm, c.dim, c.heads, c.dim / c.heads, c.mlp_dim, false);
        f += block_flops(n_lg, c.dim2, c.heads, c.dim2 / c.heads, c.mlp_dim2, false);
    }
    // class-token fusion, both directions
    f += linear_flops(1, c.dim, c.dim2) + linear_flops(1, c.dim2, c.dim2, false);
    f += 2 * (n_lg - 1) * c.dim2 + linear_flops(1, c.dim2, c.dim);
    f += linear_flops(1, c.dim2, c.dim) + linear_flops(1, c.dim, c.dim, false);
    f += 2 * (n_sm - 1) * c.dim + linear_flops(1, c.dim, c.dim2);
    f += n_sm * c.dim + n_lg * c.dim2;  // final layernorms
    f += linear_flops(1, c.dim, 1) + linear_flops(1, c.dim2, 1) + 2;
    return f;
}

}  // namespace

double estimate_flops(const BackboneConfig& config) {
    validate(config);
    switch (config.family) {
        case Family::cnn: return cnn_flops(config);
        case Family::resnet: return resnet_flops(config);
        case Family::vit:
        case Family::transcrowd_g:
        case Family::transcrowd_t:
            return vit_like_flops(config, false);
        case Family::deepvit: return vit_like_flops(config, true);
        case Family::parallelvit: return parallelvit_flops(config);
        case Family::xcit: return xcit_flops(config);
        case Family::crossvit: return crossvit_flops(config);
    }
    throw ConfigError("unknown family");
}

}  // namespace microcount::models
