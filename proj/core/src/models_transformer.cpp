#include <cmath>
#include <memory>

#include "microcount/errors.hpp"
#include "model_builder_detail.hpp"

namespace microcount::models {

using namespace nn;

// ---- attention primitives ----

MhsaParams make_mhsa_params(int dim, int heads, int dim_head, Rng& rng) {
    MhsaParams p;
    p.heads = heads;
    p.dim_head = dim_head > 0 ? dim_head : dim / heads;
    const int inner = heads * p.dim_head;
    p.wqkv = Tensor::param_trunc_normal({dim, 3 * inner}, rng);
    p.wout = Tensor::param_trunc_normal({inner, dim}, rng);
    p.bout = Tensor::param_zeros({dim});
    return p;
}

nn::Tensor re_attention(const nn::Tensor& maps, const nn::Tensor& theta) {
    if (maps.rank() != 4) throw std::invalid_argument("re_attention: expected maps (B,H,N,N)");
    const int B = maps.dim(0), H = maps.dim(1), N = maps.dim(2);
    if (theta.rank() != 2 || theta.dim(0) != H || theta.dim(1) != H)
        throw std::invalid_argument("re_attention: theta must be (heads, heads)");
    Tensor flat = reshape(maps, {B, H, N * maps.dim(3)});
    Tensor mixed = bmm(tile_batch(theta, B), flat);
    return normalize_sum_lastdim(reshape(mixed, maps.shape()));
}

AttentionOut mhsa(const nn::Tensor& tokens, const MhsaParams& params) {
    const int B = tokens.dim(0), N = tokens.dim(1);
    const int H = params.heads, dh = params.dim_head;
    const int inner = H * dh;

    Tensor qkv = linear(tokens, params.wqkv);
    Tensor q = reshape(split_heads(slice(qkv, 2, 0, inner), H), {B * H, N, dh});
    Tensor k = reshape(split_heads(slice(qkv, 2, inner, inner), H), {B * H, N, dh});
    Tensor v = reshape(split_heads(slice(qkv, 2, 2 * inner, inner), H), {B * H, N, dh});

    Tensor scores = scale(bmm_nt(q, k), 1.f / std::sqrt(static_cast<float>(dh)));
    Tensor attn = reshape(softmax_lastdim(scores), {B, H, N, N});
    if (params.theta.defined()) attn = re_attention(attn, params.theta);

    Tensor out = bmm(reshape(attn, {B * H, N, N}), v);
    out = merge_heads(reshape(out, {B, H, N, dh}));

    AttentionOut result;
    result.tokens = linear(out, params.wout, params.bout);
    result.attention = attn;
    return result;
}

XcaParams make_xca_params(int dim, int heads, int dim_head, Rng& rng) {
    XcaParams p;
    p.heads = heads;
    p.dim_head = dim_head > 0 ? dim_head : dim / heads;
    const int inner = heads * p.dim_head;
    p.wqkv = Tensor::param_trunc_normal({dim, 3 * inner}, rng);
    p.bqkv = Tensor::param_zeros({3 * inner});
    p.wout = Tensor::param_trunc_normal({inner, dim}, rng);
    p.bout = Tensor::param_zeros({dim});
    p.temperature = Tensor::param_full({heads}, 1.f);
    return p;
}

AttentionOut xca(const nn::Tensor& tokens, const XcaParams& params) {
    const int B = tokens.dim(0), N = tokens.dim(1);
    const int H = params.heads, dh = params.dim_head;
    const int inner = H * dh;

    Tensor qkv = linear(tokens, params.wqkv, params.bqkv);
    Tensor q = split_heads(slice(qkv, 2, 0, inner), H);           // (B,H,N,dh)
    Tensor k = split_heads(slice(qkv, 2, inner, inner), H);
    Tensor v = split_heads(slice(qkv, 2, 2 * inner, inner), H);

    // Channels attend to channels: normalize along tokens, gram over them.
    Tensor qn = reshape(l2_normalize(q, 2), {B * H, N, dh});
    Tensor kn = reshape(l2_normalize(k, 2), {B * H, N, dh});
    Tensor gram = reshape(bmm_tn(qn, kn), {B, H, dh, dh});
    Tensor attn = reshape(softmax_lastdim(mul_head_scale(gram, params.temperature)),
                          {B, H, dh, dh});

    Tensor out = bmm_nt(reshape(v, {B * H, N, dh}), reshape(attn, {B * H, dh, dh}));
    out = merge_heads(reshape(out, {B, H, N, dh}));

    AttentionOut result;
    result.tokens = linear(out, params.wout, params.bout);
    result.attention = attn;
    return result;
}

CrossFuseDirection make_cross_fuse(int dim_a, int dim_b, Rng& rng) {
    CrossFuseDirection d;
    d.f_in_w = Tensor::param_trunc_normal({dim_a, dim_b}, rng);
    d.f_in_b = Tensor::param_zeros({dim_b});
    d.wq = Tensor::param_trunc_normal({dim_b, dim_b}, rng);
    d.f_out_w = Tensor::param_trunc_normal({dim_b, dim_a}, rng);
    d.f_out_b = Tensor::param_zeros({dim_a});
    return d;
}

nn::Tensor cross_attend_cls(const nn::Tensor& branch_a, const nn::Tensor& branch_b,
                            const CrossFuseDirection& dir) {
    const int Na = branch_a.dim(1), Nb = branch_b.dim(1);
    const int dim_b = branch_b.dim(2);
    Tensor cls = slice(branch_a, 1, 0, 1);
    Tensor patches_a = slice(branch_a, 1, 1, Na - 1);
    Tensor context = slice(branch_b, 1, 1, Nb - 1);

    Tensor q = linear(linear(cls, dir.f_in_w, dir.f_in_b), dir.wq);
    Tensor scores = scale(bmm_nt(q, context), 1.f / std::sqrt(static_cast<float>(dim_b)));
    Tensor attended = bmm(softmax_lastdim(scores), context);
    Tensor updated = add(cls, linear(attended, dir.f_out_w, dir.f_out_b));
    return concat({updated, patches_a}, 1);
}

std::pair<nn::Tensor, nn::Tensor> cross_attention_fuse(const nn::Tensor& small_branch,
                                                       const nn::Tensor& large_branch,
                                                       const CrossFuseDirection& small_to_large,
                                                       const CrossFuseDirection& large_to_small) {
    Tensor new_small = cross_attend_cls(small_branch, large_branch, small_to_large);
    Tensor new_large = cross_attend_cls(large_branch, small_branch, large_to_small);
    return {new_small, new_large};
}

ParallelPairParams make_parallel_pair(int dim, int heads, int dim_head, int mlp_dim, Rng& rng) {
    using detail::ParamBuilder;
    ParallelPairParams p;
    auto make_attn = [&](AttnSubBlock& sub) {
        sub.ln_g = Tensor::param_full({dim}, 1.f);
        sub.ln_s = Tensor::param_zeros({dim});
        sub.attn = make_mhsa_params(dim, heads, dim_head, rng);
    };
    make_attn(p.attn_a);
    make_attn(p.attn_b);
    auto make_ff = [&](FeedForwardParams& ff) {
        ff.ln_g = Tensor::param_full({dim}, 1.f);
        ff.ln_s = Tensor::param_zeros({dim});
        ff.w1 = Tensor::param_trunc_normal({dim, mlp_dim}, rng);
        ff.b1 = Tensor::param_zeros({mlp_dim});
        ff.w2 = Tensor::param_trunc_normal({mlp_dim, dim}, rng);
        ff.b2 = Tensor::param_zeros({dim});
    };
    make_ff(p.ffn_a);
    make_ff(p.ffn_b);
    return p;
}

nn::Tensor parallel_pair_block(const nn::Tensor& tokens, const ParallelPairParams& params) {
    auto attn_branch = [&](const Tensor& x, const AttnSubBlock& sub) {
        return mhsa(layernorm(x, sub.ln_g, sub.ln_s), sub.attn).tokens;
    };
    Tensor y = add(add(tokens, attn_branch(tokens, params.attn_a)),
                   attn_branch(tokens, params.attn_b));
    auto ffn_branch = [&](const Tensor& x, const FeedForwardParams& ff) {
        Tensor h = layernorm(x, ff.ln_g, ff.ln_s);
        return linear(gelu(linear(h, ff.w1, ff.b1)), ff.w2, ff.b2);
    };
    return add(add(y, ffn_branch(y, params.ffn_a)), ffn_branch(y, params.ffn_b));
}

// ---- shared builder pieces ----

namespace detail {

FeedForwardParams make_ffn(ParamBuilder& pb, const std::string& prefix, int dim, int mlp_dim) {
    FeedForwardParams ff;
    ff.ln_g = pb.ones(prefix + ".ln.g", {dim});
    ff.ln_s = pb.zeros(prefix + ".ln.s", {dim});
    ff.w1 = pb.trunc_normal(prefix + ".w1", {dim, mlp_dim});
    ff.b1 = pb.zeros(prefix + ".b1", {mlp_dim});
    ff.w2 = pb.trunc_normal(prefix + ".w2", {mlp_dim, dim});
    ff.b2 = pb.zeros(prefix + ".b2", {dim});
    return ff;
}

nn::Tensor ffn_forward(const nn::Tensor& x, const FeedForwardParams& ffn) {
    Tensor h = layernorm(x, ffn.ln_g, ffn.ln_s);
    return linear(gelu(linear(h, ffn.w1, ffn.b1)), ffn.w2, ffn.b2);
}

BlockParams make_block(ParamBuilder& pb, const std::string& prefix, int dim, int heads,
                       int dim_head, int mlp_dim, bool reattention) {
    BlockParams b;
    b.ln1_g = pb.ones(prefix + ".attn.ln.g", {dim});
    b.ln1_s = pb.zeros(prefix + ".attn.ln.s", {dim});
    b.attn = make_mhsa_params(dim, heads, dim_head, *pb.rng);
    pb.out->push_back({prefix + ".attn.wqkv", b.attn.wqkv});
    pb.out->push_back({prefix + ".attn.wout", b.attn.wout});
    pb.out->push_back({prefix + ".attn.bout", b.attn.bout});
    if (reattention) {
        // Identity mixing at initialization: re-attention starts as plain
        // attention and learns head interactions from there.
        std::vector<float> eye(static_cast<size_t>(heads) * heads, 0.f);
        for (int h = 0; h < heads; ++h) eye[static_cast<size_t>(h) * heads + h] = 1.f;
        b.attn.theta = Tensor::param({heads, heads}, std::move(eye));
        pb.out->push_back({prefix + ".attn.theta", b.attn.theta});
    }
    b.ffn = make_ffn(pb, prefix + ".ffn", dim, mlp_dim);
    return b;
}

nn::Tensor block_forward(const nn::Tensor& x, const BlockParams& block) {
    Tensor h = add(x, mhsa(layernorm(x, block.ln1_g, block.ln1_s), block.attn).tokens);
    return add(h, ffn_forward(h, block.ffn));
}

HeadParams make_head(ParamBuilder& pb, HeadType type, int in_dim, int hidden) {
    HeadParams head;
    head.type = type;
    if (hidden > 0) {
        head.w1 = pb.trunc_normal("head.w1", {in_dim, hidden});
        head.b1 = pb.zeros("head.b1", {hidden});
        head.w2 = pb.trunc_normal("head.w2", {hidden, 1});
        head.b2 = pb.zeros("head.b2", {1});
    } else {
        head.w1 = pb.trunc_normal("head.w1", {in_dim, 1});
        head.b1 = pb.zeros("head.b1", {1});
    }
    return head;
}

EmbedParams make_embed(ParamBuilder& pb, const std::string& prefix, int patch, int dim,
                       int n_patches, bool with_cls) {
    EmbedParams e;
    e.patch = patch;
    e.w = pb.trunc_normal(prefix + ".w", {patch * patch * 3, dim});
    e.b = pb.zeros(prefix + ".b", {dim});
    e.pos = pb.trunc_normal(prefix + ".pos", {n_patches + (with_cls ? 1 : 0), dim});
    if (with_cls) e.cls = pb.trunc_normal(prefix + ".cls", {dim});
    return e;
}

nn::Tensor embed_forward(const nn::Tensor& images, const EmbedParams& embed) {
    const int B = images.dim(0);
    Tensor tokens = linear(extract_patches(images, embed.patch), embed.w, embed.b);
    if (embed.cls.defined()) {
        Tensor cls = tile_batch(reshape(embed.cls, {1, embed.cls.dim(0)}), B);
        tokens = concat({cls, tokens}, 1);
    }
    return add_broadcast(tokens, embed.pos);
}

}  // namespace detail

// ---- family builders ----

namespace {

using detail::BlockParams;
using detail::EmbedParams;
using detail::ParamBuilder;

// vit / deepvit / transcrowd share the encoder; they differ in patch size,
// re-attention, and head wiring.
CountingModel build_vit_like(const BackboneConfig& config, uint64_t seed, bool reattention) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    const int n = config.tokens_per_side() * config.tokens_per_side();
    auto embed = std::make_shared<EmbedParams>(
        detail::make_embed(pb, "patch", config.patch_size, config.dim, n, true));
    auto blocks = std::make_shared<std::vector<BlockParams>>();
    for (int i = 0; i < config.depth; ++i)
        blocks->push_back(detail::make_block(pb, "blocks." + std::to_string(i), config.dim,
                                             config.heads, config.dim_head, config.mlp_dim,
                                             reattention));
    auto final_g = pb.ones("norm.g", {config.dim});
    auto final_s = pb.zeros("norm.s", {config.dim});
    auto head = std::make_shared<HeadParams>(
        detail::make_head(pb, config.head_type, config.dim, config.head_hidden));

    model.forward = [embed, blocks, final_g, final_s, head](const Tensor& images) {
        Tensor x = detail::embed_forward(images, *embed);
        for (const auto& blk : *blocks) x = detail::block_forward(x, blk);
        x = layernorm(x, final_g, final_s);
        return regression_head(x, *head);
    };
    return model;
}

CountingModel build_parallelvit(const BackboneConfig& config, uint64_t seed) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    const int n = config.tokens_per_side() * config.tokens_per_side();
    auto embed = std::make_shared<EmbedParams>(
        detail::make_embed(pb, "patch", config.patch_size, config.dim, n, true));
    const int layers = config.depth / 2;
    auto pairs = std::make_shared<std::vector<ParallelPairParams>>();
    for (int i = 0; i < layers; ++i) {
        ParallelPairParams pp = make_parallel_pair(config.dim, config.heads, config.dim_head,
                                                   config.mlp_dim, rng);
        const std::string prefix = "layers." + std::to_string(i);
        auto reg_attn = [&](const char* tag, AttnSubBlock& sub) {
            pb.out->push_back({prefix + tag + ".ln.g", sub.ln_g});
            pb.out->push_back({prefix + tag + ".ln.s", sub.ln_s});
            pb.out->push_back({prefix + tag + ".wqkv", sub.attn.wqkv});
            pb.out->push_back({prefix + tag + ".wout", sub.attn.wout});
            pb.out->push_back({prefix + tag + ".bout", sub.attn.bout});
        };
        auto reg_ffn = [&](const char* tag, FeedForwardParams& ff) {
            pb.out->push_back({prefix + tag + ".ln.g", ff.ln_g});
            pb.out->push_back({prefix + tag + ".ln.s", ff.ln_s});
            pb.out->push_back({prefix + tag + ".w1", ff.w1});
            pb.out->push_back({prefix + tag + ".b1", ff.b1});
            pb.out->push_back({prefix + tag + ".w2", ff.w2});
            pb.out->push_back({prefix + tag + ".b2", ff.b2});
        };
        reg_attn(".attn_a", pp.attn_a);
        reg_attn(".attn_b", pp.attn_b);
        reg_ffn(".ffn_a", pp.ffn_a);
        reg_ffn(".ffn_b", pp.ffn_b);
        pairs->push_back(std::move(pp));
    }
    auto final_g = pb.ones("norm.g", {config.dim});
    auto final_s = pb.zeros("norm.s", {config.dim});
    auto head = std::make_shared<HeadParams>(
        detail::make_head(pb, config.head_type, config.dim, config.head_hidden));

    model.forward = [embed, pairs, final_g, final_s, head](const Tensor& images) {
        Tensor x = detail::embed_forward(images, *embed);
        for (const auto& pp : *pairs) x = parallel_pair_block(x, pp);
        x = layernorm(x, final_g, final_s);
        return regression_head(x, *head);
    };
    return model;
}

struct XcaLayer {
    Tensor ln1_g, ln1_s;
    XcaParams attn;
    Tensor ln2_g, ln2_s;
    Tensor lpi_w1, lpi_b1, lpi_w2, lpi_b2;  // depthwise 3x3 pair
    FeedForwardParams ffn;
};

struct ClsAttnLayer {
    Tensor ln_g, ln_s;
    Tensor wq, bq, wkv, bkv, wout, bout;
    FeedForwardParams ffn;
    int heads, dim_head;
};

CountingModel build_xcit(const BackboneConfig& config, uint64_t seed) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    const int side = config.tokens_per_side();
    const int n = side * side;
    const int dim = config.dim;
    // Patch tokens carry no class token: it joins for the class-attention
    // stage only.
    auto embed = std::make_shared<EmbedParams>(
        detail::make_embed(pb, "patch", config.patch_size, dim, n, false));
    auto cls_token = pb.trunc_normal("cls", {dim});

    auto layers = std::make_shared<std::vector<XcaLayer>>();
    for (int i = 0; i < config.depth; ++i) {
        const std::string prefix = "layers." + std::to_string(i);
        XcaLayer l;
        l.ln1_g = pb.ones(prefix + ".xca.ln.g", {dim});
        l.ln1_s = pb.zeros(prefix + ".xca.ln.s", {dim});
        l.attn = make_xca_params(dim, config.heads, config.dim_head, rng);
        pb.out->push_back({prefix + ".xca.wqkv", l.attn.wqkv});
        pb.out->push_back({prefix + ".xca.bqkv", l.attn.bqkv});
        pb.out->push_back({prefix + ".xca.wout", l.attn.wout});
        pb.out->push_back({prefix + ".xca.bout", l.attn.bout});
        pb.out->push_back({prefix + ".xca.temperature", l.attn.temperature});
        l.ln2_g = pb.ones(prefix + ".lpi.ln.g", {dim});
        l.ln2_s = pb.zeros(prefix + ".lpi.ln.s", {dim});
        l.lpi_w1 = pb.conv_kernel(prefix + ".lpi.w1", {dim, 3, 3}, 9);
        l.lpi_b1 = pb.zeros(prefix + ".lpi.b1", {dim});
        l.lpi_w2 = pb.conv_kernel(prefix + ".lpi.w2", {dim, 3, 3}, 9);
        l.lpi_b2 = pb.zeros(prefix + ".lpi.b2", {dim});
        l.ffn = detail::make_ffn(pb, prefix + ".ffn", dim, config.mlp_dim);
        layers->push_back(std::move(l));
    }

    auto cls_layers = std::make_shared<std::vector<ClsAttnLayer>>();
    const int dh = config.resolved_dim_head();
    const int inner = config.heads * dh;
    for (int i = 0; i < config.cls_attn_layers; ++i) {
        const std::string prefix = "cls_layers." + std::to_string(i);
        ClsAttnLayer l;
        l.heads = config.heads;
        l.dim_head = dh;
        l.ln_g = pb.ones(prefix + ".ln.g", {dim});
        l.ln_s = pb.zeros(prefix + ".ln.s", {dim});
        l.wq = pb.trunc_normal(prefix + ".wq", {dim, inner});
        l.bq = pb.zeros(prefix + ".bq", {inner});
        l.wkv = pb.trunc_normal(prefix + ".wkv", {dim, 2 * inner});
        l.bkv = pb.zeros(prefix + ".bkv", {2 * inner});
        l.wout = pb.trunc_normal(prefix + ".wout", {inner, dim});
        l.bout = pb.zeros(prefix + ".bout", {dim});
        l.ffn = detail::make_ffn(pb, prefix + ".ffn", dim, config.mlp_dim);
        cls_layers->push_back(std::move(l));
    }
    auto final_g = pb.ones("norm.g", {dim});
    auto final_s = pb.zeros("norm.s", {dim});
    auto head = std::make_shared<HeadParams>(
        detail::make_head(pb, config.head_type, dim, config.head_hidden));

    model.forward = [embed, cls_token, layers, cls_layers, final_g, final_s, head, side,
                     dim](const Tensor& images) {
        const int B = images.dim(0);
        const int N = side * side;
        Tensor x = detail::embed_forward(images, *embed);
        for (const auto& l : *layers) {
            x = add(x, xca(layernorm(x, l.ln1_g, l.ln1_s), l.attn).tokens);
            // Local patch interaction over the token grid.
            Tensor grid = layernorm(x, l.ln2_g, l.ln2_s);
            grid = reshape(split_heads(grid, dim), {B, dim, side, side});
            grid = depthwise_conv2d(grid, l.lpi_w1, l.lpi_b1, 1);
            grid = gelu(grid);
            grid = depthwise_conv2d(grid, l.lpi_w2, l.lpi_b2, 1);
            Tensor back = merge_heads(reshape(grid, {B, dim, N, 1}));
            x = add(x, back);
            x = add(x, detail::ffn_forward(x, l.ffn));
        }
        Tensor cls = tile_batch(reshape(cls_token, {1, dim}), B);
        Tensor z = concat({cls, x}, 1);
        for (const auto& l : *cls_layers) {
            Tensor a_in = layernorm(z, l.ln_g, l.ln_s);
            Tensor q = linear(slice(a_in, 1, 0, 1), l.wq, l.bq);
            Tensor kv = linear(a_in, l.wkv, l.bkv);
            const int hin = l.heads * l.dim_head;
            Tensor k = reshape(split_heads(slice(kv, 2, 0, hin), l.heads), {B * l.heads, N + 1, l.dim_head});
            Tensor v = reshape(split_heads(slice(kv, 2, hin, hin), l.heads), {B * l.heads, N + 1, l.dim_head});
            Tensor qh = reshape(split_heads(q, l.heads), {B * l.heads, 1, l.dim_head});
            Tensor scores = scale(bmm_nt(qh, k), 1.f / std::sqrt(static_cast<float>(l.dim_head)));
            Tensor out = bmm(softmax_lastdim(scores), v);
            out = merge_heads(reshape(out, {B, l.heads, 1, l.dim_head}));
            Tensor zc = slice(z, 1, 0, 1);
            zc = add(zc, linear(out, l.wout, l.bout));
            zc = add(zc, detail::ffn_forward(zc, l.ffn));
            z = concat({zc, slice(z, 1, 1, N)}, 1);
        }
        z = layernorm(z, final_g, final_s);
        return regression_head(z, *head);
    };
    return model;
}

struct CrossVitModel {
    EmbedParams embed_sm, embed_lg;
    std::vector<BlockParams> blocks_sm, blocks_lg;
    CrossFuseDirection s2l, l2s;
    Tensor norm_sm_g, norm_sm_s, norm_lg_g, norm_lg_s;
    Tensor head_sm_w, head_sm_b, head_lg_w, head_lg_b;
};

CountingModel build_crossvit(const BackboneConfig& config, uint64_t seed) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    auto m = std::make_shared<CrossVitModel>();
    const int n_sm = (config.input_size / config.patch_size) * (config.input_size / config.patch_size);
    const int n_lg = (config.input_size / config.patch_size2) * (config.input_size / config.patch_size2);
    m->embed_sm = detail::make_embed(pb, "sm.patch", config.patch_size, config.dim, n_sm, true);
    m->embed_lg = detail::make_embed(pb, "lg.patch", config.patch_size2, config.dim2, n_lg, true);
    for (int i = 0; i < config.depth; ++i) {
        m->blocks_sm.push_back(detail::make_block(pb, "sm.blocks." + std::to_string(i), config.dim,
                                                  config.heads, 0, config.mlp_dim, false));
        m->blocks_lg.push_back(detail::make_block(pb, "lg.blocks." + std::to_string(i), config.dim2,
                                                  config.heads, 0, config.mlp_dim2, false));
    }
    m->s2l = make_cross_fuse(config.dim, config.dim2, rng);
    pb.out->push_back({"fuse.s2l.f_in_w", m->s2l.f_in_w});
    pb.out->push_back({"fuse.s2l.f_in_b", m->s2l.f_in_b});
    pb.out->push_back({"fuse.s2l.wq", m->s2l.wq});
    pb.out->push_back({"fuse.s2l.f_out_w", m->s2l.f_out_w});
    pb.out->push_back({"fuse.s2l.f_out_b", m->s2l.f_out_b});
    m->l2s = make_cross_fuse(config.dim2, config.dim, rng);
    pb.out->push_back({"fuse.l2s.f_in_w", m->l2s.f_in_w});
    pb.out->push_back({"fuse.l2s.f_in_b", m->l2s.f_in_b});
    pb.out->push_back({"fuse.l2s.wq", m->l2s.wq});
    pb.out->push_back({"fuse.l2s.f_out_w", m->l2s.f_out_w});
    pb.out->push_back({"fuse.l2s.f_out_b", m->l2s.f_out_b});
    m->norm_sm_g = pb.ones("sm.norm.g", {config.dim});
    m->norm_sm_s = pb.zeros("sm.norm.s", {config.dim});
    m->norm_lg_g = pb.ones("lg.norm.g", {config.dim2});
    m->norm_lg_s = pb.zeros("lg.norm.s", {config.dim2});
    m->head_sm_w = pb.trunc_normal("sm.head.w", {config.dim, 1});
    m->head_sm_b = pb.zeros("sm.head.b", {1});
    m->head_lg_w = pb.trunc_normal("lg.head.w", {config.dim2, 1});
    m->head_lg_b = pb.zeros("lg.head.b", {1});

    model.forward = [m](const Tensor& images) {
        const int B = images.dim(0);
        Tensor sm = detail::embed_forward(images, m->embed_sm);
        Tensor lg = detail::embed_forward(images, m->embed_lg);
        for (size_t i = 0; i < m->blocks_sm.size(); ++i) {
            sm = detail::block_forward(sm, m->blocks_sm[i]);
            lg = detail::block_forward(lg, m->blocks_lg[i]);
        }
        auto fused = cross_attention_fuse(sm, lg, m->s2l, m->l2s);
        Tensor cls_sm = reshape(slice(layernorm(fused.first, m->norm_sm_g, m->norm_sm_s), 1, 0, 1),
                                {B, m->norm_sm_g.dim(0)});
        Tensor cls_lg = reshape(slice(layernorm(fused.second, m->norm_lg_g, m->norm_lg_s), 1, 0, 1),
                                {B, m->norm_lg_g.dim(0)});
        // Two branch regressors, averaged.
        Tensor out_sm = linear(cls_sm, m->head_sm_w, m->head_sm_b);
        Tensor out_lg = linear(cls_lg, m->head_lg_w, m->head_lg_b);
        return reshape(scale(add(out_sm, out_lg), 0.5f), {B});
    };
    return model;
}

}  // namespace

CountingModel build_transformer_backbone(const BackboneConfig& config, uint64_t seed) {
    switch (config.family) {
        case Family::vit:
        case Family::transcrowd_g:
        case Family::transcrowd_t:
            return build_vit_like(config, seed, false);
        case Family::deepvit:
            return build_vit_like(config, seed, true);
        case Family::parallelvit:
            return build_parallelvit(config, seed);
        case Family::xcit:
            return build_xcit(config, seed);
        case Family::crossvit:
            return build_crossvit(config, seed);
        default:
            throw ConfigError("not a transformer family");
    }
}

}  // namespace microcount::models
