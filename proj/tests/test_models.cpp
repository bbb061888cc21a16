#include <cmath>
#include <set>

#include "doctest.h"
#include "microcount/errors.hpp"
#include "microcount/flops.hpp"
#include "microcount/models.hpp"
#include "test_util.hpp"

using namespace microcount;
using namespace microcount::models;
using namespace microcount::nn;
using testutil::random_tensor;

namespace {

BackboneConfig toy_config(Family family) {
    BackboneConfig c;
    c.family = family;
    c.name = "toy";
    c.input_size = 64;
    c.patch_size = 16;
    c.depth = 2;
    c.heads = 4;
    c.dim = 32;
    c.mlp_dim = 64;
    c.head_type = HeadType::token;
    switch (family) {
        case Family::cnn:
            c.depth = 2;
            c.channels = {8, 16};
            c.head_type = HeadType::fc;
            break;
        case Family::resnet:
            c.stage_blocks = {1, 1, 1, 1};
            c.head_type = HeadType::fc;
            break;
        case Family::crossvit:
            c.dim2 = 48;
            c.mlp_dim2 = 96;
            c.patch_size2 = 32;
            c.heads = 2;
            c.dim = 32;
            c.mlp_dim = 64;
            break;
        case Family::xcit:
            c.cls_attn_layers = 1;
            break;
        case Family::transcrowd_g:
            c.head_type = HeadType::gap;
            break;
        default:
            break;
    }
    return c;
}

const Family kAllFamilies[] = {
    Family::cnn,      Family::resnet,      Family::vit,
    Family::deepvit,  Family::xcit,        Family::crossvit,
    Family::parallelvit, Family::transcrowd_g, Family::transcrowd_t,
};

}  // namespace

TEST_CASE("every family builds at toy scale and outputs finite counts") {
    for (Family family : kAllFamilies) {
        INFO("family ", family_name(family));
        CountingModel model = build_backbone(toy_config(family), 3);
        Rng rng(5);
        Tensor batch = random_tensor({2, 3, 64, 64}, rng);
        Tensor out = model.forward(batch);
        CHECK(out.shape() == Shape{2});
        for (float v : out.data()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("build is deterministic for a fixed seed") {
    CountingModel a = build_backbone(toy_config(Family::vit), 9);
    CountingModel b = build_backbone(toy_config(Family::vit), 9);
    REQUIRE(a.params.size() == b.params.size());
    for (size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].tensor.data() == b.params[i].tensor.data());
}

TEST_CASE("patch embedding token counts follow the patch size") {
    BackboneConfig c = preset("vit-vanilla");
    CHECK(c.tokens_per_side() * c.tokens_per_side() == 144);  // 384/32
    BackboneConfig t = preset("transcrowd-t");
    CHECK(t.tokens_per_side() * t.tokens_per_side() == 576);  // 384/16

    // zero image through extract_patches + zero projection leaves exactly
    // the positional embedding; checked through the tensor op directly
    Tensor zero_img = Tensor::zeros({1, 3, 64, 64});
    Tensor patches = extract_patches(zero_img, 16);
    CHECK(patches.shape() == Shape{1, 16, 768});
    Rng rng(3);
    Tensor w = Tensor::zeros({768, 8});
    Tensor tokens = linear(patches, w, Tensor::zeros({8}));
    Tensor pos = random_tensor({16, 8}, rng);
    Tensor with_pos = add_broadcast(tokens, pos);
    for (size_t i = 0; i < pos.numel(); ++i)
        CHECK(with_pos.data()[i] == doctest::Approx(pos.data()[i]));
}

TEST_CASE("mhsa properties") {
    Rng rng(11);
    MhsaParams p = make_mhsa_params(24, 3, 8, rng);

    // attention rows sum to one
    Tensor tokens = random_tensor({2, 7, 24}, rng);
    AttentionOut out = mhsa(tokens, p);
    CHECK(out.attention.shape() == Shape{2, 3, 7, 7});
    const auto& att = out.attention.data();
    for (size_t r = 0; r < att.size() / 7; ++r) {
        double sum = 0;
        for (int j = 0; j < 7; ++j) sum += att[r * 7 + j];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }

    // single token: weight exactly 1, output equals the projected value
    Tensor one_token = random_tensor({1, 1, 24}, rng);
    AttentionOut single = mhsa(one_token, p);
    CHECK(single.attention.data()[0] == doctest::Approx(1.0));
    Tensor qkv = linear(one_token, p.wqkv);
    Tensor v = slice(qkv, 2, 48, 24);
    Tensor expected = linear(v, p.wout, p.bout);
    for (size_t i = 0; i < expected.numel(); ++i)
        CHECK(single.tokens.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-5));
}

TEST_CASE("mhsa is permutation-equivariant without positional embeddings") {
    Rng rng(13);
    MhsaParams p = make_mhsa_params(16, 2, 8, rng);
    Tensor tokens = random_tensor({1, 5, 16}, rng);
    AttentionOut base = mhsa(tokens, p);

    const int perm[5] = {3, 0, 4, 1, 2};
    std::vector<float> permuted(tokens.numel());
    for (int n = 0; n < 5; ++n)
        for (int d = 0; d < 16; ++d) permuted[n * 16 + d] = tokens.data()[perm[n] * 16 + d];
    AttentionOut shuffled = mhsa(Tensor::from_data({1, 5, 16}, std::move(permuted)), p);

    for (int n = 0; n < 5; ++n)
        for (int d = 0; d < 16; ++d)
            CHECK(shuffled.tokens.data()[n * 16 + d] ==
                  doctest::Approx(base.tokens.data()[perm[n] * 16 + d]).epsilon(1e-4));
}

TEST_CASE("re_attention identity and uniform mixing") {
    Rng rng(17);
    const int H = 4, N = 6;
    // build a stochastic map tensor via softmax
    Tensor maps = softmax_lastdim(random_tensor({2, H, N, N}, rng, -2, 2));

    std::vector<float> eye(H * H, 0.f);
    for (int h = 0; h < H; ++h) eye[h * H + h] = 1.f;
    Tensor identity_mixed = re_attention(maps, Tensor::from_data({H, H}, std::move(eye)));
    for (size_t i = 0; i < maps.numel(); ++i)
        CHECK(identity_mixed.data()[i] == doctest::Approx(maps.data()[i]).epsilon(1e-6));

    Tensor uniform_mixed =
        re_attention(maps, Tensor::full({H, H}, 1.f / static_cast<float>(H)));
    // every head becomes the head-average
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < N * N; ++i) {
            double avg = 0;
            for (int h = 0; h < H; ++h) avg += maps.data()[((b * H + h) * N * N) + i];
            avg /= H;
            for (int h = 0; h < H; ++h)
                CHECK(uniform_mixed.data()[((b * H + h) * N * N) + i] ==
                      doctest::Approx(avg).epsilon(1e-5));
        }

    // rows stay stochastic after an arbitrary positive mixing
    Tensor mixed = re_attention(maps, random_tensor({H, H}, rng, 0.05, 1.0));
    for (size_t r = 0; r < mixed.numel() / N; ++r) {
        double sum = 0;
        for (int j = 0; j < N; ++j) sum += mixed.data()[r * N + j];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("xca attention lives in channel space") {
    Rng rng(19);
    XcaParams p = make_xca_params(16, 2, 8, rng);

    AttentionOut small = xca(random_tensor({1, 5, 16}, rng), p);
    AttentionOut large = xca(random_tensor({1, 50, 16}, rng), p);
    // (dh, dh) attention regardless of token count
    CHECK(small.attention.shape() == Shape{1, 2, 8, 8});
    CHECK(large.attention.shape() == Shape{1, 2, 8, 8});

    for (const AttentionOut* out : {&small, &large}) {
        const auto& att = out->attention.data();
        for (size_t r = 0; r < att.size() / 8; ++r) {
            double sum = 0;
            for (int j = 0; j < 8; ++j) sum += att[r * 8 + j];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("xca with orthonormal channels gives softmax of identity") {
    // q = k = tokens = I: channel columns are orthonormal, the gram matrix
    // is the identity, and each attention row is softmax(e_j).
    const int d = 4;
    XcaParams p;
    p.heads = 1;
    p.dim_head = d;
    std::vector<float> wqkv(static_cast<size_t>(d) * 3 * d, 0.f);
    for (int i = 0; i < d; ++i)
        for (int block = 0; block < 3; ++block) wqkv[i * 3 * d + block * d + i] = 1.f;
    p.wqkv = Tensor::from_data({d, 3 * d}, std::move(wqkv));
    p.bqkv = Tensor::zeros({3 * d});
    std::vector<float> wout(static_cast<size_t>(d) * d, 0.f);
    for (int i = 0; i < d; ++i) wout[i * d + i] = 1.f;
    p.wout = Tensor::from_data({d, d}, std::move(wout));
    p.bout = Tensor::zeros({d});
    p.temperature = Tensor::full({1}, 1.f);

    std::vector<float> tokens(static_cast<size_t>(d) * d, 0.f);
    for (int i = 0; i < d; ++i) tokens[i * d + i] = 1.f;
    AttentionOut out = xca(Tensor::from_data({1, d, d}, std::move(tokens)), p);

    const double hot = std::exp(1.0) / (std::exp(1.0) + (d - 1));
    const double cold = 1.0 / (std::exp(1.0) + (d - 1));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(out.attention.data()[i * d + j] ==
                  doctest::Approx(i == j ? hot : cold).epsilon(1e-5));
}

TEST_CASE("cross_attention_fuse preserves lengths and residual identity") {
    Rng rng(23);
    CrossFuseDirection s2l = make_cross_fuse(8, 12, rng);
    CrossFuseDirection l2s = make_cross_fuse(12, 8, rng);
    Tensor sm = random_tensor({2, 5, 8}, rng);
    Tensor lg = random_tensor({2, 3, 12}, rng);

    auto fused = cross_attention_fuse(sm, lg, s2l, l2s);
    CHECK(fused.first.shape() == sm.shape());
    CHECK(fused.second.shape() == lg.shape());
    // patch tokens pass through unchanged
    for (int n = 1; n < 5; ++n)
        for (int d = 0; d < 8; ++d)
            CHECK(fused.first.data()[n * 8 + d] == doctest::Approx(sm.data()[n * 8 + d]));

    // zero-initialized output projections leave the class tokens unchanged
    CrossFuseDirection zero_s2l = s2l, zero_l2s = l2s;
    zero_s2l.f_out_w = Tensor::zeros({12, 8});
    zero_s2l.f_out_b = Tensor::zeros({8});
    zero_l2s.f_out_w = Tensor::zeros({8, 12});
    zero_l2s.f_out_b = Tensor::zeros({12});
    auto frozen = cross_attention_fuse(sm, lg, zero_s2l, zero_l2s);
    for (size_t i = 0; i < sm.numel(); ++i)
        CHECK(frozen.first.data()[i] == doctest::Approx(sm.data()[i]));
    for (size_t i = 0; i < lg.numel(); ++i)
        CHECK(frozen.second.data()[i] == doctest::Approx(lg.data()[i]));
}

TEST_CASE("cross_attend_cls matches a hand computation on 2-token branches") {
    // dims 2/2, all projections the identity. branch_a cls = (1, 0); branch
    // b's single patch token is (1, 1). q = (1,0); score = 1/sqrt(2);
    // softmax over one context token = 1; attended = (1,1); new cls =
    // (1,0)+(1,1) = (2,1).
    CrossFuseDirection dir;
    dir.f_in_w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    dir.f_in_b = Tensor::zeros({2});
    dir.wq = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    dir.f_out_w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    dir.f_out_b = Tensor::zeros({2});

    Tensor branch_a = Tensor::from_data({1, 2, 2}, {1, 0, 0, 1});
    Tensor branch_b = Tensor::from_data({1, 2, 2}, {2, 0, 1, 1});
    Tensor fused = cross_attend_cls(branch_a, branch_b, dir);
    CHECK(fused.data()[0] == doctest::Approx(2.0));
    CHECK(fused.data()[1] == doctest::Approx(1.0));
    CHECK(fused.data()[2] == doctest::Approx(0.0));  // patch token untouched
    CHECK(fused.data()[3] == doctest::Approx(1.0));
}

TEST_CASE("parallel_pair_block identity and parameter parity") {
    Rng rng(29);
    ParallelPairParams p = make_parallel_pair(16, 2, 8, 32, rng);
    Tensor tokens = random_tensor({2, 4, 16}, rng);

    CHECK(parallel_pair_block(tokens, p).shape() == tokens.shape());

    // zero the branch outputs: the block becomes the identity
    ParallelPairParams z = p;
    z.attn_a.attn.wout = Tensor::zeros({16, 16});
    z.attn_a.attn.bout = Tensor::zeros({16});
    z.attn_b.attn.wout = Tensor::zeros({16, 16});
    z.attn_b.attn.bout = Tensor::zeros({16});
    z.ffn_a.w2 = Tensor::zeros({32, 16});
    z.ffn_a.b2 = Tensor::zeros({16});
    z.ffn_b.w2 = Tensor::zeros({32, 16});
    z.ffn_b.b2 = Tensor::zeros({16});
    Tensor out = parallel_pair_block(tokens, z);
    for (size_t i = 0; i < tokens.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(tokens.data()[i]));

    // one parallel pair carries exactly two sequential blocks of parameters
    auto pair_params = [](const ParallelPairParams& pp) {
        size_t n = 0;
        for (const AttnSubBlock* a : {&pp.attn_a, &pp.attn_b})
            n += a->ln_g.numel() + a->ln_s.numel() + a->attn.wqkv.numel() + a->attn.wout.numel() +
                 a->attn.bout.numel();
        for (const FeedForwardParams* f : {&pp.ffn_a, &pp.ffn_b})
            n += f->ln_g.numel() + f->ln_s.numel() + f->w1.numel() + f->b1.numel() +
                 f->w2.numel() + f->b2.numel();
        return n;
    };
    // sequential block: ln + qkv + out + bout + ln + ff
    const size_t seq_block = 16 + 16 + 16 * 48 + 16 * 16 + 16 + 16 + 16 + 16 * 32 + 32 +
                             32 * 16 + 16;
    CHECK(pair_params(p) == 2 * seq_block);
}

TEST_CASE("regression heads") {
    Rng rng(31);
    // gap head on a constant token sequence equals linear(v)
    HeadParams gap;
    gap.type = HeadType::gap;
    gap.w1 = random_tensor({6, 1}, rng);
    gap.b1 = random_tensor({1}, rng);
    std::vector<float> v(6);
    for (int i = 0; i < 6; ++i) v[i] = static_cast<float>(rng.uniform(-1, 1));
    std::vector<float> tokens;
    for (int n = 0; n < 4; ++n) tokens.insert(tokens.end(), v.begin(), v.end());
    Tensor seq = Tensor::from_data({1, 4, 6}, std::move(tokens));
    Tensor pooled_out = regression_head(seq, gap);
    Tensor direct = linear(Tensor::from_data({1, 6}, v), gap.w1, gap.b1);
    CHECK(pooled_out.data()[0] == doctest::Approx(direct.data()[0]).epsilon(1e-5));

    // fc head output is one scalar per batch row
    HeadParams fc;
    fc.type = HeadType::fc;
    fc.w1 = random_tensor({10, 1}, rng);
    fc.b1 = random_tensor({1}, rng);
    Tensor flat = random_tensor({5, 10}, rng);
    CHECK(regression_head(flat, fc).shape() == Shape{5});

    // token head on a non-transformer family is rejected
    BackboneConfig bad = toy_config(Family::cnn);
    bad.head_type = HeadType::token;
    CHECK_THROWS_AS(build_backbone(bad, 0), ConfigError);
}

TEST_CASE("token head parameter cost is dim embedding plus dim+1 weights") {
    CountingModel model = build_backbone(toy_config(Family::vit), 1);
    size_t cls = 0, head = 0;
    for (const auto& p : model.params) {
        if (p.name == "patch.cls") cls = p.tensor.numel();
        if (p.name.rfind("head.", 0) == 0) head += p.tensor.numel();
    }
    CHECK(cls == 32);       // one embedding vector
    CHECK(head == 32 + 1);  // single linear layer to a scalar
}

TEST_CASE("every parameter of every family receives gradient") {
    for (Family family : kAllFamilies) {
        INFO("family ", family_name(family));
        CountingModel model = build_backbone(toy_config(family), 7);
        Rng rng(41);
        Tensor batch = random_tensor({2, 3, 64, 64}, rng);
        backward(sum_all(model.forward(batch)));
        for (const auto& p : model.params) {
            bool any = false;
            if (p.tensor.node()->grad.size() == p.tensor.numel())
                for (float g : p.tensor.node()->grad)
                    if (g != 0.f) any = true;
            INFO("parameter ", p.name);
            CHECK(any);
        }
    }
}

TEST_CASE("parameter names are unique") {
    for (Family family : kAllFamilies) {
        CountingModel model = build_backbone(toy_config(family), 0);
        std::set<std::string> names;
        for (const auto& p : model.params) CHECK(names.insert(p.name).second);
    }
}

TEST_CASE("flops estimates are linear in depth") {
    BackboneConfig a = toy_config(Family::vit);
    BackboneConfig b = a, c = a;
    b.depth = 3;
    c.depth = 4;
    const double fa = estimate_flops(a), fb = estimate_flops(b), fc = estimate_flops(c);
    CHECK(fb > fa);
    CHECK(fc - fb == doctest::Approx(fb - fa).epsilon(1e-9));  // one block each
}

TEST_CASE("preset table matches the published ordering by flops") {
    // strict rank order of the comparison table's compute column
    const std::vector<std::string> expected_order = {
        "cnn-base",  "cnn-medium",  "crossvit-ti",  "cnn-deep",
        "parallelvit-ti", "resnet50", "vit-vanilla", "resnet101",
        "xcit-s24",  "deepvit-s",   "transcrowd-t", "transcrowd-g",
    };
    std::vector<std::pair<double, std::string>> measured;
    for (const auto& name : preset_names())
        measured.push_back({estimate_flops(preset(name)), name});
    std::sort(measured.begin(), measured.end());
    REQUIRE(measured.size() == expected_order.size());
    for (size_t i = 0; i + 1 < measured.size(); ++i)
        CHECK(measured[i].first < measured[i + 1].first);  // strictly ordered
    for (size_t i = 0; i < measured.size(); ++i)
        CHECK(measured[i].second == expected_order[i]);
}

TEST_CASE("config validation rejects bad configs") {
    BackboneConfig c = toy_config(Family::vit);
    c.dim = 30;  // not divisible by heads=4
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = toy_config(Family::vit);
    c.input_size = 60;  // not divisible by patch 16
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK_THROWS_AS(preset("no-such-model"), ConfigError);
    CHECK_THROWS_AS(family_from_string("alexnet"), ConfigError);
}
