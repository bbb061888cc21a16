#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "microcount/checkpoint.hpp"
#include "microcount/tensor.hpp"

namespace microcount::models {

enum class Family {
    cnn,
    resnet,
    vit,
    deepvit,
    xcit,
    crossvit,
    parallelvit,
    transcrowd_g,
    transcrowd_t,
};

enum class HeadType { fc, gap, token };

const char* family_name(Family family);
Family family_from_string(const std::string& name);
const char* head_type_name(HeadType head);

struct BackboneConfig {
    Family family = Family::vit;
    std::string name;  // preset name, informational
    int depth = 12;
    int heads = 12;
    int dim = 768;
    int dim2 = 0;  // crossvit large-patch branch
    int mlp_dim = 3072;
    int mlp_dim2 = 0;
    int patch_size = 16;
    int patch_size2 = 0;  // crossvit large patch
    int input_size = 384;
    HeadType head_type = HeadType::token;
    int head_hidden = 0;  // 0: the head is a single linear layer
    int dim_head = 0;     // 0: dim / heads
    std::vector<int> channels;      // cnn conv output channels per stage
    std::vector<int> stage_blocks;  // resnet bottleneck blocks per stage
    int cls_attn_layers = 0;        // xcit class-attention layers

    int resolved_dim_head() const { return dim_head > 0 ? dim_head : dim / heads; }
    int tokens_per_side() const { return input_size / patch_size; }
};

void validate(const BackboneConfig& config);

// A backbone plus regression head; forward maps a preprocessed batch
// (B,3,S,S) to one real count per image (B).
struct CountingModel {
    BackboneConfig config;
    std::vector<nn::NamedTensor> params;
    std::function<nn::Tensor(const nn::Tensor&)> forward;
};

CountingModel build_backbone(const BackboneConfig& config, uint64_t seed = 0);
long long count_parameters(const CountingModel& model);

// The Table-style preset registry ("vit-vanilla", "crossvit-ti", ...).
BackboneConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

// ---- attention primitives (also exercised directly by property tests) ----

struct AttentionOut {
    nn::Tensor tokens;
    nn::Tensor attention;  // mhsa: (B,H,N,N); xca: (B,H,dh,dh)
};

struct MhsaParams {
    nn::Tensor wqkv;  // (dim, 3*heads*dim_head), no bias
    nn::Tensor wout;  // (heads*dim_head, dim)
    nn::Tensor bout;  // (dim)
    nn::Tensor theta;  // (heads, heads); defined => re-attention after softmax
    int heads = 1;
    int dim_head = 0;
};
MhsaParams make_mhsa_params(int dim, int heads, int dim_head, Rng& rng);
AttentionOut mhsa(const nn::Tensor& tokens, const MhsaParams& params);

// Head mixing new[h] = sum_k theta[h,k] * maps[k], then per-row L1
// renormalization so rows stay stochastic. Identity mixing is a no-op.
nn::Tensor re_attention(const nn::Tensor& maps, const nn::Tensor& theta);

struct XcaParams {
    nn::Tensor wqkv;  // (dim, 3*heads*dim_head), with bias
    nn::Tensor bqkv;
    nn::Tensor wout;
    nn::Tensor bout;
    nn::Tensor temperature;  // (heads)
    int heads = 1;
    int dim_head = 0;
};
XcaParams make_xca_params(int dim, int heads, int dim_head, Rng& rng);
// Cross-covariance attention: queries/keys L2-normalized along the token
// axis; the attention matrix is dim_head x dim_head per head.
AttentionOut xca(const nn::Tensor& tokens, const XcaParams& params);

struct CrossFuseDirection {
    nn::Tensor f_in_w, f_in_b;    // dim_a -> dim_b
    nn::Tensor wq;                // dim_b -> dim_b, no bias
    nn::Tensor f_out_w, f_out_b;  // dim_b -> dim_a
};
CrossFuseDirection make_cross_fuse(int dim_a, int dim_b, Rng& rng);
// Projects branch a's class token into branch b's width, attends over b's
// patch tokens, projects back, and adds residually. Patch tokens pass
// through untouched.
nn::Tensor cross_attend_cls(const nn::Tensor& branch_a, const nn::Tensor& branch_b,
                            const CrossFuseDirection& dir);
std::pair<nn::Tensor, nn::Tensor> cross_attention_fuse(const nn::Tensor& small_branch,
                                                       const nn::Tensor& large_branch,
                                                       const CrossFuseDirection& small_to_large,
                                                       const CrossFuseDirection& large_to_small);

struct FeedForwardParams {
    nn::Tensor ln_g, ln_s, w1, b1, w2, b2;
};
struct AttnSubBlock {
    nn::Tensor ln_g, ln_s;
    MhsaParams attn;
};
struct ParallelPairParams {
    AttnSubBlock attn_a, attn_b;
    FeedForwardParams ffn_a, ffn_b;
};
ParallelPairParams make_parallel_pair(int dim, int heads, int dim_head, int mlp_dim, Rng& rng);
// x + attn_a(x) + attn_b(x), then y + ffn_a(y) + ffn_b(y); two sequential
// blocks' worth of parameters at half the sequential depth.
nn::Tensor parallel_pair_block(const nn::Tensor& tokens, const ParallelPairParams& params);

// ---- regression heads ----

struct HeadParams {
    HeadType type = HeadType::token;
    nn::Tensor w1, b1;  // (in, hidden|1)
    nn::Tensor w2, b2;  // defined when hidden > 0
};
// tokens (B,N,D) for gap/token heads, flat features (B,F) for fc.
nn::Tensor regression_head(const nn::Tensor& features, const HeadParams& head);

}  // namespace microcount::models
