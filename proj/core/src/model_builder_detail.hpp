#pragma once

#include <string>
#include <vector>

#include "microcount/models.hpp"
#include "microcount/tensor.hpp"

namespace microcount::models::detail {

// Registers named parameters as it creates them, so builders read like the
// forward pass they describe.
struct ParamBuilder {
    std::vector<nn::NamedTensor>* out;
    Rng* rng;

    nn::Tensor trunc_normal(const std::string& name, nn::Shape shape, double stddev = 0.02) {
        nn::Tensor t = nn::Tensor::param_trunc_normal(std::move(shape), *rng, stddev);
        out->push_back({name, t});
        return t;
    }
    nn::Tensor zeros(const std::string& name, nn::Shape shape) {
        nn::Tensor t = nn::Tensor::param_zeros(std::move(shape));
        out->push_back({name, t});
        return t;
    }
    nn::Tensor ones(const std::string& name, nn::Shape shape) {
        nn::Tensor t = nn::Tensor::param_full(std::move(shape), 1.f);
        out->push_back({name, t});
        return t;
    }
    // He-scaled truncated normal for convolution kernels.
    nn::Tensor conv_kernel(const std::string& name, nn::Shape shape, int fan_in) {
        return trunc_normal(name, std::move(shape), std::sqrt(2.0 / fan_in));
    }
};

// Pre-norm transformer block with a GELU feed-forward.
struct BlockParams {
    nn::Tensor ln1_g, ln1_s;
    MhsaParams attn;
    FeedForwardParams ffn;
};

BlockParams make_block(ParamBuilder& pb, const std::string& prefix, int dim, int heads,
                       int dim_head, int mlp_dim, bool reattention);
nn::Tensor block_forward(const nn::Tensor& x, const BlockParams& block);

FeedForwardParams make_ffn(ParamBuilder& pb, const std::string& prefix, int dim, int mlp_dim);
nn::Tensor ffn_forward(const nn::Tensor& x, const FeedForwardParams& ffn);

HeadParams make_head(ParamBuilder& pb, HeadType type, int in_dim, int hidden);

// Patch tokens + learned positional embeddings (+ optional class token).
struct EmbedParams {
    nn::Tensor w, b;    // (patch*patch*3, dim)
    nn::Tensor pos;     // (N (+1 with cls), dim)
    nn::Tensor cls;     // (dim), defined when a class token is used
    int patch = 16;
};
EmbedParams make_embed(ParamBuilder& pb, const std::string& prefix, int patch, int dim,
                       int n_patches, bool with_cls);
nn::Tensor embed_forward(const nn::Tensor& images, const EmbedParams& embed);

}  // namespace microcount::models::detail

namespace microcount::models {
CountingModel build_transformer_backbone(const BackboneConfig& config, uint64_t seed);
CountingModel build_conv_backbone(const BackboneConfig& config, uint64_t seed);
}  // namespace microcount::models
