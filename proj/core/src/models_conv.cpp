#include <memory>

#include "microcount/errors.hpp"
#include "model_builder_detail.hpp"

namespace microcount::models {

using namespace nn;
using detail::ParamBuilder;

namespace {

int norm_groups(int channels) { return channels % 32 == 0 ? 32 : 1; }

struct ConvNorm {
    Tensor w;        // (OC, C, k, k), bias-free
    Tensor gn_g, gn_s;
    int stride = 1, padding = 0, groups = 1;
};

ConvNorm make_conv_norm(ParamBuilder& pb, const std::string& prefix, int in, int out, int kernel,
                        int stride, int padding) {
    ConvNorm c;
    c.w = pb.conv_kernel(prefix + ".w", {out, in, kernel, kernel}, in * kernel * kernel);
    c.gn_g = pb.ones(prefix + ".gn.g", {out});
    c.gn_s = pb.zeros(prefix + ".gn.s", {out});
    c.stride = stride;
    c.padding = padding;
    c.groups = norm_groups(out);
    return c;
}

Tensor conv_norm_forward(const Tensor& x, const ConvNorm& c) {
    return groupnorm(conv2d(x, c.w, Tensor(), c.stride, c.padding), c.groups, c.gn_g, c.gn_s);
}

struct Bottleneck {
    ConvNorm reduce, spatial, expand;
    ConvNorm shortcut;  // w undefined for identity shortcuts
};

Bottleneck make_bottleneck(ParamBuilder& pb, const std::string& prefix, int in, int mid,
                           int stride) {
    Bottleneck b;
    b.reduce = make_conv_norm(pb, prefix + ".reduce", in, mid, 1, 1, 0);
    b.spatial = make_conv_norm(pb, prefix + ".spatial", mid, mid, 3, stride, 1);
    b.expand = make_conv_norm(pb, prefix + ".expand", mid, mid * 4, 1, 1, 0);
    if (stride != 1 || in != mid * 4)
        b.shortcut = make_conv_norm(pb, prefix + ".shortcut", in, mid * 4, 1, stride, 0);
    return b;
}

Tensor bottleneck_forward(const Tensor& x, const Bottleneck& b) {
    Tensor h = relu(conv_norm_forward(x, b.reduce));
    h = relu(conv_norm_forward(h, b.spatial));
    h = conv_norm_forward(h, b.expand);
    Tensor identity = b.shortcut.w.defined() ? conv_norm_forward(x, b.shortcut) : x;
    return relu(add(h, identity));
}

CountingModel build_cnn(const BackboneConfig& config, uint64_t seed) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    struct ConvLayer {
        Tensor w, b;
    };
    auto layers = std::make_shared<std::vector<ConvLayer>>();
    int in = 3;
    for (size_t i = 0; i < config.channels.size(); ++i) {
        const int out = config.channels[i];
        ConvLayer l;
        l.w = pb.conv_kernel("conv." + std::to_string(i) + ".w", {out, in, 3, 3}, in * 9);
        l.b = pb.zeros("conv." + std::to_string(i) + ".b", {out});
        layers->push_back(std::move(l));
        in = out;
    }
    const int final_side = config.input_size >> config.channels.size();
    const int flat = in * final_side * final_side;
    auto head = std::make_shared<HeadParams>(
        detail::make_head(pb, HeadType::fc, flat, config.head_hidden));

    model.forward = [layers, head, flat](const Tensor& images) {
        Tensor x = images;
        for (const auto& l : *layers) x = relu(conv2d(x, l.w, l.b, 2, 1));
        return regression_head(reshape(x, {images.dim(0), flat}), *head);
    };
    return model;
}

CountingModel build_resnet(const BackboneConfig& config, uint64_t seed) {
    CountingModel model;
    model.config = config;
    Rng rng(seed);
    ParamBuilder pb{&model.params, &rng};

    auto stem = std::make_shared<ConvNorm>(make_conv_norm(pb, "stem", 3, 64, 7, 2, 3));
    auto stages = std::make_shared<std::vector<Bottleneck>>();
    const int mids[4] = {64, 128, 256, 512};
    int in = 64;
    for (int s = 0; s < 4; ++s) {
        for (int i = 0; i < config.stage_blocks[s]; ++i) {
            const int stride = (s > 0 && i == 0) ? 2 : 1;
            stages->push_back(make_bottleneck(
                pb, "stage" + std::to_string(s) + "." + std::to_string(i), in, mids[s], stride));
            in = mids[s] * 4;
        }
    }
    auto head = std::make_shared<HeadParams>(
        detail::make_head(pb, HeadType::fc, in, config.head_hidden));

    model.forward = [stem, stages, head](const Tensor& images) {
        Tensor x = relu(conv_norm_forward(images, *stem));
        x = maxpool2d(x, 3, 2, 1);
        for (const auto& b : *stages) x = bottleneck_forward(x, b);
        Tensor pooled = mean_axis(mean_axis(x, 3), 2);  // global average pool
        return regression_head(pooled, *head);
    };
    return model;
}

}  // namespace

CountingModel build_conv_backbone(const BackboneConfig& config, uint64_t seed) {
    switch (config.family) {
        case Family::cnn: return build_cnn(config, seed);
        case Family::resnet: return build_resnet(config, seed);
        default: throw ConfigError("not a convolutional family");
    }
}

CountingModel build_backbone(const BackboneConfig& config, uint64_t seed) {
    validate(config);
    if (config.family == Family::cnn || config.family == Family::resnet)
        return build_conv_backbone(config, seed);
    return build_transformer_backbone(config, seed);
}

}  // namespace microcount::models
