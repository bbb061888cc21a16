#include "microcount/models.hpp"

#include <algorithm>
#include <unordered_map>

#include "microcount/errors.hpp"

namespace microcount::models {

const char* family_name(Family family) {
    switch (family) {
        case Family::cnn: return "cnn";
        case Family::resnet: return "resnet";
        case Family::vit: return "vit";
        case Family::deepvit: return "deepvit";
        case Family::xcit: return "xcit";
        case Family::crossvit: return "crossvit";
        case Family::parallelvit: return "parallelvit";
        case Family::transcrowd_g: return "transcrowd-g";
        case Family::transcrowd_t: return "transcrowd-t";
    }
    return "?";
}

Family family_from_string(const std::string& name) {
    static const std::unordered_map<std::string, Family> map = {
        {"cnn", Family::cnn},
        {"resnet", Family::resnet},
        {"vit", Family::vit},
        {"deepvit", Family::deepvit},
        {"xcit", Family::xcit},
        {"crossvit", Family::crossvit},
        {"parallelvit", Family::parallelvit},
        {"transcrowd-g", Family::transcrowd_g},
        {"transcrowd-t", Family::transcrowd_t},
    };
    auto it = map.find(name);
    if (it == map.end()) throw ConfigError("unknown model family '" + name + "'");
    return it->second;
}

const char* head_type_name(HeadType head) {
    switch (head) {
        case HeadType::fc: return "fc";
        case HeadType::gap: return "gap";
        case HeadType::token: return "token";
    }
    return "?";
}

static bool is_transformer(Family family) {
    return family != Family::cnn && family != Family::resnet;
}

void validate(const BackboneConfig& config) {
    if (config.input_size <= 0) throw ConfigError("input_size must be positive");
    if (config.head_type == HeadType::token && !is_transformer(config.family))
        throw ConfigError("token head requires a transformer family");
    if (is_transformer(config.family)) {
        if (config.depth <= 0 || config.heads <= 0 || config.dim <= 0 || config.mlp_dim <= 0)
            throw ConfigError("transformer config fields must be positive");
        if (config.dim_head == 0 && config.dim % config.heads != 0)
            throw ConfigError("dim must be divisible by heads");
        if (config.input_size % config.patch_size != 0)
            throw ConfigError("input_size must be divisible by patch_size");
    }
    switch (config.family) {
        case Family::crossvit:
            if (config.dim2 <= 0 || config.mlp_dim2 <= 0 || config.patch_size2 <= 0)
                throw ConfigError("crossvit requires the large-branch dim/mlp/patch fields");
            if (config.input_size % config.patch_size2 != 0)
                throw ConfigError("input_size must be divisible by both patch sizes");
            if (config.dim2 % config.heads != 0)
                throw ConfigError("large-branch dim must be divisible by heads");
            break;
        case Family::parallelvit:
            if (config.depth % 2 != 0)
                throw ConfigError("parallelvit depth must be even (it counts paired sub-blocks)");
            break;
        case Family::cnn:
            if (config.channels.empty()) throw ConfigError("cnn config requires channel list");
            if (static_cast<int>(config.channels.size()) != config.depth)
                throw ConfigError("cnn channel list length must equal depth");
            if (config.input_size % (1 << config.channels.size()) != 0)
                throw ConfigError("input_size must be divisible by 2^depth");
            break;
        case Family::resnet:
            if (config.stage_blocks.size() != 4)
                throw ConfigError("resnet config requires 4 stage block counts");
            if (config.input_size % 32 != 0)
                throw ConfigError("resnet input_size must be divisible by 32");
            break;
        case Family::xcit:
            if (config.cls_attn_layers <= 0)
                throw ConfigError("xcit requires at least one class-attention layer");
            break;
        default:
            break;
    }
}

long long count_parameters(const CountingModel& model) {
    long long total = 0;
    for (const auto& p : model.params) total += static_cast<long long>(p.tensor.numel());
    return total;
}

nn::Tensor regression_head(const nn::Tensor& features, const HeadParams& head) {
    using namespace nn;
    Tensor flat;
    switch (head.type) {
        case HeadType::fc:
            if (features.rank() != 2)
                throw std::invalid_argument("fc head expects flattened (B, F) features");
            flat = features;
            break;
        case HeadType::gap: {
            if (features.rank() != 3)
                throw std::invalid_argument("gap head expects a (B, N, D) token sequence");
            flat = mean_axis(features, 1);
            break;
        }
        case HeadType::token: {
            if (features.rank() != 3)
                throw std::invalid_argument("token head expects a (B, N, D) token sequence");
            Tensor cls = slice(features, 1, 0, 1);
            flat = reshape(cls, {features.dim(0), features.dim(2)});
            break;
        }
    }
    Tensor out = linear(flat, head.w1, head.b1);
    if (head.w2.defined()) out = linear(relu(out), head.w2, head.b2);
    return reshape(out, {features.dim(0)});
}

namespace {

BackboneConfig base_vit(const std::string& name, Family family) {
    BackboneConfig c;
    c.family = family;
    c.name = name;
    return c;
}

std::unordered_map<std::string, BackboneConfig> build_presets() {
    std::unordered_map<std::string, BackboneConfig> p;

    {
        BackboneConfig c;
        c.family = Family::cnn;
        c.name = "cnn-base";
        c.depth = 1;
        c.channels = {16};
        c.mlp_dim = 16;
        c.head_type = HeadType::fc;
        p[c.name] = c;
        c.name = "cnn-medium";
        c.depth = 2;
        c.channels = {32, 64};
        c.mlp_dim = 64;
        p[c.name] = c;
        c.name = "cnn-deep";
        c.depth = 3;
        c.channels = {64, 128, 256};
        c.mlp_dim = 256;
        p[c.name] = c;
    }
    {
        BackboneConfig c;
        c.family = Family::resnet;
        c.name = "resnet50";
        c.depth = 16;
        c.stage_blocks = {3, 4, 6, 3};
        c.mlp_dim = 2048;
        c.head_type = HeadType::fc;
        p[c.name] = c;
        c.name = "resnet101";
        c.depth = 33;
        c.stage_blocks = {3, 4, 23, 3};
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("vit-vanilla", Family::vit);
        c.depth = 12;
        c.heads = 12;
        c.dim = 768;
        c.mlp_dim = 3072;
        c.patch_size = 32;
        c.head_type = HeadType::token;
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("xcit-s24", Family::xcit);
        c.depth = 24;
        c.heads = 8;
        c.dim = 384;
        c.mlp_dim = 1536;
        c.patch_size = 16;
        c.cls_attn_layers = 2;
        c.head_type = HeadType::token;
        c.head_hidden = 4096;
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("crossvit-ti", Family::crossvit);
        c.depth = 4;
        c.heads = 3;
        c.dim = 96;
        c.dim2 = 192;
        c.mlp_dim = 384;
        c.mlp_dim2 = 768;
        c.patch_size = 16;
        c.patch_size2 = 32;
        c.head_type = HeadType::token;
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("parallelvit-ti", Family::parallelvit);
        c.depth = 12;  // sequential-equivalent sub-block pairs; 6 parallel layers
        c.heads = 3;
        c.dim = 192;
        c.mlp_dim = 768;
        c.patch_size = 16;
        c.head_type = HeadType::token;
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("deepvit-s", Family::deepvit);
        c.depth = 16;
        c.heads = 12;
        c.dim = 396;
        c.mlp_dim = 1188;
        c.patch_size = 16;
        c.dim_head = 64;
        c.head_type = HeadType::token;
        p[c.name] = c;
    }
    {
        BackboneConfig c = base_vit("transcrowd-g", Family::transcrowd_g);
        c.depth = 12;
        c.heads = 12;
        c.dim = 768;
        c.mlp_dim = 3072;
        c.patch_size = 16;
        c.head_type = HeadType::gap;
        c.head_hidden = 5120;
        p[c.name] = c;
        c.name = "transcrowd-t";
        c.family = Family::transcrowd_t;
        c.head_type = HeadType::token;
        c.head_hidden = 1024;
        p[c.name] = c;
    }
    return p;
}

const std::unordered_map<std::string, BackboneConfig>& presets() {
    static const auto p = build_presets();
    return p;
}

}  // namespace

BackboneConfig preset(const std::string& name) {
    auto it = presets().find(name);
    if (it == presets().end()) {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    return it->second;
}

const std::vector<std::string>& preset_names() {
    // Table row order: traditional, state of the art, ViT backbones.
    static const std::vector<std::string> names = {
        "cnn-base",    "cnn-medium",   "cnn-deep", "resnet50",  "resnet101",     "transcrowd-g",
        "transcrowd-t", "crossvit-ti", "deepvit-s", "xcit-s24", "parallelvit-ti", "vit-vanilla",
    };
    return names;
}

}  // namespace microcount::models
