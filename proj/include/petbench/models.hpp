#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "petbench/common.hpp"

namespace petbench::models {

namespace nn = torch::nn;

enum class Family { ResnetEd, Unet, Swinir, Patchgan };

/// One knob set for every architecture; irrelevant fields are ignored by the
/// families that do not use them.
struct ArchConfig {
    Family family = Family::ResnetEd;
    int in_channels = 1;
    int out_channels = 1;

    // convolutional encoder-decoders
    int base_channels = 64;  ///< first-layer width (ngf / ndf)
    int n_blocks = 9;        ///< residual blocks at the bottleneck
    int n_downs = 2;         ///< stride-2 stages in the resnet encoder
    int unet_depth = 8;      ///< total down steps; input side must be divisible by 2^depth

    // windowed-attention generator
    int embed_dim = 180;
    int n_rstb = 6;          ///< residual attention groups
    int layers_per_rstb = 6; ///< attention blocks per group
    int window = 8;
    int n_heads = 6;
    double mlp_ratio = 2.0;

    // generator output wiring: out = x + suv_scale * net(x / suv_scale)
    bool residual_output = true;
    double suv_scale = 10.0;
    bool zero_init_head = true;  ///< start as the exact identity mapping
};

inline void validate(const ArchConfig& cfg) {
    if (cfg.in_channels < 1 || cfg.out_channels < 1) throw ConfigError("channel counts must be >= 1");
    if (cfg.base_channels < 1) throw ConfigError("base channel width must be >= 1");
    if (!(cfg.suv_scale > 0.0)) throw ConfigError("activity scale must be positive");
    switch (cfg.family) {
        case Family::ResnetEd:
            if (cfg.n_blocks < 1) throw ConfigError("resnet generator needs at least one block");
            if (cfg.n_downs < 0) throw ConfigError("negative downsampling count");
            break;
        case Family::Unet:
            if (cfg.unet_depth < 5) throw ConfigError("unet depth must be >= 5");
            break;
        case Family::Swinir:
            if (cfg.embed_dim % cfg.n_heads != 0)
                throw ConfigError("embedding width must be divisible by the head count");
            if (cfg.window < 2) throw ConfigError("attention window must be >= 2");
            if (cfg.n_rstb < 1 || cfg.layers_per_rstb < 1)
                throw ConfigError("attention generator needs at least one block");
            break;
        case Family::Patchgan:
            break;
    }
}

namespace detail {

inline nn::InstanceNorm2d make_norm(int ch) {
    return nn::InstanceNorm2d(
        nn::InstanceNorm2dOptions(ch).affine(false).track_running_stats(false));
}

}  // namespace detail

/// DCGAN-style initialization: conv / linear weights ~ N(0, 0.02), zero biases.
inline void init_weights(nn::Module& root, double std_dev = 0.02) {
    for (const auto& m : root.modules(/*include_self=*/true)) {
        if (auto* conv = m->as<nn::Conv2d>()) {
            torch::nn::init::normal_(conv->weight, 0.0, std_dev);
            if (conv->bias.defined()) torch::nn::init::zeros_(conv->bias);
        } else if (auto* convt = m->as<nn::ConvTranspose2d>()) {
            torch::nn::init::normal_(convt->weight, 0.0, std_dev);
            if (convt->bias.defined()) torch::nn::init::zeros_(convt->bias);
        } else if (auto* lin = m->as<nn::Linear>()) {
            torch::nn::init::normal_(lin->weight, 0.0, std_dev);
            if (lin->bias.defined()) torch::nn::init::zeros_(lin->bias);
        }
    }
}

inline std::int64_t count_parameters(const nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

// ---------------------------------------------------------------------------
// ResNet encoder-decoder: c7s1-C, n stride-2 downs, residual bottleneck,
// mirrored transposed-conv ups, c7s1-out head. Reflection padding throughout.
// ---------------------------------------------------------------------------

struct ResnetBlockImpl : nn::Module {
    nn::Sequential body;

    explicit ResnetBlockImpl(int ch) {
        body = nn::Sequential(
            nn::ReflectionPad2d(1),
            nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)),
            detail::make_norm(ch),
            nn::ReLU(nn::ReLUOptions(true)),
            nn::ReflectionPad2d(1),
            nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)),
            detail::make_norm(ch));
        register_module("body", body);
    }

    torch::Tensor forward(torch::Tensor x) { return x + body->forward(x); }
};
TORCH_MODULE(ResnetBlock);

struct ResnetGeneratorImpl : nn::Module {
    nn::Sequential trunk;
    nn::Conv2d head{nullptr};

    explicit ResnetGeneratorImpl(const ArchConfig& cfg) {
        const int c0 = cfg.base_channels;
        trunk = nn::Sequential(
            nn::ReflectionPad2d(3),
            nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, c0, 7)),
            detail::make_norm(c0),
            nn::ReLU(nn::ReLUOptions(true)));
        int ch = c0;
        for (int i = 0; i < cfg.n_downs; ++i) {
            trunk->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch * 2, 3).stride(2).padding(1)));
            trunk->push_back(detail::make_norm(ch * 2));
            trunk->push_back(nn::ReLU(nn::ReLUOptions(true)));
            ch *= 2;
        }
        for (int i = 0; i < cfg.n_blocks; ++i) trunk->push_back(ResnetBlock(ch));
        for (int i = 0; i < cfg.n_downs; ++i) {
            trunk->push_back(nn::ConvTranspose2d(
                nn::ConvTranspose2dOptions(ch, ch / 2, 3).stride(2).padding(1).output_padding(1)));
            trunk->push_back(detail::make_norm(ch / 2));
            trunk->push_back(nn::ReLU(nn::ReLUOptions(true)));
            ch /= 2;
        }
        trunk->push_back(nn::ReflectionPad2d(3));
        register_module("trunk", trunk);
        head = register_module("head", nn::Conv2d(nn::Conv2dOptions(ch, cfg.out_channels, 7)));
    }

    void zero_head() {
        torch::NoGradGuard ng;
        head->weight.zero_();
        head->bias.zero_();
    }

    torch::Tensor forward(torch::Tensor x) { return head->forward(trunk->forward(x)); }
};
TORCH_MODULE(ResnetGenerator);

// ---------------------------------------------------------------------------
// U-Net built from nested skip blocks (k4 s2 convs, LeakyReLU encoder, ReLU
// decoder). The innermost down stage carries no norm: it may reach 1x1.
// ---------------------------------------------------------------------------

struct UnetBlockImpl : nn::Module {
    nn::Sequential down, up;
    std::shared_ptr<UnetBlockImpl> sub;
    bool outermost = false;
    nn::ConvTranspose2d up_conv{nullptr};  // kept for head access in the outermost block

    UnetBlockImpl(int outer_ch, int inner_ch, int input_ch,
                  std::shared_ptr<UnetBlockImpl> submodule, bool outermost_, bool innermost)
        : sub(std::move(submodule)), outermost(outermost_) {
        auto downconv = nn::Conv2d(nn::Conv2dOptions(input_ch, inner_ch, 4).stride(2).padding(1));
        if (outermost) {
            up_conv = nn::ConvTranspose2d(
                nn::ConvTranspose2dOptions(inner_ch * 2, outer_ch, 4).stride(2).padding(1));
            down = nn::Sequential(downconv);
            up = nn::Sequential(nn::ReLU(nn::ReLUOptions(true)), up_conv);
        } else if (innermost) {
            up_conv = nn::ConvTranspose2d(
                nn::ConvTranspose2dOptions(inner_ch, outer_ch, 4).stride(2).padding(1));
            down = nn::Sequential(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
                                  downconv);
            up = nn::Sequential(nn::ReLU(nn::ReLUOptions(true)), up_conv, detail::make_norm(outer_ch));
        } else {
            up_conv = nn::ConvTranspose2d(
                nn::ConvTranspose2dOptions(inner_ch * 2, outer_ch, 4).stride(2).padding(1));
            down = nn::Sequential(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
                                  downconv, detail::make_norm(inner_ch));
            up = nn::Sequential(nn::ReLU(nn::ReLUOptions(true)), up_conv, detail::make_norm(outer_ch));
        }
        register_module("down", down);
        register_module("up", up);
        if (sub) register_module("sub", sub);
    }

    torch::Tensor forward(torch::Tensor x) {
        torch::Tensor y = down->forward(x);
        if (sub) y = sub->forward(y);
        y = up->forward(y);
        if (outermost) return y;
        return torch::cat({x, y}, 1);
    }
};
TORCH_MODULE(UnetBlock);

struct UnetGeneratorImpl : nn::Module {
    UnetBlock root{nullptr};

    explicit UnetGeneratorImpl(const ArchConfig& cfg) {
        const int ngf = cfg.base_channels;
        auto block = std::make_shared<UnetBlockImpl>(ngf * 8, ngf * 8, ngf * 8, nullptr,
                                                     false, /*innermost=*/true);
        for (int i = 0; i < cfg.unet_depth - 5; ++i)
            block = std::make_shared<UnetBlockImpl>(ngf * 8, ngf * 8, ngf * 8, block, false, false);
        block = std::make_shared<UnetBlockImpl>(ngf * 4, ngf * 8, ngf * 4, block, false, false);
        block = std::make_shared<UnetBlockImpl>(ngf * 2, ngf * 4, ngf * 2, block, false, false);
        block = std::make_shared<UnetBlockImpl>(ngf, ngf * 2, ngf, block, false, false);
        block = std::make_shared<UnetBlockImpl>(cfg.out_channels, ngf, cfg.in_channels, block,
                                                /*outermost=*/true, false);
        root = register_module("root", UnetBlock(block));
    }

    void zero_head() {
        torch::NoGradGuard ng;
        root->up_conv->weight.zero_();
        root->up_conv->bias.zero_();
    }

    torch::Tensor forward(torch::Tensor x) { return root->forward(x); }
};
TORCH_MODULE(UnetGenerator);

// ---------------------------------------------------------------------------
// Windowed-attention generator: shallow conv feature, residual groups of
// (shifted-)window attention blocks, then a conv head producing the correction.
// ---------------------------------------------------------------------------

namespace detail {

// (B, H, W, C) -> (B * nWindows, win*win, C)
inline torch::Tensor window_partition(const torch::Tensor& x, int win) {
    const auto B = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
    auto v = x.view({B, H / win, win, W / win, win, C});
    return v.permute({0, 1, 3, 2, 4, 5}).contiguous().view({-1, win * win, C});
}

inline torch::Tensor window_reverse(const torch::Tensor& windows, int win, std::int64_t H,
                                    std::int64_t W) {
    const auto C = windows.size(2);
    const auto B = windows.size(0) / ((H / win) * (W / win));
    auto v = windows.view({B, H / win, W / win, win, win, C});
    return v.permute({0, 1, 3, 2, 4, 5}).contiguous().view({B, H, W, C});
}

// Pairwise relative-position lookup indices for one square window.
inline torch::Tensor relative_position_index(int win) {
    auto coords = torch::stack(torch::meshgrid({torch::arange(win), torch::arange(win)}, "ij"));
    auto flat = coords.flatten(1);                                    // (2, n)
    auto rel = flat.unsqueeze(2) - flat.unsqueeze(1);                 // (2, n, n)
    rel = rel.permute({1, 2, 0}).contiguous();                        // (n, n, 2)
    rel.select(2, 0) += win - 1;
    rel.select(2, 1) += win - 1;
    rel.select(2, 0) *= 2 * win - 1;
    return rel.sum(-1);  // (n, n)
}

// -100 / 0 additive mask separating the shifted-window regions.
inline torch::Tensor shift_attention_mask(std::int64_t H, std::int64_t W, int win, int shift,
                                          const torch::TensorOptions& opts) {
    using torch::indexing::Slice;
    auto img = torch::zeros({1, H, W, 1}, opts);
    auto spans = [&](std::int64_t n) {
        return std::vector<std::pair<std::int64_t, std::int64_t>>{
            {0, n - win}, {n - win, n - shift}, {n - shift, n}};
    };
    int region = 0;
    for (const auto& [h0, h1] : spans(H))
        for (const auto& [w0, w1] : spans(W))
            img.index_put_({0, Slice(h0, h1), Slice(w0, w1), 0}, region++);
    auto windows = window_partition(img, win).squeeze(-1);            // (nW, n)
    auto diff = windows.unsqueeze(1) - windows.unsqueeze(2);          // (nW, n, n)
    return diff.eq(0).to(opts.dtype()).sub(1.0).mul(100.0);           // 0 same region, -100 across
}

}  // namespace detail

struct WindowAttentionImpl : nn::Module {
    int dim, win, heads;
    nn::Linear qkv{nullptr}, proj{nullptr};
    torch::Tensor rel_bias;   // ((2w-1)^2, heads)
    torch::Tensor rel_index;  // (w^2, w^2) buffer

    WindowAttentionImpl(int dim_, int win_, int heads_) : dim(dim_), win(win_), heads(heads_) {
        qkv = register_module("qkv", nn::Linear(dim, dim * 3));
        proj = register_module("proj", nn::Linear(dim, dim));
        rel_bias = register_parameter(
            "rel_bias", torch::empty({(2 * win - 1) * (2 * win - 1), heads}).normal_(0.0, 0.02));
        rel_index = register_buffer("rel_index", detail::relative_position_index(win));
    }

    // x: (nW * B, n, C); mask: (nW, n, n) or undefined
    torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask) {
        const auto Bn = x.size(0), N = x.size(1), C = x.size(2);
        auto qkv_out = qkv->forward(x).reshape({Bn, N, 3, heads, C / heads}).permute({2, 0, 3, 1, 4});
        auto q = qkv_out[0], k = qkv_out[1], v = qkv_out[2];
        q = q * std::pow(static_cast<double>(C / heads), -0.5);
        auto attn = torch::matmul(q, k.transpose(-2, -1));  // (Bn, heads, n, n)

        auto bias = rel_bias.index_select(0, rel_index.view(-1))
                        .view({N, N, heads})
                        .permute({2, 0, 1})
                        .contiguous()
                        .unsqueeze(0);
        attn = attn + bias.to(attn.dtype());

        if (mask.defined()) {
            const auto nW = mask.size(0);
            attn = attn.view({Bn / nW, nW, heads, N, N}) +
                   mask.unsqueeze(1).unsqueeze(0).to(attn.dtype());
            attn = attn.view({Bn, heads, N, N});
        }
        attn = torch::softmax(attn, -1);
        auto out = torch::matmul(attn, v).transpose(1, 2).reshape({Bn, N, C});
        return proj->forward(out);
    }
};
TORCH_MODULE(WindowAttention);

struct SwinBlockImpl : nn::Module {
    int dim, win, shift;
    nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    WindowAttention attn{nullptr};
    nn::Linear fc1{nullptr}, fc2{nullptr};

    SwinBlockImpl(int dim_, int win_, int heads, int shift_, double mlp_ratio)
        : dim(dim_), win(win_), shift(shift_) {
        norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
        norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
        attn = register_module("attn", WindowAttention(dim, win, heads));
        const int hidden = static_cast<int>(dim * mlp_ratio);
        fc1 = register_module("fc1", nn::Linear(dim, hidden));
        fc2 = register_module("fc2", nn::Linear(hidden, dim));
    }

    // tokens: (B, H*W, C)
    torch::Tensor forward(torch::Tensor tokens, std::int64_t H, std::int64_t W,
                          const torch::Tensor& shift_mask) {
        const auto B = tokens.size(0), C = tokens.size(2);
        auto shortcut = tokens;
        auto x = norm1->forward(tokens).view({B, H, W, C});
        if (shift > 0) x = torch::roll(x, {-shift, -shift}, {1, 2});
        auto windows = detail::window_partition(x, win);
        windows = attn->forward(windows, shift > 0 ? shift_mask : torch::Tensor());
        x = detail::window_reverse(windows, win, H, W);
        if (shift > 0) x = torch::roll(x, {shift, shift}, {1, 2});
        tokens = shortcut + x.view({B, H * W, C});
        auto h = norm2->forward(tokens);
        h = fc2->forward(torch::gelu(fc1->forward(h)));
        return tokens + h;
    }
};
TORCH_MODULE(SwinBlock);

struct RstbImpl : nn::Module {
    std::vector<SwinBlock> blocks;
    nn::Conv2d conv{nullptr};

    RstbImpl(int dim, int win, int heads, int n_layers, double mlp_ratio) {
        for (int i = 0; i < n_layers; ++i) {
            blocks.push_back(SwinBlock(dim, win, heads, i % 2 == 0 ? 0 : win / 2, mlp_ratio));
            register_module("block" + std::to_string(i), blocks.back());
        }
        conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(dim, dim, 3).padding(1)));
    }

    torch::Tensor forward(torch::Tensor tokens, std::int64_t H, std::int64_t W,
                          const torch::Tensor& shift_mask) {
        auto x = tokens;
        for (auto& b : blocks) x = b->forward(x, H, W, shift_mask);
        const auto B = x.size(0), C = x.size(2);
        auto img = x.transpose(1, 2).reshape({B, C, H, W});
        img = conv->forward(img);
        return tokens + img.view({B, C, H * W}).transpose(1, 2);
    }
};
TORCH_MODULE(Rstb);

struct SwinGeneratorImpl : nn::Module {
    ArchConfig cfg;
    nn::Conv2d conv_first{nullptr}, conv_after_body{nullptr}, conv_last{nullptr};
    nn::LayerNorm patch_norm{nullptr}, body_norm{nullptr};
    std::vector<Rstb> groups;

    explicit SwinGeneratorImpl(const ArchConfig& cfg_) : cfg(cfg_) {
        const int C = cfg.embed_dim;
        conv_first = register_module(
            "conv_first", nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, C, 3).padding(1)));
        patch_norm = register_module("patch_norm", nn::LayerNorm(nn::LayerNormOptions({C})));
        for (int i = 0; i < cfg.n_rstb; ++i) {
            groups.push_back(Rstb(C, cfg.window, cfg.n_heads, cfg.layers_per_rstb, cfg.mlp_ratio));
            register_module("group" + std::to_string(i), groups.back());
        }
        body_norm = register_module("body_norm", nn::LayerNorm(nn::LayerNormOptions({C})));
        conv_after_body =
            register_module("conv_after_body", nn::Conv2d(nn::Conv2dOptions(C, C, 3).padding(1)));
        conv_last = register_module(
            "conv_last", nn::Conv2d(nn::Conv2dOptions(C, cfg.out_channels, 3).padding(1)));
    }

    void zero_head() {
        torch::NoGradGuard ng;
        conv_last->weight.zero_();
        conv_last->bias.zero_();
    }

    torch::Tensor forward(torch::Tensor x) {
        const auto h0 = x.size(2), w0 = x.size(3);
        const int win = cfg.window;
        const auto pad_h = (win - h0 % win) % win;
        const auto pad_w = (win - w0 % win) % win;
        if (pad_h > 0 || pad_w > 0)
            x = torch::reflection_pad2d(x, {0, pad_w, 0, pad_h});
        const auto H = x.size(2), W = x.size(3);

        auto feat = conv_first->forward(x);
        auto tokens = feat.flatten(2).transpose(1, 2);  // (B, H*W, C)
        tokens = patch_norm->forward(tokens);
        const auto mask = detail::shift_attention_mask(H, W, win, win / 2, x.options());
        for (auto& g : groups) tokens = g->forward(tokens, H, W, mask);
        tokens = body_norm->forward(tokens);

        const auto B = tokens.size(0), C = tokens.size(2);
        auto body = tokens.transpose(1, 2).reshape({B, C, H, W});
        auto out = conv_last->forward(conv_after_body->forward(body) + feat);
        if (pad_h > 0 || pad_w > 0)
            out = out.index({torch::indexing::Slice(), torch::indexing::Slice(),
                             torch::indexing::Slice(0, h0), torch::indexing::Slice(0, w0)});
        return out;
    }
};
TORCH_MODULE(SwinGenerator);

// ---------------------------------------------------------------------------
// 70x70 patch discriminator: C64-C128-C256-C512(s1)-C1, k4, LeakyReLU(0.2).
// ---------------------------------------------------------------------------

struct PatchDiscriminatorImpl : nn::Module {
    nn::Sequential model;

    explicit PatchDiscriminatorImpl(const ArchConfig& cfg) {
        const int ndf = cfg.base_channels;
        model = nn::Sequential(
            nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, ndf, 4).stride(2).padding(1)),
            nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
            nn::Conv2d(nn::Conv2dOptions(ndf, ndf * 2, 4).stride(2).padding(1)),
            detail::make_norm(ndf * 2),
            nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
            nn::Conv2d(nn::Conv2dOptions(ndf * 2, ndf * 4, 4).stride(2).padding(1)),
            detail::make_norm(ndf * 4),
            nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
            nn::Conv2d(nn::Conv2dOptions(ndf * 4, ndf * 8, 4).stride(1).padding(1)),
            detail::make_norm(ndf * 8),
            nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)),
            nn::Conv2d(nn::Conv2dOptions(ndf * 8, 1, 4).stride(1).padding(1)));
        register_module("model", model);
    }

    torch::Tensor forward(torch::Tensor x) { return model->forward(x); }
};
TORCH_MODULE(PatchDiscriminator);

// ---------------------------------------------------------------------------
// Uniform front door: a denoiser is any of the generator families behind the
// residual wiring out = x + s * net(x / s). With a zeroed head the mapping is
// exactly the identity, whatever the trunk does.
// ---------------------------------------------------------------------------

struct DenoiserModelImpl : nn::Module {
    ArchConfig cfg;
    nn::AnyModule net;

    explicit DenoiserModelImpl(const ArchConfig& cfg_) : cfg(cfg_) {
        validate(cfg);
        switch (cfg.family) {
            case Family::ResnetEd: net = nn::AnyModule(ResnetGenerator(cfg)); break;
            case Family::Unet: net = nn::AnyModule(UnetGenerator(cfg)); break;
            case Family::Swinir: net = nn::AnyModule(SwinGenerator(cfg)); break;
            case Family::Patchgan: throw ConfigError("a discriminator cannot act as a denoiser");
        }
        register_module("net", net.ptr());
        init_weights(*net.ptr());
        if (cfg.zero_init_head) zero_head();
    }

    void zero_head() {
        switch (cfg.family) {
            case Family::ResnetEd: net.ptr()->as<ResnetGeneratorImpl>()->zero_head(); break;
            case Family::Unet: net.ptr()->as<UnetGeneratorImpl>()->zero_head(); break;
            case Family::Swinir: net.ptr()->as<SwinGeneratorImpl>()->zero_head(); break;
            case Family::Patchgan: break;
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        if (!cfg.residual_output) return net.forward(x);
        const double s = cfg.suv_scale;
        return x + net.forward(x / s) * s;
    }
};
TORCH_MODULE(DenoiserModel);

inline DenoiserModel make_generator(const ArchConfig& cfg) { return DenoiserModel(cfg); }

inline PatchDiscriminator make_discriminator(ArchConfig cfg) {
    cfg.family = Family::Patchgan;
    validate(cfg);
    PatchDiscriminator d(cfg);
    init_weights(*d);
    return d;
}

/// Published parameter budgets for the full-size presets.
struct ParamBand {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
};

inline ParamBand preset_parameter_band(const std::string& name) {
    if (name == "resnet_ed") return {10'600'000, 12'900'000};
    if (name == "unet") return {49'000'000, 59'800'000};
    if (name == "swinir") return {11'250'000, 13'750'000};
    if (name == "patchgan") return {2'500'000, 3'100'000};
    throw ConfigError("no parameter budget declared for preset: " + name);
}

inline void check_parameter_budget(const std::string& preset, const nn::Module& m) {
    const ParamBand band = preset_parameter_band(preset);
    const std::int64_t n = count_parameters(m);
    if (n < band.lo || n > band.hi)
        throw ConfigError("preset '" + preset + "' has " + std::to_string(n) +
                          " parameters, outside the budget [" + std::to_string(band.lo) + ", " +
                          std::to_string(band.hi) + "]");
}

/// Named presets used throughout the benchmark.
inline ArchConfig arch_preset(const std::string& name) {
    ArchConfig cfg;
    if (name == "resnet_ed") {
        cfg.family = Family::ResnetEd;
        cfg.base_channels = 64;
        cfg.n_blocks = 9;
        cfg.n_downs = 2;
    } else if (name == "resnet_ed_small") {
        cfg.family = Family::ResnetEd;
        cfg.base_channels = 16;
        cfg.n_blocks = 3;
        cfg.n_downs = 2;
    } else if (name == "resnet_ed_tiny") {
        cfg.family = Family::ResnetEd;
        cfg.base_channels = 2;
        cfg.n_blocks = 1;
        cfg.n_downs = 1;
    } else if (name == "unet") {
        cfg.family = Family::Unet;
        cfg.base_channels = 64;
        cfg.unet_depth = 8;
    } else if (name == "unet_64") {
        cfg.family = Family::Unet;
        cfg.base_channels = 64;
        cfg.unet_depth = 6;
    } else if (name == "swinir") {
        cfg.family = Family::Swinir;
        cfg.embed_dim = 180;
        cfg.n_rstb = 6;
        cfg.layers_per_rstb = 6;
        cfg.window = 8;
        cfg.n_heads = 6;
        cfg.mlp_ratio = 2.0;
    } else if (name == "swinir_small") {
        cfg.family = Family::Swinir;
        cfg.embed_dim = 24;
        cfg.n_rstb = 1;
        cfg.layers_per_rstb = 2;
        cfg.window = 8;
        cfg.n_heads = 2;
        cfg.mlp_ratio = 2.0;
    } else if (name == "patchgan") {
        cfg.family = Family::Patchgan;
        cfg.base_channels = 64;
    } else {
        throw ConfigError("unknown architecture preset: " + name);
    }
    return cfg;
}

}  // namespace petbench::models
