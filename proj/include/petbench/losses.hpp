#pragma once

#include <map>
#include <string>

#include <torch/torch.h>

#include "petbench/common.hpp"

namespace petbench::losses {

/// Which terms a training run combines. The plain supervised mode is the
/// degenerate case every GAN mode collapses to when its extra weights are zero.
enum class GanMode {
    Supervised,
    Pix2pix,
    Cyclegan,
    CycleganIdentity,
    CycleganImgprior,
    CycleganSupervised,
};

inline std::string to_string(GanMode m) {
    switch (m) {
        case GanMode::Supervised: return "supervised";
        case GanMode::Pix2pix: return "pix2pix";
        case GanMode::Cyclegan: return "cyclegan";
        case GanMode::CycleganIdentity: return "cyclegan_identity";
        case GanMode::CycleganImgprior: return "cyclegan_imgprior";
        case GanMode::CycleganSupervised: return "cyclegan_supervised";
    }
    throw ValueError("unknown gan mode");
}

inline GanMode mode_from_string(const std::string& s) {
    if (s == "supervised") return GanMode::Supervised;
    if (s == "pix2pix") return GanMode::Pix2pix;
    if (s == "cyclegan") return GanMode::Cyclegan;
    if (s == "cyclegan_identity") return GanMode::CycleganIdentity;
    if (s == "cyclegan_imgprior") return GanMode::CycleganImgprior;
    if (s == "cyclegan_supervised") return GanMode::CycleganSupervised;
    throw ConfigError("unknown gan mode: " + s);
}

struct LossConfig {
    GanMode mode = GanMode::Supervised;
    double w_adversarial = 0.0;
    double w_reconstruction = 1.0;
    double w_cycle = 0.0;
    double w_identity = 0.0;
    double w_image_prior = 0.0;
};

/// Tuned default weights for each mode.
inline LossConfig loss_preset(GanMode mode) {
    LossConfig cfg;
    cfg.mode = mode;
    switch (mode) {
        case GanMode::Supervised:
            cfg.w_reconstruction = 1.0;
            break;
        case GanMode::Pix2pix:
            cfg.w_adversarial = 1.0;
            cfg.w_reconstruction = 10.0;
            break;
        case GanMode::Cyclegan:
            cfg.w_adversarial = 1.0;
            cfg.w_reconstruction = 0.0;
            cfg.w_cycle = 10.0;
            break;
        case GanMode::CycleganIdentity:
            cfg.w_adversarial = 1.0;
            cfg.w_reconstruction = 0.0;
            cfg.w_cycle = 10.0;
            cfg.w_identity = 2.2;
            break;
        case GanMode::CycleganImgprior:
            cfg.w_adversarial = 1.0;
            cfg.w_reconstruction = 0.0;
            cfg.w_cycle = 10.0;
            cfg.w_image_prior = 9.2;
            break;
        case GanMode::CycleganSupervised:
            cfg.w_adversarial = 1.0;
            cfg.w_reconstruction = 9.2;
            cfg.w_cycle = 10.0;
            break;
    }
    return cfg;
}

/// Every mode admits a fixed set of terms; a nonzero weight outside that set is
/// a configuration mistake, while zero weights are always allowed (they turn a
/// mode into one of its degenerate relatives).
inline void validate(const LossConfig& cfg) {
    if (cfg.w_adversarial < 0 || cfg.w_reconstruction < 0 || cfg.w_cycle < 0 ||
        cfg.w_identity < 0 || cfg.w_image_prior < 0)
        throw ConfigError("loss weights must be non-negative");
    auto forbid = [&](double w, const char* term) {
        if (w != 0.0)
            throw ConfigError("mode " + to_string(cfg.mode) + " does not use the " + term +
                              " loss");
    };
    switch (cfg.mode) {
        case GanMode::Supervised:
            forbid(cfg.w_adversarial, "adversarial");
            forbid(cfg.w_cycle, "cycle");
            forbid(cfg.w_identity, "identity");
            forbid(cfg.w_image_prior, "image prior");
            break;
        case GanMode::Pix2pix:
            forbid(cfg.w_cycle, "cycle");
            forbid(cfg.w_identity, "identity");
            forbid(cfg.w_image_prior, "image prior");
            break;
        case GanMode::Cyclegan:
            forbid(cfg.w_reconstruction, "reconstruction");
            forbid(cfg.w_identity, "identity");
            forbid(cfg.w_image_prior, "image prior");
            break;
        case GanMode::CycleganIdentity:
            forbid(cfg.w_reconstruction, "reconstruction");
            forbid(cfg.w_image_prior, "image prior");
            break;
        case GanMode::CycleganImgprior:
            forbid(cfg.w_reconstruction, "reconstruction");
            forbid(cfg.w_identity, "identity");
            break;
        case GanMode::CycleganSupervised:
            forbid(cfg.w_identity, "identity");
            forbid(cfg.w_image_prior, "image prior");
            break;
    }
}

inline bool is_cyclegan(GanMode m) {
    return m == GanMode::Cyclegan || m == GanMode::CycleganIdentity ||
           m == GanMode::CycleganImgprior || m == GanMode::CycleganSupervised;
}

// --- elementary terms ------------------------------------------------------

/// Mean absolute difference over all pixels of a batch.
inline torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b) {
    return torch::mean(torch::abs(a - b));
}

/// Least-squares discriminator objective: real patches toward 1, fakes toward 0.
inline torch::Tensor lsgan_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    return torch::mean(torch::square(d_real - 1)) + torch::mean(torch::square(d_fake));
}

/// Least-squares generator objective: fool the discriminator toward 1.
inline torch::Tensor lsgan_generator(const torch::Tensor& d_fake) {
    return torch::mean(torch::square(d_fake - 1));
}

/// Conditional-discriminator input: the conditioning image stacked with the
/// candidate's difference from it.
inline torch::Tensor paired_disc_input(const torch::Tensor& lt, const torch::Tensor& candidate) {
    return torch::cat({lt, candidate - lt}, 1);
}

// --- composition ------------------------------------------------------------

/// Raw (unweighted) term values. A term may stay undefined when its weight is
/// zero — the trainer then never has to evaluate the networks it would need.
struct TermValues {
    torch::Tensor adversarial;
    torch::Tensor reconstruction;
    torch::Tensor cycle;
    torch::Tensor identity;
    torch::Tensor image_prior;
};

struct LossBreakdown {
    torch::Tensor total;                  ///< weighted sum, graph-connected
    std::map<std::string, double> terms;  ///< unweighted values, for logging
};

/// Weighted sum in a fixed order, skipping zero-weight terms entirely so the
/// computation (and its gradients) is identical to the simpler mode it
/// degenerates to.
inline LossBreakdown total_generator_loss(const LossConfig& cfg, const TermValues& v) {
    validate(cfg);
    LossBreakdown out;
    auto add = [&](const char* name, double w, const torch::Tensor& term) {
        if (w == 0.0) return;
        if (!term.defined())
            throw ConfigError(std::string("loss term '") + name +
                              "' has a nonzero weight but was not computed");
        out.terms.emplace(name, term.item<double>());
        auto weighted = term * w;
        out.total = out.total.defined() ? out.total + weighted : weighted;
    };
    add("adversarial", cfg.w_adversarial, v.adversarial);
    add("reconstruction", cfg.w_reconstruction, v.reconstruction);
    add("cycle", cfg.w_cycle, v.cycle);
    add("identity", cfg.w_identity, v.identity);
    add("image_prior", cfg.w_image_prior, v.image_prior);
    if (!out.total.defined()) out.total = torch::zeros({});
    return out;
}

}  // namespace petbench::losses
