#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "petbench/common.hpp"
#include "petbench/dataset.hpp"
#include "petbench/losses.hpp"
#include "petbench/metrics.hpp"
#include "petbench/models.hpp"
#include "petbench/torch_bridge.hpp"
#include "petbench/volume.hpp"

namespace petbench::train {

namespace nn = torch::nn;

enum class Schedule { Cos, LinearDecayTail, ReduceOnPlateau, Constant };

inline std::string to_string(Schedule s) {
    switch (s) {
        case Schedule::Cos: return "cos";
        case Schedule::LinearDecayTail: return "linear_decay_tail";
        case Schedule::ReduceOnPlateau: return "reduce_on_plateau";
        case Schedule::Constant: return "constant";
    }
    throw ValueError("unknown schedule");
}

inline Schedule schedule_from_string(const std::string& s) {
    if (s == "cos") return Schedule::Cos;
    if (s == "linear_decay_tail") return Schedule::LinearDecayTail;
    if (s == "reduce_on_plateau") return Schedule::ReduceOnPlateau;
    if (s == "constant") return Schedule::Constant;
    throw ConfigError("unknown schedule: " + s);
}

struct TrainConfig {
    int epochs = 35;
    int batch_size = 32;
    double max_lr = 2e-4;
    Schedule schedule = Schedule::Cos;
    int plateau_epochs = 30;  ///< constant-lr phase of the linear-tail schedule
    int tail_epochs = 15;     ///< linear decay-to-zero phase
    double plateau_factor = 0.5;  ///< lr multiplier when validation stalls
    int plateau_patience = 5;     ///< stalled epochs tolerated before reducing
    double weight_decay = 0.0;
    double beta1 = 0.5;
    double beta2 = 0.999;
    bool augment_rotate = true;
    bool augment_flip = true;
    int patch_size = 0;  ///< 0 keeps full slices; otherwise random aligned crops
    std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(cfg.max_lr > 0)) throw ConfigError("max lr must be positive");
    if (cfg.schedule == Schedule::LinearDecayTail && (cfg.plateau_epochs < 0 || cfg.tail_epochs < 1))
        throw ConfigError("linear-tail schedule needs a non-negative plateau and a positive tail");
    if (cfg.schedule == Schedule::ReduceOnPlateau &&
        (cfg.plateau_patience < 1 || !(cfg.plateau_factor > 0) || cfg.plateau_factor >= 1))
        throw ConfigError("plateau schedule needs patience >= 1 and factor in (0, 1)");
    if (cfg.weight_decay < 0) throw ConfigError("weight decay must be non-negative");
    if (cfg.patch_size < 0) throw ConfigError("patch size must be non-negative");
}

/// Per-model training presets.
inline TrainConfig train_preset(const std::string& name) {
    TrainConfig cfg;
    if (name == "resnet_ed" || name == "pix2pix") {
        cfg.epochs = 35;
        cfg.batch_size = 32;
        cfg.max_lr = 2e-4;
        cfg.schedule = Schedule::Cos;
    } else if (name == "unet") {
        cfg.epochs = 35;
        cfg.batch_size = 32;
        cfg.max_lr = 2e-4;
        cfg.schedule = Schedule::Cos;
        cfg.weight_decay = 0.002;
    } else if (name == "swinir") {
        cfg.epochs = 80;
        cfg.batch_size = 32;
        cfg.max_lr = 0.00023;
        cfg.schedule = Schedule::ReduceOnPlateau;
        cfg.patch_size = 64;
    } else if (name == "cyclegan") {
        cfg.epochs = 45;
        cfg.batch_size = 16;
        cfg.max_lr = 1e-4;
        cfg.schedule = Schedule::LinearDecayTail;
        cfg.plateau_epochs = 30;
        cfg.tail_epochs = 15;
    } else {
        throw ConfigError("unknown training preset: " + name);
    }
    return cfg;
}

/// Stateless learning-rate schedules. The plateau schedule carries history and
/// lives in PlateauScheduler instead.
inline double lr_at(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw ValueError("negative epoch");
    switch (cfg.schedule) {
        case Schedule::Constant:
            if (epoch >= cfg.epochs) throw ValueError("epoch beyond the training budget");
            return cfg.max_lr;
        case Schedule::Cos:
            if (epoch > cfg.epochs) throw ValueError("epoch beyond the training budget");
            return cfg.max_lr * (1.0 + std::cos(M_PI * epoch / cfg.epochs)) / 2.0;
        case Schedule::LinearDecayTail: {
            const int total = cfg.plateau_epochs + cfg.tail_epochs;
            if (epoch > total) throw ValueError("epoch beyond the training budget");
            if (epoch <= cfg.plateau_epochs) return cfg.max_lr;
            return cfg.max_lr * static_cast<double>(total - epoch) / cfg.tail_epochs;
        }
        case Schedule::ReduceOnPlateau:
            throw ConfigError("reduce-on-plateau is stateful; drive it through PlateauScheduler");
    }
    throw ValueError("unknown schedule");
}

/// Halves the learning rate after `patience` consecutive epochs without a new
/// best validation score.
class PlateauScheduler {
  public:
    PlateauScheduler(double lr0, double factor, int patience)
        : lr_(lr0), factor_(factor), patience_(patience) {}

    double lr() const { return lr_; }

    void observe(double val_metric) {
        if (val_metric > best_) {
            best_ = val_metric;
            stalled_ = 0;
        } else if (++stalled_ > patience_) {
            lr_ *= factor_;
            stalled_ = 0;
        }
    }

  private:
    double lr_;
    double factor_;
    int patience_;
    int stalled_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
};

// --- aligned pair augmentation ----------------------------------------------

struct AugmentParams {
    double angle_deg = 0.0;
    bool flip = false;
    int crop_row = 0;
    int crop_col = 0;
    int crop_size = 0;  ///< 0 = no crop
};

namespace detail {

/// Rotation about the image centre with bilinear sampling and zero fill.
/// Right angles snap to exact permutations of the input pixels.
inline Image2D rotate_about_center(const Image2D& img, double angle_deg) {
    double a = std::fmod(angle_deg, 360.0);
    if (a < 0) a += 360.0;
    double c, s;
    if (a == 0.0) {
        return img;
    } else if (a == 90.0) {
        c = 0.0, s = 1.0;
    } else if (a == 180.0) {
        c = -1.0, s = 0.0;
    } else if (a == 270.0) {
        c = 0.0, s = -1.0;
    } else {
        c = std::cos(a * M_PI / 180.0);
        s = std::sin(a * M_PI / 180.0);
    }
    const int h = img.h, w = img.w;
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    Image2D out(h, w);
    for (int r = 0; r < h; ++r) {
        const double dy = r - cy;
        for (int col = 0; col < w; ++col) {
            const double dx = col - cx;
            const double sx = cx + c * dx + s * dy;
            const double sy = cy - s * dx + c * dy;
            float v = 0.0f;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            if (x0 >= -1 && x0 <= w - 1 && y0 >= -1 && y0 <= h - 1) {
                const double fx = sx - x0, fy = sy - y0;
                auto tap = [&](int rr, int cc) -> double {
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) return 0.0;
                    return img.at(rr, cc);
                };
                const double top = tap(y0, x0) + fx * (tap(y0, x0 + 1) - tap(y0, x0));
                const double bot = tap(y0 + 1, x0) + fx * (tap(y0 + 1, x0 + 1) - tap(y0 + 1, x0));
                v = static_cast<float>(top + fy * (bot - top));
            }
            out.at(r, col) = v;
        }
    }
    return out;
}

inline Image2D flip_horizontal(const Image2D& img) {
    Image2D out(img.h, img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) out.at(r, c) = img.at(r, img.w - 1 - c);
    return out;
}

inline Image2D crop(const Image2D& img, int r0, int c0, int size) {
    if (r0 < 0 || c0 < 0 || r0 + size > img.h || c0 + size > img.w)
        throw ValueError("crop window outside the image");
    Image2D out(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
    return out;
}

inline Image2D apply_one(const Image2D& img, const AugmentParams& p) {
    Image2D out = p.angle_deg == 0.0 ? img : rotate_about_center(img, p.angle_deg);
    if (p.flip) out = flip_horizontal(out);
    if (p.crop_size > 0) out = crop(out, p.crop_row, p.crop_col, p.crop_size);
    return out;
}

}  // namespace detail

/// Draws one transform; the caller applies it to both halves of a pair so
/// alignment is preserved by construction.
inline AugmentParams draw_augment(const TrainConfig& cfg, int height, int width,
                                  std::mt19937& rng) {
    AugmentParams p;
    if (cfg.augment_rotate) {
        if (height != width) throw ConfigError("rotation augmentation needs square slices");
        p.angle_deg = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
    }
    if (cfg.augment_flip) p.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    if (cfg.patch_size > 0) {
        if (cfg.patch_size > height || cfg.patch_size > width)
            throw ConfigError("patch size exceeds the slice size");
        if (cfg.patch_size < height || cfg.patch_size < width) {
            p.crop_size = cfg.patch_size;
            p.crop_row = std::uniform_int_distribution<int>(0, height - cfg.patch_size)(rng);
            p.crop_col = std::uniform_int_distribution<int>(0, width - cfg.patch_size)(rng);
        }
    }
    return p;
}

inline ImagePair apply_augment(const ImagePair& pair, const AugmentParams& p) {
    ImagePair out = pair;
    out.lt = detail::apply_one(pair.lt, p);
    out.ft = detail::apply_one(pair.ft, p);
    return out;
}

// --- run records -------------------------------------------------------------

struct EpochLog {
    double train_loss = 0.0;  ///< mean generator objective over the epoch's batches
    double val_ssim = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
    std::map<std::string, double> terms;       ///< last-batch unweighted breakdown
    std::map<std::string, double> disc_terms;  ///< discriminator losses, GAN modes only
};

struct RunRecord {
    TrainConfig train_cfg;
    losses::LossConfig loss_cfg;
    std::vector<EpochLog> epochs;
    double best_val_ssim = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = -1;
    double wall_seconds = 0.0;
    std::string checkpoint_path;  ///< filled in by whoever persists the run
};

namespace detail {

struct Batch {
    torch::Tensor lt;
    torch::Tensor ft;
};

inline Batch make_batch(const std::vector<const ImagePair*>& pairs,
                        const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                        const TrainConfig& cfg, std::mt19937& aug_rng, torch::Dtype dtype) {
    std::vector<torch::Tensor> lt, ft;
    lt.reserve(end - begin);
    ft.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        const ImagePair& src = *pairs[idx[k]];
        const bool wants_aug = cfg.augment_rotate || cfg.augment_flip || cfg.patch_size > 0;
        if (wants_aug) {
            const auto params = draw_augment(cfg, src.lt.h, src.lt.w, aug_rng);
            const ImagePair aug = apply_augment(src, params);
            lt.push_back(bridge::to_tensor(aug.lt));
            ft.push_back(bridge::to_tensor(aug.ft));
        } else {
            lt.push_back(bridge::to_tensor(src.lt));
            ft.push_back(bridge::to_tensor(src.ft));
        }
    }
    return {torch::cat(lt, 0).to(dtype), torch::cat(ft, 0).to(dtype)};
}

inline torch::Dtype model_dtype(const nn::Module& m) {
    auto params = m.parameters();
    if (params.empty()) return torch::kFloat32;
    return params.front().scalar_type();
}

inline void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

inline void guard_finite(const torch::Tensor& loss, int epoch, std::size_t step) {
    if (!torch::isfinite(loss).all().item<bool>())
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
}

/// Mean SSIM of the generator output against the full-time slices, computed on
/// whole slices regardless of the training crop size.
inline double validation_ssim(models::DenoiserModel& g,
                              const std::vector<const ImagePair*>& val) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    g->eval();
    torch::NoGradGuard ng;
    const auto dtype = model_dtype(*g);
    double acc = 0.0;
    for (const ImagePair* p : val) {
        auto out = g->forward(bridge::to_tensor(p->lt).to(dtype));
        acc += metrics::ssim(bridge::to_image(out.to(torch::kFloat32)), p->ft);
    }
    g->train();
    return acc / static_cast<double>(val.size());
}

struct BestTracker {
    double best = -std::numeric_limits<double>::infinity();
    int epoch = -1;
    std::vector<torch::Tensor> weights;

    void offer(double val, int e, const nn::Module& m) {
        if (std::isnan(val) || val > best) {
            // NaN means "no validation split": keep the latest weights instead
            if (!std::isnan(val)) best = val;
            epoch = e;
            weights.clear();
            for (const auto& p : m.parameters()) weights.push_back(p.detach().clone());
        }
    }

    void restore(nn::Module& m) const {
        if (weights.empty()) return;
        torch::NoGradGuard ng;
        auto params = m.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(weights[i]);
    }
};

}  // namespace detail

// --- trainers ----------------------------------------------------------------

/// Plain supervised regression toward the full-time slices.
inline RunRecord train_supervised(models::DenoiserModel& g, const ImagePairDataset& ds,
                                  const TrainConfig& tc, const losses::LossConfig& lc) {
    validate(tc);
    losses::validate(lc);
    if (lc.w_adversarial != 0 || lc.w_cycle != 0 || lc.w_identity != 0 || lc.w_image_prior != 0)
        throw ConfigError("the supervised trainer only handles the reconstruction term");

    const auto t0 = std::chrono::steady_clock::now();
    auto trainp = ds.subset(Split::Train);
    auto valp = ds.subset(Split::Val);
    if (trainp.empty()) throw ConfigError("training split is empty");

    const auto dtype = detail::model_dtype(*g);
    torch::optim::Adam opt(g->parameters(), torch::optim::AdamOptions(tc.max_lr)
                                                .betas({tc.beta1, tc.beta2})
                                                .weight_decay(tc.weight_decay));
    std::mt19937 order_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "batch_order")));
    std::mt19937 aug_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "augment")));
    PlateauScheduler plateau(tc.max_lr, tc.plateau_factor, tc.plateau_patience);

    RunRecord rec;
    rec.train_cfg = tc;
    rec.loss_cfg = lc;
    detail::BestTracker best;
    std::vector<std::size_t> idx(trainp.size());
    std::iota(idx.begin(), idx.end(), 0);

    g->train();
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr =
            tc.schedule == Schedule::ReduceOnPlateau ? plateau.lr() : lr_at(tc, epoch);
        detail::set_lr(opt, lr);
        std::shuffle(idx.begin(), idx.end(), order_rng);

        EpochLog log;
        log.lr = lr;
        std::size_t n_batches = 0;
        for (std::size_t b = 0; b < idx.size(); b += tc.batch_size) {
            const auto e = std::min(idx.size(), b + tc.batch_size);
            auto batch = detail::make_batch(trainp, idx, b, e, tc, aug_rng, dtype);
            losses::TermValues v;
            v.reconstruction = losses::mean_abs(g->forward(batch.lt), batch.ft);
            auto out = losses::total_generator_loss(lc, v);
            detail::guard_finite(out.total, epoch, n_batches);
            opt.zero_grad();
            out.total.backward();
            opt.step();
            log.train_loss += out.total.item<double>();
            log.terms = std::move(out.terms);
            ++n_batches;
        }
        log.train_loss /= static_cast<double>(n_batches);
        log.val_ssim = detail::validation_ssim(g, valp);
        if (tc.schedule == Schedule::ReduceOnPlateau) plateau.observe(log.val_ssim);
        best.offer(log.val_ssim, epoch, *g);
        rec.epochs.push_back(std::move(log));
    }
    best.restore(*g);
    rec.best_epoch = best.epoch;
    rec.best_val_ssim = rec.epochs[best.epoch >= 0 ? best.epoch : rec.epochs.size() - 1].val_ssim;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Conditional GAN: the discriminator judges (conditioning, difference) stacks.
/// With a zero adversarial weight the discriminator is never touched and the
/// run degenerates to the supervised trainer, update for update.
inline RunRecord train_pix2pix(models::DenoiserModel& g, models::PatchDiscriminator& d,
                               const ImagePairDataset& ds, const TrainConfig& tc,
                               const losses::LossConfig& lc) {
    validate(tc);
    losses::validate(lc);
    if (lc.mode != losses::GanMode::Pix2pix)
        throw ConfigError("the pix2pix trainer expects the pix2pix loss mode");

    const auto t0 = std::chrono::steady_clock::now();
    auto trainp = ds.subset(Split::Train);
    auto valp = ds.subset(Split::Val);
    if (trainp.empty()) throw ConfigError("training split is empty");
    const bool gan_active = lc.w_adversarial != 0.0;

    const auto dtype = detail::model_dtype(*g);
    torch::optim::Adam opt_g(g->parameters(), torch::optim::AdamOptions(tc.max_lr)
                                                  .betas({tc.beta1, tc.beta2})
                                                  .weight_decay(tc.weight_decay));
    std::unique_ptr<torch::optim::Adam> opt_d;
    if (gan_active)
        opt_d = std::make_unique<torch::optim::Adam>(
            d->parameters(),
            torch::optim::AdamOptions(tc.max_lr).betas({tc.beta1, tc.beta2}));

    std::mt19937 order_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "batch_order")));
    std::mt19937 aug_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "augment")));

    RunRecord rec;
    rec.train_cfg = tc;
    rec.loss_cfg = lc;
    detail::BestTracker best;
    std::vector<std::size_t> idx(trainp.size());
    std::iota(idx.begin(), idx.end(), 0);

    g->train();
    d->train();
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = lr_at(tc, epoch);
        detail::set_lr(opt_g, lr);
        if (opt_d) detail::set_lr(*opt_d, lr);
        std::shuffle(idx.begin(), idx.end(), order_rng);

        EpochLog log;
        log.lr = lr;
        std::size_t n_batches = 0;
        for (std::size_t b = 0; b < idx.size(); b += tc.batch_size) {
            const auto e = std::min(idx.size(), b + tc.batch_size);
            auto batch = detail::make_batch(trainp, idx, b, e, tc, aug_rng, dtype);
            auto fake = g->forward(batch.lt);

            if (gan_active) {
                auto d_loss = losses::lsgan_discriminator(
                    d->forward(losses::paired_disc_input(batch.lt, batch.ft)),
                    d->forward(losses::paired_disc_input(batch.lt, fake.detach())));
                detail::guard_finite(d_loss, epoch, n_batches);
                opt_d->zero_grad();
                d_loss.backward();
                opt_d->step();
                log.disc_terms["d_loss"] = d_loss.item<double>();
            }

            losses::TermValues v;
            if (gan_active)
                v.adversarial =
                    losses::lsgan_generator(d->forward(losses::paired_disc_input(batch.lt, fake)));
            if (lc.w_reconstruction != 0.0) v.reconstruction = losses::mean_abs(fake, batch.ft);
            auto out = losses::total_generator_loss(lc, v);
            detail::guard_finite(out.total, epoch, n_batches);
            opt_g.zero_grad();
            out.total.backward();
            opt_g.step();
            log.train_loss += out.total.item<double>();
            log.terms = std::move(out.terms);
            ++n_batches;
        }
        log.train_loss /= static_cast<double>(n_batches);
        log.val_ssim = detail::validation_ssim(g, valp);
        best.offer(log.val_ssim, epoch, *g);
        rec.epochs.push_back(std::move(log));
    }
    best.restore(*g);
    rec.best_epoch = best.epoch;
    rec.best_val_ssim = rec.epochs[best.epoch >= 0 ? best.epoch : rec.epochs.size() - 1].val_ssim;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Bidirectional GAN family. G maps LT→FT, F maps FT→LT; two patch
/// discriminators judge each domain. The adversarial/cycle/identity/image-prior
/// terms consume independently shuffled (unpaired) slices; the reconstruction
/// term of the supervised variant consumes the aligned pairs. Terms with zero
/// weight are skipped wholesale, including the networks they would need,
/// so the fully degenerate configuration replays the supervised trainer
/// update for update.
inline RunRecord train_cyclegan(models::DenoiserModel& g, models::DenoiserModel& f,
                                models::PatchDiscriminator& d_ft, models::PatchDiscriminator& d_lt,
                                const ImagePairDataset& ds, const TrainConfig& tc,
                                const losses::LossConfig& lc) {
    validate(tc);
    losses::validate(lc);
    if (!losses::is_cyclegan(lc.mode))
        throw ConfigError("the cyclegan trainer expects a cyclegan-family loss mode");

    const auto t0 = std::chrono::steady_clock::now();
    auto trainp = ds.subset(Split::Train);
    auto valp = ds.subset(Split::Val);
    if (trainp.empty()) throw ConfigError("training split is empty");

    const bool adv = lc.w_adversarial != 0.0;
    const bool cyc = lc.w_cycle != 0.0;
    const bool idt = lc.w_identity != 0.0;
    const bool imp = lc.w_image_prior != 0.0;
    const bool rec_term = lc.w_reconstruction != 0.0;
    const bool unpaired_needed = adv || cyc || idt;  // terms that consume FT-domain slices
    const bool f_needed = adv || cyc || idt;         // F participates in these terms only

    const auto dtype = detail::model_dtype(*g);
    std::vector<torch::Tensor> gen_params = g->parameters();
    if (f_needed)
        for (auto& p : f->parameters()) gen_params.push_back(p);
    torch::optim::Adam opt_g(gen_params, torch::optim::AdamOptions(tc.max_lr)
                                             .betas({tc.beta1, tc.beta2})
                                             .weight_decay(tc.weight_decay));
    std::unique_ptr<torch::optim::Adam> opt_d;
    if (adv) {
        std::vector<torch::Tensor> disc_params = d_ft->parameters();
        for (auto& p : d_lt->parameters()) disc_params.push_back(p);
        opt_d = std::make_unique<torch::optim::Adam>(
            disc_params, torch::optim::AdamOptions(tc.max_lr).betas({tc.beta1, tc.beta2}));
    }

    std::mt19937 order_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "batch_order")));
    std::mt19937 aug_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "augment")));
    std::mt19937 unpaired_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "unpaired_ft")));
    std::mt19937 unpaired_aug_rng(static_cast<std::uint32_t>(derive_seed(tc.seed, "unpaired_augment")));

    RunRecord rec;
    rec.train_cfg = tc;
    rec.loss_cfg = lc;
    detail::BestTracker best;
    std::vector<std::size_t> idx(trainp.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> ft_idx = idx;

    g->train();
    if (f_needed) f->train();
    if (adv) {
        d_ft->train();
        d_lt->train();
    }
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = lr_at(tc, epoch);
        detail::set_lr(opt_g, lr);
        if (opt_d) detail::set_lr(*opt_d, lr);
        std::shuffle(idx.begin(), idx.end(), order_rng);
        if (unpaired_needed) std::shuffle(ft_idx.begin(), ft_idx.end(), unpaired_rng);

        EpochLog log;
        log.lr = lr;
        std::size_t n_batches = 0;
        for (std::size_t b = 0; b < idx.size(); b += tc.batch_size) {
            const auto e = std::min(idx.size(), b + tc.batch_size);
            auto batch = detail::make_batch(trainp, idx, b, e, tc, aug_rng, dtype);
            torch::Tensor ft_un;
            if (unpaired_needed)
                ft_un = detail::make_batch(trainp, ft_idx, b, e, tc, unpaired_aug_rng, dtype).ft;

            losses::TermValues v;
            torch::Tensor fake_ft, fake_lt;
            if (adv || cyc || imp || rec_term) fake_ft = g->forward(batch.lt);
            if (adv || cyc) fake_lt = f->forward(ft_un);
            if (adv)
                v.adversarial = losses::lsgan_generator(d_ft->forward(fake_ft)) +
                                losses::lsgan_generator(d_lt->forward(fake_lt));
            if (cyc)
                v.cycle = losses::mean_abs(f->forward(fake_ft), batch.lt) +
                          losses::mean_abs(g->forward(fake_lt), ft_un);
            if (idt)
                v.identity = losses::mean_abs(g->forward(ft_un), ft_un) +
                             losses::mean_abs(f->forward(batch.lt), batch.lt);
            if (imp) v.image_prior = losses::mean_abs(fake_ft, batch.lt);
            if (rec_term) v.reconstruction = losses::mean_abs(fake_ft, batch.ft);

            auto out = losses::total_generator_loss(lc, v);
            detail::guard_finite(out.total, epoch, n_batches);
            opt_g.zero_grad();
            out.total.backward();
            opt_g.step();

            if (adv) {
                auto d_loss = losses::lsgan_discriminator(d_ft->forward(ft_un),
                                                          d_ft->forward(fake_ft.detach())) +
                              losses::lsgan_discriminator(d_lt->forward(batch.lt),
                                                          d_lt->forward(fake_lt.detach()));
                detail::guard_finite(d_loss, epoch, n_batches);
                opt_d->zero_grad();
                d_loss.backward();
                opt_d->step();
                log.disc_terms["d_loss"] = d_loss.item<double>();
            }

            log.train_loss += out.total.item<double>();
            log.terms = std::move(out.terms);
            ++n_batches;
        }
        log.train_loss /= static_cast<double>(n_batches);
        log.val_ssim = detail::validation_ssim(g, valp);
        best.offer(log.val_ssim, epoch, *g);
        rec.epochs.push_back(std::move(log));
    }
    best.restore(*g);
    rec.best_epoch = best.epoch;
    rec.best_val_ssim = rec.epochs[best.epoch >= 0 ? best.epoch : rec.epochs.size() - 1].val_ssim;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

// --- hyperparameter search ----------------------------------------------------

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct SearchSpace {
    std::map<std::string, ParamRange> ranges;
};

struct Trial {
    std::map<std::string, double> point;
    double objective = 0.0;
};

struct TuneResult {
    Trial best;
    std::vector<Trial> trials;
};

/// Random search maximizing the injected objective (the benchmark uses mean
/// validation SSIM).
inline TuneResult tune(const SearchSpace& space, int budget,
                       const std::function<double(const std::map<std::string, double>&)>& objective,
                       std::uint64_t seed) {
    if (budget < 1) throw ConfigError("tuning budget must be >= 1");
    if (space.ranges.empty()) throw ConfigError("empty search space");
    for (const auto& [name, r] : space.ranges)
        if (!(r.lo <= r.hi)) throw ConfigError("inverted range for parameter: " + name);

    std::mt19937_64 rng(derive_seed(seed, "tune"));
    TuneResult out;
    for (int t = 0; t < budget; ++t) {
        Trial trial;
        for (const auto& [name, r] : space.ranges)
            trial.point[name] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
        trial.objective = objective(trial.point);
        out.trials.push_back(trial);
        if (out.best.point.empty() || trial.objective > out.best.objective) out.best = trial;
    }
    return out;
}

}  // namespace petbench::train
