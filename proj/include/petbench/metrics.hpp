#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "petbench/common.hpp"
#include "petbench/stats.hpp"
#include "petbench/volume.hpp"

namespace petbench::metrics {

/// Root-mean-square error, promoted to 64-bit.
inline double rmse(const Image2D& a, const Image2D& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("rmse inputs differ in shape");
    std::vector<double> sq(a.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        sq[i] = d * d;
    }
    return std::sqrt(mean_of(sq));
}

struct SsimParams {
    int window = 7;       ///< uniform window side; only fully interior windows contribute
    double k1 = 0.01;
    double k2 = 0.03;
    /// Intensity range L of the comparison. NaN = derive from the reference
    /// image (second argument) as max - min.
    double data_range = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Valid-window sums of a h*w field for a square window: horizontal pass then
// vertical pass, both plain 7-term additions (no subtraction cancellation).
inline std::vector<double> window_sums(const std::vector<double>& f, int h, int w, int win) {
    const int ow = w - win + 1;
    const int oh = h - win + 1;
    std::vector<double> horiz(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k) s += f[static_cast<std::size_t>(y) * w + x + k];
            horiz[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k) s += horiz[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

/// Mean local structural similarity over all fully interior windows, with the
/// common parameterization: uniform window, K1=0.01, K2=0.03, and unbiased
/// (n-1) covariance normalization. A zero data range is stabilized with a tiny
/// additive constant so the result stays defined; callers can flag that case.
inline double ssim(const Image2D& a, const Image2D& b, const SsimParams& params = {}) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("ssim inputs differ in shape");
    const int win = params.window;
    if (win < 2 || win % 2 == 0) throw ValueError("ssim window must be odd and >= 3");
    if (a.h < win || a.w < win) throw ShapeError("ssim window does not fit the image");

    const std::size_t n = a.size();
    std::vector<double> fa(n), fb(n), faa(n), fbb(n), fab(n);
    for (std::size_t i = 0; i < n; ++i) {
        fa[i] = a.data[i];
        fb[i] = b.data[i];
        faa[i] = fa[i] * fa[i];
        fbb[i] = fb[i] * fb[i];
        fab[i] = fa[i] * fb[i];
    }

    double range = params.data_range;
    if (std::isnan(range)) {
        const auto [mn, mx] = std::minmax_element(fb.begin(), fb.end());
        range = *mx - *mn;
    }
    double c1 = (params.k1 * range) * (params.k1 * range);
    double c2 = (params.k2 * range) * (params.k2 * range);
    if (range == 0.0) c1 = c2 = 1e-12;  // degenerate reference: keep the ratio defined

    const auto sa = detail::window_sums(fa, a.h, a.w, win);
    const auto sb = detail::window_sums(fb, a.h, a.w, win);
    const auto saa = detail::window_sums(faa, a.h, a.w, win);
    const auto sbb = detail::window_sums(fbb, a.h, a.w, win);
    const auto sab = detail::window_sums(fab, a.h, a.w, win);

    const double np = static_cast<double>(win) * win;
    const double cov_norm = np / (np - 1.0);
    std::vector<double> local(sa.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double ua = sa[i] / np;
        const double ub = sb[i] / np;
        const double va = cov_norm * (saa[i] / np - ua * ua);
        const double vb = cov_norm * (sbb[i] / np - ub * ub);
        const double vab = cov_norm * (sab[i] / np - ua * ub);
        const double a1 = 2.0 * ua * ub + c1;
        const double a2 = 2.0 * vab + c2;
        const double b1 = ua * ua + ub * ub + c1;
        const double b2 = va + vb + c2;
        local[i] = (a1 * a2) / (b1 * b2);
    }
    return mean_of(local);
}

inline double issim(const Image2D& a, const Image2D& b, const SsimParams& params = {}) {
    return 1.0 - ssim(a, b, params);
}

/// Fractional improvement over the raw LT input, in percent:
/// 100 * (1 - metric(denoised, ft) / metric(lt, ft)). 100% = fully denoised,
/// 0% = no change, negative = made things worse.
inline double relative_metric(double metric_denoised, double metric_lt) {
    if (!(metric_lt > 0.0))
        throw ValueError("baseline metric is zero; relative improvement undefined");
    return (1.0 - metric_denoised / metric_lt) * 100.0;
}

namespace detail {

// Half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2.
inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace detail

/// Normalized 1-D Gaussian taps at integer offsets, radius = round(4*sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw ValueError("gaussian sigma must be positive");
    const int radius = std::max(1, static_cast<int>(std::lround(4.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (double(i) * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Separable Gaussian smoothing with reflective borders. Written as
/// x_c + sum_k w_k * (x_k - x_c) so constant images pass through bit-exactly.
inline Image2D gaussian_baseline(const Image2D& img, double sigma = 2.5) {
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);

    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double center = img.at(y, x);
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] *
                       (double(img.at(y, detail::reflect_index(x + k, img.w))) - center);
            tmp[static_cast<std::size_t>(y) * img.w + x] = center + acc;
        }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double center = tmp[static_cast<std::size_t>(y) * img.w + x];
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] *
                       (tmp[static_cast<std::size_t>(detail::reflect_index(y + k, img.h)) * img.w + x] -
                        center);
            out[static_cast<std::size_t>(y) * img.w + x] = center + acc;
        }

    Image2D res(img.h, img.w);
    for (std::size_t i = 0; i < res.size(); ++i) res.data[i] = static_cast<float>(out[i]);
    return res;
}

/// Anything that maps an LT slice to a denoised slice of the same shape.
using Denoiser = std::function<Image2D(const Image2D&)>;

struct PairMetrics {
    std::string study_id;
    int slice_index = 0;
    double rmse = 0.0;
    double issim = 0.0;
    double rel_rmse = 0.0;   ///< percent
    double rel_issim = 0.0;  ///< percent
    bool degenerate_range = false;
};

struct Aggregate {
    double mean = 0.0;
    double median = 0.0;
    double iqr = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline Aggregate aggregate_of(std::span<const double> xs) {
    Aggregate agg;
    agg.mean = mean_of(xs);
    agg.median = stats::median(xs);
    agg.iqr = stats::iqr(xs);
    const auto ci = stats::confidence_interval(agg.median, agg.iqr);
    agg.ci_lo = ci.first;
    agg.ci_hi = ci.second;
    return agg;
}

struct MetricReport {
    std::string model_tag;
    double fraction = 1.0;
    std::vector<PairMetrics> pairs;
    Aggregate rmse;
    Aggregate issim;
    Aggregate rel_rmse;   ///< mean of per-pair relatives, never a ratio of means
    Aggregate rel_issim;
    std::size_t n_excluded = 0;  ///< pairs dropped for a zero-baseline metric
};

/// Runs `denoise` over every pair and aggregates per-pair metrics. Pairs whose
/// LT-vs-FT baseline metric is zero cannot define a relative improvement; they
/// are skipped and counted in `n_excluded`.
inline MetricReport evaluate_pairs(const Denoiser& denoise,
                                   std::span<const ImagePair> pairs,
                                   const std::string& model_tag,
                                   const SsimParams& ssim_params = {}) {
    if (pairs.empty()) throw ValueError("evaluation split is empty");
    MetricReport report;
    report.model_tag = model_tag;
    report.fraction = pairs.front().lt_fraction;

    std::vector<double> v_rmse, v_issim, v_rel_rmse, v_rel_issim;
    for (const ImagePair& pair : pairs) {
        validate(pair);
        const Image2D den = denoise(pair.lt);
        if (den.h != pair.ft.h || den.w != pair.ft.w)
            throw ShapeError("denoiser changed the slice shape for study " + pair.study_id);
        for (float v : den.data)
            if (!std::isfinite(v))
                throw NumericError("non-finite denoiser output for study " + pair.study_id +
                                   " slice " + std::to_string(pair.slice_index));

        SsimParams sp = ssim_params;
        const auto [mn, mx] = std::minmax_element(pair.ft.data.begin(), pair.ft.data.end());
        sp.data_range = double(*mx) - double(*mn);

        PairMetrics pm;
        pm.study_id = pair.study_id;
        pm.slice_index = pair.slice_index;
        pm.degenerate_range = (sp.data_range == 0.0);
        pm.rmse = rmse(den, pair.ft);
        pm.issim = issim(den, pair.ft, sp);
        const double base_rmse = rmse(pair.lt, pair.ft);
        const double base_issim = issim(pair.lt, pair.ft, sp);
        if (!(base_rmse > 0.0) || !(base_issim > 0.0)) {
            ++report.n_excluded;
            continue;
        }
        pm.rel_rmse = relative_metric(pm.rmse, base_rmse);
        pm.rel_issim = relative_metric(pm.issim, base_issim);
        report.pairs.push_back(pm);
        v_rmse.push_back(pm.rmse);
        v_issim.push_back(pm.issim);
        v_rel_rmse.push_back(pm.rel_rmse);
        v_rel_issim.push_back(pm.rel_issim);
    }
    if (report.pairs.empty()) throw ValueError("every pair was excluded from evaluation");
    report.rmse = aggregate_of(v_rmse);
    report.issim = aggregate_of(v_issim);
    report.rel_rmse = aggregate_of(v_rel_rmse);
    report.rel_issim = aggregate_of(v_rel_issim);
    return report;
}

}  // namespace petbench::metrics
