#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "petbench/common.hpp"

namespace petbench::stats {

/// Quantile with linear interpolation between order statistics:
/// position h = (n-1)*p, value = v[floor(h)] + frac(h) * (v[floor(h)+1] - v[floor(h)]).
inline double quantile(std::span<const double> xs, double p) {
    if (xs.empty()) throw ValueError("quantile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw ValueError("quantile level must lie in [0, 1]");
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double median(std::span<const double> xs) { return quantile(xs, 0.5); }

/// Interquartile range Q3 - Q1.
inline double iqr(std::span<const double> xs) {
    return quantile(xs, 0.75) - quantile(xs, 0.25);
}

inline double variance(std::span<const double> xs) {
    const double m = mean_of(xs);
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - m) * (xs[i] - m);
    return pairwise_sum(sq) / static_cast<double>(xs.size());
}

/// Median bias and IQR of paired differences d_i = candidate_i - reference_i.
struct BlandAltman {
    double median_bias = 0.0;
    double iqr = 0.0;
    std::size_t n = 0;
};

inline BlandAltman bland_altman(std::span<const double> reference,
                                std::span<const double> candidate) {
    if (reference.size() != candidate.size())
        throw ShapeError("paired samples differ in length");
    if (reference.size() < 2) throw ValueError("agreement statistics need at least 2 pairs");
    std::vector<double> d(reference.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = candidate[i] - reference[i];
    return BlandAltman{median(d), iqr(d), d.size()};
}

/// Interval spanned by median bias +/- 1.8 * IQR.
inline std::pair<double, double> confidence_interval(const BlandAltman& ba) {
    return {ba.median_bias - 1.8 * ba.iqr, ba.median_bias + 1.8 * ba.iqr};
}

inline std::pair<double, double> confidence_interval(double median_bias, double iqr_value) {
    return {median_bias - 1.8 * iqr_value, median_bias + 1.8 * iqr_value};
}

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

/// Ordinary least-squares fit of y on x with coefficient of determination.
/// x == y reproduces slope 1, intercept 0, R^2 = 1 exactly: the slope is a
/// ratio of two identical floating-point expressions, so every residual is 0.
inline OlsFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("paired samples differ in length");
    if (x.size() < 3) throw ValueError("regression needs at least 3 pairs");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    std::vector<double> cov_terms(x.size()), var_terms(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov_terms[i] = (x[i] - mx) * (y[i] - my);
        var_terms[i] = (x[i] - mx) * (x[i] - mx);
    }
    const double sxy = pairwise_sum(cov_terms);
    const double sxx = pairwise_sum(var_terms);
    if (sxx == 0.0) throw ValueError("regressor has zero variance");

    OlsFit fit;
    fit.n = x.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;

    std::vector<double> res_sq(x.size()), tot_sq(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pred = fit.slope * x[i] + fit.intercept;
        res_sq[i] = (y[i] - pred) * (y[i] - pred);
        tot_sq[i] = (y[i] - my) * (y[i] - my);
    }
    const double ss_res = pairwise_sum(res_sq);
    const double ss_tot = pairwise_sum(tot_sq);
    if (ss_tot == 0.0) throw ValueError("response has zero variance");
    fit.r_squared = 1.0 - ss_res / ss_tot;
    return fit;
}

inline double r_squared(std::span<const double> x, std::span<const double> y) {
    return ols_fit(x, y).r_squared;
}

}  // namespace petbench::stats
