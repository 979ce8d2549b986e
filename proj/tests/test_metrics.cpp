#include "petbench/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace petbench;
using namespace petbench::metrics;

namespace {

Image2D random_image(int h, int w, std::mt19937& rng, float lo = 0.0f, float hi = 8.0f) {
    Image2D img(h, w);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& v : img.data) v = dist(rng);
    return img;
}

double brute_rmse(const Image2D& a, const Image2D& b) {
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return static_cast<double>(std::sqrt(acc / a.size()));
}

// Literal windowed formula: per interior window, direct double loops for the
// means and (n-1)-normalized (co)variances, no separable shortcut.
double brute_ssim(const Image2D& a, const Image2D& b, double data_range, int win = 7) {
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    const int np = win * win;
    long double total = 0;
    int n_windows = 0;
    for (int y = 0; y + win <= a.h; ++y)
        for (int x = 0; x + win <= a.w; ++x) {
            double sa = 0, sb = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    sa += a.at(y + i, x + j);
                    sb += b.at(y + i, x + j);
                }
            const double ua = sa / np, ub = sb / np;
            double va = 0, vb = 0, vab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double da = a.at(y + i, x + j) - ua;
                    const double db = b.at(y + i, x + j) - ub;
                    va += da * da;
                    vb += db * db;
                    vab += da * db;
                }
            va /= np - 1;
            vb /= np - 1;
            vab /= np - 1;
            total += ((2 * ua * ub + c1) * (2 * vab + c2)) /
                     ((ua * ua + ub * ub + c1) * (va + vb + c2));
            ++n_windows;
        }
    return static_cast<double>(total / n_windows);
}

}  // namespace

TEST(Rmse, Basics) {
    std::mt19937 rng(3);
    const Image2D a = random_image(8, 8, rng);
    EXPECT_DOUBLE_EQ(rmse(a, a), 0.0);

    Image2D shifted = a;
    for (float& v : shifted.data) v += 2.0f;
    EXPECT_NEAR(rmse(a, shifted), 2.0, 1e-6);
    EXPECT_DOUBLE_EQ(rmse(a, shifted), rmse(shifted, a));

    EXPECT_THROW(rmse(a, Image2D(8, 9)), ShapeError);
}

TEST(Rmse, MatchesBruteForceOnRandomImages) {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 120; ++trial) {
        const int h = 7 + static_cast<int>(rng() % 10);
        const int w = 7 + static_cast<int>(rng() % 10);
        const Image2D a = random_image(h, w, rng);
        const Image2D b = random_image(h, w, rng);
        EXPECT_NEAR(rmse(a, b), brute_rmse(a, b), 1e-9);
    }
}

TEST(Rmse, TriangleInequalitySpotChecks) {
    std::mt19937 rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        const Image2D a = random_image(9, 9, rng);
        const Image2D b = random_image(9, 9, rng);
        const Image2D c = random_image(9, 9, rng);
        EXPECT_LE(rmse(a, c), rmse(a, b) + rmse(b, c) + 1e-12);
    }
}

TEST(Ssim, SelfSimilarityIsExactlyOne) {
    std::mt19937 rng(5);
    const Image2D a = random_image(16, 16, rng);
    EXPECT_EQ(ssim(a, a), 1.0);
    EXPECT_EQ(issim(a, a), 0.0);
}

TEST(Ssim, AntiCorrelatedStructureIsNegative) {
    // b mirrors a around the common mean: local means agree, covariance flips
    std::mt19937 rng(9);
    Image2D a = random_image(16, 16, rng, 3.0f, 5.0f);
    Image2D b = a;
    for (float& v : b.data) v = 8.0f - v;
    SsimParams params;
    params.data_range = 2.0;
    EXPECT_LT(ssim(a, b, params), 0.0);
}

TEST(Ssim, MatchesLiteralWindowedFormula) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 120; ++trial) {
        const int h = 7 + static_cast<int>(rng() % 10);
        const int w = 7 + static_cast<int>(rng() % 10);
        const Image2D a = random_image(h, w, rng);
        const Image2D b = random_image(h, w, rng);
        SsimParams params;  // range anchored to the second image
        const auto [mn, mx] = std::minmax_element(b.data.begin(), b.data.end());
        params.data_range = double(*mx) - double(*mn);
        EXPECT_NEAR(ssim(a, b, params), brute_ssim(a, b, params.data_range), 1e-6);
    }
}

TEST(Ssim, IssimStaysWithinBounds) {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const Image2D a = random_image(12, 12, rng, -3.0f, 3.0f);
        const Image2D b = random_image(12, 12, rng, -3.0f, 3.0f);
        const double v = issim(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 2.0);
    }
}

TEST(Ssim, DegenerateRangeStaysDefined) {
    Image2D a(8, 8);
    Image2D b(8, 8);
    for (float& v : a.data) v = 1.5f;
    for (float& v : b.data) v = 1.5f;
    EXPECT_DOUBLE_EQ(ssim(a, b), 1.0);  // identical constants still agree perfectly
    a.data[0] = 1.6f;
    EXPECT_TRUE(std::isfinite(ssim(a, b)));
}

TEST(Ssim, WindowMustFit) {
    EXPECT_THROW(ssim(Image2D(6, 8), Image2D(6, 8)), ShapeError);
    EXPECT_THROW(ssim(Image2D(8, 8), Image2D(8, 9)), ShapeError);
}

TEST(RelativeMetric, Endpoints) {
    EXPECT_EQ(relative_metric(0.0, 0.5), 100.0);  // fully denoised
    EXPECT_EQ(relative_metric(0.5, 0.5), 0.0);    // no change
    EXPECT_DOUBLE_EQ(relative_metric(0.75, 0.5), -50.0);
    EXPECT_THROW(relative_metric(0.1, 0.0), ValueError);
}

TEST(RelativeMetric, InvariantToCommonRescaling) {
    std::mt19937 rng(21);
    const Image2D lt = random_image(10, 10, rng);
    const Image2D ft = random_image(10, 10, rng);
    const Image2D den = random_image(10, 10, rng);
    const double rel = relative_metric(rmse(den, ft), rmse(lt, ft));

    auto scaled = [](const Image2D& img, float alpha) {
        Image2D out = img;
        for (float& v : out.data) v *= alpha;
        return out;
    };
    const double rel_scaled = relative_metric(rmse(scaled(den, 3.0f), scaled(ft, 3.0f)),
                                              rmse(scaled(lt, 3.0f), scaled(ft, 3.0f)));
    EXPECT_NEAR(rel, rel_scaled, 1e-4);
}

TEST(GaussianBaseline, ConstantImageUnchangedExactly) {
    Image2D img(32, 32);
    for (float& v : img.data) v = 4.75f;
    const Image2D out = gaussian_baseline(img, 2.5);
    for (float v : out.data) EXPECT_EQ(v, 4.75f);
}

TEST(GaussianBaseline, TinySigmaApproachesIdentity) {
    std::mt19937 rng(31);
    const Image2D img = random_image(16, 16, rng);
    const Image2D out = gaussian_baseline(img, 1e-3);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-4);
}

TEST(GaussianBaseline, ImpulseReproducesKernel) {
    const double sigma = 1.25;
    Image2D img(21, 21);
    img.at(10, 10) = 1.0f;
    const Image2D out = gaussian_baseline(img, sigma);

    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    // closed-form separable kernel; tolerance covers the float32 output storage
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            EXPECT_NEAR(out.at(10 + dy, 10 + dx), k[dy + radius] * k[dx + radius], 1e-7);
}

TEST(GaussianBaseline, SmoothsNoiseVariance) {
    std::mt19937 rng(37);
    const Image2D img = random_image(48, 48, rng);
    const Image2D out = gaussian_baseline(img, 2.5);
    auto var = [](const Image2D& im) {
        double m = 0;
        for (float v : im.data) m += v;
        m /= im.size();
        double s = 0;
        for (float v : im.data) s += (v - m) * (v - m);
        return s / im.size();
    };
    EXPECT_LT(var(out), 0.25 * var(img));
}

namespace {

std::vector<ImagePair> make_pairs(int n, std::mt19937& rng) {
    std::vector<ImagePair> pairs;
    for (int i = 0; i < n; ++i) {
        ImagePair p;
        p.study_id = "s" + std::to_string(i);
        p.slice_index = i;
        p.lt_fraction = 1.0 / 3.0;
        p.ft = random_image(16, 16, rng);
        p.lt = p.ft;
        std::normal_distribution<float> noise(0.0f, 0.5f);
        for (float& v : p.lt.data) v += noise(rng);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace

TEST(EvaluatePairs, IdentityDenoiserScoresZeroPercent) {
    std::mt19937 rng(51);
    const auto pairs = make_pairs(6, rng);
    const MetricReport report =
        evaluate_pairs([](const Image2D& lt) { return lt; }, pairs, "identity");
    EXPECT_EQ(report.rel_rmse.mean, 0.0);
    EXPECT_EQ(report.rel_issim.mean, 0.0);
    EXPECT_EQ(report.pairs.size(), 6u);
}

TEST(EvaluatePairs, OracleDenoiserScoresHundredPercent) {
    std::mt19937 rng(53);
    auto pairs = make_pairs(5, rng);
    // oracle: hand back the FT member for its own slice
    std::size_t cursor = 0;
    const MetricReport report = evaluate_pairs(
        [&](const Image2D&) { return pairs[cursor++].ft; }, pairs, "oracle");
    EXPECT_EQ(report.rel_rmse.mean, 100.0);
    EXPECT_EQ(report.rel_issim.mean, 100.0);
}

TEST(EvaluatePairs, AggregateIsMeanOfPerPairValues) {
    std::mt19937 rng(57);
    const auto pairs = make_pairs(7, rng);
    const MetricReport report =
        evaluate_pairs([](const Image2D& lt) { return gaussian_baseline(lt, 1.0); }, pairs, "gauss");
    double acc = 0;
    for (const auto& pm : report.pairs) acc += pm.rel_rmse;
    EXPECT_NEAR(report.rel_rmse.mean, acc / report.pairs.size(), 1e-12);
}

TEST(EvaluatePairs, ZeroBaselinePairsAreExcludedAndCounted) {
    std::mt19937 rng(61);
    auto pairs = make_pairs(4, rng);
    pairs.push_back(pairs.front());
    pairs.back().lt = pairs.back().ft;  // baseline metric 0: no improvement definable
    const MetricReport report =
        evaluate_pairs([](const Image2D& lt) { return lt; }, pairs, "identity");
    EXPECT_EQ(report.n_excluded, 1u);
    EXPECT_EQ(report.pairs.size(), 4u);
}

TEST(EvaluatePairs, NonFiniteOutputNamesTheStudy) {
    std::mt19937 rng(63);
    const auto pairs = make_pairs(2, rng);
    try {
        evaluate_pairs(
            [](const Image2D& lt) {
                Image2D bad = lt;
                bad.data[0] = std::numeric_limits<float>::quiet_NaN();
                return bad;
            },
            pairs, "broken");
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("s0"), std::string::npos);
    }
}
