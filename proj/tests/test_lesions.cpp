#include "petbench/lesions.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

using namespace petbench;
using namespace petbench::lesions;

namespace {

// Set-based flood fill — the reference answer for connected_components,
// structured nothing like the scan-order BFS in the library.
std::vector<std::set<std::array<int, 3>>> flood_components(const Mask3D& mask) {
    std::set<std::array<int, 3>> todo;
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x)
                if (mask.at(z, y, x)) todo.insert({z, y, x});

    std::vector<std::set<std::array<int, 3>>> comps;
    while (!todo.empty()) {
        std::set<std::array<int, 3>> comp;
        std::vector<std::array<int, 3>> stack{*todo.begin()};
        todo.erase(todo.begin());
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            comp.insert(v);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dz && !dy && !dx) continue;
                        std::array<int, 3> nb{v[0] + dz, v[1] + dy, v[2] + dx};
                        auto it = todo.find(nb);
                        if (it != todo.end()) {
                            todo.erase(it);
                            stack.push_back(nb);
                        }
                    }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

std::set<std::array<int, 3>> as_set(const std::vector<Voxel>& vs) {
    std::set<std::array<int, 3>> s;
    for (const Voxel& v : vs) s.insert({v.z, v.y, v.x});
    return s;
}

double brute_max_length(const std::vector<Voxel>& vs, const Spacing& sp) {
    double best = 0;
    for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t j = i + 1; j < vs.size(); ++j) {
            const double dz = (vs[i].z - vs[j].z) * sp.dz;
            const double dy = (vs[i].y - vs[j].y) * sp.dy;
            const double dx = (vs[i].x - vs[j].x) * sp.dx;
            best = std::max(best, std::sqrt(dz * dz + dy * dy + dx * dx));
        }
    return best + voxel_diagonal(sp);
}

PETVolume uniform_pet(int nz, int ny, int nx, float value, Spacing sp = {2.0, 2.0, 2.0}) {
    PETVolume pet(nz, ny, nx, sp);
    pet.units = Units::Suv;
    std::fill(pet.data.begin(), pet.data.end(), value);
    return pet;
}

}  // namespace

TEST(ConnectedComponents, MatchesFloodFillOnRandomMasks) {
    std::mt19937 rng(101);
    for (int trial = 0; trial < 120; ++trial) {
        Mask3D mask(6, 6, 6);
        std::bernoulli_distribution on(0.25);
        for (auto& v : mask.data) v = on(rng) ? 1 : 0;

        const auto got = connected_components(mask);
        const auto want = flood_components(mask);
        ASSERT_EQ(got.size(), want.size()) << "trial " << trial;

        std::vector<std::set<std::array<int, 3>>> got_sets;
        for (const auto& comp : got) got_sets.push_back(as_set(comp));
        for (const auto& w : want)
            EXPECT_NE(std::find(got_sets.begin(), got_sets.end(), w), got_sets.end())
                << "trial " << trial;
    }
}

TEST(ConnectedComponents, DiagonalTouchMergesUnderTwentySix) {
    Mask3D mask(3, 3, 3);
    mask.at(0, 0, 0) = 1;
    mask.at(1, 1, 1) = 1;  // body-diagonal neighbour
    EXPECT_EQ(connected_components(mask).size(), 1u);
}

TEST(MaxLength, SingleVoxelIsTheVoxelDiagonal) {
    const Spacing sp{2.0, 2.0, 2.0};
    const std::vector<Voxel> one{{0, 0, 0}};
    EXPECT_DOUBLE_EQ(max_length(one, sp), 2.0 * std::sqrt(3.0));
}

TEST(MaxLength, TwoVoxelHandValue) {
    const Spacing sp{1.0, 1.0, 1.0};
    // centers (0,0,0) and (0,3,4): distance 5, plus the unit-voxel diagonal
    const std::vector<Voxel> two{{0, 0, 0}, {0, 3, 4}};
    EXPECT_NEAR(max_length(two, sp), 5.0 + std::sqrt(3.0), 1e-12);
}

TEST(MaxLength, MatchesBruteForceOnRandomClusters) {
    std::mt19937 rng(113);
    for (int trial = 0; trial < 120; ++trial) {
        std::vector<Voxel> cluster;
        std::set<std::array<int, 3>> seen;
        std::uniform_int_distribution<int> coord(0, 9);
        while (cluster.size() < 20) {
            Voxel v{coord(rng), coord(rng), coord(rng)};
            if (seen.insert({v.z, v.y, v.x}).second) cluster.push_back(v);
        }
        const Spacing sp{4.0, 4.0, 3.75};
        EXPECT_NEAR(max_length(cluster, sp), brute_max_length(cluster, sp), 1e-9)
            << "trial " << trial;
    }
}

TEST(MaxLength, InteriorPruningKeepsExactnessOnSolidBlock) {
    std::vector<Voxel> block;
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) block.push_back({z, y, x});
    const Spacing sp{2.0, 2.0, 2.0};
    EXPECT_NEAR(max_length(block, sp), brute_max_length(block, sp), 1e-9);
}

TEST(Measure, MaxDominatesMeanAndPeak) {
    std::mt19937 rng(211);
    PETVolume pet = uniform_pet(8, 8, 8, 1.0f);
    std::uniform_real_distribution<float> dist(1.0f, 6.0f);
    for (float& v : pet.data) v = dist(rng);

    std::vector<Voxel> lesion;
    for (int z = 2; z < 6; ++z)
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x) lesion.push_back({z, y, x});
    const LesionRecord rec = measure_lesion(lesion, pet);
    EXPECT_GE(rec.suv_max, rec.suv_mean);
    EXPECT_GE(rec.suv_max, rec.suv_peak);
    EXPECT_DOUBLE_EQ(rec.volume_ml, 64 * 8.0 / 1000.0);
}

TEST(Measure, UniformUptakeMakesPeakEqualMax) {
    PETVolume pet = uniform_pet(12, 12, 12, 3.5f);
    std::vector<Voxel> lesion;
    for (int z = 3; z < 9; ++z)
        for (int y = 3; y < 9; ++y)
            for (int x = 3; x < 9; ++x) lesion.push_back({z, y, x});
    const LesionRecord rec = measure_lesion(lesion, pet);
    EXPECT_FLOAT_EQ(static_cast<float>(rec.suv_max), 3.5f);
    EXPECT_NEAR(rec.suv_peak, 3.5, 1e-6);
    EXPECT_NEAR(rec.suv_mean, 3.5, 1e-6);
}

TEST(Measure, PeakSphereAveragesOverTheHotspotNeighbourhood) {
    // One hot voxel inside a uniform background: the peak is the clipped
    // sphere mean centred somewhere in the lesion, computable by enumeration.
    PETVolume pet = uniform_pet(15, 15, 15, 1.0f);
    pet.at(7, 7, 7) = 10.0f;
    std::vector<Voxel> lesion;
    for (int z = 6; z <= 8; ++z)
        for (int y = 6; y <= 8; ++y)
            for (int x = 6; x <= 8; ++x) lesion.push_back({z, y, x});

    const auto offsets = sphere_offsets(pet.spacing, kOneMlSphereRadiusMm);
    double best = 0;
    for (const Voxel& c : lesion) {
        double acc = 0;
        int n = 0;
        for (const auto& o : offsets) {
            const int z = c.z + o.z, y = c.y + o.y, x = c.x + o.x;
            if (z < 0 || y < 0 || x < 0 || z >= pet.nz || y >= pet.ny || x >= pet.nx) continue;
            acc += pet.at(z, y, x);
            ++n;
        }
        if (n > 0) best = std::max(best, acc / n);
    }
    const LesionRecord rec = measure_lesion(lesion, pet);
    EXPECT_NEAR(rec.suv_peak, best, 1e-9);
    EXPECT_LT(rec.suv_peak, 10.0);  // averaging must dilute the single hot voxel
    EXPECT_GT(rec.suv_peak, 1.0);
}

TEST(Measure, OptionsSkipExpensiveFields) {
    PETVolume pet = uniform_pet(6, 6, 6, 2.0f);
    std::vector<Voxel> lesion{{2, 2, 2}, {2, 2, 3}};
    MeasureOptions opt;
    opt.with_peak = false;
    opt.with_length = false;
    const LesionRecord rec = measure_lesion(lesion, pet, opt);
    EXPECT_EQ(rec.suv_peak, 0.0);
    EXPECT_EQ(rec.max_length_mm, 0.0);
    EXPECT_FLOAT_EQ(static_cast<float>(rec.suv_max), 2.0f);
}

TEST(Filter, ConjunctionRule) {
    LesionRecord small_dim;  // fails both → excluded
    small_dim.max_length_mm = 6.0;
    small_dim.suv_mean = 0.4;
    LesionRecord small_hot;  // short but bright → retained
    small_hot.max_length_mm = 6.0;
    small_hot.suv_mean = 3.0;
    LesionRecord long_dim;  // dim but long → retained
    long_dim.max_length_mm = 20.0;
    long_dim.suv_mean = 0.4;

    const FilterParams params;
    EXPECT_TRUE(lesion_excluded(small_dim, params));
    EXPECT_FALSE(lesion_excluded(small_hot, params));
    EXPECT_FALSE(lesion_excluded(long_dim, params));

    FilterParams either = params;
    either.exclude_if_either = true;
    EXPECT_TRUE(lesion_excluded(small_dim, either));
    EXPECT_TRUE(lesion_excluded(small_hot, either));
    EXPECT_TRUE(lesion_excluded(long_dim, either));
}

TEST(Filter, RemovesOnlyExcludedRecords) {
    std::vector<LesionRecord> recs(3);
    recs[0].max_length_mm = 6.0;
    recs[0].suv_mean = 0.4;
    recs[1].max_length_mm = 12.0;
    recs[1].suv_mean = 0.4;
    recs[2].max_length_mm = 6.0;
    recs[2].suv_mean = 2.0;
    const auto kept = lesion_filter(recs, FilterParams{});
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_DOUBLE_EQ(kept[0].max_length_mm, 12.0);
    EXPECT_DOUBLE_EQ(kept[1].suv_mean, 2.0);
}

TEST(MatchLesions, TransplantsVoxelSetsOntoTheCandidate) {
    PETVolume ref = uniform_pet(8, 8, 8, 1.0f);
    for (int z = 2; z < 5; ++z)
        for (int y = 2; y < 5; ++y)
            for (int x = 2; x < 5; ++x) ref.at(z, y, x) = 4.0f;

    PETVolume cand = ref;
    for (float& v : cand.data) v += 0.1f;

    SegmentParams sp;
    const Mask3D mask = segment(ref, nullptr, sp, nullptr);
    const auto lesions_ref = measure_lesions(connected_components(mask), ref);
    ASSERT_EQ(lesions_ref.size(), 1u);

    const PairedSuv paired = match_lesions(lesions_ref, ref, cand);
    ASSERT_EQ(paired.max_reference.size(), 1u);
    EXPECT_FLOAT_EQ(static_cast<float>(paired.max_reference[0]), 4.0f);
    EXPECT_FLOAT_EQ(static_cast<float>(paired.max_candidate[0]), 4.1f);
    ASSERT_EQ(paired.peak_candidate.size(), 1u);
    EXPECT_NEAR(paired.peak_candidate[0] - paired.peak_reference[0], 0.1, 1e-5);
}

TEST(MatchLesions, RejectsMismatchedGrids) {
    PETVolume ref = uniform_pet(8, 8, 8, 1.0f);
    PETVolume cand = uniform_pet(8, 8, 9, 1.0f);
    EXPECT_THROW(match_lesions({}, ref, cand), ShapeError);
}

TEST(Agreement, IdenticalReadingsGiveExactZeroBiasAndUnitR2) {
    const std::vector<double> ref{2.5, 3.75, 5.0, 6.5, 9.25};
    const AgreementStats st = agreement(ref, ref);
    EXPECT_EQ(st.n_lesions, 5u);
    EXPECT_EQ(st.median_bias, 0.0);
    EXPECT_EQ(st.iqr, 0.0);
    EXPECT_EQ(st.r_squared, 1.0);
    EXPECT_EQ(st.ci_lo, 0.0);
    EXPECT_EQ(st.ci_hi, 0.0);
}

TEST(Agreement, ConstantOffsetShowsUpAsBias) {
    const std::vector<double> ref{2.0, 3.0, 4.0, 5.0, 6.0};
    std::vector<double> cand;
    for (double v : ref) cand.push_back(v - 0.5);
    const AgreementStats st = agreement(ref, cand);
    EXPECT_DOUBLE_EQ(st.median_bias, -0.5);
    EXPECT_DOUBLE_EQ(st.iqr, 0.0);
    EXPECT_DOUBLE_EQ(st.r_squared, 1.0);
    EXPECT_DOUBLE_EQ(st.ci_lo, -0.5);
    EXPECT_DOUBLE_EQ(st.ci_hi, -0.5);
}

TEST(Dice, HandValues) {
    Mask3D a(1, 4, 4), b(1, 4, 4);
    EXPECT_DOUBLE_EQ(dice(a, b), 1.0);  // both empty: perfect vacuous overlap

    a.data[0] = a.data[1] = 1;
    b.data[1] = b.data[2] = 1;
    EXPECT_DOUBLE_EQ(dice(a, b), 2.0 * 1 / (2 + 2));

    b.data = a.data;
    EXPECT_DOUBLE_EQ(dice(a, b), 1.0);

    EXPECT_THROW(dice(a, Mask3D(1, 4, 5)), ShapeError);
}

TEST(Segment, ThresholdIsStrict) {
    PETVolume pet = uniform_pet(4, 4, 4, 2.5f);
    pet.at(1, 1, 1) = 2.6f;
    SegmentParams sp;
    const Mask3D mask = segment(pet, nullptr, sp, nullptr);
    int n = 0;
    for (auto v : mask.data) n += v;
    EXPECT_EQ(n, 1);  // voxels exactly at the threshold stay out
    EXPECT_EQ(mask.at(1, 1, 1), 1);
}

TEST(Segment, ExternalMaskPassesThrough) {
    PETVolume pet = uniform_pet(4, 4, 4, 1.0f);
    Mask3D ext(4, 4, 4);
    ext.at(2, 2, 2) = 1;
    SegmentParams sp;
    sp.strategy = SegmentStrategy::External;
    const Mask3D mask = segment(pet, nullptr, sp, &ext);
    EXPECT_EQ(mask.data, ext.data);

    const Mask3D wrong(4, 4, 5);
    EXPECT_THROW(segment(pet, nullptr, sp, &wrong), ShapeError);
    EXPECT_THROW(segment(pet, nullptr, sp, nullptr), ValueError);
}

TEST(Segment, RecoversNoiselessSpheresExactly) {
    PETVolume pet = uniform_pet(12, 12, 12, 1.0f);
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                const double dz = (z - 5.5) * 2.0, dy = (y - 5.5) * 2.0, dx = (x - 5.5) * 2.0;
                if (dz * dz + dy * dy + dx * dx <= 36.0) pet.at(z, y, x) = 5.0f;
            }
    SegmentParams sp;
    const Mask3D mask = segment(pet, nullptr, sp, nullptr);
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                EXPECT_EQ(mask.at(z, y, x), pet.at(z, y, x) > 2.5f ? 1 : 0);
}

namespace {

// Three separated blocks with distinct uptakes so the regression is well posed.
PETVolume three_lesion_volume() {
    PETVolume pet = uniform_pet(18, 8, 8, 1.0f);
    const float uptake[3] = {5.0f, 7.0f, 9.0f};
    for (int k = 0; k < 3; ++k)
        for (int z = 1 + 6 * k; z < 4 + 6 * k; ++z)
            for (int y = 2; y < 5; ++y)
                for (int x = 2; x < 5; ++x) pet.at(z, y, x) = uptake[k];
    return pet;
}

}  // namespace

TEST(SuvPipeline, IdenticalVolumesAgreePerfectly) {
    const PETVolume pet = three_lesion_volume();
    const SuvPipelineResult res = suv_pipeline(pet, pet);
    EXPECT_EQ(res.n_detected, 3u);
    EXPECT_EQ(res.n_retained, 3u);
    ASSERT_EQ(res.suv_max.n_lesions, 3u);
    EXPECT_EQ(res.suv_max.median_bias, 0.0);
    EXPECT_EQ(res.suv_max.iqr, 0.0);
    EXPECT_EQ(res.suv_max.r_squared, 1.0);
    EXPECT_EQ(res.suv_peak.median_bias, 0.0);
    EXPECT_EQ(res.suv_peak.iqr, 0.0);
}

TEST(SuvPipeline, FilterCanLeaveNothingAndSaysSo) {
    PETVolume pet = uniform_pet(6, 6, 6, 0.1f);
    pet.at(3, 3, 3) = 0.3f;  // one dim speck: short and faint → removed
    SegmentParams seg;
    seg.threshold_suv = 0.2;
    EXPECT_THROW(suv_pipeline(pet, pet, seg), ValueError);
}
