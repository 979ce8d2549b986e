#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "petbench/common.hpp"
#include "petbench/dataset.hpp"
#include "petbench/volume.hpp"

namespace petbench::phantom {

struct Sphere {
    double cx_mm = 0.0, cy_mm = 0.0, cz_mm = 0.0;  ///< center, volume-origin coordinates
    double diameter_mm = 10.0;
    double uptake_suv = 4.0;
};

struct PhantomSpec {
    std::string id = "phantom";
    int nz = 16, ny = 64, nx = 64;
    Spacing spacing{2.0, 2.0, 2.0};
    double background_suv = 1.0;
    std::vector<Sphere> spheres;
    double counts_per_suv_per_second = 0.25;  ///< kappa, calibrates Poisson noise magnitude
    double frame_seconds = 90.0;              ///< full-time frame length
    std::uint64_t seed = 0;
};

inline void validate(const PhantomSpec& spec) {
    if (spec.nz <= 0 || spec.ny <= 0 || spec.nx <= 0) throw ShapeError("phantom grid is empty");
    if (!(spec.spacing.dx > 0 && spec.spacing.dy > 0 && spec.spacing.dz > 0))
        throw ValueError("phantom spacing must be positive");
    if (spec.background_suv < 0.0) throw ValueError("background uptake must be non-negative");
    if (!(spec.counts_per_suv_per_second > 0.0)) throw ValueError("count calibration must be positive");
    if (!(spec.frame_seconds > 0.0)) throw ValueError("frame time must be positive");
    const double ex = spec.nx * spec.spacing.dx;
    const double ey = spec.ny * spec.spacing.dy;
    const double ez = spec.nz * spec.spacing.dz;
    for (const Sphere& s : spec.spheres) {
        if (!(s.diameter_mm > 0.0)) throw ValueError("sphere diameter must be positive");
        if (s.uptake_suv < 0.0) throw ValueError("sphere uptake must be non-negative");
        const double r = s.diameter_mm / 2.0;
        if (s.cx_mm - r < 0.0 || s.cx_mm + r > ex || s.cy_mm - r < 0.0 || s.cy_mm + r > ey ||
            s.cz_mm - r < 0.0 || s.cz_mm + r > ez)
            throw ValueError("sphere extends beyond the phantom grid");
    }
    for (std::size_t i = 0; i < spec.spheres.size(); ++i)
        for (std::size_t j = i + 1; j < spec.spheres.size(); ++j) {
            const Sphere &a = spec.spheres[i], &b = spec.spheres[j];
            const double dx = a.cx_mm - b.cx_mm, dy = a.cy_mm - b.cy_mm, dz = a.cz_mm - b.cz_mm;
            const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (dist < (a.diameter_mm + b.diameter_mm) / 2.0)
                throw ValueError("phantom spheres overlap");
        }
}

/// Noiseless SUV phantom plus its ground-truth sphere mask. Membership is by
/// voxel center (center of voxel i at (i + 0.5) * spacing); no partial-volume
/// blur, so equal-uptake spheres share their noiseless SUVmax exactly.
inline std::pair<PETVolume, Mask3D> make_phantom(const PhantomSpec& spec) {
    validate(spec);
    PETVolume vol(spec.nz, spec.ny, spec.nx, spec.spacing);
    vol.frame_seconds = spec.frame_seconds;
    vol.units = Units::Suv;
    Mask3D mask(spec.nz, spec.ny, spec.nx);

    for (int z = 0; z < spec.nz; ++z) {
        const double cz = (z + 0.5) * spec.spacing.dz;
        for (int y = 0; y < spec.ny; ++y) {
            const double cy = (y + 0.5) * spec.spacing.dy;
            for (int x = 0; x < spec.nx; ++x) {
                const double cx = (x + 0.5) * spec.spacing.dx;
                float value = static_cast<float>(spec.background_suv);
                std::uint8_t inside = 0;
                for (const Sphere& s : spec.spheres) {
                    const double dx = cx - s.cx_mm, dy = cy - s.cy_mm, dz = cz - s.cz_mm;
                    const double r = s.diameter_mm / 2.0;
                    if (dx * dx + dy * dy + dz * dz <= r * r) {
                        value = static_cast<float>(s.uptake_suv);
                        inside = 1;
                        break;
                    }
                }
                vol.at(z, y, x) = value;
                mask.at(z, y, x) = inside;
            }
        }
    }
    return {std::move(vol), std::move(mask)};
}

/// Emulates a shorter acquisition by count-domain decimation. Per voxel the
/// full-time expected count is lambda = kappa * SUV * frame_seconds; a Poisson
/// draw at f * lambda is renormalized by 1 / (kappa * f * frame_seconds), so
/// the output is unbiased and its variance scales as 1/f.
inline PETVolume decimate(const PETVolume& ft, double fraction, double counts_per_suv_per_second,
                          std::uint64_t seed) {
    if (ft.units != Units::Suv) throw ValueError("decimation expects an SUV volume");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValueError("time fraction must lie in (0, 1]");
    if (!(counts_per_suv_per_second > 0.0)) throw ValueError("count calibration must be positive");
    validate(ft);

    const double kappa_t = counts_per_suv_per_second * ft.frame_seconds;
    const double denom = kappa_t * fraction;
    PETVolume out = ft;
    out.frame_seconds = ft.frame_seconds * fraction;
    std::mt19937_64 rng(seed);
    for (float& v : out.data) {
        const double lambda = fraction * kappa_t * double(v);
        if (lambda <= 0.0) {
            v = 0.0f;
            continue;
        }
        std::poisson_distribution<long long> draw(lambda);
        v = static_cast<float>(static_cast<double>(draw(rng)) / denom);
    }
    return out;
}

/// Randomized collection of sphere phantoms for benchmark datasets.
struct EnsembleSpec {
    int n_phantoms = 12;
    int nz = 12, ny = 64, nx = 64;
    Spacing spacing{2.0, 2.0, 2.0};
    double background_suv = 1.0;
    int min_spheres = 3, max_spheres = 5;
    double min_diameter_mm = 8.0, max_diameter_mm = 20.0;
    double min_uptake_suv = 2.5, max_uptake_suv = 6.0;
    double counts_per_suv_per_second = 0.25;
    double frame_seconds = 90.0;
    std::uint64_t seed = 0;
    std::string id_prefix = "phantom";
};

/// Draws non-overlapping spheres by rejection sampling; deterministic in the
/// ensemble seed, with one derived stream per phantom.
inline std::vector<PhantomSpec> random_phantoms(const EnsembleSpec& es) {
    if (es.n_phantoms <= 0) throw ValueError("ensemble needs at least one phantom");
    if (es.min_spheres < 0 || es.max_spheres < es.min_spheres)
        throw ValueError("invalid sphere count range");
    std::vector<PhantomSpec> specs;
    for (int p = 0; p < es.n_phantoms; ++p) {
        PhantomSpec spec;
        char suffix[8];
        std::snprintf(suffix, sizeof(suffix), "%03d", p);
        spec.id = es.id_prefix + "_" + suffix;
        spec.nz = es.nz;
        spec.ny = es.ny;
        spec.nx = es.nx;
        spec.spacing = es.spacing;
        spec.background_suv = es.background_suv;
        spec.counts_per_suv_per_second = es.counts_per_suv_per_second;
        spec.frame_seconds = es.frame_seconds;
        spec.seed = derive_seed(es.seed, spec.id);

        std::mt19937_64 rng(derive_seed(es.seed, spec.id + "/geometry"));
        std::uniform_int_distribution<int> n_spheres(es.min_spheres, es.max_spheres);
        std::uniform_real_distribution<double> diameter(es.min_diameter_mm, es.max_diameter_mm);
        std::uniform_real_distribution<double> uptake(es.min_uptake_suv, es.max_uptake_suv);
        const double ex = es.nx * es.spacing.dx;
        const double ey = es.ny * es.spacing.dy;
        const double ez = es.nz * es.spacing.dz;

        const int want = n_spheres(rng);
        int attempts = 0;
        while (static_cast<int>(spec.spheres.size()) < want && attempts < 1000) {
            ++attempts;
            Sphere s;
            s.diameter_mm = diameter(rng);
            s.uptake_suv = uptake(rng);
            const double r = s.diameter_mm / 2.0;
            if (2.0 * r >= std::min({ex, ey, ez})) continue;
            s.cx_mm = r + std::uniform_real_distribution<double>(0.0, ex - 2.0 * r)(rng);
            s.cy_mm = r + std::uniform_real_distribution<double>(0.0, ey - 2.0 * r)(rng);
            s.cz_mm = r + std::uniform_real_distribution<double>(0.0, ez - 2.0 * r)(rng);
            bool overlaps = false;
            for (const Sphere& other : spec.spheres) {
                const double dx = s.cx_mm - other.cx_mm;
                const double dy = s.cy_mm - other.cy_mm;
                const double dz = s.cz_mm - other.cz_mm;
                if (std::sqrt(dx * dx + dy * dy + dz * dz) <
                    (s.diameter_mm + other.diameter_mm) / 2.0 + es.spacing.dx)
                    overlaps = true;
            }
            if (!overlaps) spec.spheres.push_back(s);
        }
        validate(spec);
        specs.push_back(std::move(spec));
    }
    return specs;
}

/// One simulated study: the noiseless truth realized as an FT measurement plus
/// LT realizations at every requested fraction, all independent Poisson draws.
struct StudyRecord {
    PhantomSpec spec;
    PETVolume ft;
    std::map<double, PETVolume> lt_by_fraction;
    Mask3D truth_mask;
    Split split = Split::Train;
};

struct PhantomDataset {
    std::vector<StudyRecord> studies;
    std::vector<double> fractions;
};

struct SplitCounts {
    int train = 0, val = 0, test = 0;
};

/// FT = decimate(noiseless, 1) and LT = decimate(noiseless, f) from
/// independent per-(phantom, fraction) streams; split assignment is by
/// phantom, in order, so studies never straddle splits.
inline PhantomDataset make_paired_dataset(std::span<const PhantomSpec> specs,
                                          std::span<const double> fractions,
                                          const SplitCounts& splits, std::uint64_t seed) {
    if (specs.empty()) throw ValueError("no phantom specs given");
    if (fractions.empty()) throw ValueError("no time fractions given");
    if (splits.train + splits.val + splits.test != static_cast<int>(specs.size()))
        throw ConfigError("split counts do not add up to the phantom count");

    PhantomDataset ds;
    ds.fractions.assign(fractions.begin(), fractions.end());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const PhantomSpec& spec = specs[i];
        auto [noiseless, mask] = make_phantom(spec);
        StudyRecord rec;
        rec.spec = spec;
        rec.truth_mask = std::move(mask);
        rec.ft = decimate(noiseless, 1.0, spec.counts_per_suv_per_second,
                          derive_seed(seed, spec.id + "/ft"));
        for (double f : fractions) {
            char tag[32];
            std::snprintf(tag, sizeof(tag), "/lt@%.6f", f);
            rec.lt_by_fraction[f] = decimate(noiseless, f, spec.counts_per_suv_per_second,
                                             derive_seed(seed, spec.id + tag));
        }
        const int idx = static_cast<int>(i);
        rec.split = idx < splits.train            ? Split::Train
                    : idx < splits.train + splits.val ? Split::Val
                                                      : Split::Test;
        ds.studies.push_back(std::move(rec));
    }
    return ds;
}

/// Flattens one fraction of a phantom dataset into aligned 2-D slice pairs.
inline ImagePairDataset to_image_pairs(const PhantomDataset& ds, double fraction) {
    ImagePairDataset out;
    for (const StudyRecord& rec : ds.studies) {
        auto it = rec.lt_by_fraction.find(fraction);
        if (it == rec.lt_by_fraction.end())
            throw ConfigError("dataset does not contain the requested time fraction");
        out.split_of[rec.spec.id] = rec.split;
        for (int z = 0; z < rec.ft.nz; ++z) {
            ImagePair pair;
            pair.study_id = rec.spec.id;
            pair.slice_index = z;
            pair.lt_fraction = fraction;
            pair.units = Units::Suv;
            pair.ft = slice_of(rec.ft, z);
            pair.lt = slice_of(it->second, z);
            out.pairs.push_back(std::move(pair));
        }
    }
    validate(out);
    return out;
}

}  // namespace petbench::phantom
