#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "petbench/common.hpp"
#include "petbench/stats.hpp"
#include "petbench/volume.hpp"

namespace petbench::lesions {

struct Voxel {
    int z = 0, y = 0, x = 0;
    bool operator==(const Voxel&) const = default;
};

enum class SegmentStrategy : std::uint8_t { Threshold, External };

struct SegmentParams {
    SegmentStrategy strategy = SegmentStrategy::Threshold;
    double threshold_suv = 2.5;
    /// Mirror of the reference pipeline's 400x400 working resolution; off by
    /// default because phantom grids are already small.
    bool resample_to_400 = false;
};

/// Voxels strictly above the SUV threshold. The optional CT channel is part of
/// the interface for external segmenters and is ignored by the threshold rule.
inline Mask3D segment(const PETVolume& pet, const CTVolume* ct, const SegmentParams& params,
                      const Mask3D* external = nullptr) {
    (void)ct;
    if (params.strategy == SegmentStrategy::External) {
        if (external == nullptr) throw ValueError("external segmentation strategy needs a mask");
        if (external->nz != pet.nz || external->ny != pet.ny || external->nx != pet.nx)
            throw ShapeError("external mask grid does not match the PET volume");
        return *external;
    }
    PETVolume work = pet;
    if (params.resample_to_400 && (pet.ny != 400 || pet.nx != 400)) {
        work = resample_volume(pet, 400, 400);
        // threshold at working resolution, then bring labels back to the PET grid
        Mask3D hi(work.nz, work.ny, work.nx);
        for (std::size_t i = 0; i < work.data.size(); ++i)
            hi.data[i] = work.data[i] > params.threshold_suv ? 1 : 0;
        return resample_mask(hi, pet.ny, pet.nx);
    }
    Mask3D mask(pet.nz, pet.ny, pet.nx);
    for (std::size_t i = 0; i < pet.data.size(); ++i)
        mask.data[i] = pet.data[i] > params.threshold_suv ? 1 : 0;
    return mask;
}

/// Maximal 26-connected components, in first-seen scan order. Components
/// partition the mask: disjoint, and their union is exactly the foreground.
inline std::vector<std::vector<Voxel>> connected_components(const Mask3D& mask) {
    std::vector<std::vector<Voxel>> components;
    std::vector<std::uint8_t> seen(mask.data.size(), 0);
    std::vector<Voxel> queue;
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                const std::size_t idx = (static_cast<std::size_t>(z) * mask.ny + y) * mask.nx + x;
                if (!mask.data[idx] || seen[idx]) continue;
                std::vector<Voxel> comp;
                queue.clear();
                queue.push_back({z, y, x});
                seen[idx] = 1;
                while (!queue.empty()) {
                    const Voxel v = queue.back();
                    queue.pop_back();
                    comp.push_back(v);
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (dz == 0 && dy == 0 && dx == 0) continue;
                                const int nz = v.z + dz, ny = v.y + dy, nx = v.x + dx;
                                if (nz < 0 || nz >= mask.nz || ny < 0 || ny >= mask.ny ||
                                    nx < 0 || nx >= mask.nx)
                                    continue;
                                const std::size_t nidx =
                                    (static_cast<std::size_t>(nz) * mask.ny + ny) * mask.nx + nx;
                                if (!mask.data[nidx] || seen[nidx]) continue;
                                seen[nidx] = 1;
                                queue.push_back({nz, ny, nx});
                            }
                }
                components.push_back(std::move(comp));
            }
    return components;
}

inline double voxel_diagonal(const Spacing& sp) {
    return std::sqrt(sp.dx * sp.dx + sp.dy * sp.dy + sp.dz * sp.dz);
}

/// Maximum pairwise distance between voxel centers plus one voxel diagonal,
/// so even a single voxel has its physical extent. Interior voxels (all six
/// face neighbours present) cannot be extreme points and are pruned first.
inline double max_length(std::span<const Voxel> voxels, const Spacing& sp) {
    if (voxels.empty()) throw ValueError("max_length of an empty voxel set");
    // injective 21-bit packing per axis (coordinates stay far below 2^20)
    auto key = [](const Voxel& v) {
        constexpr std::uint64_t off = 1u << 20, m = (1u << 21) - 1;
        return (((v.z + off) & m) << 42) | (((v.y + off) & m) << 21) | ((v.x + off) & m);
    };
    std::unordered_set<std::uint64_t> present;
    present.reserve(voxels.size() * 2);
    for (const Voxel& v : voxels) present.insert(key(v));

    std::vector<Voxel> surface;
    for (const Voxel& v : voxels) {
        const bool interior = present.count(key({v.z + 1, v.y, v.x})) &&
                              present.count(key({v.z - 1, v.y, v.x})) &&
                              present.count(key({v.z, v.y + 1, v.x})) &&
                              present.count(key({v.z, v.y - 1, v.x})) &&
                              present.count(key({v.z, v.y, v.x + 1})) &&
                              present.count(key({v.z, v.y, v.x - 1}));
        if (!interior) surface.push_back(v);
    }

    double best_sq = 0.0;
    for (std::size_t i = 0; i < surface.size(); ++i)
        for (std::size_t j = i + 1; j < surface.size(); ++j) {
            const double dz = (surface[i].z - surface[j].z) * sp.dz;
            const double dy = (surface[i].y - surface[j].y) * sp.dy;
            const double dx = (surface[i].x - surface[j].x) * sp.dx;
            best_sq = std::max(best_sq, dx * dx + dy * dy + dz * dz);
        }
    return std::sqrt(best_sq) + voxel_diagonal(sp);
}

/// Precomputed voxel offsets whose centers lie within a sphere of `radius_mm`.
inline std::vector<Voxel> sphere_offsets(const Spacing& sp, double radius_mm) {
    if (!(radius_mm > 0.0)) throw ValueError("sphere radius must be positive");
    const int rz = static_cast<int>(radius_mm / sp.dz);
    const int ry = static_cast<int>(radius_mm / sp.dy);
    const int rx = static_cast<int>(radius_mm / sp.dx);
    std::vector<Voxel> offsets;
    for (int z = -rz; z <= rz; ++z)
        for (int y = -ry; y <= ry; ++y)
            for (int x = -rx; x <= rx; ++x) {
                const double d2 = (z * sp.dz) * (z * sp.dz) + (y * sp.dy) * (y * sp.dy) +
                                  (x * sp.dx) * (x * sp.dx);
                if (d2 <= radius_mm * radius_mm) offsets.push_back({z, y, x});
            }
    return offsets;
}

/// Radius of a 1 mL sphere in mm: (3*1000 / 4pi)^(1/3).
inline constexpr double kOneMlSphereRadiusMm = 6.20350490899;

struct MeasureOptions {
    bool with_peak = true;
    bool with_length = true;
    double peak_radius_mm = kOneMlSphereRadiusMm;
};

struct LesionRecord {
    int label = 0;  ///< 1-based component index
    std::vector<Voxel> voxels;
    double volume_ml = 0.0;
    double max_length_mm = 0.0;  ///< 0 when measured with with_length = false
    double suv_mean = 0.0;
    double suv_max = 0.0;
    double suv_peak = 0.0;  ///< 0 when measured with with_peak = false
};

/// SUV statistics of one voxel set measured on `vol`. suv_peak is the best
/// mean over a 1 mL sphere centered at any lesion voxel, clipped at borders.
inline LesionRecord measure_lesion(std::span<const Voxel> voxels, const PETVolume& vol,
                                   const MeasureOptions& opt = {}) {
    if (voxels.empty()) throw ValueError("lesion has no voxels");
    LesionRecord rec;
    rec.voxels.assign(voxels.begin(), voxels.end());
    rec.volume_ml = static_cast<double>(voxels.size()) * vol.spacing.dx * vol.spacing.dy *
                    vol.spacing.dz / 1000.0;

    std::vector<double> values(voxels.size());
    for (std::size_t i = 0; i < voxels.size(); ++i)
        values[i] = vol.at(voxels[i].z, voxels[i].y, voxels[i].x);
    rec.suv_mean = mean_of(values);
    rec.suv_max = *std::max_element(values.begin(), values.end());

    if (opt.with_length) rec.max_length_mm = max_length(voxels, vol.spacing);
    if (opt.with_peak) {
        const auto offsets = sphere_offsets(vol.spacing, opt.peak_radius_mm);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> in_sphere;
        for (const Voxel& c : voxels) {
            in_sphere.clear();
            for (const Voxel& o : offsets) {
                const int z = c.z + o.z, y = c.y + o.y, x = c.x + o.x;
                if (z < 0 || z >= vol.nz || y < 0 || y >= vol.ny || x < 0 || x >= vol.nx) continue;
                in_sphere.push_back(vol.at(z, y, x));
            }
            best = std::max(best, mean_of(in_sphere));
        }
        rec.suv_peak = best;
    }
    return rec;
}

inline std::vector<LesionRecord> measure_lesions(const std::vector<std::vector<Voxel>>& components,
                                                 const PETVolume& vol,
                                                 const MeasureOptions& opt = {}) {
    std::vector<LesionRecord> out;
    out.reserve(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) {
        LesionRecord rec = measure_lesion(components[i], vol, opt);
        rec.label = static_cast<int>(i) + 1;
        out.push_back(std::move(rec));
    }
    return out;
}

struct FilterParams {
    double min_length_mm = 7.0;
    double min_suv_mean = 0.5;
    /// Default: drop a lesion only when it is BOTH short AND faint (the
    /// conjunction reading). true switches to the OR reading.
    bool exclude_if_either = false;
};

inline bool lesion_excluded(const LesionRecord& rec, const FilterParams& fp) {
    const bool small = rec.max_length_mm < fp.min_length_mm;
    const bool faint = rec.suv_mean < fp.min_suv_mean;
    return fp.exclude_if_either ? (small || faint) : (small && faint);
}

inline std::vector<LesionRecord> lesion_filter(std::vector<LesionRecord> lesions,
                                               const FilterParams& fp = {}) {
    std::erase_if(lesions, [&](const LesionRecord& r) { return lesion_excluded(r, fp); });
    return lesions;
}

/// Paired SUV measurements of the SAME voxel sets on the reference and the
/// candidate volume; lesions are detected once on the reference only.
struct PairedSuv {
    std::vector<double> max_reference, max_candidate;
    std::vector<double> peak_reference, peak_candidate;
};

inline PairedSuv match_lesions(const std::vector<LesionRecord>& lesions_on_reference,
                               const PETVolume& reference, const PETVolume& candidate,
                               const MeasureOptions& opt = {}) {
    if (!reference.same_grid(candidate))
        throw ShapeError("candidate volume grid does not match the reference");
    PairedSuv paired;
    for (const LesionRecord& ref_rec : lesions_on_reference) {
        const LesionRecord cand_rec = measure_lesion(ref_rec.voxels, candidate, opt);
        paired.max_reference.push_back(ref_rec.suv_max);
        paired.max_candidate.push_back(cand_rec.suv_max);
        if (opt.with_peak) {
            paired.peak_reference.push_back(ref_rec.suv_peak);
            paired.peak_candidate.push_back(cand_rec.suv_peak);
        }
    }
    return paired;
}

struct AgreementStats {
    std::size_t n_lesions = 0;
    double median_bias = 0.0;
    double iqr = 0.0;
    double r_squared = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

inline AgreementStats agreement(std::span<const double> reference,
                                std::span<const double> candidate) {
    const auto ba = stats::bland_altman(reference, candidate);
    AgreementStats st;
    st.n_lesions = ba.n;
    st.median_bias = ba.median_bias;
    st.iqr = ba.iqr;
    st.r_squared = stats::ols_fit(reference, candidate).r_squared;
    const auto ci = stats::confidence_interval(ba);
    st.ci_lo = ci.first;
    st.ci_hi = ci.second;
    return st;
}

inline double dice(const Mask3D& a, const Mask3D& b) {
    if (a.nz != b.nz || a.ny != b.ny || a.nx != b.nx)
        throw ShapeError("dice inputs differ in shape");
    std::size_t inter = 0, total = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += (a.data[i] && b.data[i]) ? 1 : 0;
        total += (a.data[i] ? 1 : 0) + (b.data[i] ? 1 : 0);
    }
    if (total == 0) return 1.0;  // two empty masks agree perfectly
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

/// The full agreement pipeline: segment on the reference, split into
/// components, filter, then measure the same regions on both volumes.
struct SuvPipelineResult {
    std::size_t n_detected = 0;
    std::size_t n_retained = 0;
    AgreementStats suv_max;
    AgreementStats suv_peak;
    PairedSuv paired;
    std::vector<LesionRecord> retained;
};

inline SuvPipelineResult suv_pipeline(const PETVolume& reference, const PETVolume& candidate,
                                      const SegmentParams& seg = {}, const FilterParams& fp = {},
                                      const Mask3D* external = nullptr,
                                      const MeasureOptions& opt = {}) {
    const Mask3D mask = segment(reference, nullptr, seg, external);
    const auto components = connected_components(mask);
    SuvPipelineResult result;
    result.n_detected = components.size();
    auto lesions = lesion_filter(measure_lesions(components, reference, opt), fp);
    result.n_retained = lesions.size();
    if (lesions.empty()) throw ValueError("no lesions retained by the filter");
    result.paired = match_lesions(lesions, reference, candidate, opt);
    result.suv_max = agreement(result.paired.max_reference, result.paired.max_candidate);
    if (opt.with_peak)
        result.suv_peak = agreement(result.paired.peak_reference, result.paired.peak_candidate);
    result.retained = std::move(lesions);
    return result;
}

}  // namespace petbench::lesions
