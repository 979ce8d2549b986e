#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "petbench/common.hpp"

namespace petbench {

/// Voxel edge lengths in millimetres. dz defaults to the scanner's 3.75 mm slice thickness.
struct Spacing {
    double dx = 4.0;
    double dy = 4.0;
    double dz = 3.75;
};

enum class Units : std::uint8_t { Raw = 0, Suv = 1 };

/// Dense 3-D scalar grid, z-major layout: index = (z * ny + y) * nx + x.
struct Volume3D {
    int nz = 0, ny = 0, nx = 0;
    Spacing spacing{};
    std::vector<float> data;

    Volume3D() = default;
    Volume3D(int nz_, int ny_, int nx_, Spacing sp = {})
        : nz(nz_), ny(ny_), nx(nx_), spacing(sp),
          data(static_cast<std::size_t>(nz_) * ny_ * nx_, 0.0f) {
        if (nz_ <= 0 || ny_ <= 0 || nx_ <= 0) throw ShapeError("volume dimensions must be positive");
    }

    std::size_t size() const { return data.size(); }

    float& at(int z, int y, int x) {
        return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    float at(int z, int y, int x) const {
        return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }

    bool same_grid(const Volume3D& o) const {
        return nz == o.nz && ny == o.ny && nx == o.nx &&
               spacing.dx == o.spacing.dx && spacing.dy == o.spacing.dy && spacing.dz == o.spacing.dz;
    }
};

/// Emission volume plus the acquisition state needed to interpret its values.
struct PETVolume : Volume3D {
    using Volume3D::Volume3D;
    double frame_seconds = 90.0;  ///< acquisition time per bed position
    Units units = Units::Raw;
};

struct CTVolume : Volume3D {
    using Volume3D::Volume3D;
};

/// Binary segmentation on the same grid as its source volume.
struct Mask3D {
    int nz = 0, ny = 0, nx = 0;
    std::vector<std::uint8_t> data;

    Mask3D() = default;
    Mask3D(int nz_, int ny_, int nx_)
        : nz(nz_), ny(ny_), nx(nx_), data(static_cast<std::size_t>(nz_) * ny_ * nx_, 0) {
        if (nz_ <= 0 || ny_ <= 0 || nx_ <= 0) throw ShapeError("mask dimensions must be positive");
    }

    std::uint8_t& at(int z, int y, int x) {
        return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    std::uint8_t at(int z, int y, int x) const {
        return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
};

/// Patient / acquisition facts required for unit conversion.
struct StudyMetadata {
    std::string study_id;
    double weight_kg = 0.0;
    double total_dose_mbq = 0.0;
    double injection_to_scan_s = 0.0;  ///< elapsed time between injection and series start
    double half_life_s = 0.0;          ///< radionuclide half-life
};

inline void validate(const StudyMetadata& m) {
    if (!(m.weight_kg > 0.0)) throw ValueError("patient weight must be positive");
    if (!(m.total_dose_mbq > 0.0)) throw ValueError("injected dose must be positive");
    if (!(m.half_life_s > 0.0)) throw ValueError("half-life must be positive");
    if (m.injection_to_scan_s < 0.0) throw ValueError("injection-to-scan delay must be non-negative");
    if (!std::isfinite(m.weight_kg) || !std::isfinite(m.total_dose_mbq) ||
        !std::isfinite(m.half_life_s) || !std::isfinite(m.injection_to_scan_s))
        throw ValueError("study metadata must be finite");
}

/// Multiplicative factor turning raw voxel values into body-weight SUV.
/// Decay-corrects the injected dose to series start before normalising.
inline double suv_coefficient(const StudyMetadata& m) {
    validate(m);
    const double decay = std::pow(0.5, -m.injection_to_scan_s / m.half_life_s);
    return 2000.0 * m.weight_kg / m.total_dose_mbq * decay;
}

/// Returns a copy of `vol` scaled into SUV units. Rejects volumes already converted.
inline PETVolume apply_suv(const PETVolume& vol, const StudyMetadata& m) {
    if (vol.units == Units::Suv) throw ValueError("volume is already in SUV units");
    const double c = suv_coefficient(m);
    PETVolume out = vol;
    for (float& v : out.data) v = static_cast<float>(v * c);
    out.units = Units::Suv;
    return out;
}

inline void validate(const Volume3D& vol) {
    if (vol.nz <= 0 || vol.ny <= 0 || vol.nx <= 0) throw ShapeError("volume has empty dimensions");
    if (vol.data.size() != static_cast<std::size_t>(vol.nz) * vol.ny * vol.nx)
        throw ShapeError("volume buffer does not match its dimensions");
    if (!(vol.spacing.dx > 0.0 && vol.spacing.dy > 0.0 && vol.spacing.dz > 0.0))
        throw ValueError("voxel spacing must be positive");
    for (float v : vol.data)
        if (!std::isfinite(v)) throw ValueError("volume contains non-finite voxels");
}

inline void validate(const PETVolume& vol) {
    validate(static_cast<const Volume3D&>(vol));
    if (!(vol.frame_seconds > 0.0)) throw ValueError("frame time must be positive");
    if (vol.units == Units::Suv)
        for (float v : vol.data)
            if (v < 0.0f) throw ValueError("SUV volume contains negative voxels");
}

/// Single transverse slice; index = y * w + x.
struct Image2D {
    int h = 0, w = 0;
    std::vector<float> data;

    Image2D() = default;
    Image2D(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, 0.0f) {
        if (h_ <= 0 || w_ <= 0) throw ShapeError("image dimensions must be positive");
    }

    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return data.size(); }
};

/// One aligned training/evaluation sample: the same slice under both acquisitions.
struct ImagePair {
    Image2D lt;  ///< low-time acquisition
    Image2D ft;  ///< full-time acquisition
    std::string study_id;
    int slice_index = 0;
    double lt_fraction = 1.0;  ///< low-time frame length as a fraction of full time
    Units units = Units::Suv;
};

inline void validate(const ImagePair& p) {
    if (p.lt.h != p.ft.h || p.lt.w != p.ft.w)
        throw ShapeError("paired slices must share a grid");
    if (!(p.lt_fraction > 0.0 && p.lt_fraction <= 1.0))
        throw ValueError("time fraction must lie in (0, 1]");
}

inline Image2D slice_of(const Volume3D& vol, int z) {
    if (z < 0 || z >= vol.nz) throw ShapeError("slice index out of range");
    Image2D img(vol.ny, vol.nx);
    const std::size_t off = static_cast<std::size_t>(z) * vol.ny * vol.nx;
    std::copy_n(vol.data.begin() + off, img.size(), img.data.begin());
    return img;
}

inline void set_slice(Volume3D& vol, int z, const Image2D& img) {
    if (z < 0 || z >= vol.nz) throw ShapeError("slice index out of range");
    if (img.h != vol.ny || img.w != vol.nx) throw ShapeError("slice grid does not match volume");
    const std::size_t off = static_cast<std::size_t>(z) * vol.ny * vol.nx;
    std::copy(img.data.begin(), img.data.end(), vol.data.begin() + off);
}

namespace detail {

// Corner-aligned source coordinate for output index i of n_out samples over n_in.
inline double src_coord(int i, int n_out, int n_in) {
    if (n_out == 1) return 0.0;
    return static_cast<double>(i) * (n_in - 1) / static_cast<double>(n_out - 1);
}

}  // namespace detail

/// In-plane bilinear resampling (corner-aligned endpoints, no extrapolation).
/// The lerp form a + f*(b-a) keeps constants and the identity shape bit-exact.
inline Image2D resample_bilinear(const Image2D& img, int oh, int ow) {
    if (oh <= 0 || ow <= 0) throw ShapeError("resample target must be positive");
    Image2D out(oh, ow);
    for (int i = 0; i < oh; ++i) {
        const double sy = detail::src_coord(i, oh, img.h);
        const int y0 = std::min(static_cast<int>(sy), img.h - 1);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double fy = sy - y0;
        for (int j = 0; j < ow; ++j) {
            const double sx = detail::src_coord(j, ow, img.w);
            const int x0 = std::min(static_cast<int>(sx), img.w - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double fx = sx - x0;
            const double top = img.at(y0, x0) + fx * (double(img.at(y0, x1)) - img.at(y0, x0));
            const double bot = img.at(y1, x0) + fx * (double(img.at(y1, x1)) - img.at(y1, x0));
            out.at(i, j) = static_cast<float>(top + fy * (bot - top));
        }
    }
    return out;
}

/// Slice-wise bilinear resampling of a whole volume; spacing is rescaled to
/// keep the physical in-plane extent fixed.
template <typename V>
V resample_volume(const V& vol, int oh, int ow) {
    V out = vol;
    out.ny = oh;
    out.nx = ow;
    out.data.assign(static_cast<std::size_t>(vol.nz) * oh * ow, 0.0f);
    out.spacing.dy = vol.spacing.dy * (vol.ny > 1 && oh > 1 ? double(vol.ny - 1) / (oh - 1) : 1.0);
    out.spacing.dx = vol.spacing.dx * (vol.nx > 1 && ow > 1 ? double(vol.nx - 1) / (ow - 1) : 1.0);
    for (int z = 0; z < vol.nz; ++z) set_slice(out, z, resample_bilinear(slice_of(vol, z), oh, ow));
    return out;
}

/// In-plane nearest-neighbour resampling for label grids.
inline Mask3D resample_mask(const Mask3D& m, int oh, int ow) {
    if (oh <= 0 || ow <= 0) throw ShapeError("resample target must be positive");
    Mask3D out(m.nz, oh, ow);
    for (int z = 0; z < m.nz; ++z)
        for (int i = 0; i < oh; ++i) {
            const int sy = static_cast<int>(std::lround(detail::src_coord(i, oh, m.ny)));
            for (int j = 0; j < ow; ++j) {
                const int sx = static_cast<int>(std::lround(detail::src_coord(j, ow, m.nx)));
                out.at(z, i, j) = m.at(z, std::min(sy, m.ny - 1), std::min(sx, m.nx - 1));
            }
        }
    return out;
}

}  // namespace petbench
