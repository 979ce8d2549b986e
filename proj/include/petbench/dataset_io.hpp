#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "petbench/common.hpp"
#include "petbench/dataset.hpp"
#include "petbench/phantom.hpp"
#include "petbench/volume.hpp"

namespace petbench::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Slice and mask containers: little-endian binary with a 4-byte magic.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated file while reading " + what);
    return v;
}

inline void expect_magic(std::istream& is, const char magic[4], const std::string& path) {
    char got[4] = {};
    if (!is.read(got, 4) || std::string(got, 4) != std::string(magic, 4))
        throw IoError("bad magic in " + path);
}

}  // namespace detail

inline void write_slice(const fs::path& path, const Image2D& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write("PBSL", 4);
    detail::write_u32(os, 1);  // container version
    detail::write_u32(os, static_cast<std::uint32_t>(img.h));
    detail::write_u32(os, static_cast<std::uint32_t>(img.w));
    os.write(reinterpret_cast<const char*>(img.data.data()),
             static_cast<std::streamsize>(img.size() * sizeof(float)));
    if (!os) throw IoError("write failed: " + path.string());
}

inline Image2D read_slice(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("manifest references missing file: " + path.string());
    detail::expect_magic(is, "PBSL", path.string());
    if (detail::read_u32(is, path.string()) != 1)
        throw IoError("unsupported slice container version in " + path.string());
    const int h = static_cast<int>(detail::read_u32(is, path.string()));
    const int w = static_cast<int>(detail::read_u32(is, path.string()));
    if (h <= 0 || w <= 0 || h > (1 << 16) || w > (1 << 16))
        throw IoError("implausible slice shape in " + path.string());
    Image2D img(h, w);
    if (!is.read(reinterpret_cast<char*>(img.data.data()),
                 static_cast<std::streamsize>(img.size() * sizeof(float))))
        throw IoError("truncated slice data in " + path.string());
    return img;
}

inline void write_mask(const fs::path& path, const Mask3D& mask) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write("PBMK", 4);
    detail::write_u32(os, 1);
    detail::write_u32(os, static_cast<std::uint32_t>(mask.nz));
    detail::write_u32(os, static_cast<std::uint32_t>(mask.ny));
    detail::write_u32(os, static_cast<std::uint32_t>(mask.nx));
    os.write(reinterpret_cast<const char*>(mask.data.data()),
             static_cast<std::streamsize>(mask.data.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

inline Mask3D read_mask(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("manifest references missing file: " + path.string());
    detail::expect_magic(is, "PBMK", path.string());
    if (detail::read_u32(is, path.string()) != 1)
        throw IoError("unsupported mask container version in " + path.string());
    const int nz = static_cast<int>(detail::read_u32(is, path.string()));
    const int ny = static_cast<int>(detail::read_u32(is, path.string()));
    const int nx = static_cast<int>(detail::read_u32(is, path.string()));
    if (nz <= 0 || ny <= 0 || nx <= 0 || nz > (1 << 16) || ny > (1 << 16) || nx > (1 << 16))
        throw IoError("implausible mask shape in " + path.string());
    Mask3D mask(nz, ny, nx);
    if (!is.read(reinterpret_cast<char*>(mask.data.data()),
                 static_cast<std::streamsize>(mask.data.size())))
        throw IoError("truncated mask data in " + path.string());
    for (std::uint8_t v : mask.data)
        if (v > 1) throw IoError("mask is not binary: " + path.string());
    return mask;
}

// ---------------------------------------------------------------------------
// Dataset root layout:
//   manifest.json
//   studies/<id>/pet/ft_####.slc, lt<k>_####.slc   (k indexes manifest fractions)
//   studies/<id>/ct/####.slc                       (optional)
//   studies/<id>/meta.json
//   masks/<id>.bin                                 (optional ground truth)
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    Split split = Split::Train;
    double frame_seconds = 90.0;  ///< LT frame length for the first fraction
    int nz = 0;
};

struct DatasetManifest {
    int format_version = 1;
    std::vector<ManifestEntry> entries;
    std::vector<double> fractions;
    std::map<std::string, int> split_counts() const {
        std::map<std::string, int> counts{{"train", 0}, {"val", 0}, {"test", 0}};
        for (const auto& e : entries) ++counts[to_string(e.split)];
        return counts;
    }
};

/// Advisory single-writer guard: holds `<root>/.lock` for this scope.
class WriterLock {
  public:
    explicit WriterLock(const fs::path& root) : path_(root / ".lock") {
        if (fs::exists(path_))
            throw IoError("dataset root is locked by another writer: " + path_.string());
        std::ofstream(path_) << "locked\n";
    }
    ~WriterLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    WriterLock(const WriterLock&) = delete;
    WriterLock& operator=(const WriterLock&) = delete;

  private:
    fs::path path_;
};

namespace detail {

inline std::string slice_name(const std::string& stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%04d.slc", index);
    return stem + buf;
}

inline void check_disjoint_splits(const std::vector<ManifestEntry>& entries) {
    std::set<std::string> seen;
    for (const auto& e : entries)
        if (!seen.insert(e.id).second)
            throw IoError("study appears more than once in the manifest: " + e.id);
}

inline json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["fractions"] = m.fractions;
    j["studies"] = json::array();
    for (const auto& e : m.entries)
        j["studies"].push_back({{"id", e.id},
                                {"split", to_string(e.split)},
                                {"frame_seconds", e.frame_seconds},
                                {"nz", e.nz}});
    auto counts = m.split_counts();
    j["counts"] = counts;
    return j;
}

inline DatasetManifest manifest_from_json(const json& j, const std::string& where) {
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        m.fractions = j.at("fractions").get<std::vector<double>>();
        for (const auto& s : j.at("studies")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            e.split = split_from_string(s.at("split").get<std::string>());
            e.frame_seconds = s.at("frame_seconds").get<double>();
            e.nz = s.at("nz").get<int>();
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw IoError("malformed manifest " + where + ": " + ex.what());
    }
    check_disjoint_splits(m.entries);
    return m;
}

inline json write_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
    return j;
}

inline json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("missing file: " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& ex) {
        throw IoError("malformed JSON in " + path.string() + ": " + ex.what());
    }
}

}  // namespace detail

/// Persists a simulated dataset: per-study FT/LT slice stacks, ground-truth
/// masks, per-study geometry sidecars, and the manifest.
inline DatasetManifest save_dataset(const phantom::PhantomDataset& ds, const fs::path& root) {
    if (ds.studies.empty()) throw ValueError("refusing to save an empty dataset");
    fs::create_directories(root);
    WriterLock lock(root);
    fs::create_directories(root / "studies");
    fs::create_directories(root / "masks");

    DatasetManifest manifest;
    manifest.fractions = ds.fractions;
    for (const auto& rec : ds.studies) {
        const fs::path study_dir = root / "studies" / rec.spec.id;
        fs::create_directories(study_dir / "pet");

        json meta;
        meta["study_id"] = rec.spec.id;
        meta["grid"] = {{"nz", rec.ft.nz},   {"ny", rec.ft.ny},   {"nx", rec.ft.nx},
                        {"dx", rec.ft.spacing.dx}, {"dy", rec.ft.spacing.dy},
                        {"dz", rec.ft.spacing.dz}};
        meta["ft_frame_seconds"] = rec.ft.frame_seconds;
        meta["fractions"] = ds.fractions;
        meta["counts_per_suv_per_second"] = rec.spec.counts_per_suv_per_second;
        meta["units"] = "suv";
        detail::write_json_file(study_dir / "meta.json", meta);

        for (int z = 0; z < rec.ft.nz; ++z)
            write_slice(study_dir / "pet" / detail::slice_name("ft", z), slice_of(rec.ft, z));
        for (std::size_t k = 0; k < ds.fractions.size(); ++k) {
            const auto it = rec.lt_by_fraction.find(ds.fractions[k]);
            if (it == rec.lt_by_fraction.end())
                throw ConfigError("study " + rec.spec.id + " lacks a fraction listed in the dataset");
            for (int z = 0; z < it->second.nz; ++z)
                write_slice(study_dir / "pet" / detail::slice_name("lt" + std::to_string(k), z),
                            slice_of(it->second, z));
        }
        if (rec.truth_mask.nz > 0) write_mask(root / "masks" / (rec.spec.id + ".bin"), rec.truth_mask);

        ManifestEntry entry;
        entry.id = rec.spec.id;
        entry.split = rec.split;
        entry.nz = rec.ft.nz;
        entry.frame_seconds =
            ds.fractions.empty() ? rec.ft.frame_seconds : rec.ft.frame_seconds * ds.fractions[0];
        manifest.entries.push_back(entry);
    }
    detail::check_disjoint_splits(manifest.entries);
    detail::write_json_file(root / "manifest.json", detail::manifest_to_json(manifest));
    return manifest;
}

/// Persists a bare slice-pair dataset through the same layout (one fraction).
inline DatasetManifest save_dataset(const ImagePairDataset& ds, const fs::path& root) {
    validate(ds);
    phantom::PhantomDataset full;
    const double fraction = ds.pairs.front().lt_fraction;
    full.fractions = {fraction};

    // group pairs by study, in first-seen order, preserving slice order
    std::vector<std::string> order;
    std::map<std::string, std::vector<const ImagePair*>> by_study;
    for (const ImagePair& p : ds.pairs) {
        if (p.lt_fraction != fraction)
            throw ConfigError("slice-pair datasets with mixed fractions are not supported");
        if (!by_study.count(p.study_id)) order.push_back(p.study_id);
        by_study[p.study_id].push_back(&p);
    }
    for (const std::string& id : order) {
        const auto& slices = by_study[id];
        phantom::StudyRecord rec;
        rec.spec.id = id;
        rec.split = ds.split_of.at(id);
        const int h = slices.front()->ft.h, w = slices.front()->ft.w;
        PETVolume ft(static_cast<int>(slices.size()), h, w);
        ft.units = Units::Suv;
        PETVolume lt = ft;
        lt.frame_seconds = ft.frame_seconds * fraction;
        for (std::size_t z = 0; z < slices.size(); ++z) {
            set_slice(ft, static_cast<int>(z), slices[z]->ft);
            set_slice(lt, static_cast<int>(z), slices[z]->lt);
        }
        rec.ft = std::move(ft);
        rec.lt_by_fraction[fraction] = std::move(lt);
        rec.truth_mask = Mask3D();  // none for bare pair datasets
        full.studies.push_back(std::move(rec));
    }
    return save_dataset(full, root);
}

inline DatasetManifest load_manifest(const fs::path& root) {
    return detail::manifest_from_json(detail::read_json_file(root / "manifest.json"),
                                      (root / "manifest.json").string());
}

namespace detail {

inline PETVolume load_stack(const fs::path& study_dir, const std::string& stem, const json& meta,
                            double frame_seconds) {
    const auto& grid = meta.at("grid");
    PETVolume vol(grid.at("nz").get<int>(), grid.at("ny").get<int>(), grid.at("nx").get<int>(),
                  Spacing{grid.at("dx").get<double>(), grid.at("dy").get<double>(),
                          grid.at("dz").get<double>()});
    vol.frame_seconds = frame_seconds;
    vol.units = meta.at("units").get<std::string>() == "suv" ? Units::Suv : Units::Raw;
    for (int z = 0; z < vol.nz; ++z) {
        const Image2D img = read_slice(study_dir / "pet" / slice_name(stem, z));
        if (img.h != vol.ny || img.w != vol.nx)
            throw IoError("slice shape mismatch in " + study_dir.string());
        set_slice(vol, z, img);
    }
    return vol;
}

}  // namespace detail

/// Loads the full dataset back: volumes per fraction, masks when present.
inline phantom::PhantomDataset load_dataset(const fs::path& root) {
    const DatasetManifest manifest = load_manifest(root);
    phantom::PhantomDataset ds;
    ds.fractions = manifest.fractions;
    for (const auto& entry : manifest.entries) {
        const fs::path study_dir = root / "studies" / entry.id;
        const json meta = detail::read_json_file(study_dir / "meta.json");
        phantom::StudyRecord rec;
        rec.spec.id = entry.id;
        rec.split = entry.split;
        if (meta.contains("counts_per_suv_per_second"))
            rec.spec.counts_per_suv_per_second = meta["counts_per_suv_per_second"].get<double>();
        const double ft_frame = meta.at("ft_frame_seconds").get<double>();
        rec.ft = detail::load_stack(study_dir, "ft", meta, ft_frame);
        for (std::size_t k = 0; k < manifest.fractions.size(); ++k)
            rec.lt_by_fraction[manifest.fractions[k]] = detail::load_stack(
                study_dir, "lt" + std::to_string(k), meta, ft_frame * manifest.fractions[k]);
        const fs::path mask_path = root / "masks" / (entry.id + ".bin");
        if (fs::exists(mask_path)) rec.truth_mask = read_mask(mask_path);
        ds.studies.push_back(std::move(rec));
    }
    return ds;
}

/// 2-D training view of a stored dataset at one fraction (default: the first).
inline ImagePairDataset load_pairs(const fs::path& root,
                                   std::optional<double> fraction = std::nullopt) {
    const phantom::PhantomDataset ds = load_dataset(root);
    if (ds.fractions.empty()) throw IoError("dataset has no fractions: " + root.string());
    return phantom::to_image_pairs(ds, fraction.value_or(ds.fractions.front()));
}

/// Aligns an external mask to a reference volume: in-plane nearest-neighbour
/// resampling; slice counts must already agree.
inline Mask3D import_mask(const fs::path& path, const PETVolume& reference) {
    Mask3D mask = read_mask(path);
    if (mask.nz != reference.nz)
        throw ShapeError("mask slice count does not match the reference volume");
    if (mask.ny != reference.ny || mask.nx != reference.nx)
        mask = resample_mask(mask, reference.ny, reference.nx);
    return mask;
}

// ---------------------------------------------------------------------------
// Study archives: a portable stand-in for anonymized DICOM exports. One
// directory per study with a tag map in header.json and per-slice files.
// Doses are recorded in MBq, times as DICOM-style HHMMSS[.frac] strings.
// ---------------------------------------------------------------------------

struct LoadedStudy {
    PETVolume pet;  ///< RAW units
    std::optional<CTVolume> ct;
    StudyMetadata meta;
};

namespace detail {

inline double parse_tm(const std::string& s, const std::string& tag) {
    if (s.size() < 6) throw MetadataError(tag, "time must be HHMMSS[.frac]");
    for (int i = 0; i < 6; ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw MetadataError(tag, "time must be HHMMSS[.frac]");
    const int hh = std::stoi(s.substr(0, 2));
    const int mm = std::stoi(s.substr(2, 2));
    const double ss = std::stod(s.substr(4));
    if (hh > 23 || mm > 59 || ss >= 60.0) throw MetadataError(tag, "time out of range");
    return hh * 3600.0 + mm * 60.0 + ss;
}

inline std::string require_tag(const json& header, const std::string& tag) {
    if (!header.contains(tag)) throw MetadataError(tag);
    if (header[tag].is_string()) return header[tag].get<std::string>();
    return header[tag].dump();
}

inline double require_number(const json& header, const std::string& tag) {
    if (!header.contains(tag)) throw MetadataError(tag);
    try {
        if (header[tag].is_string()) return std::stod(header[tag].get<std::string>());
        return header[tag].get<double>();
    } catch (const std::exception&) {
        throw MetadataError(tag, "not a number");
    }
}

}  // namespace detail

/// Reads a study archive: assembles the PET (and optional CT) volume in slice
/// order and extracts the normalization metadata. The delay between injection
/// and series start wraps across midnight and is clamped at zero.
inline LoadedStudy load_study(const fs::path& archive) {
    const json header = detail::read_json_file(archive / "header.json");

    LoadedStudy study;
    study.meta.study_id = archive.filename().string();
    study.meta.weight_kg = detail::require_number(header, "PatientWeight");
    study.meta.total_dose_mbq = detail::require_number(header, "RadionuclideTotalDose");
    study.meta.half_life_s = detail::require_number(header, "RadionuclideHalfLife");
    const double t_injection =
        detail::parse_tm(detail::require_tag(header, "RadiopharmaceuticalStartTime"),
                         "RadiopharmaceuticalStartTime");
    const double t_series = detail::parse_tm(detail::require_tag(header, "SeriesTime"), "SeriesTime");
    double delta = t_series - t_injection;
    if (delta < 0.0) delta += 86400.0;  // series started after a midnight rollover
    study.meta.injection_to_scan_s = std::max(0.0, delta);
    validate(study.meta);

    Spacing spacing;
    if (header.contains("PixelSpacing")) {
        spacing.dx = header["PixelSpacing"].at(0).get<double>();
        spacing.dy = header["PixelSpacing"].at(1).get<double>();
    }
    if (header.contains("SliceThickness")) spacing.dz = header["SliceThickness"].get<double>();
    const double frame_seconds =
        header.contains("FrameSeconds") ? header["FrameSeconds"].get<double>() : 90.0;

    auto load_series = [&](const fs::path& dir) -> std::vector<Image2D> {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".slc") files.push_back(e.path());
        std::sort(files.begin(), files.end());  // names encode axial order
        std::vector<Image2D> slices;
        for (const auto& f : files) slices.push_back(read_slice(f));
        for (const auto& s : slices)
            if (s.h != slices.front().h || s.w != slices.front().w)
                throw IoError("corrupt series: inconsistent slice shapes in " + dir.string());
        return slices;
    };

    const fs::path pet_dir = archive / "pet";
    if (!fs::exists(pet_dir)) throw IoError("archive has no pet series: " + archive.string());
    const auto pet_slices = load_series(pet_dir);
    if (pet_slices.empty()) throw IoError("archive pet series is empty: " + archive.string());
    PETVolume pet(static_cast<int>(pet_slices.size()), pet_slices.front().h, pet_slices.front().w,
                  spacing);
    pet.frame_seconds = frame_seconds;
    pet.units = Units::Raw;
    for (std::size_t z = 0; z < pet_slices.size(); ++z)
        set_slice(pet, static_cast<int>(z), pet_slices[z]);
    study.pet = std::move(pet);

    const fs::path ct_dir = archive / "ct";
    if (fs::exists(ct_dir)) {
        const auto ct_slices = load_series(ct_dir);
        if (!ct_slices.empty()) {
            CTVolume ct(static_cast<int>(ct_slices.size()), ct_slices.front().h,
                        ct_slices.front().w, spacing);
            for (std::size_t z = 0; z < ct_slices.size(); ++z)
                set_slice(ct, static_cast<int>(z), ct_slices[z]);
            study.ct = std::move(ct);
        }
    }
    return study;
}

/// Writes a study archive in the layout load_study expects (tooling/tests).
inline void write_study_archive(const fs::path& archive, const PETVolume& pet,
                                const std::map<std::string, std::string>& header_tags,
                                const CTVolume* ct = nullptr) {
    fs::create_directories(archive / "pet");
    json header;
    for (const auto& [k, v] : header_tags) header[k] = v;
    header["PixelSpacing"] = {pet.spacing.dx, pet.spacing.dy};
    header["SliceThickness"] = pet.spacing.dz;
    header["FrameSeconds"] = pet.frame_seconds;
    detail::write_json_file(archive / "header.json", header);
    for (int z = 0; z < pet.nz; ++z)
        write_slice(archive / "pet" / detail::slice_name("pet", z), slice_of(pet, z));
    if (ct != nullptr) {
        fs::create_directories(archive / "ct");
        for (int z = 0; z < ct->nz; ++z)
            write_slice(archive / "ct" / detail::slice_name("ct", z), slice_of(*ct, z));
    }
}

}  // namespace petbench::io
