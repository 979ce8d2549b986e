#include "petbench/dataset_io.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace petbench;
using namespace petbench::io;

namespace {

class IoTest : public ::testing::Test {
  protected:
    void SetUp() override {
        root_ = fs::path(::testing::TempDir()) /
                ("petbench_io_" + std::to_string(::getpid()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override {
        std::error_code ec;
        fs::remove_all(root_, ec);
    }
    fs::path root_;
};

Image2D random_image(int h, int w, std::mt19937& rng) {
    Image2D img(h, w);
    std::uniform_real_distribution<float> dist(-5.0f, 5.0f);
    for (float& v : img.data) v = dist(rng);
    return img;
}

// Two tiny one-sphere phantoms, enough structure for a full round trip.
phantom::PhantomDataset small_dataset() {
    std::vector<phantom::PhantomSpec> specs(2);
    for (int i = 0; i < 2; ++i) {
        specs[i].id = "study_" + std::to_string(i);
        specs[i].nz = 6;
        specs[i].ny = 16;
        specs[i].nx = 16;
        specs[i].spacing = {2.0, 2.0, 2.0};
        specs[i].spheres = {{16.0, 16.0, 6.0, 8.0, 4.0 + i}};
        specs[i].seed = 10 + i;
    }
    const std::vector<double> fractions{1.0 / 3.0, 2.0 / 3.0};
    return phantom::make_paired_dataset(specs, fractions, {1, 0, 1}, 2024);
}

}  // namespace

TEST_F(IoTest, SliceRoundTripIsBitExact) {
    std::mt19937 rng(1);
    const Image2D img = random_image(13, 9, rng);
    const fs::path p = root_ / "a.slc";
    write_slice(p, img);
    const Image2D back = read_slice(p);
    EXPECT_EQ(back.h, 13);
    EXPECT_EQ(back.w, 9);
    EXPECT_EQ(back.data, img.data);
}

TEST_F(IoTest, SliceReaderRejectsDamage) {
    EXPECT_THROW(read_slice(root_ / "nope.slc"), IoError);

    std::mt19937 rng(2);
    const fs::path p = root_ / "t.slc";
    write_slice(p, random_image(8, 8, rng));

    // truncate the payload
    fs::resize_file(p, fs::file_size(p) - 17);
    EXPECT_THROW(read_slice(p), IoError);

    // wrong magic
    std::ofstream(root_ / "m.slc", std::ios::binary) << "XXXXsomething";
    EXPECT_THROW(read_slice(root_ / "m.slc"), IoError);

    try {
        read_slice(root_ / "nope.slc");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
}

TEST_F(IoTest, MaskRoundTripAndBinaryCheck) {
    Mask3D mask(3, 4, 5);
    mask.at(0, 0, 0) = 1;
    mask.at(2, 3, 4) = 1;
    const fs::path p = root_ / "m.bin";
    write_mask(p, mask);
    const Mask3D back = read_mask(p);
    EXPECT_EQ(back.nz, 3);
    EXPECT_EQ(back.data, mask.data);

    Mask3D bad = mask;
    bad.data[7] = 2;
    write_mask(root_ / "bad.bin", bad);
    EXPECT_THROW(read_mask(root_ / "bad.bin"), IoError);
}

TEST_F(IoTest, DatasetRoundTripPreservesEverything) {
    const phantom::PhantomDataset ds = small_dataset();
    const DatasetManifest manifest = save_dataset(ds, root_ / "data");
    EXPECT_EQ(manifest.entries.size(), 2u);
    EXPECT_EQ(manifest.split_counts().at("train"), 1);
    EXPECT_EQ(manifest.split_counts().at("test"), 1);
    EXPECT_TRUE(fs::exists(root_ / "data" / "manifest.json"));
    EXPECT_TRUE(fs::exists(root_ / "data" / "studies" / "study_0" / "meta.json"));
    EXPECT_TRUE(fs::exists(root_ / "data" / "masks" / "study_0.bin"));
    EXPECT_FALSE(fs::exists(root_ / "data" / ".lock"));  // released on scope exit

    const phantom::PhantomDataset back = load_dataset(root_ / "data");
    ASSERT_EQ(back.studies.size(), 2u);
    ASSERT_EQ(back.fractions, ds.fractions);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& a = ds.studies[i];
        const auto& b = back.studies[i];
        EXPECT_EQ(b.spec.id, a.spec.id);
        EXPECT_EQ(b.split, a.split);
        EXPECT_EQ(b.ft.data, a.ft.data);
        EXPECT_EQ(b.ft.nz, a.ft.nz);
        EXPECT_DOUBLE_EQ(b.ft.spacing.dx, a.ft.spacing.dx);
        EXPECT_DOUBLE_EQ(b.ft.spacing.dz, a.ft.spacing.dz);
        EXPECT_DOUBLE_EQ(b.ft.frame_seconds, a.ft.frame_seconds);
        EXPECT_EQ(b.ft.units, Units::Suv);
        for (double f : ds.fractions) {
            EXPECT_EQ(b.lt_by_fraction.at(f).data, a.lt_by_fraction.at(f).data);
            EXPECT_DOUBLE_EQ(b.lt_by_fraction.at(f).frame_seconds,
                             a.lt_by_fraction.at(f).frame_seconds);
        }
        EXPECT_EQ(b.truth_mask.data, a.truth_mask.data);
        EXPECT_DOUBLE_EQ(b.spec.counts_per_suv_per_second, a.spec.counts_per_suv_per_second);
    }
}

TEST_F(IoTest, PairDatasetRoundTrip) {
    const phantom::PhantomDataset ds = small_dataset();
    const ImagePairDataset pairs = phantom::to_image_pairs(ds, 1.0 / 3.0);
    save_dataset(pairs, root_ / "pairs");

    const ImagePairDataset back = load_pairs(root_ / "pairs");
    ASSERT_EQ(back.pairs.size(), pairs.pairs.size());
    for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
        EXPECT_EQ(back.pairs[i].study_id, pairs.pairs[i].study_id);
        EXPECT_EQ(back.pairs[i].slice_index, pairs.pairs[i].slice_index);
        EXPECT_DOUBLE_EQ(back.pairs[i].lt_fraction, 1.0 / 3.0);
        EXPECT_EQ(back.pairs[i].lt.data, pairs.pairs[i].lt.data);
        EXPECT_EQ(back.pairs[i].ft.data, pairs.pairs[i].ft.data);
    }
    EXPECT_EQ(back.split_of.at("study_0"), Split::Train);
    EXPECT_EQ(back.split_of.at("study_1"), Split::Test);
}

TEST_F(IoTest, LoadPairsCanSelectAmongFractions) {
    const phantom::PhantomDataset ds = small_dataset();
    save_dataset(ds, root_ / "data");
    const ImagePairDataset third = load_pairs(root_ / "data", 1.0 / 3.0);
    const ImagePairDataset two_thirds = load_pairs(root_ / "data", 2.0 / 3.0);
    ASSERT_EQ(third.pairs.size(), two_thirds.pairs.size());
    EXPECT_NE(third.pairs[0].lt.data, two_thirds.pairs[0].lt.data);
    EXPECT_EQ(third.pairs[0].ft.data, two_thirds.pairs[0].ft.data);
}

TEST_F(IoTest, EmptyDatasetIsRejected) {
    phantom::PhantomDataset empty;
    EXPECT_THROW(save_dataset(empty, root_ / "x"), ValueError);
}

TEST_F(IoTest, MissingSliceFileIsReportedHonestly) {
    save_dataset(small_dataset(), root_ / "data");
    fs::remove(root_ / "data" / "studies" / "study_1" / "pet" / "lt0_0003.slc");
    try {
        load_dataset(root_ / "data");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
}

TEST_F(IoTest, DuplicateStudyIdsAreRejected) {
    phantom::PhantomDataset ds = small_dataset();
    ds.studies[1].spec.id = ds.studies[0].spec.id;
    EXPECT_THROW(save_dataset(ds, root_ / "dup"), IoError);
}

TEST_F(IoTest, WriterLockGuardsTheRoot) {
    const fs::path data = root_ / "locked";
    fs::create_directories(data);
    {
        WriterLock lock(data);
        EXPECT_THROW(WriterLock second(data), IoError);
        EXPECT_THROW(save_dataset(small_dataset(), data), IoError);
    }
    // lock released: writing works now
    EXPECT_NO_THROW(save_dataset(small_dataset(), data));
}

TEST_F(IoTest, CorruptManifestIsRejected) {
    fs::create_directories(root_ / "bad");
    std::ofstream(root_ / "bad" / "manifest.json") << "{ not json";
    EXPECT_THROW(load_manifest(root_ / "bad"), IoError);

    std::ofstream(root_ / "bad" / "manifest.json") << "{\"format_version\": 1}";
    EXPECT_THROW(load_manifest(root_ / "bad"), IoError);  // fields missing
}

namespace {

std::map<std::string, std::string> base_tags() {
    return {{"PatientWeight", "70"},
            {"RadionuclideTotalDose", "490"},
            {"RadionuclideHalfLife", "6586.2"},
            {"RadiopharmaceuticalStartTime", "100000"},
            {"SeriesTime", "103000.00"}};
}

PETVolume small_raw_volume() {
    PETVolume pet(3, 8, 8, Spacing{3.0, 3.0, 2.5});
    pet.units = Units::Raw;
    pet.frame_seconds = 60.0;
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> dist(0.0f, 100.0f);
    for (float& v : pet.data) v = dist(rng);
    return pet;
}

}  // namespace

TEST_F(IoTest, StudyArchiveRoundTrip) {
    const PETVolume pet = small_raw_volume();
    write_study_archive(root_ / "arch", pet, base_tags());

    const LoadedStudy study = load_study(root_ / "arch");
    EXPECT_EQ(study.meta.study_id, "arch");
    EXPECT_DOUBLE_EQ(study.meta.weight_kg, 70.0);
    EXPECT_DOUBLE_EQ(study.meta.total_dose_mbq, 490.0);
    EXPECT_DOUBLE_EQ(study.meta.half_life_s, 6586.2);
    EXPECT_DOUBLE_EQ(study.meta.injection_to_scan_s, 1800.0);
    EXPECT_EQ(study.pet.units, Units::Raw);
    EXPECT_EQ(study.pet.data, pet.data);
    EXPECT_DOUBLE_EQ(study.pet.spacing.dx, 3.0);
    EXPECT_DOUBLE_EQ(study.pet.spacing.dz, 2.5);
    EXPECT_DOUBLE_EQ(study.pet.frame_seconds, 60.0);
    EXPECT_FALSE(study.ct.has_value());

    // the loaded metadata feeds unit conversion directly
    const PETVolume suv = apply_suv(study.pet, study.meta);
    EXPECT_EQ(suv.units, Units::Suv);
}

TEST_F(IoTest, StudyArchiveCarriesTheCtWhenPresent) {
    const PETVolume pet = small_raw_volume();
    CTVolume ct(3, 8, 8, pet.spacing);
    ct.data.assign(ct.data.size(), -120.0f);
    write_study_archive(root_ / "arch_ct", pet, base_tags(), &ct);
    const LoadedStudy study = load_study(root_ / "arch_ct");
    ASSERT_TRUE(study.ct.has_value());
    EXPECT_EQ(study.ct->data, ct.data);
}

TEST_F(IoTest, InjectionDelayWrapsAcrossMidnight) {
    auto tags = base_tags();
    tags["RadiopharmaceuticalStartTime"] = "233000";
    tags["SeriesTime"] = "001500";
    write_study_archive(root_ / "arch", small_raw_volume(), tags);
    const LoadedStudy study = load_study(root_ / "arch");
    EXPECT_DOUBLE_EQ(study.meta.injection_to_scan_s, 2700.0);  // 23:30 -> 00:15
}

TEST_F(IoTest, MissingTagIsNamedInTheError) {
    auto tags = base_tags();
    tags.erase("RadionuclideHalfLife");
    write_study_archive(root_ / "arch", small_raw_volume(), tags);
    try {
        load_study(root_ / "arch");
        FAIL() << "expected MetadataError";
    } catch (const MetadataError& e) {
        EXPECT_EQ(e.tag, "RadionuclideHalfLife");
        EXPECT_NE(std::string(e.what()).find("RadionuclideHalfLife"), std::string::npos);
    }
}

TEST_F(IoTest, MalformedTimesAndNumbersAreRejected) {
    auto tags = base_tags();
    tags["SeriesTime"] = "1030";  // too short
    write_study_archive(root_ / "a1", small_raw_volume(), tags);
    EXPECT_THROW(load_study(root_ / "a1"), MetadataError);

    tags = base_tags();
    tags["SeriesTime"] = "107500";  // 75 minutes
    write_study_archive(root_ / "a2", small_raw_volume(), tags);
    EXPECT_THROW(load_study(root_ / "a2"), MetadataError);

    tags = base_tags();
    tags["PatientWeight"] = "heavy";
    write_study_archive(root_ / "a3", small_raw_volume(), tags);
    EXPECT_THROW(load_study(root_ / "a3"), MetadataError);
}

TEST_F(IoTest, InconsistentSliceShapesAreCorrupt) {
    write_study_archive(root_ / "arch", small_raw_volume(), base_tags());
    write_slice(root_ / "arch" / "pet" / "pet_0001.slc", Image2D(4, 4));
    try {
        load_study(root_ / "arch");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("corrupt"), std::string::npos);
    }
}

TEST_F(IoTest, ImportMaskAlignsInPlane) {
    Mask3D mask(2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) mask.at(0, y, x) = static_cast<std::uint8_t>((y + x) % 2);
    write_mask(root_ / "m.bin", mask);

    PETVolume same(2, 4, 4, {2.0, 2.0, 2.0});
    same.units = Units::Suv;
    const Mask3D identical = import_mask(root_ / "m.bin", same);
    EXPECT_EQ(identical.data, mask.data);

    // nearest-neighbour downsample: rows/cols {0, 3} survive
    PETVolume smaller(2, 2, 2, {2.0, 2.0, 2.0});
    smaller.units = Units::Suv;
    const Mask3D down = import_mask(root_ / "m.bin", smaller);
    EXPECT_EQ(down.at(0, 0, 0), mask.at(0, 0, 0));
    EXPECT_EQ(down.at(0, 0, 1), mask.at(0, 0, 3));
    EXPECT_EQ(down.at(0, 1, 0), mask.at(0, 3, 0));
    EXPECT_EQ(down.at(0, 1, 1), mask.at(0, 3, 3));

    PETVolume wrong_depth(3, 4, 4, {2.0, 2.0, 2.0});
    EXPECT_THROW(import_mask(root_ / "m.bin", wrong_depth), ShapeError);
}
