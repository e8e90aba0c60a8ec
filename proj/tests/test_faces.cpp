#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "idedit/errors.hpp"
#include "idedit/faces.hpp"
#include "test_util.hpp"

using namespace idedit;

namespace {

bool touches(const Region& r, int x, int y, int size) {
    const double px0 = static_cast<double>(x) / size, px1 = static_cast<double>(x + 1) / size;
    const double py0 = static_cast<double>(y) / size, py1 = static_cast<double>(y + 1) / size;
    return px1 > r.x0 && px0 < r.x1 && py1 > r.y0 && py0 < r.y1;
}

// Asserts that a and b differ only at pixels touching `region`.
void expect_changes_confined(const ImageTensor& a, const ImageTensor& b, const Region& region) {
    int inside_changes = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            bool differs = false;
            for (int c = 0; c < 3; ++c) differs = differs || a.at(y, x, c) != b.at(y, x, c);
            if (!differs) continue;
            ASSERT_TRUE(touches(region, x, y, a.width)) << "pixel (" << x << ", " << y << ") changed outside region";
            ++inside_changes;
        }
    }
    EXPECT_GT(inside_changes, 0);
}

}  // namespace

TEST(Factors, SeededDeterminism) {
    EXPECT_EQ(sample_factors(0, 5), sample_factors(0, 5));
    EXPECT_NE(sample_factors(0, 5), sample_factors(1, 5));
}

TEST(Factors, RangesHold) {
    for (const auto& f : sample_factors(3, 2000)) {
        EXPECT_GE(f.identity_hue, 0.0);
        EXPECT_LE(f.identity_hue, 1.0);
        EXPECT_GE(f.identity_aspect, 0.7);
        EXPECT_LE(f.identity_aspect, 1.3);
        EXPECT_GE(f.identity_eye_spacing, 0.2);
        EXPECT_LE(f.identity_eye_spacing, 0.4);
        EXPECT_GE(f.age, 0.0);
        EXPECT_LE(f.age, 1.0);
        EXPECT_GE(f.smile, -1.0);
        EXPECT_LE(f.smile, 1.0);
        EXPECT_GE(f.hair, 0.0);
        EXPECT_LE(f.hair, 1.0);
    }
}

TEST(Factors, SmileValuesInRangeForSmallDraw) {
    for (const auto& f : sample_factors(0, 5)) {
        EXPECT_GE(f.smile, -1.0);
        EXPECT_LE(f.smile, 1.0);
    }
}

TEST(Factors, AgeMeanIsUniformMean) {
    const auto fs = sample_factors(123, 10000);
    double mean = 0;
    for (const auto& f : fs) mean += f.age;
    mean /= static_cast<double>(fs.size());
    EXPECT_NEAR(mean, 0.5, 0.01);
}

TEST(Factors, RejectsEmptyDraw) { EXPECT_THROW(sample_factors(0, 0), ValidationError); }

TEST(Render, ShapeRangeAndDeterminism) {
    const auto f = sample_factors(5, 1).front();
    const auto img = render(f, 64);
    EXPECT_EQ(img.height, 64);
    EXPECT_EQ(img.width, 64);
    for (float v : img.pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(img, render(f, 64));
    EXPECT_THROW(render(f, 8), ValidationError);
}

TEST(Render, SmileChangesOnlyMouthRegion) {
    for (const auto& base : sample_factors(7, 20)) {
        FaceFactors a = base, b = base;
        a.smile = 1.0;
        b.smile = -1.0;
        expect_changes_confined(render(a, 64), render(b, 64), face_layout::mouth_region());
    }
}

TEST(Render, AgeHairEyesAreLocal) {
    for (const auto& base : sample_factors(8, 10)) {
        FaceFactors a = base, b = base;
        a.age = 0.05;
        b.age = 0.95;
        expect_changes_confined(render(a, 64), render(b, 64), face_layout::wrinkle_region());
        a = base;
        b = base;
        a.hair = 0.1;
        b.hair = 0.9;
        expect_changes_confined(render(a, 64), render(b, 64), face_layout::hair_region());
        a = base;
        b = base;
        a.identity_eye_spacing = 0.22;
        b.identity_eye_spacing = 0.38;
        expect_changes_confined(render(a, 64), render(b, 64), face_layout::eye_band());
    }
}

TEST(Measure, ClosedLoopWithinTolerance) {
    const auto fs = sample_factors(2024, 1000);
    double worst[6] = {0, 0, 0, 0, 0, 0};
    for (const auto& f : fs) {
        const auto m = measure_factors(render(f, 64));
        const double err[6] = {std::abs(m.identity_hue - f.identity_hue), std::abs(m.identity_aspect - f.identity_aspect),
                               std::abs(m.identity_eye_spacing - f.identity_eye_spacing), std::abs(m.age - f.age),
                               std::abs(m.smile - f.smile), std::abs(m.hair - f.hair)};
        for (int k = 0; k < 6; ++k) worst[k] = std::max(worst[k], err[k]);
    }
    const char* names[6] = {"hue", "aspect", "eye_spacing", "age", "smile", "hair"};
    for (int k = 0; k < 6; ++k) EXPECT_LE(worst[k], 0.05) << names[k];
}

TEST(Measure, TotalOnConstantImage) {
    const auto m = measure_factors(ImageTensor(64, 64, 0.5f));
    for (double v : {m.identity_hue, m.identity_aspect, m.identity_eye_spacing, m.age, m.smile, m.hair}) {
        EXPECT_TRUE(std::isfinite(v));
    }
    const auto z = measure_factors(ImageTensor(32, 32, 0.0f));
    EXPECT_TRUE(std::isfinite(z.smile));
}

TEST(Measure, Deterministic) {
    const auto img = render(sample_factors(9, 1).front(), 64);
    EXPECT_EQ(measure_factors(img), measure_factors(img));
}

TEST(Dataset, RegenerationIsBitwise) {
    const auto a = generate_dataset(4, 6, 32);
    const auto b = generate_dataset(4, 6, 32);
    ASSERT_EQ(a.size(), 6u);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.factors, b.factors);
    EXPECT_EQ(a.images.size(), a.factors.size());
}

TEST(Dataset, WriteReadRoundTrip) {
    const auto dir = idedit::testing::temp_dir("dataset");
    const auto ds = generate_dataset(4, 3, 32);
    write_dataset(ds, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "img_00000.png"));
    EXPECT_TRUE(std::filesystem::exists(dir / "factors.json"));
    const auto back = read_dataset(dir);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.factors, ds.factors);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < ds.images[i].pixels.size(); ++k) {
            EXPECT_NEAR(back.images[i].pixels[k], ds.images[i].pixels[k], 0.5 / 255.0 + 1e-6);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST(Dataset, FactorFieldNamesInSidecar) {
    const auto dir = idedit::testing::temp_dir("sidecar");
    write_dataset(generate_dataset(1, 1, 16), dir);
    std::ifstream in(dir / "factors.json");
    const auto j = nlohmann::json::parse(in);
    ASSERT_TRUE(j.is_array());
    for (const char* key : {"identity_hue", "identity_aspect", "identity_eye_spacing", "age", "smile", "hair"}) {
        EXPECT_TRUE(j[0].contains(key)) << key;
    }
    std::filesystem::remove_all(dir);
}

TEST(Dataset, FactorValueByName) {
    FaceFactors f;
    f.age = 0.25;
    f.smile = -0.5;
    f.hair = 0.75;
    EXPECT_EQ(factor_value(f, "age"), 0.25);
    EXPECT_EQ(factor_value(f, "smile"), -0.5);
    EXPECT_EQ(factor_value(f, "hair"), 0.75);
    EXPECT_THROW(factor_value(f, "nose"), ValidationError);
}
