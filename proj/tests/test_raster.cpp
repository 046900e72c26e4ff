#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "octaq/io.hpp"
#include "octaq/raster.hpp"

using namespace octaq;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "octaq_test_raster" / name;
    fs::create_directories(p.parent_path());
    return p;
}

Angiogram random_image(std::size_t w, std::size_t h, std::uint64_t seed, double spacing = 10.0) {
    Rng r(seed);
    Grid<float> g(w, h);
    for (auto& v : g.storage()) v = static_cast<float>(r.uniform());
    return Angiogram(std::move(g), spacing, {3.0, -4.0}, "native");
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void append_le32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t float_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

}  // namespace

TEST(Angiogram, RejectsInvalidContents) {
    EXPECT_THROW(Angiogram(Grid<float>(1, 5), 1.0), Error);
    EXPECT_THROW(Angiogram(Grid<float>(2, 2), 0.0), Error);
    EXPECT_THROW(Angiogram(Grid<float>(2, 2), -1.0), Error);
    EXPECT_THROW(Angiogram(Grid<float>(2, 2, 1.5f), 1.0), Error);
    EXPECT_THROW(Angiogram(Grid<float>(2, 2, std::nanf("")), 1.0), Error);
}

TEST(Angiogram, ExtentBetweenOuterPixelCentres) {
    const Angiogram a(Grid<float>(245, 245), 12.24);
    EXPECT_NEAR(a.extent_um().x, 2986.56, 1e-9);
    EXPECT_NEAR(a.extent_um().y, 2986.56, 1e-9);
}

TEST(Io, EightBitWithSidecarLoads) {
    const auto p = scratch("a245.png");
    Grid<float> g(245, 245, 0.2f);
    save_angiogram(Angiogram(g, 12.24, {}, "native"), p);
    const auto a = load_angiogram(p);
    EXPECT_EQ(a.width(), 245u);
    EXPECT_DOUBLE_EQ(a.spacing_um(), 12.24);
    EXPECT_NEAR(a.extent_um().x / 1000.0, 2.987, 5e-4);
    EXPECT_EQ(a.provenance(), "native");
}

TEST(Io, ZeroRawFile) {
    const auto p = scratch("zero.raw");
    std::vector<unsigned char> b{'O', 'C', 'T', 'A'};
    append_le32(b, 2);
    append_le32(b, 2);
    append_le32(b, float_bits(10.0f));
    for (int i = 0; i < 4; ++i) append_le32(b, 0);
    write_bytes(p, b);
    fs::remove(sidecar_path(p));
    const auto a = load_angiogram(p);
    EXPECT_EQ(a.width(), 2u);
    EXPECT_DOUBLE_EQ(a.spacing_um(), 10.0);
    for (float v : a.pixels().values()) EXPECT_EQ(v, 0.0f);
}

TEST(Io, RawWithNanIsRejected) {
    const auto p = scratch("nan.raw");
    std::vector<unsigned char> b{'O', 'C', 'T', 'A'};
    append_le32(b, 2);
    append_le32(b, 2);
    append_le32(b, float_bits(10.0f));
    append_le32(b, 0);
    append_le32(b, float_bits(std::nanf("")));
    append_le32(b, 0);
    append_le32(b, 0);
    write_bytes(p, b);
    fs::remove(sidecar_path(p));
    EXPECT_THROW(load_angiogram(p), Error);
}

TEST(Io, RawLayoutMatchesFormat) {
    const auto img = random_image(5, 3, 1, 12.24);
    const auto p = scratch("layout.raw");
    save_angiogram(img, p);
    std::ifstream in(p, std::ios::binary);
    std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ASSERT_EQ(b.size(), 16u + 4u * 15u);
    EXPECT_EQ(std::memcmp(b.data(), "OCTA", 4), 0);
    EXPECT_EQ(b[4], 5);
    EXPECT_EQ(b[8], 3);
    float s;
    std::memcpy(&s, b.data() + 12, 4);
    EXPECT_EQ(s, 12.24f);
    float first;
    std::memcpy(&first, b.data() + 16, 4);
    EXPECT_EQ(first, img(0, 0));
}

TEST(Io, SidecarWithNegativeSpacingFails) {
    const auto p = scratch("neg.png");
    save_angiogram(Angiogram(Grid<float>(4, 4, 0.5f), 1.0), p);
    write_text(sidecar_path(p), R"({"spacing_um": -1, "origin_um": [0, 0], "provenance": "x"})");
    EXPECT_THROW(load_angiogram(p), Error);
}

TEST(Io, MissingSidecarFails) {
    const auto p = scratch("nosidecar.pgm");
    save_angiogram(Angiogram(Grid<float>(4, 4, 0.5f), 1.0), p);
    fs::remove(sidecar_path(p));
    EXPECT_THROW(load_angiogram(p), Error);
}

TEST(Io, ColourPngFails) {
    const auto p = scratch("rgb.png");
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    im.width = 4;
    im.height = 4;
    im.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> px(4 * 4 * 3, 100);
    px[0] = 255;
    ASSERT_TRUE(png_image_write_to_file(&im, p.c_str(), 0, px.data(), 0, nullptr));
    write_text(sidecar_path(p), R"({"spacing_um": 1, "origin_um": [0, 0], "provenance": "x"})");
    EXPECT_THROW(load_angiogram(p), Error);
}

TEST(Io, RawRoundTripIsBitExact) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto img = random_image(17 + seed, 9 + 2 * seed, seed, 3.7 + static_cast<double>(seed));
        const auto p = scratch("rt.raw");
        save_angiogram(img, p);
        const auto back = load_angiogram(p);
        EXPECT_EQ(back.pixels(), img.pixels());
        EXPECT_EQ(back.spacing_um(), img.spacing_um());
        EXPECT_EQ(back.origin_um().x, img.origin_um().x);
        EXPECT_EQ(back.provenance(), img.provenance());
    }
}

TEST(Io, EightBitRoundTripWithinQuantisation) {
    for (const char* ext : {".png", ".pgm"}) {
        const auto p = scratch(std::string("half") + ext);
        save_angiogram(Angiogram(Grid<float>(8, 6, 0.5f), 2.0, {1.0, 2.0}, "phantom"), p);
        const auto back = load_angiogram(p);
        for (float v : back.pixels().values()) EXPECT_LE(std::abs(v - 0.5f), 1.0f / 255.0f);
        EXPECT_EQ(back.origin_um().y, 2.0);
        EXPECT_EQ(back.provenance(), "phantom");
    }
}

TEST(Io, UnwritablePathFails) {
    const auto blocker = scratch("blocker");
    write_text(blocker, "not a directory");
    EXPECT_THROW(save_angiogram(Angiogram(Grid<float>(2, 2), 1.0), blocker / "x.raw"), Error);
    EXPECT_THROW(save_angiogram(Angiogram(Grid<float>(2, 2), 1.0), blocker / "x.png"), Error);
}

TEST(Io, MaskRoundTrip) {
    Mask m(7, 5);
    m(1, 1) = 1;
    m(6, 4) = 1;
    const auto p = scratch("mask.png");
    save_mask(m, p);
    EXPECT_EQ(load_mask(p), m);
}

TEST(Crop, CentralThreeMillimetresOfEight) {
    const Angiogram img(Grid<float>(350, 350), 22.857);
    const Vec2 c = img.center_um();
    const auto out = crop_physical(img, PhysicalRegion(c, {3000.0, 3000.0}));
    // Manual index computation: pixel i covers [i-0.5, i+0.5] in index units.
    const double lo = (c.x - 1500.0) / 22.857;
    const double hi = (c.x + 1500.0) / 22.857;
    long first = -1, last = -1;
    for (long i = 0; i < 350; ++i)
        if (i + 0.5 > lo && i - 0.5 < hi) {
            if (first < 0) first = i;
            last = i;
        }
    EXPECT_EQ(last - first + 1, 132);
    EXPECT_EQ(out.width(), 132u);
    EXPECT_EQ(out.height(), 132u);
    EXPECT_EQ(out.spacing_um(), 22.857);
    EXPECT_NEAR(out.origin_um().x, static_cast<double>(first) * 22.857, 1e-9);
}

TEST(Crop, FullExtentIsIdentity) {
    const auto img = random_image(20, 13, 4);
    const Vec2 footprint{20 * img.spacing_um(), 13 * img.spacing_um()};
    EXPECT_EQ(crop_physical(img, PhysicalRegion(img.center_um(), footprint)), img);
    EXPECT_EQ(crop_physical(img, PhysicalRegion(img.center_um(), img.extent_um())), img);
}

TEST(Crop, RegionBeyondExtentFails) {
    const auto img = random_image(20, 20, 5);
    EXPECT_THROW(crop_physical(img, PhysicalRegion(img.origin_um(), {100.0, 100.0})), Error);
    EXPECT_THROW(PhysicalRegion({0, 0}, {0.0, 1.0}), Error);
}

TEST(Crop, CompositionOfNestedPixelAlignedRegions) {
    Rng r(11);
    const auto img = random_image(40, 30, 6, 5.0);
    const double s = img.spacing_um();
    auto region = [&](long x0, long x1, long y0, long y1) {
        const Vec2 a = img.geometry().pixel_center(static_cast<double>(x0) - 0.5, static_cast<double>(y0) - 0.5);
        const Vec2 b = img.geometry().pixel_center(static_cast<double>(x1) + 0.5, static_cast<double>(y1) + 0.5);
        return PhysicalRegion(0.5 * (a + b), b - a);
    };
    for (int trial = 0; trial < 100; ++trial) {
        const long ax0 = r.uniform_int(0, 20), ax1 = r.uniform_int(ax0 + 6, 39);
        const long ay0 = r.uniform_int(0, 15), ay1 = r.uniform_int(ay0 + 6, 29);
        const long bx0 = r.uniform_int(ax0, ax1 - 2), bx1 = r.uniform_int(bx0 + 1, ax1);
        const long by0 = r.uniform_int(ay0, ay1 - 2), by1 = r.uniform_int(by0 + 1, ay1);
        const auto outer = crop_physical(img, region(ax0, ax1, ay0, ay1));
        const auto twice = crop_physical(outer, region(bx0, bx1, by0, by1));
        const auto once = crop_physical(img, region(bx0, bx1, by0, by1));
        ASSERT_EQ(twice.pixels(), once.pixels());
        ASSERT_NEAR(twice.origin_um().x, once.origin_um().x, 1e-9 * s);
        ASSERT_NEAR(twice.origin_um().y, once.origin_um().y, 1e-9 * s);
    }
}

TEST(Resample, SameSpacingNearestIsIdentity) {
    const auto img = random_image(31, 17, 7);
    EXPECT_EQ(resample(img, img.spacing_um(), ResampleMethod::nearest), img);
}

TEST(Resample, ConstantPreservedByEveryMethod) {
    const Angiogram img(Grid<float>(33, 21, 0.7f), 12.24);
    for (auto m : {ResampleMethod::nearest, ResampleMethod::bilinear, ResampleMethod::bicubic, ResampleMethod::area_average})
        for (double s : {5.0, 12.24, 22.86, 40.0}) {
            const auto out = resample(img, s, m);
            for (float v : out.pixels().values()) ASSERT_NEAR(v, 0.7f, 1e-6f);
        }
}

TEST(Resample, CheckerboardAreaAverage) {
    Grid<float> g(4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) g(x, y) = static_cast<float>((x + y) % 2);
    const auto out = resample(Angiogram(g, 1.0), 2.0, ResampleMethod::area_average);
    ASSERT_EQ(out.width(), 2u);
    ASSERT_EQ(out.height(), 2u);
    for (float v : out.pixels().values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resample, AreaAverageBlockMeans) {
    const auto img = random_image(12, 12, 8, 2.0);
    const auto out = resample(img, 6.0, ResampleMethod::area_average);
    ASSERT_EQ(out.width(), 4u);
    for (std::size_t by = 0; by < 4; ++by)
        for (std::size_t bx = 0; bx < 4; ++bx) {
            double m = 0.0;
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 3; ++x) m += img(3 * bx + x, 3 * by + y);
            EXPECT_NEAR(out(bx, by), m / 9.0, 1e-6);
        }
    EXPECT_NEAR(mean(out.pixels()), mean(img.pixels()), 1e-6);
}

TEST(Resample, ExtentPreservedWithinOneOutputPixel) {
    const auto img = random_image(245, 245, 9, 12.24);
    for (auto m : {ResampleMethod::nearest, ResampleMethod::bilinear, ResampleMethod::bicubic, ResampleMethod::area_average})
        for (double s : {7.0, 22.86, 30.0}) {
            const auto out = resample(img, s, m);
            EXPECT_LE(std::abs(out.extent_um().x - img.extent_um().x), s);
            EXPECT_LE(std::abs(out.center_um().x - img.center_um().x), s);
            for (float v : out.pixels().values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
        }
}

TEST(Resample, NonPositiveSpacingFails) {
    const auto img = random_image(8, 8, 10);
    EXPECT_THROW(resample(img, 0.0, ResampleMethod::bilinear), Error);
    EXPECT_THROW(resample(img, -2.0, ResampleMethod::area_average), Error);
    EXPECT_THROW(parse_resample_method("lanczos"), Error);
}

TEST(Raster, DiscMaskArea) {
    const Angiogram img(Grid<float>(245, 245), 12.24);
    const Mask m = disc_mask(img.geometry(), img.center_um(), 300.0);
    const double r_px = 300.0 / 12.24;
    const double area = std::numbers::pi * r_px * r_px;
    EXPECT_NEAR(static_cast<double>(count(m)), area, 2.0 * std::numbers::pi * r_px);
}
