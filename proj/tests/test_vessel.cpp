#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <queue>

#include "octaq/vessel.hpp"

using namespace octaq;
using namespace octaq::vessel;

namespace {

/// Bright Gaussian ridge of width `sr` through `c` along direction `theta`.
Angiogram ridge_image(std::size_t n, double sr, double theta_deg, double amp = 1.0) {
    const double th = theta_deg * std::numbers::pi / 180.0;
    const double c = 0.5 * static_cast<double>(n - 1);
    Grid<float> g(n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double dx = static_cast<double>(x) - c;
            const double dy = static_cast<double>(y) - c;
            const double d = -std::sin(th) * dx + std::cos(th) * dy;
            g(x, y) = static_cast<float>(amp * std::exp(-d * d / (2.0 * sr * sr)));
        }
    return Angiogram(std::move(g), 1.0);
}

/// Continuous scale-space Frangi value at the centre of a Gaussian ridge.
double analytic_ridge_response(double sr, double amp, const FrangiParams& p) {
    double best = 0.0;
    for (double s : p.scales()) {
        const double t = sr * sr + s * s;
        const double l2 = -s * s * amp * sr / std::pow(t, 1.5);
        best = std::max(best, 1.0 - std::exp(-l2 * l2 / (2.0 * p.c * p.c)));
    }
    return best;
}

/// Textbook Zhang-Suen: parallel deletion per sub-iteration, no recheck.
Mask classic_zhang_suen(Mask m) {
    const long w = static_cast<long>(m.width()), h = static_cast<long>(m.height());
    auto at = [&](long x, long y) -> int {
        return x >= 0 && y >= 0 && x < w && y < h && m(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) ? 1 : 0;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<std::pair<long, long>> del;
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    if (!at(x, y)) continue;
                    const int p2 = at(x, y - 1), p3 = at(x + 1, y - 1), p4 = at(x + 1, y), p5 = at(x + 1, y + 1);
                    const int p6 = at(x, y + 1), p7 = at(x - 1, y + 1), p8 = at(x - 1, y), p9 = at(x - 1, y - 1);
                    const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    const int a = (!p2 && p3) + (!p3 && p4) + (!p4 && p5) + (!p5 && p6) + (!p6 && p7) + (!p7 && p8) +
                                  (!p8 && p9) + (!p9 && p2);
                    if (b < 2 || b > 6 || a != 1) continue;
                    if (pass == 0 && ((p2 && p4 && p6) || (p4 && p6 && p8))) continue;
                    if (pass == 1 && ((p2 && p4 && p8) || (p2 && p6 && p8))) continue;
                    del.emplace_back(x, y);
                }
            for (auto [x, y] : del) m(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 0;
            changed = changed || !del.empty();
        }
    }
    return m;
}

std::size_t components8(const Mask& m) {
    Grid<int> seen(m.width(), m.height(), 0);
    std::size_t n = 0;
    for (std::size_t y0 = 0; y0 < m.height(); ++y0)
        for (std::size_t x0 = 0; x0 < m.width(); ++x0) {
            if (!m(x0, y0) || seen(x0, y0)) continue;
            ++n;
            std::queue<std::pair<long, long>> q;
            q.push({static_cast<long>(x0), static_cast<long>(y0)});
            seen(x0, y0) = 1;
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop();
                for (long dy = -1; dy <= 1; ++dy)
                    for (long dx = -1; dx <= 1; ++dx) {
                        const long nx = x + dx, ny = y + dy;
                        if (!m.contains(nx, ny)) continue;
                        const auto ux = static_cast<std::size_t>(nx), uy = static_cast<std::size_t>(ny);
                        if (m(ux, uy) && !seen(ux, uy)) {
                            seen(ux, uy) = 1;
                            q.push({nx, ny});
                        }
                    }
            }
        }
    return n;
}

bool subset(const Mask& a, const Mask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.storage()[i] && !b.storage()[i]) return false;
    return true;
}

Mask random_blob_mask(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    Grid<float> g(n, n);
    for (auto& v : g.storage()) v = static_cast<float>(r.uniform());
    const auto b = filters::gaussian_blur(g, r.uniform(0.5, 2.5));
    const double t = r.uniform(0.45, 0.55);
    Mask m(n, n);
    for (std::size_t i = 0; i < m.size(); ++i) m.storage()[i] = b.storage()[i] > t;
    return m;
}

}  // namespace

TEST(Threshold, MeanPlusTwoSampleStd) {
    Grid<float> g(3, 3, 0.9f);
    g(0, 0) = 0.1f;
    g(1, 0) = 0.2f;
    g(2, 0) = 0.3f;
    Mask faz(3, 3);
    faz(0, 0) = faz(1, 0) = faz(2, 0) = 1;
    EXPECT_NEAR(faz_threshold(Angiogram(g, 1.0), faz), 0.4, 1e-6);
}

TEST(Threshold, InvalidFazFails) {
    const Angiogram img(Grid<float>(4, 4, 0.5f), 1.0);
    EXPECT_THROW(faz_threshold(img, Mask(4, 4)), Error);
    EXPECT_THROW(faz_threshold(img, Mask(3, 4, 1)), Error);
    Mask one(4, 4);
    one(1, 1) = 1;
    EXPECT_THROW(faz_threshold(img, one), Error);
}

TEST(Threshold, HardThresholdZeroesBelow) {
    Grid<float> g(2, 2);
    g(0, 0) = 0.1f;
    g(1, 0) = 0.4f;
    g(0, 1) = 0.5f;
    g(1, 1) = 0.9f;
    const auto out = apply_hard_threshold(Angiogram(g, 1.0), 0.4);
    EXPECT_EQ(out(0, 0), 0.0f);
    EXPECT_EQ(out(1, 0), 0.4f);
    EXPECT_EQ(out(1, 1), 0.9f);
}

TEST(Frangi, ConstantImageHasZeroResponse) {
    for (float v : {0.0f, 0.3f, 1.0f}) {
        const auto out = frangi_vesselness(Angiogram(Grid<float>(64, 64, v), 1.0));
        for (float x : out.pixels().values()) ASSERT_EQ(x, 0.0f);
    }
}

TEST(Frangi, RidgeCentreMatchesScaleSpaceValue) {
    const FrangiParams p;
    for (double sr : {1.2, 2.0, 3.0}) {
        const auto img = ridge_image(65, sr, 90.0);
        const auto r = frangi_response(img.pixels(), p);
        EXPECT_NEAR(r(32, 32) / analytic_ridge_response(sr, 1.0, p), 1.0, 0.05) << "sr=" << sr;
    }
}

TEST(Frangi, RidgeResponseIsMaximalOnCentreline) {
    const auto img = ridge_image(65, 1.2, 90.0);
    const auto v = frangi_vesselness(img);
    for (std::size_t y = 8; y < 57; ++y) {
        for (std::size_t x = 0; x < 65; ++x) {
            if (x == 32) continue;
            ASSERT_LT(v(x, y), v(32, y)) << x << "," << y;
        }
        ASSERT_NEAR(v(32, y), 1.0f, 1e-4f);
    }
}

TEST(Frangi, RotationBy37DegreesWithinFivePercent) {
    const FrangiParams p;
    for (double sr : {1.2, 2.0}) {
        const auto r0 = frangi_response(ridge_image(65, sr, 0.0).pixels(), p);
        const auto r37 = frangi_response(ridge_image(65, sr, 37.0).pixels(), p);
        EXPECT_NEAR(r37(32, 32) / r0(32, 32), 1.0, 0.05);
    }
}

TEST(Frangi, IntensityScalingKeepsArgmaxAndNearRatios) {
    Rng rng(3);
    Grid<float> g(96, 96);
    for (auto& v : g.storage()) v = static_cast<float>(0.5 * rng.uniform());
    const auto base_img = Angiogram(clamp_grid(filters::gaussian_blur(g, 1.0)), 1.0);
    const auto base = frangi_vesselness(base_img);
    auto argmax = [](const Grid<float>& x) {
        return std::max_element(x.values().begin(), x.values().end()) - x.values().begin();
    };
    for (double k : {0.5, 0.8, 1.25, 2.0}) {
        Grid<float> scaled = base_img.pixels();
        for (auto& v : scaled.storage()) v = static_cast<float>(k * v);
        const auto out = frangi_vesselness(base_img.with_pixels(scaled));
        EXPECT_EQ(argmax(out.pixels()), argmax(base.pixels()));
        double worst = 0.0;
        for (std::size_t i = 0; i < out.pixels().size(); ++i)
            worst = std::max(worst, std::abs(double(out.pixels().storage()[i]) - base.pixels().storage()[i]));
        // Structureness term deviates from a pure quadratic by about (k^2-1) S^2 / (4 c^2).
        EXPECT_LT(worst, 1e-4) << "k=" << k;
    }
}

TEST(Frangi, TooSmallImageFails) {
    EXPECT_THROW(frangi_response(Grid<float>(8, 8), FrangiParams{}), Error);
    FrangiParams bad;
    bad.scale_min_px = 2.0;
    bad.scale_max_px = 1.0;
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_EQ(FrangiParams{}.scales().size(), 8u);
}

TEST(Binarize, MatchesBruteForceLocalMean) {
    Grid<float> g(40, 30, 0.2f);
    for (std::size_t y = 0; y < 30; ++y)
        for (std::size_t x = 17; x < 20; ++x) g(x, y) = 0.8f;
    g(3, 4) = 0.6f;
    const Angiogram img(g, 1.0);
    for (double sens : {0.3, 0.5, 0.7}) {
        const long win = 7;
        const auto m = binarize_adaptive(img, sens, win);
        for (long y = 0; y < 30; ++y)
            for (long x = 0; x < 40; ++x) {
                double acc = 0.0;
                for (long dy = -3; dy <= 3; ++dy)
                    for (long dx = -3; dx <= 3; ++dx) acc += g.clamped(x + dx, y + dy);
                const double local = acc / 49.0 * (1.0 + (0.5 - sens));
                const double v = g(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
                if (std::abs(v - local) < 1e-9) continue;
                ASSERT_EQ(m(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) != 0,
                          double(g(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) > local);
            }
    }
    EXPECT_EQ(default_window(245, 245), 31);
    EXPECT_THROW(binarize_adaptive(img, 0.5, 4), Error);
}

TEST(Skeleton, RectangleMatchesClassicThinning) {
    Mask m(30, 15);
    for (std::size_t y = 5; y < 10; ++y)
        for (std::size_t x = 5; x < 25; ++x) m(x, y) = 1;
    const auto s = skeletonize(m);
    EXPECT_EQ(s, classic_zhang_suen(m));
    EXPECT_GT(count(s), 0u);
    EXPECT_TRUE(subset(s, m));
}

TEST(Skeleton, TwoByTwoBlockSurvives) {
    Mask m(6, 6);
    m(2, 2) = m(3, 2) = m(2, 3) = m(3, 3) = 1;
    const auto s = skeletonize(m);
    EXPECT_GE(count(s), 1u);
    EXPECT_EQ(components8(s), 1u);
}

TEST(Skeleton, DiscMatchesClassicThinning) {
    const RasterGeometry g{245, 245, 1.0, {}};
    const Mask disc = disc_mask(g, {122.0, 122.0}, 20.0);
    const auto s = skeletonize(disc);
    const auto classic = classic_zhang_suen(disc);
    EXPECT_EQ(s, classic);
    const auto r = compute_biomarkers(make_vessel_maps(disc, 1.0));
    EXPECT_DOUBLE_EQ(*r.vdi, static_cast<double>(count(disc)) / static_cast<double>(count(classic)));
}

TEST(Perimeter, HandCases) {
    Mask one(5, 5);
    one(2, 2) = 1;
    EXPECT_EQ(perimeter_map(one), one);

    Mask block(7, 7);
    for (std::size_t y = 2; y < 5; ++y)
        for (std::size_t x = 2; x < 5; ++x) block(x, y) = 1;
    const auto p = perimeter_map(block);
    EXPECT_EQ(count(p), 8u);
    EXPECT_EQ(p(3, 3), 0);

    const Mask full(4, 3, 1);
    const auto pf = perimeter_map(full);
    EXPECT_EQ(count(pf), 10u);
    EXPECT_EQ(pf(1, 1), 0);
    EXPECT_EQ(pf(0, 1), 1);
}

TEST(Biomarkers, HandComputedValues) {
    VesselMaps maps;
    maps.area = Mask(10, 10);
    maps.skeleton = Mask(10, 10);
    maps.perimeter = Mask(10, 10);
    maps.spacing_um = 5.0;
    for (std::size_t i = 0; i < 10; ++i) maps.area.storage()[i] = 1;
    for (std::size_t i = 0; i < 4; ++i) maps.skeleton.storage()[i] = 1;
    for (std::size_t i = 0; i < 8; ++i) maps.perimeter.storage()[i] = 1;
    const auto r = compute_biomarkers(maps);
    EXPECT_DOUBLE_EQ(*r.vad, 0.1);
    EXPECT_DOUBLE_EQ(*r.vsd, 0.04);
    EXPECT_DOUBLE_EQ(*r.vdi, 2.5);
    EXPECT_DOUBLE_EQ(*r.vpi, 0.08);
    EXPECT_DOUBLE_EQ(*r.vci, 64.0 / (40.0 * std::numbers::pi));
}

TEST(Biomarkers, EmptyMapsAreUndefined) {
    const auto r = compute_biomarkers(make_vessel_maps(Mask(8, 8), 1.0));
    EXPECT_TRUE(r.area_empty());
    EXPECT_FALSE(r.vad.has_value());
    EXPECT_FALSE(r.vdi.has_value());
    EXPECT_TRUE(to_json(r)["vad"].is_null());
}

TEST(Morphology, InvariantsOverRandomMasks) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = random_blob_mask(48, seed);
        const auto s = skeletonize(m);
        const auto p = perimeter_map(m);
        ASSERT_TRUE(subset(s, m)) << seed;
        ASSERT_TRUE(subset(p, m)) << seed;
        ASSERT_EQ(components8(s), components8(m)) << seed;
    }
}

TEST(Quantify, LedgerAndShapes) {
    const auto img = ridge_image(64, 1.5, 20.0, 0.8);
    Mask faz(64, 64);
    faz(0, 63) = faz(1, 63) = faz(2, 63) = 1;
    const auto q = quantify(img, faz);
    EXPECT_EQ(q.window, default_window(64, 64));
    EXPECT_TRUE(q.report.vad.has_value());
    const auto led = parameter_ledger(QuantifyParams{}, q.window, q.threshold);
    EXPECT_EQ(led["binarization_input"], "frangi");
    EXPECT_EQ(led["frangi"]["c"], 30.0);
    EXPECT_EQ(led["frangi"]["beta"], 0.5);
}
