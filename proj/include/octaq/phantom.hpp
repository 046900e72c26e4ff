#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octaq/filters.hpp"
#include "octaq/io.hpp"
#include "octaq/parallel.hpp"
#include "octaq/raster.hpp"

namespace octaq::phantom {

struct Range {
    double lo;
    double hi;

    double draw(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
    bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
};

/// Scene description for a synthetic superficial-plexus angiogram.
struct PhantomSpec {
    double fov_um = 3000.0;
    double spacing_um = 12.24;
    Range faz_radius_um{250.0, 350.0};
    Range n_arcades{4.0, 8.0};
    int branch_depth = 4;
    Range trunk_caliber_um{25.0, 45.0};
    double capillary_density = 0.35;
    double noise_floor = 0.05;

    void validate() const {
        if (!(fov_um > 0.0) || !(spacing_um > 0.0)) throw Error("phantom FOV and spacing must be positive");
        if (fov_um / spacing_um < 16.0) throw Error("phantom FOV must span at least 16 samples");
        for (const Range* r : {&faz_radius_um, &trunk_caliber_um})
            if (!r->valid() || !(r->lo > 0.0)) throw Error("phantom ranges must be non-empty and positive");
        if (!n_arcades.valid() || n_arcades.lo < 0.0) throw Error("arcade count range must be non-empty and non-negative");
        if (branch_depth < 0) throw Error("branch depth must be non-negative");
        if (!(capillary_density >= 0.0 && capillary_density <= 1.0)) throw Error("capillary density must lie in [0,1]");
        if (!(noise_floor >= 0.0) || noise_floor > 1.0) throw Error("noise floor must lie in [0,1]");
        if (faz_radius_um.hi >= 0.5 * fov_um) throw Error("FAZ radius must be smaller than half the FOV");
    }

    std::size_t samples() const { return static_cast<std::size_t>(std::llround(fov_um / spacing_um)); }
};

inline nlohmann::json to_json(const PhantomSpec& s) {
    return {{"fov_um", s.fov_um},
            {"spacing_um", s.spacing_um},
            {"faz_radius_um", {s.faz_radius_um.lo, s.faz_radius_um.hi}},
            {"n_arcades", {s.n_arcades.lo, s.n_arcades.hi}},
            {"branch_depth", s.branch_depth},
            {"trunk_caliber_um", {s.trunk_caliber_um.lo, s.trunk_caliber_um.hi}},
            {"capillary_density", s.capillary_density},
            {"noise_floor", s.noise_floor}};
}

/// Ground truth that accompanies a rendered phantom.
struct PhantomTruth {
    Mask centerline;
    Grid<float> caliber_um;     ///< nonzero on centerline pixels only
    Grid<float> direction_rad;  ///< local vessel heading on centerline pixels
    Mask faz;
    Grid<float> clean;  ///< noise-free render
    double faz_radius_um = 0.0;
    Vec2 faz_center_um{};
};

struct Phantom {
    Angiogram image;
    PhantomTruth truth;
};

namespace detail {

struct Vessel {
    std::vector<Vec2> points;      ///< micrometers, relative to the FOV centre
    std::vector<double> caliber;   ///< per point
    std::vector<double> heading;   ///< per point
    double brightness = 0.9;
};

struct Scene {
    double half_fov;
    double faz_radius;
    double step;
};

inline double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

inline Vec2 unit(double a) { return {std::cos(a), std::sin(a)}; }

/// Turns `heading` toward `target` by at most `max_turn`.
inline double steer(double heading, double target, double max_turn) {
    const double d = wrap_angle(target - heading);
    return heading + std::clamp(d, -max_turn, max_turn);
}

/// Keeps a point outside the FAZ guard radius.
inline Vec2 guard(Vec2 p, double min_radius) {
    const double r = p.norm();
    if (r >= min_radius) return p;
    if (r < 1e-9) return {min_radius, 0.0};
    return (min_radius / r) * p;
}

inline bool outside_fov(Vec2 p, double half_fov, double margin) {
    return std::abs(p.x) > half_fov + margin || std::abs(p.y) > half_fov + margin;
}

/// Arcade trunk: enters from the border and bends around the FAZ.
inline Vessel grow_arcade(const Scene& sc, Rng& rng, double entry_angle, double caliber, double brightness) {
    Vessel v;
    v.brightness = brightness;
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const Vec2 dir = unit(entry_angle);
    const double t = (sc.half_fov + 20.0) / std::max(std::abs(dir.x), std::abs(dir.y));
    Vec2 p = t * dir;
    double heading = entry_angle + std::numbers::pi + side * rng.uniform(0.15, 0.6);
    const double target_radius = sc.faz_radius + rng.uniform(450.0, 1000.0);
    const double sweep_limit = rng.uniform(1.2, 2.6);
    const double min_radius = sc.faz_radius + 0.5 * caliber + 60.0;
    const double max_turn = sc.step / 160.0;
    double swept = 0.0;
    bool wrapping = false;
    for (int i = 0; i < 4000; ++i) {
        v.points.push_back(p);
        v.heading.push_back(heading);
        const double rho = p.norm();
        const Vec2 radial = (1.0 / std::max(rho, 1e-9)) * p;
        const Vec2 tangent{-side * radial.y, side * radial.x};
        const double pull = std::clamp((rho - target_radius) / 250.0, -1.0, 2.5);
        const Vec2 desired = tangent + pull * Vec2{-radial.x, -radial.y};
        heading = steer(heading, std::atan2(desired.y, desired.x), max_turn) + 0.01 * rng.normal();
        const Vec2 next = guard(p + sc.step * unit(heading), min_radius);
        if (rho < target_radius + 150.0) wrapping = true;
        if (wrapping) swept += std::abs(wrap_angle(std::atan2(next.y, next.x) - std::atan2(p.y, p.x)));
        p = next;
        if (swept > sweep_limit) break;
        if (i > 10 && outside_fov(p, sc.half_fov, 40.0)) break;
    }
    v.caliber.assign(v.points.size(), caliber);
    return v;
}

/// Side branch with a wandering heading that avoids the FAZ.
inline Vessel grow_branch(const Scene& sc, Rng& rng, Vec2 start, double heading, double caliber, double length,
                          double brightness) {
    Vessel v;
    v.brightness = brightness;
    Vec2 p = start;
    const double min_radius = sc.faz_radius + 0.5 * caliber + 30.0;
    double travelled = 0.0;
    double turn_rate = 0.0;
    while (travelled < length) {
        v.points.push_back(p);
        v.heading.push_back(heading);
        turn_rate = 0.9 * turn_rate + 0.004 * rng.normal();
        heading += turn_rate;
        const double rho = p.norm();
        if (rho < min_radius + 80.0) {
            const double away = std::atan2(p.y, p.x);
            heading = steer(heading, away, sc.step / 120.0);
        }
        p = guard(p + sc.step * unit(heading), min_radius);
        travelled += sc.step;
        if (outside_fov(p, sc.half_fov, 30.0)) break;
    }
    v.caliber.assign(v.points.size(), caliber);
    return v;
}

/// Adds side branches along `v` (depth-first), tapering the parent so that
/// upstream^3 = continuing^3 + branch^3 at every bifurcation.
inline void branch_recursively(const Scene& sc, Rng& rng, Vessel& v, int depth, int max_depth, double base_length,
                               std::vector<Vessel>& out) {
    if (depth >= max_depth || v.points.size() < 8) return;
    const long n_children = depth == 0 ? rng.uniform_int(2, 4) : rng.uniform_int(1, 2);
    std::vector<std::size_t> at;
    for (long k = 0; k < n_children; ++k)
        at.push_back(static_cast<std::size_t>(rng.uniform(0.15, 0.9) * static_cast<double>(v.points.size() - 1)));
    std::sort(at.begin(), at.end());
    std::vector<Vessel> children;
    for (std::size_t idx : at) {
        const double upstream = v.caliber[idx];
        const double child = upstream * rng.uniform(0.55, 0.8);
        // Prefer the side that points toward the fovea.
        const Vec2 p = v.points[idx];
        const Vec2 fwd = unit(v.heading[idx]);
        const double inward = fwd.x * p.y - fwd.y * p.x > 0.0 ? -1.0 : 1.0;
        const double side = rng.uniform() < 0.7 ? inward : -inward;
        const double heading = v.heading[idx] + side * rng.uniform(0.5, 1.15);
        const double length = base_length * rng.uniform(0.5, 1.0) * std::pow(0.8, depth);
        if (child < 10.0) continue;
        const double cont = std::cbrt(upstream * upstream * upstream - child * child * child);
        for (std::size_t i = idx; i < v.caliber.size(); ++i) v.caliber[i] = std::min(v.caliber[i], cont);
        children.push_back(grow_branch(sc, rng, v.points[idx], heading, child, length, v.brightness * rng.uniform(0.9, 1.0)));
    }
    for (auto& c : children) {
        branch_recursively(sc, rng, c, depth + 1, max_depth, base_length, out);
        out.push_back(std::move(c));
    }
}

/// Fraction of a unit pixel covered by a band of half-width r whose axis is
/// at distance d from the pixel centre (1-D box integration, pixel units).
inline double coverage(double d, double r) {
    return std::max(0.0, std::min(d + r, 0.5) - std::max(d - r, -0.5));
}

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

/// Sum of random plane waves with wavelengths in [lambda_lo, lambda_hi].
struct WaveField {
    std::vector<Vec2> k;
    std::vector<double> phase;

    WaveField(Rng& rng, std::size_t n, double lambda_lo, double lambda_hi) {
        for (std::size_t i = 0; i < n; ++i) {
            const double lambda = rng.uniform(lambda_lo, lambda_hi);
            const double a = rng.uniform(0.0, std::numbers::pi);
            k.push_back((2.0 * std::numbers::pi / lambda) * unit(a));
            phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
        }
    }

    double value(Vec2 p) const {
        double v = 0.0;
        for (std::size_t i = 0; i < k.size(); ++i) v += std::cos(dot(k[i], p) + phase[i]);
        return v;
    }

    /// Value and gradient magnitude.
    std::pair<double, double> value_grad(Vec2 p) const {
        double v = 0.0;
        Vec2 g{};
        for (std::size_t i = 0; i < k.size(); ++i) {
            const double arg = dot(k[i], p) + phase[i];
            v += std::cos(arg);
            g = g - std::sin(arg) * k[i];
        }
        return {v, g.norm()};
    }
};

}  // namespace detail

/// Renders a seeded phantom: avascular FAZ disc, arcade trunks with Murray
/// branching, a capillary mesh on the zero set of band-limited noise gated to
/// the requested density, and additive background noise.
inline Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    using namespace detail;
    spec.validate();
    Rng rng(seed);
    const std::size_t n = spec.samples();
    const double s = spec.spacing_um;
    const double half = 0.5 * static_cast<double>(n - 1) * s;
    const Vec2 center{half, half};
    const Scene sc{half, spec.faz_radius_um.draw(rng), 0.4 * s};
    auto pos = [&](std::size_t x, std::size_t y) {
        return Vec2{static_cast<double>(x) * s - half, static_cast<double>(y) * s - half};
    };

    // Vessel tree.
    std::vector<Vessel> vessels;
    const long n_arc = static_cast<long>(std::llround(spec.n_arcades.draw(rng)));
    const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (long k = 0; k < n_arc; ++k) {
        const double angle = phase0 + 2.0 * std::numbers::pi * (static_cast<double>(k) + rng.uniform(-0.3, 0.3)) /
                                          static_cast<double>(n_arc);
        Vessel trunk = grow_arcade(sc, rng, angle, spec.trunk_caliber_um.draw(rng), rng.uniform(0.75, 0.95));
        branch_recursively(sc, rng, trunk, 0, spec.branch_depth, 900.0, vessels);
        vessels.push_back(std::move(trunk));
    }

    // Capillary ring bordering the FAZ.
    if (spec.capillary_density > 0.0) {
        Vessel ring;
        ring.brightness = rng.uniform(0.55, 0.7);
        const double cal = rng.uniform(7.0, 10.0);
        const double r = sc.faz_radius + 0.5 * cal + 1.0;
        const auto steps = static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi * r / sc.step));
        for (std::size_t i = 0; i <= steps; ++i) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(steps);
            ring.points.push_back(r * unit(a));
            ring.heading.push_back(a + 0.5 * std::numbers::pi);
        }
        ring.caliber.assign(ring.points.size(), cal);
        vessels.push_back(std::move(ring));
    }

    Grid<float> clean(n, n, 0.0f);
    Grid<float> caliber(n, n, 0.0f);
    Grid<float> direction(n, n, 0.0f);
    Mask candidate(n, n);
    for (const auto& v : vessels) {
        for (std::size_t i = 0; i + 1 < v.points.size(); ++i) {
            const Vec2 a = v.points[i];
            const Vec2 b = v.points[i + 1];
            const double r_px = 0.5 * v.caliber[i] / s;
            const double reach = (r_px + 1.0) * s;
            const long x0 = static_cast<long>(std::floor((std::min(a.x, b.x) - reach + half) / s));
            const long x1 = static_cast<long>(std::ceil((std::max(a.x, b.x) + reach + half) / s));
            const long y0 = static_cast<long>(std::floor((std::min(a.y, b.y) - reach + half) / s));
            const long y1 = static_cast<long>(std::ceil((std::max(a.y, b.y) + reach + half) / s));
            for (long y = std::max(y0, 0L); y <= std::min(y1, static_cast<long>(n) - 1); ++y)
                for (long x = std::max(x0, 0L); x <= std::min(x1, static_cast<long>(n) - 1); ++x) {
                    const auto ux = static_cast<std::size_t>(x);
                    const auto uy = static_cast<std::size_t>(y);
                    const double d = segment_distance(pos(ux, uy), a, b) / s;
                    const auto val = static_cast<float>(v.brightness * coverage(d, r_px));
                    clean(ux, uy) = std::max(clean(ux, uy), val);
                }
        }
        for (std::size_t i = 0; i < v.points.size(); ++i) {
            const long x = std::lround((v.points[i].x + half) / s);
            const long y = std::lround((v.points[i].y + half) / s);
            if (!clean.contains(x, y)) continue;
            const auto ux = static_cast<std::size_t>(x);
            const auto uy = static_cast<std::size_t>(y);
            if (static_cast<float>(v.caliber[i]) > caliber(ux, uy)) {
                caliber(ux, uy) = static_cast<float>(v.caliber[i]);
                direction(ux, uy) = static_cast<float>(wrap_angle(v.heading[i]));
            }
            candidate(ux, uy) = 1;
        }
    }

    // FAZ disc.
    Mask faz(n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) faz(x, y) = pos(x, y).norm() <= sc.faz_radius;

    // Capillary mesh: a band of the zero set of band-limited noise, opened
    // region by region (highest gate value first) until the rendered mesh
    // covers `capillary_density` of the area outside the FAZ.
    if (spec.capillary_density > 0.0) {
        const WaveField mesh(rng, 48, 50.0, 90.0);
        const WaveField width(rng, 8, 300.0, 600.0);
        const WaveField gate(rng, 24, 200.0, 500.0);
        const double cap_brightness = rng.uniform(0.55, 0.7);
        struct Site {
            double gate;
            std::size_t index;
            float value;
        };
        std::vector<Site> sites;
        std::size_t outside = 0;
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                if (faz(x, y)) continue;
                ++outside;
                const Vec2 p = pos(x, y);
                const auto [v, g] = mesh.value_grad(p);
                if (g <= 0.0) continue;
                const double d_px = std::abs(v) / g / s;
                const double w = 6.0 + 6.0 * (0.5 + 0.5 * std::tanh(0.5 * width.value(p)));
                const double cov = coverage(d_px, 0.5 * w / s);
                if (cov <= 0.0) continue;
                sites.push_back({gate.value(p), y * n + x, static_cast<float>(cap_brightness * cov)});
            }
        std::sort(sites.begin(), sites.end(), [](const Site& a, const Site& b) {
            return a.gate != b.gate ? a.gate > b.gate : a.index < b.index;
        });
        const double target = spec.capillary_density * static_cast<double>(outside);
        double covered = 0.0;
        for (const Site& site : sites) {
            if (covered >= target) break;
            covered += site.value / cap_brightness;
            float& px = clean.storage()[site.index];
            px = std::max(px, site.value);
        }
    }
    for (std::size_t i = 0; i < clean.size(); ++i)
        if (faz.storage()[i]) clean.storage()[i] = 0.0f;

    // Truth centerlines: rasterised path pixels that are ridge points of the
    // clean render across the vessel direction.
    Mask centerline(n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            if (!candidate(x, y) || clean(x, y) <= 0.0f) {
                caliber(x, y) = 0.0f;
                direction(x, y) = 0.0f;
                continue;
            }
            const double a = direction(x, y);
            const double nx = -std::sin(a);
            const double ny = std::cos(a);
            const double m = std::max(std::abs(nx), std::abs(ny));
            const long ox = std::lround(nx / m);
            const long oy = std::lround(ny / m);
            const float c = clean(x, y);
            const float n1 = clean.clamped(static_cast<long>(x) + ox, static_cast<long>(y) + oy);
            const float n2 = clean.clamped(static_cast<long>(x) - ox, static_cast<long>(y) - oy);
            if (c >= n1 && c >= n2) {
                centerline(x, y) = 1;
            } else {
                caliber(x, y) = 0.0f;
                direction(x, y) = 0.0f;
            }
        }

    // Rayleigh background with mean noise_floor.
    const double rayleigh_scale = spec.noise_floor / std::sqrt(0.5 * std::numbers::pi);
    Grid<float> noisy(n, n);
    for (std::size_t i = 0; i < noisy.size(); ++i)
        noisy.storage()[i] = clamp01(clean.storage()[i] + rayleigh_scale * std::sqrt(2.0 * rng.exponential()));

    PhantomTruth truth{std::move(centerline), std::move(caliber), std::move(direction), std::move(faz),
                       std::move(clean), sc.faz_radius, center};
    return {Angiogram(std::move(noisy), s, {0.0, 0.0}, "phantom"), std::move(truth)};
}

// ---------------------------------------------------------------------------

struct DegradeParams {
    double coarse_spacing_um = 22.86;
    double psf_sigma_um = 10.0;
    double speckle_sigma = 0.04;
};

inline nlohmann::json to_json(const DegradeParams& p) {
    return {{"coarse_spacing_um", p.coarse_spacing_um}, {"psf_sigma_um", p.psf_sigma_um}, {"speckle_sigma", p.speckle_sigma}};
}

/// Low-sampling simulation: PSF blur, area-average to the coarse lattice,
/// bicubic back onto the native lattice, multiplicative speckle.
inline Angiogram degrade(const Angiogram& img, const DegradeParams& p, std::uint64_t seed) {
    if (!(p.coarse_spacing_um > img.spacing_um())) throw Error("coarse spacing must be strictly coarser than the native spacing");
    if (p.psf_sigma_um < 0.0 || p.speckle_sigma < 0.0) throw Error("degradation sigmas must be non-negative");
    const Angiogram blurred =
        img.with_pixels(clamp_grid(filters::gaussian_blur(img.pixels(), p.psf_sigma_um / img.spacing_um())));
    const Angiogram coarse = resample(blurred, p.coarse_spacing_um, ResampleMethod::area_average);
    const Angiogram back = resample_to(coarse, img.geometry(), ResampleMethod::bicubic);
    Rng rng(seed);
    Grid<float> out = back.pixels();
    for (auto& v : out.storage()) {
        const double factor = 1.0 + p.speckle_sigma * rng.normal();
        v = clamp01(v * factor);
    }
    return Angiogram(std::move(out), img.spacing_um(), img.origin_um(), "degraded");
}

// ---------------------------------------------------------------------------

struct AugmentParams {
    Range blur_sigma_px{0.0, 1.0};
    Range contrast_gamma{0.8, 1.25};
    Range gauss_noise_sigma{0.0, 0.03};
    Range rotation_deg{-180.0, 180.0};

    void validate() const {
        auto within = [](const Range& r, double lo, double hi) { return r.valid() && r.lo >= lo && r.hi <= hi; };
        if (!within(blur_sigma_px, 0.0, 3.0)) throw Error("blur sigma range must lie within [0, 3] px");
        if (!within(contrast_gamma, 0.5, 2.0)) throw Error("gamma range must lie within [0.5, 2]");
        if (!within(gauss_noise_sigma, 0.0, 0.1)) throw Error("noise sigma range must lie within [0, 0.1]");
        if (!within(rotation_deg, -180.0, 180.0)) throw Error("rotation range must lie within [-180, 180] degrees");
    }

    static AugmentParams identity() { return {{0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}}; }
};

inline nlohmann::json to_json(const AugmentParams& p) {
    auto r = [](const Range& x) { return nlohmann::json::array({x.lo, x.hi}); };
    return {{"blur_sigma_px", r(p.blur_sigma_px)},
            {"contrast_gamma", r(p.contrast_gamma)},
            {"gauss_noise_sigma", r(p.gauss_noise_sigma)},
            {"rotation_deg", r(p.rotation_deg)}};
}

/// Rotation about the image centre, bilinear, zero outside the source.
inline Grid<float> rotate(const Grid<float>& in, double degrees) {
    const double a = degrees * std::numbers::pi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    const double cx = 0.5 * static_cast<double>(in.width() - 1);
    const double cy = 0.5 * static_cast<double>(in.height() - 1);
    const double max_x = static_cast<double>(in.width() - 1);
    const double max_y = static_cast<double>(in.height() - 1);
    constexpr double tol = 1e-9;
    Grid<float> out(in.width(), in.height(), 0.0f);
    for (std::size_t y = 0; y < in.height(); ++y)
        for (std::size_t x = 0; x < in.width(); ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            double u = ca * dx + sa * dy + cx;
            double v = -sa * dx + ca * dy + cy;
            if (u < -tol || v < -tol || u > max_x + tol || v > max_y + tol) continue;
            u = std::clamp(u, 0.0, max_x);
            v = std::clamp(v, 0.0, max_y);
            out(x, y) = clamp01(sample_bilinear(in, u, v));
        }
    return out;
}

/// Blur, gamma, additive Gaussian noise, rotation; parameters drawn
/// uniformly from their ranges in that order.
inline Angiogram augment(const Angiogram& img, const AugmentParams& p, std::uint64_t seed) {
    p.validate();
    Rng rng(seed);
    const double blur = p.blur_sigma_px.draw(rng);
    const double gamma = p.contrast_gamma.draw(rng);
    const double noise = p.gauss_noise_sigma.draw(rng);
    const double angle = p.rotation_deg.draw(rng);

    Grid<double> work = blur > 0.0 ? filters::gaussian_blur(img.pixels(), blur) : to_double(img.pixels());
    for (auto& v : work.storage()) {
        v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
        if (noise > 0.0) v += noise * rng.normal();
    }
    Grid<float> out = clamp_grid(work);
    if (angle != 0.0) out = rotate(out, angle);
    return img.with_pixels(std::move(out));
}

// ---------------------------------------------------------------------------

struct DatasetOptions {
    std::size_t n_train = 35;
    std::size_t n_test = 5;
    std::size_t augment_factor = 7;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    DegradeParams degrade{};
    AugmentParams augment{};
};

/// Writes an unpaired dataset: degraded images under trainA/testA, native
/// images under trainB/testB, with `augment_factor` augmented copies of each
/// training image. Returns the manifest, which is also written to
/// out_dir/manifest.json.
inline nlohmann::json emit_dataset(const PhantomSpec& spec, const DatasetOptions& opt, const fs::path& out_dir) {
    if (opt.n_train == 0 || opt.n_test == 0) throw Error("train and test counts must be positive");
    spec.validate();
    opt.augment.validate();
    std::error_code ec;
    for (const char* d : {"trainA", "trainB", "testA", "testB"}) {
        fs::create_directories(out_dir / d, ec);
        if (ec) throw Error("cannot create " + (out_dir / d).string() + ": " + ec.message());
    }

    struct Item {
        std::vector<nlohmann::json> entries;
    };
    const std::size_t total = opt.n_train + opt.n_test;
    std::vector<Item> items(total);
    parallel_for(total, opt.jobs, [&](std::size_t i) {
        const bool train = i < opt.n_train;
        const std::size_t index = train ? i : i - opt.n_train;
        const std::string split = train ? "train" : "test";
        const std::uint64_t phantom_seed = derive_seed(opt.seed, 2 * i);
        const std::uint64_t degrade_seed = derive_seed(opt.seed, 2 * i + 1);
        const auto ph = generate_phantom(spec, phantom_seed);
        const Angiogram native = ph.image.with_provenance("native");
        const Angiogram low = degrade(native, opt.degrade, degrade_seed);
        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_%04zu", split.c_str(), index);
        const std::size_t copies = train ? 1 + opt.augment_factor : 1;
        for (std::size_t k = 0; k < copies; ++k) {
            for (int dom = 0; dom < 2; ++dom) {
                const char* domain = dom == 0 ? "A" : "B";
                const Angiogram& base = dom == 0 ? low : native;
                std::uint64_t aug_seed = 0;
                Angiogram img = base;
                if (k > 0) {
                    aug_seed = derive_seed(phantom_seed, 16 * k + static_cast<std::uint64_t>(dom));
                    img = augment(base, opt.augment, aug_seed);
                }
                char name[96];
                std::snprintf(name, sizeof name, "%s_aug%02zu.raw", stem, k);
                const fs::path rel = fs::path(split + domain) / name;
                save_angiogram(img, out_dir / rel);
                nlohmann::json e{{"path", rel.generic_string()},
                                 {"domain", domain},
                                 {"split", split},
                                 {"index", index},
                                 {"augment_index", k},
                                 {"phantom_seed", phantom_seed},
                                 {"provenance", img.provenance()}};
                if (dom == 0) e["degrade_seed"] = degrade_seed;
                if (k > 0) e["augment_seed"] = aug_seed;
                items[i].entries.push_back(std::move(e));
            }
        }
    });
    nlohmann::json files = nlohmann::json::array();
    for (auto& it : items)
        for (auto& e : it.entries) files.push_back(std::move(e));
    nlohmann::json manifest{{"config",
                             {{"seed", opt.seed},
                              {"n_train", opt.n_train},
                              {"n_test", opt.n_test},
                              {"augment_factor", opt.augment_factor},
                              {"phantom", to_json(spec)},
                              {"degrade", to_json(opt.degrade)},
                              {"augment", to_json(opt.augment)}}},
                            {"layout", {{"A", "degraded (low sampling)"}, {"B", "native (high sampling)"}}},
                            {"files", std::move(files)}};
    write_json(out_dir / "manifest.json", manifest);
    return manifest;
}

}  // namespace octaq::phantom
