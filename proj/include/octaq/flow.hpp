#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "octaq/raster.hpp"

namespace octaq::flow {

struct IntensityProfile {
    std::vector<double> samples;
    double sample_spacing_um = 0.0;
    Vec2 p0{};
    Vec2 p1{};

    IntensityProfile(std::vector<double> s, double spacing, Vec2 a = {}, Vec2 b = {})
        : samples(std::move(s)), sample_spacing_um(spacing), p0(a), p1(b) {
        if (samples.size() < 8) throw Error("an intensity profile needs at least 8 samples");
        if (!(sample_spacing_um > 0.0)) throw Error("profile sample spacing must be positive");
    }
};

/// Bilinear samples at `n` evenly spaced points from p0 to p1 (inclusive).
inline IntensityProfile intensity_profile(const Angiogram& img, Vec2 p0, Vec2 p1, std::size_t n) {
    if (n < 8) throw Error("an intensity profile needs at least 8 samples");
    const Vec2 lo = img.origin_um();
    const Vec2 hi = lo + img.extent_um();
    constexpr double tol = 1e-9;
    for (Vec2 p : {p0, p1})
        if (p.x < lo.x - tol || p.y < lo.y - tol || p.x > hi.x + tol || p.y > hi.y + tol)
            throw Error("profile endpoint lies outside the image extent");
    const double len = (p1 - p0).norm();
    if (!(len > 0.0)) throw Error("profile endpoints coincide");
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        const Vec2 u = img.to_index(p0 + t * (p1 - p0));
        s[i] = sample_bilinear(img.pixels(), u.x, u.y);
    }
    return IntensityProfile(std::move(s), len / static_cast<double>(n - 1), p0, p1);
}

/// Sample count giving roughly 4 samples per pixel along the segment.
inline std::size_t oversampled_count(const Angiogram& img, Vec2 p0, Vec2 p1) {
    const double px = (p1 - p0).norm() / img.spacing_um();
    return std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(4.0 * px)) + 1);
}

/// Full width at half maximum above the profile minimum, in micrometers.
///
/// Equal maxima that form one contiguous plateau count as a single peak; the
/// crossings are linearly interpolated on each side of it.
inline double fwhm(const IntensityProfile& prof) {
    const auto& s = prof.samples;
    const std::size_t n = s.size();
    double mx = s[0];
    double mn = s[0];
    for (double v : s) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (!(mx > mn)) throw Error("profile is flat; no peak");

    std::vector<std::pair<std::size_t, std::size_t>> plateaus;
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] != mx) continue;
        if (!plateaus.empty() && plateaus.back().second + 1 == i)
            plateaus.back().second = i;
        else
            plateaus.emplace_back(i, i);
    }
    if (plateaus.size() > 1) {
        std::string list;
        for (const auto& [a, b] : plateaus) list += (list.empty() ? "" : ", ") + std::to_string(a);
        throw Error("profile has multiple equal maxima at samples " + list);
    }
    const auto [left_peak, right_peak] = plateaus.front();
    if (left_peak == 0 || right_peak == n - 1) throw Error("profile peak lies at the boundary (no interior maximum)");

    const double half = mn + 0.5 * (mx - mn);
    double left = -1.0;
    for (std::size_t i = left_peak; i > 0; --i) {
        if (s[i - 1] <= half) {
            left = static_cast<double>(i - 1) + (half - s[i - 1]) / (s[i] - s[i - 1]);
            break;
        }
    }
    double right = -1.0;
    for (std::size_t i = right_peak; i + 1 < n; ++i) {
        if (s[i + 1] <= half) {
            right = static_cast<double>(i) + (s[i] - half) / (s[i] - s[i + 1]);
            break;
        }
    }
    if (left < 0.0 || right < 0.0) throw Error("profile does not fall below half maximum on both sides of the peak");
    return (right - left) * prof.sample_spacing_um;
}

/// Relative caliber deviation from a reference width, in percent.
inline double caliber_discrepancy(double w, double w_ref) {
    if (!(w_ref > 0.0)) throw Error("reference width must be positive");
    return std::abs(w - w_ref) / w_ref * 100.0;
}

struct AnnulusSpec {
    Vec2 center_um;
    double outer_diameter_um = 2500.0;
    double inner_diameter_um = 600.0;

    AnnulusSpec(Vec2 center, double outer = 2500.0, double inner = 600.0)
        : center_um(center), outer_diameter_um(outer), inner_diameter_um(inner) {
        if (!(inner_diameter_um > 0.0) || !(inner_diameter_um < outer_diameter_um))
            throw Error("annulus diameters must satisfy 0 < inner < outer");
    }
};

/// Annulus centred on the image's physical centre.
inline AnnulusSpec default_annulus(const Angiogram& img) { return AnnulusSpec(img.center_um()); }

inline Mask annulus_mask(const Angiogram& img, const AnnulusSpec& a) {
    Mask m(img.width(), img.height());
    const double r_in = 0.5 * a.inner_diameter_um;
    const double r_out = 0.5 * a.outer_diameter_um;
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double d =
                (img.geometry().pixel_center(static_cast<double>(x), static_cast<double>(y)) - a.center_um).norm();
            if (d >= r_in && d <= r_out) m(x, y) = 1;
        }
    return m;
}

/// (mean over the parafoveal annulus - mean over the FAZ) / FAZ sample std.
inline double parafoveal_snr(const Angiogram& img, const AnnulusSpec& annulus, const Mask& faz) {
    if (!img.pixels().same_shape(faz)) throw Error("FAZ mask size does not match the image");
    const Vec2 lo = img.origin_um();
    const Vec2 hi = lo + img.extent_um();
    const double r = 0.5 * annulus.outer_diameter_um;
    const Vec2 c = annulus.center_um;
    if (c.x - r < lo.x - 1e-9 || c.y - r < lo.y - 1e-9 || c.x + r > hi.x + 1e-9 || c.y + r > hi.y + 1e-9)
        throw Error("parafoveal annulus extends beyond the image");
    const Mask ring = annulus_mask(img, annulus);

    auto stats = [&](const Mask& m) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m.storage()[i]) {
                sum += img.pixels().storage()[i];
                ++n;
            }
        return std::pair{sum, n};
    };
    const auto [ring_sum, ring_n] = stats(ring);
    const auto [faz_sum, faz_n] = stats(faz);
    if (ring_n == 0) throw Error("parafoveal annulus contains no pixels");
    if (faz_n < 2) throw Error("FAZ region needs at least 2 pixels");
    const double faz_mean = faz_sum / static_cast<double>(faz_n);
    double ss = 0.0;
    for (std::size_t i = 0; i < faz.size(); ++i)
        if (faz.storage()[i]) {
            const double d = img.pixels().storage()[i] - faz_mean;
            ss += d * d;
        }
    const double sd = std::sqrt(ss / static_cast<double>(faz_n - 1));
    if (!(sd > 0.0)) throw Error("FAZ intensity has zero variance; SNR undefined");
    return (ring_sum / static_cast<double>(ring_n) - faz_mean) / sd;
}

}  // namespace octaq::flow
