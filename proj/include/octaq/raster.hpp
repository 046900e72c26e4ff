#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "octaq/core.hpp"

namespace octaq {

/// Footprint-aware description of a raster's sample lattice.
struct RasterGeometry {
    std::size_t width = 0;
    std::size_t height = 0;
    double spacing_um = 1.0;
    Vec2 origin_um{};  ///< physical position of pixel (0,0) center

    Vec2 pixel_center(double i, double j) const {
        return {origin_um.x + i * spacing_um, origin_um.y + j * spacing_um};
    }
};

/// En face flow-intensity raster with isotropic physical spacing.
///
/// Pixel values are finite and lie in [0,1]. The physical extent is measured
/// between the outermost pixel centers: (width-1)*spacing by (height-1)*spacing.
class Angiogram {
public:
    Angiogram(Grid<float> pixels, double spacing_um, Vec2 origin_um = {}, std::string provenance = {})
        : pixels_(std::move(pixels)),
          spacing_um_(spacing_um),
          origin_um_(origin_um),
          provenance_(std::move(provenance)) {
        if (pixels_.width() < 2 || pixels_.height() < 2)
            throw Error("angiogram must be at least 2x2 pixels");
        if (!(spacing_um_ > 0.0) || !std::isfinite(spacing_um_))
            throw Error("angiogram spacing must be positive and finite, got " + std::to_string(spacing_um_));
        if (!std::isfinite(origin_um_.x) || !std::isfinite(origin_um_.y))
            throw Error("angiogram origin must be finite");
        for (float v : pixels_.values()) {
            if (!std::isfinite(v)) throw Error("angiogram contains non-finite pixel values");
            if (v < 0.0f || v > 1.0f) throw Error("angiogram pixel value outside [0,1]");
        }
    }

    const Grid<float>& pixels() const { return pixels_; }
    std::size_t width() const { return pixels_.width(); }
    std::size_t height() const { return pixels_.height(); }
    double spacing_um() const { return spacing_um_; }
    Vec2 origin_um() const { return origin_um_; }
    const std::string& provenance() const { return provenance_; }

    float operator()(std::size_t x, std::size_t y) const { return pixels_(x, y); }

    RasterGeometry geometry() const { return {width(), height(), spacing_um_, origin_um_}; }

    Vec2 extent_um() const {
        return {static_cast<double>(width() - 1) * spacing_um_, static_cast<double>(height() - 1) * spacing_um_};
    }

    Vec2 center_um() const { return origin_um_ + 0.5 * extent_um(); }

    /// Continuous pixel index of a physical point.
    Vec2 to_index(Vec2 p) const { return {(p.x - origin_um_.x) / spacing_um_, (p.y - origin_um_.y) / spacing_um_}; }

    /// Same metadata, new pixels.
    Angiogram with_pixels(Grid<float> pixels) const {
        return Angiogram(std::move(pixels), spacing_um_, origin_um_, provenance_);
    }

    Angiogram with_provenance(std::string provenance) const {
        return Angiogram(pixels_, spacing_um_, origin_um_, std::move(provenance));
    }

    friend bool operator==(const Angiogram&, const Angiogram&) = default;

private:
    Grid<float> pixels_;
    double spacing_um_;
    Vec2 origin_um_;
    std::string provenance_;
};

struct PhysicalRegion {
    Vec2 center_um;
    Vec2 extent_um;  ///< full widths

    PhysicalRegion(Vec2 center, Vec2 extent) : center_um(center), extent_um(extent) {
        if (!(extent.x > 0.0) || !(extent.y > 0.0)) throw Error("region extent must be positive");
    }
};

inline float clamp01(double v) {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

/// Converts arbitrary values to a valid angiogram pixel grid.
inline Grid<float> clamp_grid(const Grid<double>& g) {
    Grid<float> out(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) out.storage()[i] = clamp01(g.storage()[i]);
    return out;
}

inline Grid<double> to_double(const Grid<float>& g) {
    Grid<double> out(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) out.storage()[i] = g.storage()[i];
    return out;
}

namespace detail {

inline std::pair<long, long> cover_range(double lo_index, double hi_index) {
    constexpr double eps = 1e-9;
    return {static_cast<long>(std::floor(lo_index + 0.5 + eps)), static_cast<long>(std::ceil(hi_index - 0.5 - eps))};
}

}  // namespace detail

/// Smallest pixel-aligned window whose pixel footprints cover `region`.
///
/// Windows round outward; a region edge landing exactly on a footprint
/// boundary does not pull in the neighbouring pixel.
inline Angiogram crop_physical(const Angiogram& img, const PhysicalRegion& region) {
    const double s = img.spacing_um();
    const Vec2 lo = img.to_index(region.center_um - 0.5 * region.extent_um);
    const Vec2 hi = img.to_index(region.center_um + 0.5 * region.extent_um);
    constexpr double tol = 1e-9;
    const double max_x = static_cast<double>(img.width()) - 0.5;
    const double max_y = static_cast<double>(img.height()) - 0.5;
    if (lo.x < -0.5 - tol || lo.y < -0.5 - tol || hi.x > max_x + tol || hi.y > max_y + tol)
        throw Error("crop region exceeds the image extent");

    auto [x0, x1] = detail::cover_range(lo.x, hi.x);
    auto [y0, y1] = detail::cover_range(lo.y, hi.y);
    x0 = std::max(x0, 0L);
    y0 = std::max(y0, 0L);
    x1 = std::min(x1, static_cast<long>(img.width()) - 1);
    y1 = std::min(y1, static_cast<long>(img.height()) - 1);
    if (x1 - x0 + 1 < 2 || y1 - y0 + 1 < 2) throw Error("crop region covers fewer than 2x2 pixels");

    const auto w = static_cast<std::size_t>(x1 - x0 + 1);
    const auto h = static_cast<std::size_t>(y1 - y0 + 1);
    Grid<float> out(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            out(x, y) = img(static_cast<std::size_t>(x0) + x, static_cast<std::size_t>(y0) + y);
    const Vec2 origin = img.origin_um() + Vec2{static_cast<double>(x0) * s, static_cast<double>(y0) * s};
    return Angiogram(std::move(out), s, origin, img.provenance());
}

enum class ResampleMethod { nearest, bilinear, bicubic, area_average };

inline ResampleMethod parse_resample_method(const std::string& name) {
    if (name == "nearest") return ResampleMethod::nearest;
    if (name == "bilinear") return ResampleMethod::bilinear;
    if (name == "bicubic") return ResampleMethod::bicubic;
    if (name == "area_average") return ResampleMethod::area_average;
    throw Error("unknown resample method: " + name);
}

namespace detail {

struct Tap {
    long index;
    double weight;
};

inline double cubic_weight(double t) {
    // Keys kernel, a = -0.5
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

/// 1-D interpolation taps for each output sample along one axis.
inline std::vector<std::vector<Tap>> axis_taps(std::size_t n_in, double s_in, double origin_in, std::size_t n_out,
                                               double s_out, double origin_out, ResampleMethod method) {
    std::vector<std::vector<Tap>> taps(n_out);
    const long last = static_cast<long>(n_in) - 1;
    auto clampi = [last](long i) { return std::clamp(i, 0L, last); };
    for (std::size_t j = 0; j < n_out; ++j) {
        const double p = origin_out + static_cast<double>(j) * s_out;
        const double u = (p - origin_in) / s_in;
        auto& t = taps[j];
        switch (method) {
            case ResampleMethod::nearest:
                t.push_back({clampi(std::lround(u)), 1.0});
                break;
            case ResampleMethod::bilinear: {
                const double f = std::floor(u);
                const double frac = u - f;
                const long i0 = static_cast<long>(f);
                t.push_back({clampi(i0), 1.0 - frac});
                if (frac > 0.0) t.push_back({clampi(i0 + 1), frac});
                break;
            }
            case ResampleMethod::bicubic: {
                const double f = std::floor(u);
                const double frac = u - f;
                const long i0 = static_cast<long>(f);
                for (long k = -1; k <= 2; ++k) t.push_back({clampi(i0 + k), cubic_weight(frac - static_cast<double>(k))});
                break;
            }
            case ResampleMethod::area_average: {
                // Output footprint in input index units, clipped to the input footprint.
                const double half = 0.5 * s_out / s_in;
                const double a = std::max(u - half, -0.5);
                const double b = std::min(u + half, static_cast<double>(n_in) - 0.5);
                if (b <= a) {
                    t.push_back({clampi(std::lround(u)), 1.0});
                    break;
                }
                const long i0 = static_cast<long>(std::floor(a + 0.5));
                const long i1 = static_cast<long>(std::ceil(b - 0.5));
                double total = 0.0;
                for (long i = i0; i <= i1; ++i) {
                    const double lo = std::max(a, static_cast<double>(i) - 0.5);
                    const double hi = std::min(b, static_cast<double>(i) + 0.5);
                    if (hi > lo) {
                        t.push_back({clampi(i), hi - lo});
                        total += hi - lo;
                    }
                }
                for (auto& tap : t) tap.weight /= total;
                break;
            }
        }
    }
    return taps;
}

}  // namespace detail

/// Resamples onto an explicit target lattice. Values are clamped to [0,1].
inline Angiogram resample_to(const Angiogram& img, const RasterGeometry& target, ResampleMethod method) {
    if (!(target.spacing_um > 0.0)) throw Error("resample spacing must be positive");
    const auto tx = detail::axis_taps(img.width(), img.spacing_um(), img.origin_um().x, target.width,
                                      target.spacing_um, target.origin_um.x, method);
    const auto ty = detail::axis_taps(img.height(), img.spacing_um(), img.origin_um().y, target.height,
                                      target.spacing_um, target.origin_um.y, method);
    // Separable: rows first into a (target.width x img.height) buffer.
    Grid<double> rows(target.width, img.height());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < target.width; ++x) {
            double acc = 0.0;
            for (const auto& tap : tx[x]) acc += tap.weight * img(static_cast<std::size_t>(tap.index), y);
            rows(x, y) = acc;
        }
    Grid<double> out(target.width, target.height);
    for (std::size_t y = 0; y < target.height; ++y)
        for (std::size_t x = 0; x < target.width; ++x) {
            double acc = 0.0;
            for (const auto& tap : ty[y]) acc += tap.weight * rows(x, static_cast<std::size_t>(tap.index));
            out(x, y) = acc;
        }
    return Angiogram(clamp_grid(out), target.spacing_um, target.origin_um, img.provenance());
}

/// Lattice with `new_spacing_um` whose pixel footprints span the same
/// physical footprint as `img` (to within one output pixel).
inline RasterGeometry footprint_geometry(const Angiogram& img, double new_spacing_um) {
    if (!(new_spacing_um > 0.0)) throw Error("resample spacing must be positive");
    const double s = img.spacing_um();
    auto count = [&](std::size_t n) {
        const double exact = static_cast<double>(n) * s / new_spacing_um;
        return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(exact)));
    };
    RasterGeometry g;
    g.width = count(img.width());
    g.height = count(img.height());
    g.spacing_um = new_spacing_um;
    // Keep the footprint's low corner fixed.
    const double shift = 0.5 * (new_spacing_um - s);
    g.origin_um = img.origin_um() + Vec2{shift, shift};
    return g;
}

inline Angiogram resample(const Angiogram& img, double new_spacing_um, ResampleMethod method) {
    return resample_to(img, footprint_geometry(img, new_spacing_um), method);
}

/// Bilinear sample at a continuous pixel index with replicate borders.
template <typename T>
double sample_bilinear(const Grid<T>& g, double u, double v) {
    const double fx = std::floor(u);
    const double fy = std::floor(v);
    const double ax = u - fx;
    const double ay = v - fy;
    const long x0 = static_cast<long>(fx);
    const long y0 = static_cast<long>(fy);
    const double v00 = g.clamped(x0, y0);
    const double v10 = g.clamped(x0 + 1, y0);
    const double v01 = g.clamped(x0, y0 + 1);
    const double v11 = g.clamped(x0 + 1, y0 + 1);
    return (1.0 - ay) * ((1.0 - ax) * v00 + ax * v10) + ay * ((1.0 - ax) * v01 + ax * v11);
}

inline double mean(const Grid<float>& g) {
    double acc = 0.0;
    for (float v : g.values()) acc += v;
    return acc / static_cast<double>(g.size());
}

/// Disc of pixels whose centers lie within `radius_um` of `center_um`.
inline Mask disc_mask(const RasterGeometry& g, Vec2 center_um, double radius_um) {
    Mask m(g.width, g.height);
    for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) {
            const Vec2 p = g.pixel_center(static_cast<double>(x), static_cast<double>(y));
            if ((p - center_um).norm() <= radius_um) m(x, y) = 1;
        }
    return m;
}

}  // namespace octaq
