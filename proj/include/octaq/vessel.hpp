#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octaq/filters.hpp"
#include "octaq/raster.hpp"

namespace octaq::vessel {

struct FrangiParams {
    double scale_min_px = 0.8;
    double scale_max_px = 1.5;
    double scale_step_px = 0.1;
    double beta = 0.5;  ///< blobness sensitivity
    double c = 30.0;    ///< structureness sensitivity

    void validate() const {
        if (!(scale_min_px > 0.0) || scale_min_px > scale_max_px) throw Error("frangi scales must satisfy 0 < min <= max");
        if (!(scale_step_px > 0.0)) throw Error("frangi scale step must be positive");
        if (!(beta > 0.0) || !(c > 0.0)) throw Error("frangi beta and c must be positive");
    }

    std::vector<double> scales() const {
        std::vector<double> s;
        for (long k = 0;; ++k) {
            const double v = scale_min_px + static_cast<double>(k) * scale_step_px;
            if (v > scale_max_px + 1e-9) break;
            s.push_back(v);
        }
        return s;
    }
};

inline nlohmann::json to_json(const FrangiParams& p) {
    return {{"scale_min_px", p.scale_min_px}, {"scale_max_px", p.scale_max_px}, {"scale_step_px", p.scale_step_px},
            {"beta", p.beta}, {"c", p.c}};
}

/// Noise threshold from FAZ statistics: mean + 2 * sample standard deviation.
inline double faz_threshold(const Angiogram& img, const Mask& faz) {
    if (!img.pixels().same_shape(faz)) throw Error("FAZ mask size does not match the image");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < faz.size(); ++i)
        if (faz.storage()[i]) {
            sum += img.pixels().storage()[i];
            ++n;
        }
    if (n == 0) throw Error("FAZ mask is empty");
    if (n < 2) throw Error("FAZ mask has a single pixel; sample standard deviation is undefined");
    const double m = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < faz.size(); ++i)
        if (faz.storage()[i]) {
            const double d = img.pixels().storage()[i] - m;
            ss += d * d;
        }
    return m + 2.0 * std::sqrt(ss / static_cast<double>(n - 1));
}

/// Zeroes every pixel strictly below `t`.
inline Angiogram apply_hard_threshold(const Angiogram& img, double t) {
    Grid<float> out = img.pixels();
    for (auto& v : out.storage())
        if (v < t) v = 0.0f;
    return img.with_pixels(std::move(out));
}

/// Multiscale bright-vessel response before renormalisation.
inline Grid<double> frangi_response(const Grid<float>& img, const FrangiParams& p) {
    p.validate();
    const double min_side = static_cast<double>(std::min(img.width(), img.height()));
    if (min_side < 6.0 * p.scale_max_px)
        throw Error("image too small for the largest Frangi kernel (min side must be >= 6 * scale_max)");

    Grid<double> best(img.width(), img.height(), 0.0);
    // Eigenvalues below round-off of the image range count as flat.
    double peak = 0.0;
    for (float v : img.values()) peak = std::max(peak, std::abs(static_cast<double>(v)));
    const double flat = 1e-12 * peak;
    const double two_beta2 = 2.0 * p.beta * p.beta;
    const double two_c2 = 2.0 * p.c * p.c;
    for (double sigma : p.scales()) {
        const auto g0 = filters::gaussian_kernel(sigma, 0);
        const auto g1 = filters::gaussian_kernel(sigma, 1);
        const auto g2 = filters::gaussian_kernel(sigma, 2);
        const auto dxx = filters::separable(img, g2, g0);
        const auto dyy = filters::separable(img, g0, g2);
        const auto dxy = filters::separable(img, g1, g1);
        const double norm = sigma * sigma;
        for (std::size_t i = 0; i < best.size(); ++i) {
            const double a = norm * dxx.storage()[i];
            const double c = norm * dyy.storage()[i];
            const double b = norm * dxy.storage()[i];
            const double mid = 0.5 * (a + c);
            const double rad = std::hypot(0.5 * (a - c), b);
            double l1 = mid + rad;
            double l2 = mid - rad;
            if (std::abs(l1) > std::abs(l2)) std::swap(l1, l2);
            if (l2 >= -flat) continue;
            const double rb = l1 / l2;
            const double s2 = l1 * l1 + l2 * l2;
            const double v = std::exp(-rb * rb / two_beta2) * -std::expm1(-s2 / two_c2);
            if (v > best.storage()[i]) best.storage()[i] = v;
        }
    }
    return best;
}

/// Frangi vesselness rescaled to [0,1] by its own maximum.
inline Angiogram frangi_vesselness(const Angiogram& img, const FrangiParams& p = {}) {
    auto r = frangi_response(img.pixels(), p);
    double mx = 0.0;
    for (double v : r.values()) mx = std::max(mx, v);
    if (mx > 0.0)
        for (auto& v : r.storage()) v /= mx;
    return img.with_pixels(clamp_grid(r));
}

inline long default_window(std::size_t width, std::size_t height) {
    return 2 * static_cast<long>(std::min(width, height) / 16) + 1;
}

/// Local-mean adaptive threshold: foreground where the value exceeds the
/// box mean scaled by (1 + (0.5 - sensitivity)).
inline Mask binarize_adaptive(const Angiogram& img, double sensitivity = 0.5, std::optional<long> window = {}) {
    const long win = window.value_or(default_window(img.width(), img.height()));
    if (win < 3 || win % 2 == 0) throw Error("adaptive window must be odd and at least 3, got " + std::to_string(win));
    const auto local = filters::box_mean(img.pixels(), win);
    const double factor = 1.0 + (0.5 - sensitivity);
    Mask out(img.width(), img.height());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.storage()[i] = static_cast<double>(img.pixels().storage()[i]) > local.storage()[i] * factor;
    return out;
}

namespace detail {

/// Neighbours P2..P9 clockwise from north; outside the image counts as 0.
inline std::array<int, 8> neighbours(const Mask& m, long x, long y) {
    static constexpr std::array<std::array<int, 2>, 8> off{
        {{0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};
    std::array<int, 8> p{};
    for (std::size_t k = 0; k < 8; ++k) {
        const long nx = x + off[k][0];
        const long ny = y + off[k][1];
        p[k] = m.contains(nx, ny) && m(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)) ? 1 : 0;
    }
    return p;
}

inline int transitions(const std::array<int, 8>& p) {
    int a = 0;
    for (std::size_t k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
    return a;
}

inline bool removable(const std::array<int, 8>& p) {
    int b = 0;
    for (int v : p) b += v;
    return b >= 2 && b <= 6 && transitions(p) == 1;
}

/// 8-connected component labels, 1-based; background is 0.
inline Grid<int> label8(const Mask& m) {
    Grid<int> lab(m.width(), m.height(), 0);
    int next = 0;
    std::vector<std::pair<long, long>> stack;
    for (std::size_t y0 = 0; y0 < m.height(); ++y0)
        for (std::size_t x0 = 0; x0 < m.width(); ++x0) {
            if (!m(x0, y0) || lab(x0, y0)) continue;
            lab(x0, y0) = ++next;
            stack.assign(1, {static_cast<long>(x0), static_cast<long>(y0)});
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                for (long dy = -1; dy <= 1; ++dy)
                    for (long dx = -1; dx <= 1; ++dx) {
                        if (!m.contains(x + dx, y + dy)) continue;
                        const auto nx = static_cast<std::size_t>(x + dx);
                        const auto ny = static_cast<std::size_t>(y + dy);
                        if (m(nx, ny) && !lab(nx, ny)) {
                            lab(nx, ny) = next;
                            stack.emplace_back(x + dx, y + dy);
                        }
                    }
            }
        }
    return lab;
}

}  // namespace detail

/// Zhang-Suen thinning to one-pixel centerlines.
///
/// Textbook parallel sub-iterations. The one case where they change topology
/// is a component whose every pixel is deleted in the same pass (an isolated
/// 2x2 block); its first marked pixel in raster order is kept instead.
inline Mask skeletonize(const Mask& in) {
    Mask m(in.width(), in.height());
    for (std::size_t i = 0; i < in.size(); ++i) m.storage()[i] = in.storage()[i] != 0;
    const long w = static_cast<long>(m.width());
    const long h = static_cast<long>(m.height());
    std::vector<std::pair<long, long>> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            marked.clear();
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    if (!m(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) continue;
                    const auto p = detail::neighbours(m, x, y);
                    if (!detail::removable(p)) continue;
                    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
                    const bool ok = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                              : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
                    if (ok) marked.emplace_back(x, y);
                }
            if (marked.empty()) continue;
            const auto lab = detail::label8(m);
            for (auto [x, y] : marked) m(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 0;
            int n_labels = 0;
            for (int v : lab.values()) n_labels = std::max(n_labels, v);
            std::vector<char> survives(static_cast<std::size_t>(n_labels) + 1, 0);
            for (std::size_t i = 0; i < m.size(); ++i)
                if (m.storage()[i]) survives[static_cast<std::size_t>(lab.storage()[i])] = 1;
            for (auto [x, y] : marked) {
                const auto ux = static_cast<std::size_t>(x);
                const auto uy = static_cast<std::size_t>(y);
                auto& keep = survives[static_cast<std::size_t>(lab(ux, uy))];
                if (!keep) {
                    m(ux, uy) = 1;
                    keep = 1;
                }
            }
            changed = true;
        }
    }
    return m;
}

/// Foreground pixels with at least one 4-neighbour in the background. The
/// image border counts as background.
inline Mask perimeter_map(const Mask& in) {
    Mask out(in.width(), in.height());
    for (long y = 0; y < static_cast<long>(in.height()); ++y)
        for (long x = 0; x < static_cast<long>(in.width()); ++x) {
            if (!in(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) continue;
            auto bg = [&](long nx, long ny) {
                return !in.contains(nx, ny) || !in(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
            };
            if (bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1))
                out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
        }
    return out;
}

struct VesselMaps {
    Mask area;
    Mask skeleton;
    Mask perimeter;
    double spacing_um = 0.0;
};

inline VesselMaps make_vessel_maps(Mask area, double spacing_um) {
    VesselMaps maps;
    maps.skeleton = skeletonize(area);
    maps.perimeter = perimeter_map(area);
    maps.area = std::move(area);
    maps.spacing_um = spacing_um;
    return maps;
}

/// Mask-derived vascular indices. Empty fields mean the index is undefined
/// for the given maps (empty area or empty skeleton).
struct BiomarkerReport {
    std::optional<double> vad;
    std::optional<double> vsd;
    std::optional<double> vdi;  ///< pixels
    std::optional<double> vpi;
    std::optional<double> vci;
    std::size_t pixel_count = 0;
    std::size_t area_pixels = 0;
    std::size_t skeleton_pixels = 0;
    std::size_t perimeter_pixels = 0;
    double spacing_um = 0.0;

    bool area_empty() const { return area_pixels == 0; }
    bool skeleton_empty() const { return skeleton_pixels == 0; }
};

inline BiomarkerReport compute_biomarkers(const VesselMaps& maps) {
    BiomarkerReport r;
    r.pixel_count = maps.area.size();
    r.area_pixels = count(maps.area);
    r.skeleton_pixels = count(maps.skeleton);
    r.perimeter_pixels = count(maps.perimeter);
    r.spacing_um = maps.spacing_um;
    if (r.pixel_count == 0 || r.area_pixels == 0) return r;
    const auto n = static_cast<double>(r.pixel_count);
    const auto area = static_cast<double>(r.area_pixels);
    const auto skel = static_cast<double>(r.skeleton_pixels);
    const auto perim = static_cast<double>(r.perimeter_pixels);
    r.vad = area / n;
    r.vpi = perim / n;
    r.vci = perim * perim / (4.0 * std::numbers::pi * area);
    if (r.skeleton_pixels > 0) {
        r.vsd = skel / n;
        r.vdi = area / skel;
    }
    return r;
}

inline nlohmann::json to_json(const BiomarkerReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"vad", opt(r.vad)},
            {"vsd", opt(r.vsd)},
            {"vdi", opt(r.vdi)},
            {"vpi", opt(r.vpi)},
            {"vci", opt(r.vci)},
            {"pixel_count", r.pixel_count},
            {"area_pixels", r.area_pixels},
            {"skeleton_pixels", r.skeleton_pixels},
            {"perimeter_pixels", r.perimeter_pixels},
            {"spacing_um", r.spacing_um},
            {"area_empty", r.area_empty()},
            {"skeleton_empty", r.skeleton_empty()}};
}

/// Diameter of the default FAZ disc, centred on the image.
inline constexpr double default_faz_diameter_um = 600.0;

inline Mask default_faz_mask(const Angiogram& img) {
    return disc_mask(img.geometry(), img.center_um(), 0.5 * default_faz_diameter_um);
}

struct QuantifyParams {
    FrangiParams frangi{};
    double sensitivity = 0.5;
    std::optional<long> window;
};

struct Quantification {
    double threshold = 0.0;
    Angiogram thresholded;
    Angiogram vesselness;
    VesselMaps maps;
    BiomarkerReport report;
    long window = 0;
};

/// Full biomarker pipeline: FAZ noise threshold, Frangi vesselness on the
/// thresholded image, adaptive binarisation of the vesselness map, then
/// skeleton and perimeter maps.
inline Quantification quantify(const Angiogram& img, const Mask& faz, const QuantifyParams& p = {}) {
    const double t = faz_threshold(img, faz);
    auto thresholded = apply_hard_threshold(img, t);
    auto vesselness = frangi_vesselness(thresholded, p.frangi);
    const long win = p.window.value_or(default_window(img.width(), img.height()));
    auto maps = make_vessel_maps(binarize_adaptive(vesselness, p.sensitivity, win), img.spacing_um());
    auto report = compute_biomarkers(maps);
    return {t, std::move(thresholded), std::move(vesselness), std::move(maps), report, win};
}

inline nlohmann::json parameter_ledger(const QuantifyParams& p, long window, double threshold) {
    return {{"frangi", to_json(p.frangi)},
            {"faz_threshold", threshold},
            {"adaptive_sensitivity", p.sensitivity},
            {"adaptive_window_px", window},
            {"binarization_input", "frangi"},
            {"skeletonization", "zhang-suen"}};
}

}  // namespace octaq::vessel
