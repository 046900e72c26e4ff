#pragma once

#include <cmath>
#include <vector>

#include "octaq/core.hpp"

namespace octaq::filters {

/// Sampled 1-D kernel centred on index `radius`.
struct Kernel1D {
    std::vector<double> taps;
    long radius = 0;
};

inline long gaussian_radius(double sigma) { return std::max(1L, static_cast<long>(std::ceil(3.0 * sigma))); }

/// Gaussian derivative kernel of order 0, 1 or 2.
///
/// Order 0 is normalised to unit sum. Order 2 is corrected to zero sum and a
/// unit second moment so that it is exact on quadratics at small sigma.
inline Kernel1D gaussian_kernel(double sigma, int order = 0, long radius = -1) {
    if (!(sigma > 0.0)) throw Error("gaussian sigma must be positive");
    Kernel1D k;
    k.radius = radius >= 0 ? radius : gaussian_radius(sigma);
    const double s2 = sigma * sigma;
    std::vector<double> g;
    double sum = 0.0;
    for (long i = -k.radius; i <= k.radius; ++i) {
        const double x = static_cast<double>(i);
        const double v = std::exp(-x * x / (2.0 * s2));
        g.push_back(v);
        sum += v;
    }
    for (auto& v : g) v /= sum;
    k.taps.resize(g.size());
    for (long i = -k.radius; i <= k.radius; ++i) {
        const double x = static_cast<double>(i);
        const double gv = g[static_cast<std::size_t>(i + k.radius)];
        double v = gv;
        if (order == 1) v = -x / s2 * gv;
        if (order == 2) v = (x * x / (s2 * s2) - 1.0 / s2) * gv;
        k.taps[static_cast<std::size_t>(i + k.radius)] = v;
    }
    if (order == 1) {
        // Unit first moment: sum(-x * k) == 1 for a correlation-style kernel.
        double m1 = 0.0;
        for (long i = -k.radius; i <= k.radius; ++i)
            m1 += -static_cast<double>(i) * k.taps[static_cast<std::size_t>(i + k.radius)];
        for (auto& v : k.taps) v /= m1;
    }
    if (order == 2) {
        double m0 = 0.0;
        for (auto v : k.taps) m0 += v;
        for (std::size_t i = 0; i < k.taps.size(); ++i) k.taps[i] -= m0 * g[i];
        double m2 = 0.0;
        for (long i = -k.radius; i <= k.radius; ++i)
            m2 += 0.5 * static_cast<double>(i * i) * k.taps[static_cast<std::size_t>(i + k.radius)];
        for (auto& v : k.taps) v /= m2;
    }
    return k;
}

/// Separable filtering with replicate borders: `kx` along rows, then `ky`
/// along columns. Kernels are applied as convolutions.
template <typename T>
Grid<double> separable(const Grid<T>& in, const Kernel1D& kx, const Kernel1D& ky) {
    const std::size_t w = in.width();
    const std::size_t h = in.height();
    Grid<double> tmp(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long i = -kx.radius; i <= kx.radius; ++i)
                acc += kx.taps[static_cast<std::size_t>(i + kx.radius)] *
                       static_cast<double>(in.clamped(static_cast<long>(x) - i, static_cast<long>(y)));
            tmp(x, y) = acc;
        }
    Grid<double> out(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long i = -ky.radius; i <= ky.radius; ++i)
                acc += ky.taps[static_cast<std::size_t>(i + ky.radius)] *
                       tmp.clamped(static_cast<long>(x), static_cast<long>(y) - i);
            out(x, y) = acc;
        }
    return out;
}

template <typename T>
Grid<double> gaussian_blur(const Grid<T>& in, double sigma_px) {
    if (sigma_px <= 0.0) {
        Grid<double> out(in.width(), in.height());
        for (std::size_t i = 0; i < in.size(); ++i) out.storage()[i] = static_cast<double>(in.storage()[i]);
        return out;
    }
    const auto k = gaussian_kernel(sigma_px);
    return separable(in, k, k);
}

/// Mean over a `window` x `window` neighbourhood, replicate borders.
template <typename T>
Grid<double> box_mean(const Grid<T>& in, long window) {
    if (window < 1 || window % 2 == 0) throw Error("box window must be a positive odd integer");
    Kernel1D k;
    k.radius = window / 2;
    k.taps.assign(static_cast<std::size_t>(window), 1.0 / static_cast<double>(window));
    return separable(in, k, k);
}

}  // namespace octaq::filters
