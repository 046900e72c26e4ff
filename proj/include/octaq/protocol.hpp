#pragma once

#include <cmath>
#include <string>

#include "octaq/core.hpp"

namespace octaq::protocol {

/// Square raster scan: field of view, sample spacing, repeated B-scans per
/// location and the acquisition window.
struct ScanProtocol {
    double fov_um;
    double spacing_um;
    int repeats = 2;
    double duration_s = 4.0;

    ScanProtocol(double fov, double spacing, int reps = 2, double duration = 4.0)
        : fov_um(fov), spacing_um(spacing), repeats(reps), duration_s(duration) {
        if (!(fov_um > 0.0) || !(spacing_um > 0.0) || repeats < 1 || !(duration_s > 0.0))
            throw Error("scan protocol fields must be positive");
        if (spacing_um > fov_um) throw Error("scan spacing cannot exceed the field of view");
    }
};

inline double sampling_spacing(double fov_um, long samples) {
    if (samples < 2) throw Error("at least 2 samples per direction are required");
    if (!(fov_um > 0.0)) throw Error("field of view must be positive");
    return fov_um / static_cast<double>(samples);
}

/// Sampling spacing at the Nyquist limit for a given optical resolution.
inline double nyquist_spacing(double optical_resolution_um) {
    if (!(optical_resolution_um > 0.0)) throw Error("optical resolution must be positive");
    return optical_resolution_um / 2.0;
}

/// A-line rate needed to acquire the whole protocol inside its window:
/// (fov/spacing)^2 evenly spaced positions, each scanned `repeats` times.
inline double required_aline_rate(const ScanProtocol& p) {
    const double per_axis = p.fov_um / p.spacing_um;
    return per_axis * per_axis * static_cast<double>(p.repeats) / p.duration_s;
}

}  // namespace octaq::protocol
