#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octaq/filters.hpp"
#include "octaq/io.hpp"
#include "octaq/parallel.hpp"
#include "octaq/raster.hpp"

namespace octaq::perceptual {

/// Per-image feature vectors, one row per image.
struct FeatureSet {
    Eigen::MatrixXd vectors;
    std::string extractor_id;

    FeatureSet() = default;
    FeatureSet(Eigen::MatrixXd v, std::string id) : vectors(std::move(v)), extractor_id(std::move(id)) {
        if (!vectors.allFinite()) throw Error("feature set contains non-finite entries");
    }

    Eigen::Index n() const { return vectors.rows(); }
    Eigen::Index d() const { return vectors.cols(); }
};

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

inline GaussianFit fit_gaussian(const FeatureSet& f) {
    if (f.n() < 2) throw Error("fitting a Gaussian needs at least 2 feature vectors");
    GaussianFit g;
    g.mean = f.vectors.colwise().mean().transpose();
    const Eigen::MatrixXd centered = f.vectors.rowwise() - g.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(f.n() - 1);
    g.covariance = 0.5 * (cov + cov.transpose());
    return g;
}

/// Symmetric PSD square root by eigendecomposition.
///
/// Eigenvalues below -1e-6 * ||S|| are rejected as indefinite; smaller
/// negative values are clamped to zero.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s) {
    const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
    const double scale = std::max(sym.norm(), 1e-300);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-6 * scale) throw Error("covariance is indefinite beyond tolerance");
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Frechet distance between two Gaussians:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the cross term
/// evaluated as Tr((A S_b A)^(1/2)) where A = S_a^(1/2).
inline double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.mean.size() != b.mean.size()) throw Error("Gaussian fits have different dimensionality");
    const Eigen::MatrixXd root_a = sqrtm_psd(a.covariance);
    const Eigen::MatrixXd cross = root_a * b.covariance * root_a;
    const double tr_cross = sqrtm_psd(cross).trace();
    const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_cross;
    if (d < -1e-8) throw Error("Frechet distance is negative beyond tolerance");
    return std::max(d, 0.0);
}

/// Frechet distance between the Gaussian fits of two feature sets.
///
/// With fewer vectors than dimensions the covariances are low rank and the
/// d x d eigensolves are avoided: for centred, scaled rows X_a, S_a = X_a^T X_a
/// and with the thin SVD X_a = U diag(s) V^T, A = S_a^(1/2) = V diag(s) V^T.
/// The nonzero spectrum of A S_b A = C C^T (C = A X_b^T) equals that of
/// C^T C = W^T diag(s^2) W with W = V^T X_b^T, an n_b x n_b matrix.
inline double frechet_distance(const FeatureSet& x, const FeatureSet& y) {
    if (x.n() < 2 || y.n() < 2) throw Error("fitting a Gaussian needs at least 2 feature vectors");
    if (x.d() != y.d()) throw Error("feature sets have different dimensionality");
    if (std::max(x.n(), y.n()) >= x.d()) return frechet_distance(fit_gaussian(x), fit_gaussian(y));
    auto centred = [](const FeatureSet& f, Eigen::VectorXd& mean) {
        mean = f.vectors.colwise().mean().transpose();
        return Eigen::MatrixXd((f.vectors.rowwise() - mean.transpose()) / std::sqrt(static_cast<double>(f.n() - 1)));
    };
    Eigen::VectorXd mu_a;
    Eigen::VectorXd mu_b;
    const Eigen::MatrixXd xa = centred(x, mu_a);
    const Eigen::MatrixXd xb = centred(y, mu_b);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(xa, Eigen::ComputeThinV);
    const Eigen::VectorXd s2 = svd.singularValues().array().square();
    const Eigen::MatrixXd w = svd.matrixV().transpose() * xb.transpose();
    const Eigen::MatrixXd k = w.transpose() * s2.asDiagonal() * w;
    const double tr_cross = sqrtm_psd(k).trace();
    const double d = (mu_a - mu_b).squaredNorm() + xa.squaredNorm() + xb.squaredNorm() - 2.0 * tr_cross;
    if (d < -1e-8) throw Error("Frechet distance is negative beyond tolerance");
    return std::max(d, 0.0);
}

/// Unbiased squared MMD with the cubic kernel k(u,v) = (u.v/d + 1)^3.
inline double kid_mmd2(const FeatureSet& x, const FeatureSet& y) {
    if (x.n() < 2 || y.n() < 2) throw Error("KID needs at least 2 feature vectors in each set");
    if (x.d() != y.d()) throw Error("feature sets have different dimensionality");
    const double inv_d = 1.0 / static_cast<double>(x.d());
    auto kernel_sum = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool skip_diagonal) {
        const Eigen::MatrixXd g = a * b.transpose();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                if (skip_diagonal && i == j) continue;
                const double t = g(i, j) * inv_d + 1.0;
                sum += t * t * t;
            }
        return sum;
    };
    const auto m = static_cast<double>(x.n());
    const auto n = static_cast<double>(y.n());
    const double kxx = kernel_sum(x.vectors, x.vectors, true) / (m * (m - 1.0));
    const double kyy = kernel_sum(y.vectors, y.vectors, true) / (n * (n - 1.0));
    const double kxy = kernel_sum(x.vectors, y.vectors, false) / (m * n);
    return kxx + kyy - 2.0 * kxy;
}

// ---------------------------------------------------------------------------
// Built-in extractor

/// Seeded random-filter feature extractor standing in for a pretrained
/// network: 64x64 bilinear resize, 128 fixed 7x7 filters, ReLU, 4x4 average
/// pooling (2048 raw values), then a fixed orthonormal projection to `d`.
class BuiltinExtractor {
public:
    static constexpr std::uint64_t seed = 0x0C7A5EEDULL;
    static constexpr std::size_t input_side = 64;
    static constexpr std::size_t n_filters = 128;
    static constexpr std::size_t filter_side = 7;
    static constexpr std::size_t pool_side = 4;
    static constexpr std::size_t raw_dim = n_filters * pool_side * pool_side;

    explicit BuiltinExtractor(std::size_t d) : d_(d) {
        if (d_ == 0 || d_ > raw_dim) throw Error("built-in extractor supports 1.." + std::to_string(raw_dim) + " dims");
        Rng rng(seed);
        filters_.resize(n_filters);
        for (auto& f : filters_) {
            f.resize(filter_side * filter_side);
            double mu = 0.0;
            for (auto& v : f) {
                v = rng.normal();
                mu += v;
            }
            mu /= static_cast<double>(f.size());
            double norm = 0.0;
            for (auto& v : f) {
                v -= mu;
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (auto& v : f) v /= norm;
        }
        projection_ = projection(d_);
    }

    std::string id() const { return "builtin-rf-" + std::to_string(d_); }
    std::size_t dim() const { return d_; }

    Eigen::VectorXd raw_features(const Angiogram& img) const {
        const std::size_t n = input_side;
        Grid<double> small(n, n);
        const double sx = static_cast<double>(img.width()) / static_cast<double>(n);
        const double sy = static_cast<double>(img.height()) / static_cast<double>(n);
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
                small(x, y) = sample_bilinear(img.pixels(), (static_cast<double>(x) + 0.5) * sx - 0.5,
                                              (static_cast<double>(y) + 0.5) * sy - 0.5);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(raw_dim));
        const long r = static_cast<long>(filter_side / 2);
        const std::size_t cell = n / pool_side;
        for (std::size_t f = 0; f < n_filters; ++f) {
            const auto& k = filters_[f];
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    double acc = 0.0;
                    for (long dy = -r; dy <= r; ++dy)
                        for (long dx = -r; dx <= r; ++dx) {
                            const long xx = static_cast<long>(x) + dx;
                            const long yy = static_cast<long>(y) + dy;
                            if (!small.contains(xx, yy)) continue;
                            acc += k[static_cast<std::size_t>((dy + r) * static_cast<long>(filter_side) + dx + r)] *
                                   small(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
                        }
                    if (acc <= 0.0) continue;
                    const std::size_t slot = f * pool_side * pool_side + (y / cell) * pool_side + x / cell;
                    out(static_cast<Eigen::Index>(slot)) += acc;
                }
        }
        return out / static_cast<double>(cell * cell);
    }

    Eigen::VectorXd project(const Eigen::VectorXd& raw) const { return projection_ * raw; }
    Eigen::VectorXd features(const Angiogram& img) const { return project(raw_features(img)); }

private:
    /// First `d` rows of a seeded random orthogonal matrix (raw_dim columns).
    static Eigen::MatrixXd projection(std::size_t d) {
        static std::mutex mu;
        static std::map<std::size_t, Eigen::MatrixXd> cache;
        std::lock_guard lock(mu);
        if (auto it = cache.find(d); it != cache.end()) return it->second;
        Rng rng(seed ^ 0xA11CE5ULL);
        const auto rows = static_cast<Eigen::Index>(raw_dim);
        Eigen::MatrixXd g(rows, static_cast<Eigen::Index>(d));
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, g.cols());
        // Fix column signs so the basis does not depend on QR sign conventions.
        const Eigen::MatrixXd r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < q.cols(); ++j)
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);
        Eigen::MatrixXd p = q.transpose();
        cache.emplace(d, p);
        return p;
    }

    std::size_t d_;
    std::vector<std::vector<double>> filters_;
    Eigen::MatrixXd projection_;
};

inline FeatureSet extract_builtin(const std::vector<Angiogram>& images, std::size_t d) {
    const BuiltinExtractor ex(d);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < images.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = ex.features(images[i]).transpose();
    return FeatureSet(std::move(v), ex.id());
}

/// One feature set per requested dimensionality; the raw responses are
/// computed once per image.
inline std::vector<FeatureSet> extract_builtin(const std::vector<Angiogram>& images, const std::vector<std::size_t>& dims,
                                               unsigned jobs = 1) {
    if (dims.empty()) return {};
    const BuiltinExtractor first(dims.front());
    std::vector<Eigen::VectorXd> raw(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) { raw[i] = first.raw_features(images[i]); });
    std::vector<FeatureSet> out;
    for (std::size_t d : dims) {
        const BuiltinExtractor ex(d);
        Eigen::MatrixXd v(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < images.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = ex.project(raw[i]).transpose();
        out.emplace_back(std::move(v), ex.id());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature CSV: first line "<extractor_id>,<d>", then one row of d values per image.

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void export_features_csv(const FeatureSet& f, const fs::path& path) {
    std::string text = f.extractor_id + "," + std::to_string(f.d()) + "\n";
    for (Eigen::Index i = 0; i < f.n(); ++i) {
        for (Eigen::Index j = 0; j < f.d(); ++j) {
            if (j) text += ',';
            text += format_double(f.vectors(i, j));
        }
        text += '\n';
    }
    write_text(path, text);
}

inline FeatureSet import_features_csv(const fs::path& path, std::optional<std::size_t> expected_d = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty feature file");
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error(path.string() + ": header must be '<extractor_id>,<d>'");
    const std::string id = line.substr(0, comma);
    std::size_t d = 0;
    {
        const auto s = line.substr(comma + 1);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), d);
        if (res.ec != std::errc{} || d == 0) throw Error(path.string() + ": invalid dimensionality in header");
    }
    if (expected_d && *expected_d != d)
        throw Error(path.string() + ": expected " + std::to_string(*expected_d) + " dims, header says " + std::to_string(d));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) throw Error(path.string() + ": malformed number on row " + std::to_string(rows.size() + 1));
            row.push_back(v);
            p = res.ptr;
            if (p < end && *p == ',') ++p;
        }
        if (row.size() != d)
            throw Error(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " + std::to_string(row.size()) +
                        " values, expected " + std::to_string(d));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return FeatureSet(std::move(m), id);
}

// ---------------------------------------------------------------------------

struct DimScores {
    std::size_t dim = 0;
    std::string extractor_id;
    double fid_original = 0.0;
    double fid_generated = 0.0;
    double kid_original = 0.0;
    double kid_generated = 0.0;
};

struct PerceptualReport {
    std::vector<DimScores> rows;
    std::size_t n_original = 0;
    std::size_t n_generated = 0;
    std::size_t n_reference = 0;
};

inline DimScores score_features(std::size_t dim, const FeatureSet& orig, const FeatureSet& gen, const FeatureSet& ref) {
    DimScores s;
    s.dim = dim;
    s.extractor_id = ref.extractor_id;
    s.fid_original = frechet_distance(orig, ref);
    s.fid_generated = frechet_distance(gen, ref);
    s.kid_original = kid_mmd2(orig, ref);
    s.kid_generated = kid_mmd2(gen, ref);
    return s;
}

inline void require_pair(std::size_t n, const char* which) {
    if (n < 2)
        throw Error(std::string("perceptual metrics (FID/KID) need at least 2 images per set; the ") + which +
                    " set has " + std::to_string(n));
}

/// FID and KID of the original and generated sets against the reference set,
/// one row per feature dimensionality, using the built-in extractor.
inline PerceptualReport perceptual_report(const std::vector<Angiogram>& original, const std::vector<Angiogram>& generated,
                                          const std::vector<Angiogram>& reference, const std::vector<std::size_t>& dims,
                                          unsigned jobs = 1) {
    require_pair(original.size(), "original");
    require_pair(generated.size(), "generated");
    require_pair(reference.size(), "reference");
    PerceptualReport rep{{}, original.size(), generated.size(), reference.size()};
    const auto fo = extract_builtin(original, dims, jobs);
    const auto fg = extract_builtin(generated, dims, jobs);
    const auto fr = extract_builtin(reference, dims, jobs);
    for (std::size_t k = 0; k < dims.size(); ++k) rep.rows.push_back(score_features(dims[k], fo[k], fg[k], fr[k]));
    return rep;
}

inline nlohmann::json to_json(const PerceptualReport& r) {
    nlohmann::json table = nlohmann::json::object();
    nlohmann::json extractors = nlohmann::json::object();
    for (const auto& row : r.rows) {
        const auto d = std::to_string(row.dim);
        table["FID-" + d] = {{"original", row.fid_original}, {"generated", row.fid_generated}};
        table["KID-" + d] = {{"original", row.kid_original}, {"generated", row.kid_generated}};
        extractors[d] = row.extractor_id;
    }
    return {{"table", table},
            {"extractors", extractors},
            {"kid_estimator", "unbiased, full sets, kernel (u.v/d + 1)^3"},
            {"set_sizes", {{"original", r.n_original}, {"generated", r.n_generated}, {"reference", r.n_reference}}}};
}

}  // namespace octaq::perceptual
