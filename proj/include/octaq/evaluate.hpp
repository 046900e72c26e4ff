#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octaq/flow.hpp"
#include "octaq/io.hpp"
#include "octaq/parallel.hpp"
#include "octaq/perceptual.hpp"
#include "octaq/phantom.hpp"
#include "octaq/vessel.hpp"

namespace octaq::evaluate {

struct ImageSet {
    std::vector<std::string> names;
    std::vector<Angiogram> images;

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }
};

/// Loads every raster in `dir`, sorted by filename. All images must share one
/// spacing.
inline ImageSet load_set(const fs::path& dir, unsigned jobs = 1) {
    const auto files = list_rasters(dir);
    if (files.empty()) throw Error("no raster files in " + dir.string());
    ImageSet set;
    std::vector<std::optional<Angiogram>> slots(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) { slots[i].emplace(load_angiogram(files[i])); });
    for (std::size_t i = 0; i < files.size(); ++i) {
        set.names.push_back(files[i].filename().string());
        set.images.push_back(std::move(*slots[i]));
    }
    const double s0 = set.images.front().spacing_um();
    for (std::size_t i = 1; i < set.images.size(); ++i)
        if (std::abs(set.images[i].spacing_um() - s0) > 1e-9 * s0)
            throw Error("mixed spacings in " + dir.string() + ": " + set.names.front() + " and " + set.names[i]);
    return set;
}

/// FAZ source: "auto" (centred default disc), a mask file shared by all
/// images, or a directory holding <image stem>.png masks.
struct FazSource {
    std::string spec = "auto";

    Mask mask_for(const Angiogram& img, const std::string& image_name) const {
        if (spec == "auto") return vessel::default_faz_mask(img);
        const fs::path p(spec);
        Mask m = fs::is_directory(p) ? load_mask(p / (fs::path(image_name).stem().string() + ".png")) : load_mask(p);
        if (!img.pixels().same_shape(m)) throw Error("FAZ mask size does not match image " + image_name);
        return m;
    }
};

struct Site {
    std::string image;
    Vec2 p0;
    Vec2 p1;
};

inline std::vector<Site> load_sites(const fs::path& path) {
    const json j = read_json(path);
    if (!j.contains("sites") || !j["sites"].is_array()) throw Error(path.string() + ": expected {\"sites\": [...]}");
    std::vector<Site> out;
    for (const auto& s : j["sites"]) {
        try {
            out.push_back({s.at("image").get<std::string>(),
                           {s.at("p0").at(0).get<double>(), s.at("p0").at(1).get<double>()},
                           {s.at("p1").at(0).get<double>(), s.at("p1").at(1).get<double>()}});
        } catch (const json::exception& e) {
            throw Error(path.string() + ": malformed site: " + e.what());
        }
    }
    if (out.empty()) throw Error(path.string() + ": no sites");
    return out;
}

inline json sites_json(const std::vector<Site>& sites) {
    json arr = json::array();
    for (const auto& s : sites) arr.push_back({{"image", s.image}, {"p0", {s.p0.x, s.p0.y}}, {"p1", {s.p1.x, s.p1.y}}});
    return {{"sites", arr}};
}

inline double site_fwhm(const Angiogram& img, const Site& s) {
    return flow::fwhm(flow::intensity_profile(img, s.p0, s.p1, flow::oversampled_count(img, s.p0, s.p1)));
}

struct EvalOptions {
    std::vector<std::size_t> dims{64, 192, 768, 2048};
    FazSource faz{};
    vessel::QuantifyParams quantify{};
    std::optional<fs::path> sites;
    std::optional<fs::path> features_from;
    unsigned jobs = 1;
};

/// Mean and sample standard deviation of the defined values.
inline json summarize(const std::vector<std::optional<double>>& values) {
    std::vector<double> v;
    for (const auto& x : values)
        if (x) v.push_back(*x);
    if (v.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    json sd = nullptr;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return {{"mean", m}, {"std", sd}, {"n", v.size()}};
}

struct SetMetrics {
    json per_image = json::array();
    json biomarkers;
    json snr;
};

inline SetMetrics measure_set(const ImageSet& set, const EvalOptions& opt) {
    const std::size_t n = set.images.size();
    std::vector<json> records(n);
    std::vector<vessel::BiomarkerReport> reports(n);
    std::vector<std::optional<double>> snr(n);
    parallel_for(n, opt.jobs, [&](std::size_t i) {
        const Angiogram& img = set.images[i];
        const Mask faz = opt.faz.mask_for(img, set.names[i]);
        const auto q = vessel::quantify(img, faz, opt.quantify);
        reports[i] = q.report;
        json rec{{"image", set.names[i]},
                 {"biomarkers", vessel::to_json(q.report)},
                 {"faz_threshold", q.threshold},
                 {"adaptive_window_px", q.window}};
        try {
            snr[i] = flow::parafoveal_snr(img, flow::default_annulus(img), faz);
            rec["snr"] = *snr[i];
        } catch (const Error& e) {
            rec["snr"] = nullptr;
            rec["snr_error"] = e.what();
        }
        records[i] = std::move(rec);
    });
    SetMetrics m;
    for (auto& r : records) m.per_image.push_back(std::move(r));
    auto column = [&](auto field) {
        std::vector<std::optional<double>> v;
        for (const auto& r : reports) v.push_back(r.*field);
        return summarize(v);
    };
    using R = vessel::BiomarkerReport;
    m.biomarkers = {{"VAD", column(&R::vad)},
                    {"VSD", column(&R::vsd)},
                    {"VDI", column(&R::vdi)},
                    {"VPI", column(&R::vpi)},
                    {"VCI", column(&R::vci)}};
    m.snr = summarize(snr);
    return m;
}

inline std::vector<perceptual::FeatureSet> imported_features(const fs::path& root, const char* which,
                                                             const std::vector<std::size_t>& dims, std::size_t n_images) {
    std::vector<perceptual::FeatureSet> out;
    for (std::size_t d : dims) {
        const fs::path p = root / which / ("features-" + std::to_string(d) + ".csv");
        auto f = perceptual::import_features_csv(p, d);
        if (static_cast<std::size_t>(f.n()) != n_images)
            throw Error(p.string() + ": " + std::to_string(f.n()) + " feature rows for " + std::to_string(n_images) + " images");
        out.push_back(std::move(f));
    }
    return out;
}

/// Full comparison bundle: perceptual table, biomarker and SNR tables for the
/// three sets, and a caliber summary when sites are given.
inline json evaluate(const ImageSet& original, const ImageSet& generated, const ImageSet& reference,
                     const EvalOptions& opt) {
    perceptual::require_pair(original.images.size(), "original");
    perceptual::require_pair(generated.images.size(), "generated");
    perceptual::require_pair(reference.images.size(), "reference");
    if (opt.dims.empty()) throw Error("no feature dimensionalities requested");

    perceptual::PerceptualReport prep{{}, original.images.size(), generated.images.size(), reference.images.size()};
    {
        std::vector<perceptual::FeatureSet> fo, fg, fr;
        if (opt.features_from) {
            fo = imported_features(*opt.features_from, "orig", opt.dims, original.images.size());
            fg = imported_features(*opt.features_from, "gen", opt.dims, generated.images.size());
            fr = imported_features(*opt.features_from, "ref", opt.dims, reference.images.size());
        } else {
            fo = perceptual::extract_builtin(original.images, opt.dims, opt.jobs);
            fg = perceptual::extract_builtin(generated.images, opt.dims, opt.jobs);
            fr = perceptual::extract_builtin(reference.images, opt.dims, opt.jobs);
        }
        for (std::size_t k = 0; k < opt.dims.size(); ++k)
            prep.rows.push_back(perceptual::score_features(opt.dims[k], fo[k], fg[k], fr[k]));
    }

    const SetMetrics mo = measure_set(original, opt);
    const SetMetrics mg = measure_set(generated, opt);
    const SetMetrics mr = measure_set(reference, opt);

    json bundle;
    bundle["perceptual"] = perceptual::to_json(prep);
    bundle["biomarkers"] = {{"original", mo.biomarkers}, {"generated", mg.biomarkers}, {"reference", mr.biomarkers}};
    bundle["snr"] = {{"original", mo.snr}, {"generated", mg.snr}, {"reference", mr.snr}};
    bundle["per_image"] = {{"original", mo.per_image}, {"generated", mg.per_image}, {"reference", mr.per_image}};

    json ledger = vessel::parameter_ledger(opt.quantify, -1, 0.0);
    ledger.erase("adaptive_window_px");
    ledger.erase("faz_threshold");
    ledger["adaptive_window_rule"] = opt.quantify.window ? json(*opt.quantify.window) : json("2*floor(min(w,h)/16)+1");
    ledger["faz"] = opt.faz.spec == "auto" ? json("default disc, 600 um diameter, image centre") : json("mask files");
    ledger["annulus_um"] = {{"outer_diameter", 2500.0}, {"inner_diameter", 600.0}, {"center", "image centre"}};
    ledger["fwhm_baseline"] = "profile minimum";
    ledger["feature_source"] = opt.features_from ? "imported" : "builtin";
    bundle["parameter_ledger"] = ledger;

    if (opt.sites) {
        const auto sites = load_sites(*opt.sites);
        json rows = json::array();
        std::vector<std::optional<double>> s_orig, s_gen;
        for (const auto& s : sites) {
            json row{{"image", s.image}, {"p0", {s.p0.x, s.p0.y}}, {"p1", {s.p1.x, s.p1.y}}};
            const auto ir = reference.find(s.image);
            const auto io = original.find(s.image);
            const auto ig = generated.find(s.image);
            if (!ir || !io || !ig) throw Error("site image " + s.image + " is missing from one of the sets");
            try {
                const double w_ref = site_fwhm(reference.images[*ir], s);
                const double w_o = site_fwhm(original.images[*io], s);
                const double w_g = site_fwhm(generated.images[*ig], s);
                row["width_um"] = {{"reference", w_ref}, {"original", w_o}, {"generated", w_g}};
                row["S_percent"] = {{"original", flow::caliber_discrepancy(w_o, w_ref)},
                                    {"generated", flow::caliber_discrepancy(w_g, w_ref)}};
                s_orig.push_back(flow::caliber_discrepancy(w_o, w_ref));
                s_gen.push_back(flow::caliber_discrepancy(w_g, w_ref));
            } catch (const Error& e) {
                row["error"] = e.what();
            }
            rows.push_back(std::move(row));
        }
        bundle["caliber"] = {{"sites", rows}, {"S_percent", {{"original", summarize(s_orig)}, {"generated", summarize(s_gen)}}}};
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Demo pipeline

struct DemoOptions {
    std::uint64_t seed = 0;
    std::size_t n_test = 5;
    std::size_t sites_per_image = 5;
    double light_blur_px = 0.5;
    std::vector<std::size_t> dims{64, 192, 768, 2048};
    unsigned jobs = 1;
    phantom::PhantomSpec spec{};
    phantom::DegradeParams degrade{};
};

inline json to_json(const DemoOptions& o) {
    return {{"seed", o.seed},
            {"n_test", o.n_test},
            {"sites_per_image", o.sites_per_image},
            {"light_blur_px", o.light_blur_px},
            {"dims", o.dims},
            {"phantom", phantom::to_json(o.spec)},
            {"degrade", phantom::to_json(o.degrade)}};
}

struct DemoImages {
    std::vector<std::string> names;
    std::vector<phantom::Phantom> phantoms;
    std::vector<Angiogram> native;
    std::vector<Angiogram> degraded;
    std::vector<Angiogram> restored;
};

/// Native phantoms, their degraded counterparts, and the light-blur oracle
/// restoration standing in for trainer output.
inline DemoImages demo_images(const DemoOptions& o) {
    struct Slot {
        std::optional<phantom::Phantom> phantom;
        std::optional<Angiogram> native, degraded, restored;
    };
    std::vector<Slot> slots(o.n_test);
    parallel_for(o.n_test, o.jobs, [&](std::size_t i) {
        auto& sl = slots[i];
        sl.phantom.emplace(phantom::generate_phantom(o.spec, derive_seed(o.seed, 2 * i)));
        sl.native.emplace(sl.phantom->image.with_provenance("native"));
        sl.degraded.emplace(phantom::degrade(*sl.native, o.degrade, derive_seed(o.seed, 2 * i + 1)));
        sl.restored.emplace(clamp_grid(filters::gaussian_blur(sl.native->pixels(), o.light_blur_px)),
                            sl.native->spacing_um(), sl.native->origin_um(), "generated");
    });
    DemoImages d;
    for (auto& sl : slots) {
        d.phantoms.push_back(std::move(*sl.phantom));
        d.native.push_back(std::move(*sl.native));
        d.degraded.push_back(std::move(*sl.degraded));
        d.restored.push_back(std::move(*sl.restored));
    }
    for (std::size_t i = 0; i < o.n_test; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "test_%04zu.raw", i);
        d.names.emplace_back(name);
    }
    return d;
}

/// Seeded sampler over truth centerlines: sites perpendicular to the vessel
/// whose FWHM is measurable in every image of the triple.
inline std::vector<Site> sample_sites(const DemoImages& d, std::size_t i, std::size_t count, std::uint64_t seed) {
    const auto& truth = d.phantoms[i].truth;
    const Angiogram& img = d.native[i];
    const double s = img.spacing_um();
    std::vector<std::pair<std::size_t, std::size_t>> cand;
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            if (truth.centerline(x, y) && truth.caliber_um(x, y) >= 12.0) cand.emplace_back(x, y);
    Rng rng(seed);
    for (std::size_t k = cand.size(); k > 1; --k) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(k) - 1));
        std::swap(cand[k - 1], cand[j]);
    }
    std::vector<Site> out;
    const Vec2 lo = img.origin_um();
    const Vec2 hi = lo + img.extent_um();
    for (const auto& [x, y] : cand) {
        if (out.size() >= count) break;
        const double a = truth.direction_rad(x, y);
        const Vec2 normal{-std::sin(a), std::cos(a)};
        const double half = 0.5 * truth.caliber_um(x, y) + 3.0 * s;
        const Vec2 c = img.geometry().pixel_center(static_cast<double>(x), static_cast<double>(y));
        const Site site{d.names[i], c - half * normal, c + half * normal};
        bool inside = true;
        for (Vec2 p : {site.p0, site.p1}) inside = inside && p.x >= lo.x && p.y >= lo.y && p.x <= hi.x && p.y <= hi.y;
        if (!inside) continue;
        try {
            site_fwhm(d.native[i], site);
            site_fwhm(d.degraded[i], site);
            site_fwhm(d.restored[i], site);
        } catch (const Error&) {
            continue;
        }
        out.push_back(site);
    }
    return out;
}

inline std::string fmt(const json& v, int precision = 4) {
    if (v.is_null()) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v.get<double>());
    return buf;
}

inline std::string summary_text(const json& bundle) {
    std::string t = "Perceptual similarity (vs native)\n";
    t += "  metric        degraded    restored\n";
    std::vector<std::pair<std::string, std::size_t>> keys;
    for (const auto& [k, v] : bundle["perceptual"]["table"].items())
        keys.emplace_back(k.substr(0, 3), std::stoul(k.substr(4)));
    std::sort(keys.begin(), keys.end());
    for (const auto& [metric, dim] : keys) {
        const std::string k = metric + "-" + std::to_string(dim);
        const auto& v = bundle["perceptual"]["table"][k];
        char line[128];
        std::snprintf(line, sizeof line, "  %-12s %10s  %10s\n", k.c_str(), fmt(v["original"]).c_str(),
                      fmt(v["generated"]).c_str());
        t += line;
    }
    t += "\nParafoveal SNR (mean +/- std)\n";
    for (const char* set : {"original", "generated", "reference"}) {
        const auto& s = bundle["snr"][set];
        t += std::string("  ") + set + ": " + fmt(s["mean"], 3) + " +/- " + fmt(s["std"], 3) + "\n";
    }
    t += "\nBiomarkers (mean +/- std)\n";
    for (const char* b : {"VAD", "VSD", "VDI", "VPI", "VCI"}) {
        t += std::string("  ") + b + ":";
        for (const char* set : {"original", "generated", "reference"}) {
            const auto& s = bundle["biomarkers"][set][b];
            t += std::string("  ") + set + " " + fmt(s["mean"]) + " +/- " + fmt(s["std"]);
        }
        t += "\n";
    }
    if (bundle.contains("caliber")) {
        const auto& c = bundle["caliber"]["S_percent"];
        t += "\nCaliber discrepancy S (%): original " + fmt(c["original"]["mean"], 2) + ", generated " +
             fmt(c["generated"]["mean"], 2) + "\n";
    }
    t += "\nFlags\n";
    for (const auto& [k, v] : bundle["flags"].items()) t += "  " + k + ": " + (v.get<bool>() ? "yes" : "no") + "\n";
    return t;
}

/// Direction checks of the degraded (original) set against native.
inline json direction_flags(const json& bundle) {
    auto mean = [&](const char* set, const char* b) { return bundle["biomarkers"][set][b]["mean"]; };
    auto less = [](const json& a, const json& b) { return !a.is_null() && !b.is_null() && a.get<double>() < b.get<double>(); };
    json f;
    f["VDI(degraded) > VDI(native)"] = less(mean("reference", "VDI"), mean("original", "VDI"));
    for (const char* b : {"VAD", "VSD", "VPI", "VCI"})
        f[std::string(b) + "(degraded) < " + b + "(native)"] = less(mean("original", b), mean("reference", b));
    f["SNR(native) > SNR(degraded)"] = less(bundle["snr"]["original"]["mean"], bundle["snr"]["reference"]["mean"]);
    bool fid = true;
    for (const auto& [k, v] : bundle["perceptual"]["table"].items())
        if (k.rfind("FID-", 0) == 0) fid = fid && v["generated"].get<double>() < v["original"].get<double>();
    f["FID(restored) < FID(degraded)"] = fid;
    return f;
}

/// Generates the test phantoms, degrades them, writes the three image sets,
/// FAZ masks and sites under `out_dir`, evaluates, and writes report.json and
/// summary.txt. All paths recorded in the bundle are relative to out_dir.
inline json run_demo(const DemoOptions& o, const fs::path& out_dir) {
    if (o.n_test < 2) throw Error("the demo needs at least 2 test phantoms");
    const DemoImages d = demo_images(o);
    for (const char* sub : {"native", "degraded", "restored", "faz"}) {
        std::error_code ec;
        fs::create_directories(out_dir / sub, ec);
        if (ec) throw Error("cannot create " + (out_dir / sub).string() + ": " + ec.message());
    }
    std::vector<Site> sites;
    for (std::size_t i = 0; i < o.n_test; ++i) {
        save_angiogram(d.native[i], out_dir / "native" / d.names[i]);
        save_angiogram(d.degraded[i], out_dir / "degraded" / d.names[i]);
        save_angiogram(d.restored[i], out_dir / "restored" / d.names[i]);
        save_mask(d.phantoms[i].truth.faz, out_dir / "faz" / (fs::path(d.names[i]).stem().string() + ".png"));
        for (auto& s : sample_sites(d, i, o.sites_per_image, derive_seed(o.seed, 1000 + i))) sites.push_back(s);
    }
    write_json(out_dir / "sites.json", sites_json(sites));

    const ImageSet native{d.names, d.native};
    const ImageSet degraded{d.names, d.degraded};
    const ImageSet restored{d.names, d.restored};
    EvalOptions eo;
    eo.dims = o.dims;
    eo.faz.spec = (out_dir / "faz").string();
    eo.sites = out_dir / "sites.json";
    eo.jobs = o.jobs;
    json bundle = evaluate(degraded, restored, native, eo);
    bundle["parameter_ledger"]["faz"] = "phantom truth masks (faz/)";
    bundle["flags"] = direction_flags(bundle);
    bundle["records"] = json::array();
    for (std::size_t i = 0; i < o.n_test; ++i)
        bundle["records"].push_back({{"image", d.names[i]},
                                     {"phantom_seed", derive_seed(o.seed, 2 * i)},
                                     {"degrade_seed", derive_seed(o.seed, 2 * i + 1)},
                                     {"faz_radius_um", d.phantoms[i].truth.faz_radius_um},
                                     {"native", "native/" + d.names[i]},
                                     {"degraded", "degraded/" + d.names[i]},
                                     {"restored", "restored/" + d.names[i]}});
    bundle["config"] = {{"subcommand", "demo"},
                        {"demo", to_json(o)},
                        {"inputs", {{"original", "degraded/"}, {"generated", "restored/"}, {"reference", "native/"}}},
                        {"restoration", "light Gaussian blur of native (oracle stand-in)"},
                        {"faz", "faz/"},
                        {"sites", "sites.json"}};
    write_json(out_dir / "report.json", bundle);
    write_text(out_dir / "summary.txt", summary_text(bundle));
    return bundle;
}

}  // namespace octaq::evaluate
