// octaq: command-line front end for the angiogram toolkit.
//
// Exit codes: 0 success, 1 computation error, 2 argument error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "octaq/evaluate.hpp"
#include "octaq/flow.hpp"
#include "octaq/io.hpp"
#include "octaq/perceptual.hpp"
#include "octaq/phantom.hpp"
#include "octaq/protocol.hpp"
#include "octaq/vessel.hpp"

using namespace octaq;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::uint64_t seed = 0;
    std::string seed_source = "default";
    unsigned jobs = 1;
    std::string format = "json";
    std::string report;
};

phantom::Range parse_range(const std::string& text, const std::string& flag) {
    const auto comma = text.find(',');
    try {
        std::size_t used = 0;
        if (comma == std::string::npos) {
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return {v, v};
        }
        const std::string a = text.substr(0, comma);
        const std::string b = text.substr(comma + 1);
        const double lo = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        const double hi = std::stod(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw CLI::ValidationError(flag, "expected a value or 'lo,hi', got '" + text + "'");
    }
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            dims.push_back(static_cast<std::size_t>(v));
        } catch (const std::logic_error&) {
            throw CLI::ValidationError("--dims", "expected positive integers separated by commas, got '" + text + "'");
        }
    }
    if (dims.empty()) throw CLI::ValidationError("--dims", "no dimensionalities given");
    return dims;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
    } else {
        out.emplace_back(prefix, j.is_string() ? j.get<std::string>() : j.dump());
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

void emit(const json& report, const Common& c) {
    std::string text;
    if (c.format == "csv") {
        std::vector<std::pair<std::string, std::string>> rows;
        flatten(report, "", rows);
        text = "key,value\n";
        for (const auto& [k, v] : rows) text += csv_field(k) + "," + csv_field(v) + "\n";
    } else {
        text = report.dump(2) + "\n";
    }
    if (c.report.empty())
        std::cout << text;
    else
        write_text(c.report, text);
}

json common_config(const Common& c, const std::string& sub) {
    return {{"subcommand", sub}, {"seed", c.seed}, {"seed_source", c.seed_source}, {"jobs", c.jobs},
            {"format", c.format}, {"version", kVersion}};
}

void add_output_options(CLI::App* sub, Common& c) {
    sub->add_option("--report", c.report, "Write the report here instead of standard output");
    sub->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

void add_seed_option(CLI::App* sub, std::optional<std::uint64_t>& seed_flag) {
    sub->add_option("--seed", seed_flag, "Seed (default: $OCTAQ_SEED, else 0)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OCTA digital-resolution toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Common c;
    std::optional<std::uint64_t> seed_flag;
    long jobs = 1;
    app.add_option("--jobs", jobs, "Worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);

    // protocol ------------------------------------------------------------
    auto* cmd_protocol = app.add_subcommand("protocol", "Sampling spacing and required A-line rate");
    double fov_mm = 0.0;
    std::optional<long> samples;
    std::optional<double> spacing_um;
    int repeats = 2;
    double duration_s = 4.0;
    double optical_res_um = 15.0;
    cmd_protocol->add_option("--fov-mm", fov_mm, "Square field of view side (mm)")->required()->check(CLI::PositiveNumber);
    auto* opt_samples = cmd_protocol->add_option("--samples", samples, "Samples per direction");
    auto* opt_spacing = cmd_protocol->add_option("--spacing-um", spacing_um, "Sample spacing (um)");
    opt_samples->excludes(opt_spacing);
    cmd_protocol->add_option("--repeats", repeats, "Repeated B-scans per location")->check(CLI::PositiveNumber);
    cmd_protocol->add_option("--duration-s", duration_s, "Acquisition window (s)")->check(CLI::PositiveNumber);
    cmd_protocol->add_option("--optical-resolution-um", optical_res_um, "Transverse optical resolution (um)")
        ->check(CLI::PositiveNumber);
    add_output_options(cmd_protocol, c);

    // phantom -------------------------------------------------------------
    auto* cmd_phantom = app.add_subcommand("phantom", "Generate a phantom or a training dataset");
    phantom::PhantomSpec spec;
    std::string faz_range = "250,350", arcade_range = "4,8", trunk_range = "25,45";
    std::string phantom_out, truth_dir, dataset_dir;
    std::size_t n_train = 35, n_test = 5, augment_factor = 7;
    cmd_phantom->add_option("--fov-um", spec.fov_um, "Field of view (um)");
    cmd_phantom->add_option("--spacing-um", spec.spacing_um, "Sample spacing (um)");
    cmd_phantom->add_option("--faz-radius-um", faz_range, "FAZ radius range lo,hi (um)");
    cmd_phantom->add_option("--arcades", arcade_range, "Arcade count range lo,hi");
    cmd_phantom->add_option("--branch-depth", spec.branch_depth, "Branching depth");
    cmd_phantom->add_option("--trunk-caliber-um", trunk_range, "Trunk caliber range lo,hi (um)");
    cmd_phantom->add_option("--capillary-density", spec.capillary_density, "Capillary area fraction outside the FAZ");
    cmd_phantom->add_option("--noise-floor", spec.noise_floor, "Mean background level");
    auto* opt_out = cmd_phantom->add_option("--out", phantom_out, "Output image (.raw, .png or .pgm)");
    cmd_phantom->add_option("--truth-dir", truth_dir, "Write truth masks and centerline table here");
    auto* opt_dataset = cmd_phantom->add_option("--dataset", dataset_dir, "Emit a train/test dataset into this directory");
    cmd_phantom->add_option("--n-train", n_train, "Training phantoms (dataset mode)");
    cmd_phantom->add_option("--n-test", n_test, "Test phantoms (dataset mode)");
    cmd_phantom->add_option("--augment-factor", augment_factor, "Augmented copies per training image (dataset mode)");
    opt_out->excludes(opt_dataset);
    add_seed_option(cmd_phantom, seed_flag);
    add_output_options(cmd_phantom, c);

    // degrade -------------------------------------------------------------
    auto* cmd_degrade = app.add_subcommand("degrade", "Simulate low transverse sampling");
    std::string in_path, out_path;
    phantom::DegradeParams dp;
    cmd_degrade->add_option("--in", in_path, "Input image")->required();
    cmd_degrade->add_option("--out", out_path, "Output image")->required();
    cmd_degrade->add_option("--coarse-spacing-um", dp.coarse_spacing_um, "Coarse sampling spacing (um)");
    cmd_degrade->add_option("--psf-sigma-um", dp.psf_sigma_um, "Gaussian PSF sigma (um)");
    cmd_degrade->add_option("--speckle-sigma", dp.speckle_sigma, "Multiplicative speckle sigma");
    add_seed_option(cmd_degrade, seed_flag);
    add_output_options(cmd_degrade, c);

    // augment -------------------------------------------------------------
    auto* cmd_augment = app.add_subcommand("augment", "Random blur, gamma, noise and rotation");
    std::string blur_range = "0,1", gamma_range = "0.8,1.25", noise_range = "0,0.03", rot_range = "-180,180";
    cmd_augment->add_option("--in", in_path, "Input image")->required();
    cmd_augment->add_option("--out", out_path, "Output image")->required();
    cmd_augment->add_option("--blur-px", blur_range, "Blur sigma range lo,hi (px)");
    cmd_augment->add_option("--gamma", gamma_range, "Gamma range lo,hi");
    cmd_augment->add_option("--noise", noise_range, "Additive noise sigma range lo,hi");
    cmd_augment->add_option("--rotation-deg", rot_range, "Rotation range lo,hi (degrees)");
    add_seed_option(cmd_augment, seed_flag);
    add_output_options(cmd_augment, c);

    // quantify ------------------------------------------------------------
    auto* cmd_quantify = app.add_subcommand("quantify", "Vessel maps and biomarkers of one image");
    std::string faz_spec = "auto", maps_dir;
    vessel::QuantifyParams qp;
    std::optional<long> window;
    auto add_quant_options = [&](CLI::App* sub) {
        sub->add_option("--sensitivity", qp.sensitivity, "Adaptive threshold sensitivity")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--window", window, "Adaptive threshold window (odd, px)");
        sub->add_option("--frangi-scale-min", qp.frangi.scale_min_px, "Smallest Frangi scale (px)");
        sub->add_option("--frangi-scale-max", qp.frangi.scale_max_px, "Largest Frangi scale (px)");
        sub->add_option("--frangi-scale-step", qp.frangi.scale_step_px, "Frangi scale step (px)");
        sub->add_option("--frangi-beta", qp.frangi.beta, "Frangi blobness sensitivity");
        sub->add_option("--frangi-c", qp.frangi.c, "Frangi structureness sensitivity");
    };
    cmd_quantify->add_option("--in", in_path, "Input image")->required();
    cmd_quantify->add_option("--faz", faz_spec, "FAZ mask file or 'auto'");
    cmd_quantify->add_option("--maps-dir", maps_dir, "Write area/skeleton/perimeter PNG maps here");
    add_quant_options(cmd_quantify);
    add_output_options(cmd_quantify, c);

    // caliber -------------------------------------------------------------
    auto* cmd_caliber = app.add_subcommand("caliber", "FWHM vessel widths and caliber discrepancy");
    std::string ref_path, sites_path;
    cmd_caliber->add_option("--in", in_path, "Image under test")->required();
    cmd_caliber->add_option("--ref", ref_path, "Reference image")->required();
    cmd_caliber->add_option("--sites", sites_path, "Sites JSON {\"sites\": [{\"p0\": [x,y], \"p1\": [x,y]}]}")->required();
    add_output_options(cmd_caliber, c);

    // snr -----------------------------------------------------------------
    auto* cmd_snr = app.add_subcommand("snr", "Parafoveal SNR");
    double outer_um = 2500.0, inner_um = 600.0;
    std::optional<std::vector<double>> center;
    cmd_snr->add_option("--in", in_path, "Input image")->required();
    cmd_snr->add_option("--faz", faz_spec, "FAZ mask file or 'auto'");
    cmd_snr->add_option("--outer-um", outer_um, "Annulus outer diameter (um)");
    cmd_snr->add_option("--inner-um", inner_um, "Annulus inner diameter (um)");
    cmd_snr->add_option("--center-um", center, "Annulus centre x y (um); default image centre")->expected(2);
    add_output_options(cmd_snr, c);

    // perceptual / evaluate -----------------------------------------------
    std::string orig_dir, gen_dir, ref_dir, dims_text = "64,192,768,2048", features_from, export_dir;
    auto* cmd_perceptual = app.add_subcommand("perceptual", "FID and KID tables");
    cmd_perceptual->add_option("--orig", orig_dir, "Original image directory")->required();
    cmd_perceptual->add_option("--gen", gen_dir, "Generated image directory")->required();
    cmd_perceptual->add_option("--ref", ref_dir, "Reference image directory")->required();
    cmd_perceptual->add_option("--dims", dims_text, "Feature dimensionalities");
    cmd_perceptual->add_option("--features-from", features_from,
                               "Read DIR/{orig,gen,ref}/features-<d>.csv instead of the built-in extractor");
    cmd_perceptual->add_option("--export-features", export_dir, "Write built-in features as CSV under this directory");
    add_output_options(cmd_perceptual, c);

    auto* cmd_evaluate = app.add_subcommand("evaluate", "Full comparison bundle");
    std::string summary_path;
    cmd_evaluate->add_option("--orig", orig_dir, "Original (low sampling) image directory")->required();
    cmd_evaluate->add_option("--gen", gen_dir, "Generated image directory")->required();
    cmd_evaluate->add_option("--ref", ref_dir, "Reference (native) image directory")->required();
    cmd_evaluate->add_option("--faz", faz_spec, "'auto', a mask file, or a directory of <stem>.png masks");
    cmd_evaluate->add_option("--dims", dims_text, "Feature dimensionalities");
    cmd_evaluate->add_option("--sites", sites_path, "Caliber sites JSON (with image names)");
    cmd_evaluate->add_option("--features-from", features_from, "Imported feature CSV root");
    cmd_evaluate->add_option("--summary", summary_path, "Write a plain-text summary here");
    add_quant_options(cmd_evaluate);
    add_output_options(cmd_evaluate, c);

    // demo ----------------------------------------------------------------
    auto* cmd_demo = app.add_subcommand("demo", "End-to-end run on seeded phantoms");
    std::string demo_out;
    evaluate::DemoOptions demo;
    cmd_demo->add_option("--out", demo_out, "Output directory")->required();
    cmd_demo->add_option("--n-test", demo.n_test, "Test phantoms");
    cmd_demo->add_option("--dims", dims_text, "Feature dimensionalities");
    add_seed_option(cmd_demo, seed_flag);

    try {
        app.parse(argc, argv);
        if (seed_flag) {
            c.seed = *seed_flag;
            c.seed_source = "flag";
        } else if (const char* env = std::getenv("OCTAQ_SEED")) {
            const std::string s(env);
            std::uint64_t v = 0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw CLI::ValidationError("OCTAQ_SEED", "must be an unsigned integer, got '" + s + "'");
            c.seed = v;
            c.seed_source = "OCTAQ_SEED";
        }
        c.jobs = jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<unsigned>(jobs);
        if (cmd_protocol->parsed() && !samples && !spacing_um)
            throw CLI::RequiredError("--samples or --spacing-um");
        if (cmd_phantom->parsed()) {
            spec.faz_radius_um = parse_range(faz_range, "--faz-radius-um");
            spec.n_arcades = parse_range(arcade_range, "--arcades");
            spec.trunk_caliber_um = parse_range(trunk_range, "--trunk-caliber-um");
            if (phantom_out.empty() && dataset_dir.empty()) throw CLI::RequiredError("--out or --dataset");
        }
        if (cmd_quantify->parsed() || cmd_evaluate->parsed()) qp.window = window;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_protocol->parsed()) {
            const double fov_um = fov_mm * 1000.0;
            const double s = samples ? protocol::sampling_spacing(fov_um, *samples) : *spacing_um;
            const protocol::ScanProtocol p(fov_um, s, repeats, duration_s);
            const protocol::ScanProtocol unit_ratio(fov_um, s, 1, 1.0);
            json r;
            r["config"] = common_config(c, "protocol");
            r["config"]["fov_um"] = fov_um;
            if (samples) r["config"]["samples"] = *samples;
            r["config"]["repeats"] = repeats;
            r["config"]["duration_s"] = duration_s;
            r["config"]["optical_resolution_um"] = optical_res_um;
            r["spacing_um"] = s;
            r["rate_hz"] = protocol::required_aline_rate(p);
            r["nyquist_spacing_um"] = protocol::nyquist_spacing(optical_res_um);
            r["nyquist_ok"] = s <= protocol::nyquist_spacing(optical_res_um);
            r["conventions"] = {{"repeats_over_duration", {{"repeats", repeats}, {"duration_s", duration_s},
                                                           {"rate_hz", protocol::required_aline_rate(p)}}},
                                {"unit_ratio", {{"repeats", 1}, {"duration_s", 1.0},
                                                {"rate_hz", protocol::required_aline_rate(unit_ratio)}}}};
            emit(r, c);
        } else if (cmd_phantom->parsed()) {
            json r;
            r["config"] = common_config(c, "phantom");
            r["config"]["phantom"] = phantom::to_json(spec);
            if (!dataset_dir.empty()) {
                phantom::DatasetOptions o;
                o.n_train = n_train;
                o.n_test = n_test;
                o.augment_factor = augment_factor;
                o.seed = c.seed;
                o.jobs = c.jobs;
                r["manifest"] = "manifest.json";
                r["files"] = phantom::emit_dataset(spec, o, dataset_dir)["files"].size();
                r["config"]["dataset"] = dataset_dir;
            } else {
                const auto ph = phantom::generate_phantom(spec, c.seed);
                save_angiogram(ph.image, phantom_out);
                r["config"]["out"] = phantom_out;
                r["faz_radius_um"] = ph.truth.faz_radius_um;
                r["centerline_pixels"] = count(ph.truth.centerline);
                if (!truth_dir.empty()) {
                    fs::create_directories(truth_dir);
                    save_mask(ph.truth.centerline, fs::path(truth_dir) / "centerline.png");
                    save_mask(ph.truth.faz, fs::path(truth_dir) / "faz.png");
                    json pts = json::array();
                    for (std::size_t y = 0; y < ph.truth.centerline.height(); ++y)
                        for (std::size_t x = 0; x < ph.truth.centerline.width(); ++x)
                            if (ph.truth.centerline(x, y))
                                pts.push_back({{"x", x}, {"y", y}, {"caliber_um", ph.truth.caliber_um(x, y)},
                                               {"direction_rad", ph.truth.direction_rad(x, y)}});
                    write_json(fs::path(truth_dir) / "centerline.json", {{"spacing_um", spec.spacing_um}, {"points", pts}});
                    r["config"]["truth_dir"] = truth_dir;
                }
            }
            emit(r, c);
        } else if (cmd_degrade->parsed()) {
            const auto img = load_angiogram(in_path);
            const auto out = phantom::degrade(img, dp, c.seed);
            save_angiogram(out, out_path);
            json r{{"config", common_config(c, "degrade")}};
            r["config"]["in"] = in_path;
            r["config"]["out"] = out_path;
            r["config"]["degrade"] = phantom::to_json(dp);
            r["width"] = out.width();
            r["height"] = out.height();
            r["spacing_um"] = out.spacing_um();
            emit(r, c);
        } else if (cmd_augment->parsed()) {
            phantom::AugmentParams ap{parse_range(blur_range, "--blur-px"), parse_range(gamma_range, "--gamma"),
                                      parse_range(noise_range, "--noise"), parse_range(rot_range, "--rotation-deg")};
            try {
                ap.validate();
            } catch (const Error& e) {
                std::cerr << "octaq augment: " << e.what() << "\n";
                return 2;
            }
            const auto out = phantom::augment(load_angiogram(in_path), ap, c.seed);
            save_angiogram(out, out_path);
            json r{{"config", common_config(c, "augment")}};
            r["config"]["in"] = in_path;
            r["config"]["out"] = out_path;
            r["config"]["augment"] = phantom::to_json(ap);
            emit(r, c);
        } else if (cmd_quantify->parsed()) {
            const auto img = load_angiogram(in_path);
            const evaluate::FazSource faz{faz_spec};
            const auto q = vessel::quantify(img, faz.mask_for(img, fs::path(in_path).filename().string()), qp);
            json r{{"config", common_config(c, "quantify")}};
            r["config"]["in"] = in_path;
            r["config"]["faz"] = faz_spec;
            r["biomarkers"] = vessel::to_json(q.report);
            r["parameter_ledger"] = vessel::parameter_ledger(qp, q.window, q.threshold);
            if (!maps_dir.empty()) {
                fs::create_directories(maps_dir);
                save_mask(q.maps.area, fs::path(maps_dir) / "area.png");
                save_mask(q.maps.skeleton, fs::path(maps_dir) / "skeleton.png");
                save_mask(q.maps.perimeter, fs::path(maps_dir) / "perimeter.png");
                r["config"]["maps_dir"] = maps_dir;
            }
            emit(r, c);
        } else if (cmd_caliber->parsed()) {
            const auto img = load_angiogram(in_path);
            const auto ref = load_angiogram(ref_path);
            const json sj = read_json(sites_path);
            if (!sj.contains("sites") || !sj["sites"].is_array() || sj["sites"].empty())
                throw Error(sites_path + ": expected a non-empty {\"sites\": [...]}");
            json rows = json::array();
            std::vector<std::optional<double>> svals;
            for (const auto& s : sj["sites"]) {
                evaluate::Site site;
                try {
                    site = {s.value("image", std::string{}),
                            {s.at("p0").at(0).get<double>(), s.at("p0").at(1).get<double>()},
                            {s.at("p1").at(0).get<double>(), s.at("p1").at(1).get<double>()}};
                } catch (const json::exception& e) {
                    throw Error(sites_path + ": malformed site: " + e.what());
                }
                json row{{"p0", {site.p0.x, site.p0.y}}, {"p1", {site.p1.x, site.p1.y}}};
                try {
                    const double w = evaluate::site_fwhm(img, site);
                    const double w_ref = evaluate::site_fwhm(ref, site);
                    row["width_um"] = w;
                    row["ref_width_um"] = w_ref;
                    row["S_percent"] = flow::caliber_discrepancy(w, w_ref);
                    svals.push_back(flow::caliber_discrepancy(w, w_ref));
                } catch (const Error& e) {
                    row["error"] = e.what();
                }
                rows.push_back(std::move(row));
            }
            json r{{"config", common_config(c, "caliber")}};
            r["config"]["in"] = in_path;
            r["config"]["ref"] = ref_path;
            r["config"]["sites"] = sites_path;
            r["sites"] = rows;
            r["S_percent"] = evaluate::summarize(svals);
            r["parameter_ledger"] = {{"fwhm_baseline", "profile minimum"}, {"samples_per_pixel", 4}};
            emit(r, c);
        } else if (cmd_snr->parsed()) {
            const auto img = load_angiogram(in_path);
            const Vec2 ctr = center ? Vec2{(*center)[0], (*center)[1]} : img.center_um();
            const flow::AnnulusSpec ann(ctr, outer_um, inner_um);
            const evaluate::FazSource faz{faz_spec};
            json r{{"config", common_config(c, "snr")}};
            r["config"]["in"] = in_path;
            r["config"]["faz"] = faz_spec;
            r["config"]["annulus_um"] = {{"center", {ctr.x, ctr.y}}, {"outer_diameter", outer_um}, {"inner_diameter", inner_um}};
            r["snr"] = flow::parafoveal_snr(img, ann, faz.mask_for(img, fs::path(in_path).filename().string()));
            emit(r, c);
        } else if (cmd_perceptual->parsed()) {
            const auto dims = parse_dims(dims_text);
            const auto so = evaluate::load_set(orig_dir, c.jobs);
            const auto sg = evaluate::load_set(gen_dir, c.jobs);
            const auto sr = evaluate::load_set(ref_dir, c.jobs);
            perceptual::require_pair(so.images.size(), "original");
            perceptual::require_pair(sg.images.size(), "generated");
            perceptual::require_pair(sr.images.size(), "reference");
            perceptual::PerceptualReport rep{{}, so.images.size(), sg.images.size(), sr.images.size()};
            std::vector<perceptual::FeatureSet> fo, fg, fr;
            if (!features_from.empty()) {
                fo = evaluate::imported_features(features_from, "orig", dims, so.images.size());
                fg = evaluate::imported_features(features_from, "gen", dims, sg.images.size());
                fr = evaluate::imported_features(features_from, "ref", dims, sr.images.size());
            } else {
                fo = perceptual::extract_builtin(so.images, dims, c.jobs);
                fg = perceptual::extract_builtin(sg.images, dims, c.jobs);
                fr = perceptual::extract_builtin(sr.images, dims, c.jobs);
            }
            if (!export_dir.empty()) {
                for (const char* sub : {"orig", "gen", "ref"}) fs::create_directories(fs::path(export_dir) / sub);
                for (std::size_t k = 0; k < dims.size(); ++k) {
                    const std::string name = "features-" + std::to_string(dims[k]) + ".csv";
                    perceptual::export_features_csv(fo[k], fs::path(export_dir) / "orig" / name);
                    perceptual::export_features_csv(fg[k], fs::path(export_dir) / "gen" / name);
                    perceptual::export_features_csv(fr[k], fs::path(export_dir) / "ref" / name);
                }
            }
            for (std::size_t k = 0; k < dims.size(); ++k)
                rep.rows.push_back(perceptual::score_features(dims[k], fo[k], fg[k], fr[k]));
            json r{{"config", common_config(c, "perceptual")}};
            r["config"]["orig"] = orig_dir;
            r["config"]["gen"] = gen_dir;
            r["config"]["ref"] = ref_dir;
            r["config"]["dims"] = dims;
            if (!features_from.empty()) r["config"]["features_from"] = features_from;
            r["perceptual"] = perceptual::to_json(rep);
            r["images"] = {{"original", so.names}, {"generated", sg.names}, {"reference", sr.names}};
            emit(r, c);
        } else if (cmd_evaluate->parsed()) {
            evaluate::EvalOptions o;
            o.dims = parse_dims(dims_text);
            o.faz.spec = faz_spec;
            o.quantify = qp;
            o.jobs = c.jobs;
            if (!sites_path.empty()) o.sites = sites_path;
            if (!features_from.empty()) o.features_from = features_from;
            const auto so = evaluate::load_set(orig_dir, c.jobs);
            const auto sg = evaluate::load_set(gen_dir, c.jobs);
            const auto sr = evaluate::load_set(ref_dir, c.jobs);
            json r = evaluate::evaluate(so, sg, sr, o);
            r["config"] = common_config(c, "evaluate");
            r["config"]["orig"] = orig_dir;
            r["config"]["gen"] = gen_dir;
            r["config"]["ref"] = ref_dir;
            r["config"]["faz"] = faz_spec;
            r["config"]["dims"] = o.dims;
            if (o.sites) r["config"]["sites"] = sites_path;
            if (o.features_from) r["config"]["features_from"] = features_from;
            r["flags"] = evaluate::direction_flags(r);
            emit(r, c);
            if (!summary_path.empty()) write_text(summary_path, evaluate::summary_text(r));
        } else if (cmd_demo->parsed()) {
            demo.seed = c.seed;
            demo.jobs = c.jobs;
            demo.dims = parse_dims(dims_text);
            const json bundle = evaluate::run_demo(demo, demo_out);
            std::cout << evaluate::summary_text(bundle);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "octaq: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "octaq: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
