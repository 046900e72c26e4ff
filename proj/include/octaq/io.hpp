#pragma once

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octaq/raster.hpp"

namespace octaq {

namespace fs = std::filesystem;
using nlohmann::json;

enum class RasterFormat { png8, pgm8, raw_float };

/// Format implied by a file extension (.png, .pgm, .raw).
inline RasterFormat format_from_path(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".png") return RasterFormat::png8;
    if (ext == ".pgm") return RasterFormat::pgm8;
    if (ext == ".raw") return RasterFormat::raw_float;
    throw Error("unrecognised raster extension '" + ext + "' (expected .png, .pgm or .raw)");
}

inline fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

inline bool is_raster_file(const fs::path& path) {
    const auto ext = path.extension().string();
    return ext == ".png" || ext == ".pgm" || ext == ".raw";
}

struct Sidecar {
    double spacing_um = 0.0;
    Vec2 origin_um{};
    std::string provenance;
};

inline json sidecar_json(const Angiogram& img) {
    return json{{"spacing_um", img.spacing_um()},
                {"origin_um", {img.origin_um().x, img.origin_um().y}},
                {"provenance", img.provenance()}};
}

inline std::optional<Sidecar> read_sidecar(const fs::path& image_path) {
    const auto p = sidecar_path(image_path);
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    if (!in) throw Error("cannot read sidecar " + p.string());
    json j;
    try {
        in >> j;
        Sidecar s;
        s.spacing_um = j.at("spacing_um").get<double>();
        if (j.contains("origin_um")) {
            const auto& o = j.at("origin_um");
            if (!o.is_array() || o.size() != 2) throw Error("origin_um must be a two-element array");
            s.origin_um = {o[0].get<double>(), o[1].get<double>()};
        }
        if (j.contains("provenance")) s.provenance = j.at("provenance").get<std::string>();
        if (!(s.spacing_um > 0.0) || !std::isfinite(s.spacing_um))
            throw Error("sidecar " + p.string() + ": spacing_um must be positive");
        return s;
    } catch (const json::exception& e) {
        throw Error("invalid sidecar " + p.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw Error("invalid JSON in " + path.string() + ": " + e.what());
    }
}

namespace detail {

struct Gray8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;
};

inline Gray8 read_png8(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error("cannot read PNG " + path.string() + ": " + image.message);
    if (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) {
        png_image_free(&image);
        throw Error(path.string() + " is not a grayscale image");
    }
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw Error(path.string() + " is not an 8-bit image");
    }
    image.format = PNG_FORMAT_GRAY;
    Gray8 g{image.width, image.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
    if (!png_image_finish_read(&image, nullptr, g.data.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error("cannot decode PNG " + path.string() + ": " + msg);
    }
    return g;
}

inline void write_png8(const fs::path& path, const Gray8& g) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(g.width);
    image.height = static_cast<png_uint_32>(g.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, g.data.data(), 0, nullptr))
        throw Error("cannot write PNG " + path.string() + ": " + image.message);
}

inline Gray8 read_pgm8(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::string magic;
    in >> magic;
    if (magic == "P6" || magic == "P3") throw Error(path.string() + " is not a grayscale image");
    if (magic != "P5") throw Error(path.string() + " is not a binary PGM file");
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        long v = -1;
        in >> v;
        return v;
    };
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (!in || w <= 0 || h <= 0) throw Error("malformed PGM header in " + path.string());
    if (maxval != 255) throw Error(path.string() + " is not an 8-bit image");
    in.get();
    Gray8 g{static_cast<std::size_t>(w), static_cast<std::size_t>(h), {}};
    g.data.resize(g.width * g.height);
    in.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(g.data.size()));
    if (!in) throw Error("truncated PGM " + path.string());
    return g;
}

inline void write_pgm8(const fs::path& path, const Gray8& g) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(g.data.data()), static_cast<std::streamsize>(g.data.size()));
    if (!out) throw Error("failed writing " + path.string());
}

inline Gray8 read_gray8(const fs::path& path) {
    return format_from_path(path) == RasterFormat::pgm8 ? read_pgm8(path) : read_png8(path);
}

inline void write_gray8(const fs::path& path, const Gray8& g) {
    if (format_from_path(path) == RasterFormat::pgm8)
        write_pgm8(path, g);
    else
        write_png8(path, g);
}

inline void put_u32(std::vector<char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace detail

/// Raw-float layout: "OCTA", u32 width, u32 height, f32 spacing_um, then
/// width*height little-endian f32 samples in row-major order.
inline void save_raw(const Angiogram& img, const fs::path& path) {
    std::vector<char> buf;
    buf.reserve(16 + 4 * img.pixels().size());
    buf.insert(buf.end(), {'O', 'C', 'T', 'A'});
    detail::put_u32(buf, static_cast<std::uint32_t>(img.width()));
    detail::put_u32(buf, static_cast<std::uint32_t>(img.height()));
    detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(img.spacing_um())));
    for (float v : img.pixels().values()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(v));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("failed writing " + path.string());
}

inline Angiogram load_raw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), "OCTA", 4) != 0)
        throw Error(path.string() + " is not a raw-float angiogram (bad magic)");
    const std::size_t w = detail::get_u32(buf.data() + 4);
    const std::size_t h = detail::get_u32(buf.data() + 8);
    const float header_spacing = std::bit_cast<float>(detail::get_u32(buf.data() + 12));
    if (buf.size() != 16 + 4 * w * h) throw Error(path.string() + ": payload size does not match header");
    Grid<float> px(w, h);
    for (std::size_t i = 0; i < w * h; ++i) {
        const float v = std::bit_cast<float>(detail::get_u32(buf.data() + 16 + 4 * i));
        if (std::isnan(v)) throw Error(path.string() + ": NaN pixel at index " + std::to_string(i));
        px.storage()[i] = v;
    }
    double spacing = header_spacing;
    Vec2 origin{};
    std::string provenance;
    if (auto sc = read_sidecar(path)) {
        if (static_cast<float>(sc->spacing_um) != header_spacing)
            throw Error(path.string() + ": sidecar spacing disagrees with header");
        spacing = sc->spacing_um;
        origin = sc->origin_um;
        provenance = sc->provenance;
    }
    return Angiogram(std::move(px), spacing, origin, std::move(provenance));
}

/// Loads an angiogram. 8-bit files require a `<file>.json` sidecar carrying
/// the spacing; raw-float files take their spacing from the header.
inline Angiogram load_angiogram(const fs::path& path) {
    if (!fs::exists(path)) throw Error("no such file: " + path.string());
    const auto format = format_from_path(path);
    if (format == RasterFormat::raw_float) return load_raw(path);
    auto sc = read_sidecar(path);
    if (!sc) throw Error("missing sidecar " + sidecar_path(path).string() + " (spacing is required)");
    const auto g = detail::read_gray8(path);
    Grid<float> px(g.width, g.height);
    for (std::size_t i = 0; i < g.data.size(); ++i) px.storage()[i] = static_cast<float>(g.data[i] / 255.0);
    return Angiogram(std::move(px), sc->spacing_um, sc->origin_um, sc->provenance);
}

/// Writes the raster plus its JSON sidecar. Format follows the extension.
inline void save_angiogram(const Angiogram& img, const fs::path& path) {
    const auto format = format_from_path(path);
    if (format == RasterFormat::raw_float) {
        save_raw(img, path);
    } else {
        detail::Gray8 g{img.width(), img.height(), std::vector<std::uint8_t>(img.pixels().size())};
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] = static_cast<std::uint8_t>(std::lround(img.pixels().storage()[i] * 255.0));
        detail::write_gray8(path, g);
    }
    write_json(sidecar_path(path), sidecar_json(img));
}

inline void save_mask(const Mask& m, const fs::path& path) {
    detail::Gray8 g{m.width(), m.height(), std::vector<std::uint8_t>(m.size())};
    for (std::size_t i = 0; i < m.size(); ++i) g.data[i] = m.storage()[i] ? 255 : 0;
    detail::write_gray8(path, g);
}

inline Mask load_mask(const fs::path& path) {
    if (!fs::exists(path)) throw Error("no such file: " + path.string());
    const auto g = detail::read_gray8(path);
    Mask m(g.width, g.height);
    for (std::size_t i = 0; i < g.data.size(); ++i) m.storage()[i] = g.data[i] != 0;
    return m;
}

/// Raster files in a directory, sorted by file name.
inline std::vector<fs::path> list_rasters(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_raster_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace octaq
