// SPDX-License-Identifier: Apache-2.0
#include "gevs/io.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gevs::io {

using ordered_json = nlohmann::ordered_json;

FormatError::FormatError(std::string format, std::string source, std::string detail,
                         std::optional<std::uint64_t> byte_offset, std::string json_path)
    : std::runtime_error(format + ": " + detail + " in '" + source + "'" +
                         (byte_offset ? " (at byte " + std::to_string(*byte_offset) + ")" : "") +
                         (json_path.empty() ? "" : " (at " + json_path + ")")),
      format_(std::move(format)),
      source_(std::move(source)),
      json_path_(std::move(json_path)),
      byte_offset_(byte_offset) {}

namespace {

// Little-endian scalar io. The encode/decode goes through explicit byte
// shuffles so the formats stay pinned on any host.
template <typename T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf, buf + sizeof(T));
#endif
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* format, const std::string& source) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        const auto pos = is.tellg();
        throw FormatError(format, source, "truncated file: expected " +
                          std::to_string(sizeof(T)) + " more bytes, got " +
                          std::to_string(is.gcount()),
                          pos < 0 ? 0 : static_cast<std::uint64_t>(pos));
    }
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf, buf + sizeof(T));
#endif
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void read_magic(std::istream& is, const char* expected, const char* format,
                const std::string& source) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, expected, 4) != 0)
        throw FormatError(format, source,
                          std::string("bad magic, expected \"") + expected + "\"", 0);
}

void check_dims(std::uint32_t w, std::uint32_t h, const char* format, const std::string& source) {
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
        throw FormatError(format, source,
                          "unreasonable dimensions " + std::to_string(w) + "x" + std::to_string(h), 4);
}

ordered_json parse_json(std::istream& is, const char* format, const std::string& source) {
    try {
        return ordered_json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(format, source, e.what(), e.byte);
    }
}

template <typename T>
T json_get(const ordered_json& j, const char* key, const char* format, const std::string& source) {
    if (!j.contains(key))
        throw FormatError(format, source, std::string("missing field \"") + key + "\"",
                          std::nullopt, std::string("/") + key);
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(format, source, e.what(), std::nullopt, std::string("/") + key);
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
    return is;
}

}  // namespace

// ---------------------------------------------------------------------------
// camera JSON

void write_camera(std::ostream& os, const CameraIntrinsics& intr, const CameraPose& pose) {
    ordered_json j;
    j["fx"] = intr.fx;
    j["fy"] = intr.fy;
    j["cx"] = intr.cx;
    j["cy"] = intr.cy;
    j["width"] = intr.width;
    j["height"] = intr.height;
    std::vector<double> ext(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) ext[r * 4 + c] = pose.rotation()(r, c);
        ext[r * 4 + 3] = r == 0 ? pose.translation().x : (r == 1 ? pose.translation().y : pose.translation().z);
    }
    ext[15] = 1.0;
    j["extrinsic"] = ext;
    os << j.dump(2) << '\n';
}

std::pair<CameraIntrinsics, CameraPose> read_camera(std::istream& is, const std::string& source) {
    const ordered_json j = parse_json(is, "camera", source);
    CameraIntrinsics intr;
    try {
        intr = CameraIntrinsics(json_get<double>(j, "fx", "camera", source),
                                json_get<double>(j, "fy", "camera", source),
                                json_get<double>(j, "cx", "camera", source),
                                json_get<double>(j, "cy", "camera", source),
                                json_get<int>(j, "width", "camera", source),
                                json_get<int>(j, "height", "camera", source));
    } catch (const std::invalid_argument& e) {
        throw FormatError("camera", source, e.what(), std::nullopt, "/fx");
    }
    const auto ext = json_get<std::vector<double>>(j, "extrinsic", "camera", source);
    if (ext.size() != 16)
        throw FormatError("camera", source,
                          "extrinsic must hold 16 values, got " + std::to_string(ext.size()),
                          std::nullopt, "/extrinsic");
    for (int c = 0; c < 3; ++c)
        if (ext[12 + c] != 0.0)
            throw FormatError("camera", source, "extrinsic bottom row must be [0,0,0,1]",
                              std::nullopt, "/extrinsic");
    if (ext[15] != 1.0)
        throw FormatError("camera", source, "extrinsic bottom row must be [0,0,0,1]",
                          std::nullopt, "/extrinsic");
    Mat3 r;
    for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc) r(rr, cc) = ext[rr * 4 + cc];
    const Vec3 t{ext[3], ext[7], ext[11]};
    try {
        return {intr, CameraPose(r, t)};
    } catch (const std::invalid_argument& e) {
        throw FormatError("camera", source, e.what(), std::nullopt, "/extrinsic");
    }
}

void write_camera_file(const std::filesystem::path& path, const CameraIntrinsics& intr,
                       const CameraPose& pose) {
    auto os = open_out(path);
    write_camera(os, intr, pose);
}

std::pair<CameraIntrinsics, CameraPose> read_camera_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_camera(is, path.string());
}

// ---------------------------------------------------------------------------
// GPM1 / GDM1

void write_point_map(std::ostream& os, const PointMap& pm) {
    os.write("GPM1", 4);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(pm.width));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(pm.height));
    for (const auto& p : pm.positions) {
        put_le<float>(os, static_cast<float>(p.x));
        put_le<float>(os, static_cast<float>(p.y));
        put_le<float>(os, static_cast<float>(p.z));
    }
    os.write(reinterpret_cast<const char*>(pm.validity.data()),
             static_cast<std::streamsize>(pm.validity.size()));
}

PointMap read_point_map(std::istream& is, const std::string& source) {
    read_magic(is, "GPM1", "GPM1", source);
    const auto w = get_le<std::uint32_t>(is, "GPM1", source);
    const auto h = get_le<std::uint32_t>(is, "GPM1", source);
    check_dims(w, h, "GPM1", source);
    PointMap pm(static_cast<int>(w), static_cast<int>(h));
    for (auto& p : pm.positions) {
        p.x = get_le<float>(is, "GPM1", source);
        p.y = get_le<float>(is, "GPM1", source);
        p.z = get_le<float>(is, "GPM1", source);
    }
    is.read(reinterpret_cast<char*>(pm.validity.data()),
            static_cast<std::streamsize>(pm.validity.size()));
    if (is.gcount() != static_cast<std::streamsize>(pm.validity.size()))
        throw FormatError("GPM1", source,
                          "truncated validity plane: expected " + std::to_string(pm.validity.size()) +
                          " bytes, got " + std::to_string(is.gcount()),
                          12 + static_cast<std::uint64_t>(pm.positions.size()) * 12);
    for (auto& v : pm.validity)
        if (v > 1)
            throw FormatError("GPM1", source, "validity byte must be 0 or 1");
    return pm;
}

void write_point_map_file(const std::filesystem::path& path, const PointMap& pm) {
    auto os = open_out(path);
    write_point_map(os, pm);
}

PointMap read_point_map_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_point_map(is, path.string());
}

void write_depth_map(std::ostream& os, const DepthMap& dm) {
    os.write("GDM1", 4);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dm.width));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dm.height));
    for (double d : dm.data) put_le<float>(os, static_cast<float>(d));
}

DepthMap read_depth_map(std::istream& is, const std::string& source) {
    read_magic(is, "GDM1", "GDM1", source);
    const auto w = get_le<std::uint32_t>(is, "GDM1", source);
    const auto h = get_le<std::uint32_t>(is, "GDM1", source);
    check_dims(w, h, "GDM1", source);
    DepthMap dm(static_cast<int>(w), static_cast<int>(h));
    for (auto& d : dm.data) d = get_le<float>(is, "GDM1", source);
    return dm;
}

void write_depth_map_file(const std::filesystem::path& path, const DepthMap& dm) {
    auto os = open_out(path);
    write_depth_map(os, dm);
}

DepthMap read_depth_map_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_depth_map(is, path.string());
}

// ---------------------------------------------------------------------------
// PNG via libpng with stream adapters

namespace {

struct PngErrorCtx {
    std::string source;
    std::string message;
};

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<PngErrorCtx*>(png_get_error_ptr(png));
    ctx->message = msg;
    longjmp(png_jmpbuf(png), 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void png_write_stream(png_structp png, png_bytep data, png_size_t len) {
    auto* os = static_cast<std::ostream*>(png_get_io_ptr(png));
    os->write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void png_flush_stream(png_structp png) {
    static_cast<std::ostream*>(png_get_io_ptr(png))->flush();
}

void png_read_stream(png_structp png, png_bytep data, png_size_t len) {
    auto* is = static_cast<std::istream*>(png_get_io_ptr(png));
    is->read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(len));
    if (is->gcount() != static_cast<std::streamsize>(len)) png_error(png, "unexpected end of stream");
}

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_png_impl(std::ostream& os, const std::uint8_t* rows, int width, int height,
                    int color_type, const std::string& source) {
    PngErrorCtx ctx{source, {}};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warning_fn);
    if (png == nullptr) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png", ctx.source, "encode failed: " + ctx.message);
    }
    png_set_write_fn(png, &os, png_write_stream, png_flush_stream);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int stride = width * (color_type == PNG_COLOR_TYPE_RGB ? 3 : 1);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rows + static_cast<size_t>(y) * stride));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_impl(std::istream& is, int& width, int& height,
                                        bool want_rgb, const std::string& source) {
    PngErrorCtx ctx{source, {}};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warning_fn);
    if (png == nullptr) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    std::vector<std::uint8_t> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png", ctx.source, "decode failed: " + ctx.message);
    }
    png_set_read_fn(png, &is, png_read_stream);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (want_rgb) {
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    } else {
        if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw FormatError("png", source, "mask must be 8-bit grayscale");
        }
    }
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int channels = want_rgb ? 3 : 1;
    data.resize(static_cast<size_t>(width) * height * channels);
    for (int y = 0; y < height; ++y)
        png_read_row(png, data.data() + static_cast<size_t>(y) * width * channels, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

}  // namespace

void write_png(std::ostream& os, const Image& image) {
    std::vector<std::uint8_t> rows(image.data.size());
    for (size_t i = 0; i < image.data.size(); ++i) rows[i] = quantize(image.data[i]);
    write_png_impl(os, rows.data(), image.width, image.height, PNG_COLOR_TYPE_RGB, "<stream>");
}

Image read_png(std::istream& is, const std::string& source) {
    int w = 0, h = 0;
    const auto bytes = read_png_impl(is, w, h, /*want_rgb=*/true, source);
    Image img(w, h);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

void write_png_file(const std::filesystem::path& path, const Image& image) {
    auto os = open_out(path);
    write_png(os, image);
}

Image read_png_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_png(is, path.string());
}

void write_mask_png(std::ostream& os, const Mask& mask) {
    std::vector<std::uint8_t> rows(mask.data.size());
    for (size_t i = 0; i < mask.data.size(); ++i) rows[i] = mask.data[i] ? 255 : 0;
    write_png_impl(os, rows.data(), mask.width, mask.height, PNG_COLOR_TYPE_GRAY, "<stream>");
}

Mask read_mask_png(std::istream& is, const std::string& source) {
    int w = 0, h = 0;
    const auto bytes = read_png_impl(is, w, h, /*want_rgb=*/false, source);
    Mask mask(w, h);
    for (size_t i = 0; i < bytes.size(); ++i) mask.data[i] = bytes[i] >= 128 ? 1 : 0;
    return mask;
}

void write_mask_png_file(const std::filesystem::path& path, const Mask& mask) {
    auto os = open_out(path);
    write_mask_png(os, mask);
}

Mask read_mask_png_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_mask_png(is, path.string());
}

// ---------------------------------------------------------------------------
// condition prefix

void write_condition(const std::filesystem::path& prefix, const ConditionMap& cond) {
    cond.check_invariants();
    write_png_file(prefix.string() + ".png", cond.rgb);
    write_mask_png_file(prefix.string() + ".validity.png", cond.validity);
    write_depth_map_file(prefix.string() + ".depth.gdm", cond.depth);
}

ConditionMap read_condition(const std::filesystem::path& prefix) {
    ConditionMap cond;
    cond.rgb = read_png_file(prefix.string() + ".png");
    cond.validity = read_mask_png_file(prefix.string() + ".validity.png");
    cond.depth = read_depth_map_file(prefix.string() + ".depth.gdm");
    if (cond.validity.width != cond.rgb.width || cond.validity.height != cond.rgb.height ||
        cond.depth.width != cond.rgb.width || cond.depth.height != cond.rgb.height)
        throw FormatError("condition", prefix.string(), "rgb/validity/depth shapes differ");
    cond.check_invariants();
    return cond;
}

// ---------------------------------------------------------------------------
// checkpoint

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    ckpt.model.validate();
    ordered_json j;
    j["arch"] = {{"base_channels", ckpt.model.arch.base_channels},
                 {"num_stages", ckpt.model.arch.num_stages},
                 {"time_embed_dim", ckpt.model.arch.time_embed_dim}};
    j["schedule"] = {{"t_train", ckpt.t_train},
                     {"beta_start", ckpt.beta_start},
                     {"beta_end", ckpt.beta_end}};
    const std::string blob = j.dump();
    os.write("GEVS", 4);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(blob.size()));
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    for (double p : ckpt.model.params) put_le<double>(os, p);
}

Checkpoint read_checkpoint(std::istream& is, const std::string& source) {
    read_magic(is, "GEVS", "GEVS", source);
    const auto blob_len = get_le<std::uint32_t>(is, "GEVS", source);
    if (blob_len == 0 || blob_len > (1u << 24))
        throw FormatError("GEVS", source, "unreasonable descriptor length " + std::to_string(blob_len), 4);
    std::string blob(blob_len, '\0');
    is.read(blob.data(), blob_len);
    if (is.gcount() != static_cast<std::streamsize>(blob_len))
        throw FormatError("GEVS", source, "truncated descriptor blob", 8);
    std::istringstream blob_is(blob);
    const ordered_json j = parse_json(blob_is, "GEVS", source);

    Checkpoint ckpt;
    if (!j.contains("arch"))
        throw FormatError("GEVS", source, "missing field \"arch\"", std::nullopt, "/arch");
    const auto& ja = j.at("arch");
    ckpt.model.arch.base_channels = json_get<int>(ja, "base_channels", "GEVS", source);
    ckpt.model.arch.num_stages = json_get<int>(ja, "num_stages", "GEVS", source);
    ckpt.model.arch.time_embed_dim = json_get<int>(ja, "time_embed_dim", "GEVS", source);
    if (!j.contains("schedule"))
        throw FormatError("GEVS", source, "missing field \"schedule\"", std::nullopt, "/schedule");
    const auto& js = j.at("schedule");
    ckpt.t_train = json_get<int>(js, "t_train", "GEVS", source);
    ckpt.beta_start = json_get<double>(js, "beta_start", "GEVS", source);
    ckpt.beta_end = json_get<double>(js, "beta_end", "GEVS", source);

    if (ckpt.model.arch.base_channels < 1 || ckpt.model.arch.num_stages < 1 ||
        ckpt.model.arch.time_embed_dim < 2)
        throw FormatError("GEVS", source, "invalid architecture descriptor", std::nullopt, "/arch");

    const size_t n = ckpt.model.arch.param_count();
    ckpt.model.params.resize(n);
    for (size_t i = 0; i < n; ++i) ckpt.model.params[i] = get_le<double>(is, "GEVS", source);
    // The descriptor pins the exact byte length; trailing bytes are an error.
    char extra;
    is.read(&extra, 1);
    if (is.gcount() != 0)
        throw FormatError("GEVS", source, "trailing bytes after " + std::to_string(n) + " parameters",
                          8 + static_cast<std::uint64_t>(blob_len) + n * 8);
    try {
        ckpt.model.validate();
        (void)ckpt.schedule();
    } catch (const std::exception& e) {
        throw FormatError("GEVS", source, e.what());
    }
    return ckpt;
}

void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
    auto os = open_out(path);
    write_checkpoint(os, ckpt);
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_checkpoint(is, path.string());
}

// ---------------------------------------------------------------------------
// mask library directory

void write_mask_library(const std::filesystem::path& dir, const MaskLibrary& lib) {
    if (lib.masks.empty()) throw std::invalid_argument("write_mask_library: empty library");
    std::filesystem::create_directories(dir);
    ordered_json manifest;
    manifest["version"] = 1;
    manifest["pair_yaw_degrees"] = lib.config.pair_yaw_degrees;
    ordered_json offsets = ordered_json::array();
    for (const auto& [f, l] : lib.config.virtual_offsets) offsets.push_back({{"angle_fraction", f}, {"lateral", l}});
    manifest["virtual_offsets"] = offsets;
    ordered_json files = ordered_json::array();
    for (size_t i = 0; i < lib.masks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%05zu.png", i);
        write_mask_png_file(dir / name, lib.masks[i].mask);
        files.push_back({{"file", name},
                         {"provenance", lib.masks[i].provenance == ArtifactMask::Provenance::Reprojection
                                            ? "reprojection" : "random-box"},
                         {"descriptor", lib.masks[i].descriptor}});
    }
    manifest["masks"] = files;
    auto os = open_out(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
}

MaskLibrary read_mask_library(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    auto is = open_in(manifest_path);
    const ordered_json j = parse_json(is, "mask-library", manifest_path.string());
    MaskLibrary lib;
    lib.config.pair_yaw_degrees = json_get<double>(j, "pair_yaw_degrees", "mask-library", manifest_path.string());
    if (j.contains("virtual_offsets"))
        for (const auto& o : j.at("virtual_offsets"))
            lib.config.virtual_offsets.emplace_back(o.at("angle_fraction").get<double>(),
                                                    o.at("lateral").get<double>());
    if (!j.contains("masks") || !j.at("masks").is_array() || j.at("masks").empty())
        throw FormatError("mask-library", manifest_path.string(), "missing or empty mask list",
                          std::nullopt, "/masks");
    for (const auto& m : j.at("masks")) {
        ArtifactMask am;
        const auto file = m.at("file").get<std::string>();
        am.mask = read_mask_png_file(dir / file);
        am.provenance = m.at("provenance").get<std::string>() == "random-box"
                            ? ArtifactMask::Provenance::RandomBox
                            : ArtifactMask::Provenance::Reprojection;
        am.descriptor = m.value("descriptor", "");
        lib.masks.push_back(std::move(am));
    }
    lib.require_resolution(lib.masks[0].mask.width, lib.masks[0].mask.height);
    return lib;
}

// ---------------------------------------------------------------------------
// dataset manifest

void write_manifest(std::ostream& os, const DatasetManifest& manifest) {
    ordered_json j;
    j["version"] = 1;
    ordered_json scenes = ordered_json::array();
    for (const auto& s : manifest.scenes)
        scenes.push_back({{"id", s.id}, {"seed", s.seed}, {"complexity", s.complexity}});
    j["scenes"] = scenes;
    ordered_json entries = ordered_json::array();
    for (const auto& e : manifest.entries) {
        ordered_json je = {{"scene_id", e.scene_id}, {"view_id", e.view_id},
                           {"camera", e.camera}, {"image", e.image}, {"pointmap", e.pointmap}};
        if (!e.condition_prefix.empty()) je["condition_prefix"] = e.condition_prefix;
        if (!e.sparse_prefix.empty()) je["sparse_prefix"] = e.sparse_prefix;
        entries.push_back(je);
    }
    j["entries"] = entries;
    os << j.dump(2) << '\n';
}

DatasetManifest read_manifest(std::istream& is, const std::string& source) {
    const ordered_json j = parse_json(is, "manifest", source);
    if (json_get<int>(j, "version", "manifest", source) != 1)
        throw FormatError("manifest", source, "unsupported version", std::nullopt, "/version");
    DatasetManifest m;
    if (j.contains("scenes"))
        for (const auto& s : j.at("scenes"))
            m.scenes.push_back({s.at("id").get<int>(), s.at("seed").get<std::uint64_t>(),
                                s.at("complexity").get<int>()});
    if (!j.contains("entries"))
        throw FormatError("manifest", source, "missing field \"entries\"", std::nullopt, "/entries");
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.scene_id = e.at("scene_id").get<int>();
        me.view_id = e.at("view_id").get<int>();
        me.camera = e.at("camera").get<std::string>();
        me.image = e.at("image").get<std::string>();
        me.pointmap = e.at("pointmap").get<std::string>();
        me.condition_prefix = e.value("condition_prefix", "");
        me.sparse_prefix = e.value("sparse_prefix", "");
        m.entries.push_back(std::move(me));
    }
    return m;
}

void write_manifest_file(const std::filesystem::path& path, const DatasetManifest& manifest) {
    auto os = open_out(path);
    write_manifest(os, manifest);
}

DatasetManifest read_manifest_file(const std::filesystem::path& path, bool check_files) {
    auto is = open_in(path);
    DatasetManifest m = read_manifest(is, path.string());
    m.root = path.parent_path();
    std::vector<std::pair<int, int>> keys;
    for (const auto& e : m.entries) {
        keys.emplace_back(e.scene_id, e.view_id);
        if (!check_files) continue;
        for (const std::string& rel : {e.camera, e.image, e.pointmap})
            if (!std::filesystem::exists(m.resolve(rel)))
                throw FormatError("manifest", path.string(), "referenced file missing: " + rel);
        if (!e.condition_prefix.empty() &&
            !std::filesystem::exists(m.resolve(e.condition_prefix + ".png")))
            throw FormatError("manifest", path.string(),
                              "referenced condition missing: " + e.condition_prefix);
    }
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
        throw FormatError("manifest", path.string(), "duplicate (scene_id, view_id) key");
    return m;
}

// ---------------------------------------------------------------------------
// metrics report

namespace {

ordered_json aggregate_to_json(const BinAggregate& b) {
    return {{"lo", b.lo},           {"hi", b.hi},     {"count", b.count},
            {"s_psnr", b.s_psnr},   {"s_ssim", b.s_ssim}, {"s_mae", b.s_mae},
            {"s_rmse", b.s_rmse},   {"valid_fraction", b.valid_fraction}};
}

BinAggregate aggregate_from_json(const ordered_json& j) {
    BinAggregate b;
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
    b.count = j.at("count").get<size_t>();
    b.s_psnr = j.at("s_psnr").get<double>();
    b.s_ssim = j.at("s_ssim").get<double>();
    b.s_mae = j.at("s_mae").get<double>();
    b.s_rmse = j.at("s_rmse").get<double>();
    b.valid_fraction = j.at("valid_fraction").get<double>();
    return b;
}

}  // namespace

void write_report(std::ostream& os, const EvalReport& report) {
    ordered_json j;
    j["schema_version"] = 1;
    ordered_json records = ordered_json::array();
    for (const auto& r : report.records)
        records.push_back({{"scene_id", r.scene_id},       {"view_id", r.view_id},
                           {"s_psnr", r.s_psnr},           {"s_ssim", r.s_ssim},
                           {"s_mae", r.s_mae},             {"s_rmse", r.s_rmse},
                           {"valid_fraction", r.valid_fraction},
                           {"pose_offset", r.pose_offset}});
    j["records"] = records;
    ordered_json byo = ordered_json::array(), bys = ordered_json::array();
    for (const auto& b : report.by_offset) byo.push_back(aggregate_to_json(b));
    for (const auto& b : report.by_sparsity) bys.push_back(aggregate_to_json(b));
    j["by_offset"] = byo;
    j["by_sparsity"] = bys;
    j["offset_other"] = aggregate_to_json(report.offset_other);
    j["sparsity_other"] = aggregate_to_json(report.sparsity_other);
    os << j.dump(2) << '\n';
}

EvalReport read_report(std::istream& is, const std::string& source) {
    const ordered_json j = parse_json(is, "report", source);
    if (json_get<int>(j, "schema_version", "report", source) != 1)
        throw FormatError("report", source, "unsupported schema_version", std::nullopt,
                          "/schema_version");
    EvalReport rep;
    for (const auto& r : j.at("records")) {
        EvalRecord er;
        er.scene_id = r.at("scene_id").get<int>();
        er.view_id = r.at("view_id").get<int>();
        er.s_psnr = r.at("s_psnr").get<double>();
        er.s_ssim = r.at("s_ssim").get<double>();
        er.s_mae = r.at("s_mae").get<double>();
        er.s_rmse = r.at("s_rmse").get<double>();
        er.valid_fraction = r.at("valid_fraction").get<double>();
        er.pose_offset = r.at("pose_offset").get<double>();
        rep.records.push_back(er);
    }
    for (const auto& b : j.at("by_offset")) rep.by_offset.push_back(aggregate_from_json(b));
    for (const auto& b : j.at("by_sparsity")) rep.by_sparsity.push_back(aggregate_from_json(b));
    rep.offset_other = aggregate_from_json(j.at("offset_other"));
    rep.sparsity_other = aggregate_from_json(j.at("sparsity_other"));
    return rep;
}

void write_report_file(const std::filesystem::path& path, const EvalReport& report) {
    auto os = open_out(path);
    write_report(os, report);
}

EvalReport read_report_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_report(is, path.string());
}

}  // namespace gevs::io
