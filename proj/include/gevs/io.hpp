// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gevs/diffusion.hpp"
#include "gevs/gar.hpp"
#include "gevs/geometry.hpp"
#include "gevs/lpsr.hpp"
#include "gevs/types.hpp"

namespace gevs::io {

// Malformed-input error: names the format, the source, and where the parse
// failed (byte offset for binaries, JSON pointer for JSON).
class FormatError : public std::runtime_error {
public:
    FormatError(std::string format, std::string source, std::string detail,
                std::optional<std::uint64_t> byte_offset = std::nullopt,
                std::string json_path = {});

    const std::string& format() const { return format_; }
    const std::string& source() const { return source_; }
    std::optional<std::uint64_t> byte_offset() const { return byte_offset_; }
    const std::string& json_path() const { return json_path_; }

private:
    std::string format_, source_, json_path_;
    std::optional<std::uint64_t> byte_offset_;
};

// ---- camera JSON ----------------------------------------------------------
// {"fx","fy","cx","cy","width","height","extrinsic":[16 row-major world->camera]}
void write_camera(std::ostream& os, const CameraIntrinsics& intr, const CameraPose& pose);
std::pair<CameraIntrinsics, CameraPose> read_camera(std::istream& is,
                                                    const std::string& source = "<stream>");
void write_camera_file(const std::filesystem::path& path, const CameraIntrinsics& intr,
                       const CameraPose& pose);
std::pair<CameraIntrinsics, CameraPose> read_camera_file(const std::filesystem::path& path);

// ---- point map ("GPM1") ---------------------------------------------------
// magic, u32 width, u32 height, f32 H*W*3 world coordinates row-major,
// u8 H*W validity. Little-endian. Coordinates are stored at f32 precision.
void write_point_map(std::ostream& os, const PointMap& pm);
PointMap read_point_map(std::istream& is, const std::string& source = "<stream>");
void write_point_map_file(const std::filesystem::path& path, const PointMap& pm);
PointMap read_point_map_file(const std::filesystem::path& path);

// ---- depth sidecar ("GDM1") -----------------------------------------------
// Same header scheme; payload is f32 H*W camera depth (+inf where invalid).
void write_depth_map(std::ostream& os, const DepthMap& dm);
DepthMap read_depth_map(std::istream& is, const std::string& source = "<stream>");
void write_depth_map_file(const std::filesystem::path& path, const DepthMap& dm);
DepthMap read_depth_map_file(const std::filesystem::path& path);

// ---- PNG ------------------------------------------------------------------
// 8-bit RGB; [0,1] values quantized by round(v*255).
void write_png(std::ostream& os, const Image& image);
Image read_png(std::istream& is, const std::string& source = "<stream>");
void write_png_file(const std::filesystem::path& path, const Image& image);
Image read_png_file(const std::filesystem::path& path);

// 8-bit grayscale mask, 0/255; reading maps >=128 to 1.
void write_mask_png(std::ostream& os, const Mask& mask);
Mask read_mask_png(std::istream& is, const std::string& source = "<stream>");
void write_mask_png_file(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png_file(const std::filesystem::path& path);

// ---- condition map prefix -------------------------------------------------
// <prefix>.png + <prefix>.validity.png + <prefix>.depth.gdm
void write_condition(const std::filesystem::path& prefix, const ConditionMap& cond);
ConditionMap read_condition(const std::filesystem::path& prefix);

// ---- model checkpoint ("GEVS") --------------------------------------------
// magic, u32 json blob length, blob (architecture descriptor + schedule),
// then f64 parameters; the parameter count is implied by the descriptor.
struct Checkpoint {
    DenoiserModel model;
    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    NoiseSchedule schedule() const { return NoiseSchedule::linear(t_train, beta_start, beta_end); }
};
void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is, const std::string& source = "<stream>");
void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

// ---- mask library directory -----------------------------------------------
// <dir>/mask_00000.png ... plus manifest.json with provenance and config.
void write_mask_library(const std::filesystem::path& dir, const MaskLibrary& lib);
MaskLibrary read_mask_library(const std::filesystem::path& dir);

// ---- dataset manifest JSON --------------------------------------------------
struct SceneSpec {
    int id = 0;
    std::uint64_t seed = 0;
    int complexity = 1;
};

struct ManifestEntry {
    int scene_id = 0, view_id = 0;
    std::string camera, image, pointmap;  // paths relative to the manifest root
    std::string condition_prefix;         // empty = absent
    std::string sparse_prefix;            // empty = absent
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<SceneSpec> scenes;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

void write_manifest(std::ostream& os, const DatasetManifest& manifest);
DatasetManifest read_manifest(std::istream& is, const std::string& source = "<stream>");
void write_manifest_file(const std::filesystem::path& path, const DatasetManifest& manifest);
// Load + boundary validation: referenced files must exist, ids must be unique.
DatasetManifest read_manifest_file(const std::filesystem::path& path, bool check_files = true);

// ---- metrics report JSON ----------------------------------------------------
void write_report(std::ostream& os, const EvalReport& report);
EvalReport read_report(std::istream& is, const std::string& source = "<stream>");
void write_report_file(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_file(const std::filesystem::path& path);

}  // namespace gevs::io
