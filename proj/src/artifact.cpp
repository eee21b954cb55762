// SPDX-License-Identifier: Apache-2.0
#include "gevs/artifact.hpp"

#include <algorithm>

namespace gevs {

void MaskLibrary::require_resolution(int width, int height) const {
    if (masks.empty()) throw std::invalid_argument("MaskLibrary: empty library");
    for (const auto& m : masks)
        if (m.mask.width != width || m.mask.height != height)
            throw std::invalid_argument("MaskLibrary: mask resolution mismatch");
}

ArtifactMask mask_from_reprojection(const ColoredPointCloud& cloud,
                                    const CameraIntrinsics& intr, const CameraPose& pose) {
    ArtifactMask out;
    out.mask = rasterize(cloud, intr, pose).validity;
    out.provenance = ArtifactMask::Provenance::Reprojection;
    return out;
}

MaskLibrary build_mask_library(const std::vector<Scene>& scenes,
                               const std::vector<std::pair<CameraIntrinsics, CameraPose>>& source_cameras,
                               const MaskLibraryConfig& config,
                               std::uint64_t seed) {
    if (scenes.empty()) throw std::invalid_argument("build_mask_library: no scenes");
    if (source_cameras.empty()) throw std::invalid_argument("build_mask_library: no source cameras");
    if (config.virtual_offsets.empty()) throw std::invalid_argument("build_mask_library: no virtual offsets");
    (void)seed;  // reserved for future stochastic offset jitter; generation is fully determined

    MaskLibrary lib;
    lib.config = config;
    for (size_t si = 0; si < scenes.size(); ++si) {
        for (size_t ci = 0; ci < source_cameras.size(); ++ci) {
            const auto& [intr, pose] = source_cameras[ci];
            const RenderedView view = render_scene(scenes[si], intr, pose);
            if (view.depth.data.end() ==
                std::find_if(view.depth.data.begin(), view.depth.data.end(),
                             [](double d) { return std::isfinite(d); }))
                continue;  // camera saw nothing; no cloud to reproject
            const PointMap pm = view_to_point_map(view);
            const ColoredPointCloud cloud = point_map_to_cloud(pm, view.rgb);
            const CameraPose pair_pose = yaw_about_up(pose, config.pair_yaw_degrees);
            for (size_t oi = 0; oi < config.virtual_offsets.size(); ++oi) {
                const auto& [frac, lateral] = config.virtual_offsets[oi];
                const CameraPose virt = make_extrapolated_pose(pose, pair_pose, frac, lateral);
                ArtifactMask m = mask_from_reprojection(cloud, intr, virt);
                m.descriptor = "scene=" + std::to_string(si) + " cam=" + std::to_string(ci) +
                               " frac=" + std::to_string(frac) + " lat=" + std::to_string(lateral);
                lib.masks.push_back(std::move(m));
            }
        }
    }
    if (lib.masks.empty()) throw std::runtime_error("build_mask_library: produced no masks");
    return lib;
}

ArtifactMask make_random_box_mask(int width, int height, double target_drop_fraction,
                                  std::uint64_t seed) {
    if (!(target_drop_fraction > 0.0 && target_drop_fraction < 1.0))
        throw std::invalid_argument("make_random_box_mask: target_drop_fraction must be in (0,1)");
    ArtifactMask out;
    out.mask = Mask(width, height, 1);
    out.provenance = ArtifactMask::Provenance::RandomBox;
    out.descriptor = "seed=" + std::to_string(seed);

    Rng rng(mix_seed(seed, 0xb0c5));
    const size_t total = out.mask.data.size();
    const int min_side = std::max(1, height / 16);
    const int max_side = std::max(min_side, height / 3);
    size_t dropped = 0;
    while (static_cast<double>(dropped) < target_drop_fraction * static_cast<double>(total)) {
        const int bw = rng.uniform_int(min_side, max_side);
        const int bh = rng.uniform_int(min_side, max_side);
        const int x0 = rng.uniform_int(0, std::max(0, width - bw));
        const int y0 = rng.uniform_int(0, std::max(0, height - bh));
        for (int y = y0; y < std::min(height, y0 + bh); ++y)
            for (int x = x0; x < std::min(width, x0 + bw); ++x) {
                auto& v = out.mask.at(x, y);
                if (v) { v = 0; ++dropped; }
            }
    }
    return out;
}

InjectionResult inject_artifact(const ConditionMap& x, const MaskLibrary& library,
                                double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("inject_artifact: p must be in [0,1]");
    library.require_resolution(x.rgb.width, x.rgb.height);

    InjectionResult result;
    result.condition = x;
    if (!rng.bernoulli(p)) return result;

    const size_t idx = rng.uniform_index(library.size());
    result.applied_mask = idx;
    const Mask& m = library.masks[idx].mask;
    for (int y = 0; y < x.rgb.height; ++y) {
        for (int x0 = 0; x0 < x.rgb.width; ++x0) {
            if (m.at(x0, y)) continue;
            result.condition.rgb.set_pixel(x0, y, {0, 0, 0});
            result.condition.validity.at(x0, y) = 0;
            result.condition.depth.at(x0, y) = kInfDepth;
        }
    }
    return result;
}

}  // namespace gevs
