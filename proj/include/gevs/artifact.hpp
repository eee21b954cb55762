// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gevs/gar.hpp"
#include "gevs/scene.hpp"

namespace gevs {

// Binary validity mask: 1 = keep, 0 = drop, matching the elementwise product
// applied to condition maps.
struct ArtifactMask {
    enum class Provenance : std::uint8_t { Reprojection, RandomBox };
    Mask mask;
    Provenance provenance = Provenance::Reprojection;
    std::string descriptor;  // source pose / box seed, for the manifest
};

struct MaskLibraryConfig {
    // Virtual poses are built between each source camera and the same camera
    // yawed by pair_yaw_degrees (the front / front-side rig geometry).
    double pair_yaw_degrees = 45.0;
    std::vector<std::pair<double, double>> virtual_offsets;  // (angle_fraction, lateral_offset m)
};

struct MaskLibrary {
    std::vector<ArtifactMask> masks;
    MaskLibraryConfig config;

    size_t size() const { return masks.size(); }
    void require_resolution(int width, int height) const;
};

// Harvests validity maps from virtual-pose reprojection: for every
// (scene, source camera, virtual offset) the source view is lifted to a
// cloud and rasterized at the extrapolated pose; the rasterization's
// validity channel is the mask, verbatim.
MaskLibrary build_mask_library(const std::vector<Scene>& scenes,
                               const std::vector<std::pair<CameraIntrinsics, CameraPose>>& source_cameras,
                               const MaskLibraryConfig& config,
                               std::uint64_t seed);

// Reprojection validity of one cloud at one pose, wrapped as a mask. This is
// the library's inner step; exposed so the shared-validity-operator contract
// can be exercised directly.
ArtifactMask mask_from_reprojection(const ColoredPointCloud& cloud,
                                    const CameraIntrinsics& intr, const CameraPose& pose);

// Ablation baseline masks: seeded axis-aligned boxes dropped until the
// target fraction is first reached or exceeded.
ArtifactMask make_random_box_mask(int width, int height, double target_drop_fraction,
                                  std::uint64_t seed);

struct InjectionResult {
    ConditionMap condition;
    std::optional<size_t> applied_mask;  // library index, absent when the gate said no
};

// Two-stage sampler: Bernoulli(p) gate, then a uniform library draw. The
// mask zeroes rgb, validity, and depth together so an injected condition is
// indistinguishable from a genuinely unsupported reprojection.
InjectionResult inject_artifact(const ConditionMap& x, const MaskLibrary& library,
                                double p, Rng& rng);

}  // namespace gevs
