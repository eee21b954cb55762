// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gevs/geometry.hpp"
#include "gevs/types.hpp"

namespace gevs {

// Procedural flat-shaded primitives. The scene oracle exists to give every
// pixel an exact color and an exact camera-frame depth; realism is a
// non-goal.
enum class PrimitiveKind : std::uint8_t { GroundPlane, Box, Sphere };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::GroundPlane;
    // GroundPlane: plane through `point` with unit `normal`.
    Vec3 point, normal;
    // Box: axis-aligned, corners box_min <= box_max.
    Vec3 box_min, box_max;
    // Sphere.
    Vec3 center;
    double radius = 0;
    Vec3 albedo;
};

struct Scene {
    std::vector<Primitive> primitives;
    Vec3 background_color;

    void validate() const;
};

// Exact render of one camera: flat albedo of the nearest hit, camera-frame z
// depth, +inf where no primitive is hit.
struct RenderedView {
    Image rgb;
    DepthMap depth;
    CameraIntrinsics intrinsics;
    CameraPose pose;
};

// Deterministic scene from a seed: one ground plane plus `complexity`
// boxes/spheres with seeded placement and distinct albedos.
Scene generate_scene(std::uint64_t seed, int complexity);

// Per-pixel ray casting through pixel centers (continuous coordinate (x, y)
// for pixel (x, y)), nearest intersection wins.
RenderedView render_scene(const Scene& scene, const CameraIntrinsics& intr,
                          const CameraPose& pose);

// Ray-cast a single pixel; returns camera-frame depth (+inf on miss) and the
// hit albedo or background color. Exposed so tests can cross-check the full
// render loop.
std::pair<double, Vec3> cast_pixel(const Scene& scene, const CameraIntrinsics& intr,
                                   const CameraPose& pose, int x, int y);

// Back-projects every finite-depth pixel to world coordinates; +inf pixels
// are marked invalid. Throws when the view has no finite-depth pixel.
PointMap view_to_point_map(const RenderedView& view);

// Camera-to-world look-at helper (z-up world, CV camera axes).
CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 0, 1});

// Same camera center, orientation yawed by `degrees` about the world up axis.
CameraPose yaw_about_up(const CameraPose& pose, double degrees, const Vec3& up = {0, 0, 1});

}  // namespace gevs
