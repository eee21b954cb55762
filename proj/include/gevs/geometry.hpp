// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gevs/mathutil.hpp"
#include "gevs/types.hpp"

namespace gevs {

// Pinhole intrinsics. The center of pixel (i, j) sits at continuous image
// coordinate (i, j); pixel assignment is round-to-nearest, half away from
// zero.
struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
        : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
        if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
        if (w < 1 || h < 1) throw std::invalid_argument("CameraIntrinsics: image size must be at least 1x1");
        if (!std::isfinite(cx) || !std::isfinite(cy)) throw std::invalid_argument("CameraIntrinsics: non-finite principal point");
    }
    bool operator==(const CameraIntrinsics& o) const {
        return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy &&
               width == o.width && height == o.height;
    }
};

// Rigid world->camera transform: x_cam = R * x_world + t.
// Camera frame follows the usual computer-vision convention: x right,
// y down, z forward.
class CameraPose {
public:
    static constexpr double kRotationTol = 1e-9;

    CameraPose() = default;
    CameraPose(const Mat3& rotation, const Vec3& translation)
        : rotation_(rotation), translation_(translation) {
        if (!rotation.is_rotation(kRotationTol))
            throw std::invalid_argument("CameraPose: rotation is not orthonormal with det +1");
        if (!translation.finite())
            throw std::invalid_argument("CameraPose: non-finite translation");
    }

    static CameraPose from_camera_to_world(const Mat3& r_c2w, const Vec3& center) {
        const Mat3 r = r_c2w.transposed();
        return CameraPose(r, -(r * center));
    }

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }

    Vec3 world_to_camera(const Vec3& p) const { return rotation_ * p + translation_; }
    Mat3 camera_to_world_rotation() const { return rotation_.transposed(); }
    Vec3 camera_center() const { return -(rotation_.transposed() * translation_); }
    // Camera axes expressed in the world frame.
    Vec3 right_axis_world() const { return rotation_.transposed().col(0); }
    Vec3 forward_axis_world() const { return rotation_.transposed().col(2); }

    bool operator==(const CameraPose& o) const {
        return rotation_ == o.rotation_ && translation_ == o.translation_;
    }

private:
    Mat3 rotation_;
    Vec3 translation_;
};

// Perspective projection of one cloud point. Validity is decided separately
// by validity_test, so behind-camera points are carried through as-is.
struct ProjectedPoint {
    double pixel_x = 0, pixel_y = 0;
    double depth = 0;  // camera-frame z in meters
    Vec3 color;
    size_t source_index = 0;
};

// Projects every cloud point, in cloud order. Points with non-positive
// camera depth are emitted with whatever coordinates the division produced;
// filtering is validity_test's job.
std::vector<ProjectedPoint> project_points(const ColoredPointCloud& cloud,
                                           const CameraIntrinsics& intr,
                                           const CameraPose& pose);

// The single validity operator shared by condition construction, artifact
// mask generation, and sparse-reference evaluation: positive depth, in-frame
// after rounding, and (when a z-buffer winner is supplied) front-most depth.
bool validity_test(const ProjectedPoint& pt, const CameraIntrinsics& intr,
                   std::optional<double> winner_depth = std::nullopt);

// Pixel index a projected point lands on (round half away from zero). The
// caller must have bounds-checked via validity_test first.
inline int nearest_pixel(double v) { return static_cast<int>(std::lround(v)); }

// Virtual camera between two observed ones: rotation by spherical
// interpolation at angle_fraction, center by linear interpolation, then the
// center is shifted lateral_offset meters along the interpolated camera's
// world-frame right axis.
CameraPose make_extrapolated_pose(const CameraPose& pose_a, const CameraPose& pose_b,
                                  double angle_fraction, double lateral_offset);

// Geodesic angle between two camera orientations, degrees in [0, 180].
double pose_offset_degrees(const CameraPose& pose_a, const CameraPose& pose_b);

}  // namespace gevs
