// SPDX-License-Identifier: Apache-2.0
#include "gevs/geometry.hpp"

#include <algorithm>

namespace gevs {

std::vector<ProjectedPoint> project_points(const ColoredPointCloud& cloud,
                                           const CameraIntrinsics& intr,
                                           const CameraPose& pose) {
    cloud.validate();
    std::vector<ProjectedPoint> out;
    out.reserve(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 pc = pose.world_to_camera(cloud.positions[i]);
        ProjectedPoint pt;
        pt.depth = pc.z;
        pt.pixel_x = intr.fx * pc.x / pc.z + intr.cx;
        pt.pixel_y = intr.fy * pc.y / pc.z + intr.cy;
        pt.color = cloud.colors[i];
        pt.source_index = i;
        out.push_back(pt);
    }
    return out;
}

bool validity_test(const ProjectedPoint& pt, const CameraIntrinsics& intr,
                   std::optional<double> winner_depth) {
    if (!(pt.depth > 0.0)) return false;
    // Comparisons on the rounded doubles so NaN coordinates fail cleanly.
    const double rx = std::round(pt.pixel_x);
    const double ry = std::round(pt.pixel_y);
    if (!(rx >= 0.0 && rx < static_cast<double>(intr.width))) return false;
    if (!(ry >= 0.0 && ry < static_cast<double>(intr.height))) return false;
    if (winner_depth.has_value() && pt.depth != *winner_depth) return false;
    return true;
}

CameraPose make_extrapolated_pose(const CameraPose& pose_a, const CameraPose& pose_b,
                                  double angle_fraction, double lateral_offset) {
    if (!(angle_fraction >= 0.0 && angle_fraction <= 1.0))
        throw std::invalid_argument("make_extrapolated_pose: angle_fraction must be in [0,1]");
    if (!std::isfinite(lateral_offset))
        throw std::invalid_argument("make_extrapolated_pose: non-finite lateral_offset");

    // Endpoints reproduce the inputs bit-exactly when no lateral shift is asked.
    if (lateral_offset == 0.0) {
        if (angle_fraction == 0.0) return pose_a;
        if (angle_fraction == 1.0) return pose_b;
    }

    Mat3 r_c2w;
    if (angle_fraction == 0.0) {
        r_c2w = pose_a.camera_to_world_rotation();
    } else if (angle_fraction == 1.0) {
        r_c2w = pose_b.camera_to_world_rotation();
    } else {
        const Quat qa = Quat::from_matrix(pose_a.camera_to_world_rotation());
        const Quat qb = Quat::from_matrix(pose_b.camera_to_world_rotation());
        r_c2w = slerp(qa, qb, angle_fraction).to_matrix();
    }

    const Vec3 ca = pose_a.camera_center();
    const Vec3 cb = pose_b.camera_center();
    Vec3 center = ca + angle_fraction * (cb - ca);
    center += lateral_offset * r_c2w.col(0);  // camera right axis in world frame
    return CameraPose::from_camera_to_world(r_c2w, center);
}

double pose_offset_degrees(const CameraPose& pose_a, const CameraPose& pose_b) {
    const Mat3 rel = pose_a.rotation().transposed() * pose_b.rotation();
    const double trace = rel(0, 0) + rel(1, 1) + rel(2, 2);
    const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / kPi;
}

}  // namespace gevs
