// SPDX-License-Identifier: Apache-2.0
#include "gevs/scene.hpp"

#include <algorithm>

namespace gevs {

namespace {

constexpr double kRayEps = 1e-9;

double intersect_plane(const Primitive& p, const Vec3& origin, const Vec3& dir) {
    const double denom = dir.dot(p.normal);
    if (denom == 0.0) return kInfDepth;
    const double t = (p.point - origin).dot(p.normal) / denom;
    return t > kRayEps ? t : kInfDepth;
}

double intersect_sphere(const Primitive& p, const Vec3& origin, const Vec3& dir) {
    const Vec3 oc = origin - p.center;
    const double a = dir.dot(dir);
    const double b = 2.0 * oc.dot(dir);
    const double c = oc.dot(oc) - p.radius * p.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return kInfDepth;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / (2.0 * a);
    if (t0 > kRayEps) return t0;
    const double t1 = (-b + sq) / (2.0 * a);
    return t1 > kRayEps ? t1 : kInfDepth;
}

double intersect_box(const Primitive& p, const Vec3& origin, const Vec3& dir) {
    // Slab method; IEEE division by zero gives the correct +-inf slabs.
    double tmin = -kInfDepth, tmax = kInfDepth;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {p.box_min.x, p.box_min.y, p.box_min.z};
    const double hi[3] = {p.box_max.x, p.box_max.y, p.box_max.z};
    for (int i = 0; i < 3; ++i) {
        if (d[i] == 0.0) {
            if (o[i] < lo[i] || o[i] > hi[i]) return kInfDepth;
            continue;
        }
        double t0 = (lo[i] - o[i]) / d[i];
        double t1 = (hi[i] - o[i]) / d[i];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return kInfDepth;
    }
    if (tmin > kRayEps) return tmin;
    if (tmax > kRayEps) return tmax;  // origin inside the box
    return kInfDepth;
}

double intersect(const Primitive& p, const Vec3& origin, const Vec3& dir) {
    switch (p.kind) {
        case PrimitiveKind::GroundPlane: return intersect_plane(p, origin, dir);
        case PrimitiveKind::Sphere: return intersect_sphere(p, origin, dir);
        case PrimitiveKind::Box: return intersect_box(p, origin, dir);
    }
    return kInfDepth;
}

}  // namespace

void Scene::validate() const {
    if (primitives.empty()) throw std::invalid_argument("Scene: primitives list is empty");
    auto check01 = [](const Vec3& c) {
        return c.x >= 0 && c.x <= 1 && c.y >= 0 && c.y <= 1 && c.z >= 0 && c.z <= 1;
    };
    for (const auto& p : primitives) {
        if (!p.albedo.finite() || !check01(p.albedo))
            throw std::invalid_argument("Scene: albedo outside [0,1]");
        if (!p.point.finite() || !p.normal.finite() || !p.box_min.finite() ||
            !p.box_max.finite() || !p.center.finite() || !std::isfinite(p.radius))
            throw std::invalid_argument("Scene: non-finite primitive parameter");
    }
    if (!check01(background_color)) throw std::invalid_argument("Scene: background outside [0,1]");
}

Scene generate_scene(std::uint64_t seed, int complexity) {
    if (complexity < 1) throw std::invalid_argument("generate_scene: complexity must be >= 1");
    Rng rng(mix_seed(seed, 0x5ce9e));

    Scene scene;
    scene.background_color = {rng.uniform(0.5, 0.8), rng.uniform(0.6, 0.9), rng.uniform(0.8, 1.0)};

    Primitive ground;
    ground.kind = PrimitiveKind::GroundPlane;
    ground.point = {0, 0, 0};
    ground.normal = {0, 0, 1};
    ground.albedo = {rng.uniform(0.25, 0.5), rng.uniform(0.25, 0.5), rng.uniform(0.2, 0.4)};
    scene.primitives.push_back(ground);

    for (int i = 0; i < complexity; ++i) {
        Primitive prim;
        prim.albedo = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        const double px = rng.uniform(-5.0, 5.0);
        const double py = rng.uniform(-5.0, 5.0);
        if (rng.bernoulli(0.5)) {
            prim.kind = PrimitiveKind::Box;
            const double hx = rng.uniform(0.3, 1.4);
            const double hy = rng.uniform(0.3, 1.4);
            const double hz = rng.uniform(0.4, 2.0);
            prim.box_min = {px - hx, py - hy, 0.0};
            prim.box_max = {px + hx, py + hy, hz};
        } else {
            prim.kind = PrimitiveKind::Sphere;
            prim.radius = rng.uniform(0.4, 1.2);
            prim.center = {px, py, prim.radius + rng.uniform(0.0, 1.0)};
        }
        scene.primitives.push_back(prim);
    }
    return scene;
}

std::pair<double, Vec3> cast_pixel(const Scene& scene, const CameraIntrinsics& intr,
                                   const CameraPose& pose, int x, int y) {
    const Mat3 r_c2w = pose.camera_to_world_rotation();
    const Vec3 origin = pose.camera_center();
    // dir has camera z component 1, so the ray parameter is camera-frame depth.
    const Vec3 dir_cam{(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0};
    const Vec3 dir = r_c2w * dir_cam;

    double best = kInfDepth;
    const Primitive* hit = nullptr;
    for (const auto& p : scene.primitives) {
        const double t = intersect(p, origin, dir);
        if (t < best) {
            best = t;
            hit = &p;
        }
    }
    if (hit == nullptr) return {kInfDepth, scene.background_color};
    return {best, hit->albedo};
}

RenderedView render_scene(const Scene& scene, const CameraIntrinsics& intr,
                          const CameraPose& pose) {
    scene.validate();
    RenderedView view;
    view.rgb = Image(intr.width, intr.height);
    view.depth = DepthMap(intr.width, intr.height);
    view.intrinsics = intr;
    view.pose = pose;
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            const auto [depth, color] = cast_pixel(scene, intr, pose, x, y);
            view.depth.at(x, y) = depth;
            view.rgb.set_pixel(x, y, color);
        }
    }
    return view;
}

PointMap view_to_point_map(const RenderedView& view) {
    const auto& intr = view.intrinsics;
    PointMap pm(intr.width, intr.height);
    const Mat3 r_c2w = view.pose.camera_to_world_rotation();
    const Vec3 origin = view.pose.camera_center();
    size_t valid = 0;
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            const double d = view.depth.at(x, y);
            const size_t i = pm.index(x, y);
            if (std::isfinite(d)) {
                const Vec3 dir_cam{(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0};
                pm.positions[i] = origin + (r_c2w * dir_cam) * d;
                pm.validity[i] = 1;
                ++valid;
            } else {
                pm.positions[i] = {0, 0, 0};
                pm.validity[i] = 0;
            }
        }
    }
    if (valid == 0) throw std::invalid_argument("view_to_point_map: view has no finite-depth pixel");
    return pm;
}

CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 z = (target - eye).normalized();
    Vec3 xaxis = z.cross(up);
    if (xaxis.norm() < 1e-12)
        throw std::invalid_argument("look_at_pose: view direction parallel to up");
    xaxis = xaxis.normalized();
    const Vec3 yaxis = z.cross(xaxis);
    return CameraPose::from_camera_to_world(Mat3::from_columns(xaxis, yaxis, z), eye);
}

CameraPose yaw_about_up(const CameraPose& pose, double degrees, const Vec3& up) {
    const double a = degrees * kPi / 180.0;
    const Vec3 u = up.normalized();
    const double c = std::cos(a), s = std::sin(a);
    // Rodrigues rotation about u.
    const Mat3 k = Mat3::from_rows({0, -u.z, u.y}, {u.z, 0, -u.x}, {-u.y, u.x, 0});
    Mat3 rot = Mat3::identity();
    for (int i = 0; i < 9; ++i) rot.m[i] += s * k.m[i];
    const Mat3 kk = k * k;
    for (int i = 0; i < 9; ++i) rot.m[i] += (1.0 - c) * kk.m[i];
    return CameraPose::from_camera_to_world(rot * pose.camera_to_world_rotation(),
                                            pose.camera_center());
}

}  // namespace gevs
