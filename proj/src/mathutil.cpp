// SPDX-License-Identifier: Apache-2.0
#include "gevs/mathutil.hpp"

namespace gevs {

Quat Quat::from_matrix(const Mat3& r) {
    // Shepperd's method: pick the largest diagonal combination for stability.
    Quat q;
    const double trace = r(0, 0) + r(1, 1) + r(2, 2);
    if (trace > 0.0) {
        const double s = std::sqrt(trace + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q.normalized();
}

Mat3 Quat::to_matrix() const {
    const double ww = w * w, xx = x * x, yy = y * y, zz = z * z;
    const double wx = w * x, wy = w * y, wz = w * z;
    const double xy = x * y, xz = x * z, yz = y * z;
    Mat3 r;
    r(0, 0) = ww + xx - yy - zz;
    r(0, 1) = 2.0 * (xy - wz);
    r(0, 2) = 2.0 * (xz + wy);
    r(1, 0) = 2.0 * (xy + wz);
    r(1, 1) = ww - xx + yy - zz;
    r(1, 2) = 2.0 * (yz - wx);
    r(2, 0) = 2.0 * (xz - wy);
    r(2, 1) = 2.0 * (yz + wx);
    r(2, 2) = ww - xx - yy + zz;
    return r;
}

Quat slerp(const Quat& a, const Quat& b, double t) {
    Quat qb = b;
    double d = a.dot(b);
    if (d < 0.0) {  // take the short arc
        d = -d;
        qb = Quat{-b.w, -b.x, -b.y, -b.z};
    }
    if (d > 1.0 - 1e-12) {
        // Nearly parallel: linear blend, then renormalize.
        Quat q{a.w + t * (qb.w - a.w), a.x + t * (qb.x - a.x),
               a.y + t * (qb.y - a.y), a.z + t * (qb.z - a.z)};
        return q.normalized();
    }
    const double theta = std::acos(d);
    const double s = std::sin(theta);
    const double wa = std::sin((1.0 - t) * theta) / s;
    const double wb = std::sin(t * theta) / s;
    return Quat{wa * a.w + wb * qb.w, wa * a.x + wb * qb.x,
                wa * a.y + wb * qb.y, wa * a.z + wb * qb.z}
        .normalized();
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream_tag) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream_tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace gevs
