// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gevs/mathutil.hpp"

namespace gevs {

inline constexpr double kInfDepth = std::numeric_limits<double>::infinity();

// H x W x 3 image, row-major, channels interleaved, values in [0,1].
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;  // size = 3 * width * height

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(3) * w * h, fill) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("Image: non-positive size");
    }
    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    void set_pixel(int x, int y, const Vec3& rgb) {
        at(x, y, 0) = rgb.x; at(x, y, 1) = rgb.y; at(x, y, 2) = rgb.z;
    }
    Vec3 pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && data == o.data;
    }
};

// H x W binary mask, 1 = valid, 0 = invalid.
struct Mask {
    int width = 0, height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("Mask: non-positive size");
    }
    std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count_valid() const {
        size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
    bool operator==(const Mask& o) const {
        return width == o.width && height == o.height && data == o.data;
    }
};

// H x W depth buffer, camera-frame z in meters, +inf where nothing was hit.
struct DepthMap {
    int width = 0, height = 0;
    std::vector<double> data;

    DepthMap() = default;
    DepthMap(int w, int h, double fill = kInfDepth)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("DepthMap: non-positive size");
    }
    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool operator==(const DepthMap& o) const {
        return width == o.width && height == o.height && data == o.data;
    }
};

// Per-pixel world coordinates, row-major, with an explicit validity plane.
struct PointMap {
    int width = 0, height = 0;
    std::vector<Vec3> positions;
    std::vector<std::uint8_t> validity;

    PointMap() = default;
    PointMap(int w, int h)
        : width(w), height(h),
          positions(static_cast<size_t>(w) * h),
          validity(static_cast<size_t>(w) * h, 0) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("PointMap: non-positive size");
    }
    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    size_t count_valid() const {
        size_t n = 0;
        for (auto v : validity) n += (v != 0);
        return n;
    }
};

// World-frame colored point cloud (positions in meters, colors in [0,1]).
struct ColoredPointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;

    size_t size() const { return positions.size(); }
    void validate() const {
        if (positions.empty()) throw std::invalid_argument("ColoredPointCloud: empty cloud");
        if (positions.size() != colors.size())
            throw std::invalid_argument("ColoredPointCloud: positions/colors size mismatch");
        for (const auto& p : positions)
            if (!p.finite()) throw std::invalid_argument("ColoredPointCloud: non-finite position");
        for (const auto& c : colors)
            if (!(c.x >= 0 && c.x <= 1 && c.y >= 0 && c.y <= 1 && c.z >= 0 && c.z <= 1))
                throw std::invalid_argument("ColoredPointCloud: color outside [0,1]");
    }
};

}  // namespace gevs
