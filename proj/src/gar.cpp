// SPDX-License-Identifier: Apache-2.0
#include "gevs/gar.hpp"

#include <limits>
#include <thread>
#include <vector>

namespace gevs {

namespace {

std::atomic<std::uint64_t> g_condition_builds{0};

struct PixelWinner {
    double depth = kInfDepth;
    size_t index = std::numeric_limits<size_t>::max();

    // Lexicographic (depth, index): minimum depth first, smallest source
    // index on exact ties. Associative and commutative, which is what makes
    // the parallel merge bit-identical to the sequential scan.
    bool beats(const PixelWinner& o) const {
        return depth < o.depth || (depth == o.depth && index < o.index);
    }
};

void scan_range(const std::vector<ProjectedPoint>& pts, size_t begin, size_t end,
                const CameraIntrinsics& intr, std::vector<PixelWinner>& winners) {
    for (size_t i = begin; i < end; ++i) {
        const auto& pt = pts[i];
        if (!validity_test(pt, intr)) continue;
        const int x = nearest_pixel(pt.pixel_x);
        const int y = nearest_pixel(pt.pixel_y);
        PixelWinner cand{pt.depth, pt.source_index};
        PixelWinner& w = winners[static_cast<size_t>(y) * intr.width + x];
        if (cand.beats(w)) w = cand;
    }
}

}  // namespace

void ConditionMap::check_invariants() const {
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            if (validity.at(x, y) == 0) {
                if (rgb.at(x, y, 0) != 0.0 || rgb.at(x, y, 1) != 0.0 || rgb.at(x, y, 2) != 0.0)
                    throw std::logic_error("ConditionMap: invalid pixel with nonzero rgb");
            } else if (!(depth.at(x, y) > 0.0)) {
                throw std::logic_error("ConditionMap: valid pixel with non-positive depth");
            }
        }
    }
}

ColoredPointCloud point_map_to_cloud(const PointMap& point_map, const Image& image) {
    if (point_map.width != image.width || point_map.height != image.height)
        throw std::invalid_argument("point_map_to_cloud: point map and image shapes differ");
    ColoredPointCloud cloud;
    const size_t n = point_map.count_valid();
    if (n == 0) throw std::invalid_argument("point_map_to_cloud: point map has no valid pixel");
    cloud.positions.reserve(n);
    cloud.colors.reserve(n);
    for (int y = 0; y < point_map.height; ++y) {
        for (int x = 0; x < point_map.width; ++x) {
            const size_t i = point_map.index(x, y);
            if (!point_map.validity[i]) continue;
            cloud.positions.push_back(point_map.positions[i]);
            cloud.colors.push_back(image.pixel(x, y));
        }
    }
    return cloud;
}

ConditionMap rasterize(const ColoredPointCloud& cloud, const CameraIntrinsics& intr,
                       const CameraPose& pose, int num_threads) {
    const auto pts = project_points(cloud, intr, pose);
    const size_t npix = static_cast<size_t>(intr.width) * intr.height;

    std::vector<PixelWinner> winners(npix);
    if (num_threads <= 1 || pts.size() < 2048) {
        scan_range(pts, 0, pts.size(), intr, winners);
    } else {
        const size_t nt = static_cast<size_t>(num_threads);
        std::vector<std::vector<PixelWinner>> partial(nt, std::vector<PixelWinner>(npix));
        std::vector<std::thread> threads;
        const size_t chunk = (pts.size() + nt - 1) / nt;
        for (size_t t = 0; t < nt; ++t) {
            const size_t b = t * chunk;
            const size_t e = std::min(pts.size(), b + chunk);
            threads.emplace_back([&, t, b, e] { scan_range(pts, b, e, intr, partial[t]); });
        }
        for (auto& th : threads) th.join();
        for (size_t t = 0; t < nt; ++t)
            for (size_t i = 0; i < npix; ++i)
                if (partial[t][i].beats(winners[i])) winners[i] = partial[t][i];
    }

    ConditionMap cond;
    cond.rgb = Image(intr.width, intr.height, 0.0);
    cond.validity = Mask(intr.width, intr.height, 0);
    cond.depth = DepthMap(intr.width, intr.height);
    for (size_t i = 0; i < npix; ++i) {
        if (!std::isfinite(winners[i].depth)) continue;
        const int x = static_cast<int>(i % intr.width);
        const int y = static_cast<int>(i / intr.width);
        cond.validity.at(x, y) = 1;
        cond.depth.at(x, y) = winners[i].depth;
        cond.rgb.set_pixel(x, y, pts[winners[i].index].color);
    }
    return cond;
}

ConditionMap condition_from_point_map(const PointMap& point_map, const Image& image,
                                      const CameraIntrinsics& target_intr,
                                      const CameraPose& target_pose, int num_threads) {
    g_condition_builds.fetch_add(1, std::memory_order_relaxed);
    const ColoredPointCloud cloud = point_map_to_cloud(point_map, image);
    return rasterize(cloud, target_intr, target_pose, num_threads);
}

std::uint64_t condition_build_count() { return g_condition_builds.load(std::memory_order_relaxed); }

TrainingPairResult make_training_pair(const RenderedView& scene_view,
                                      const CameraIntrinsics& target_intr,
                                      const CameraPose& target_pose,
                                      const RenderedView* target_truth) {
    if (target_truth != nullptr) {
        if (!(target_truth->intrinsics == target_intr) || !(target_truth->pose == target_pose))
            throw std::invalid_argument("make_training_pair: target_truth camera differs from target camera");
    }
    const PointMap pm = view_to_point_map(scene_view);
    TrainingPairResult result;
    result.condition = condition_from_point_map(pm, scene_view.rgb, target_intr, target_pose);
    if (target_truth != nullptr) result.supervision = target_truth->rgb;
    return result;
}

}  // namespace gevs
