// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <optional>

#include "gevs/geometry.hpp"
#include "gevs/scene.hpp"
#include "gevs/types.hpp"

namespace gevs {

// Sparse reprojected rendering at a target camera. Invalid pixels are
// zero-filled in rgb and +inf in depth; validity is an explicit sidecar so
// genuinely black content stays distinguishable from missing support.
struct ConditionMap {
    Image rgb;
    Mask validity;
    DepthMap depth;

    // validity=0 => rgb exactly (0,0,0); validity=1 => depth > 0.
    void check_invariants() const;
};

// One cloud point per valid point-map pixel, row-major pixel order, colored
// from the paired image. Throws on shape mismatch or an all-invalid map.
ColoredPointCloud point_map_to_cloud(const PointMap& point_map, const Image& image);

// Z-buffer rasterization of the cloud into the target camera: minimum depth
// wins, exact ties go to the smallest source index, losers are discarded.
// The reduction is associative, so any thread count gives identical output.
ConditionMap rasterize(const ColoredPointCloud& cloud, const CameraIntrinsics& intr,
                       const CameraPose& pose, int num_threads = 1);

// The single condition-construction entry point shared by training-pair
// building and extrapolated inference.
ConditionMap condition_from_point_map(const PointMap& point_map, const Image& image,
                                      const CameraIntrinsics& target_intr,
                                      const CameraPose& target_pose, int num_threads = 1);

// Times condition_from_point_map has run in this process; lets tests pin
// that every condition, train or inference, went through the one entry point.
std::uint64_t condition_build_count();

struct TrainingPairResult {
    ConditionMap condition;
    std::optional<Image> supervision;
};

// Lifts the source view to a colored cloud and rasterizes it to the target
// camera. With target == source camera this is a u=v training pair; at any
// other pose it is an inference condition. target_truth, when given, must be
// rendered at exactly the target camera.
TrainingPairResult make_training_pair(const RenderedView& scene_view,
                                      const CameraIntrinsics& target_intr,
                                      const CameraPose& target_pose,
                                      const RenderedView* target_truth = nullptr);

}  // namespace gevs
