// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gevs/gar.hpp"
#include "gevs/scene.hpp"
#include "gevs/types.hpp"

namespace gevs {

// Sparse reference image R with validity mask M; metrics run only on the
// valid pixel set (mask == 1).
struct SparseReference {
    Image reference;
    Mask mask;

    size_t valid_count() const { return mask.count_valid(); }
};

// Per-view evaluation row, the unit Table-style aggregation works on.
struct EvalRecord {
    double s_psnr = 0, s_ssim = 0, s_mae = 0, s_rmse = 0;
    double valid_fraction = 0;  // |valid set| / (H*W)
    double pose_offset = 0;     // degrees between source and target orientation
    int scene_id = 0, view_id = 0;

    void check_invariants() const;
};

inline constexpr double kPsnrCap = 99.0;  // zero-error PSNR stays finite

// Mean over valid pixels of ||pred - ref||^2 / 3 (per-channel
// normalization, so a uniform per-channel error e gives e^2).
double masked_mse(const Image& pred, const SparseReference& ref);

// 10 log10(1 / masked_mse) for [0,1] images; kPsnrCap when the error is 0.
double s_psnr(const Image& pred, const SparseReference& ref);

// Mean absolute / root-mean-square error over valid pixels and channels.
std::pair<double, double> s_mae_rmse(const Image& pred, const SparseReference& ref);

// Masked SSIM on luma: 11x11 Gaussian window (sigma 1.5, k1=0.01, k2=0.03,
// L=1), window statistics over valid pixels only with renormalized weights;
// pixels whose window valid-weight is below 0.5 are excluded, and the score
// is the mean over the remaining valid pixels.
double s_ssim(const Image& pred, const SparseReference& ref);

// Simulated LiDAR projection: a seeded uniform subsample of the view's
// finite-depth pixels. |valid set| = round(fraction * finite-depth count).
SparseReference make_sparse_reference(const RenderedView& truth, double subsample_fraction,
                                      std::uint64_t seed);

// SparseReference view of a condition map's validity channel (shared
// validity operator: the metric mask is the rasterization mask).
SparseReference reference_from_condition(const ConditionMap& cond);

struct BinAggregate {
    double lo = 0, hi = 0;
    size_t count = 0;
    double s_psnr = 0, s_ssim = 0, s_mae = 0, s_rmse = 0, valid_fraction = 0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    std::vector<BinAggregate> by_offset;
    std::vector<BinAggregate> by_sparsity;
    BinAggregate offset_other;    // records outside every offset bin
    BinAggregate sparsity_other;
};

// Per-bin arithmetic means. Bins are half-open [lo, hi) with the last bin
// closed; records outside all bins land in the "other" bucket.
EvalReport bin_and_aggregate(const std::vector<EvalRecord>& records,
                             const std::vector<double>& offset_bin_edges,
                             const std::vector<double>& sparsity_bin_edges);

}  // namespace gevs
