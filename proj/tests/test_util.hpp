// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "gevs/diffusion.hpp"
#include "gevs/gar.hpp"
#include "gevs/geometry.hpp"
#include "gevs/lpsr.hpp"
#include "gevs/mathutil.hpp"

namespace gevs::test {

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("gevs_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline CameraPose random_pose(Rng& rng, double center_range = 5.0) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    q = q.normalized();
    const Vec3 center{rng.uniform(-center_range, center_range),
                      rng.uniform(-center_range, center_range),
                      rng.uniform(-center_range, center_range)};
    return CameraPose::from_camera_to_world(q.to_matrix(), center);
}

inline ColoredPointCloud random_cloud(Rng& rng, size_t n, double spread = 6.0) {
    ColoredPointCloud cloud;
    for (size_t i = 0; i < n; ++i) {
        cloud.positions.push_back({rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                                   rng.uniform(-spread, spread)});
        cloud.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    return cloud;
}

inline Image random_image(Rng& rng, int w, int h) {
    Image img(w, h);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

// 8-bit-quantized random image: survives a PNG round trip bit-exactly.
inline Image random_image_8bit(Rng& rng, int w, int h) {
    Image img(w, h);
    for (auto& v : img.data) v = static_cast<double>(rng.uniform_index(256)) / 255.0;
    return img;
}

inline Mask random_mask(Rng& rng, int w, int h, double p_valid = 0.5) {
    Mask m(w, h);
    for (auto& v : m.data) v = rng.bernoulli(p_valid) ? 1 : 0;
    return m;
}

// Independent single-branch deterministic sampler: one denoise_predict per
// step against a fixed condition encoding, no cfg_combine on the path. This
// is the oracle the guided sampler must match bit-exactly at s_cfg = 1
// (conditional branch) and s_cfg = 0 (null branch).
inline Image single_branch_sample(const DenoiserModel& model, const ConditionMap& condition,
                                  const NoiseSchedule& schedule, int num_steps,
                                  std::uint64_t seed, bool use_null_branch) {
    const ConditionEncoding enc = use_null_branch
        ? null_condition(condition.rgb.height / kLatentFactor, condition.rgb.width / kLatentFactor)
        : encode_condition(condition);
    Rng rng(mix_seed(seed, kSampleStreamTag));
    LatentImage z(kLatentChannels, enc.tensor.height, enc.tensor.width);
    for (auto& v : z.data) v = rng.normal();

    std::vector<int> steps(num_steps);
    for (int k = 0; k < num_steps; ++k)
        steps[k] = static_cast<int>(std::llround(static_cast<double>(schedule.num_train_steps()) *
                                                 (num_steps - k) / static_cast<double>(num_steps)));
    for (int k = 0; k < num_steps; ++k) {
        const int t = steps[k];
        const int t_prev = (k + 1 < num_steps) ? steps[k + 1] : 0;
        const LatentImage eps = denoise_predict(model, z, t, enc);
        const double ab_t = schedule.alpha_bar(t);
        const double ab_p = schedule.alpha_bar(t_prev);
        const double sq_t = std::sqrt(ab_t), sq1m_t = std::sqrt(1.0 - ab_t);
        const double sq_p = std::sqrt(ab_p), sq1m_p = std::sqrt(1.0 - ab_p);
        for (size_t i = 0; i < z.data.size(); ++i) {
            const double z0 = (z.data[i] - sq1m_t * eps.data[i]) / sq_t;
            z.data[i] = sq_p * z0 + sq1m_p * eps.data[i];
        }
    }
    return decode_latent(z);
}

// O(N*H*W) reference rasterizer: per pixel, scan every projected point
// through the same validity operator, keep minimum depth, break exact ties
// by smallest source index. Independent of the production single-pass scan.
inline ConditionMap brute_force_rasterize(const ColoredPointCloud& cloud,
                                          const CameraIntrinsics& intr, const CameraPose& pose) {
    const auto pts = project_points(cloud, intr, pose);
    ConditionMap cond;
    cond.rgb = Image(intr.width, intr.height, 0.0);
    cond.validity = Mask(intr.width, intr.height, 0);
    cond.depth = DepthMap(intr.width, intr.height);
    for (int y = 0; y < intr.height; ++y)
        for (int x = 0; x < intr.width; ++x) {
            bool found = false;
            double best_depth = 0;
            size_t best_index = 0;
            for (const auto& pt : pts) {
                if (!validity_test(pt, intr)) continue;
                if (nearest_pixel(pt.pixel_x) != x || nearest_pixel(pt.pixel_y) != y) continue;
                if (!found || pt.depth < best_depth ||
                    (pt.depth == best_depth && pt.source_index < best_index)) {
                    found = true;
                    best_depth = pt.depth;
                    best_index = pt.source_index;
                }
            }
            if (found) {
                cond.validity.at(x, y) = 1;
                cond.depth.at(x, y) = best_depth;
                cond.rgb.set_pixel(x, y, pts[best_index].color);
            }
        }
    return cond;
}

inline bool condition_maps_equal(const ConditionMap& a, const ConditionMap& b) {
    return a.rgb == b.rgb && a.validity == b.validity && a.depth == b.depth;
}

// Cloud stressing the tie-break: duplicated positions with distinct colors.
inline ColoredPointCloud cloud_with_ties(Rng& rng, size_t n) {
    ColoredPointCloud cloud = random_cloud(rng, n);
    for (size_t i = 0; i + 1 < n; i += 3) {
        cloud.positions[i + 1] = cloud.positions[i];
        cloud.colors[i + 1] = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    return cloud;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0, numeric_at_worst = 0.0;
};

// Central finite differences against the analytic gradient, replaying the
// identical rng stream for every loss evaluation. Relative error uses an
// absolute floor so exactly-zero gradient coordinates compare on FD noise
// scale rather than dividing by zero.
inline GradCheckResult finite_difference_check(const DenoiserModel& model,
                                               const std::vector<TrainingPair>& batch,
                                               const NoiseSchedule& schedule, double p_drop,
                                               std::uint64_t rng_seed, double step = 1e-4) {
    Rng rng(rng_seed);
    const LossResult analytic = training_loss(model, batch, schedule, p_drop, rng);

    GradCheckResult res;
    DenoiserModel m = model;
    for (size_t k = 0; k < m.params.size(); ++k) {
        const double orig = m.params[k];
        m.params[k] = orig + step;
        Rng r1(rng_seed);
        const double lp = training_loss(m, batch, schedule, p_drop, r1).loss;
        m.params[k] = orig - step;
        Rng r2(rng_seed);
        const double lm = training_loss(m, batch, schedule, p_drop, r2).loss;
        m.params[k] = orig;
        const double numeric = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic.gradient[k]), 1e-3});
        const double rel = std::abs(numeric - analytic.gradient[k]) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = k;
            res.analytic_at_worst = analytic.gradient[k];
            res.numeric_at_worst = numeric;
        }
    }
    return res;
}

// Scalar double-loop metric oracles, written independently of the library
// implementations they check.
inline double oracle_masked_mse(const Image& pred, const SparseReference& ref) {
    double acc = 0;
    long count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x)
            if (ref.mask.at(x, y)) {
                double norm2 = 0;
                for (int c = 0; c < 3; ++c) {
                    const double d = pred.at(x, y, c) - ref.reference.at(x, y, c);
                    norm2 += d * d;
                }
                acc += norm2 / 3.0;
                count += 1;
            }
    return acc / count;
}

inline std::pair<double, double> oracle_mae_rmse(const Image& pred, const SparseReference& ref) {
    double asum = 0, ssum = 0;
    long count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x)
            if (ref.mask.at(x, y))
                for (int c = 0; c < 3; ++c) {
                    const double d = pred.at(x, y, c) - ref.reference.at(x, y, c);
                    asum += std::abs(d);
                    ssum += d * d;
                    ++count;
                }
    return {asum / count, std::sqrt(ssum / count)};
}

// Direct per-window SSIM oracle: materializes each 11x11 window, masks,
// renormalizes, and evaluates the SSIM formula in one place.
inline double oracle_s_ssim(const Image& pred, const SparseReference& ref) {
    auto luma = [](const Image& img, int x, int y) {
        return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    };
    const double c1 = 1e-4, c2 = 9e-4;
    double total_kernel = 0;
    for (int dy = -5; dy <= 5; ++dy)
        for (int dx = -5; dx <= 5; ++dx) total_kernel += std::exp(-(dx * dx + dy * dy) / 4.5);

    double acc = 0;
    long included = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (!ref.mask.at(x, y)) continue;
            std::vector<double> w, px, rx;
            for (int dy = -5; dy <= 5; ++dy)
                for (int dx = -5; dx <= 5; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= pred.width || yy >= pred.height) continue;
                    if (!ref.mask.at(xx, yy)) continue;
                    w.push_back(std::exp(-(dx * dx + dy * dy) / 4.5) / total_kernel);
                    px.push_back(luma(pred, xx, yy));
                    rx.push_back(luma(ref.reference, xx, yy));
                }
            double wsum = 0;
            for (double v : w) wsum += v;
            if (wsum < 0.5) continue;
            double mx = 0, my = 0;
            for (size_t i = 0; i < w.size(); ++i) {
                mx += w[i] / wsum * px[i];
                my += w[i] / wsum * rx[i];
            }
            double vx = 0, vy = 0, cxy = 0;
            for (size_t i = 0; i < w.size(); ++i) {
                vx += w[i] / wsum * (px[i] - mx) * (px[i] - mx);
                vy += w[i] / wsum * (rx[i] - my) * (rx[i] - my);
                cxy += w[i] / wsum * (px[i] - mx) * (rx[i] - my);
            }
            acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++included;
        }
    return acc / included;
}

inline SparseReference random_reference(Rng& rng, int w, int h, double p_valid = 0.5) {
    SparseReference ref;
    ref.reference = random_image(rng, w, h);
    do {
        ref.mask = random_mask(rng, w, h, p_valid);
    } while (ref.mask.count_valid() == 0);
    return ref;
}

}  // namespace gevs::test
