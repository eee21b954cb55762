// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gevs/artifact.hpp"
#include "gevs/gar.hpp"
#include "gevs/types.hpp"

namespace gevs {

// Diffusion noising schedule. Betas are 1-based; alpha_bar(0) == 1.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> betas);
    static NoiseSchedule linear(int num_train_steps, double beta_start, double beta_end);

    int num_train_steps() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const;       // t in [1, T]
    double alpha_bar(int t) const;  // t in [0, T]

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;  // alpha_bar_[t], index 0..T
};

// C x H' x W' tensor; the latent-lite space is 1/4 the image resolution.
struct LatentImage {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;

    LatentImage() = default;
    LatentImage(int c, int h, int w)
        : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, 0.0) {}
    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    bool same_shape(const LatentImage& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool operator==(const LatentImage& o) const { return same_shape(o) && data == o.data; }
};

// Encoded condition features. Channels 0-2 carry the pooled rgb content,
// channel 3 the pooled validity coverage, channel 4 a null-token indicator.
// The indicator exists because a zero-filled condition map is legitimately
// all-zero; the null token must stay distinguishable from it.
struct ConditionEncoding {
    LatentImage tensor;  // 5 channels
    bool is_null = false;
};

inline constexpr int kLatentChannels = 3;
inline constexpr int kConditionChannels = 5;
inline constexpr int kLatentFactor = 4;

// Fixed 4x average-pool to [-1,1]; stands in for a learned VAE.
LatentImage encode_image(const Image& image);
// Nearest-neighbor 4x upsample back to [0,1], clamped.
Image decode_latent(const LatentImage& z);
ConditionEncoding encode_condition(const ConditionMap& x);
ConditionEncoding null_condition(int latent_height, int latent_width);

// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps.
LatentImage add_noise(const LatentImage& z0, int t, const LatentImage& eps,
                      const NoiseSchedule& schedule);

// Small convolutional residual denoiser over the channel concat
// [z_t (+) c], with a sinusoidal timestep embedding projected to a
// per-channel bias at every stage. All convs are 3x3 stride 1; there is no
// normalization layer, so the receptive field is exactly what the
// architecture descriptor implies and all-zero parameters give an all-zero
// output.
struct DenoiserArch {
    int base_channels = 16;
    int num_stages = 2;
    int time_embed_dim = 16;

    int in_channels() const { return kLatentChannels + kConditionChannels; }
    int out_channels() const { return kLatentChannels; }
    size_t param_count() const;
    // Chebyshev radius, in latent pixels, an output pixel can see:
    // one 3x3 conv per ring (stem + 2 per stage + output head).
    int receptive_radius() const { return 1 + 2 * num_stages + 1; }
    bool operator==(const DenoiserArch& o) const {
        return base_channels == o.base_channels && num_stages == o.num_stages &&
               time_embed_dim == o.time_embed_dim;
    }
};

struct DenoiserModel {
    DenoiserArch arch;
    std::vector<double> params;

    static DenoiserModel zeros(const DenoiserArch& arch);
    // Seeded Xavier init; the output head starts at zero so an untrained
    // model predicts zero noise.
    static DenoiserModel random_init(const DenoiserArch& arch, std::uint64_t seed,
                                     bool zero_output_head = true);
    void validate() const;
};

// Deterministic forward pass; output shape equals z_t's.
LatentImage denoise_predict(const DenoiserModel& model, const LatentImage& z_t, int t,
                            const ConditionEncoding& c);

// One training sample: condition (clean or artifact-injected), dense
// supervision image, dataloader weight.
struct TrainingPair {
    ConditionMap condition;
    Image target;
    double weight = 1.0;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> gradient;
};

// Weighted single-timestep noise-prediction objective with conditional
// dropout. Per sample, in batch order, the rng stream is consumed as:
// timestep, dropout gate, then the noise tensor elementwise. Returns the
// exact analytic gradient. num_threads only parallelizes per-sample
// forward/backward work; draws and the gradient reduction stay in batch
// order, so the result is bit-identical for any thread count.
LossResult training_loss(const DenoiserModel& model, const std::vector<TrainingPair>& batch,
                         const NoiseSchedule& schedule, double p_drop, Rng& rng,
                         int num_threads = 1);

// eps_uncond + s_cfg (eps_cond - eps_uncond), exact at s_cfg = 0 and 1.
LatentImage cfg_combine(const LatentImage& eps_cond, const LatentImage& eps_uncond,
                        double s_cfg);

struct SampleOptions {
    int num_steps = 30;
    double cfg_scale = 1.5;
    std::uint64_t seed = 0;
    bool stochastic = false;  // default is the deterministic update
};

// Stream tag the sampler mixes into its seed; part of the determinism
// contract (an independent reimplementation of the documented sampler must
// reproduce sample() bit-exactly from the same seed).
inline constexpr std::uint64_t kSampleStreamTag = 0x5a3d;

// T-step reverse process from seeded Gaussian noise, conditioned on x via
// classifier-free guidance; decodes the final latent to an image.
Image sample(const DenoiserModel& model, const ConditionMap& condition,
             const NoiseSchedule& schedule, const SampleOptions& opts);

struct TrainConfig {
    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double p_drop = 0.1;
    double p_inject = 0.4;
    double lr = 1e-3;
    int steps = 2000;
    std::uint64_t seed = 1;
    int batch_size = 4;
    int threads = 1;
    double weight_decay = 0.0;
    DenoiserArch arch;
};

struct TrainResult {
    DenoiserModel model;
    std::vector<double> loss_history;
    // FNV hashes of every raw draw per stream; equal hashes prove two runs
    // consumed identical randomness.
    std::uint64_t data_stream_audit = 0;
    std::uint64_t train_stream_audit = 0;
    std::uint64_t inject_stream_audit = 0;
};

// AdamW loop over uniformly resampled batches. inject_library may be null
// (no artifact injection); injection draws come from a dedicated stream so
// ablation variants share every other stream bit-for-bit.
TrainResult train_model(const std::vector<TrainingPair>& pairs,
                        const MaskLibrary* inject_library, const TrainConfig& cfg);

}  // namespace gevs
