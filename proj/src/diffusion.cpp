// SPDX-License-Identifier: Apache-2.0
#include "gevs/diffusion.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

namespace gevs {

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw std::invalid_argument("NoiseSchedule: empty betas");
    double prev = 0.0;
    alpha_bar_.resize(betas_.size() + 1);
    alpha_bar_[0] = 1.0;
    for (size_t i = 0; i < betas_.size(); ++i) {
        const double b = betas_[i];
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("NoiseSchedule: beta outside (0,1)");
        if (!(b > prev)) throw std::invalid_argument("NoiseSchedule: betas must be strictly increasing");
        prev = b;
        alpha_bar_[i + 1] = alpha_bar_[i] * (1.0 - b);
        if (!(alpha_bar_[i + 1] < alpha_bar_[i]))
            throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing");
    }
    if (!(alpha_bar_.back() < 0.05))
        throw std::invalid_argument("NoiseSchedule: terminal alpha_bar must be < 0.05");
}

NoiseSchedule NoiseSchedule::linear(int num_train_steps, double beta_start, double beta_end) {
    if (num_train_steps < 2) throw std::invalid_argument("NoiseSchedule::linear: need at least 2 steps");
    std::vector<double> betas(num_train_steps);
    for (int t = 0; t < num_train_steps; ++t)
        betas[t] = beta_start + (beta_end - beta_start) * t / (num_train_steps - 1);
    return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > num_train_steps()) throw std::out_of_range("NoiseSchedule::beta: t out of range");
    return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > num_train_steps()) throw std::out_of_range("NoiseSchedule::alpha_bar: t out of range");
    return alpha_bar_[t];
}

// ---------------------------------------------------------------------------
// Latent-lite codecs

static void require_pool_divisible(int w, int h) {
    if (w % kLatentFactor != 0 || h % kLatentFactor != 0)
        throw std::invalid_argument("latent codec: image size must be divisible by 4");
}

// Pairwise-tree sum of one 4x4 block. Unlike a running sum, the tree stays
// exact on block-constant inputs (every partial is a power-of-two multiple),
// which the codec round-trip tests rely on.
static double block_sum_16(double v[16]) {
    for (int step = 1; step < 16; step *= 2)
        for (int i = 0; i + step < 16; i += 2 * step) v[i] += v[i + step];
    return v[0];
}

LatentImage encode_image(const Image& image) {
    require_pool_divisible(image.width, image.height);
    const int hw = image.width / kLatentFactor, hh = image.height / kLatentFactor;
    LatentImage z(kLatentChannels, hh, hw);
    const double inv = 1.0 / (kLatentFactor * kLatentFactor);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < hh; ++y)
            for (int x = 0; x < hw; ++x) {
                double block[16];
                for (int dy = 0; dy < kLatentFactor; ++dy)
                    for (int dx = 0; dx < kLatentFactor; ++dx)
                        block[dy * kLatentFactor + dx] =
                            image.at(x * kLatentFactor + dx, y * kLatentFactor + dy, c);
                z.at(c, y, x) = block_sum_16(block) * inv * 2.0 - 1.0;
            }
    return z;
}

Image decode_latent(const LatentImage& z) {
    if (z.channels != kLatentChannels) throw std::invalid_argument("decode_latent: expected 3 channels");
    for (double v : z.data)
        if (!std::isfinite(v)) throw std::invalid_argument("decode_latent: non-finite latent");
    Image img(z.width * kLatentFactor, z.height * kLatentFactor);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const double v = (z.at(c, y / kLatentFactor, x / kLatentFactor) + 1.0) * 0.5;
                img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
    return img;
}

ConditionEncoding encode_condition(const ConditionMap& x) {
    require_pool_divisible(x.rgb.width, x.rgb.height);
    const int hw = x.rgb.width / kLatentFactor, hh = x.rgb.height / kLatentFactor;
    ConditionEncoding enc;
    enc.is_null = false;
    enc.tensor = LatentImage(kConditionChannels, hh, hw);
    const double inv = 1.0 / (kLatentFactor * kLatentFactor);
    for (int y = 0; y < hh; ++y)
        for (int x0 = 0; x0 < hw; ++x0) {
            double block[3][16];
            double cov = 0.0;
            for (int dy = 0; dy < kLatentFactor; ++dy)
                for (int dx = 0; dx < kLatentFactor; ++dx) {
                    const int px = x0 * kLatentFactor + dx, py = y * kLatentFactor + dy;
                    for (int c = 0; c < 3; ++c) block[c][dy * kLatentFactor + dx] = x.rgb.at(px, py, c);
                    cov += x.validity.at(px, py) ? 1.0 : 0.0;
                }
            for (int c = 0; c < 3; ++c)
                enc.tensor.at(c, y, x0) = block_sum_16(block[c]) * inv * 2.0 - 1.0;
            enc.tensor.at(3, y, x0) = cov * inv;
            enc.tensor.at(4, y, x0) = 0.0;
        }
    return enc;
}

ConditionEncoding null_condition(int latent_height, int latent_width) {
    ConditionEncoding enc;
    enc.is_null = true;
    enc.tensor = LatentImage(kConditionChannels, latent_height, latent_width);
    for (int y = 0; y < latent_height; ++y)
        for (int x = 0; x < latent_width; ++x) enc.tensor.at(4, y, x) = 1.0;
    return enc;
}

LatentImage add_noise(const LatentImage& z0, int t, const LatentImage& eps,
                      const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.num_train_steps())
        throw std::out_of_range("add_noise: t out of range");
    if (!z0.same_shape(eps)) throw std::invalid_argument("add_noise: shape mismatch");
    const double ab = schedule.alpha_bar(t);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    LatentImage out = z0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * z0.data[i] + sb * eps.data[i];
    return out;
}

// ---------------------------------------------------------------------------
// Denoiser: parameter layout and forward/backward kernels
//
// Layout, in order:
//   stem conv   W[base][in][3][3], b[base]
//   per stage   time W[base][E], time b[base],
//               conv1 W[base][base][3][3], b[base],
//               conv2 W[base][base][3][3], b[base]
//   head conv   W[out][base][3][3], b[out]

namespace {

constexpr size_t conv_size(int out_c, int in_c) { return static_cast<size_t>(out_c) * in_c * 9 + out_c; }

struct ParamView {
    const double* w;
    const double* b;
};

struct Layout {
    size_t stem = 0;
    size_t stage_stride = 0;
    size_t head = 0;
    size_t total = 0;
    int base, in, out, embed, stages;

    explicit Layout(const DenoiserArch& a)
        : base(a.base_channels), in(a.in_channels()), out(a.out_channels()),
          embed(a.time_embed_dim), stages(a.num_stages) {
        stem = 0;
        const size_t stem_sz = conv_size(base, in);
        const size_t time_sz = static_cast<size_t>(base) * embed + base;
        stage_stride = time_sz + 2 * conv_size(base, base);
        head = stem_sz + static_cast<size_t>(stages) * stage_stride;
        total = head + conv_size(out, base);
    }
    size_t stage_offset(int s) const { return conv_size(base, in) + static_cast<size_t>(s) * stage_stride; }
};

void conv3x3_forward(const double* w, const double* b, const LatentImage& in, int out_c,
                     LatentImage& out) {
    const int H = in.height, W = in.width, IC = in.channels;
    out = LatentImage(out_c, H, W);
    for (int oc = 0; oc < out_c; ++oc) {
        const double* wk = w + static_cast<size_t>(oc) * IC * 9;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = b[oc];
                for (int ic = 0; ic < IC; ++ic) {
                    const double* k = wk + static_cast<size_t>(ic) * 9;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= H) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= W) continue;
                            s += k[(dy + 1) * 3 + (dx + 1)] * in.at(ic, yy, xx);
                        }
                    }
                }
                out.at(oc, y, x) = s;
            }
    }
}

// Accumulates weight/bias grads and, when g_in != nullptr, the input grad.
void conv3x3_backward(const double* w, const LatentImage& in, const LatentImage& g_out,
                      double* g_w, double* g_b, LatentImage* g_in) {
    const int H = in.height, W = in.width, IC = in.channels, OC = g_out.channels;
    if (g_in != nullptr) *g_in = LatentImage(IC, H, W);
    for (int oc = 0; oc < OC; ++oc) {
        double gb = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) gb += g_out.at(oc, y, x);
        g_b[oc] += gb;
        for (int ic = 0; ic < IC; ++ic) {
            double* gk = g_w + (static_cast<size_t>(oc) * IC + ic) * 9;
            const double* k = w + (static_cast<size_t>(oc) * IC + ic) * 9;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const double g = g_out.at(oc, y, x);
                    if (g == 0.0) continue;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = y + dy;
                        if (yy < 0 || yy >= H) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx;
                            if (xx < 0 || xx >= W) continue;
                            const int ki = (dy + 1) * 3 + (dx + 1);
                            gk[ki] += g * in.at(ic, yy, xx);
                            if (g_in != nullptr) g_in->at(ic, yy, xx) += g * k[ki];
                        }
                    }
                }
        }
    }
}

std::vector<double> timestep_embedding(int t, int dim) {
    std::vector<double> emb(dim, 0.0);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        emb[2 * i] = std::sin(t * freq);
        emb[2 * i + 1] = std::cos(t * freq);
    }
    return emb;
}

struct StageCache {
    LatentImage pre1_tanh;  // tanh(h_in + time bias)
    LatentImage c1_tanh;    // tanh(conv1 output)
    LatentImage h_in;
};

struct ForwardCache {
    LatentImage input;  // concat [z_t (+) c]
    std::vector<double> emb;
    std::vector<StageCache> stages;
    LatentImage h_final;
};

LatentImage forward_impl(const DenoiserModel& model, const LatentImage& z_t, int t,
                         const ConditionEncoding& c, ForwardCache* cache) {
    const Layout lay(model.arch);
    const double* p = model.params.data();

    LatentImage input(lay.in, z_t.height, z_t.width);
    std::memcpy(input.data.data(), z_t.data.data(), z_t.data.size() * sizeof(double));
    std::memcpy(input.data.data() + z_t.data.size(), c.tensor.data.data(),
                c.tensor.data.size() * sizeof(double));

    LatentImage h;
    conv3x3_forward(p + lay.stem, p + lay.stem + static_cast<size_t>(lay.base) * lay.in * 9,
                    input, lay.base, h);

    const std::vector<double> emb = timestep_embedding(t, lay.embed);
    if (cache != nullptr) {
        cache->input = input;
        cache->emb = emb;
        cache->stages.resize(lay.stages);
    }

    for (int s = 0; s < lay.stages; ++s) {
        const size_t so = lay.stage_offset(s);
        const double* tw = p + so;
        const double* tb = tw + static_cast<size_t>(lay.base) * lay.embed;
        const double* c1 = tb + lay.base;
        const double* c1b = c1 + static_cast<size_t>(lay.base) * lay.base * 9;
        const double* c2 = c1b + lay.base;
        const double* c2b = c2 + static_cast<size_t>(lay.base) * lay.base * 9;

        LatentImage a1(lay.base, h.height, h.width);
        for (int ch = 0; ch < lay.base; ++ch) {
            double bias = tb[ch];
            for (int e = 0; e < lay.embed; ++e) bias += tw[static_cast<size_t>(ch) * lay.embed + e] * emb[e];
            for (int y = 0; y < h.height; ++y)
                for (int x = 0; x < h.width; ++x)
                    a1.at(ch, y, x) = std::tanh(h.at(ch, y, x) + bias);
        }
        LatentImage c1out;
        conv3x3_forward(c1, c1b, a1, lay.base, c1out);
        LatentImage a2 = c1out;
        for (auto& v : a2.data) v = std::tanh(v);
        LatentImage c2out;
        conv3x3_forward(c2, c2b, a2, lay.base, c2out);

        if (cache != nullptr) {
            cache->stages[s].h_in = h;
            cache->stages[s].pre1_tanh = a1;
            cache->stages[s].c1_tanh = a2;
        }
        for (size_t i = 0; i < h.data.size(); ++i) h.data[i] += c2out.data[i];
    }

    if (cache != nullptr) cache->h_final = h;
    LatentImage out;
    conv3x3_forward(p + lay.head, p + lay.head + static_cast<size_t>(lay.out) * lay.base * 9,
                    h, lay.out, out);
    return out;
}

// Backprop of forward_impl; g_out is dL/d(output). Gradients are accumulated
// into g_params (same layout as params).
void backward_impl(const DenoiserModel& model, const ForwardCache& cache,
                   const LatentImage& g_out, double* g_params) {
    const Layout lay(model.arch);
    const double* p = model.params.data();

    LatentImage g_h;
    conv3x3_backward(p + lay.head, cache.h_final, g_out, g_params + lay.head,
                     g_params + lay.head + static_cast<size_t>(lay.out) * lay.base * 9, &g_h);

    for (int s = lay.stages - 1; s >= 0; --s) {
        const size_t so = lay.stage_offset(s);
        const double* c1 = p + so + static_cast<size_t>(lay.base) * lay.embed + lay.base;
        const double* c2 = c1 + static_cast<size_t>(lay.base) * lay.base * 9 + lay.base;
        double* g_tw = g_params + so;
        double* g_tb = g_tw + static_cast<size_t>(lay.base) * lay.embed;
        double* g_c1 = g_tb + lay.base;
        double* g_c1b = g_c1 + static_cast<size_t>(lay.base) * lay.base * 9;
        double* g_c2 = g_c1b + lay.base;
        double* g_c2b = g_c2 + static_cast<size_t>(lay.base) * lay.base * 9;

        const StageCache& sc = cache.stages[s];

        // h_out = h_in + conv2(tanh(conv1(tanh(h_in + tb)))): the residual
        // path passes g_h through unchanged.
        LatentImage g_a2;
        conv3x3_backward(c2, sc.c1_tanh, g_h, g_c2, g_c2b, &g_a2);
        for (size_t i = 0; i < g_a2.data.size(); ++i) {
            const double a = sc.c1_tanh.data[i];
            g_a2.data[i] *= (1.0 - a * a);
        }
        LatentImage g_a1;
        conv3x3_backward(c1, sc.pre1_tanh, g_a2, g_c1, g_c1b, &g_a1);
        for (size_t i = 0; i < g_a1.data.size(); ++i) {
            const double a = sc.pre1_tanh.data[i];
            g_a1.data[i] *= (1.0 - a * a);
        }
        // Per-channel time bias: gradient is the spatial sum.
        for (int ch = 0; ch < lay.base; ++ch) {
            double gb = 0.0;
            for (int y = 0; y < g_a1.height; ++y)
                for (int x = 0; x < g_a1.width; ++x) gb += g_a1.at(ch, y, x);
            g_tb[ch] += gb;
            for (int e = 0; e < lay.embed; ++e)
                g_tw[static_cast<size_t>(ch) * lay.embed + e] += gb * cache.emb[e];
        }
        for (size_t i = 0; i < g_h.data.size(); ++i) g_h.data[i] += g_a1.data[i];
    }

    conv3x3_backward(p + lay.stem, cache.input, g_h, g_params + lay.stem,
                     g_params + lay.stem + static_cast<size_t>(lay.base) * lay.in * 9, nullptr);
}

}  // namespace

size_t DenoiserArch::param_count() const { return Layout(*this).total; }

DenoiserModel DenoiserModel::zeros(const DenoiserArch& arch) {
    return DenoiserModel{arch, std::vector<double>(arch.param_count(), 0.0)};
}

DenoiserModel DenoiserModel::random_init(const DenoiserArch& arch, std::uint64_t seed,
                                         bool zero_output_head) {
    DenoiserModel m = zeros(arch);
    const Layout lay(arch);
    Rng rng(mix_seed(seed, 0x1417));
    auto fill_conv = [&](size_t off, int out_c, int in_c) {
        const double scale = std::sqrt(1.0 / (in_c * 9));
        for (size_t i = 0; i < static_cast<size_t>(out_c) * in_c * 9; ++i)
            m.params[off + i] = rng.normal() * scale;
        // biases stay zero
    };
    fill_conv(lay.stem, lay.base, lay.in);
    for (int s = 0; s < lay.stages; ++s) {
        const size_t so = lay.stage_offset(s);
        const double tscale = std::sqrt(1.0 / lay.embed);
        for (size_t i = 0; i < static_cast<size_t>(lay.base) * lay.embed; ++i)
            m.params[so + i] = rng.normal() * tscale;
        const size_t c1 = so + static_cast<size_t>(lay.base) * lay.embed + lay.base;
        fill_conv(c1, lay.base, lay.base);
        fill_conv(c1 + static_cast<size_t>(lay.base) * lay.base * 9 + lay.base, lay.base, lay.base);
    }
    if (!zero_output_head) fill_conv(lay.head, lay.out, lay.base);
    return m;
}

void DenoiserModel::validate() const {
    if (params.size() != arch.param_count())
        throw std::invalid_argument("DenoiserModel: parameter count does not match architecture");
    for (double v : params)
        if (!std::isfinite(v)) throw std::invalid_argument("DenoiserModel: non-finite parameter");
}

LatentImage denoise_predict(const DenoiserModel& model, const LatentImage& z_t, int t,
                            const ConditionEncoding& c) {
    model.validate();
    if (z_t.channels != kLatentChannels)
        throw std::invalid_argument("denoise_predict: latent must have 3 channels");
    if (c.tensor.channels != kConditionChannels || c.tensor.height != z_t.height ||
        c.tensor.width != z_t.width)
        throw std::invalid_argument("denoise_predict: condition shape mismatch");
    return forward_impl(model, z_t, t, c, nullptr);
}

// ---------------------------------------------------------------------------
// Training objective

LossResult training_loss(const DenoiserModel& model, const std::vector<TrainingPair>& batch,
                         const NoiseSchedule& schedule, double p_drop, Rng& rng,
                         int num_threads) {
    if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
    if (!(p_drop >= 0.0 && p_drop <= 1.0))
        throw std::invalid_argument("training_loss: p_drop must be in [0,1]");
    model.validate();

    struct SampleWork {
        LatentImage z0, eps;
        ConditionEncoding cond;
        int t = 1;
        double weight = 1.0;
        double loss = 0.0;
        std::vector<double> grad;
    };
    const size_t B = batch.size();
    std::vector<SampleWork> work(B);

    // All randomness is consumed here, sample by sample in batch order, so a
    // reseeded rng replays the identical batch regardless of thread count.
    for (size_t i = 0; i < B; ++i) {
        auto& w = work[i];
        if (!(batch[i].weight > 0.0)) throw std::invalid_argument("training_loss: weight must be positive");
        w.weight = batch[i].weight;
        w.t = rng.uniform_int(1, schedule.num_train_steps());
        const bool drop = rng.uniform() < p_drop;
        w.z0 = encode_image(batch[i].target);
        w.cond = drop ? null_condition(w.z0.height, w.z0.width)
                      : encode_condition(batch[i].condition);
        if (w.cond.tensor.height != w.z0.height || w.cond.tensor.width != w.z0.width)
            throw std::invalid_argument("training_loss: condition/target resolution mismatch");
        w.eps = LatentImage(kLatentChannels, w.z0.height, w.z0.width);
        for (auto& v : w.eps.data) v = rng.normal();
    }

    const size_t nparams = model.params.size();
    auto run_sample = [&](SampleWork& w) {
        const LatentImage z_t = add_noise(w.z0, w.t, w.eps, schedule);
        ForwardCache cache;
        const LatentImage pred = forward_impl(model, z_t, w.t, w.cond, &cache);
        const size_t n = pred.data.size();
        LatentImage g_out(pred.channels, pred.height, pred.width);
        double se = 0.0;
        const double gscale = w.weight / static_cast<double>(B) * 2.0 / static_cast<double>(n);
        for (size_t k = 0; k < n; ++k) {
            const double d = pred.data[k] - w.eps.data[k];
            se += d * d;
            g_out.data[k] = gscale * d;
        }
        w.loss = se / static_cast<double>(n);
        w.grad.assign(nparams, 0.0);
        backward_impl(model, cache, g_out, w.grad.data());
    };

    if (num_threads <= 1 || B == 1) {
        for (auto& w : work) run_sample(w);
    } else {
        std::vector<std::thread> threads;
        std::atomic<size_t> next{0};
        const int nt = std::min<int>(num_threads, static_cast<int>(B));
        for (int t = 0; t < nt; ++t)
            threads.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < B; i = next.fetch_add(1)) run_sample(work[i]);
            });
        for (auto& th : threads) th.join();
    }

    LossResult result;
    result.gradient.assign(nparams, 0.0);
    for (const auto& w : work) {  // fixed reduction order
        result.loss += w.weight * w.loss;
        for (size_t k = 0; k < nparams; ++k) result.gradient[k] += w.grad[k];
    }
    result.loss /= static_cast<double>(B);
    return result;
}

// ---------------------------------------------------------------------------
// Guidance and sampling

LatentImage cfg_combine(const LatentImage& eps_cond, const LatentImage& eps_uncond,
                        double s_cfg) {
    if (!eps_cond.same_shape(eps_uncond)) throw std::invalid_argument("cfg_combine: shape mismatch");
    if (s_cfg == 1.0) return eps_cond;
    if (s_cfg == 0.0) return eps_uncond;
    LatentImage out = eps_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = eps_uncond.data[i] + s_cfg * (eps_cond.data[i] - eps_uncond.data[i]);
    return out;
}

Image sample(const DenoiserModel& model, const ConditionMap& condition,
             const NoiseSchedule& schedule, const SampleOptions& opts) {
    const int T = opts.num_steps;
    if (T < 1 || T > schedule.num_train_steps())
        throw std::out_of_range("sample: num_steps outside [1, T_train]");

    const ConditionEncoding cond = encode_condition(condition);
    const ConditionEncoding null_c = null_condition(cond.tensor.height, cond.tensor.width);

    Rng rng(mix_seed(opts.seed, kSampleStreamTag));
    LatentImage z(kLatentChannels, cond.tensor.height, cond.tensor.width);
    for (auto& v : z.data) v = rng.normal();

    // Evenly spaced training timesteps, descending from T_train.
    std::vector<int> steps(T);
    for (int k = 0; k < T; ++k)
        steps[k] = static_cast<int>(std::llround(
            static_cast<double>(schedule.num_train_steps()) * (T - k) / static_cast<double>(T)));

    for (int k = 0; k < T; ++k) {
        const int t = steps[k];
        const int t_prev = (k + 1 < T) ? steps[k + 1] : 0;
        LatentImage eps;
        if (opts.cfg_scale == 1.0) {
            eps = denoise_predict(model, z, t, cond);
        } else if (opts.cfg_scale == 0.0) {
            eps = denoise_predict(model, z, t, null_c);
        } else {
            const LatentImage eps_c = denoise_predict(model, z, t, cond);
            const LatentImage eps_u = denoise_predict(model, z, t, null_c);
            eps = cfg_combine(eps_c, eps_u, opts.cfg_scale);
        }

        const double ab_t = schedule.alpha_bar(t);
        const double ab_p = schedule.alpha_bar(t_prev);
        const double sq_t = std::sqrt(ab_t), sq1m_t = std::sqrt(1.0 - ab_t);
        const double sq_p = std::sqrt(ab_p);
        if (!opts.stochastic) {
            const double sq1m_p = std::sqrt(1.0 - ab_p);
            for (size_t i = 0; i < z.data.size(); ++i) {
                const double z0 = (z.data[i] - sq1m_t * eps.data[i]) / sq_t;
                z.data[i] = sq_p * z0 + sq1m_p * eps.data[i];
            }
        } else {
            const double var = (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p);
            const double sigma = std::sqrt(std::max(0.0, var));
            const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
            for (size_t i = 0; i < z.data.size(); ++i) {
                const double z0 = (z.data[i] - sq1m_t * eps.data[i]) / sq_t;
                const double noise = (t_prev > 0) ? rng.normal() : 0.0;
                z.data[i] = sq_p * z0 + dir * eps.data[i] + sigma * noise;
            }
        }
    }
    return decode_latent(z);
}

// ---------------------------------------------------------------------------
// Trainer

TrainResult train_model(const std::vector<TrainingPair>& pairs,
                        const MaskLibrary* inject_library, const TrainConfig& cfg) {
    if (pairs.empty()) throw std::invalid_argument("train_model: no training pairs");
    if (cfg.steps < 1 || cfg.batch_size < 1) throw std::invalid_argument("train_model: bad config");
    if (inject_library != nullptr)
        inject_library->require_resolution(pairs[0].condition.rgb.width,
                                           pairs[0].condition.rgb.height);

    const NoiseSchedule schedule = NoiseSchedule::linear(cfg.t_train, cfg.beta_start, cfg.beta_end);

    Rng rng_data(mix_seed(cfg.seed, 0xda7a));
    Rng rng_train(mix_seed(cfg.seed, 0x7a19));
    Rng rng_inject(mix_seed(cfg.seed, 0x19c7));

    TrainResult result;
    result.model = DenoiserModel::random_init(cfg.arch, cfg.seed);

    std::vector<double> m(result.model.params.size(), 0.0);
    std::vector<double> v(result.model.params.size(), 0.0);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    std::vector<TrainingPair> batch;
    for (int step = 1; step <= cfg.steps; ++step) {
        batch.clear();
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t idx = rng_data.uniform_index(pairs.size());
            TrainingPair tp = pairs[idx];
            if (inject_library != nullptr && cfg.p_inject > 0.0) {
                auto injected = inject_artifact(tp.condition, *inject_library, cfg.p_inject, rng_inject);
                tp.condition = std::move(injected.condition);
            }
            batch.push_back(std::move(tp));
        }

        const LossResult lr = training_loss(result.model, batch, schedule, cfg.p_drop,
                                            rng_train, cfg.threads);
        result.loss_history.push_back(lr.loss);

        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        for (size_t k = 0; k < result.model.params.size(); ++k) {
            m[k] = beta1 * m[k] + (1.0 - beta1) * lr.gradient[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * lr.gradient[k] * lr.gradient[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            result.model.params[k] -=
                cfg.lr * (mhat / (std::sqrt(vhat) + adam_eps) + cfg.weight_decay * result.model.params[k]);
        }
    }

    result.data_stream_audit = rng_data.audit_hash();
    result.train_stream_audit = rng_train.audit_hash();
    result.inject_stream_audit = rng_inject.audit_hash();
    return result;
}

}  // namespace gevs
