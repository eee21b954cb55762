// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "gevs/diffusion.hpp"
#include "gevs/scene.hpp"
#include "test_util.hpp"

using namespace gevs;

namespace {

ConditionMap toy_condition(std::uint64_t seed, int res = 32) {
    const Scene scene = generate_scene(seed, 4);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const CameraIntrinsics intr(res * 1.1, res * 1.1, (res - 1) / 2.0, (res - 1) / 2.0, res, res);
    const RenderedView view = render_scene(scene, intr, pose);
    return condition_from_point_map(view_to_point_map(view), view.rgb, intr, pose);
}

Image toy_target(std::uint64_t seed, int res = 32) {
    const Scene scene = generate_scene(seed, 4);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const CameraIntrinsics intr(res * 1.1, res * 1.1, (res - 1) / 2.0, (res - 1) / 2.0, res, res);
    return render_scene(scene, intr, pose).rgb;
}

DenoiserArch tiny_arch() {
    DenoiserArch a;
    a.base_channels = 6;
    a.num_stages = 1;
    a.time_embed_dim = 8;
    return a;
}

}  // namespace

TEST_CASE("NoiseSchedule: validation and monotonicity") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    CHECK(s.num_train_steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(s.alpha_bar(1000) < 0.05);
    for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));

    CHECK_THROWS(NoiseSchedule::linear(10, 1e-4, 2e-3));       // terminal alpha_bar too high
    CHECK_THROWS(NoiseSchedule::linear(100, 0.02, 1e-4));      // decreasing betas
    CHECK_THROWS(NoiseSchedule({0.1, 0.1}));                   // not strictly increasing
    CHECK_THROWS(NoiseSchedule({0.5, 1.5}));                   // beta outside (0,1)
    CHECK_THROWS_AS(s.beta(0), std::out_of_range);
    CHECK_THROWS_AS(s.alpha_bar(1001), std::out_of_range);
}

TEST_CASE("encode_image / decode_latent: affine map and block constants") {
    Image half(8, 8, 0.5);
    const LatentImage z = encode_image(half);
    CHECK(z.channels == 3);
    CHECK(z.height == 2);
    CHECK(z.width == 2);
    for (double v : z.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

    // Zero latent decodes to the constant-0.5 image; +1 to the 1.0 image.
    Image mid = decode_latent(LatentImage(3, 2, 2));
    for (double v : mid.data) CHECK(v == 0.5);
    LatentImage ones(3, 2, 2);
    for (auto& v : ones.data) v = 1.0;
    Image white = decode_latent(ones);
    for (double v : white.data) CHECK(v == 1.0);

    // 4x-block-constant image survives the round trip bit-exactly.
    Rng rng(5);
    Image blocks(16, 16);
    for (int by = 0; by < 4; ++by)
        for (int bx = 0; bx < 4; ++bx) {
            const Vec3 c{rng.uniform(), rng.uniform(), rng.uniform()};
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx) blocks.set_pixel(bx * 4 + dx, by * 4 + dy, c);
        }
    CHECK(decode_latent(encode_image(blocks)) == blocks);
}

TEST_CASE("decode(encode(x)) equals the 4x block average of x") {
    Rng rng(6);
    const Image x = test::random_image(rng, 16, 16);
    const Image y = decode_latent(encode_image(x));
    for (int c = 0; c < 3; ++c)
        for (int py = 0; py < 16; ++py)
            for (int px = 0; px < 16; ++px) {
                double avg = 0;
                for (int dy = 0; dy < 4; ++dy)
                    for (int dx = 0; dx < 4; ++dx)
                        avg += x.at((px / 4) * 4 + dx, (py / 4) * 4 + dy, c) / 16.0;
                CHECK(std::abs(y.at(px, py, c) - avg) < 1e-7);
            }
    // Pooling fixed point: decode-encode-decode is idempotent.
    LatentImage z(3, 4, 4);
    for (auto& v : z.data) v = rng.uniform(-1, 1);
    const Image dz = decode_latent(z);
    CHECK(decode_latent(encode_image(dz)) == dz);
}

TEST_CASE("encode_image rejects sizes not divisible by 4") {
    CHECK_THROWS_AS(encode_image(Image(15, 16)), std::invalid_argument);
}

TEST_CASE("encode_condition: coverage channel and null disambiguation") {
    ConditionMap full;
    full.rgb = Image(16, 16, 0.25);
    full.validity = Mask(16, 16, 1);
    full.depth = DepthMap(16, 16, 2.0);
    const ConditionEncoding enc = encode_condition(full);
    CHECK_FALSE(enc.is_null);
    CHECK(enc.tensor.channels == 5);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(enc.tensor.at(3, y, x) == 1.0);  // coverage
            CHECK(enc.tensor.at(4, y, x) == 0.0);  // not the null token
        }

    ConditionMap empty;
    empty.rgb = Image(16, 16, 0.0);
    empty.validity = Mask(16, 16, 0);
    empty.depth = DepthMap(16, 16);
    const ConditionEncoding enc_empty = encode_condition(empty);
    CHECK_FALSE(enc_empty.is_null);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(enc_empty.tensor.at(0, y, x) == -1.0);  // zero image maps to -1
            CHECK(enc_empty.tensor.at(3, y, x) == 0.0);
            CHECK(enc_empty.tensor.at(4, y, x) == 0.0);
        }

    const ConditionEncoding null_enc = null_condition(4, 4);
    CHECK(null_enc.is_null);
    CHECK_FALSE(null_enc.tensor == enc_empty.tensor);  // indicator channel differs
    CHECK(null_condition(4, 4).tensor == null_enc.tensor);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(null_enc.tensor.at(0, y, x) == 0.0);
            CHECK(null_enc.tensor.at(3, y, x) == 0.0);
            CHECK(null_enc.tensor.at(4, y, x) == 1.0);
        }

    // Half-valid stripe pools to fractional coverage.
    ConditionMap stripe = full;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            if (y % 4 < 2) {
                stripe.validity.at(x, y) = 0;
                stripe.rgb.set_pixel(x, y, {0, 0, 0});
            }
    const ConditionEncoding enc_stripe = encode_condition(stripe);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(enc_stripe.tensor.at(3, y, x) == 0.5);
}

TEST_CASE("add_noise: closed form and Monte Carlo variance") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    Rng rng(8);
    LatentImage z0(3, 2, 2);
    for (auto& v : z0.data) v = rng.uniform(-1, 1);

    const LatentImage zero_eps(3, 2, 2);
    const int t = 400;
    const LatentImage no_noise = add_noise(z0, t, zero_eps, s);
    const double sa = std::sqrt(s.alpha_bar(t));
    for (size_t i = 0; i < z0.data.size(); ++i)
        CHECK(no_noise.data[i] == doctest::Approx(sa * z0.data[i]).epsilon(1e-15));

    // Early-timestep limit: z_1 stays within the sqrt(1-alpha_bar_1) bound.
    LatentImage eps(3, 2, 2);
    for (auto& v : eps.data) v = rng.normal();
    const LatentImage z1 = add_noise(z0, 1, eps, s);
    const double bound = std::sqrt(1.0 - s.alpha_bar(1));
    for (size_t i = 0; i < z0.data.size(); ++i)
        CHECK(std::abs(z1.data[i] - std::sqrt(s.alpha_bar(1)) * z0.data[i]) <=
              bound * std::abs(eps.data[i]) + 1e-15);

    // Variance over 10,000 draws matches 1 - alpha_bar within 5%.
    double sq_sum = 0;
    size_t n = 0;
    for (int draw = 0; draw < 10000; ++draw) {
        for (auto& v : eps.data) v = rng.normal();
        const LatentImage zt = add_noise(z0, t, eps, s);
        for (size_t i = 0; i < zt.data.size(); ++i) {
            const double dev = zt.data[i] - sa * z0.data[i];
            sq_sum += dev * dev;
            ++n;
        }
    }
    const double var = sq_sum / static_cast<double>(n);
    CHECK(var == doctest::Approx(1.0 - s.alpha_bar(t)).epsilon(0.05));

    CHECK_THROWS_AS(add_noise(z0, 0, eps, s), std::out_of_range);
    CHECK_THROWS_AS(add_noise(z0, 1001, eps, s), std::out_of_range);
}

TEST_CASE("denoise_predict: zero parameters give zero output; shapes enforced") {
    const DenoiserModel model = DenoiserModel::zeros(tiny_arch());
    LatentImage z(3, 8, 8);
    Rng rng(4);
    for (auto& v : z.data) v = rng.normal();
    const ConditionEncoding c = null_condition(8, 8);
    const LatentImage out = denoise_predict(model, z, 500, c);
    CHECK(out.channels == 3);
    CHECK(out.height == 8);
    CHECK(out.width == 8);
    for (double v : out.data) CHECK(v == 0.0);

    const ConditionEncoding wrong = null_condition(4, 4);
    CHECK_THROWS_AS(denoise_predict(model, z, 500, wrong), std::invalid_argument);
}

TEST_CASE("denoise_predict: receptive field matches the architecture descriptor") {
    const DenoiserArch arch = tiny_arch();  // radius 1 + 2*1 + 1 = 4
    REQUIRE(arch.receptive_radius() == 4);
    const DenoiserModel model = DenoiserModel::random_init(arch, 77, /*zero_output_head=*/false);
    LatentImage z(3, 16, 16);
    Rng rng(12);
    for (auto& v : z.data) v = rng.normal();
    ConditionEncoding c = null_condition(16, 16);
    const LatentImage base = denoise_predict(model, z, 321, c);

    ConditionEncoding far = c;
    far.tensor.at(0, 10, 10) += 1.0;  // Chebyshev distance 8 from output (2,2)
    const LatentImage out_far = denoise_predict(model, z, 321, far);
    for (int ch = 0; ch < 3; ++ch) CHECK(out_far.at(ch, 2, 2) == base.at(ch, 2, 2));

    ConditionEncoding near = c;
    near.tensor.at(0, 5, 2) += 1.0;  // distance 3, inside the field
    const LatentImage out_near = denoise_predict(model, z, 321, near);
    bool changed = false;
    for (int ch = 0; ch < 3; ++ch) changed |= (out_near.at(ch, 2, 2) != base.at(ch, 2, 2));
    CHECK(changed);
}

TEST_CASE("training_loss: zero model reproduces the mean of squared noise draws") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::zeros(tiny_arch());
    std::vector<TrainingPair> batch;
    for (int i = 0; i < 16; ++i) batch.push_back({toy_condition(400 + i), toy_target(400 + i), 1.0});

    Rng rng(99);
    const LossResult lr = training_loss(model, batch, s, 0.1, rng);

    // Replay the documented draw order: t, dropout gate, then eps.
    Rng replay(99);
    double expect = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        (void)replay.uniform_int(1, 1000);
        (void)replay.uniform();
        double mean_sq = 0;
        const int nelem = 3 * 8 * 8;
        for (int k = 0; k < nelem; ++k) {
            const double e = replay.normal();
            mean_sq += e * e / nelem;
        }
        expect += mean_sq / batch.size();
    }
    CHECK(lr.loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(lr.loss == doctest::Approx(1.0).epsilon(0.2));  // E[eps^2] = 1

    CHECK_THROWS_AS(training_loss(model, {}, s, 0.1, rng), std::invalid_argument);
}

TEST_CASE("training_loss: per-sample weights scale the objective linearly") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 3, false);
    std::vector<TrainingPair> batch1 = {{toy_condition(420), toy_target(420), 1.0}};
    std::vector<TrainingPair> batch3 = {{toy_condition(420), toy_target(420), 3.0}};
    Rng r1(7), r3(7);
    const double l1 = training_loss(model, batch1, s, 0.0, r1).loss;
    const double l3 = training_loss(model, batch3, s, 0.0, r3).loss;
    CHECK(l3 == doctest::Approx(3.0 * l1).epsilon(1e-12));
}

TEST_CASE("training_loss: p_drop=1 makes the gradient blind to condition content") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 5, false);
    std::vector<TrainingPair> a = {{toy_condition(430), toy_target(432), 1.0}};
    std::vector<TrainingPair> b = {{toy_condition(431), toy_target(432), 1.0}};
    Rng ra(13), rb(13);
    const LossResult la = training_loss(model, a, s, 1.0, ra);
    const LossResult lb = training_loss(model, b, s, 1.0, rb);
    CHECK(la.loss == lb.loss);
    CHECK(la.gradient == lb.gradient);
}

TEST_CASE("training_loss: analytic gradient matches finite differences (small model)") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 11, false);
    REQUIRE(model.params.size() <= 2000);
    std::vector<TrainingPair> batch = {{toy_condition(440), toy_target(440), 1.0},
                                       {toy_condition(441), toy_target(441), 1.7}};
    const auto res = test::finite_difference_check(model, batch, s, 0.15, 2024);
    CAPTURE(res.worst_index);
    CAPTURE(res.analytic_at_worst);
    CAPTURE(res.numeric_at_worst);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("training_loss: thread count does not change loss or gradient bits") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 21, false);
    std::vector<TrainingPair> batch;
    for (int i = 0; i < 6; ++i) batch.push_back({toy_condition(450 + i), toy_target(450 + i), 1.0});
    Rng r1(31), r4(31);
    const LossResult a = training_loss(model, batch, s, 0.2, r1, 1);
    const LossResult b = training_loss(model, batch, s, 0.2, r4, 4);
    CHECK(a.loss == b.loss);
    CHECK(a.gradient == b.gradient);
}

TEST_CASE("cfg_combine: exact endpoints, linearity, idempotence") {
    Rng rng(17);
    LatentImage c(3, 4, 4), u(3, 4, 4);
    for (auto& v : c.data) v = rng.normal();
    for (auto& v : u.data) v = rng.normal();

    CHECK(cfg_combine(c, u, 1.0) == c);  // bit-exact
    CHECK(cfg_combine(c, u, 0.0) == u);
    CHECK(cfg_combine(c, c, 3.7) == c);

    LatentImage ones(3, 4, 4), zeros(3, 4, 4);
    for (auto& v : ones.data) v = 1.0;
    const LatentImage two = cfg_combine(ones, zeros, 2.0);
    for (double v : two.data) CHECK(v == 2.0);

    // Affine in s: combine(s2) - combine(s0) == (s2-s0)/(s1-s0) * (combine(s1) - combine(s0)).
    const double s0 = 0.3, s1 = 1.4, s2 = 2.9;
    const LatentImage a0 = cfg_combine(c, u, s0);
    const LatentImage a1 = cfg_combine(c, u, s1);
    const LatentImage a2 = cfg_combine(c, u, s2);
    const double ratio = (s2 - s0) / (s1 - s0);
    for (size_t i = 0; i < a0.data.size(); ++i)
        CHECK(std::abs((a2.data[i] - a0.data[i]) - ratio * (a1.data[i] - a0.data[i])) < 1e-12);

    LatentImage wrong(3, 2, 2);
    CHECK_THROWS_AS(cfg_combine(c, wrong, 1.5), std::invalid_argument);
}

TEST_CASE("sample: deterministic and bit-equal to single-branch oracles at s=1 and s=0") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 41, false);
    const ConditionMap cond = toy_condition(460);

    SampleOptions opts;
    opts.num_steps = 6;
    opts.cfg_scale = 1.5;
    opts.seed = 9001;
    const Image a = sample(model, cond, s, opts);
    const Image b = sample(model, cond, s, opts);
    CHECK(a == b);

    for (std::uint64_t seed : {1u, 2u, 3u}) {
        opts.seed = seed;
        opts.cfg_scale = 1.0;
        CHECK(sample(model, cond, s, opts) ==
              test::single_branch_sample(model, cond, s, opts.num_steps, seed, false));
        opts.cfg_scale = 0.0;
        CHECK(sample(model, cond, s, opts) ==
              test::single_branch_sample(model, cond, s, opts.num_steps, seed, true));
    }

    opts.num_steps = 2000;
    CHECK_THROWS_AS(sample(model, cond, s, opts), std::out_of_range);
}

TEST_CASE("sample: stochastic flag changes the trajectory but stays deterministic") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    const DenoiserModel model = DenoiserModel::random_init(tiny_arch(), 43, false);
    const ConditionMap cond = toy_condition(461);
    SampleOptions det;
    det.num_steps = 5;
    det.seed = 5;
    SampleOptions sto = det;
    sto.stochastic = true;
    const Image i1 = sample(model, cond, s, sto);
    const Image i2 = sample(model, cond, s, sto);
    CHECK(i1 == i2);
    CHECK_FALSE(i1 == sample(model, cond, s, det));
}

TEST_CASE("train_model: loss halves on a toy dataset and reruns are bit-identical") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 4; ++i) pairs.push_back({toy_condition(470 + i, 16), toy_target(470 + i, 16), 1.0});

    TrainConfig cfg;
    cfg.arch = tiny_arch();
    cfg.steps = 250;
    cfg.batch_size = 4;
    cfg.lr = 3e-3;
    cfg.seed = 7;
    cfg.p_inject = 0.0;
    const TrainResult tr = train_model(pairs, nullptr, cfg);
    REQUIRE(tr.loss_history.size() == 250);
    double head = 0, tail = 0;
    for (int i = 0; i < 25; ++i) {
        head += tr.loss_history[i] / 25;
        tail += tr.loss_history[250 - 25 + i] / 25;
    }
    CHECK(tail < 0.5 * head);

    const TrainResult tr2 = train_model(pairs, nullptr, cfg);
    CHECK(tr.model.params == tr2.model.params);
    CHECK(tr.train_stream_audit == tr2.train_stream_audit);

    // Threaded loss computation must not perturb the trajectory.
    TrainConfig cfg_mt = cfg;
    cfg_mt.steps = 40;
    cfg_mt.threads = 3;
    TrainConfig cfg_st = cfg_mt;
    cfg_st.threads = 1;
    CHECK(train_model(pairs, nullptr, cfg_mt).model.params ==
          train_model(pairs, nullptr, cfg_st).model.params);
}

TEST_CASE("DenoiserModel validation") {
    DenoiserModel m = DenoiserModel::zeros(tiny_arch());
    m.params.pop_back();
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
