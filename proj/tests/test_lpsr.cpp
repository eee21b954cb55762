// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "gevs/lpsr.hpp"
#include "gevs/scene.hpp"
#include "test_util.hpp"

using namespace gevs;

namespace {

using test::oracle_mae_rmse;
using test::oracle_masked_mse;
using test::oracle_s_ssim;
using test::random_reference;

}  // namespace

TEST_CASE("masked_mse: identity, constant offset, oracle agreement") {
    Rng rng(2);
    SparseReference ref = random_reference(rng, 8, 8);
    Image pred = ref.reference;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (!ref.mask.at(x, y)) pred.set_pixel(x, y, {rng.uniform(), rng.uniform(), rng.uniform()});
    CHECK(masked_mse(pred, ref) == 0.0);

    Image offset = ref.reference;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (ref.mask.at(x, y))
                for (int c = 0; c < 3; ++c) offset.at(x, y, c) += 0.1;
    CHECK(masked_mse(offset, ref) == doctest::Approx(0.01).epsilon(1e-12));

    for (int trial = 0; trial < 50; ++trial) {
        const SparseReference r = random_reference(rng, 8, 8);
        const Image p = test::random_image(rng, 8, 8);
        CHECK(std::abs(masked_mse(p, r) - oracle_masked_mse(p, r)) < 1e-12);
    }

    SparseReference empty;
    empty.reference = Image(4, 4);
    empty.mask = Mask(4, 4, 0);
    CHECK_THROWS_AS(masked_mse(Image(4, 4), empty), std::invalid_argument);
    CHECK_THROWS_AS(masked_mse(Image(5, 4), ref), std::invalid_argument);
}

TEST_CASE("s_psnr: log algebra, zero-error cap, strict monotonicity") {
    Rng rng(3);
    SparseReference ref;
    ref.reference = Image(8, 8, 0.5);
    ref.mask = Mask(8, 8, 1);
    Image pred(8, 8, 0.5);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) pred.at(x, y, c) += 0.1;
    CHECK(masked_mse(pred, ref) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(s_psnr(pred, ref) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(s_psnr(ref.reference, ref) == 99.0);

    double prev_psnr = std::numeric_limits<double>::infinity();
    for (double err : {0.01, 0.03, 0.1, 0.2, 0.4}) {
        Image p(8, 8, 0.5);
        for (auto& v : p.data) v += err;
        const double cur = s_psnr(p, ref);
        CHECK(cur < prev_psnr);
        prev_psnr = cur;
    }
    (void)rng;
}

TEST_CASE("s_mae_rmse: closed forms and oracle agreement") {
    SparseReference ref;
    ref.reference = Image(8, 8, 0.4);
    ref.mask = Mask(8, 8, 1);

    Image constant(8, 8, 0.5);
    auto [mae, rmse] = s_mae_rmse(constant, ref);
    CHECK(mae == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rmse == doctest::Approx(0.1).epsilon(1e-12));

    // Alternating +-0.1.
    Image alt = ref.reference;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) alt.at(x, y, c) += ((x + y + c) % 2 ? 0.1 : -0.1);
    std::tie(mae, rmse) = s_mae_rmse(alt, ref);
    CHECK(mae == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rmse == doctest::Approx(0.1).epsilon(1e-12));

    // Half zero, half 0.2: mae 0.1, rmse sqrt(0.02).
    Image halves = ref.reference;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                if ((x + y + c) % 2) halves.at(x, y, c) += 0.2;
    std::tie(mae, rmse) = s_mae_rmse(halves, ref);
    CHECK(mae == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rmse == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const SparseReference r = random_reference(rng, 8, 8);
        const Image p = test::random_image(rng, 8, 8);
        const auto [m1, r1] = s_mae_rmse(p, r);
        const auto [m2, r2] = oracle_mae_rmse(p, r);
        CHECK(std::abs(m1 - m2) < 1e-12);
        CHECK(std::abs(r1 - r2) < 1e-12);
        CHECK(r1 >= m1);  // Jensen
    }
}

TEST_CASE("s_ssim: identity, masked-window oracle, exclusions") {
    Rng rng(5);
    SparseReference full;
    full.reference = test::random_image(rng, 16, 16);
    full.mask = Mask(16, 16, 1);
    CHECK(s_ssim(full.reference, full) == doctest::Approx(1.0).epsilon(1e-12));

    for (int trial = 0; trial < 10; ++trial) {
        const SparseReference r = random_reference(rng, 16, 16, 0.7);
        const Image p = test::random_image(rng, 16, 16);
        CHECK(std::abs(s_ssim(p, r) - oracle_s_ssim(p, r)) < 1e-9);
    }

    // A lone valid pixel carries window weight far below 0.5.
    SparseReference lone;
    lone.reference = Image(16, 16, 0.5);
    lone.mask = Mask(16, 16, 0);
    lone.mask.at(8, 8) = 1;
    CHECK_THROWS_AS(s_ssim(Image(16, 16, 0.5), lone), std::invalid_argument);

    SparseReference empty;
    empty.reference = Image(16, 16);
    empty.mask = Mask(16, 16, 0);
    CHECK_THROWS_AS(s_ssim(Image(16, 16), empty), std::invalid_argument);
}

TEST_CASE("all metrics ignore prediction values outside the valid set") {
    Rng rng(6);
    const SparseReference ref = random_reference(rng, 16, 16, 0.6);
    const Image pred = test::random_image(rng, 16, 16);
    const double mse0 = masked_mse(pred, ref);
    const double psnr0 = s_psnr(pred, ref);
    const auto [mae0, rmse0] = s_mae_rmse(pred, ref);
    const double ssim0 = s_ssim(pred, ref);

    for (int trial = 0; trial < 20; ++trial) {
        Image corrupt = pred;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (!ref.mask.at(x, y))
                    corrupt.set_pixel(x, y, {rng.uniform(), rng.uniform(), rng.uniform()});
        CHECK(masked_mse(corrupt, ref) == mse0);
        CHECK(s_psnr(corrupt, ref) == psnr0);
        const auto [mae, rmse] = s_mae_rmse(corrupt, ref);
        CHECK(mae == mae0);
        CHECK(rmse == rmse0);
        CHECK(s_ssim(corrupt, ref) == ssim0);
    }
}

TEST_CASE("make_sparse_reference: exact counts, determinism, degenerate fraction") {
    const Scene scene = generate_scene(70, 4);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const CameraIntrinsics intr(70, 70, 31.5, 31.5, 64, 64);
    const RenderedView view = render_scene(scene, intr, pose);
    size_t finite = 0;
    for (double d : view.depth.data) finite += std::isfinite(d) ? 1 : 0;

    const SparseReference all = make_sparse_reference(view, 1.0, 11);
    CHECK(all.valid_count() == finite);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            CHECK((all.mask.at(x, y) == 1) == std::isfinite(view.depth.at(x, y)));

    const SparseReference sub = make_sparse_reference(view, 0.02, 11);
    CHECK(sub.valid_count() ==
          static_cast<size_t>(std::llround(0.02 * static_cast<double>(finite))));
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (sub.mask.at(x, y)) {
                CHECK(sub.reference.pixel(x, y) == view.rgb.pixel(x, y));
                CHECK(std::isfinite(view.depth.at(x, y)));
            } else {
                CHECK(sub.reference.pixel(x, y) == Vec3{0, 0, 0});
            }

    const SparseReference sub2 = make_sparse_reference(view, 0.02, 11);
    CHECK(sub.mask == sub2.mask);
    CHECK_FALSE(make_sparse_reference(view, 0.02, 12).mask == sub.mask);

    CHECK_THROWS_AS(make_sparse_reference(view, 1e-9, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_sparse_reference(view, 0.0, 1), std::invalid_argument);
}

TEST_CASE("shared validity: condition validity channel is a metric mask verbatim") {
    const Scene scene = generate_scene(71, 4);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const CameraIntrinsics intr(70, 70, 31.5, 31.5, 64, 64);
    const RenderedView view = render_scene(scene, intr, pose);
    const CameraPose target = make_extrapolated_pose(pose, yaw_about_up(pose, 45.0), 0.3, 1.0);
    const ConditionMap cond =
        condition_from_point_map(view_to_point_map(view), view.rgb, intr, target);

    const SparseReference ref = reference_from_condition(cond);
    CHECK(ref.valid_count() == cond.validity.count_valid());
    CHECK(ref.mask == cond.validity);
}

TEST_CASE("bin_and_aggregate: means, edges, other bucket") {
    auto rec = [](double psnr, double offset, double vf) {
        EvalRecord r;
        r.s_psnr = psnr;
        r.s_ssim = 0.9;
        r.s_mae = 0.05;
        r.s_rmse = 0.07;
        r.pose_offset = offset;
        r.valid_fraction = vf;
        return r;
    };
    const std::vector<double> off_edges = {0, 5, 10, 15, 20, 30};
    const std::vector<double> spa_edges = {0, 0.02, 0.05, 0.1};

    // One record per offset bin reproduces the records verbatim.
    std::vector<EvalRecord> one_per_bin = {rec(20, 2, 0.01), rec(21, 7, 0.03), rec(22, 12, 0.06),
                                           rec(23, 17, 0.01), rec(24, 25, 0.03)};
    EvalReport rep = bin_and_aggregate(one_per_bin, off_edges, spa_edges);
    REQUIRE(rep.by_offset.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(rep.by_offset[i].count == 1);
        CHECK(rep.by_offset[i].s_psnr == one_per_bin[i].s_psnr);
    }

    // Mean of 20 and 24 in one bin is 22; last bin is closed at 30.
    std::vector<EvalRecord> pairrec = {rec(20, 3, 0.01), rec(24, 4, 0.01), rec(30, 30, 0.05),
                                       rec(10, 31, 0.2)};
    rep = bin_and_aggregate(pairrec, off_edges, spa_edges);
    CHECK(rep.by_offset[0].count == 2);
    CHECK(rep.by_offset[0].s_psnr == 22.0);
    CHECK(rep.by_offset[4].count == 1);   // offset exactly 30 lands in [20,30]
    CHECK(rep.offset_other.count == 1);   // offset 31 overflows
    CHECK(rep.sparsity_other.count == 1); // valid_fraction 0.2 overflows

    CHECK_THROWS_AS(bin_and_aggregate(pairrec, {5, 5}, spa_edges), std::invalid_argument);
    CHECK_THROWS_AS(bin_and_aggregate({}, off_edges, spa_edges), std::invalid_argument);
}

TEST_CASE("EvalRecord invariants are enforced at aggregation") {
    EvalRecord bad;
    bad.valid_fraction = 0.0;
    CHECK_THROWS_AS(bad.check_invariants(), std::logic_error);
    bad.valid_fraction = 0.5;
    bad.s_mae = 0.2;
    bad.s_rmse = 0.1;
    CHECK_THROWS_AS(bad.check_invariants(), std::logic_error);
}
