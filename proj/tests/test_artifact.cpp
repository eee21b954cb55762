// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "gevs/artifact.hpp"
#include "test_util.hpp"

using namespace gevs;

namespace {

ConditionMap sample_condition(std::uint64_t seed, int res = 32) {
    const Scene scene = generate_scene(seed, 4);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const CameraIntrinsics intr(res * 1.1, res * 1.1, (res - 1) / 2.0, (res - 1) / 2.0, res, res);
    const RenderedView view = render_scene(scene, intr, pose);
    const PointMap pm = view_to_point_map(view);
    return condition_from_point_map(pm, view.rgb, intr, pose);
}

MaskLibrary library_from_offsets(const std::vector<std::pair<double, double>>& offsets,
                                 int num_scenes = 1) {
    std::vector<Scene> scenes;
    for (int s = 0; s < num_scenes; ++s) scenes.push_back(generate_scene(60 + s, 4));
    const CameraIntrinsics intr(35, 35, 15.5, 15.5, 32, 32);
    std::vector<std::pair<CameraIntrinsics, CameraPose>> cams = {
        {intr, look_at_pose({8, 1, 1.8}, {0, 0, 1})}};
    MaskLibraryConfig cfg;
    cfg.virtual_offsets = offsets;
    return build_mask_library(scenes, cams, cfg, 9);
}

}  // namespace

TEST_CASE("build_mask_library: zero offset reproduces the self-projection validity map") {
    const Scene scene = generate_scene(60, 4);
    const CameraIntrinsics intr(35, 35, 15.5, 15.5, 32, 32);
    const CameraPose pose = look_at_pose({8, 1, 1.8}, {0, 0, 1});
    const RenderedView view = render_scene(scene, intr, pose);
    const ConditionMap self_proj = condition_from_point_map(
        view_to_point_map(view), view.rgb, intr, pose);

    const MaskLibrary lib = library_from_offsets({{0.0, 0.0}});
    REQUIRE(lib.size() == 1);
    CHECK(lib.masks[0].mask == self_proj.validity);
}

TEST_CASE("build_mask_library: cardinality is scenes x cameras x offsets") {
    const MaskLibrary lib = library_from_offsets({{0.1, 0.5}, {0.3, 1.0}, {0.5, -1.0}}, 2);
    CHECK(lib.size() == 6);
    CHECK_THROWS_AS(build_mask_library({}, {}, MaskLibraryConfig{}, 1), std::invalid_argument);
}

TEST_CASE("build_mask_library: larger lateral offsets lose coverage") {
    double cov_small = 0, cov_large = 0;
    const int num_scenes = 10;
    for (int s = 0; s < num_scenes; ++s) {
        std::vector<Scene> scenes = {generate_scene(80 + s, 4)};
        const CameraIntrinsics intr(35, 35, 15.5, 15.5, 32, 32);
        std::vector<std::pair<CameraIntrinsics, CameraPose>> cams = {
            {intr, look_at_pose({8, 0.3 * s, 1.8}, {0, 0, 1})}};
        MaskLibraryConfig cfg;
        cfg.virtual_offsets = {{0.0, 0.25}, {0.0, 2.5}};
        const MaskLibrary lib = build_mask_library(scenes, cams, cfg, 1);
        REQUIRE(lib.size() == 2);
        cov_small += static_cast<double>(lib.masks[0].mask.count_valid());
        cov_large += static_cast<double>(lib.masks[1].mask.count_valid());
    }
    CHECK(cov_large < cov_small);
}

TEST_CASE("make_random_box_mask: drop fraction lands in the contract window") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const ArtifactMask m = make_random_box_mask(64, 64, 0.25, seed);
        const double dropped =
            1.0 - static_cast<double>(m.mask.count_valid()) / static_cast<double>(m.mask.data.size());
        CHECK(dropped >= 0.25);
        CHECK(dropped <= 0.40);  // slack for the final overshooting box
    }
}

TEST_CASE("make_random_box_mask: determinism and limiting cases") {
    const ArtifactMask a = make_random_box_mask(64, 64, 0.3, 77);
    const ArtifactMask b = make_random_box_mask(64, 64, 0.3, 77);
    CHECK(a.mask == b.mask);

    // Vanishing target drops exactly one box worth of pixels.
    const ArtifactMask tiny = make_random_box_mask(64, 64, 1e-9, 5);
    const size_t dropped = tiny.mask.data.size() - tiny.mask.count_valid();
    CHECK(dropped >= 1);
    CHECK(dropped <= static_cast<size_t>((64 / 3 + 1) * (64 / 3 + 1)));

    CHECK_THROWS_AS(make_random_box_mask(64, 64, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_random_box_mask(64, 64, 1.0, 1), std::invalid_argument);
}

TEST_CASE("inject_artifact: p=0 never perturbs, identity mask is a no-op") {
    const ConditionMap cond = sample_condition(90);
    MaskLibrary lib;
    lib.masks.push_back({Mask(32, 32, 1), ArtifactMask::Provenance::RandomBox, "ones"});

    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const auto r = inject_artifact(cond, lib, 0.0, rng);
        CHECK_FALSE(r.applied_mask.has_value());
        CHECK(r.condition.rgb == cond.rgb);
        CHECK(r.condition.validity == cond.validity);
    }
    const auto r = inject_artifact(cond, lib, 1.0, rng);
    REQUIRE(r.applied_mask.has_value());
    CHECK(r.condition.rgb == cond.rgb);
    CHECK(r.condition.validity == cond.validity);
    CHECK(r.condition.depth == cond.depth);
}

TEST_CASE("inject_artifact: half-zero mask wipes exactly the dropped half") {
    const ConditionMap cond = sample_condition(91);
    Mask half(32, 32, 1);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 16; ++x) half.at(x, y) = 0;
    MaskLibrary lib;
    lib.masks.push_back({half, ArtifactMask::Provenance::RandomBox, "left-half"});

    Rng rng(2);
    const auto r = inject_artifact(cond, lib, 1.0, rng);
    REQUIRE(r.applied_mask == 0);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            if (x < 16) {
                CHECK(r.condition.validity.at(x, y) == 0);
                CHECK(r.condition.rgb.pixel(x, y) == Vec3{0, 0, 0});
            } else {
                CHECK(r.condition.validity.at(x, y) == cond.validity.at(x, y));
                CHECK(r.condition.rgb.pixel(x, y) == cond.rgb.pixel(x, y));
                CHECK(r.condition.depth.at(x, y) == cond.depth.at(x, y));
            }
        }
    CHECK_NOTHROW(r.condition.check_invariants());
}

TEST_CASE("inject_artifact: never creates support; deterministic under a fixed seed") {
    const ConditionMap cond = sample_condition(92);
    const MaskLibrary lib = library_from_offsets({{0.2, 1.0}, {0.4, -1.0}, {0.6, 2.0}});

    Rng rng_a(33), rng_b(33);
    for (int i = 0; i < 100; ++i) {
        const auto ra = inject_artifact(cond, lib, 0.5, rng_a);
        const auto rb = inject_artifact(cond, lib, 0.5, rng_b);
        CHECK(ra.applied_mask == rb.applied_mask);
        CHECK(ra.condition.rgb == rb.condition.rgb);
        for (size_t k = 0; k < cond.validity.data.size(); ++k)
            CHECK(ra.condition.validity.data[k] <= cond.validity.data[k]);
        CHECK_NOTHROW(ra.condition.check_invariants());
    }

    ConditionMap wrong = sample_condition(93, 16);
    Rng rng(1);
    CHECK_THROWS_AS(inject_artifact(wrong, lib, 0.5, rng), std::invalid_argument);
}

TEST_CASE("inject_artifact: gate frequency tracks p (loose unit-level bound)") {
    const ConditionMap cond = sample_condition(94, 16);
    MaskLibrary lib;
    for (int i = 0; i < 4; ++i)
        lib.masks.push_back(make_random_box_mask(16, 16, 0.3, 300 + i));

    Rng rng(55);
    int perturbed = 0;
    const int draws = 2000;
    for (int i = 0; i < draws; ++i)
        if (inject_artifact(cond, lib, 0.4, rng).applied_mask) ++perturbed;
    const double freq = static_cast<double>(perturbed) / draws;
    CHECK(freq > 0.36);  // ~3.7 sigma at n=2000
    CHECK(freq < 0.44);
}
