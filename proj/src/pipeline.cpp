// SPDX-License-Identifier: Apache-2.0
#include "gevs/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace gevs::pipeline {

using ordered_json = nlohmann::ordered_json;

namespace {

// Stream tags for seed splitting; every consumer gets its own stream.
enum : std::uint64_t {
    kTagScene = 0x01,
    kTagMount = 0x02,
    kTagEvalScene = 0x03,
    kTagMaskScene = 0x04,
    kTagRandomLib = 0x05,
    kTagSample = 0x06,
    kTagRef = 0x07,
    kTagRefFrac = 0x08,
};

constexpr double kPairYawDegrees = 45.0;

CameraIntrinsics square_intrinsics(int resolution) {
    const double f = resolution * 1.1;
    const double c = (resolution - 1) / 2.0;
    return CameraIntrinsics(f, f, c, c, resolution, resolution);
}

CameraPose seeded_mount(std::uint64_t seed) {
    Rng rng(seed);
    const double azimuth = rng.uniform(0.0, 2.0 * kPi);
    const double radius = rng.uniform(7.0, 10.0);
    const double height = rng.uniform(1.3, 2.2);
    const Vec3 eye{radius * std::cos(azimuth), radius * std::sin(azimuth), height};
    const Vec3 target{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(0.5, 1.5)};
    return look_at_pose(eye, target);
}

std::string view_stem(int scene_id, int view_id) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "scene%04d/view%03d", scene_id, view_id);
    return buf;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw io::FormatError("config", path.string(), e.what(), e.byte);
    }
    PipelineConfig c;
    c.resolution = j.value("resolution", c.resolution);
    c.train_scenes = j.value("train_scenes", c.train_scenes);
    c.cameras_per_scene = j.value("cameras_per_scene", c.cameras_per_scene);
    c.scene_complexity = j.value("scene_complexity", c.scene_complexity);

    c.train.t_train = j.value("t_train", c.train.t_train);
    c.train.beta_start = j.value("beta_start", c.train.beta_start);
    c.train.beta_end = j.value("beta_end", c.train.beta_end);
    c.train.p_drop = j.value("p_drop", c.train.p_drop);
    c.train.p_inject = j.value("p_inject", c.train.p_inject);
    c.train.lr = j.value("lr", c.train.lr);
    c.train.steps = j.value("steps", c.train.steps);
    c.train.seed = j.value("seed", c.train.seed);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.threads = j.value("threads", c.train.threads);
    c.train.weight_decay = j.value("weight_decay", c.train.weight_decay);
    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        c.train.arch.base_channels = a.value("base_channels", c.train.arch.base_channels);
        c.train.arch.num_stages = a.value("num_stages", c.train.arch.num_stages);
        c.train.arch.time_embed_dim = a.value("time_embed_dim", c.train.arch.time_embed_dim);
    }

    c.mask_seed = j.value("mask_seed", c.mask_seed);
    c.mask_scenes = j.value("mask_scenes", c.mask_scenes);
    c.eval_scenes = j.value("eval_scenes", c.eval_scenes);
    if (j.contains("eval_offsets")) {
        c.eval_offsets.clear();
        for (const auto& o : j.at("eval_offsets"))
            c.eval_offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>());
    }
    c.sample_steps = j.value("sample_steps", c.sample_steps);
    c.cfg_scale = j.value("cfg_scale", c.cfg_scale);
    c.ref_fraction_min = j.value("ref_fraction_min", c.ref_fraction_min);
    c.ref_fraction_max = j.value("ref_fraction_max", c.ref_fraction_max);
    if (j.contains("offset_bin_edges"))
        c.offset_bin_edges = j.at("offset_bin_edges").get<std::vector<double>>();
    if (j.contains("sparsity_bin_edges"))
        c.sparsity_bin_edges = j.at("sparsity_bin_edges").get<std::vector<double>>();
    return c;
}

std::string PipelineConfig::to_json() const {
    ordered_json j;
    j["resolution"] = resolution;
    j["train_scenes"] = train_scenes;
    j["cameras_per_scene"] = cameras_per_scene;
    j["scene_complexity"] = scene_complexity;
    j["t_train"] = train.t_train;
    j["beta_start"] = train.beta_start;
    j["beta_end"] = train.beta_end;
    j["p_drop"] = train.p_drop;
    j["p_inject"] = train.p_inject;
    j["lr"] = train.lr;
    j["steps"] = train.steps;
    j["seed"] = train.seed;
    j["batch_size"] = train.batch_size;
    j["threads"] = train.threads;
    j["weight_decay"] = train.weight_decay;
    j["arch"] = {{"base_channels", train.arch.base_channels},
                 {"num_stages", train.arch.num_stages},
                 {"time_embed_dim", train.arch.time_embed_dim}};
    j["mask_seed"] = mask_seed;
    j["mask_scenes"] = mask_scenes;
    j["eval_scenes"] = eval_scenes;
    ordered_json offs = ordered_json::array();
    for (const auto& [f, l] : eval_offsets) offs.push_back({f, l});
    j["eval_offsets"] = offs;
    j["sample_steps"] = sample_steps;
    j["cfg_scale"] = cfg_scale;
    j["ref_fraction_min"] = ref_fraction_min;
    j["ref_fraction_max"] = ref_fraction_max;
    j["offset_bin_edges"] = offset_bin_edges;
    j["sparsity_bin_edges"] = sparsity_bin_edges;
    return j.dump(2);
}

io::DatasetManifest build_dataset(const std::filesystem::path& out_dir, int num_scenes,
                                  int cameras_per_scene, int resolution, std::uint64_t seed,
                                  int scene_complexity, int scene_id_base) {
    if (num_scenes < 1 || cameras_per_scene < 1)
        throw std::invalid_argument("build_dataset: counts must be positive");
    std::filesystem::create_directories(out_dir);
    const CameraIntrinsics intr = square_intrinsics(resolution);

    io::DatasetManifest manifest;
    manifest.root = out_dir;
    for (int s = 0; s < num_scenes; ++s) {
        const int scene_id = scene_id_base + s;
        const std::uint64_t scene_seed = mix_seed(seed, mix_seed(kTagScene, scene_id));
        manifest.scenes.push_back({scene_id, scene_seed, scene_complexity});
        const Scene scene = generate_scene(scene_seed, scene_complexity);
        std::filesystem::create_directories(out_dir / ("scene" + [&] {
                                                char b[8];
                                                std::snprintf(b, sizeof(b), "%04d", scene_id);
                                                return std::string(b);
                                            }()));

        CameraPose mount_pose;
        for (int v = 0; v < cameras_per_scene; ++v) {
            if (v % 2 == 0)
                mount_pose = seeded_mount(mix_seed(scene_seed, mix_seed(kTagMount, v)));
            const CameraPose pose =
                (v % 2 == 0) ? mount_pose : yaw_about_up(mount_pose, kPairYawDegrees);

            const RenderedView view = render_scene(scene, intr, pose);
            const auto pair = make_training_pair(view, intr, pose, &view);

            const std::string stem = view_stem(scene_id, v);
            io::write_camera_file(out_dir / (stem + ".camera.json"), intr, pose);
            io::write_png_file(out_dir / (stem + ".png"), view.rgb);
            io::write_point_map_file(out_dir / (stem + ".gpm"), view_to_point_map(view));
            io::write_condition(out_dir / (stem + ".cond"), pair.condition);

            io::ManifestEntry e;
            e.scene_id = scene_id;
            e.view_id = v;
            e.camera = stem + ".camera.json";
            e.image = stem + ".png";
            e.pointmap = stem + ".gpm";
            e.condition_prefix = stem + ".cond";
            manifest.entries.push_back(std::move(e));
        }
    }
    io::write_manifest_file(out_dir / "manifest.json", manifest);
    return manifest;
}

std::vector<TrainingPair> load_training_pairs(const io::DatasetManifest& manifest) {
    std::vector<TrainingPair> pairs;
    for (const auto& e : manifest.entries) {
        if (e.condition_prefix.empty()) continue;
        TrainingPair tp;
        tp.condition = io::read_condition(manifest.resolve(e.condition_prefix));
        tp.target = io::read_png_file(manifest.resolve(e.image));
        tp.weight = 1.0;
        pairs.push_back(std::move(tp));
    }
    if (pairs.empty()) throw std::runtime_error("load_training_pairs: manifest has no condition pairs");
    return pairs;
}

MaskLibrary build_reprojection_library(const PipelineConfig& config, std::uint64_t seed,
                                       int num_scenes) {
    MaskLibraryConfig lib_cfg;
    lib_cfg.pair_yaw_degrees = kPairYawDegrees;
    // Reprojection-defect morphology in both lateral directions, graded from
    // mild to the protocol's strongest offsets so injected severities span
    // what extrapolated inference sees.
    lib_cfg.virtual_offsets = {{0.03, 0.5}, {0.03, -0.5}, {0.08, 1.0}, {0.08, -1.0},
                               {0.15, 0.5}, {0.15, -0.5}, {0.25, 1.0}, {0.25, -1.0},
                               {0.40, 1.0}, {0.40, -1.0}};

    // One rig per scene so band structure varies across the library.
    const CameraIntrinsics intr = square_intrinsics(config.resolution);
    MaskLibrary lib;
    lib.config = lib_cfg;
    for (int s = 0; s < num_scenes; ++s) {
        const std::uint64_t ms = mix_seed(seed, mix_seed(kTagMaskScene, s));
        const std::vector<Scene> scenes = {generate_scene(ms, config.scene_complexity)};
        std::vector<std::pair<CameraIntrinsics, CameraPose>> cameras;
        for (int c = 0; c < 2; ++c)
            cameras.emplace_back(intr, seeded_mount(mix_seed(ms, mix_seed(kTagMount, c))));
        MaskLibrary part = build_mask_library(scenes, cameras, lib_cfg, seed);
        for (auto& m : part.masks) {
            m.descriptor = "scene=" + std::to_string(s) + " " + m.descriptor;
            lib.masks.push_back(std::move(m));
        }
    }
    if (lib.masks.empty()) throw std::runtime_error("build_reprojection_library: no masks");
    return lib;
}

EvalReport run_extrapolation_eval(const io::DatasetManifest& manifest,
                                  const io::Checkpoint& checkpoint,
                                  const std::vector<std::pair<double, double>>& offsets,
                                  const PipelineConfig& config,
                                  const std::filesystem::path& out_dir) {
    if (offsets.empty()) throw std::invalid_argument("run_extrapolation_eval: no offsets");
    std::filesystem::create_directories(out_dir);
    const NoiseSchedule schedule = checkpoint.schedule();

    // Scene seeds let the oracle re-render ground truth at new poses.
    std::vector<EvalRecord> records;
    for (const auto& spec : manifest.scenes) {
        const Scene scene = generate_scene(spec.seed, spec.complexity);

        // Collect this scene's entries in view order; consecutive even/odd
        // views form a rig pair.
        std::vector<const io::ManifestEntry*> views;
        for (const auto& e : manifest.entries)
            if (e.scene_id == spec.id) views.push_back(&e);
        for (size_t v = 0; v + 1 < views.size(); v += 2) {
            const auto [intr, pose_a] = io::read_camera_file(manifest.resolve(views[v]->camera));
            const auto pose_b = io::read_camera_file(manifest.resolve(views[v + 1]->camera)).second;
            const Image img_a = io::read_png_file(manifest.resolve(views[v]->image));
            const PointMap pm_a = io::read_point_map_file(manifest.resolve(views[v]->pointmap));

            // Reference fraction, subsample seed, and sampling seed are keyed
            // by (scene, pair) only, so every offset level sees the same mix
            // of reference densities and initial noise; cross-bin differences
            // then come from the pose offset, not from reshuffled noise.
            const std::uint64_t pair_key =
                mix_seed(config.train.seed, spec.id * 1000 + static_cast<int>(v));
            Rng frac_rng(mix_seed(mix_seed(pair_key, kTagRef), kTagRefFrac));
            const double ref_fraction =
                frac_rng.uniform(config.ref_fraction_min, config.ref_fraction_max);

            for (size_t oi = 0; oi < offsets.size(); ++oi) {
                const auto& [frac, lateral] = offsets[oi];
                const CameraPose target = make_extrapolated_pose(pose_a, pose_b, frac, lateral);
                const ConditionMap cond =
                    condition_from_point_map(pm_a, img_a, intr, target);

                SampleOptions opts;
                opts.num_steps = config.sample_steps;
                opts.cfg_scale = config.cfg_scale;
                opts.seed = mix_seed(pair_key, kTagSample);
                const Image pred = sample(checkpoint.model, cond, schedule, opts);

                const RenderedView truth = render_scene(scene, intr, target);
                const SparseReference ref =
                    make_sparse_reference(truth, ref_fraction, mix_seed(pair_key, kTagRef));
                // SSIM needs window neighborhoods; at LiDAR-like subsampling
                // every window falls under the valid-weight cutoff, so the
                // record's SSIM runs on the full finite-depth support (the
                // dense limit of the same masked operator).
                const SparseReference ref_dense =
                    make_sparse_reference(truth, 1.0, mix_seed(pair_key, kTagRef));

                EvalRecord rec;
                rec.scene_id = spec.id;
                rec.view_id = static_cast<int>(v) * 100 + static_cast<int>(oi);
                rec.s_psnr = s_psnr(pred, ref);
                rec.s_ssim = s_ssim(pred, ref_dense);
                std::tie(rec.s_mae, rec.s_rmse) = s_mae_rmse(pred, ref);
                rec.valid_fraction =
                    static_cast<double>(ref.valid_count()) / static_cast<double>(ref.mask.data.size());
                rec.pose_offset = pose_offset_degrees(pose_a, target);
                rec.check_invariants();
                records.push_back(rec);

                char stem[64];
                std::snprintf(stem, sizeof(stem), "s%04d_v%03zu_o%02zu", spec.id, v, oi);
                io::write_png_file(out_dir / (std::string(stem) + ".pred.png"), pred);
                io::write_png_file(out_dir / (std::string(stem) + ".ref.png"), ref.reference);
                io::write_mask_png_file(out_dir / (std::string(stem) + ".mask.png"), ref.mask);
                std::ofstream meta(out_dir / (std::string(stem) + ".json"));
                ordered_json mj = {{"scene_id", rec.scene_id},
                                   {"view_id", rec.view_id},
                                   {"pose_offset", rec.pose_offset}};
                meta << mj.dump(2) << '\n';
            }
        }
    }

    const EvalReport report =
        bin_and_aggregate(records, config.offset_bin_edges, config.sparsity_bin_edges);
    io::write_report_file(out_dir / "report.json", report);
    return report;
}

namespace {

VariantResult summarize(const std::string& name, const TrainResult& tr, const EvalReport& eval) {
    VariantResult r;
    r.name = name;
    r.final_train_loss = tr.loss_history.empty() ? 0.0 : tr.loss_history.back();
    r.data_stream_audit = tr.data_stream_audit;
    r.train_stream_audit = tr.train_stream_audit;
    r.inject_stream_audit = tr.inject_stream_audit;
    r.eval = eval;
    double n = static_cast<double>(eval.records.size());
    for (const auto& rec : eval.records) {
        r.s_psnr += rec.s_psnr / n;
        r.s_ssim += rec.s_ssim / n;
        r.s_mae += rec.s_mae / n;
        r.s_rmse += rec.s_rmse / n;
    }
    return r;
}

ordered_json variant_to_json(const VariantResult& v) {
    char data_audit[32], train_audit[32], inject_audit[32];
    std::snprintf(data_audit, sizeof(data_audit), "%016llx",
                  static_cast<unsigned long long>(v.data_stream_audit));
    std::snprintf(train_audit, sizeof(train_audit), "%016llx",
                  static_cast<unsigned long long>(v.train_stream_audit));
    std::snprintf(inject_audit, sizeof(inject_audit), "%016llx",
                  static_cast<unsigned long long>(v.inject_stream_audit));
    return {{"s_psnr", v.s_psnr},
            {"s_ssim", v.s_ssim},
            {"s_mae", v.s_mae},
            {"s_rmse", v.s_rmse},
            {"final_train_loss", v.final_train_loss},
            {"data_stream_audit", data_audit},
            {"train_stream_audit", train_audit},
            {"inject_stream_audit", inject_audit}};
}

}  // namespace

AblationResult run_ablation(const io::DatasetManifest& manifest, const MaskLibrary& reproj_library,
                            const PipelineConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto pairs = load_training_pairs(manifest);
    reproj_library.require_resolution(pairs[0].condition.rgb.width, pairs[0].condition.rgb.height);

    // Random-box library for V2: same size as the reprojection library so the
    // contrast isolates mask morphology, not library capacity.
    MaskLibrary random_lib;
    random_lib.config.pair_yaw_degrees = 0.0;
    for (size_t i = 0; i < reproj_library.size(); ++i) {
        Rng drop_rng(mix_seed(config.train.seed, mix_seed(kTagRandomLib, 2 * i)));
        random_lib.masks.push_back(make_random_box_mask(
            config.resolution, config.resolution, drop_rng.uniform(0.1, 0.5),
            mix_seed(config.train.seed, mix_seed(kTagRandomLib, 2 * i + 1))));
    }

    // Held-out extrapolated split: disjoint seed tag, disjoint ids.
    const io::DatasetManifest eval_manifest = build_dataset(
        out_dir / "eval_data", config.eval_scenes, 2, config.resolution,
        mix_seed(config.train.seed, kTagEvalScene), config.scene_complexity,
        /*scene_id_base=*/100000);

    AblationResult result;
    struct VariantSpec {
        const char* name;
        const MaskLibrary* lib;
        double p_inject;
        VariantResult* out;
    };
    const VariantSpec variants[] = {
        {"V1", nullptr, 0.0, &result.v1},
        {"V2", &random_lib, config.train.p_inject, &result.v2},
        {"V3", &reproj_library, config.train.p_inject, &result.v3},
    };

    for (const auto& vs : variants) {
        TrainConfig tc = config.train;
        tc.p_inject = vs.p_inject;
        const TrainResult tr = train_model(pairs, vs.lib, tc);
        io::Checkpoint ckpt{tr.model, tc.t_train, tc.beta_start, tc.beta_end};
        io::write_checkpoint_file(out_dir / (std::string(vs.name) + ".gevs"), ckpt);
        const EvalReport eval = run_extrapolation_eval(
            eval_manifest, ckpt, config.eval_offsets, config,
            out_dir / (std::string("eval_") + vs.name));
        *vs.out = summarize(vs.name, tr, eval);
    }

    ordered_json j;
    j["schema_version"] = 1;
    j["variants"] = {{"V1", variant_to_json(result.v1)},
                     {"V2", variant_to_json(result.v2)},
                     {"V3", variant_to_json(result.v3)}};
    std::ofstream os(out_dir / "ablation_report.json");
    os << j.dump(2) << '\n';
    return result;
}

void write_run_info(const std::filesystem::path& path, const PipelineConfig& config,
                    const std::string& command) {
    static std::string git_describe = [] {
        std::string out = "unknown";
        if (FILE* p = ::popen("git describe --always --dirty 2>/dev/null", "r")) {
            char buf[128];
            if (std::fgets(buf, sizeof(buf), p) != nullptr) {
                out = buf;
                while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
            }
            ::pclose(p);
            if (out.empty()) out = "unknown";
        }
        return out;
    }();

    ordered_json j;
    j["command"] = command;
    j["config"] = ordered_json::parse(config.to_json());
    j["git_describe"] = git_describe;
    j["format_versions"] = {{"pointmap", "GPM1"}, {"depth", "GDM1"},
                            {"checkpoint", "GEVS"}, {"manifest", 1}, {"report", 1}};
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

}  // namespace gevs::pipeline
