// SPDX-License-Identifier: Apache-2.0
//
// gevs command line: geometry-aware reprojection, artifact mask tooling,
// toy diffusion training/sampling, sparse-reference metrics, and the
// end-to-end pipeline drivers.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "gevs/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gevs;

namespace {

std::vector<std::pair<double, double>> parse_offsets(const std::string& spec) {
    // "frac:lateral,frac:lateral,..."
    std::vector<std::pair<double, double>> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw CLI::ValidationError("--offsets", "expected frac:lateral pairs, got '" + item + "'");
        out.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    }
    if (out.empty()) throw CLI::ValidationError("--offsets", "empty offset list");
    return out;
}

std::vector<double> parse_edges(const std::string& spec) {
    std::vector<double> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

int cmd_reproject(const std::string& camera, const std::string& pointmap, const std::string& image,
                  const std::string& target_camera, const std::string& out) {
    const auto [src_intr, src_pose] = io::read_camera_file(camera);
    (void)src_intr;
    (void)src_pose;  // source camera is validated; the point map is already world-frame
    const auto [tgt_intr, tgt_pose] = io::read_camera_file(target_camera);
    const PointMap pm = io::read_point_map_file(pointmap);
    const Image img = io::read_png_file(image);
    const ConditionMap cond = condition_from_point_map(pm, img, tgt_intr, tgt_pose);
    io::write_condition(out, cond);
    std::cout << "wrote " << out << ".png (+ validity, depth); valid pixels: "
              << cond.validity.count_valid() << "/" << cond.validity.data.size() << "\n";
    return 0;
}

int cmd_gen_masks(int scenes, const std::string& offsets, int resolution, int complexity,
                  std::uint64_t seed, const std::string& out) {
    pipeline::PipelineConfig cfg;
    cfg.resolution = resolution;
    cfg.scene_complexity = complexity;
    MaskLibrary lib;
    if (offsets.empty()) {
        lib = pipeline::build_reprojection_library(cfg, seed, scenes);
    } else {
        std::vector<Scene> scene_list;
        std::vector<std::pair<CameraIntrinsics, CameraPose>> cameras;
        const CameraIntrinsics intr(resolution * 1.1, resolution * 1.1, (resolution - 1) / 2.0,
                                    (resolution - 1) / 2.0, resolution, resolution);
        for (int s = 0; s < scenes; ++s) {
            const std::uint64_t ms = mix_seed(seed, mix_seed(0x04, s));
            scene_list.push_back(generate_scene(ms, complexity));
            if (s == 0)
                for (int c = 0; c < 2; ++c) {
                    Rng rng(mix_seed(ms, mix_seed(0x02, c)));
                    const double az = rng.uniform(0.0, 2.0 * kPi);
                    const double r = rng.uniform(7.0, 10.0);
                    const Vec3 eye{r * std::cos(az), r * std::sin(az), rng.uniform(1.3, 2.2)};
                    cameras.emplace_back(intr, look_at_pose(eye, {rng.uniform(-1.5, 1.5),
                                                                  rng.uniform(-1.5, 1.5), 1.0}));
                }
        }
        MaskLibraryConfig lc;
        lc.virtual_offsets = parse_offsets(offsets);
        lib = build_mask_library(scene_list, cameras, lc, seed);
    }
    io::write_mask_library(out, lib);
    std::cout << "wrote " << lib.size() << " masks to " << out << "\n";
    return 0;
}

int cmd_inject(const std::string& cond_prefix, const std::string& lib_dir, double p,
               std::uint64_t seed, const std::string& out_prefix) {
    const ConditionMap cond = io::read_condition(cond_prefix);
    const MaskLibrary lib = io::read_mask_library(lib_dir);
    Rng rng(seed);
    const auto result = inject_artifact(cond, lib, p, rng);
    io::write_condition(out_prefix, result.condition);
    if (result.applied_mask)
        std::cout << "applied mask index " << *result.applied_mask << "\n";
    else
        std::cout << "gate drew 0; condition unchanged\n";
    return 0;
}

TrainConfig train_config_from_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    const auto j = nlohmann::json::parse(is);
    TrainConfig tc;
    tc.t_train = j.value("t_train", tc.t_train);
    tc.beta_start = j.value("beta_start", tc.beta_start);
    tc.beta_end = j.value("beta_end", tc.beta_end);
    tc.p_drop = j.value("p_drop", tc.p_drop);
    tc.p_inject = j.value("p_inject", tc.p_inject);
    tc.lr = j.value("lr", tc.lr);
    tc.steps = j.value("steps", tc.steps);
    tc.seed = j.value("seed", tc.seed);
    tc.batch_size = j.value("batch_size", tc.batch_size);
    tc.threads = j.value("threads", tc.threads);
    tc.weight_decay = j.value("weight_decay", tc.weight_decay);
    if (j.contains("arch")) {
        tc.arch.base_channels = j["arch"].value("base_channels", tc.arch.base_channels);
        tc.arch.num_stages = j["arch"].value("num_stages", tc.arch.num_stages);
        tc.arch.time_embed_dim = j["arch"].value("time_embed_dim", tc.arch.time_embed_dim);
    }
    return tc;
}

int cmd_train(const std::string& pairs_dir, const std::string& masks_dir,
              const std::string& config, const std::string& out) {
    const auto manifest = io::read_manifest_file(fs::path(pairs_dir) / "manifest.json");
    const auto pairs = pipeline::load_training_pairs(manifest);
    const TrainConfig tc = train_config_from_json(config);
    MaskLibrary lib;
    const MaskLibrary* lib_ptr = nullptr;
    if (!masks_dir.empty()) {
        lib = io::read_mask_library(masks_dir);
        lib_ptr = &lib;
    }
    std::cout << "training on " << pairs.size() << " pairs, " << tc.steps << " steps";
    if (lib_ptr) std::cout << ", injecting from " << lib.size() << " masks at p=" << tc.p_inject;
    std::cout << std::endl;
    const TrainResult tr = train_model(pairs, lib_ptr, tc);
    io::write_checkpoint_file(out, io::Checkpoint{tr.model, tc.t_train, tc.beta_start, tc.beta_end});
    std::cout << "final loss " << tr.loss_history.back() << "; wrote " << out << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& cond_prefix, int steps,
               double cfg_scale, std::uint64_t seed, bool stochastic, const std::string& out) {
    const io::Checkpoint ckpt = io::read_checkpoint_file(ckpt_path);
    const ConditionMap cond = io::read_condition(cond_prefix);
    SampleOptions opts;
    opts.num_steps = steps;
    opts.cfg_scale = cfg_scale;
    opts.seed = seed;
    opts.stochastic = stochastic;
    const Image img = sample(ckpt.model, cond, ckpt.schedule(), opts);
    io::write_png_file(out, img);
    nlohmann::ordered_json meta = {{"steps", steps},       {"cfg", cfg_scale},
                                   {"seed", seed},         {"stochastic", stochastic},
                                   {"checkpoint", ckpt_path}, {"condition", cond_prefix}};
    std::ofstream ms(out + ".meta.json");
    ms << meta.dump(2) << '\n';
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_metrics(const std::string& pred_dir, const std::string& ref_dir, const std::string& mask_dir,
                const std::string& bins_offset, const std::string& bins_sparsity,
                const std::string& out) {
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
        if (entry.path().extension() != ".png") continue;
        stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw std::runtime_error("metrics: no .png predictions in " + pred_dir);

    std::vector<EvalRecord> records;
    for (const auto& stem : stems) {
        const Image pred = io::read_png_file(fs::path(pred_dir) / (stem + ".png"));
        SparseReference ref;
        ref.reference = io::read_png_file(fs::path(ref_dir) / (stem + ".png"));
        ref.mask = io::read_mask_png_file(fs::path(mask_dir) / (stem + ".png"));

        EvalRecord rec;
        const fs::path sidecar = fs::path(pred_dir) / (stem + ".json");
        if (fs::exists(sidecar)) {
            std::ifstream ms(sidecar);
            const auto j = nlohmann::json::parse(ms);
            rec.scene_id = j.value("scene_id", 0);
            rec.view_id = j.value("view_id", 0);
            rec.pose_offset = j.value("pose_offset", 0.0);
        }
        rec.s_psnr = s_psnr(pred, ref);
        rec.s_ssim = s_ssim(pred, ref);
        std::tie(rec.s_mae, rec.s_rmse) = s_mae_rmse(pred, ref);
        rec.valid_fraction =
            static_cast<double>(ref.valid_count()) / static_cast<double>(ref.mask.data.size());
        records.push_back(rec);
    }
    const EvalReport report =
        bin_and_aggregate(records, parse_edges(bins_offset), parse_edges(bins_sparsity));
    io::write_report_file(out, report);
    std::cout << "wrote " << out << " (" << records.size() << " views)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Geometry-conditioned extrapolative view synthesis, desk scale"};
    app.require_subcommand(1);

    // reproject
    std::string camera, pointmap, image, target_camera, out_prefix;
    auto* reproject = app.add_subcommand("reproject", "Rasterize a point map to a target camera");
    reproject->add_option("--camera", camera, "source camera JSON")->required();
    reproject->add_option("--pointmap", pointmap, "GPM1 point map")->required();
    reproject->add_option("--image", image, "source RGB PNG")->required();
    reproject->add_option("--target-camera", target_camera, "target camera JSON")->required();
    reproject->add_option("--out", out_prefix, "output condition prefix")->required();

    // gen-masks
    int gm_scenes = 12, gm_resolution = 64, gm_complexity = 5;
    std::uint64_t gm_seed = 1;
    std::string gm_offsets, gm_out;
    auto* gen_masks = app.add_subcommand("gen-masks", "Build a reprojection artifact mask library");
    gen_masks->add_option("--scenes", gm_scenes, "number of seeded scenes");
    gen_masks->add_option("--offsets", gm_offsets, "frac:lateral pairs, comma separated");
    gen_masks->add_option("--resolution", gm_resolution, "mask resolution");
    gen_masks->add_option("--complexity", gm_complexity, "scene complexity");
    gen_masks->add_option("--seed", gm_seed, "seed");
    gen_masks->add_option("--out", gm_out, "output directory")->required();

    // inject
    std::string in_cond, in_lib, in_out;
    double in_p = 0.4;
    std::uint64_t in_seed = 1;
    auto* inject = app.add_subcommand("inject", "Apply the two-stage artifact injection once");
    inject->add_option("--cond", in_cond, "condition prefix")->required();
    inject->add_option("--lib", in_lib, "mask library directory")->required();
    inject->add_option("--p", in_p, "Bernoulli gate probability");
    inject->add_option("--seed", in_seed, "seed");
    inject->add_option("--out", in_out, "output condition prefix")->required();

    // train
    std::string tr_pairs, tr_masks, tr_config, tr_out;
    auto* train = app.add_subcommand("train", "Train the toy conditional denoiser");
    train->add_option("--pairs", tr_pairs, "dataset directory (with manifest.json)")->required();
    train->add_option("--masks", tr_masks, "mask library directory (omit for no injection)");
    train->add_option("--config", tr_config, "training config JSON")->required();
    train->add_option("--out", tr_out, "output checkpoint")->required();

    // sample
    std::string sa_ckpt, sa_cond, sa_out;
    int sa_steps = 30;
    double sa_cfg = 1.5;
    std::uint64_t sa_seed = 0;
    bool sa_stochastic = false;
    auto* sample_cmd = app.add_subcommand("sample", "Sample an image from a condition map");
    sample_cmd->add_option("--ckpt", sa_ckpt, "GEVS checkpoint")->required();
    sample_cmd->add_option("--cond", sa_cond, "condition prefix")->required();
    sample_cmd->add_option("--steps", sa_steps, "denoising steps");
    sample_cmd->add_option("--cfg", sa_cfg, "guidance scale");
    sample_cmd->add_option("--seed", sa_seed, "seed");
    sample_cmd->add_flag("--stochastic", sa_stochastic, "ancestral sampling instead of deterministic");
    sample_cmd->add_option("--out", sa_out, "output PNG")->required();

    // metrics
    std::string me_pred, me_ref, me_mask, me_out;
    std::string me_bins_offset = "0,5,10,15,20,30";
    std::string me_bins_sparsity = "0,0.02,0.05,0.1";
    auto* metrics = app.add_subcommand("metrics", "Sparse-reference metrics over directories");
    metrics->add_option("--pred", me_pred, "prediction PNG directory")->required();
    metrics->add_option("--ref", me_ref, "reference PNG directory")->required();
    metrics->add_option("--mask", me_mask, "mask PNG directory")->required();
    metrics->add_option("--bins-offset", me_bins_offset, "offset bin edges (degrees)");
    metrics->add_option("--bins-sparsity", me_bins_sparsity, "sparsity bin edges");
    metrics->add_option("--out", me_out, "report JSON path")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "End-to-end experiment drivers");
    pipe->require_subcommand(1);

    int bd_scenes = 4, bd_cameras = 2, bd_resolution = 64, bd_complexity = 5;
    std::uint64_t bd_seed = 1;
    std::string bd_out;
    auto* build_ds = pipe->add_subcommand("build-dataset", "Seeded u=v condition/supervision dataset");
    build_ds->add_option("--scenes", bd_scenes, "number of scenes");
    build_ds->add_option("--cameras", bd_cameras, "views per scene (rig pairs)");
    build_ds->add_option("--resolution", bd_resolution, "image resolution");
    build_ds->add_option("--complexity", bd_complexity, "scene complexity");
    build_ds->add_option("--seed", bd_seed, "seed");
    build_ds->add_option("--out", bd_out, "output directory")->required();

    std::string ab_data, ab_masks, ab_config, ab_out;
    auto* ablation = pipe->add_subcommand("ablation", "Train and evaluate V1/V2/V3");
    ablation->add_option("--data", ab_data, "training dataset directory")->required();
    ablation->add_option("--masks", ab_masks, "reprojection mask library directory")->required();
    ablation->add_option("--config", ab_config, "pipeline config JSON")->required();
    ablation->add_option("--out", ab_out, "output directory")->required();

    std::string ee_data, ee_ckpt, ee_config, ee_offsets, ee_out;
    auto* eval_extrap = pipe->add_subcommand("eval-extrap", "Extrapolated-pose evaluation");
    eval_extrap->add_option("--data", ee_data, "dataset directory")->required();
    eval_extrap->add_option("--ckpt", ee_ckpt, "GEVS checkpoint")->required();
    eval_extrap->add_option("--config", ee_config, "pipeline config JSON")->required();
    eval_extrap->add_option("--offsets", ee_offsets, "frac:lateral overrides");
    eval_extrap->add_option("--out", ee_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (reproject->parsed())
            return cmd_reproject(camera, pointmap, image, target_camera, out_prefix);
        if (gen_masks->parsed())
            return cmd_gen_masks(gm_scenes, gm_offsets, gm_resolution, gm_complexity, gm_seed, gm_out);
        if (inject->parsed()) return cmd_inject(in_cond, in_lib, in_p, in_seed, in_out);
        if (train->parsed()) return cmd_train(tr_pairs, tr_masks, tr_config, tr_out);
        if (sample_cmd->parsed())
            return cmd_sample(sa_ckpt, sa_cond, sa_steps, sa_cfg, sa_seed, sa_stochastic, sa_out);
        if (metrics->parsed())
            return cmd_metrics(me_pred, me_ref, me_mask, me_bins_offset, me_bins_sparsity, me_out);
        if (pipe->parsed()) {
            if (build_ds->parsed()) {
                pipeline::build_dataset(bd_out, bd_scenes, bd_cameras, bd_resolution, bd_seed,
                                        bd_complexity);
                pipeline::PipelineConfig pc;
                pc.resolution = bd_resolution;
                pc.train_scenes = bd_scenes;
                pc.cameras_per_scene = bd_cameras;
                pc.scene_complexity = bd_complexity;
                pc.train.seed = bd_seed;
                pipeline::write_run_info(fs::path(bd_out) / "run.json", pc, "pipeline build-dataset");
                std::cout << "wrote dataset to " << bd_out << "\n";
                return 0;
            }
            if (ablation->parsed()) {
                const auto cfg = pipeline::PipelineConfig::from_json_file(ab_config);
                const auto manifest = io::read_manifest_file(fs::path(ab_data) / "manifest.json");
                const auto lib = io::read_mask_library(ab_masks);
                const auto result = pipeline::run_ablation(manifest, lib, cfg, ab_out);
                pipeline::write_run_info(fs::path(ab_out) / "run.json", cfg, "pipeline ablation");
                std::cout << "S-PSNR  V1 " << result.v1.s_psnr << "  V2 " << result.v2.s_psnr
                          << "  V3 " << result.v3.s_psnr << "\n";
                return 0;
            }
            if (eval_extrap->parsed()) {
                const auto cfg = pipeline::PipelineConfig::from_json_file(ee_config);
                const auto manifest = io::read_manifest_file(fs::path(ee_data) / "manifest.json");
                const auto ckpt = io::read_checkpoint_file(ee_ckpt);
                const auto offsets = ee_offsets.empty() ? cfg.eval_offsets : parse_offsets(ee_offsets);
                const auto report =
                    pipeline::run_extrapolation_eval(manifest, ckpt, offsets, cfg, ee_out);
                pipeline::write_run_info(fs::path(ee_out) / "run.json", cfg, "pipeline eval-extrap");
                std::cout << "evaluated " << report.records.size() << " views; report in " << ee_out
                          << "/report.json\n";
                return 0;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
