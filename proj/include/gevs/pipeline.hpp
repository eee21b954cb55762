// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gevs/artifact.hpp"
#include "gevs/diffusion.hpp"
#include "gevs/io.hpp"
#include "gevs/lpsr.hpp"

namespace gevs::pipeline {

// One experiment configuration; serialized as flat JSON so runs are
// reproducible from the config file plus the seed alone.
struct PipelineConfig {
    int resolution = 64;  // square views
    int train_scenes = 40;
    int cameras_per_scene = 2;
    int scene_complexity = 5;

    TrainConfig train;  // t_train, betas, p_drop, p_inject, lr, steps, seed, batch, threads, arch

    std::uint64_t mask_seed = 424242;  // reprojection library generation seed
    int mask_scenes = 12;

    int eval_scenes = 15;
    // (angle_fraction, lateral_offset m) between the rig pair; mirrors the
    // front / front-side construction with lateral shifts both ways.
    std::vector<std::pair<double, double>> eval_offsets = {
        {0.06, 1.0}, {0.06, -1.0}, {0.17, 1.0}, {0.17, -1.0}, {0.28, 1.0},
        {0.28, -1.0}, {0.39, 1.0}, {0.39, -1.0}, {0.55, 1.0}, {0.55, -1.0}};
    int sample_steps = 30;
    double cfg_scale = 1.5;
    double ref_fraction_min = 0.01;
    double ref_fraction_max = 0.10;

    std::vector<double> offset_bin_edges = {0, 5, 10, 15, 20, 30};
    std::vector<double> sparsity_bin_edges = {0, 0.02, 0.05, 0.10};

    static PipelineConfig from_json_file(const std::filesystem::path& path);
    std::string to_json() const;
};

// Seeded dataset of observed views with u=v condition/supervision pairs,
// written through io. Views come in rig pairs: even view indices are fresh
// seeded mounts, odd ones are the same center yawed 45 degrees.
io::DatasetManifest build_dataset(const std::filesystem::path& out_dir, int num_scenes,
                                  int cameras_per_scene, int resolution, std::uint64_t seed,
                                  int scene_complexity = 5, int scene_id_base = 0);

// Loads every manifest entry that has a condition prefix as a TrainingPair.
std::vector<TrainingPair> load_training_pairs(const io::DatasetManifest& manifest);

// Builds the default reprojection mask library for a config (seeded scenes
// disjoint from both train and eval splits).
MaskLibrary build_reprojection_library(const PipelineConfig& config, std::uint64_t seed,
                                       int num_scenes = 12);

// Extrapolated evaluation of one checkpoint against simulated sparse
// references; writes per-view pred/ref/mask files plus report.json under
// out_dir and returns the binned report.
EvalReport run_extrapolation_eval(const io::DatasetManifest& manifest,
                                  const io::Checkpoint& checkpoint,
                                  const std::vector<std::pair<double, double>>& offsets,
                                  const PipelineConfig& config,
                                  const std::filesystem::path& out_dir);

struct VariantResult {
    std::string name;
    double s_psnr = 0, s_ssim = 0, s_mae = 0, s_rmse = 0;  // means over all eval records
    double final_train_loss = 0;
    std::uint64_t data_stream_audit = 0;
    std::uint64_t train_stream_audit = 0;
    std::uint64_t inject_stream_audit = 0;
    EvalReport eval;
};

struct AblationResult {
    VariantResult v1, v2, v3;  // no artifacts / random boxes / reprojection masks
};

// Trains the three ablation variants (identical configs and rng streams
// except the injection draws), evaluates each on a held-out extrapolated
// split, and writes checkpoints + ablation_report.json under out_dir.
AblationResult run_ablation(const io::DatasetManifest& manifest, const MaskLibrary& reproj_library,
                            const PipelineConfig& config, const std::filesystem::path& out_dir);

// run.json: config, seed, git describe, and format versions. Deliberately
// timestamp-free so reruns are byte-identical.
void write_run_info(const std::filesystem::path& path, const PipelineConfig& config,
                    const std::string& command);

}  // namespace gevs::pipeline
