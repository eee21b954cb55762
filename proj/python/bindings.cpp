// SPDX-License-Identifier: Apache-2.0
//
// pybind11 surface for the gevs core: geometry, the scene oracle,
// reprojection, artifact masks, the toy conditional diffusion stack, and
// the sparse-reference metrics. Images cross the boundary as numpy arrays
// (HxWx3 float64 in [0,1], masks HxW uint8, depth HxW float64).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "gevs/io.hpp"
#include "gevs/pipeline.hpp"

namespace py = pybind11;
using namespace gevs;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw py::value_error("expected an (H, W, 3) float array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(double));
    return img;
}

py::array_t<double> image_to_array(const Image& img) {
    py::array_t<double> a({img.height, img.width, 3});
    std::memcpy(a.mutable_data(), img.data.data(), img.data.size() * sizeof(double));
    return a;
}

Mask mask_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("expected an (H, W) uint8 array");
    Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(m.data.data(), a.data(), m.data.size());
    return m;
}

py::array_t<std::uint8_t> mask_to_array(const Mask& m) {
    py::array_t<std::uint8_t> a({m.height, m.width});
    std::memcpy(a.mutable_data(), m.data.data(), m.data.size());
    return a;
}

py::array_t<double> depth_to_array(const DepthMap& d) {
    py::array_t<double> a({d.height, d.width});
    std::memcpy(a.mutable_data(), d.data.data(), d.data.size() * sizeof(double));
    return a;
}

Mat3 mat3_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 3)
        throw py::value_error("expected a (3, 3) array");
    Mat3 m;
    std::memcpy(m.m, a.data(), 9 * sizeof(double));
    return m;
}

py::array_t<double> mat3_to_array(const Mat3& m) {
    py::array_t<double> a({3, 3});
    std::memcpy(a.mutable_data(), m.m, 9 * sizeof(double));
    return a;
}

Vec3 vec3_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.size() != 3) throw py::value_error("expected a length-3 array");
    return {a.data()[0], a.data()[1], a.data()[2]};
}

py::array_t<double> vec3_to_array(const Vec3& v) {
    py::array_t<double> a(3);
    a.mutable_data()[0] = v.x;
    a.mutable_data()[1] = v.y;
    a.mutable_data()[2] = v.z;
    return a;
}

ColoredPointCloud cloud_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& positions,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& colors) {
    if (positions.ndim() != 2 || positions.shape(1) != 3 || colors.ndim() != 2 ||
        colors.shape(1) != 3 || positions.shape(0) != colors.shape(0))
        throw py::value_error("expected matching (N, 3) position and color arrays");
    ColoredPointCloud cloud;
    const auto n = static_cast<size_t>(positions.shape(0));
    cloud.positions.resize(n);
    cloud.colors.resize(n);
    for (size_t i = 0; i < n; ++i) {
        cloud.positions[i] = {positions.at(i, 0), positions.at(i, 1), positions.at(i, 2)};
        cloud.colors[i] = {colors.at(i, 0), colors.at(i, 1), colors.at(i, 2)};
    }
    cloud.validate();
    return cloud;
}

py::array_t<double> latent_to_array(const LatentImage& z) {
    py::array_t<double> a({z.channels, z.height, z.width});
    std::memcpy(a.mutable_data(), z.data.data(), z.data.size() * sizeof(double));
    return a;
}

LatentImage latent_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw py::value_error("expected a (C, H, W) array");
    LatentImage z(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                  static_cast<int>(a.shape(2)));
    std::memcpy(z.data.data(), a.data(), z.data.size() * sizeof(double));
    return z;
}

py::dict record_to_dict(const EvalRecord& r) {
    py::dict d;
    d["scene_id"] = r.scene_id;
    d["view_id"] = r.view_id;
    d["s_psnr"] = r.s_psnr;
    d["s_ssim"] = r.s_ssim;
    d["s_mae"] = r.s_mae;
    d["s_rmse"] = r.s_rmse;
    d["valid_fraction"] = r.valid_fraction;
    d["pose_offset"] = r.pose_offset;
    return d;
}

py::dict aggregate_to_dict(const BinAggregate& b) {
    py::dict d;
    d["lo"] = b.lo;
    d["hi"] = b.hi;
    d["count"] = b.count;
    d["s_psnr"] = b.s_psnr;
    d["s_ssim"] = b.s_ssim;
    d["s_mae"] = b.s_mae;
    d["s_rmse"] = b.s_rmse;
    d["valid_fraction"] = b.valid_fraction;
    return d;
}

}  // namespace

PYBIND11_MODULE(_gevs, m) {
    m.doc() = "Geometry-conditioned extrapolative view synthesis, desk scale";
    m.attr("__version__") = "0.1.0";

    py::register_exception<io::FormatError>(m, "FormatError", PyExc_ValueError);

    // ---- geometry ----------------------------------------------------------
    py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
        .def(py::init<double, double, double, double, int, int>(), py::arg("fx"), py::arg("fy"),
             py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
        .def_readonly("fx", &CameraIntrinsics::fx)
        .def_readonly("fy", &CameraIntrinsics::fy)
        .def_readonly("cx", &CameraIntrinsics::cx)
        .def_readonly("cy", &CameraIntrinsics::cy)
        .def_readonly("width", &CameraIntrinsics::width)
        .def_readonly("height", &CameraIntrinsics::height)
        .def("__repr__", [](const CameraIntrinsics& k) {
            return "CameraIntrinsics(fx=" + std::to_string(k.fx) + ", fy=" + std::to_string(k.fy) +
                   ", " + std::to_string(k.width) + "x" + std::to_string(k.height) + ")";
        });

    py::class_<CameraPose>(m, "CameraPose")
        .def(py::init([](const py::array_t<double>& rotation, const py::array_t<double>& translation) {
                 return CameraPose(mat3_from_array(rotation), vec3_from_array(translation));
             }),
             py::arg("rotation"), py::arg("translation"),
             "World-to-camera rigid transform; rotation must be orthonormal with det +1.")
        .def_static(
            "from_camera_to_world",
            [](const py::array_t<double>& r_c2w, const py::array_t<double>& center) {
                return CameraPose::from_camera_to_world(mat3_from_array(r_c2w),
                                                        vec3_from_array(center));
            },
            py::arg("rotation"), py::arg("center"))
        .def_property_readonly("rotation", [](const CameraPose& p) { return mat3_to_array(p.rotation()); })
        .def_property_readonly("translation",
                               [](const CameraPose& p) { return vec3_to_array(p.translation()); })
        .def("camera_center", [](const CameraPose& p) { return vec3_to_array(p.camera_center()); })
        .def("right_axis_world",
             [](const CameraPose& p) { return vec3_to_array(p.right_axis_world()); })
        .def("forward_axis_world",
             [](const CameraPose& p) { return vec3_to_array(p.forward_axis_world()); });

    m.def(
        "look_at_pose",
        [](const py::array_t<double>& eye, const py::array_t<double>& target) {
            return look_at_pose(vec3_from_array(eye), vec3_from_array(target));
        },
        py::arg("eye"), py::arg("target"));
    m.def(
        "yaw_about_up",
        [](const CameraPose& pose, double degrees) { return yaw_about_up(pose, degrees); },
        py::arg("pose"), py::arg("degrees"));
    m.def("make_extrapolated_pose", &make_extrapolated_pose, py::arg("pose_a"), py::arg("pose_b"),
          py::arg("angle_fraction"), py::arg("lateral_offset"),
          "Slerp rotation / lerp center between two poses, then shift the center along the "
          "interpolated camera's right axis.");
    m.def("pose_offset_degrees", &pose_offset_degrees, py::arg("pose_a"), py::arg("pose_b"));

    m.def(
        "project_points",
        [](const py::array_t<double>& positions, const py::array_t<double>& colors,
           const CameraIntrinsics& intr, const CameraPose& pose) {
            const auto pts = project_points(cloud_from_arrays(positions, colors), intr, pose);
            py::array_t<double> pixels({static_cast<py::ssize_t>(pts.size()), py::ssize_t(2)});
            py::array_t<double> depth(static_cast<py::ssize_t>(pts.size()));
            for (size_t i = 0; i < pts.size(); ++i) {
                pixels.mutable_at(i, 0) = pts[i].pixel_x;
                pixels.mutable_at(i, 1) = pts[i].pixel_y;
                depth.mutable_at(i) = pts[i].depth;
            }
            return py::make_tuple(pixels, depth);
        },
        py::arg("positions"), py::arg("colors"), py::arg("intrinsics"), py::arg("pose"),
        "Perspective projection of every point, in order; returns (pixels (N,2), depth (N,)).");

    m.def(
        "validity_test",
        [](double pixel_x, double pixel_y, double depth, const CameraIntrinsics& intr,
           std::optional<double> winner_depth) {
            ProjectedPoint pt;
            pt.pixel_x = pixel_x;
            pt.pixel_y = pixel_y;
            pt.depth = depth;
            return validity_test(pt, intr, winner_depth);
        },
        py::arg("pixel_x"), py::arg("pixel_y"), py::arg("depth"), py::arg("intrinsics"),
        py::arg("winner_depth") = std::nullopt,
        "The shared validity operator: depth-positive, in-frame, z-buffer front-most.");

    // ---- scene oracle ------------------------------------------------------
    py::class_<Scene>(m, "Scene")
        .def_property_readonly("num_primitives",
                               [](const Scene& s) { return s.primitives.size(); })
        .def_property_readonly("background_color",
                               [](const Scene& s) { return vec3_to_array(s.background_color); });

    py::class_<RenderedView>(m, "RenderedView")
        .def_property_readonly("rgb", [](const RenderedView& v) { return image_to_array(v.rgb); })
        .def_property_readonly("depth", [](const RenderedView& v) { return depth_to_array(v.depth); })
        .def_readonly("intrinsics", &RenderedView::intrinsics)
        .def_readonly("pose", &RenderedView::pose);

    py::class_<PointMap>(m, "PointMap")
        .def_property_readonly("positions",
                               [](const PointMap& pm) {
                                   py::array_t<double> a({pm.height, pm.width, 3});
                                   for (int y = 0; y < pm.height; ++y)
                                       for (int x = 0; x < pm.width; ++x) {
                                           const Vec3& p = pm.positions[pm.index(x, y)];
                                           a.mutable_at(y, x, 0) = p.x;
                                           a.mutable_at(y, x, 1) = p.y;
                                           a.mutable_at(y, x, 2) = p.z;
                                       }
                                   return a;
                               })
        .def_property_readonly("validity", [](const PointMap& pm) {
            py::array_t<std::uint8_t> a({pm.height, pm.width});
            std::memcpy(a.mutable_data(), pm.validity.data(), pm.validity.size());
            return a;
        });

    m.def("generate_scene", &generate_scene, py::arg("seed"), py::arg("complexity"),
          "Deterministic procedural scene: one ground plane plus `complexity` primitives.");
    m.def("render_scene", &render_scene, py::arg("scene"), py::arg("intrinsics"), py::arg("pose"),
          "Exact per-pixel ray cast; flat albedo shading, camera-frame z depth (+inf on miss).");
    m.def("view_to_point_map", &view_to_point_map, py::arg("view"));

    // ---- gar ----------------------------------------------------------------
    py::class_<ConditionMap>(m, "ConditionMap")
        .def_property_readonly("rgb", [](const ConditionMap& c) { return image_to_array(c.rgb); })
        .def_property_readonly("validity",
                               [](const ConditionMap& c) { return mask_to_array(c.validity); })
        .def_property_readonly("depth", [](const ConditionMap& c) { return depth_to_array(c.depth); })
        .def("valid_fraction", [](const ConditionMap& c) {
            return static_cast<double>(c.validity.count_valid()) /
                   static_cast<double>(c.validity.data.size());
        });

    m.def(
        "rasterize",
        [](const py::array_t<double>& positions, const py::array_t<double>& colors,
           const CameraIntrinsics& intr, const CameraPose& pose, int num_threads) {
            return rasterize(cloud_from_arrays(positions, colors), intr, pose, num_threads);
        },
        py::arg("positions"), py::arg("colors"), py::arg("intrinsics"), py::arg("pose"),
        py::arg("num_threads") = 1,
        "Z-buffer rasterization: minimum depth wins, exact ties to the smallest index, "
        "losing points discarded, unsupported pixels zero-filled.");
    m.def(
        "condition_from_point_map",
        [](const PointMap& pm, const py::array_t<double>& image, const CameraIntrinsics& intr,
           const CameraPose& pose, int num_threads) {
            return condition_from_point_map(pm, image_from_array(image), intr, pose, num_threads);
        },
        py::arg("point_map"), py::arg("image"), py::arg("target_intrinsics"),
        py::arg("target_pose"), py::arg("num_threads") = 1,
        "The shared condition-construction entry point (training pairs and inference).");
    m.def(
        "make_training_pair",
        [](const RenderedView& view, const CameraIntrinsics& intr, const CameraPose& pose,
           const RenderedView* truth) {
            const auto pair = make_training_pair(view, intr, pose, truth);
            return py::make_tuple(pair.condition, pair.supervision
                                                      ? py::object(image_to_array(*pair.supervision))
                                                      : py::object(py::none()));
        },
        py::arg("scene_view"), py::arg("target_intrinsics"), py::arg("target_pose"),
        py::arg("target_truth") = nullptr);

    // ---- artifact ------------------------------------------------------------
    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("uniform", [](Rng& r) { return r.uniform(); })
        .def("normal", [](Rng& r) { return r.normal(); })
        .def_property_readonly("audit_hash", &Rng::audit_hash);

    py::class_<ArtifactMask>(m, "ArtifactMask")
        .def_property_readonly("mask", [](const ArtifactMask& a) { return mask_to_array(a.mask); })
        .def_readonly("descriptor", &ArtifactMask::descriptor);

    py::class_<MaskLibrary>(m, "MaskLibrary")
        .def("__len__", [](const MaskLibrary& lib) { return lib.size(); })
        .def("__getitem__",
             [](const MaskLibrary& lib, size_t i) {
                 if (i >= lib.size()) throw py::index_error();
                 return lib.masks[i];
             })
        .def_static(
            "from_masks",
            [](const std::vector<py::array_t<std::uint8_t>>& masks) {
                MaskLibrary lib;
                for (const auto& a : masks) {
                    ArtifactMask am;
                    am.mask = mask_from_array(a);
                    lib.masks.push_back(std::move(am));
                }
                if (lib.masks.empty()) throw py::value_error("empty mask list");
                return lib;
            },
            py::arg("masks"));

    m.def(
        "make_random_box_mask",
        [](int width, int height, double target_drop_fraction, std::uint64_t seed) {
            return make_random_box_mask(width, height, target_drop_fraction, seed);
        },
        py::arg("width"), py::arg("height"), py::arg("target_drop_fraction"), py::arg("seed"));
    m.def(
        "inject_artifact",
        [](const ConditionMap& x, const MaskLibrary& lib, double p, Rng& rng) {
            const auto r = inject_artifact(x, lib, p, rng);
            return py::make_tuple(r.condition, r.applied_mask ? py::object(py::int_(*r.applied_mask))
                                                              : py::object(py::none()));
        },
        py::arg("condition"), py::arg("library"), py::arg("p"), py::arg("rng"),
        "Two-stage sampler: Bernoulli(p) gate, then a uniform library draw; the mask zeroes "
        "rgb, validity, and depth together.");

    // ---- diffusion ------------------------------------------------------------
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_static("linear", &NoiseSchedule::linear, py::arg("num_train_steps"),
                    py::arg("beta_start"), py::arg("beta_end"))
        .def_property_readonly("num_train_steps", &NoiseSchedule::num_train_steps)
        .def("beta", &NoiseSchedule::beta, py::arg("t"))
        .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"));

    py::class_<DenoiserArch>(m, "DenoiserArch")
        .def(py::init([](int base_channels, int num_stages, int time_embed_dim) {
                 DenoiserArch a;
                 a.base_channels = base_channels;
                 a.num_stages = num_stages;
                 a.time_embed_dim = time_embed_dim;
                 return a;
             }),
             py::arg("base_channels") = 16, py::arg("num_stages") = 2,
             py::arg("time_embed_dim") = 16)
        .def_readonly("base_channels", &DenoiserArch::base_channels)
        .def_readonly("num_stages", &DenoiserArch::num_stages)
        .def_readonly("time_embed_dim", &DenoiserArch::time_embed_dim)
        .def_property_readonly("param_count", &DenoiserArch::param_count)
        .def_property_readonly("receptive_radius", &DenoiserArch::receptive_radius);

    py::class_<DenoiserModel>(m, "DenoiserModel")
        .def_static("zeros", &DenoiserModel::zeros, py::arg("arch"))
        .def_static("random_init", &DenoiserModel::random_init, py::arg("arch"), py::arg("seed"),
                    py::arg("zero_output_head") = true)
        .def_readonly("arch", &DenoiserModel::arch)
        .def_property_readonly("params", [](const DenoiserModel& mdl) {
            py::array_t<double> a(static_cast<py::ssize_t>(mdl.params.size()));
            std::memcpy(a.mutable_data(), mdl.params.data(), mdl.params.size() * sizeof(double));
            return a;
        });

    py::class_<ConditionEncoding>(m, "ConditionEncoding")
        .def_property_readonly("tensor",
                               [](const ConditionEncoding& c) { return latent_to_array(c.tensor); })
        .def_readonly("is_null", &ConditionEncoding::is_null);

    m.def("encode_image",
          [](const py::array_t<double>& img) { return latent_to_array(encode_image(image_from_array(img))); },
          py::arg("image"), "Fixed 4x average-pool to [-1, 1] (3 channels).");
    m.def("decode_latent",
          [](const py::array_t<double>& z) { return image_to_array(decode_latent(latent_from_array(z))); },
          py::arg("latent"), "Nearest 4x upsample back to [0, 1], clamped.");
    m.def("encode_condition", &encode_condition, py::arg("condition"));
    m.def("null_condition", &null_condition, py::arg("latent_height"), py::arg("latent_width"));
    m.def(
        "add_noise",
        [](const py::array_t<double>& z0, int t, const py::array_t<double>& eps,
           const NoiseSchedule& s) {
            return latent_to_array(add_noise(latent_from_array(z0), t, latent_from_array(eps), s));
        },
        py::arg("z0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
    m.def(
        "denoise_predict",
        [](const DenoiserModel& model, const py::array_t<double>& z_t, int t,
           const ConditionEncoding& c) {
            return latent_to_array(denoise_predict(model, latent_from_array(z_t), t, c));
        },
        py::arg("model"), py::arg("z_t"), py::arg("t"), py::arg("condition"));
    m.def(
        "cfg_combine",
        [](const py::array_t<double>& eps_cond, const py::array_t<double>& eps_uncond, double s) {
            return latent_to_array(
                cfg_combine(latent_from_array(eps_cond), latent_from_array(eps_uncond), s));
        },
        py::arg("eps_cond"), py::arg("eps_uncond"), py::arg("s_cfg"),
        "eps_uncond + s_cfg * (eps_cond - eps_uncond); exact at s_cfg = 0 and 1.");
    m.def(
        "sample",
        [](const DenoiserModel& model, const ConditionMap& cond, const NoiseSchedule& schedule,
           int num_steps, double cfg_scale, std::uint64_t seed, bool stochastic) {
            SampleOptions opts;
            opts.num_steps = num_steps;
            opts.cfg_scale = cfg_scale;
            opts.seed = seed;
            opts.stochastic = stochastic;
            return image_to_array(sample(model, cond, schedule, opts));
        },
        py::arg("model"), py::arg("condition"), py::arg("schedule"), py::arg("num_steps") = 30,
        py::arg("cfg_scale") = 1.5, py::arg("seed") = 0, py::arg("stochastic") = false,
        "T-step guided reverse process from seeded Gaussian noise, decoded to an image.");
    m.def(
        "training_loss",
        [](const DenoiserModel& model, const std::vector<std::pair<ConditionMap, py::array_t<double>>>& batch,
           const NoiseSchedule& schedule, double p_drop, Rng& rng) {
            std::vector<TrainingPair> pairs;
            for (const auto& [cond, target] : batch)
                pairs.push_back({cond, image_from_array(target), 1.0});
            const auto r = training_loss(model, pairs, schedule, p_drop, rng);
            py::array_t<double> grad(static_cast<py::ssize_t>(r.gradient.size()));
            std::memcpy(grad.mutable_data(), r.gradient.data(), r.gradient.size() * sizeof(double));
            return py::make_tuple(r.loss, grad);
        },
        py::arg("model"), py::arg("batch"), py::arg("schedule"), py::arg("p_drop"), py::arg("rng"),
        "Weighted noise-prediction objective with conditional dropout; returns (loss, gradient).");

    // ---- lpsr ------------------------------------------------------------------
    py::class_<SparseReference>(m, "SparseReference")
        .def(py::init([](const py::array_t<double>& reference, const py::array_t<std::uint8_t>& mask) {
                 SparseReference r;
                 r.reference = image_from_array(reference);
                 r.mask = mask_from_array(mask);
                 return r;
             }),
             py::arg("reference"), py::arg("mask"))
        .def_property_readonly("reference",
                               [](const SparseReference& r) { return image_to_array(r.reference); })
        .def_property_readonly("mask", [](const SparseReference& r) { return mask_to_array(r.mask); })
        .def("valid_count", &SparseReference::valid_count);

    m.def(
        "masked_mse",
        [](const py::array_t<double>& pred, const SparseReference& ref) {
            return masked_mse(image_from_array(pred), ref);
        },
        py::arg("pred"), py::arg("reference"));
    m.def(
        "s_psnr",
        [](const py::array_t<double>& pred, const SparseReference& ref) {
            return s_psnr(image_from_array(pred), ref);
        },
        py::arg("pred"), py::arg("reference"));
    m.def(
        "s_mae_rmse",
        [](const py::array_t<double>& pred, const SparseReference& ref) {
            return s_mae_rmse(image_from_array(pred), ref);
        },
        py::arg("pred"), py::arg("reference"));
    m.def(
        "s_ssim",
        [](const py::array_t<double>& pred, const SparseReference& ref) {
            return s_ssim(image_from_array(pred), ref);
        },
        py::arg("pred"), py::arg("reference"));
    m.def("make_sparse_reference", &make_sparse_reference, py::arg("truth"),
          py::arg("subsample_fraction"), py::arg("seed"),
          "Seeded uniform subsample of the view's finite-depth pixels.");
    m.def("reference_from_condition", &reference_from_condition, py::arg("condition"),
          "SparseReference view of a condition map's validity channel.");
    m.def(
        "bin_and_aggregate",
        [](const std::vector<py::dict>& records, const std::vector<double>& offset_edges,
           const std::vector<double>& sparsity_edges) {
            std::vector<EvalRecord> recs;
            for (const auto& d : records) {
                EvalRecord r;
                r.scene_id = d.contains("scene_id") ? d["scene_id"].cast<int>() : 0;
                r.view_id = d.contains("view_id") ? d["view_id"].cast<int>() : 0;
                r.s_psnr = d["s_psnr"].cast<double>();
                r.s_ssim = d["s_ssim"].cast<double>();
                r.s_mae = d["s_mae"].cast<double>();
                r.s_rmse = d["s_rmse"].cast<double>();
                r.valid_fraction = d["valid_fraction"].cast<double>();
                r.pose_offset = d["pose_offset"].cast<double>();
                recs.push_back(r);
            }
            const EvalReport rep = bin_and_aggregate(recs, offset_edges, sparsity_edges);
            py::dict out;
            py::list by_offset, by_sparsity, out_records;
            for (const auto& r : rep.records) out_records.append(record_to_dict(r));
            for (const auto& b : rep.by_offset) by_offset.append(aggregate_to_dict(b));
            for (const auto& b : rep.by_sparsity) by_sparsity.append(aggregate_to_dict(b));
            out["records"] = out_records;
            out["by_offset"] = by_offset;
            out["by_sparsity"] = by_sparsity;
            out["offset_other"] = aggregate_to_dict(rep.offset_other);
            out["sparsity_other"] = aggregate_to_dict(rep.sparsity_other);
            return out;
        },
        py::arg("records"), py::arg("offset_bin_edges"), py::arg("sparsity_bin_edges"),
        "Per-bin means; bins are half-open with the last bin closed, overflow in 'other'.");

    // ---- io + pipeline -----------------------------------------------------------
    m.def("write_png",
          [](const std::filesystem::path& path, const py::array_t<double>& img) {
              io::write_png_file(path, image_from_array(img));
          },
          py::arg("path"), py::arg("image"));
    m.def("read_png",
          [](const std::filesystem::path& path) { return image_to_array(io::read_png_file(path)); },
          py::arg("path"));
    m.def("write_condition", &io::write_condition, py::arg("prefix"), py::arg("condition"));
    m.def("read_condition", &io::read_condition, py::arg("prefix"));
    m.def("write_point_map", &io::write_point_map_file, py::arg("path"), py::arg("point_map"));
    m.def("read_point_map", &io::read_point_map_file, py::arg("path"));
    m.def("write_camera", &io::write_camera_file, py::arg("path"), py::arg("intrinsics"),
          py::arg("pose"));
    m.def("read_camera", &io::read_camera_file, py::arg("path"));

    m.def(
        "build_dataset",
        [](const std::filesystem::path& out_dir, int num_scenes, int cameras_per_scene,
           int resolution, std::uint64_t seed, int scene_complexity) {
            const auto manifest = pipeline::build_dataset(out_dir, num_scenes, cameras_per_scene,
                                                          resolution, seed, scene_complexity);
            return manifest.entries.size();
        },
        py::arg("out_dir"), py::arg("num_scenes"), py::arg("cameras_per_scene"),
        py::arg("resolution"), py::arg("seed"), py::arg("scene_complexity") = 5,
        "Seeded u=v condition/supervision dataset; returns the number of entries written.");
}
