// tritok._core: warps, token counts, tokenization, scenes, training and
// profiling. Configs cross the boundary as JSON text; the Python package
// wraps them as dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "tritok/config.hpp"
#include "tritok/error.hpp"
#include "tritok/profile.hpp"
#include "tritok/tokenizer.hpp"
#include "tritok/train.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace tritok;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

ExperimentConfig parse_config(const std::string& text) { return config_from_json(json::parse(text)); }

TensorF tensor_from(const F32Array& a) {
    Shape s(a.shape(), a.shape() + a.ndim());
    return TensorF::from(std::move(s), std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array array_from(const TensorF& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    F32Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

F32Array array_from(const Image& im) {
    F32Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(im.height), static_cast<py::ssize_t>(im.width),
                                          static_cast<py::ssize_t>(im.channels)});
    std::copy(im.data.begin(), im.data.end(), out.mutable_data());
    return out;
}

Image image_from(const F32Array& a) {
    if (a.ndim() != 3) throw shape_error("image: expected [H, W, C], got rank " + std::to_string(a.ndim()));
    Image im(a.shape(0), a.shape(1), a.shape(2));
    std::copy(a.data(), a.data() + a.size(), im.data.begin());
    return im;
}

py::tuple planes_tuple(const Triplane<float>& tp) {
    return py::make_tuple(array_from(tp.xy), array_from(tp.xz), array_from(tp.yz));
}

py::dict views_dict(const CameraRig& rig, const std::vector<GroundTruthView>& views) {
    py::dict d;
    for (std::size_t c = 0; c < rig.size(); ++c) {
        py::dict v;
        v["rgb"] = array_from(views[c].rgb);
        v["depth"] = array_from(views[c].depth);
        d[py::str(rig.at(c).name)] = v;
    }
    return d;
}

py::tuple tokenize_planes(const F32Array& xy, const F32Array& xz, const F32Array& yz, const GridWarp& warp,
                          const PatchConfig& cfg, bool front_facing, std::uint64_t seed) {
    Triplane<float> tp{tensor_from(xy), tensor_from(xz), tensor_from(yz), warp};
    tp.validate();
    cfg.validate(warp.cells());
    ParamStore<float> store;
    Rng rng = derive_rng(seed, "tokenizer");
    const auto proj = TokenProjector<float>::create(store, tp.feature_dim(), cfg, rng);
    TokenSequence<float> seq;
    {
        py::gil_scoped_release release;
        NoGradGuard guard;
        seq = tokenize(tp, proj, cfg, front_facing);
    }
    py::array_t<std::uint32_t> prov(std::vector<py::ssize_t>{static_cast<py::ssize_t>(seq.length()), 3});
    auto p = prov.mutable_unchecked<2>();
    for (std::size_t i = 0; i < seq.length(); ++i) {
        p(i, 0) = static_cast<std::uint32_t>(seq.provenance[i].plane);
        p(i, 1) = seq.provenance[i].row;
        p(i, 2) = seq.provenance[i].col;
    }
    return py::make_tuple(array_from(seq.tokens), prov);
}

std::string step_json(const StepStats& s) {
    return json{{"step", s.step}, {"loss", s.loss}, {"batch_psnr", s.batch_psnr}, {"lr_scale", s.lr_scale}}.dump();
}

std::string profile_json(const ProfileReport& r) {
    json rows = json::array(), checks = json::array(), reductions = json::object();
    for (const auto& row : r.rows)
        rows.push_back({{"tokenizer", row.tokenizer},
                        {"patch", row.patch},
                        {"halfplane", row.halfplane},
                        {"cameras", row.cameras},
                        {"frames", row.frames},
                        {"backbone", row.backbone},
                        {"tokens", row.tokens},
                        {"tokens_per_image", row.tokens_per_image},
                        {"tokenizer_ms", row.tokenizer_time.mean_ms},
                        {"tokenizer_ci95_ms", row.tokenizer_time.ci95_ms},
                        {"prefill_gflops", row.prefill_gflops}});
    for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    for (const auto& [name, v] : r.reductions) reductions[name] = v;
    return json{{"rows", rows}, {"checks", checks}, {"reductions", reductions}, {"all_passed", r.all_passed()}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Triplane tokenizer core";

    static py::exception<Error> error(m, "TritokError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("desk_config", [] { return config_to_json(desk_config()).dump(); });
    m.def("default_config", [] { return config_to_json(ExperimentConfig{}).dump(); });
    m.def("normalize_config", [](const std::string& text) { return config_to_json(parse_config(text)).dump(); },
          "Fills defaults and validates a config.");

    py::class_<AxisWarp>(m, "AxisWarp")
        .def_static("symmetric", &AxisWarp::symmetric, py::arg("cells"), py::arg("inner_cells_per_side"),
                    py::arg("inner_res"), py::arg("outer_res"))
        .def_static("bottom_up", &AxisWarp::bottom_up, py::arg("cells"), py::arg("inner_cells"), py::arg("inner_res"),
                    py::arg("outer_res"), py::arg("metric_min"))
        .def_readonly("cells", &AxisWarp::cells)
        .def_readonly("grid_min", &AxisWarp::grid_min)
        .def_readonly("inner_res", &AxisWarp::inner_res)
        .def_readonly("outer_res", &AxisWarp::outer_res)
        .def_property_readonly("grid_max", &AxisWarp::grid_max)
        .def_property_readonly("metric_min", &AxisWarp::metric_min)
        .def_property_readonly("metric_max", &AxisWarp::metric_max)
        .def("to_ego", &AxisWarp::to_ego)
        .def("to_grid", &AxisWarp::to_grid)
        .def("to_ego", [](const AxisWarp& w, py::array_t<double> g) { return py::vectorize([&](double v) { return w.to_ego(v); })(g); })
        .def("to_grid", [](const AxisWarp& w, py::array_t<double> e) { return py::vectorize([&](double v) { return w.to_grid(v); })(e); })
        .def("validate", &AxisWarp::validate, py::arg("name") = "axis");

    py::class_<GridWarp>(m, "GridWarp")
        .def(py::init<AxisWarp, AxisWarp, AxisWarp>(), py::arg("x"), py::arg("y"), py::arg("z"))
        .def_static("driving_default", &GridWarp::driving_default)
        .def_static("from_config", [](const std::string& text) { return parse_config(text).warp.build(); })
        .def_readonly("x", &GridWarp::x)
        .def_readonly("y", &GridWarp::y)
        .def_readonly("z", &GridWarp::z)
        .def_property_readonly("cells", &GridWarp::cells)
        .def("validate", &GridWarp::validate);

    py::enum_<HalfKeep>(m, "HalfKeep").value("FRONT", HalfKeep::kFront).value("REAR", HalfKeep::kRear);

    py::class_<PatchConfig>(m, "PatchConfig")
        .def(py::init([](std::size_t px, std::size_t py_, std::size_t pz, std::size_t d_ar, bool halfplane,
                         HalfKeep keep) { return PatchConfig{px, py_, pz, d_ar, halfplane, keep}; }),
             py::arg("px") = 4, py::arg("py") = 6, py::arg("pz") = 6, py::arg("d_ar") = 256,
             py::arg("halfplane") = false, py::arg("keep") = HalfKeep::kFront)
        .def_readwrite("px", &PatchConfig::px)
        .def_readwrite("py", &PatchConfig::py)
        .def_readwrite("pz", &PatchConfig::pz)
        .def_readwrite("d_ar", &PatchConfig::d_ar)
        .def_readwrite("halfplane", &PatchConfig::halfplane)
        .def_readwrite("keep", &PatchConfig::keep)
        .def("validate", &PatchConfig::validate);

    m.def("token_count", &token_count, py::arg("cells"), py::arg("patch"));
    m.def("plane_token_counts", &plane_token_counts, py::arg("cells"), py::arg("patch"));
    m.def("baseline_token_count", &baseline_token_count, py::arg("height"), py::arg("width"), py::arg("patch"),
          py::arg("cameras"), py::arg("frames"));
    m.def("tokenize", &tokenize_planes, py::arg("xy"), py::arg("xz"), py::arg("yz"), py::arg("warp"),
          py::arg("patch"), py::arg("front_facing") = true, py::arg("seed") = 0,
          "Tokens [L, d_ar] and provenance rows (plane, row, col) for three feature planes.");

    m.def(
        "scene_views",
        [](const std::string& text) {
            SceneData d;
            {
                py::gil_scoped_release release;
                d = make_scene_data(parse_config(text));
            }
            py::dict out;
            out["train"] = views_dict(d.rig, d.views);
            out["heldout"] = views_dict(d.heldout, d.heldout_views);
            return out;
        },
        "Ground-truth renders of the configured scene for the training and held-out rigs.");

    m.def("psnr", [](const F32Array& a, const F32Array& b) { return psnr(image_from(a), image_from(b)); });
    m.def("ssim", [](const F32Array& a, const F32Array& b) { return ssim(image_from(a), image_from(b)); });

    m.def("prefill_flops", [](const std::string& backbone, std::size_t tokens) {
        return prefill_flops(backbone_preset(backbone), tokens);
    });
    m.def(
        "run_profile",
        [](const std::string& text, bool measure) {
            const ExperimentConfig cfg = parse_config(text);
            py::gil_scoped_release release;
            return profile_json(run_profile(cfg, measure));
        },
        py::arg("config"), py::arg("measure") = false);

    py::class_<Trainer>(m, "Trainer")
        .def(py::init([](const std::string& text) {
                 ExperimentConfig cfg = parse_config(text);
                 py::gil_scoped_release release;
                 return std::make_unique<Trainer>(std::move(cfg));
             }),
             py::arg("config"))
        .def_property_readonly("steps_done", &Trainer::steps_done)
        .def_property_readonly("config", [](const Trainer& t) { return config_to_json(t.config()).dump(); })
        .def("step",
             [](Trainer& t) {
                 StepStats s;
                 {
                     py::gil_scoped_release release;
                     s = t.step();
                 }
                 return step_json(s);
             })
        .def("save", &Trainer::save, py::call_guard<py::gil_scoped_release>())
        .def("resume", &Trainer::resume, py::call_guard<py::gil_scoped_release>())
        .def("triplane", [](const Trainer& t) { return planes_tuple(t.current_triplane()); })
        .def("evaluate_training_views",
             [](const Trainer& t) {
                 py::gil_scoped_release release;
                 return t.evaluate_training_views().to_json().dump();
             })
        .def("evaluate_heldout", [](const Trainer& t) {
            py::gil_scoped_release release;
            return t.evaluate_heldout().to_json().dump();
        });

    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& ckpt) {
            const LoadedModel lm = load_model(ckpt);
            const SceneData data = make_scene_data(lm.config);
            NoGradGuard guard;
            const Triplane<float> tp =
                lm.model.triplane(lm.model.lifter ? data.images<float>() : std::vector<TensorF>{}, data.rig);
            return py::make_tuple(config_to_json(lm.config).dump(), planes_tuple(tp), tp.warp);
        },
        "Config, triplane planes and warp stored with a checkpoint.");
}
