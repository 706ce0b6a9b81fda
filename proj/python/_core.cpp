#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "imdyn/pipeline.hpp"
#include "imdyn/primitive.hpp"
#include "imdyn/synthetic.hpp"

namespace py = pybind11;
using namespace imdyn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

RunOptions options(const py::list& overrides, std::optional<int> steps, std::optional<int> frames) {
    RunOptions opt;
    opt.steps = steps;
    opt.frames = frames;
    for (std::size_t i = 0; i < overrides.size(); ++i)
        opt.overrides.push_back(
            override_from_json(from_py(overrides[i]), "overrides[" + std::to_string(i) + "]"));
    return opt;
}

SceneBundle prepared(const std::filesystem::path& path, const RunOptions& opt) {
    SceneBundle b = load_bundle(path);
    apply_options(b, opt);
    return b;
}

Mask mask_from(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("mask must be 2-d (height, width)");
    Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    const auto* src = a.data();
    for (std::size_t i = 0; i < m.size(); ++i) m.pixels()[i] = src[i] ? 1 : 0;
    return m;
}

LatentVideo latent_from(const FloatArray& a) {
    if (a.ndim() != 4) throw ShapeError("latents must be 4-d (frames, height, width, channels)");
    LatentVideo::Shape s{};
    for (int k = 0; k < 4; ++k) s[k] = static_cast<int>(a.shape(k));
    return LatentVideo(s, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> latent_to(const LatentVideo& z) {
    py::array_t<float> out({z.frames(), z.height(), z.width(), z.channels()});
    std::copy(z.values().begin(), z.values().end(), out.mutable_data());
    return out;
}

/// Adapts a Python callable f(z: ndarray, t: int) -> ndarray.
class CallableDenoiser final : public Denoiser {
public:
    explicit CallableDenoiser(py::function f) : f_(std::move(f)) {}
    LatentVideo denoise(const LatentVideo& z, int t) override {
        py::gil_scoped_acquire gil;
        return latent_from(f_(latent_to(z), t).cast<FloatArray>());
    }

private:
    py::function f_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Image-space rigid-body simulation, rendering and latent refinement";

    static py::exception<Error> error(m, "Error");
    static py::exception<ValidationError> validation(m, "ValidationError", error.ptr());
    static py::exception<ShapeError> shape(m, "ShapeError", error.ptr());
    static py::exception<IoError> io(m, "IoError", error.ptr());
    static py::exception<MissingAsset> missing(m, "MissingAsset", error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            py::object exc = validation;
            py::object inst = exc(e.what());
            inst.attr("field") = e.field();
            PyErr_SetObject(validation.ptr(), inst.ptr());
        } catch (const ShapeError& e) {
            shape(e.what());
        } catch (const IoError& e) {
            io(e.what());
        } catch (const MissingAsset& e) {
            missing(e.what());
        } catch (const Error& e) {
            error(e.what());
        }
    });

    m.def("demo_scene", [](const std::filesystem::path& out) { save_bundle(synthetic::demo_bundle(), out); },
          py::arg("out"), "Write the built-in two-object demo bundle.");

    m.def(
        "load_bundle",
        [](const std::filesystem::path& path) {
            const SceneBundle b = load_bundle(path);
            const auto prims = fit_primitives(b);
            py::list objects;
            for (std::size_t i = 0; i < b.objects.size(); ++i) {
                const auto& o = b.objects[i];
                const MassProperties mp = mass_properties(prims[i], o.mass);
                py::dict d;
                d["id"] = o.id;
                d["mass"] = o.mass;
                d["friction"] = o.friction;
                d["elasticity"] = o.elasticity;
                d["primitive"] = prims[i].is_circle() ? "circle" : "polygon";
                d["center_of_mass"] = py::make_tuple(mp.center_of_mass.x, mp.center_of_mass.y);
                d["inertia"] = mp.inertia;
                objects.append(d);
            }
            py::dict out;
            out["width"] = b.width;
            out["height"] = b.height;
            out["objects"] = objects;
            out["fingerprint"] = bundle_fingerprint(path);
            return out;
        },
        py::arg("path"), "Load and validate a bundle; returns a summary dict.");

    m.def(
        "fit_mask",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
            const Mask mask = mask_from(a);
            const Primitive p = choose_primitive(mask);
            py::dict out;
            out["kind"] = p.is_circle() ? "circle" : "polygon";
            out["circle_iou"] = circle_fit_iou(mask);
            if (p.is_circle()) {
                out["center"] = py::make_tuple(p.circle.center.x, p.circle.center.y);
                out["radius"] = p.circle.radius;
            } else {
                py::list outline;
                for (const Vec2 v : p.outline) outline.append(py::make_tuple(v.x, v.y));
                out["outline"] = outline;
                out["pieces"] = p.pieces.size();
            }
            return out;
        },
        py::arg("mask"), "Fit the collision primitive for a binary (height, width) mask.");

    m.def(
        "simulate",
        [](const std::filesystem::path& path, const py::list& overrides, std::optional<int> steps) {
            const SceneBundle b = prepared(path, options(overrides, steps, std::nullopt));
            const Trajectory t = simulate(b);
            const auto n = static_cast<py::ssize_t>(t.body_count());
            py::array_t<double> states({static_cast<py::ssize_t>(t.states.size()), n, py::ssize_t{6}});
            auto s = states.mutable_unchecked<3>();
            for (py::ssize_t k = 0; k < states.shape(0); ++k)
                for (py::ssize_t i = 0; i < n; ++i) {
                    const BodyState& st = t.states[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
                    const double v[6]{st.translation.x,     st.translation.y,     st.rotation,
                                      st.linear_velocity.x, st.linear_velocity.y, st.angular_velocity};
                    for (int c = 0; c < 6; ++c) s(k, i, c) = v[c];
                }
            py::dict out;
            out["body_ids"] = t.body_ids;
            out["states"] = states;
            out["dt"] = t.dt;
            out["contacts"] = t.contacts.size();
            return out;
        },
        py::arg("path"), py::arg("overrides") = py::list(), py::arg("steps") = py::none(),
        "Simulate a bundle. states[step, body] = (x, y, rotation, vx, vy, omega) in cm, rad, s.");

    m.def(
        "preview",
        [](const std::filesystem::path& path, const py::list& overrides, int max_points) {
            const SceneBundle b = prepared(path, options(overrides, std::nullopt, std::nullopt));
            py::list out;
            for (const auto& p : summarize(simulate(b), max_points)) {
                py::dict d;
                d["id"] = p.id;
                d["points"] = p.points;
                d["arc_length"] = arc_length(p);
                out.append(d);
            }
            return out;
        },
        py::arg("path"), py::arg("overrides") = py::list(), py::arg("max_points") = 128,
        "Per-object center-of-mass polylines in image pixels.");

    m.def(
        "run_pipeline",
        [](const std::filesystem::path& bundle, const std::filesystem::path& out, std::uint64_t seed,
           const std::string& endpoint, bool refine, const py::list& overrides, std::optional<int> steps,
           std::optional<int> frames) {
            RunOptions opt = options(overrides, steps, frames);
            opt.seed = seed;
            opt.denoiser_endpoint = endpoint;
            opt.refine = refine;
            const SceneBundle b = prepared(bundle, opt);
            RunManifest m;
            {
                py::gil_scoped_release release;
                m = run_pipeline(b, opt, out, make_run_id(), bundle_fingerprint(bundle));
            }
            return to_py(to_json(m));
        },
        py::arg("bundle"), py::arg("out"), py::arg("seed") = 0, py::arg("denoiser_endpoint") = "mock:echo",
        py::arg("refine") = true, py::arg("overrides") = py::list(), py::arg("steps") = py::none(),
        py::arg("frames") = py::none(), "Simulate, render and refine; returns the run manifest.");

    m.def(
        "forward_noise",
        [](const FloatArray& z0, int t, std::uint64_t seed) {
            return latent_to(forward_noise(latent_from(z0), t, NoiseSchedule::linear(), seed));
        },
        py::arg("z0"), py::arg("t"), py::arg("seed") = 0, "Sample z_t from z_0 under the default schedule.");

    m.def(
        "refine",
        [](const FloatArray& guidance, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask,
           const py::function& denoiser, std::uint64_t seed, double noise_strength, int fusion_timestamp) {
            const LatentVideo g = latent_from(guidance);
            if (mask.ndim() != 3) throw ShapeError("mask must be 3-d (frames, height, width)");
            LatentMask lm{static_cast<int>(mask.shape(0)), static_cast<int>(mask.shape(1)),
                          static_cast<int>(mask.shape(2)),
                          std::vector<std::uint8_t>(mask.data(), mask.data() + mask.size())};
            RefinePlan plan = default_plan(std::move(lm), seed);
            plan.noise_strength = noise_strength;
            plan.fusion_timestamp = fusion_timestamp;
            CallableDenoiser d(denoiser);
            std::vector<RefineStep> trace;
            const LatentVideo out = refine(g, plan, NoiseSchedule::linear(), d, &trace);
            py::list steps;
            for (const auto& s : trace) steps.append(py::make_tuple(s.t, s.fused, s.weight));
            return py::make_tuple(latent_to(out), steps);
        },
        py::arg("guidance"), py::arg("mask"), py::arg("denoiser"), py::arg("seed") = 0,
        py::arg("noise_strength") = 0.5, py::arg("fusion_timestamp") = 5,
        "Masked latent refinement with a Python denoiser f(z_t, t) -> z_{t-1}. Returns (latents, trace).");
}
