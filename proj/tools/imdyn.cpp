// imdyn command-line driver.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <unistd.h>

#include <CLI11.hpp>

#include "imdyn/denoiser_wire.hpp"
#include "imdyn/pipeline.hpp"
#include "imdyn/service.hpp"
#include "imdyn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace imdyn;

namespace {

struct Flags {
    std::string bundle;
    std::string out;
    std::string trajectory;
    std::string run;
    int steps = 0;
    double dt = 0.0;
    int frames = 0;
    std::string resolution;
    std::vector<std::string> forces;
    std::vector<std::string> torques;
    std::uint64_t seed = 0;
    std::string endpoint = "mock:echo";
    double timeout_s = 60.0;
    bool no_refine = false;
    int threads = 0;
    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string ui_dir;
    std::string artifact_root;
    int workers = 2;
};

void add_sim_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--steps", f.steps, "Simulation steps (default from the bundle)")->check(CLI::PositiveNumber);
    cmd->add_option("--dt", f.dt, "Step length in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--force", f.forces, "Applied force ID:fx,fy[,px,py] (dyn; point in image px)");
    cmd->add_option("--torque", f.torques, "Applied torque ID:tau (dyn*cm)");
}

void add_render_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--frames", f.frames, "Number of sampled frames")->check(CLI::PositiveNumber);
    cmd->add_option("--resolution", f.resolution, "Output size WxH");
    cmd->add_option("--threads", f.threads, "Render threads (0 = all cores)");
}

void add_refine_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--seed", f.seed, "Noise seed");
    cmd->add_option("--denoiser-endpoint", f.endpoint,
                    "mock:identity | mock:echo | tcp://host:port | exec:<command>");
    cmd->add_option("--denoiser-timeout", f.timeout_s, "Seconds to wait for each denoiser reply")
        ->check(CLI::PositiveNumber);
}

RunOptions options_from(const Flags& f) {
    RunOptions o;
    if (f.steps > 0) o.steps = f.steps;
    if (f.dt > 0.0) o.dt = f.dt;
    if (f.frames > 0) o.frames = f.frames;
    if (!f.resolution.empty()) {
        int w = 0, h = 0;
        char x = 0;
        std::istringstream in(f.resolution);
        if (!(in >> w >> x >> h) || x != 'x' || w < 1 || h < 1 || !in.eof())
            throw ValidationError("--resolution", "expected WxH, got '" + f.resolution + "'");
        o.resolution = std::pair{w, h};
    }
    for (const auto& s : f.forces) merge_override(o.overrides, parse_force_flag(s));
    for (const auto& s : f.torques) merge_override(o.overrides, parse_torque_flag(s));
    o.seed = f.seed;
    o.refine = !f.no_refine;
    o.denoiser_endpoint = f.endpoint;
    o.denoiser_timeout = std::chrono::milliseconds(static_cast<long long>(f.timeout_s * 1000.0));
    o.threads = f.threads;
    return o;
}

SceneBundle load_with(const Flags& f, const RunOptions& o) {
    SceneBundle b = load_bundle(f.bundle);
    apply_options(b, o);
    return b;
}

void print_timings(const RunManifest& m) {
    for (const auto& t : m.timings) std::cout << "  " << t.stage << ": " << t.seconds << " s\n";
}

int cmd_simulate(const Flags& f) {
    const RunOptions o = options_from(f);
    const SceneBundle b = load_with(f, o);
    RunManifest m;
    m.run_id = make_run_id();
    m.bundle_fingerprint = bundle_fingerprint(fs::path(f.bundle));
    m.config = config_snapshot(b, o);
    const Trajectory t = run_simulate_stage(b, f.out, m);
    write_manifest(f.out, m);
    std::cout << "simulated " << t.steps() << " steps of " << t.body_count() << " bodies, " << t.contacts.size()
              << " contact events -> " << (fs::path(f.out) / m.artifacts.trajectory).string() << '\n';
    print_timings(m);
    return 0;
}

int cmd_render(const Flags& f) {
    const RunOptions o = options_from(f);
    const SceneBundle b = load_with(f, o);
    const fs::path traj_path = f.trajectory.empty() ? fs::path(f.out) / "trajectory.csv" : fs::path(f.trajectory);
    const Trajectory t = read_trajectory_csv(traj_path, b.sim.pixels_per_cm);
    if (t.body_ids.size() != b.objects.size())
        throw ValidationError("--trajectory", "body count does not match the bundle");
    RunManifest m;
    if (fs::exists(fs::path(f.out) / "run.json")) m = read_manifest(f.out);
    if (m.run_id.empty()) m.run_id = make_run_id();
    m.bundle_fingerprint = bundle_fingerprint(fs::path(f.bundle));
    m.config = config_snapshot(b, o);
    if (traj_path != fs::path(f.out) / "trajectory.csv") {
        write_trajectory_csv(fs::path(f.out) / "trajectory.csv", t);
        m.artifacts.trajectory = "trajectory.csv";
    }
    const auto packs = run_render_stage(b, t, f.out, m, o.threads);
    write_manifest(f.out, m);
    std::cout << "rendered " << packs.size() << " frames and " << m.artifacts.flow.size() << " flow fields -> "
              << f.out << '\n';
    print_timings(m);
    return 0;
}

int cmd_refine(const Flags& f) {
    const RunOptions o = options_from(f);
    RunManifest m = read_manifest(f.run);
    const auto frames = load_rendered_frames(f.run, m);
    const RefineOutput r = run_refine_stage(frames, o, f.run, m);
    m.config["seed"] = o.seed;
    m.config["denoiser_endpoint"] = o.denoiser_endpoint;
    m.config["refine"] = true;
    write_manifest(f.run, m);
    std::cout << "refined " << r.refined.frames() << " latent frames with " << r.trace.size()
              << " denoiser calls -> " << (fs::path(f.run) / m.artifacts.refined_latents).string() << '\n';
    return 0;
}

int cmd_pipeline(const Flags& f) {
    const RunOptions o = options_from(f);
    const SceneBundle b = load_with(f, o);
    const RunManifest m = run_pipeline(b, o, f.out, make_run_id(), bundle_fingerprint(fs::path(f.bundle)));
    std::cout << "run " << m.run_id << ": " << m.frame_steps.size() << " frames, " << m.artifacts.flow.size()
              << " flow fields -> " << f.out << '\n';
    print_timings(m);
    return 0;
}

int cmd_validate(const Flags& f) {
    const SceneBundle b = load_bundle(f.bundle);
    std::cout << "ok: " << b.width << "x" << b.height << ", " << b.objects.size() << " objects, "
              << b.boundaries.size() << " boundaries\n";
    return 0;
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

int cmd_serve(const Flags& f) {
    ServiceConfig cfg;
    if (!f.artifact_root.empty()) cfg.artifact_root = f.artifact_root;
    else if (const char* env = std::getenv("IMDYN_ARTIFACT_ROOT")) cfg.artifact_root = env;
    if (!f.ui_dir.empty()) cfg.ui_dir = f.ui_dir;
    cfg.workers = f.workers;
    cfg.defaults = options_from(f);
    Service svc(cfg);
    const int port = svc.bind(f.host, f.port);
    std::cout << "serving on http://" << f.host << ":" << port << " (artifacts in " << cfg.artifact_root.string()
              << ")" << std::endl;
    g_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svc.serve();
    g_service = nullptr;
    return 0;
}

int cmd_demo(const Flags& f) {
    save_bundle(synthetic::demo_bundle(), f.out);
    std::cout << "wrote demo bundle -> " << f.out << '\n';
    return 0;
}

int cmd_serve_denoiser() {
    IdentityDenoiser d;
    serve_denoiser(STDIN_FILENO, STDOUT_FILENO, d, std::chrono::hours(24));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"imdyn: image-space rigid-body simulation, rendering and refinement"};
    app.require_subcommand(1);
    Flags f;

    auto* simulate = app.add_subcommand("simulate", "Simulate a bundle and write its trajectory");
    simulate->add_option("--bundle", f.bundle, "Bundle directory or tar archive")->required();
    simulate->add_option("--out", f.out, "Run directory")->required();
    add_sim_flags(simulate, f);

    auto* render = app.add_subcommand("render", "Render frames and flow from a bundle and trajectory");
    render->add_option("--bundle", f.bundle, "Bundle directory or tar archive")->required();
    render->add_option("--out", f.out, "Run directory")->required();
    render->add_option("--trajectory", f.trajectory, "trajectory.csv (default: <out>/trajectory.csv)");
    add_render_flags(render, f);

    auto* refine = app.add_subcommand("refine", "Refine the rendered frames of a run through a denoiser");
    refine->add_option("--run", f.run, "Rendered run directory")->required();
    add_refine_flags(refine, f);

    auto* pipeline = app.add_subcommand("pipeline", "Simulate, render and refine in one run");
    pipeline->add_option("--bundle", f.bundle, "Bundle directory or tar archive")->required();
    pipeline->add_option("--out", f.out, "Run directory")->required();
    add_sim_flags(pipeline, f);
    add_render_flags(pipeline, f);
    add_refine_flags(pipeline, f);
    pipeline->add_flag("--no-refine", f.no_refine, "Skip the refinement stage");

    auto* validate_cmd = app.add_subcommand("validate", "Check a bundle and report the first problem");
    validate_cmd->add_option("--bundle", f.bundle, "Bundle directory or tar archive")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--host", f.host, "Listen address");
    serve->add_option("--port", f.port, "Listen port (0 picks one)");
    serve->add_option("--ui-dir", f.ui_dir, "Static UI files served at /");
    serve->add_option("--artifact-root", f.artifact_root, "Artifact directory (default $IMDYN_ARTIFACT_ROOT)");
    serve->add_option("--workers", f.workers, "Render workers")->check(CLI::PositiveNumber);
    add_refine_flags(serve, f);

    auto* demo = app.add_subcommand("demo-scene", "Write the built-in two-object demo bundle");
    demo->add_option("--out", f.out, "Bundle directory")->required();

    auto* serve_denoiser_cmd =
        app.add_subcommand("serve-denoiser", "Answer denoiser requests on stdin/stdout with the identity mock");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*simulate) return cmd_simulate(f);
        if (*render) return cmd_render(f);
        if (*refine) return cmd_refine(f);
        if (*pipeline) return cmd_pipeline(f);
        if (*validate_cmd) return cmd_validate(f);
        if (*serve) return cmd_serve(f);
        if (*demo) return cmd_demo(f);
        if (*serve_denoiser_cmd) return cmd_serve_denoiser();
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << " [field: " << e.field() << "]\n";
        return 1;
    } catch (const MissingAsset& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
