#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "imdyn/dynamics.hpp"
#include "imdyn/refine.hpp"
#include "imdyn/render.hpp"
#include "imdyn/scene.hpp"

namespace imdyn {

/// Per-object what-if edits applied on top of a bundle.
struct ObjectOverride {
    int id = 0;
    std::optional<Vec2> applied_force;
    std::optional<Vec2> application_point;
    std::optional<double> applied_torque;
    std::optional<Vec2> initial_velocity;
    std::optional<double> initial_angular_velocity;
    std::optional<double> force_duration;
};

struct RunOptions {
    std::optional<int> steps;
    std::optional<double> dt;
    std::optional<int> frames;
    std::optional<std::pair<int, int>> resolution;
    std::vector<ObjectOverride> overrides;
    std::uint64_t seed = 0;
    bool refine = true;
    std::string denoiser_endpoint = "mock:echo";
    std::chrono::milliseconds denoiser_timeout{60000};
    int threads = 0;
};

/// `ID:fx,fy[,px,py]` and `ID:tau`. Errors name the flag.
ObjectOverride parse_force_flag(std::string_view text);
ObjectOverride parse_torque_flag(std::string_view text);
/// Folds overrides for the same id together (later fields win).
void merge_override(std::vector<ObjectOverride>& into, const ObjectOverride& o);

/// Applies step/frame/resolution settings and object overrides, then
/// revalidates. Unknown ids throw ValidationError("overrides[i].id").
void apply_options(SceneBundle& bundle, const RunOptions& options);

nlohmann::json to_json(const ObjectOverride& o);
/// `field` prefixes error field names, e.g. "overrides[0]".
ObjectOverride override_from_json(const nlohmann::json& j, const std::string& field);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
/// Content hash of the files that make up a bundle directory or archive;
/// equal for byte-identical inputs.
std::string bundle_fingerprint(const std::filesystem::path& path);
/// Content hash of an in-memory bundle (canonical manifest plus raster bytes).
std::string bundle_fingerprint(const SceneBundle& bundle);

/// Random 16-hex-digit identifier.
std::string make_run_id();

// ---- trajectory tables -------------------------------------------------------

/// step,time,body_id,x,y,rotation,vx,vy,omega in world units; shortest
/// round-trip decimal so reading back is exact.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory read_trajectory_csv(const std::filesystem::path& path, double pixels_per_cm);
void write_contacts_csv(const std::filesystem::path& path, const Trajectory& trajectory);

/// Per-object center-of-mass path in image pixels for overlays: at most
/// `max_points` uniformly sampled (x, y, rotation) triples with consecutive
/// duplicates removed.
struct Polyline {
    int id = 0;
    std::vector<std::array<double, 3>> points;
};
std::vector<Polyline> summarize(const Trajectory& trajectory, int max_points = 128);
double arc_length(const Polyline& polyline);

// ---- runs ------------------------------------------------------------------------

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunArtifacts {
    std::string trajectory;
    std::string contacts;
    std::vector<std::string> frames;
    std::vector<std::string> flow;
    std::vector<std::string> masks;
    std::vector<std::string> composited;
    std::vector<std::string> albedo;
    std::vector<std::string> normal;
    std::string guidance_latents;
    std::string refined_latents;
    std::vector<std::string> refined_frames;

    /// Every path, in a fixed order.
    std::vector<std::string> all() const;
};

struct RunManifest {
    std::string run_id;
    std::string bundle_fingerprint;
    nlohmann::json config = nlohmann::json::object();
    std::vector<int> frame_steps;
    RunArtifacts artifacts;
    std::vector<StageTiming> timings;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& run_dir);

/// Called with the stage name as each stage starts.
using StageObserver = std::function<void(std::string_view)>;

/// Stage functions write into `run_dir` and record paths and timings in `m`.
Trajectory run_simulate_stage(const SceneBundle& bundle, const std::filesystem::path& run_dir, RunManifest& m,
                              const StageObserver& observe = {});
std::vector<FramePack> run_render_stage(const SceneBundle& bundle, const Trajectory& trajectory,
                                        const std::filesystem::path& run_dir, RunManifest& m, int threads = 0,
                                        const StageObserver& observe = {});

struct RefineOutput {
    LatentVideo guidance;
    LatentVideo refined;
    std::vector<RefineStep> trace;
};
/// Encodes frames to pixel latents, refines them through the configured
/// denoiser and decodes the result.
RefineOutput refine_frames(std::span<const FramePack> frames, const RunOptions& options);
RefineOutput run_refine_stage(std::span<const FramePack> frames, const RunOptions& options,
                              const std::filesystem::path& run_dir, RunManifest& m,
                              const StageObserver& observe = {});
/// Rebuilds relit frames and coverage from a rendered run directory.
std::vector<FramePack> load_rendered_frames(const std::filesystem::path& run_dir, const RunManifest& m);

/// Snapshot of the effective settings for the manifest.
nlohmann::json config_snapshot(const SceneBundle& bundle, const RunOptions& options);

/// simulate -> render -> (refine) with the manifest written last. `bundle`
/// must already have the options applied.
RunManifest run_pipeline(const SceneBundle& bundle, const RunOptions& options, const std::filesystem::path& run_dir,
                         std::string run_id, std::string fingerprint, const StageObserver& observe = {});

}  // namespace imdyn
