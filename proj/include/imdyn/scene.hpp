#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imdyn/geometry.hpp"
#include "imdyn/raster.hpp"

namespace imdyn {

inline constexpr double kDefaultGravity = 980.0;  // cm/s^2, +y is down
inline constexpr int kDefaultSteps = 120;
inline constexpr int kDefaultFrames = 16;
inline constexpr int kDefaultResolution = 512;

struct SceneObject {
    int id = 0;
    Mask mask;
    std::optional<ImageRgb8> albedo;  // full-frame, read where mask is set
    std::optional<ImageRgb8> normal;  // full-frame, 8-bit encoded unit vectors
    double mass = 1.0;                // g
    double friction = 0.0;            // Coulomb coefficient
    double elasticity = 0.0;          // restitution in [0, 1]
    Vec2 initial_velocity{};          // cm/s
    double initial_angular_velocity = 0.0;  // rad/s
    std::optional<Vec2> applied_force;      // dyn
    std::optional<Vec2> application_point;  // image px; defaults to center of mass
    std::optional<double> applied_torque;   // dyn*cm
    double force_duration = 0.0;            // s; 0 applies the force over the first step
    std::optional<int> z_order;             // defaults to list position

    bool relightable() const { return albedo.has_value() && normal.has_value(); }
};

enum class BoundaryOrientation { kHorizontal, kVertical, kFree };

struct BoundarySegment {
    Vec2 p0{};
    Vec2 p1{};
    BoundaryOrientation orientation = BoundaryOrientation::kFree;
    double friction = 0.5;
    double elasticity = 0.5;
};

struct DirectionalLight {
    std::array<double, 3> direction{0.0, 0.0, 1.0};
    double intensity = 1.0;
    double ambient = 0.0;
};

struct SimConfig {
    double dt = 1.0 / 60.0;
    int steps = kDefaultSteps;
    Vec2 gravity{0.0, kDefaultGravity};
    double pixels_per_cm = 1.0;
    int substeps = 4;
    // contact solver
    int velocity_iterations = 10;
    double baumgarte = 0.2;
    double slop = 0.5;
    double rolling_resistance = 0.01;
    double restitution_threshold = 1.0;  // cm/s; slower approaches do not bounce
};

struct RenderConfig {
    int num_frames = kDefaultFrames;
    int resolution_width = kDefaultResolution;
    int resolution_height = kDefaultResolution;
    bool emit_flow = true;
    bool emit_intermediates = false;
};

struct SceneBundle {
    int width = 0;
    int height = 0;
    ImageRgb8 image;
    ImageRgb8 background;
    std::vector<SceneObject> objects;
    std::vector<BoundarySegment> boundaries;
    DirectionalLight light;
    SimConfig sim;
    RenderConfig render;

    const SceneObject* find_object(int id) const;
    /// Effective z order for object index `i` (explicit z_order or list position).
    int z_order(std::size_t i) const;
};

/// Loads a bundle from a directory holding `manifest.json` or from an
/// uncompressed tar archive with the same layout. The result is validated.
SceneBundle load_bundle(const std::filesystem::path& path);

/// Writes `manifest.json` and rasters in the canonical layout:
/// image.png, background.png, objects/<id>/{mask,albedo,normal}.png.
void save_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

/// Canonical manifest.json text for `bundle` (what save_bundle writes).
std::string manifest_text(const SceneBundle& bundle);

/// Throws ValidationError / ShapeError on the first violated invariant.
void validate(const SceneBundle& bundle);

/// Union of all object masks.
Mask union_foreground(const SceneBundle& bundle);

std::string to_string(BoundaryOrientation o);
BoundaryOrientation parse_orientation(const std::string& s);

}  // namespace imdyn
