#pragma once

#include <vector>

#include "imdyn/scene.hpp"

namespace imdyn::synthetic {

/// Pixel-center inclusion disk.
Mask disk(int width, int height, Vec2 center, double radius);
Mask rectangle(int width, int height, int x0, int y0, int w, int h);
/// Square of side `side` with corners rounded by `corner_radius` (<= side/2).
Mask rounded_square(int width, int height, Vec2 center, double side, double corner_radius);

enum class NormalShape { kFlat, kSphere };

struct ObjectSpec {
    int id = 1;
    Mask mask;
    Rgb8 albedo{200, 80, 60};
    NormalShape normals = NormalShape::kSphere;
    bool with_intrinsics = true;
    double mass = 100.0;
    double friction = 0.5;
    double elasticity = 0.5;
    Vec2 initial_velocity{};
    std::optional<Vec2> applied_force;
    std::optional<double> applied_torque;
};

/// Builds a self-consistent bundle: the input image equals the background
/// with every object painted as quantized albedo * Lambertian shade, so
/// relighting frame 0 reproduces the input image.
SceneBundle make_bundle(int width, int height, std::vector<ObjectSpec> objects,
                        std::vector<BoundarySegment> boundaries, DirectionalLight light);

/// Two-object demo: a ball and a block on a floor between two walls, 512x512.
SceneBundle demo_bundle();

}  // namespace imdyn::synthetic
