#pragma once

#include <optional>
#include <vector>

#include "imdyn/geometry.hpp"

namespace imdyn {

/// Convex polygon in world coordinates with outward edge normals. Two
/// vertices describe a zero-thickness segment whose edges face both ways.
struct ConvexShape {
    std::vector<Vec2> vertices;
    std::vector<Vec2> normals;  // normals[i] belongs to edge (i, i+1)

    static ConvexShape from_vertices(std::vector<Vec2> vertices);
    static ConvexShape segment(Vec2 p0, Vec2 p1);
};

struct ManifoldPoint {
    Vec2 point{};
    double penetration = 0.0;  // >= 0
};

/// Contact set between two convex shapes; `normal` points from the first
/// argument towards the second.
struct Manifold {
    Vec2 normal{};
    std::vector<ManifoldPoint> points;
};

std::optional<Manifold> collide_circles(Vec2 center_a, double radius_a, Vec2 center_b, double radius_b);
std::optional<Manifold> collide_shape_circle(const ConvexShape& shape, Vec2 center, double radius);
/// Separating-axis test over both shapes' face normals followed by
/// reference-face clipping; produces up to two points.
std::optional<Manifold> collide_shapes(const ConvexShape& a, const ConvexShape& b);

}  // namespace imdyn
