#pragma once

#include <vector>

#include "imdyn/geometry.hpp"
#include "imdyn/raster.hpp"

namespace imdyn {

/// Coverage needed for a circle fit to be accepted over a polygon.
inline constexpr double kCircleIouThreshold = 0.85;
/// Coverage every polygon fit must reach against its mask.
inline constexpr double kPolygonIouFloor = 0.95;
inline constexpr double kDefaultContourTolerance = 2.0;  // px

struct Circle {
    Vec2 center{};
    double radius = 0.0;
};

/// Convex polygon with positive signed area (counter-clockwise in a y-up frame,
/// clockwise on screen).
using ConvexPiece = std::vector<Vec2>;

struct Primitive {
    enum class Kind { kCircle, kPolygon };

    Kind kind = Kind::kCircle;
    Circle circle;
    /// Simplified outer contour; empty for circles.
    std::vector<Vec2> outline;
    /// Convex pieces whose union is `outline`; rigidly welded into one body.
    std::vector<ConvexPiece> pieces;

    bool is_circle() const { return kind == Kind::kCircle; }
    static Primitive make_circle(Vec2 center, double radius);
    static Primitive make_polygon(std::vector<Vec2> outline, std::vector<ConvexPiece> pieces);
};

struct MassProperties {
    double mass = 0.0;     // g
    double inertia = 0.0;  // g*cm^2 about the center of mass
    Vec2 center_of_mass{};
};

/// |a & b| / |a | b|. Throws DegenerateMask when both masks are empty.
double mask_iou(const Mask& a, const Mask& b);

/// Equal-area fit: center at the mask centroid (pixel centers), radius sqrt(area / pi).
Circle fit_circle(const Mask& mask);

/// Number of 4-connected components.
std::size_t count_components(const Mask& mask);

/// Outer boundary of the single 4-connected component, traced along pixel
/// edges. Vertices lie on pixel corners, collinear runs are merged, and the
/// result has positive signed area. Interior holes are ignored.
std::vector<Vec2> trace_outer_contour(const Mask& mask);

/// Douglas-Peucker simplification of a closed polygon; every removed vertex
/// lies within `tolerance` of the retained outline.
std::vector<Vec2> simplify_closed(const std::vector<Vec2>& polygon, double tolerance);

/// Splits a simple polygon with positive area into convex pieces (ear clipping
/// followed by Hertel-Mehlhorn merging).
std::vector<ConvexPiece> convex_decompose(const std::vector<Vec2>& polygon);

double signed_area(const std::vector<Vec2>& polygon);
bool is_simple(const std::vector<Vec2>& polygon);

/// Traces, simplifies and decomposes the mask's contour. The tolerance is
/// halved until the result is simple and covers the mask with IoU >= 0.95.
/// Throws DegenerateMask for empty masks, MultiComponentMask for split ones.
Primitive extract_polygon(const Mask& mask, double tolerance = kDefaultContourTolerance);

/// IoU between the mask and its rasterized equal-area circle.
double circle_fit_iou(const Mask& mask);

/// Circle when its fit reaches IoU >= 0.85 against the mask, polygon otherwise.
Primitive choose_primitive(const Mask& mask, double polygon_tolerance = kDefaultContourTolerance);

/// Uniform-density mass properties. Circles use I = M r^2 / 2; polygons
/// integrate the polar second moment over all pieces about the joint centroid.
MassProperties mass_properties(const Primitive& primitive, double mass);

/// Pixel-center inclusion rasterization.
Mask rasterize(const Primitive& primitive, int width, int height);
Mask rasterize_circle(const Circle& circle, int width, int height);

Primitive translated(const Primitive& primitive, Vec2 offset);

/// Mask in gray with the primitive's edges drawn in pink, for visual fixtures.
ImageRgb8 primitive_overlay(const Mask& mask, const Primitive& primitive);

}  // namespace imdyn
