#include "imdyn/collision.hpp"

#include <array>
#include <limits>

namespace imdyn {
namespace {

struct AxisResult {
    double separation = -std::numeric_limits<double>::infinity();
    std::size_t edge = 0;
};

/// Largest separation of `b` along the face normals of `a`.
AxisResult max_separation(const ConvexShape& a, const ConvexShape& b) {
    AxisResult best;
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        const Vec2 n = a.normals[i];
        const Vec2 v = a.vertices[i];
        double si = std::numeric_limits<double>::infinity();
        for (const Vec2& w : b.vertices) si = std::min(si, dot(n, w - v));
        if (si > best.separation) {
            best.separation = si;
            best.edge = i;
        }
    }
    return best;
}

/// Sutherland-Hodgman clip of a segment against the half plane dot(n, p) <= offset.
std::size_t clip_segment(const std::array<Vec2, 2>& in, std::array<Vec2, 2>& out, Vec2 n, double offset) {
    std::size_t count = 0;
    const double d0 = dot(n, in[0]) - offset;
    const double d1 = dot(n, in[1]) - offset;
    if (d0 <= 0.0) out[count++] = in[0];
    if (d1 <= 0.0) out[count++] = in[1];
    if (d0 * d1 < 0.0 && count < 2) {
        const double t = d0 / (d0 - d1);
        out[count++] = in[0] + t * (in[1] - in[0]);
    }
    return count;
}

}  // namespace

ConvexShape ConvexShape::from_vertices(std::vector<Vec2> vertices) {
    ConvexShape s;
    s.vertices = std::move(vertices);
    const std::size_t n = s.vertices.size();
    s.normals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 e = s.vertices[(i + 1) % n] - s.vertices[i];
        s.normals[i] = normalized(Vec2{e.y, -e.x});
    }
    return s;
}

ConvexShape ConvexShape::segment(Vec2 p0, Vec2 p1) { return from_vertices({p0, p1}); }

std::optional<Manifold> collide_circles(Vec2 ca, double ra, Vec2 cb, double rb) {
    const Vec2 d = cb - ca;
    const double dist2 = length_squared(d);
    const double rsum = ra + rb;
    if (dist2 > rsum * rsum) return std::nullopt;
    const double dist = std::sqrt(dist2);
    const Vec2 n = dist > 0.0 ? (1.0 / dist) * d : Vec2{0.0, 1.0};
    const double pen = rsum - dist;
    Manifold m;
    m.normal = n;
    m.points.push_back({ca + (ra - 0.5 * pen) * n, pen});
    return m;
}

std::optional<Manifold> collide_shape_circle(const ConvexShape& shape, Vec2 c, double r) {
    const std::size_t n = shape.vertices.size();
    double separation = -std::numeric_limits<double>::infinity();
    std::size_t edge = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = dot(shape.normals[i], c - shape.vertices[i]);
        if (s > r) return std::nullopt;
        if (s > separation) {
            separation = s;
            edge = i;
        }
    }
    const Vec2 v1 = shape.vertices[edge];
    const Vec2 v2 = shape.vertices[(edge + 1) % n];
    const Vec2 face_n = shape.normals[edge];

    Manifold m;
    if (separation <= 0.0) {
        m.normal = face_n;
        m.points.push_back({c - separation * face_n, r - separation});
        return m;
    }
    const double u1 = dot(c - v1, v2 - v1);
    const double u2 = dot(c - v2, v1 - v2);
    auto vertex_contact = [&](Vec2 v) -> std::optional<Manifold> {
        const Vec2 d = c - v;
        const double dist = length(d);
        if (dist > r) return std::nullopt;
        m.normal = dist > 0.0 ? (1.0 / dist) * d : face_n;
        m.points.push_back({v, r - dist});
        return m;
    };
    if (u1 <= 0.0) return vertex_contact(v1);
    if (u2 <= 0.0) return vertex_contact(v2);
    m.normal = face_n;
    m.points.push_back({c - separation * face_n, r - separation});
    return m;
}

std::optional<Manifold> collide_shapes(const ConvexShape& a, const ConvexShape& b) {
    const AxisResult sa = max_separation(a, b);
    if (sa.separation > 0.0) return std::nullopt;
    const AxisResult sb = max_separation(b, a);
    if (sb.separation > 0.0) return std::nullopt;

    constexpr double kTol = 1e-3;  // prefer the first shape's face on near ties
    const bool flip = sb.separation > sa.separation + kTol;
    const ConvexShape& ref = flip ? b : a;
    const ConvexShape& inc = flip ? a : b;
    const std::size_t ref_edge = flip ? sb.edge : sa.edge;

    const Vec2 ref_n = ref.normals[ref_edge];
    std::size_t inc_edge = 0;
    double min_dot = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inc.normals.size(); ++i) {
        const double d = dot(ref_n, inc.normals[i]);
        if (d < min_dot) {
            min_dot = d;
            inc_edge = i;
        }
    }
    const std::array<Vec2, 2> incident{inc.vertices[inc_edge], inc.vertices[(inc_edge + 1) % inc.vertices.size()]};

    const Vec2 v11 = ref.vertices[ref_edge];
    const Vec2 v12 = ref.vertices[(ref_edge + 1) % ref.vertices.size()];
    const Vec2 tangent = normalized(v12 - v11);

    std::array<Vec2, 2> clip1{}, clip2{};
    if (clip_segment(incident, clip1, -tangent, -dot(tangent, v11)) < 2) return std::nullopt;
    if (clip_segment(clip1, clip2, tangent, dot(tangent, v12)) < 2) return std::nullopt;

    const double front = dot(ref_n, v11);
    Manifold m;
    m.normal = flip ? -ref_n : ref_n;
    for (const Vec2& p : clip2) {
        const double sep = dot(ref_n, p) - front;
        if (sep <= 0.0) m.points.push_back({p - (0.5 * sep) * ref_n, -sep});
    }
    if (m.points.empty()) return std::nullopt;
    return m;
}

}  // namespace imdyn
