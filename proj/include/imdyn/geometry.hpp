#pragma once

#include <cmath>
#include <numbers>

namespace imdyn {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
/// z-component of the 3D cross product.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
/// omega x r for a scalar angular velocity about +z.
constexpr Vec2 cross(double w, Vec2 r) { return {-w * r.y, w * r.x}; }
/// Perpendicular (rotated +90 degrees in x-right/y-down coordinates).
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline double length(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr double length_squared(Vec2 a) { return dot(a, a); }

inline Vec2 normalized(Vec2 a) {
    const double len = length(a);
    return len > 0.0 ? Vec2{a.x / len, a.y / len} : Vec2{};
}

struct Rotation {
    double c = 1.0;
    double s = 0.0;

    static Rotation from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }
    constexpr Vec2 apply(Vec2 v) const { return {c * v.x - s * v.y, s * v.x + c * v.y}; }
    constexpr Vec2 apply_inverse(Vec2 v) const { return {c * v.x + s * v.y, -s * v.x + c * v.y}; }
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::remainder(theta, two_pi);
    if (r <= -std::numbers::pi) r += two_pi;
    return r;
}

/// 2x3 affine map p -> A p + b.
struct Affine2 {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    static constexpr Affine2 identity() { return {}; }
    static constexpr Affine2 translation(Vec2 t) { return {1.0, 0.0, t.x, 0.0, 1.0, t.y}; }
    static constexpr Affine2 scale(double sx, double sy) { return {sx, 0.0, 0.0, 0.0, sy, 0.0}; }
    /// Rotation by theta about `center` followed by a move of the center to `to`.
    static Affine2 rigid(double theta, Vec2 center, Vec2 to) {
        const Rotation r = Rotation::from_angle(theta);
        const Vec2 rc = r.apply(center);
        return {r.c, -r.s, to.x - rc.x, r.s, r.c, to.y - rc.y};
    }

    constexpr Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
    constexpr Vec2 apply_linear(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    constexpr double determinant() const { return a * d - b * c; }
    bool is_identity() const { return a == 1.0 && b == 0.0 && c == 0.0 && d == 1.0 && tx == 0.0 && ty == 0.0; }

    /// Throws SingularTransform when |det| is below `eps`.
    Affine2 inverse(double eps = 1e-12) const;

    friend constexpr bool operator==(const Affine2&, const Affine2&) = default;
};

/// (lhs * rhs)(p) = lhs(rhs(p)).
constexpr Affine2 operator*(const Affine2& l, const Affine2& r) {
    return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d, l.a * r.tx + l.b * r.ty + l.tx,
            l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d, l.c * r.tx + l.d * r.ty + l.ty};
}

}  // namespace imdyn
