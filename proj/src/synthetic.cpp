#include "imdyn/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "imdyn/primitive.hpp"

namespace imdyn::synthetic {
namespace {

float lambert(const Vec3f& n, const DirectionalLight& light) {
    const double ndotl = n[0] * light.direction[0] + n[1] * light.direction[1] + n[2] * light.direction[2];
    return static_cast<float>(light.ambient + light.intensity * std::max(0.0, ndotl));
}

}  // namespace

Mask disk(int width, int height, Vec2 center, double radius) {
    return rasterize_circle({center, radius}, width, height);
}

Mask rectangle(int width, int height, int x0, int y0, int w, int h) {
    Mask m(width, height);
    for (int y = std::max(0, y0); y < std::min(height, y0 + h); ++y)
        for (int x = std::max(0, x0); x < std::min(width, x0 + w); ++x) m(x, y) = 1;
    return m;
}

Mask rounded_square(int width, int height, Vec2 center, double side, double corner_radius) {
    Mask m(width, height);
    const double half = side / 2.0;
    const double inner = half - corner_radius;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = std::abs(x + 0.5 - center.x), dy = std::abs(y + 0.5 - center.y);
            if (dx > half || dy > half) continue;
            const double ex = std::max(0.0, dx - inner), ey = std::max(0.0, dy - inner);
            if (ex * ex + ey * ey <= corner_radius * corner_radius) m(x, y) = 1;
        }
    }
    return m;
}

SceneBundle make_bundle(int width, int height, std::vector<ObjectSpec> objects, std::vector<BoundarySegment> boundaries,
                        DirectionalLight light) {
    SceneBundle b;
    b.width = width;
    b.height = height;
    b.light = light;
    b.boundaries = std::move(boundaries);
    b.background = ImageRgb8(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            b.background(x, y) = {static_cast<std::uint8_t>(40 + (150 * y) / std::max(1, height)),
                                  static_cast<std::uint8_t>(90 + (100 * x) / std::max(1, width)),
                                  static_cast<std::uint8_t>(160)};
        }
    }
    b.image = b.background;

    for (auto& spec : objects) {
        SceneObject o;
        o.id = spec.id;
        o.mass = spec.mass;
        o.friction = spec.friction;
        o.elasticity = spec.elasticity;
        o.initial_velocity = spec.initial_velocity;
        o.applied_force = spec.applied_force;
        o.applied_torque = spec.applied_torque;

        const Circle fit = fit_circle(spec.mask);
        ImageRgb8 albedo(width, height);
        ImageRgb8 normal(width, height);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                if (!spec.mask(x, y)) continue;
                albedo(x, y) = spec.albedo;
                Vec3f n{0.0f, 0.0f, 1.0f};
                if (spec.normals == NormalShape::kSphere) {
                    const double dx = (x + 0.5 - fit.center.x) / (fit.radius * 1.05);
                    const double dy = (y + 0.5 - fit.center.y) / (fit.radius * 1.05);
                    const double z2 = std::max(0.0, 1.0 - dx * dx - dy * dy);
                    const double len = std::sqrt(dx * dx + dy * dy + z2);
                    n = {static_cast<float>(dx / len), static_cast<float>(dy / len), static_cast<float>(std::sqrt(z2) / len)};
                }
                normal(x, y) = {quantize_unit((n[0] + 1.0f) * 0.5f), quantize_unit((n[1] + 1.0f) * 0.5f),
                                quantize_unit((n[2] + 1.0f) * 0.5f)};
            }
        }
        const NormalMap decoded = decode_normals(normal);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                if (!spec.mask(x, y)) continue;
                if (spec.with_intrinsics) {
                    const float shade = lambert(decoded(x, y), light);
                    for (int c = 0; c < 3; ++c)
                        b.image(x, y)[c] = quantize_unit(static_cast<float>(spec.albedo[c]) / 255.0f * shade);
                } else {
                    b.image(x, y) = spec.albedo;
                }
            }
        }
        o.mask = std::move(spec.mask);
        if (spec.with_intrinsics) {
            o.albedo = std::move(albedo);
            o.normal = std::move(normal);
        }
        b.objects.push_back(std::move(o));
    }
    validate(b);
    return b;
}

SceneBundle demo_bundle() {
    constexpr int kSize = 512;
    std::vector<ObjectSpec> objects;
    ObjectSpec ball;
    ball.id = 1;
    ball.mask = disk(kSize, kSize, {150.0, 300.0}, 40.0);
    ball.albedo = {220, 70, 60};
    ball.mass = 500.0;
    ball.friction = 0.5;
    ball.elasticity = 0.8;
    ball.initial_velocity = {180.0, -150.0};
    objects.push_back(std::move(ball));

    ObjectSpec block;
    block.id = 2;
    block.mask = rectangle(kSize, kSize, 320, 350, 90, 60);
    block.albedo = {70, 160, 90};
    block.normals = NormalShape::kFlat;
    block.mass = 800.0;
    block.friction = 0.6;
    block.elasticity = 0.2;
    objects.push_back(std::move(block));

    std::vector<BoundarySegment> bounds{
        {{0.0, 440.0}, {512.0, 440.0}, BoundaryOrientation::kHorizontal, 0.6, 0.5},
        {{4.0, 0.0}, {4.0, 512.0}, BoundaryOrientation::kVertical, 0.3, 0.6},
        {{508.0, 0.0}, {508.0, 512.0}, BoundaryOrientation::kVertical, 0.3, 0.6},
    };
    DirectionalLight light;
    light.direction = {-0.4, -0.5, std::sqrt(1.0 - 0.16 - 0.25)};
    light.intensity = 0.8;
    light.ambient = 0.25;
    return make_bundle(kSize, kSize, std::move(objects), std::move(bounds), light);
}

}  // namespace imdyn::synthetic
