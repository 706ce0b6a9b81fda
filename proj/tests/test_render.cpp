#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "imdyn/render.hpp"

using namespace imdyn;
namespace syn = imdyn::synthetic;

namespace {

Layer square_layer(int w, int h, int x0, int y0, int side, Rgbf color, bool intrinsics = false) {
    Layer l;
    l.rgba = ImageRgbaf(w, h);
    if (intrinsics) {
        l.albedo = ImageRgbf(w, h);
        l.normal = NormalMap(w, h);
    }
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) {
            l.rgba(x, y) = {color[0], color[1], color[2], 1.0f};
            if (intrinsics) {
                l.albedo(x, y) = color;
                l.normal(x, y) = {0.0f, 0.0f, 1.0f};
            }
        }
    return l;
}

Layer random_layer(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f), s(-1.0f, 1.0f);
    Layer l;
    l.rgba = ImageRgbaf(w, h);
    l.albedo = ImageRgbf(w, h);
    l.normal = NormalMap(w, h);
    for (std::size_t p = 0; p < l.rgba.size(); ++p) {
        const float a = u(rng);
        l.rgba.pixels()[p] = {a * u(rng), a * u(rng), a * u(rng), a};
        l.albedo.pixels()[p] = {u(rng), u(rng), u(rng)};
        Vec3f n{s(rng), s(rng), u(rng) + 0.1f};
        const float len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        l.normal.pixels()[p] = {n[0] / len, n[1] / len, n[2] / len};
    }
    return l;
}

ImageRgbf solid(int w, int h, Rgbf c) { return ImageRgbf(w, h, c); }

}  // namespace

TEST_CASE("warp_layer identities") {
    const Layer l = random_layer(40, 30, 1);
    const Layer same = warp_layer(l, Affine2::identity());
    CHECK(same.rgba == l.rgba);
    CHECK(same.albedo == l.albedo);
    CHECK(same.normal == l.normal);

    const Layer sq = square_layer(64, 64, 10, 20, 16, {0.2f, 0.4f, 0.6f});
    const Layer moved = warp_layer(sq, Affine2::translation({5, 0}));
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool inside = x >= 15 && x < 31 && y >= 20 && y < 36;
            const Rgbaf expect = inside ? Rgbaf{0.2f, 0.4f, 0.6f, 1.0f} : Rgbaf{};
            if (moved.rgba(x, y) != expect) FAIL("pixel " << x << "," << y);
        }

    CHECK_THROWS_AS(warp_layer(sq, Affine2::scale(0.0, 1.0)), SingularTransform);
}

TEST_CASE("warp_layer rotates normals in-plane") {
    Layer l = square_layer(41, 41, 0, 0, 41, {0.5f, 0.5f, 0.5f}, true);
    for (auto& n : l.normal.pixels()) n = {1.0f, 0.0f, 0.0f};
    const Vec2 c{20.5, 20.5};
    const Layer r = warp_layer(l, Affine2::rigid(std::numbers::pi / 2, c, c));
    const Vec3f n = r.normal(20, 20);
    CHECK(n[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(n[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(n[2] == doctest::Approx(0.0).epsilon(1e-6));

    // Tilted normal keeps its z component and stays unit length.
    for (auto& v : l.normal.pixels()) v = {0.6f, 0.0f, 0.8f};
    const Layer t = warp_layer(l, Affine2::rigid(0.4, c, c));
    const Vec3f m = t.normal(20, 20);
    CHECK(m[0] == doctest::Approx(0.6 * std::cos(0.4)).epsilon(1e-5));
    CHECK(m[1] == doctest::Approx(0.6 * std::sin(0.4)).epsilon(1e-5));
    CHECK(m[2] == doctest::Approx(0.8).epsilon(1e-5));
}

TEST_CASE("warp of warp matches the composed warp") {
    // Smooth content so bilinear resampling commutes within quantization.
    const int w = 96, h = 96;
    Layer l;
    l.rgba = ImageRgbaf(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float r = 0.5f + 0.4f * std::sin(x * 0.07f), g = 0.5f + 0.4f * std::cos(y * 0.05f);
            l.rgba(x, y) = {r, g, 0.5f * (r + g), 1.0f};
        }
    const Vec2 c{48, 48};
    const Affine2 t1 = Affine2::rigid(0.3, c, c + Vec2{3.2, -1.7});
    const Affine2 t2 = Affine2::rigid(-0.12, c, c + Vec2{-2.1, 0.6});
    const Layer twice = warp_layer(warp_layer(l, t1), t2);
    const Layer once = warp_layer(l, t2 * t1);
    int checked = 0;
    for (int y = 24; y < 72; ++y)
        for (int x = 24; x < 72; ++x) {
            for (int ch = 0; ch < 4; ++ch) CHECK(std::abs(twice.rgba(x, y)[ch] - once.rgba(x, y)[ch]) <= 1.0f / 255.0f);
            ++checked;
        }
    CHECK(checked == 48 * 48);
}

TEST_CASE("composite_frame") {
    const ImageRgbf bg = solid(16, 16, {0.1f, 0.2f, 0.3f});
    CHECK(composite_frame(bg, {}) == bg);

    const std::vector<Layer> full{square_layer(16, 16, 0, 0, 16, {0.9f, 0.8f, 0.7f})};
    const ImageRgbf covered = composite_frame(bg, full);
    CHECK(covered == solid(16, 16, {0.9f, 0.8f, 0.7f}));

    SUBCASE("over-operator oracle with z_order") {
        Layer lo = random_layer(16, 16, 2), hi = random_layer(16, 16, 3);
        lo.z_order = 5;
        hi.z_order = 9;
        // Listed top-first to check that z_order, not list order, decides.
        const std::vector<Layer> layers{hi, lo};
        const ImageRgbf out = composite_frame(bg, layers);
        for (std::size_t p = 0; p < out.size(); ++p) {
            const Rgbaf a = lo.rgba.pixels()[p], b = hi.rgba.pixels()[p];
            for (int ch = 0; ch < 3; ++ch) {
                const double under = a[ch] + (1.0 - a[3]) * bg.pixels()[p][ch];
                const double expect = b[ch] + (1.0 - b[3]) * under;
                CHECK(out.pixels()[p][ch] == doctest::Approx(expect).epsilon(1e-6));
            }
        }
        Layer opaque_lo = square_layer(16, 16, 0, 0, 16, {1, 0, 0}), opaque_hi = square_layer(16, 16, 4, 4, 4, {0, 1, 0});
        opaque_lo.z_order = 1;
        opaque_hi.z_order = 2;
        const ImageRgbf two = composite_frame(bg, std::vector<Layer>{opaque_hi, opaque_lo});
        CHECK(two(5, 5) == Rgbf{0, 1, 0});
        CHECK(two(0, 0) == Rgbf{1, 0, 0});
    }
    SUBCASE("two-stage compositing equals one stage") {
        std::vector<Layer> layers;
        for (unsigned k = 0; k < 5; ++k) {
            layers.push_back(random_layer(16, 16, 10 + k));
            layers.back().z_order = static_cast<int>(k);
        }
        const ImageRgbf one = composite_frame(bg, layers);
        const ImageRgbf staged = composite_frame(composite_frame(bg, std::span(layers).first(2)), std::span(layers).subspan(2));
        CHECK(one == staged);
    }
    CHECK_THROWS_AS(composite_frame(bg, std::vector<Layer>{square_layer(8, 8, 0, 0, 2, {})}), ShapeError);
}

TEST_CASE("relight Lambert examples") {
    const ImageRgbf frame = solid(4, 4, {0.3f, 0.3f, 0.3f});
    const ImageRgbf albedo = solid(4, 4, {0.8f, 0.5f, 0.2f});
    const AlphaMap alpha(4, 4, 1.0f);
    DirectionalLight light{{0, 0, 1}, 1.0, 0.0};

    const ImageRgbf lit = relight(frame, albedo, NormalMap(4, 4, Vec3f{0, 0, 1}), alpha, light);
    for (const auto& px : lit.pixels()) CHECK(px == Rgbf{0.8f, 0.5f, 0.2f});

    light.ambient = 0.25;
    const ImageRgbf side = relight(frame, albedo, NormalMap(4, 4, Vec3f{1, 0, 0}), alpha, light);
    for (const auto& px : side.pixels()) {
        CHECK(px[0] == doctest::Approx(0.25 * 0.8));
        CHECK(px[1] == doctest::Approx(0.25 * 0.5));
        CHECK(px[2] == doctest::Approx(0.25 * 0.2));
    }

    // Background passes through.
    const ImageRgbf bg = relight(frame, albedo, NormalMap(4, 4, Vec3f{0, 0, 1}), AlphaMap(4, 4, 0.0f), light);
    CHECK(bg == frame);

    // Ambient-only light on Â = X̂ is exactly the identity.
    const ImageRgbf same = relight(albedo, albedo, NormalMap(4, 4, Vec3f{0, 1, 0}), AlphaMap(4, 4, 0.6f),
                                   DirectionalLight{{0, 0, 1}, 0.0, 1.0});
    CHECK(same == albedo);
}

TEST_CASE("relight follows the rotated normal's cosine") {
    // Uniform normal tilted by phi toward +x, lit from +x; rotating the object
    // by theta scales the Lambert term by cos(theta).
    const double phi = 0.7;
    Layer l = square_layer(33, 33, 0, 0, 33, {0.9f, 0.9f, 0.9f}, true);
    for (auto& n : l.normal.pixels()) n = {static_cast<float>(std::sin(phi)), 0.0f, static_cast<float>(std::cos(phi))};
    const DirectionalLight light{{1, 0, 0}, 1.0, 0.0};
    const Vec2 c{16.5, 16.5};
    for (double theta : {0.0, 0.3, 0.9, 1.4}) {
        const std::vector<Layer> layers{warp_layer(l, Affine2::rigid(theta, c, c))};
        const IntrinsicComposite ic = composite_intrinsics(33, 33, layers);
        const ImageRgbf out = relight(composite_frame(solid(33, 33, {}), layers), ic.albedo, ic.normal, ic.alpha, light);
        CHECK(out(16, 16)[0] == doctest::Approx(0.9 * std::sin(phi) * std::cos(theta)).epsilon(1e-5));
    }
}

TEST_CASE("flow_field is analytic") {
    Mask m(64, 64);
    for (int y = 30; y < 70 && y < 64; ++y)
        for (int x = 30; x < 64; ++x) m(x, y) = 1;
    const Affine2 id = Affine2::identity();

    CHECK(flow_field(m, id, id) == FlowField(64, 64));

    const FlowField shift = flow_field(m, id, Affine2::translation({5, 0}));
    CHECK(shift(40, 40) == std::array<float, 2>{5, 0});
    CHECK(shift(10, 10) == std::array<float, 2>{0, 0});

    // Rotation by pi/2 about c = (50, 50); flow(p) = (R - I)(p - c).
    const Vec2 c{50, 50};
    const FlowField rot = flow_field(m, id, Affine2::rigid(std::numbers::pi / 2, c, c));
    struct Case {
        int x, y;
        float u, v;
    };
    // p = (60.5, 50.5): p - c = (10.5, 0.5) -> R(p - c) = (-0.5, 10.5) -> flow (-11, 10).
    // p = (50.5, 50.5): (0.5, 0.5) -> (-0.5, 0.5) -> (-1, 0).
    // p = (40.5, 35.5): (-9.5, -14.5) -> (14.5, -9.5) -> (24, 5).
    // p = (55.5, 60.5): (5.5, 10.5) -> (-10.5, 5.5) -> (-16, -5).
    for (const Case& k : {Case{60, 50, -11, 10}, Case{50, 50, -1, 0}, Case{40, 35, 24, 5}, Case{55, 60, -16, -5}}) {
        CHECK(rot(k.x, k.y)[0] == doctest::Approx(k.u).epsilon(1e-6));
        CHECK(rot(k.x, k.y)[1] == doctest::Approx(k.v).epsilon(1e-6));
    }

    // Membership follows the mask at frame t.
    const FlowField moved = flow_field(m, Affine2::translation({-30, -30}), Affine2::translation({-28, -30}));
    CHECK(moved(5, 5) == std::array<float, 2>{2, 0});
    CHECK(moved(40, 40) == std::array<float, 2>{0, 0});

    CHECK_THROWS_AS(flow_field(m, Affine2::scale(0, 0), id), SingularTransform);
    CHECK_THROWS_AS(flow_field(m, id, Affine2::scale(0, 0)), SingularTransform);
}

TEST_CASE("scene_flow picks the top-most object") {
    Mask a(32, 32, 1), b(32, 32);
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) b(x, y) = 1;
    const std::vector<FlowObject> objs{{&b, Affine2::identity(), Affine2::translation({0, 3}), 2},
                                       {&a, Affine2::identity(), Affine2::translation({1, 0}), 1}};
    const FlowField f = scene_flow(objs, 32, 32);
    CHECK(f(10, 10) == std::array<float, 2>{0, 3});
    CHECK(f(2, 2) == std::array<float, 2>{1, 0});
}

TEST_CASE("render_sequence") {
    SceneBundle bundle = syn::demo_bundle();
    const auto prims = fit_primitives(bundle);

    SUBCASE("default config and frame-0 fidelity") {
        const Trajectory traj = simulate(bundle, prims);
        const auto samples = sample_frames(traj, bundle.render.num_frames);
        const auto frames = render_sequence(bundle, samples);
        REQUIRE(frames.size() == 16);
        int flows = 0;
        for (const auto& f : frames) {
            flows += f.flow.has_value();
            CHECK(f.relit.width() == 512);
            if (f.flow)
                CHECK(std::all_of(f.flow->pixels().begin(), f.flow->pixels().end(),
                                  [](const auto& v) { return std::isfinite(v[0]) && std::isfinite(v[1]); }));
        }
        CHECK(flows == 15);
        CHECK_FALSE(frames.back().flow.has_value());

        const ImageRgbf input = to_float(bundle.image);
        float worst = 0.0f;
        for (std::size_t p = 0; p < input.size(); ++p)
            for (int ch = 0; ch < 3; ++ch)
                worst = std::max(worst, std::abs(frames[0].relit.pixels()[p][ch] - input.pixels()[p][ch]));
        CHECK(worst <= 2.0f / 255.0f);

        // Relit and composited differ only under the foreground.
        for (const auto& f : frames) {
            std::size_t leaks = 0;
            for (std::size_t p = 0; p < f.relit.size(); ++p)
                leaks += f.relit_alpha.pixels()[p] == 0.0f && f.relit.pixels()[p] != f.composited.pixels()[p];
            CHECK(leaks == 0);
        }
        std::size_t differing = 0;
        for (std::size_t p = 0; p < frames[5].relit.size(); ++p) differing += frames[5].relit.pixels()[p] != frames[5].composited.pixels()[p];
        CHECK(differing > 0);

        // Serial and parallel rendering agree bit for bit.
        const auto serial = render_sequence(bundle, samples, 1);
        for (std::size_t k = 0; k < frames.size(); ++k) {
            CHECK(serial[k].relit == frames[k].relit);
            CHECK(serial[k].flow == frames[k].flow);
        }
    }
    SUBCASE("static scene renders identical frames") {
        bundle.sim.gravity = {};
        for (auto& o : bundle.objects) o.initial_velocity = {};
        const auto frames = render_sequence(bundle, sample_frames(simulate(bundle, prims), 16));
        for (const auto& f : frames) {
            CHECK(f.relit == frames[0].relit);
            CHECK(f.composited == frames[0].composited);
            if (f.flow) CHECK(*f.flow == FlowField(512, 512));
        }
    }
    SUBCASE("objects without intrinsics pass through") {
        for (auto& o : bundle.objects) {
            o.albedo.reset();
            o.normal.reset();
        }
        const auto frames = render_sequence(bundle, sample_frames(simulate(bundle, prims), 4));
        for (const auto& f : frames) CHECK(f.relit == f.composited);
    }
    SUBCASE("render resolution scaling") {
        bundle.render.resolution_width = 256;
        bundle.render.resolution_height = 256;
        const auto samples = sample_frames(simulate(bundle, prims), 3);
        const auto frames = render_sequence(bundle, samples);
        CHECK(frames[0].relit.width() == 256);
        CHECK(frames[0].flow->width() == 256);
        // Flow is expressed in render pixels: half the motion of full resolution.
        const Vec2 c0 = samples[1].transforms[0].apply(prims[0].circle.center);
        const int px = static_cast<int>(c0.x / 2), py = static_cast<int>(c0.y / 2);
        // Back to full-resolution pixels, through both frames' transforms, and down again.
        const Vec2 p{px + 0.5, py + 0.5};
        const Vec2 src = samples[1].transforms[0].inverse().apply(2.0 * p);
        const Vec2 dst = 0.5 * samples[2].transforms[0].apply(src);
        const auto v = (*frames[1].flow)(px, py);
        CHECK(v[0] == doctest::Approx(dst.x - p.x).epsilon(1e-5));
        CHECK(v[1] == doctest::Approx(dst.y - p.y).epsilon(1e-5));
    }
}
