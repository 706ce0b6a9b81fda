#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "imdyn/primitive.hpp"

using namespace imdyn;
namespace syn = imdyn::synthetic;

namespace {

// Independent oracles: direct pixel counting and per-pixel moment sums.
double count_iou(const Mask& a, const Mask& b) {
    long inter = 0, uni = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            inter += a(x, y) && b(x, y);
            uni += a(x, y) || b(x, y);
        }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Mask brute_circle(int w, int h, double cx, double cy, double r) {
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r) m(x, y) = 1;
    return m;
}

double pixel_inertia(const Mask& m, double mass) {
    double n = 0, sx = 0, sy = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(x, y)) {
                n += 1;
                sx += x + 0.5;
                sy += y + 0.5;
            }
    const double cx = sx / n, cy = sy / n, pm = mass / n;
    double inertia = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(x, y)) inertia += pm * ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) + 1.0 / 6.0);
    return inertia;
}

Mask l_shape(int size, int off = 0) {
    Mask m(size, size);
    for (int y = 10; y < 90; ++y)
        for (int x = 10; x < 40; ++x) m(x + off, y + off) = 1;
    for (int y = 60; y < 90; ++y)
        for (int x = 40; x < 100; ++x) m(x + off, y + off) = 1;
    return m;
}

bool convex_positive(const ConvexPiece& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Vec2 a = p[i], b = p[(i + 1) % p.size()], c = p[(i + 2) % p.size()];
        if (cross(b - a, c - b) < 0.0) return false;
    }
    return signed_area(p) > 0.0;
}

}  // namespace

TEST_CASE("mask_iou basic identities") {
    const Mask a = syn::rectangle(200, 120, 10, 10, 100, 100);
    CHECK(mask_iou(a, a) == 1.0);
    const Mask far = syn::rectangle(200, 120, 150, 0, 20, 20);
    CHECK(mask_iou(a, far) == 0.0);

    const Mask shifted = syn::rectangle(200, 120, 60, 10, 100, 100);
    CHECK(count_iou(a, shifted) == doctest::Approx(1.0 / 3.0));
    CHECK(mask_iou(a, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(mask_iou(Mask(8, 8), Mask(8, 8)), DegenerateMask);
    CHECK_THROWS_AS(mask_iou(Mask(8, 8), Mask(9, 8)), ShapeError);
}

TEST_CASE("fit_circle equal-area centroid fit") {
    SUBCASE("rasterized disk") {
        const Circle c = fit_circle(brute_circle(220, 220, 100, 100, 50));
        CHECK(std::abs(c.center.x - 100) <= 0.5);
        CHECK(std::abs(c.center.y - 100) <= 0.5);
        CHECK(std::abs(c.radius - 50) <= 1.0);
    }
    SUBCASE("single pixel") {
        Mask m(16, 16);
        m(7, 3) = 1;
        const Circle c = fit_circle(m);
        CHECK(c.center.x == 7.5);
        CHECK(c.center.y == 3.5);
        CHECK(c.radius == doctest::Approx(std::sqrt(1.0 / std::numbers::pi)));
    }
    SUBCASE("full square") {
        const Circle c = fit_circle(syn::rectangle(100, 100, 0, 0, 100, 100));
        CHECK(c.radius == doctest::Approx(56.41895835));
    }
    CHECK_THROWS_AS(fit_circle(Mask(4, 4)), DegenerateMask);
}

TEST_CASE("contour tracing follows pixel edges") {
    const Mask rect = syn::rectangle(64, 64, 5, 7, 40, 20);
    const auto contour = trace_outer_contour(rect);
    REQUIRE(contour.size() == 4);
    CHECK(signed_area(contour) == 800.0);

    Mask single(4, 4);
    single(2, 1) = 1;
    CHECK(signed_area(trace_outer_contour(single)) == 1.0);

    const auto l = trace_outer_contour(l_shape(120));
    CHECK(l.size() == 6);
    CHECK(signed_area(l) == 30.0 * 80.0 + 60.0 * 30.0);
}

TEST_CASE("extract_polygon on known shapes") {
    SUBCASE("axis-aligned rectangle") {
        const Mask rect = syn::rectangle(80, 60, 10, 20, 40, 20);
        const Primitive p = extract_polygon(rect, 2.0);
        REQUIRE(p.outline.size() == 4);
        const std::vector<Vec2> corners{{10, 20}, {50, 20}, {50, 40}, {10, 40}};
        for (const Vec2& c : corners) {
            bool found = false;
            for (const Vec2& v : p.outline) found = found || (std::abs(v.x - c.x) <= 2 && std::abs(v.y - c.y) <= 2);
            CHECK(found);
        }
        CHECK(p.pieces.size() == 1);
    }
    SUBCASE("L shape splits into convex pieces") {
        const Mask l = l_shape(120);
        const Primitive p = extract_polygon(l, 2.0);
        CHECK(p.pieces.size() >= 2);
        for (const auto& piece : p.pieces) CHECK(convex_positive(piece));
        CHECK(count_iou(rasterize(p, 120, 120), l) >= 0.95);
    }
    SUBCASE("disk at 1 px tolerance") {
        const Mask d = brute_circle(128, 128, 64, 64, 40);
        const Primitive p = extract_polygon(d, 1.0);
        for (const auto& piece : p.pieces) CHECK(convex_positive(piece));
        CHECK(count_iou(rasterize(p, 128, 128), d) >= 0.95);
        CHECK(is_simple(p.outline));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(extract_polygon(Mask(10, 10)), DegenerateMask);
        Mask two = syn::rectangle(40, 40, 0, 0, 5, 5);
        two(20, 20) = 1;
        CHECK_THROWS_AS(extract_polygon(two), MultiComponentMask);
        Mask diagonal(10, 10);
        diagonal(2, 2) = 1;
        diagonal(3, 3) = 1;
        CHECK_THROWS_AS(extract_polygon(diagonal), MultiComponentMask);
    }
}

TEST_CASE("choose_primitive applies the 0.85 circle gate") {
    SUBCASE("disk -> circle") {
        const Primitive p = choose_primitive(brute_circle(200, 200, 90, 110, 45));
        CHECK(p.is_circle());
    }
    SUBCASE("thin bar -> polygon") {
        const Mask bar = syn::rectangle(140, 40, 20, 10, 100, 5);
        const Circle c = fit_circle(bar);
        const double iou = count_iou(brute_circle(140, 40, c.center.x, c.center.y, c.radius), bar);
        CHECK(iou < 0.2);
        CHECK_FALSE(choose_primitive(bar).is_circle());
    }
    SUBCASE("square: equal-area circle covers it with IoU ~0.834") {
        const Mask sq = syn::rectangle(160, 160, 30, 30, 100, 100);
        const Circle c = fit_circle(sq);
        const double iou = count_iou(brute_circle(160, 160, c.center.x, c.center.y, c.radius), sq);
        // Analytic value for a continuous square: 0.9095 / 1.0905.
        CHECK(iou == doctest::Approx(0.834).epsilon(0.01));
        CHECK(circle_fit_iou(sq) == doctest::Approx(iou));
        CHECK_FALSE(choose_primitive(sq).is_circle());
    }
}

TEST_CASE("choose_primitive is translation invariant") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> shift(-20, 20);
    const std::vector<Mask> shapes{brute_circle(200, 200, 100, 100, 30), l_shape(200, 40),
                                   syn::rounded_square(200, 200, {100, 100}, 60, 4),
                                   syn::rounded_square(200, 200, {100, 100}, 60, 12)};
    for (const Mask& base : shapes) {
        const Primitive p0 = choose_primitive(base);
        for (int trial = 0; trial < 5; ++trial) {
            const int dx = shift(rng), dy = shift(rng);
            Mask moved(base.width(), base.height());
            for (int y = 0; y < base.height(); ++y)
                for (int x = 0; x < base.width(); ++x)
                    if (base(x, y) && moved.contains(x + dx, y + dy)) moved(x + dx, y + dy) = 1;
            const Primitive p1 = choose_primitive(moved);
            REQUIRE(p1.kind == p0.kind);
            if (p0.is_circle()) {
                CHECK(p1.circle.radius == doctest::Approx(p0.circle.radius).epsilon(1e-12));
                CHECK(p1.circle.center.x == doctest::Approx(p0.circle.center.x + dx).epsilon(1e-12));
                CHECK(p1.circle.center.y == doctest::Approx(p0.circle.center.y + dy).epsilon(1e-12));
            } else {
                REQUIRE(p1.outline.size() == p0.outline.size());
                for (std::size_t i = 0; i < p0.outline.size(); ++i) {
                    CHECK(p1.outline[i].x == p0.outline[i].x + dx);
                    CHECK(p1.outline[i].y == p0.outline[i].y + dy);
                }
            }
        }
    }
}

TEST_CASE("coverage guarantee over random blobs") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> pos(20, 80), size(8, 40);
    for (int trial = 0; trial < 25; ++trial) {
        // Union of overlapping rectangles and a disk anchored at a shared point.
        Mask m(128, 128);
        const int ax = pos(rng), ay = pos(rng);
        for (int k = 0; k < 3; ++k) {
            const int w = size(rng), h = size(rng);
            const Mask r = syn::rectangle(128, 128, ax - w / 3, ay - h / 3, w, h);
            for (std::size_t i = 0; i < m.size(); ++i) m.pixels()[i] |= r.pixels()[i];
        }
        const Mask d = brute_circle(128, 128, ax + 0.5, ay + 0.5, size(rng) / 2.0);
        for (std::size_t i = 0; i < m.size(); ++i) m.pixels()[i] |= d.pixels()[i];
        REQUIRE(count_components(m) == 1);

        const Primitive p = choose_primitive(m);
        const double iou = count_iou(rasterize(p, 128, 128), m);
        CHECK(iou >= (p.is_circle() ? kCircleIouThreshold : kPolygonIouFloor));
        if (!p.is_circle()) {
            double piece_area = 0.0;
            for (const auto& piece : p.pieces) {
                CHECK(convex_positive(piece));
                piece_area += signed_area(piece);
            }
            CHECK(piece_area == doctest::Approx(signed_area(p.outline)).epsilon(1e-9));
        }
    }
}

TEST_CASE("mass_properties closed forms") {
    const MassProperties c = mass_properties(Primitive::make_circle({5, 5}, 10), 100);
    CHECK(c.inertia == doctest::Approx(5000.0));
    CHECK(c.center_of_mass == Vec2{5, 5});

    const Primitive square = Primitive::make_polygon({{0, 0}, {10, 0}, {10, 10}, {0, 10}},
                                                     {{{0, 0}, {10, 0}, {10, 10}, {0, 10}}});
    const MassProperties s = mass_properties(square, 100);
    CHECK(s.inertia == doctest::Approx(100.0 * 100.0 / 6.0));
    CHECK(s.center_of_mass.x == doctest::Approx(5.0));
    CHECK(s.center_of_mass.y == doctest::Approx(5.0));

    // Same square split into two welded triangles.
    const Primitive split = Primitive::make_polygon(square.outline, {{{0, 0}, {10, 0}, {10, 10}}, {{0, 0}, {10, 10}, {0, 10}}});
    CHECK(mass_properties(split, 100).inertia == doctest::Approx(s.inertia));

    for (double k : {0.5, 3.0, 17.0}) {
        CHECK(mass_properties(square, 100 * k).inertia == doctest::Approx(k * s.inertia));
        CHECK(mass_properties(Primitive::make_circle({0, 0}, 10), 100 * k).inertia == doctest::Approx(k * 5000.0));
    }
}

TEST_CASE("mass_properties matches the pixel-sum oracle within 2%") {
    // The oracle sums over the pixels the primitive itself covers.
    const std::vector<Mask> masks{brute_circle(160, 160, 80, 80, 30), syn::rectangle(160, 160, 20, 30, 100, 60),
                                  l_shape(120), syn::rounded_square(160, 160, {80, 80}, 90, 20)};
    for (const Mask& m : masks) {
        const Primitive p = choose_primitive(m);
        const MassProperties mp = mass_properties(p, 250.0);
        const Mask covered = rasterize(p, m.width(), m.height());
        CHECK(mp.inertia == doctest::Approx(pixel_inertia(covered, 250.0)).epsilon(0.02));
        CHECK(mp.inertia > 0.0);
    }
}
