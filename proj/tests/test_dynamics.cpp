#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "imdyn/dynamics.hpp"

using namespace imdyn;
using namespace imdyn::testing;
namespace syn = imdyn::synthetic;

namespace {

double angular_momentum(const World& w) {
    double l = 0.0;
    for (const Body& b : w.bodies) l += b.mass * cross(b.state.translation, b.state.linear_velocity) + b.inertia * b.state.angular_velocity;
    return l;
}

World floor_world(double gravity = 980.0, double floor_friction = 0.5, double floor_e = 0.5) {
    World w = empty_world({0.0, gravity}, 1.0 / 240.0, 1);
    w.boundaries.push_back({{-1000, 400}, {1000, 400}, floor_friction, floor_e});
    return w;
}

}  // namespace

TEST_CASE("state_derivative examples") {
    World w = empty_world({0, 980});
    w.bodies.push_back(circle_body(1, {0, 0}, 10, 50));
    auto d = state_derivative(w, {}, 0.0);
    CHECK(d[0].linear_acceleration == Vec2{0, 980});
    CHECK(d[0].angular_acceleration == 0.0);

    w.gravity = {};
    const std::vector<ExternalAction> push{{1, {100, 0}, 0.0, 0.0, 1.0, std::nullopt}};
    d = state_derivative(w, push, 0.5);
    CHECK(d[0].linear_acceleration == Vec2{2, 0});

    w.bodies[0].inertia = 250;
    const std::vector<ExternalAction> offset{{1, {0, 100}, 0.0, 0.0, 1.0, Vec2{5, 0}}};
    d = state_derivative(w, offset, 0.0);
    CHECK(d[0].angular_acceleration == doctest::Approx(2.0));

    // Outside the window the action is inactive.
    d = state_derivative(w, offset, 1.0);
    CHECK(d[0].angular_acceleration == 0.0);
    CHECK(d[0].linear_acceleration == Vec2{0, 0});
}

TEST_CASE("semi-implicit Euler single steps") {
    const double h = 1.0 / 240.0;
    World w = empty_world({0, 980}, h, 1);
    w.bodies.push_back(circle_body(1, {0, 0}, 5, 1));
    World next = integrate_step(w, {}, 0.0);
    CHECK(next.bodies[0].state.linear_velocity.y == doctest::Approx(980 * h).epsilon(1e-14));
    CHECK(next.bodies[0].state.translation.y == doctest::Approx(980 * h * h).epsilon(1e-14));

    World inertial = empty_world({}, h, 1);
    inertial.bodies.push_back(circle_body(1, {0, 0}, 5, 1, {3, 0}));
    next = integrate_step(inertial, {}, 0.0);
    CHECK(next.bodies[0].state.translation.x == doctest::Approx(3 * h).epsilon(1e-14));
    CHECK(next.bodies[0].state.translation.y == 0.0);
    CHECK(next.bodies[0].state.rotation == 0.0);
}

TEST_CASE("projectile follows the closed-form parabola") {
    // 1/240 s steps, each split into the default four substeps.
    World w = empty_world({0, 980}, 1.0 / 240.0, 4);
    w.bodies.push_back(circle_body(1, {0, 0}, 5, 1, {100, -200}));
    const Trajectory traj = simulate(w, {}, 96);
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const double t = static_cast<double>(k) / 240.0;
        const Vec2 exact{100 * t, -200 * t + 0.5 * 980 * t * t};
        worst = std::max(worst, length(traj.states[k][0].translation - exact));
    }
    CHECK(worst < 0.5);
}

TEST_CASE("first-order grid convergence on a smooth trajectory") {
    auto final_error = [](double dt) {
        World w = empty_world({0, 980}, dt, 1);
        Body b = box_body(1, {0, 0}, 10, 6, 2, {50, -120});
        b.state.angular_velocity = 1.0;
        w.bodies.push_back(b);
        const std::vector<ExternalAction> spin{{1, {}, 30.0, 0.0, 10.0, std::nullopt}};
        const int steps = static_cast<int>(std::lround(0.5 / dt));
        const Trajectory traj = simulate(w, spin, steps);
        const double t = 0.5;
        const double alpha = 30.0 / b.inertia;
        const BodyState& s = traj.states.back()[0];
        const Vec2 exact{50 * t, -120 * t + 0.5 * 980 * t * t};
        return length(s.translation - exact) + std::abs(s.rotation - (t + 0.5 * alpha * t * t));
    };
    const double e1 = final_error(1.0 / 100.0);
    const double e2 = final_error(1.0 / 200.0);
    const double e3 = final_error(1.0 / 400.0);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("detect_collisions hand geometry") {
    World w = empty_world();
    w.bodies.push_back(circle_body(1, {0, 0}, 10, 1));
    w.bodies.push_back(circle_body(2, {25, 0}, 10, 1));
    CHECK(detect_collisions(w).empty());

    w.bodies[1].state.translation = {18 * 0.6, 18 * 0.8};
    auto cs = detect_collisions(w);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].penetration == doctest::Approx(2.0));
    CHECK(cs[0].normal.x == doctest::Approx(0.6));
    CHECK(cs[0].normal.y == doctest::Approx(0.8));

    World g = empty_world();
    g.boundaries.push_back({{-100, 100}, {100, 100}});
    g.bodies.push_back(circle_body(1, {0, 92}, 10, 1));
    cs = detect_collisions(g);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].a_is_boundary);
    CHECK(cs[0].penetration == doctest::Approx(2.0));
    CHECK(cs[0].normal.x == doctest::Approx(0.0));
    CHECK(cs[0].normal.y == doctest::Approx(-1.0));
    CHECK(cs[0].point.y == doctest::Approx(100.0));

    SUBCASE("box resting flat gives two contact points") {
        World b = empty_world();
        b.boundaries.push_back({{-100, 100}, {100, 100}});
        b.bodies.push_back(box_body(1, {0, 96}, 20, 10, 1));
        cs = detect_collisions(b);
        REQUIRE(cs.size() == 2);
        for (const auto& c : cs) {
            CHECK(c.penetration == doctest::Approx(1.0));
            CHECK(c.normal.y == doctest::Approx(-1.0));
        }
    }
    SUBCASE("pieces of one body never collide with each other") {
        World b = empty_world();
        Body l = box_body(1, {0, 0}, 20, 10, 1);
        l.shape.pieces.push_back({{-10, -5}, {0, -5}, {0, 15}, {-10, 15}});
        b.bodies.push_back(l);
        CHECK(detect_collisions(b).empty());
    }
}

TEST_CASE("resolve_collision closed forms") {
    SUBCASE("equal masses exchange velocities") {
        World w = empty_world();
        w.bodies.push_back(circle_body(1, {0, 0}, 10, 3, {100, 0}, 0.0, 1.0));
        w.bodies.push_back(circle_body(2, {19.5, 0}, 10, 3, {0, 0}, 0.0, 1.0));
        const auto cs = detect_collisions(w);
        REQUIRE(cs.size() == 1);
        resolve_collision(cs[0], w);
        CHECK(w.bodies[0].state.linear_velocity.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(w.bodies[1].state.linear_velocity.x == doctest::Approx(100.0));
    }
    SUBCASE("unequal masses match the 1D elastic formula") {
        World w = empty_world();
        w.bodies.push_back(circle_body(1, {0, 0}, 10, 2, {60, 0}, 0.0, 1.0));
        w.bodies.push_back(circle_body(2, {19.5, 0}, 10, 5, {-10, 0}, 0.0, 1.0));
        resolve_collision(detect_collisions(w)[0], w);
        const double m1 = 2, m2 = 5, u1 = 60, u2 = -10;
        CHECK(w.bodies[0].state.linear_velocity.x == doctest::Approx(((m1 - m2) * u1 + 2 * m2 * u2) / (m1 + m2)));
        CHECK(w.bodies[1].state.linear_velocity.x == doctest::Approx(((m2 - m1) * u2 + 2 * m1 * u1) / (m1 + m2)));
    }
    SUBCASE("restitution against static ground") {
        for (double e : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            World w = empty_world();
            w.boundaries.push_back({{-100, 100}, {100, 100}, 0.0, 1.0});
            w.bodies.push_back(circle_body(1, {0, 91}, 10, 4, {0, 100}, 0.0, e));
            const auto imp = resolve_collision(detect_collisions(w)[0], w);
            CHECK(imp.normal_velocity_before == doctest::Approx(-100.0));
            CHECK(std::abs(w.bodies[0].state.linear_velocity.y + e * 100.0) <= 1e-6);
            CHECK(imp.normal_impulse == doctest::Approx(4 * (1 + e) * 100.0));
        }
    }
    SUBCASE("off-center impact produces spin") {
        World w = empty_world();
        w.boundaries.push_back({{-100, 100}, {100, 100}, 0.0, 0.0});
        Body box = box_body(1, {0, 95}, 20, 10, 2, {0, 50});
        box.state.rotation = 0.1;
        w.bodies.push_back(box);
        const auto cs = detect_collisions(w);
        REQUIRE_FALSE(cs.empty());
        resolve_collision(cs[0], w);
        CHECK(w.bodies[0].state.angular_velocity != 0.0);
    }
}

TEST_CASE("internal collisions conserve momentum") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pos(-60, 60), vel(-200, 200), fric(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        World w = empty_world({}, 1.0 / 120.0, 2);
        for (int i = 0; i < 6; ++i) {
            if (i % 2 == 0)
                w.bodies.push_back(circle_body(i, {pos(rng), pos(rng)}, 12, 1 + i, {vel(rng), vel(rng)}, fric(rng), 0.7));
            else
                w.bodies.push_back(box_body(i, {pos(rng), pos(rng)}, 18, 10, 2 + i, {vel(rng), vel(rng)}, fric(rng), 0.3));
        }
        // Positional correction moves bodies without touching velocities, so
        // the angular momentum check runs on a copy without it.
        World rigid = w;
        rigid.solver.baumgarte = 0.0;
        for (int step = 0; step < 30; ++step) {
            const Vec2 p0 = linear_momentum(w);
            advance(w, {}, step * w.dt);
            CHECK(length(linear_momentum(w) - p0) <= 1e-6 * std::max(1.0, length(p0)));

            const double l0 = angular_momentum(rigid);
            advance(rigid, {}, step * rigid.dt);
            CHECK(std::abs(angular_momentum(rigid) - l0) <= 1e-6 * std::max(1.0, std::abs(l0)));
        }
    }
}

TEST_CASE("elastic frictionless contacts conserve kinetic energy") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> off(-15, 15), speed(20, 300);
    for (int trial = 0; trial < 50; ++trial) {
        World w = empty_world();
        w.bodies.push_back(circle_body(1, {0, 0}, 10, 2, {speed(rng), 0}, 0.0, 1.0));
        w.bodies.push_back(circle_body(2, {19.0, off(rng) * 0.3}, 10, 3, {-speed(rng), 0}, 0.0, 1.0));
        const double ke0 = kinetic_energy(w);
        const auto cs = detect_collisions(w);
        REQUIRE(cs.size() == 1);
        resolve_collision(cs[0], w);
        CHECK(std::abs(kinetic_energy(w) - ke0) <= 1e-4 * ke0);
    }
}

TEST_CASE("inelastic contacts never add kinetic energy") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ang(-0.6, 0.6), v(10, 200), e(0.0, 0.99), mu(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        World w = empty_world();
        w.boundaries.push_back({{-100, 100}, {100, 100}, mu(rng), e(rng)});
        Body b = trial % 2 ? box_body(1, {0, 94}, 20, 10, 2, {v(rng) - 100, v(rng)}, mu(rng), e(rng))
                           : circle_body(1, {0, 91}, 10, 2, {v(rng) - 100, v(rng)}, mu(rng), e(rng));
        b.state.rotation = ang(rng);
        b.state.angular_velocity = ang(rng) * 10;
        w.bodies.push_back(b);
        const auto cs = detect_collisions(w);
        if (cs.empty()) continue;
        const double ke0 = kinetic_energy(w);
        for (const auto& c : cs) resolve_collision(c, w);
        CHECK(kinetic_energy(w) <= ke0 * (1 + 1e-12));
    }
}

TEST_CASE("Coulomb cone holds at every logged contact") {
    SceneBundle bundle = syn::demo_bundle();
    const Trajectory traj = simulate(bundle);
    REQUIRE_FALSE(traj.contacts.empty());
    const World w = make_world(bundle, fit_primitives(bundle));
    for (const auto& ev : traj.contacts) {
        const auto& b = w.bodies[static_cast<std::size_t>(ev.contact.b)];
        const double mua = ev.contact.a_is_boundary ? w.boundaries[static_cast<std::size_t>(ev.contact.a)].friction
                                                    : w.bodies[static_cast<std::size_t>(ev.contact.a)].friction;
        const double mu = std::sqrt(mua * b.friction);
        CHECK(std::abs(ev.impulse.tangent_impulse) <= mu * ev.impulse.normal_impulse + 1e-9);
        CHECK(ev.impulse.normal_impulse >= 0.0);
    }
}

TEST_CASE("sliding disk settles into rolling") {
    World w = floor_world(980.0, 0.5, 0.0);
    w.solver.rolling_resistance = 0.0;
    const double r = 10.0, v0 = 200.0;
    w.bodies.push_back(circle_body(1, {0, 400 - r}, r, 5, {v0, 0}, 0.5, 0.0));
    const Trajectory traj = simulate(w, {}, 240);
    // Closed form: friction impulse J = m v0 / 3 for a uniform disk.
    const double v_roll = 2.0 * v0 / 3.0;
    bool rolled = false;
    std::size_t since = 0;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const BodyState& s = traj.states[k][0];
        if (!rolled && std::abs(s.linear_velocity.x - s.angular_velocity * r) < 1e-3) {
            rolled = true;
            since = k;
        }
    }
    REQUIRE(rolled);
    // Sliding lasts about v0 / (3 mu g) seconds.
    CHECK(static_cast<double>(since) / 240.0 == doctest::Approx(v0 / (3 * 0.5 * 980)).epsilon(0.1));
    for (std::size_t k = since; k < traj.states.size(); ++k) {
        CHECK(traj.states[k][0].linear_velocity.x == doctest::Approx(v_roll).epsilon(1e-6));
        CHECK(std::abs(traj.states[k][0].linear_velocity.x - traj.states[k][0].angular_velocity * r) < 1e-3);
    }
}

TEST_CASE("rolling resistance slows a rolling disk") {
    World w = floor_world(980.0, 0.5, 0.0);
    w.bodies.push_back(circle_body(1, {0, 390}, 10, 5, {100, 0}, 0.5, 0.0));
    w.bodies[0].state.angular_velocity = 10.0;
    const Trajectory traj = simulate(w, {}, 120);
    CHECK(traj.states.back()[0].linear_velocity.x < 100.0);
    CHECK(traj.states.back()[0].linear_velocity.x > 0.0);
}

TEST_CASE("simulate over bundles") {
    SUBCASE("default config yields 121 states per body") {
        const SceneBundle b = syn::demo_bundle();
        const Trajectory traj = simulate(b);
        CHECK(traj.states.size() == 121);
        for (const auto& s : traj.states) CHECK(s.size() == b.objects.size());
    }
    SUBCASE("fixed point without gravity or velocity") {
        SceneBundle b = syn::demo_bundle();
        b.sim.gravity = {};
        for (auto& o : b.objects) o.initial_velocity = {};
        const Trajectory traj = simulate(b);
        for (const auto& s : traj.states) CHECK(s == traj.states[0]);
    }
    SUBCASE("a harder push travels further") {
        auto travel = [](double speed) {
            syn::ObjectSpec stone;
            stone.mask = syn::rectangle(512, 512, 100, 380, 40, 20);
            stone.initial_velocity = {speed, 0};
            stone.friction = 0.6;
            SceneBundle b = syn::make_bundle(512, 512, {stone}, {{{0, 400}, {512, 400}, BoundaryOrientation::kHorizontal, 0.6, 0.2}}, {});
            const Trajectory traj = simulate(b);
            double arc = 0.0;
            for (std::size_t k = 1; k < traj.states.size(); ++k)
                arc += length(traj.states[k][0].translation - traj.states[k - 1][0].translation);
            return arc;
        };
        const double slow = travel(100), fast = travel(200);
        CHECK(slow > 1.0);
        CHECK(fast > slow);
    }
    SUBCASE("bit determinism") {
        const SceneBundle b = syn::demo_bundle();
        const Trajectory t1 = simulate(b), t2 = simulate(b);
        CHECK(t1.states == t2.states);
        CHECK(t1.contacts.size() == t2.contacts.size());
    }
}

TEST_CASE("non-finite states are reported with the step") {
    World w = empty_world();
    w.bodies.push_back(circle_body(1, {0, 0}, 10, 1, {std::numeric_limits<double>::infinity(), 0}));
    try {
        advance(w, {}, 0.0, 7);
        FAIL("expected NonFinite");
    } catch (const NonFinite& e) {
        CHECK(e.step() == 7);
    }
}

TEST_CASE("sample_frames") {
    CHECK(sample_indices(120, 16) == std::vector<int>{0, 8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120});
    CHECK(sample_indices(120, 1) == std::vector<int>{0});
    CHECK(sample_indices(10, 11).back() == 10);
    CHECK_THROWS_AS(sample_indices(120, 0), ValidationError);
    CHECK_THROWS_AS(sample_indices(120, 122), ValidationError);

    Trajectory traj;
    traj.body_ids = {1};
    traj.states = {{BodyState{{5, 5}, 0.0, {}, 0.0}}, {BodyState{{5, 5}, std::numbers::pi / 2, {}, 0.0}}};
    const auto frames = sample_frames(traj, 2);
    REQUIRE(frames.size() == 2);
    const Vec2 p0 = frames[0].transforms[0].apply({6, 5});
    CHECK(p0 == Vec2{6, 5});
    const Vec2 p1 = frames[1].transforms[0].apply({6, 5});
    CHECK(p1.x == doctest::Approx(5.0));
    CHECK(p1.y == doctest::Approx(6.0));

    traj.pixels_per_cm = 2.0;
    traj.states[1][0].rotation = 0.0;
    traj.states[1][0].translation = {8, 5};
    const Vec2 moved = sample_frames(traj, 2)[1].transforms[0].apply({10, 10});
    CHECK(moved == Vec2{16, 10});
}

TEST_CASE("elastic bounces under gravity are periodic") {
    World w = floor_world(980.0, 0.0, 1.0);
    w.substeps = 4;
    w.dt = 1.0 / 60.0;
    w.bodies.push_back(circle_body(1, {0, 300}, 10, 4, {}, 0.0, 1.0));
    const Trajectory traj = simulate(w, {}, 600);
    std::vector<double> speeds;
    for (const auto& ev : traj.contacts)
        if (ev.impulse.normal_velocity_before < -10.0) speeds.push_back(ev.impulse.normal_velocity_before);
    REQUIRE(speeds.size() >= 6);
    for (double v : speeds) CHECK(v == doctest::Approx(speeds.front()).epsilon(1e-12));
    // Apex heights stay put as well.
    double top = 400.0;
    for (std::size_t k = traj.states.size() / 2; k < traj.states.size(); ++k)
        top = std::min(top, traj.states[k][0].translation.y);
    CHECK(top == doctest::Approx(300.0).epsilon(1e-9));
}
