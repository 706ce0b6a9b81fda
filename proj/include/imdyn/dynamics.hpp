#pragma once

#include <optional>
#include <span>
#include <vector>

#include "imdyn/collision.hpp"
#include "imdyn/geometry.hpp"
#include "imdyn/primitive.hpp"
#include "imdyn/scene.hpp"

namespace imdyn {

/// Pose and velocity of a body's center of mass, world units (cm, s, rad).
struct BodyState {
    Vec2 translation{};
    double rotation = 0.0;
    Vec2 linear_velocity{};
    double angular_velocity = 0.0;

    friend bool operator==(const BodyState&, const BodyState&) = default;
};

/// Collision geometry in the body frame (origin at the center of mass, cm).
struct BodyShape {
    bool circle = false;
    double radius = 0.0;
    std::vector<ConvexPiece> pieces;
    double bounding_radius = 0.0;

    /// Converts a primitive fitted in image pixels into body-frame geometry.
    static BodyShape from_primitive(const Primitive& primitive, Vec2 center_of_mass_px, double pixels_per_cm);
};

struct Body {
    int id = 0;
    BodyShape shape;
    double mass = 1.0;
    double inertia = 1.0;
    double friction = 0.0;
    double elasticity = 0.0;
    BodyState state;

    double inverse_mass() const { return 1.0 / mass; }
    double inverse_inertia() const { return 1.0 / inertia; }
};

struct StaticSegment {
    Vec2 p0{};
    Vec2 p1{};
    double friction = 0.5;
    double elasticity = 0.5;
};

struct SolverSettings {
    int velocity_iterations = 10;
    double baumgarte = 0.2;
    double slop = 0.5;
    double rolling_resistance = 0.01;
    double restitution_threshold = 1.0;
};

struct World {
    std::vector<Body> bodies;
    std::vector<StaticSegment> boundaries;
    Vec2 gravity{0.0, kDefaultGravity};
    double dt = 1.0 / 60.0;
    int substeps = 4;
    SolverSettings solver;

    double substep() const { return dt / substeps; }
};

/// A user force/torque on one body, active for t_start <= t < t_end.
struct ExternalAction {
    int body_id = 0;
    Vec2 force{};           // dyn
    double torque = 0.0;    // dyn*cm
    double t_start = 0.0;   // s
    double t_end = 0.0;     // s
    /// Application point in the body frame (cm from the center of mass);
    /// absent means the center of mass.
    std::optional<Vec2> local_point;
};

struct StateDerivative {
    Vec2 velocity{};
    double angular_velocity = 0.0;
    Vec2 linear_acceleration{};
    double angular_acceleration = 0.0;
};

/// Contact between body `b` and either body `a` or boundary `a`.
/// `normal` points from A to B; `penetration` >= 0.
struct Contact {
    int a = 0;
    int b = 0;
    bool a_is_boundary = false;
    Vec2 point{};
    Vec2 normal{};
    double penetration = 0.0;
};

struct ContactImpulse {
    double normal_impulse = 0.0;
    double tangent_impulse = 0.0;
    double rolling_impulse = 0.0;
    double normal_velocity_before = 0.0;  // approach velocity, before the substep's forces
    double normal_velocity_after = 0.0;
};

struct ContactEvent {
    int step = 0;
    int substep = 0;
    Contact contact;
    int body_a_id = -1;  // -1 for boundaries
    int body_b_id = -1;
    ContactImpulse impulse;
};

struct Trajectory {
    std::vector<int> body_ids;
    /// states[step][body]; step 0 is the initial condition.
    std::vector<std::vector<BodyState>> states;
    std::vector<ContactEvent> contacts;
    double dt = 1.0 / 60.0;
    double pixels_per_cm = 1.0;

    std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
    std::size_t body_count() const { return body_ids.size(); }
};

/// d/dt of every body's state from gravity and the active actions. Contact
/// forces (including friction) enter through impulses in `integrate_step`.
std::vector<StateDerivative> state_derivative(const World& world, std::span<const ExternalAction> actions,
                                              double time);

/// Advances one step of `world.dt` using `world.substeps` semi-implicit Euler
/// substeps: forces -> velocities, contact impulses, velocities -> positions,
/// positional correction. Contact events are appended to `log` when given.
/// Throws NonFinite carrying `step_index`.
void advance(World& world, std::span<const ExternalAction> actions, double time, int step_index = 0,
             std::vector<ContactEvent>* log = nullptr);

inline World integrate_step(World world, std::span<const ExternalAction> actions, double time) {
    advance(world, actions, time);
    return world;
}

std::vector<Contact> detect_collisions(const World& world);

/// Solves a single contact in isolation and applies the resulting impulses.
ContactImpulse resolve_collision(const Contact& contact, World& world);

World make_world(const SceneBundle& bundle, std::span<const Primitive> primitives);
std::vector<ExternalAction> make_actions(const SceneBundle& bundle, const World& world);

Trajectory simulate(World world, std::span<const ExternalAction> actions, int steps, double pixels_per_cm = 1.0);
Trajectory simulate(const SceneBundle& bundle, std::span<const Primitive> primitives);
/// Fits primitives from the masks, then simulates.
Trajectory simulate(const SceneBundle& bundle);

/// Fits one primitive per bundle object (in object order).
std::vector<Primitive> fit_primitives(const SceneBundle& bundle);

struct FrameSample {
    int step = 0;
    /// Per-body image-space affine mapping pixels at step 0 to this step.
    std::vector<Affine2> transforms;
};

/// `n` uniformly spaced steps including the first and last.
std::vector<int> sample_indices(int steps, int n);
std::vector<FrameSample> sample_frames(const Trajectory& trajectory, int n);

double kinetic_energy(const World& world);
Vec2 linear_momentum(const World& world);

}  // namespace imdyn
