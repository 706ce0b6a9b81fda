#include "imdyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace imdyn {
namespace {

struct WorldShapes {
    // Per body: convex pieces in world coordinates (empty for circles).
    std::vector<std::vector<ConvexShape>> pieces;
    std::vector<ConvexShape> boundaries;
};

WorldShapes world_shapes(const World& world) {
    WorldShapes ws;
    ws.pieces.reserve(world.bodies.size());
    for (const Body& body : world.bodies) {
        std::vector<ConvexShape> shapes;
        if (!body.shape.circle) {
            const Rotation rot = Rotation::from_angle(body.state.rotation);
            for (const auto& piece : body.shape.pieces) {
                std::vector<Vec2> verts;
                verts.reserve(piece.size());
                for (const Vec2& v : piece) verts.push_back(rot.apply(v) + body.state.translation);
                shapes.push_back(ConvexShape::from_vertices(std::move(verts)));
            }
        }
        ws.pieces.push_back(std::move(shapes));
    }
    for (const auto& seg : world.boundaries) ws.boundaries.push_back(ConvexShape::segment(seg.p0, seg.p1));
    return ws;
}

void emit(std::vector<Contact>& out, const Manifold& m, int a, int b, bool a_is_boundary, bool flip) {
    for (const auto& p : m.points) {
        out.push_back({a, b, a_is_boundary, p.point, flip ? -m.normal : m.normal, p.penetration});
    }
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = length_squared(ab);
    const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return length(p - (a + t * ab));
}

/// Sequential-impulse row set for one contact point.
struct ContactRow {
    Contact contact;
    Vec2 ra{}, rb{};
    Vec2 tangent{};
    double inv_mass_a = 0.0, inv_inertia_a = 0.0;
    double inv_mass_b = 0.0, inv_inertia_b = 0.0;
    double normal_mass = 0.0;
    double tangent_mass = 0.0;
    double rolling_mass = 0.0;
    double rolling_radius = 0.0;  // > 0 only for circle-boundary contacts
    double restitution_bias = 0.0;
    double friction = 0.0;
    double rolling_coefficient = 0.0;
    ContactImpulse impulse;
};

struct Velocities {
    Vec2 v{};
    double w = 0.0;
};

Velocities& velocity_of(std::vector<Velocities>& vel, Velocities& static_vel, const Contact& c, bool side_a) {
    if (side_a && c.a_is_boundary) {
        static_vel = {};
        return static_vel;
    }
    return vel[static_cast<std::size_t>(side_a ? c.a : c.b)];
}

Vec2 relative_velocity(const ContactRow& row, const Velocities& va, const Velocities& vb) {
    return (vb.v + cross(vb.w, row.rb)) - (va.v + cross(va.w, row.ra));
}

// `va0`/`vb0` are the velocities before this substep's forces: restitution
// reflects the approach velocity, so an elastic bounce under constant
// acceleration retraces its descent exactly.
ContactRow prepare_row(const World& world, const Contact& c, const Velocities& va0, const Velocities& vb0) {
    ContactRow row;
    row.contact = c;
    const Body& b = world.bodies[static_cast<std::size_t>(c.b)];
    double ea, mua;
    Vec2 xa{};
    if (c.a_is_boundary) {
        const auto& seg = world.boundaries[static_cast<std::size_t>(c.a)];
        ea = seg.elasticity;
        mua = seg.friction;
        xa = c.point;
    } else {
        const Body& a = world.bodies[static_cast<std::size_t>(c.a)];
        ea = a.elasticity;
        mua = a.friction;
        xa = a.state.translation;
        row.inv_mass_a = a.inverse_mass();
        row.inv_inertia_a = a.inverse_inertia();
    }
    row.inv_mass_b = b.inverse_mass();
    row.inv_inertia_b = b.inverse_inertia();
    row.ra = c.a_is_boundary ? Vec2{} : c.point - xa;
    row.rb = c.point - b.state.translation;
    row.tangent = perp(c.normal);

    const double rna = cross(row.ra, c.normal), rnb = cross(row.rb, c.normal);
    const double rta = cross(row.ra, row.tangent), rtb = cross(row.rb, row.tangent);
    const double msum = row.inv_mass_a + row.inv_mass_b;
    row.normal_mass = 1.0 / (msum + row.inv_inertia_a * rna * rna + row.inv_inertia_b * rnb * rnb);
    row.tangent_mass = 1.0 / (msum + row.inv_inertia_a * rta * rta + row.inv_inertia_b * rtb * rtb);
    row.rolling_mass = 1.0 / (row.inv_inertia_a + row.inv_inertia_b);

    const double e = std::min(ea, b.elasticity);
    row.friction = std::sqrt(mua * b.friction);
    if (c.a_is_boundary && b.shape.circle) {
        row.rolling_radius = b.shape.radius;
        row.rolling_coefficient = world.solver.rolling_resistance;
    }

    const double vn = dot(relative_velocity(row, va0, vb0), c.normal);
    row.impulse.normal_velocity_before = vn;
    if (vn < -world.solver.restitution_threshold) row.restitution_bias = -e * vn;
    return row;
}

void apply_impulse(const ContactRow& row, Velocities& va, Velocities& vb, Vec2 p) {
    va.v -= row.inv_mass_a * p;
    va.w -= row.inv_inertia_a * cross(row.ra, p);
    vb.v += row.inv_mass_b * p;
    vb.w += row.inv_inertia_b * cross(row.rb, p);
}

void solve_row(ContactRow& row, Velocities& va, Velocities& vb) {
    const Vec2 n = row.contact.normal;
    auto& imp = row.impulse;

    // Non-penetration with restitution target.
    {
        const double vn = dot(relative_velocity(row, va, vb), n);
        const double lambda = std::max(imp.normal_impulse - row.normal_mass * (vn - row.restitution_bias), 0.0);
        const double delta = lambda - imp.normal_impulse;
        imp.normal_impulse = lambda;
        apply_impulse(row, va, vb, delta * n);
    }
    // Rolling resistance: opposes relative spin, bounded by c_r * r * j_n.
    if (row.rolling_radius > 0.0 && row.rolling_coefficient > 0.0) {
        const double max_roll = row.rolling_coefficient * row.rolling_radius * imp.normal_impulse;
        const double wrel = vb.w - va.w;
        const double lambda = std::clamp(imp.rolling_impulse - row.rolling_mass * wrel, -max_roll, max_roll);
        const double delta = lambda - imp.rolling_impulse;
        imp.rolling_impulse = lambda;
        va.w -= row.inv_inertia_a * delta;
        vb.w += row.inv_inertia_b * delta;
    }
    // Coulomb friction.
    {
        const double vt = dot(relative_velocity(row, va, vb), row.tangent);
        const double max_t = row.friction * imp.normal_impulse;
        const double lambda = std::clamp(imp.tangent_impulse - row.tangent_mass * vt, -max_t, max_t);
        const double delta = lambda - imp.tangent_impulse;
        imp.tangent_impulse = lambda;
        apply_impulse(row, va, vb, delta * row.tangent);
    }
}

double kinetic_energy(const World& world, const std::vector<Velocities>& vel) {
    double e = 0.0;
    for (std::size_t i = 0; i < vel.size(); ++i) {
        const Body& b = world.bodies[i];
        e += 0.5 * b.mass * length_squared(vel[i].v) + 0.5 * b.inertia * vel[i].w * vel[i].w;
    }
    return e;
}

void iterate_rows(const World& world, std::vector<ContactRow>& rows, std::vector<Velocities>& vel) {
    Velocities static_a;
    for (int it = 0; it < world.solver.velocity_iterations; ++it) {
        for (auto& row : rows) solve_row(row, velocity_of(vel, static_a, row.contact, true), vel[static_cast<std::size_t>(row.contact.b)]);
    }
}

/// Newton restitution combined with friction on an eccentric contact can
/// inject energy. When the full restitution target would raise the kinetic
/// energy, the restitution targets are scaled down (bisection) to the largest
/// fraction that does not.
void solve_contacts(const World& world, std::vector<ContactRow>& rows, std::vector<Velocities>& vel) {
    const std::vector<Velocities> start = vel;
    const double ke0 = kinetic_energy(world, vel);
    const double limit = ke0 * (1.0 + 1e-12);
    std::vector<double> bias;
    for (const auto& row : rows) bias.push_back(row.restitution_bias);

    auto attempt = [&](double scale) {
        vel = start;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].restitution_bias = scale * bias[i];
            rows[i].impulse.normal_impulse = rows[i].impulse.tangent_impulse = rows[i].impulse.rolling_impulse = 0.0;
        }
        iterate_rows(world, rows, vel);
        return kinetic_energy(world, vel) <= limit;
    };
    if (attempt(1.0) || std::all_of(bias.begin(), bias.end(), [](double b) { return b == 0.0; })) return;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 40; ++k) {
        const double mid = 0.5 * (lo + hi);
        (attempt(mid) ? lo : hi) = mid;
    }
    attempt(lo);
}

bool finite(const BodyState& s) {
    return std::isfinite(s.translation.x) && std::isfinite(s.translation.y) && std::isfinite(s.rotation) &&
           std::isfinite(s.linear_velocity.x) && std::isfinite(s.linear_velocity.y) &&
           std::isfinite(s.angular_velocity);
}

double closing_speed(const Body* a, const Body& b, Vec2 point, Vec2 normal) {
    const auto point_velocity = [&](const Body& body) {
        return body.state.linear_velocity + cross(body.state.angular_velocity, point - body.state.translation);
    };
    const Vec2 rel = point_velocity(b) - (a ? point_velocity(*a) : Vec2{});
    return -dot(rel, normal);
}

void positional_correction(World& world) {
    const auto contacts = detect_collisions(world);
    const double beta = world.solver.baumgarte;
    const double slop = world.solver.slop;
    // Contacts of one pair are consecutive; correct each pair once by its deepest point.
    std::size_t i = 0;
    while (i < contacts.size()) {
        std::size_t j = i;
        double deepest = 0.0;
        Vec2 normal = contacts[i].normal, point = contacts[i].point;
        while (j < contacts.size() && contacts[j].a == contacts[i].a && contacts[j].b == contacts[i].b &&
               contacts[j].a_is_boundary == contacts[i].a_is_boundary) {
            if (contacts[j].penetration > deepest) {
                deepest = contacts[j].penetration;
                normal = contacts[j].normal;
                point = contacts[j].point;
            }
            ++j;
        }
        const Contact& c = contacts[i];
        Body& b = world.bodies[static_cast<std::size_t>(c.b)];
        Body* a = c.a_is_boundary ? nullptr : &world.bodies[static_cast<std::size_t>(c.a)];
        // Closing contacts are left to the next impulse; only resting or
        // separating ones are pushed apart.
        const double correction = closing_speed(a, b, point, normal) > world.solver.restitution_threshold
                                      ? 0.0
                                      : beta * std::max(deepest - slop, 0.0);
        if (correction > 0.0) {
            const double inv_a = a ? a->inverse_mass() : 0.0;
            const double inv_b = b.inverse_mass();
            const double p = correction / (inv_a + inv_b);
            if (a) a->state.translation -= (p * inv_a) * normal;
            b.state.translation += (p * inv_b) * normal;
        }
        i = j;
    }
}

}  // namespace

BodyShape BodyShape::from_primitive(const Primitive& primitive, Vec2 com_px, double ppc) {
    BodyShape s;
    if (primitive.is_circle()) {
        s.circle = true;
        s.radius = primitive.circle.radius / ppc;
        s.bounding_radius = s.radius;
        return s;
    }
    for (const auto& piece : primitive.pieces) {
        ConvexPiece local;
        for (const Vec2& v : piece) {
            local.push_back((1.0 / ppc) * (v - com_px));
            s.bounding_radius = std::max(s.bounding_radius, length(local.back()));
        }
        s.pieces.push_back(std::move(local));
    }
    return s;
}

std::vector<StateDerivative> state_derivative(const World& world, std::span<const ExternalAction> actions,
                                              double time) {
    std::vector<StateDerivative> out(world.bodies.size());
    for (std::size_t i = 0; i < world.bodies.size(); ++i) {
        const Body& b = world.bodies[i];
        out[i].velocity = b.state.linear_velocity;
        out[i].angular_velocity = b.state.angular_velocity;
        out[i].linear_acceleration = world.gravity;
    }
    for (const auto& act : actions) {
        if (!(time >= act.t_start && time < act.t_end)) continue;
        for (std::size_t i = 0; i < world.bodies.size(); ++i) {
            const Body& b = world.bodies[i];
            if (b.id != act.body_id) continue;
            out[i].linear_acceleration += b.inverse_mass() * act.force;
            double torque = act.torque;
            if (act.local_point) {
                const Vec2 r = Rotation::from_angle(b.state.rotation).apply(*act.local_point);
                torque += cross(r, act.force);
            }
            out[i].angular_acceleration += b.inverse_inertia() * torque;
        }
    }
    return out;
}

std::vector<Contact> detect_collisions(const World& world) {
    const WorldShapes ws = world_shapes(world);
    std::vector<Contact> out;
    const int n = static_cast<int>(world.bodies.size());

    for (int i = 0; i < n; ++i) {
        const Body& a = world.bodies[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) {
            const Body& b = world.bodies[static_cast<std::size_t>(j)];
            const double reach = a.shape.bounding_radius + b.shape.bounding_radius;
            if (length_squared(b.state.translation - a.state.translation) > reach * reach) continue;
            const Vec2 ca = a.state.translation, cb = b.state.translation;
            if (a.shape.circle && b.shape.circle) {
                if (auto m = collide_circles(ca, a.shape.radius, cb, b.shape.radius)) emit(out, *m, i, j, false, false);
            } else if (a.shape.circle) {
                for (const auto& piece : ws.pieces[static_cast<std::size_t>(j)])
                    if (auto m = collide_shape_circle(piece, ca, a.shape.radius)) emit(out, *m, i, j, false, true);
            } else if (b.shape.circle) {
                for (const auto& piece : ws.pieces[static_cast<std::size_t>(i)])
                    if (auto m = collide_shape_circle(piece, cb, b.shape.radius)) emit(out, *m, i, j, false, false);
            } else {
                for (const auto& pa : ws.pieces[static_cast<std::size_t>(i)])
                    for (const auto& pb : ws.pieces[static_cast<std::size_t>(j)])
                        if (auto m = collide_shapes(pa, pb)) emit(out, *m, i, j, false, false);
            }
        }
    }
    for (int k = 0; k < static_cast<int>(world.boundaries.size()); ++k) {
        const auto& seg = world.boundaries[static_cast<std::size_t>(k)];
        const ConvexShape& wall = ws.boundaries[static_cast<std::size_t>(k)];
        for (int i = 0; i < n; ++i) {
            const Body& b = world.bodies[static_cast<std::size_t>(i)];
            if (segment_distance(b.state.translation, seg.p0, seg.p1) > b.shape.bounding_radius) continue;
            if (b.shape.circle) {
                if (auto m = collide_shape_circle(wall, b.state.translation, b.shape.radius))
                    emit(out, *m, k, i, true, false);
            } else {
                for (const auto& piece : ws.pieces[static_cast<std::size_t>(i)])
                    if (auto m = collide_shapes(wall, piece)) emit(out, *m, k, i, true, false);
            }
        }
    }
    return out;
}

ContactImpulse resolve_collision(const Contact& contact, World& world) {
    std::vector<Velocities> vel(world.bodies.size());
    for (std::size_t i = 0; i < vel.size(); ++i)
        vel[i] = {world.bodies[i].state.linear_velocity, world.bodies[i].state.angular_velocity};
    Velocities static_a;
    std::vector<ContactRow> rows{prepare_row(world, contact, velocity_of(vel, static_a, contact, true),
                                             vel[static_cast<std::size_t>(contact.b)])};
    solve_contacts(world, rows, vel);
    ContactRow& row = rows.front();
    row.impulse.normal_velocity_after =
        dot(relative_velocity(row, velocity_of(vel, static_a, contact, true), vel[static_cast<std::size_t>(contact.b)]),
            contact.normal);
    for (std::size_t i = 0; i < vel.size(); ++i) {
        world.bodies[i].state.linear_velocity = vel[i].v;
        world.bodies[i].state.angular_velocity = vel[i].w;
    }
    return row.impulse;
}

void advance(World& world, std::span<const ExternalAction> actions, double time, int step_index,
             std::vector<ContactEvent>* log) {
    const double h = world.substep();
    for (int sub = 0; sub < world.substeps; ++sub) {
        const double t = time + sub * h;

        std::vector<Velocities> before(world.bodies.size());
        for (std::size_t i = 0; i < before.size(); ++i)
            before[i] = {world.bodies[i].state.linear_velocity, world.bodies[i].state.angular_velocity};

        // Forces -> velocities.
        const auto deriv = state_derivative(world, actions, t);
        for (std::size_t i = 0; i < world.bodies.size(); ++i) {
            auto& s = world.bodies[i].state;
            s.linear_velocity += h * deriv[i].linear_acceleration;
            s.angular_velocity += h * deriv[i].angular_acceleration;
        }

        // Contact impulses.
        const auto contacts = detect_collisions(world);
        if (!contacts.empty()) {
            std::vector<Velocities> vel(world.bodies.size());
            for (std::size_t i = 0; i < vel.size(); ++i)
                vel[i] = {world.bodies[i].state.linear_velocity, world.bodies[i].state.angular_velocity};
            Velocities static_a;
            std::vector<ContactRow> rows;
            rows.reserve(contacts.size());
            for (const auto& c : contacts)
                rows.push_back(prepare_row(world, c, velocity_of(before, static_a, c, true),
                                           before[static_cast<std::size_t>(c.b)]));
            solve_contacts(world, rows, vel);
            for (std::size_t i = 0; i < vel.size(); ++i) {
                world.bodies[i].state.linear_velocity = vel[i].v;
                world.bodies[i].state.angular_velocity = vel[i].w;
            }
            if (log) {
                for (auto& row : rows) {
                    Velocities& va = velocity_of(vel, static_a, row.contact, true);
                    row.impulse.normal_velocity_after =
                        dot(relative_velocity(row, va, vel[static_cast<std::size_t>(row.contact.b)]), row.contact.normal);
                    ContactEvent ev;
                    ev.step = step_index;
                    ev.substep = sub;
                    ev.contact = row.contact;
                    ev.body_a_id = row.contact.a_is_boundary ? -1 : world.bodies[static_cast<std::size_t>(row.contact.a)].id;
                    ev.body_b_id = world.bodies[static_cast<std::size_t>(row.contact.b)].id;
                    ev.impulse = row.impulse;
                    log->push_back(ev);
                }
            }
        }

        // Velocities -> positions.
        for (auto& body : world.bodies) {
            auto& s = body.state;
            s.translation += h * s.linear_velocity;
            s.rotation = wrap_angle(s.rotation + h * s.angular_velocity);
        }
        positional_correction(world);

        for (const auto& body : world.bodies) {
            if (!finite(body.state)) throw NonFinite(static_cast<std::size_t>(step_index));
        }
    }
}

std::vector<Primitive> fit_primitives(const SceneBundle& bundle) {
    std::vector<Primitive> out;
    out.reserve(bundle.objects.size());
    for (const auto& o : bundle.objects) out.push_back(choose_primitive(o.mask));
    return out;
}

World make_world(const SceneBundle& bundle, std::span<const Primitive> primitives) {
    if (primitives.size() != bundle.objects.size())
        throw ValidationError("primitives", "one primitive per object is required");
    const double ppc = bundle.sim.pixels_per_cm;
    World w;
    w.gravity = bundle.sim.gravity;
    w.dt = bundle.sim.dt;
    w.substeps = bundle.sim.substeps;
    w.solver = {bundle.sim.velocity_iterations, bundle.sim.baumgarte, bundle.sim.slop, bundle.sim.rolling_resistance,
                bundle.sim.restitution_threshold};
    for (std::size_t i = 0; i < bundle.objects.size(); ++i) {
        const auto& o = bundle.objects[i];
        const MassProperties mp = mass_properties(primitives[i], o.mass);
        Body b;
        b.id = o.id;
        b.shape = BodyShape::from_primitive(primitives[i], mp.center_of_mass, ppc);
        b.mass = o.mass;
        b.inertia = mp.inertia / (ppc * ppc);
        b.friction = o.friction;
        b.elasticity = o.elasticity;
        b.state.translation = (1.0 / ppc) * mp.center_of_mass;
        b.state.linear_velocity = o.initial_velocity;
        b.state.angular_velocity = o.initial_angular_velocity;
        w.bodies.push_back(std::move(b));
    }
    for (const auto& seg : bundle.boundaries) {
        w.boundaries.push_back({(1.0 / ppc) * seg.p0, (1.0 / ppc) * seg.p1, seg.friction, seg.elasticity});
    }
    return w;
}

std::vector<ExternalAction> make_actions(const SceneBundle& bundle, const World& world) {
    std::vector<ExternalAction> out;
    const double ppc = bundle.sim.pixels_per_cm;
    for (std::size_t i = 0; i < bundle.objects.size(); ++i) {
        const auto& o = bundle.objects[i];
        if (!o.applied_force && !o.applied_torque) continue;
        ExternalAction a;
        a.body_id = o.id;
        a.force = o.applied_force.value_or(Vec2{});
        a.torque = o.applied_torque.value_or(0.0);
        a.t_start = 0.0;
        a.t_end = o.force_duration > 0.0 ? o.force_duration : bundle.sim.dt;
        if (o.application_point) a.local_point = (1.0 / ppc) * *o.application_point - world.bodies[i].state.translation;
        out.push_back(a);
    }
    return out;
}

Trajectory simulate(World world, std::span<const ExternalAction> actions, int steps, double pixels_per_cm) {
    if (steps < 1) throw ValidationError("sim.steps", "must be >= 1");
    Trajectory traj;
    traj.dt = world.dt;
    traj.pixels_per_cm = pixels_per_cm;
    for (const auto& b : world.bodies) traj.body_ids.push_back(b.id);
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    auto snapshot = [&] {
        std::vector<BodyState> s;
        s.reserve(world.bodies.size());
        for (const auto& b : world.bodies) s.push_back(b.state);
        traj.states.push_back(std::move(s));
    };
    snapshot();
    for (int k = 0; k < steps; ++k) {
        advance(world, actions, k * world.dt, k + 1, &traj.contacts);
        snapshot();
    }
    return traj;
}

Trajectory simulate(const SceneBundle& bundle, std::span<const Primitive> primitives) {
    World world = make_world(bundle, primitives);
    const auto actions = make_actions(bundle, world);
    return simulate(std::move(world), actions, bundle.sim.steps, bundle.sim.pixels_per_cm);
}

Trajectory simulate(const SceneBundle& bundle) {
    const auto primitives = fit_primitives(bundle);
    return simulate(bundle, primitives);
}

std::vector<int> sample_indices(int steps, int n) {
    if (n < 1 || n > steps + 1)
        throw ValidationError("num_frames", "must lie in [1, " + std::to_string(steps + 1) + "]");
    if (n == 1) return {0};
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n));
    const long long denom = 2LL * (n - 1);
    for (int k = 0; k < n; ++k) out.push_back(static_cast<int>((2LL * k * steps + (n - 1)) / denom));
    return out;
}

std::vector<FrameSample> sample_frames(const Trajectory& traj, int n) {
    if (traj.states.empty()) throw ValidationError("trajectory", "empty trajectory");
    const auto idx = sample_indices(static_cast<int>(traj.steps()), n);
    const double ppc = traj.pixels_per_cm;
    std::vector<FrameSample> out;
    out.reserve(idx.size());
    for (int step : idx) {
        FrameSample fs;
        fs.step = step;
        const auto& now = traj.states[static_cast<std::size_t>(step)];
        for (std::size_t i = 0; i < now.size(); ++i) {
            const BodyState& s0 = traj.states[0][i];
            const BodyState& s = now[i];
            fs.transforms.push_back(Affine2::rigid(s.rotation - s0.rotation, ppc * s0.translation, ppc * s.translation));
        }
        out.push_back(std::move(fs));
    }
    return out;
}

double kinetic_energy(const World& world) {
    double e = 0.0;
    for (const auto& b : world.bodies) {
        e += 0.5 * b.mass * length_squared(b.state.linear_velocity) +
             0.5 * b.inertia * b.state.angular_velocity * b.state.angular_velocity;
    }
    return e;
}

Vec2 linear_momentum(const World& world) {
    Vec2 p{};
    for (const auto& b : world.bodies) p += b.mass * b.state.linear_velocity;
    return p;
}

}  // namespace imdyn
