#include "imdyn/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "imdyn/denoiser_wire.hpp"
#include "imdyn/image_io.hpp"

namespace imdyn {
namespace {

using json = nlohmann::json;

// ---- small parsing helpers -------------------------------------------------

double parse_number(std::string_view s, const std::string& field) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v))
        throw ValidationError(field, "expected a number, got '" + std::string(s) + "'");
    return v;
}

int parse_id(std::string_view s, const std::string& field) {
    int v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw ValidationError(field, "expected an integer object id, got '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    for (;;) {
        const auto pos = s.find(sep);
        out.push_back(s.substr(0, pos));
        if (pos == std::string_view::npos) return out;
        s.remove_prefix(pos + 1);
    }
}

std::pair<int, std::vector<double>> id_and_values(std::string_view text, const std::string& flag) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ValidationError(flag, "expected ID:values");
    const int id = parse_id(text.substr(0, colon), flag);
    std::vector<double> values;
    for (auto part : split(text.substr(colon + 1), ',')) values.push_back(parse_number(part, flag));
    return {id, values};
}

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string numbered(const char* dir, const char* stem, int k, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s/%s_%03d.%s", dir, stem, k, ext);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("short write to " + path.string());
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256 update failed");
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw Error("sha256 final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 15]);
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

void hash_file(Sha256& h, const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingAsset(p.string());
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
}

json vec2(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec2_from(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ValidationError(field, "expected [x, y]");
    const Vec2 v{j[0].get<double>(), j[1].get<double>()};
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw ValidationError(field, "must be finite");
    return v;
}

double number_from(const json& j, const std::string& field) {
    if (!j.is_number()) throw ValidationError(field, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
    return v;
}

class StageClock {
public:
    StageClock(RunManifest& m, std::string stage, const StageObserver& observe) : m_(m), stage_(std::move(stage)) {
        if (observe) observe(stage_);
    }
    ~StageClock() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start_;
        m_.timings.push_back({stage_, d.count()});
    }

private:
    RunManifest& m_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

// ---- overrides ------------------------------------------------------------------

ObjectOverride parse_force_flag(std::string_view text) {
    const auto [id, v] = id_and_values(text, "--force");
    if (v.size() != 2 && v.size() != 4) throw ValidationError("--force", "expected ID:fx,fy[,px,py]");
    ObjectOverride o;
    o.id = id;
    o.applied_force = Vec2{v[0], v[1]};
    if (v.size() == 4) o.application_point = Vec2{v[2], v[3]};
    return o;
}

ObjectOverride parse_torque_flag(std::string_view text) {
    const auto [id, v] = id_and_values(text, "--torque");
    if (v.size() != 1) throw ValidationError("--torque", "expected ID:tau");
    ObjectOverride o;
    o.id = id;
    o.applied_torque = v[0];
    return o;
}

void merge_override(std::vector<ObjectOverride>& into, const ObjectOverride& o) {
    auto it = std::find_if(into.begin(), into.end(), [&](const ObjectOverride& x) { return x.id == o.id; });
    if (it == into.end()) {
        into.push_back(o);
        return;
    }
    if (o.applied_force) it->applied_force = o.applied_force;
    if (o.application_point) it->application_point = o.application_point;
    if (o.applied_torque) it->applied_torque = o.applied_torque;
    if (o.initial_velocity) it->initial_velocity = o.initial_velocity;
    if (o.initial_angular_velocity) it->initial_angular_velocity = o.initial_angular_velocity;
    if (o.force_duration) it->force_duration = o.force_duration;
}

void apply_options(SceneBundle& b, const RunOptions& opt) {
    if (opt.steps) b.sim.steps = *opt.steps;
    if (opt.dt) b.sim.dt = *opt.dt;
    if (opt.frames) b.render.num_frames = *opt.frames;
    if (opt.resolution) std::tie(b.render.resolution_width, b.render.resolution_height) = *opt.resolution;
    for (std::size_t i = 0; i < opt.overrides.size(); ++i) {
        const ObjectOverride& o = opt.overrides[i];
        auto it = std::find_if(b.objects.begin(), b.objects.end(), [&](const SceneObject& s) { return s.id == o.id; });
        if (it == b.objects.end())
            throw ValidationError("overrides[" + std::to_string(i) + "].id",
                                  "no object with id " + std::to_string(o.id));
        if (o.applied_force) it->applied_force = o.applied_force;
        if (o.application_point) it->application_point = o.application_point;
        if (o.applied_torque) it->applied_torque = o.applied_torque;
        if (o.initial_velocity) it->initial_velocity = *o.initial_velocity;
        if (o.initial_angular_velocity) it->initial_angular_velocity = *o.initial_angular_velocity;
        if (o.force_duration) it->force_duration = *o.force_duration;
    }
    validate(b);
}

json to_json(const ObjectOverride& o) {
    json j{{"id", o.id}};
    if (o.applied_force) j["applied_force"] = vec2(*o.applied_force);
    if (o.application_point) j["application_point"] = vec2(*o.application_point);
    if (o.applied_torque) j["applied_torque"] = *o.applied_torque;
    if (o.initial_velocity) j["initial_velocity"] = vec2(*o.initial_velocity);
    if (o.initial_angular_velocity) j["initial_angular_velocity"] = *o.initial_angular_velocity;
    if (o.force_duration) j["force_duration"] = *o.force_duration;
    return j;
}

ObjectOverride override_from_json(const json& j, const std::string& field) {
    if (!j.is_object()) throw ValidationError(field, "expected an object");
    if (!j.contains("id") || !j["id"].is_number_integer()) throw ValidationError(field + ".id", "expected an integer");
    ObjectOverride o;
    o.id = j["id"].get<int>();
    for (const auto& [key, value] : j.items()) {
        const std::string f = field + "." + key;
        if (key == "id") continue;
        if (key == "applied_force") o.applied_force = vec2_from(value, f);
        else if (key == "application_point") o.application_point = vec2_from(value, f);
        else if (key == "applied_torque") o.applied_torque = number_from(value, f);
        else if (key == "initial_velocity") o.initial_velocity = vec2_from(value, f);
        else if (key == "initial_angular_velocity") o.initial_angular_velocity = number_from(value, f);
        else if (key == "force_duration") o.force_duration = number_from(value, f);
        else throw ValidationError(f, "unknown override field");
    }
    return o;
}

// ---- hashing ----------------------------------------------------------------------

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string bundle_fingerprint(const std::filesystem::path& path) {
    Sha256 h;
    if (std::filesystem::is_regular_file(path)) {
        hash_file(h, path);
        return h.hex();
    }
    if (!std::filesystem::is_directory(path)) throw MissingAsset(path.string());
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), path).generic_string());
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
        h.update(rel);
        h.update("\0", 1);
        h.update(std::to_string(std::filesystem::file_size(path / rel)));
        h.update("\0", 1);
        hash_file(h, path / rel);
    }
    return h.hex();
}

std::string bundle_fingerprint(const SceneBundle& b) {
    Sha256 h;
    h.update(manifest_text(b));
    auto raster = [&](const auto& r) {
        h.update(std::to_string(r.width()) + "x" + std::to_string(r.height()));
        h.update(r.data(), r.size() * sizeof(*r.data()));
    };
    raster(b.image);
    raster(b.background);
    for (const auto& o : b.objects) {
        raster(o.mask);
        if (o.albedo) raster(*o.albedo);
        if (o.normal) raster(*o.normal);
    }
    return h.hex();
}

std::string make_run_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                            static_cast<std::uint64_t>(
                                                std::chrono::steady_clock::now().time_since_epoch().count())};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

// ---- tables -----------------------------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& t) {
    auto out = open_out(path);
    out << "step,time,body_id,x,y,rotation,vx,vy,omega\n";
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        const std::string time = fmt(static_cast<double>(k) * t.dt);
        for (std::size_t i = 0; i < t.body_ids.size(); ++i) {
            const BodyState& s = t.states[k][i];
            out << k << ',' << time << ',' << t.body_ids[i] << ',' << fmt(s.translation.x) << ','
                << fmt(s.translation.y) << ',' << fmt(s.rotation) << ',' << fmt(s.linear_velocity.x) << ','
                << fmt(s.linear_velocity.y) << ',' << fmt(s.angular_velocity) << '\n';
        }
    }
    finish(out, path);
}

Trajectory read_trajectory_csv(const std::filesystem::path& path, double pixels_per_cm) {
    std::ifstream in(path);
    if (!in) throw MissingAsset(path.string());
    std::string line;
    if (!std::getline(in, line) || line != "step,time,body_id,x,y,rotation,vx,vy,omega")
        throw ValidationError("trajectory", "unexpected header in " + path.string());
    Trajectory t;
    t.pixels_per_cm = pixels_per_cm;
    int lineno = 1;
    double time1 = 0.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        const std::string field = "trajectory line " + std::to_string(lineno);
        if (cols.size() != 9) throw ValidationError(field, "expected 9 columns");
        const int step = parse_id(cols[0], field);
        const int id = parse_id(cols[2], field);
        if (step < 0 || static_cast<std::size_t>(step) > t.states.size())
            throw ValidationError(field, "steps must be consecutive from 0");
        if (static_cast<std::size_t>(step) == t.states.size()) t.states.emplace_back();
        auto& row = t.states[static_cast<std::size_t>(step)];
        if (step == 0) t.body_ids.push_back(id);
        else if (row.size() >= t.body_ids.size() || t.body_ids[row.size()] != id)
            throw ValidationError(field, "body order differs from step 0");
        if (step == 1) time1 = parse_number(cols[1], field);
        BodyState s;
        s.translation = {parse_number(cols[3], field), parse_number(cols[4], field)};
        s.rotation = parse_number(cols[5], field);
        s.linear_velocity = {parse_number(cols[6], field), parse_number(cols[7], field)};
        s.angular_velocity = parse_number(cols[8], field);
        row.push_back(s);
    }
    if (t.states.empty()) throw ValidationError("trajectory", "no rows in " + path.string());
    for (const auto& row : t.states)
        if (row.size() != t.body_ids.size()) throw ValidationError("trajectory", "incomplete step");
    if (t.states.size() > 1) t.dt = time1;
    return t;
}

void write_contacts_csv(const std::filesystem::path& path, const Trajectory& t) {
    auto out = open_out(path);
    out << "step,substep,body_a,body_b,px,py,nx,ny,penetration,normal_impulse,tangent_impulse,rolling_impulse,"
           "vn_before,vn_after\n";
    for (const auto& e : t.contacts) {
        const auto& c = e.contact;
        const auto& j = e.impulse;
        out << e.step << ',' << e.substep << ',' << e.body_a_id << ',' << e.body_b_id << ',' << fmt(c.point.x) << ','
            << fmt(c.point.y) << ',' << fmt(c.normal.x) << ',' << fmt(c.normal.y) << ',' << fmt(c.penetration) << ','
            << fmt(j.normal_impulse) << ',' << fmt(j.tangent_impulse) << ',' << fmt(j.rolling_impulse) << ','
            << fmt(j.normal_velocity_before) << ',' << fmt(j.normal_velocity_after) << '\n';
    }
    finish(out, path);
}

std::vector<Polyline> summarize(const Trajectory& t, int max_points) {
    if (t.states.empty()) throw ValidationError("trajectory", "empty trajectory");
    if (max_points < 1) throw ValidationError("max_points", "must be >= 1");
    const int steps = static_cast<int>(t.steps());
    const auto idx = sample_indices(steps, std::min(max_points, steps + 1));
    std::vector<Polyline> out;
    for (std::size_t i = 0; i < t.body_ids.size(); ++i) {
        Polyline p;
        p.id = t.body_ids[i];
        for (int k : idx) {
            const BodyState& s = t.states[static_cast<std::size_t>(k)][i];
            const std::array<double, 3> pt{t.pixels_per_cm * s.translation.x, t.pixels_per_cm * s.translation.y,
                                           s.rotation};
            if (p.points.empty() || p.points.back() != pt) p.points.push_back(pt);
        }
        out.push_back(std::move(p));
    }
    return out;
}

double arc_length(const Polyline& p) {
    double len = 0.0;
    for (std::size_t i = 1; i < p.points.size(); ++i)
        len += std::hypot(p.points[i][0] - p.points[i - 1][0], p.points[i][1] - p.points[i - 1][1]);
    return len;
}

// ---- manifest ------------------------------------------------------------------------

std::vector<std::string> RunArtifacts::all() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& s) {
        if (!s.empty()) out.push_back(s);
    };
    auto add_all = [&](const std::vector<std::string>& v) { out.insert(out.end(), v.begin(), v.end()); };
    add(trajectory);
    add(contacts);
    add_all(frames);
    add_all(flow);
    add_all(masks);
    add_all(composited);
    add_all(albedo);
    add_all(normal);
    add(guidance_latents);
    add(refined_latents);
    add_all(refined_frames);
    return out;
}

json to_json(const RunManifest& m) {
    const auto& a = m.artifacts;
    json timings = json::array();
    for (const auto& t : m.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    return {{"run_id", m.run_id},
            {"bundle_fingerprint", m.bundle_fingerprint},
            {"config", m.config},
            {"frame_steps", m.frame_steps},
            {"artifacts",
             {{"trajectory", a.trajectory},
              {"contacts", a.contacts},
              {"frames", a.frames},
              {"flow", a.flow},
              {"masks", a.masks},
              {"composited", a.composited},
              {"albedo", a.albedo},
              {"normal", a.normal},
              {"guidance_latents", a.guidance_latents},
              {"refined_latents", a.refined_latents},
              {"refined_frames", a.refined_frames}}},
            {"timings", timings}};
}

RunManifest manifest_from_json(const json& j) {
    try {
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.bundle_fingerprint = j.at("bundle_fingerprint").get<std::string>();
        m.config = j.value("config", json::object());
        m.frame_steps = j.value("frame_steps", std::vector<int>{});
        const json& a = j.at("artifacts");
        auto& r = m.artifacts;
        r.trajectory = a.value("trajectory", "");
        r.contacts = a.value("contacts", "");
        r.frames = a.value("frames", std::vector<std::string>{});
        r.flow = a.value("flow", std::vector<std::string>{});
        r.masks = a.value("masks", std::vector<std::string>{});
        r.composited = a.value("composited", std::vector<std::string>{});
        r.albedo = a.value("albedo", std::vector<std::string>{});
        r.normal = a.value("normal", std::vector<std::string>{});
        r.guidance_latents = a.value("guidance_latents", "");
        r.refined_latents = a.value("refined_latents", "");
        r.refined_frames = a.value("refined_frames", std::vector<std::string>{});
        for (const auto& t : j.value("timings", json::array()))
            m.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
        return m;
    } catch (const json::exception& e) {
        throw ValidationError("run.json", e.what());
    }
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    const auto path = dir / "run.json";
    auto out = open_out(path);
    out << to_json(m).dump(2) << '\n';
    finish(out, path);
}

RunManifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "run.json");
    if (!in) throw MissingAsset((dir / "run.json").string());
    try {
        return manifest_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ValidationError("run.json", e.what());
    }
}

// ---- stages -------------------------------------------------------------------------

Trajectory run_simulate_stage(const SceneBundle& bundle, const std::filesystem::path& dir, RunManifest& m,
                              const StageObserver& observe) {
    std::vector<Primitive> primitives;
    {
        StageClock clock(m, "fit", observe);
        primitives = fit_primitives(bundle);
    }
    Trajectory traj;
    {
        StageClock clock(m, "simulate", observe);
        traj = simulate(bundle, primitives);
    }
    StageClock clock(m, "write_trajectory", observe);
    write_trajectory_csv(dir / "trajectory.csv", traj);
    write_contacts_csv(dir / "contacts.csv", traj);
    m.artifacts.trajectory = "trajectory.csv";
    m.artifacts.contacts = "contacts.csv";
    return traj;
}

std::vector<FramePack> run_render_stage(const SceneBundle& bundle, const Trajectory& traj,
                                        const std::filesystem::path& dir, RunManifest& m, int threads,
                                        const StageObserver& observe) {
    std::vector<FramePack> packs;
    {
        StageClock clock(m, "render", observe);
        const auto samples = sample_frames(traj, bundle.render.num_frames);
        packs = render_sequence(bundle, samples, threads);
    }
    StageClock clock(m, "write_frames", observe);
    auto& a = m.artifacts;
    a.frames.clear();
    a.flow.clear();
    a.masks.clear();
    m.frame_steps.clear();
    for (std::size_t k = 0; k < packs.size(); ++k) {
        const FramePack& fp = packs[k];
        const int i = static_cast<int>(k);
        m.frame_steps.push_back(fp.step);
        a.frames.push_back(numbered("frames", "frame", i, "png"));
        write_png_rgb(dir / a.frames.back(), to_rgb8(fp.relit));
        Mask cover(fp.coverage.width(), fp.coverage.height());
        for (std::size_t p = 0; p < cover.size(); ++p) cover.pixels()[p] = fp.coverage.pixels()[p] > 0.0f;
        a.masks.push_back(numbered("masks", "mask", i, "png"));
        write_png_mask(dir / a.masks.back(), cover);
        if (fp.flow) {
            a.flow.push_back(numbered("flow", "flow", i, "flo"));
            write_flo(dir / a.flow.back(), *fp.flow);
        }
        if (bundle.render.emit_intermediates) {
            a.composited.push_back(numbered("composited", "frame", i, "png"));
            write_png_rgb(dir / a.composited.back(), to_rgb8(fp.composited));
            a.albedo.push_back(numbered("albedo", "albedo", i, "png"));
            write_png_rgb(dir / a.albedo.back(), to_rgb8(fp.albedo));
            a.normal.push_back(numbered("normal", "normal", i, "png"));
            write_png_rgb(dir / a.normal.back(), encode_normals(fp.normal));
        }
    }
    return packs;
}

RefineOutput refine_frames(std::span<const FramePack> frames, const RunOptions& opt) {
    RefineOutput out;
    out.guidance = pixel_latents(frames);
    const NoiseSchedule schedule = NoiseSchedule::linear();
    const RefinePlan plan = default_plan(latent_foreground(frames), opt.seed);
    const EchoContext echo{out.guidance, schedule, opt.seed};
    auto denoiser = make_denoiser(opt.denoiser_endpoint, opt.denoiser_timeout, &echo);
    out.refined = refine(out.guidance, plan, schedule, *denoiser, &out.trace);
    return out;
}

RefineOutput run_refine_stage(std::span<const FramePack> frames, const RunOptions& opt,
                              const std::filesystem::path& dir, RunManifest& m, const StageObserver& observe) {
    RefineOutput out;
    {
        StageClock clock(m, "refine", observe);
        out = refine_frames(frames, opt);
    }
    StageClock clock(m, "write_latents", observe);
    auto& a = m.artifacts;
    std::error_code ec;
    std::filesystem::create_directories(dir / "latents", ec);
    if (ec) throw IoError("cannot create " + (dir / "latents").string() + ": " + ec.message());
    a.guidance_latents = "latents/guidance.npy";
    a.refined_latents = "latents/refined.npy";
    save_npy(dir / a.guidance_latents, out.guidance);
    save_npy(dir / a.refined_latents, out.refined);
    a.refined_frames.clear();
    const auto decoded = decode_pixel_latents(out.refined);
    for (std::size_t k = 0; k < decoded.size(); ++k) {
        a.refined_frames.push_back(numbered("refined", "frame", static_cast<int>(k), "png"));
        write_png_rgb(dir / a.refined_frames.back(), to_rgb8(decoded[k]));
    }
    return out;
}

std::vector<FramePack> load_rendered_frames(const std::filesystem::path& dir, const RunManifest& m) {
    const auto& a = m.artifacts;
    if (a.frames.empty()) throw ValidationError("frames", "run has no rendered frames");
    if (a.masks.size() != a.frames.size()) throw ValidationError("masks", "one mask per frame is required");
    std::vector<FramePack> out(a.frames.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].relit = to_float(read_png_rgb(dir / a.frames[k]));
        const Mask mask = read_png_mask(dir / a.masks[k]);
        require_same_shape(out[k].relit, mask, "mask");
        out[k].coverage = AlphaMap(mask.width(), mask.height());
        for (std::size_t p = 0; p < mask.size(); ++p) out[k].coverage.pixels()[p] = mask.pixels()[p] ? 1.0f : 0.0f;
        if (k < m.frame_steps.size()) out[k].step = m.frame_steps[k];
    }
    return out;
}

json config_snapshot(const SceneBundle& b, const RunOptions& opt) {
    json overrides = json::array();
    for (const auto& o : opt.overrides) overrides.push_back(to_json(o));
    const RefinePlan plan = default_plan();
    return {{"steps", b.sim.steps},
            {"dt", b.sim.dt},
            {"substeps", b.sim.substeps},
            {"gravity", vec2(b.sim.gravity)},
            {"pixels_per_cm", b.sim.pixels_per_cm},
            {"num_frames", b.render.num_frames},
            {"resolution", {b.render.resolution_width, b.render.resolution_height}},
            {"emit_flow", b.render.emit_flow},
            {"seed", opt.seed},
            {"refine", opt.refine},
            {"denoiser_endpoint", opt.denoiser_endpoint},
            {"noise_strength", plan.noise_strength},
            {"fusion_timestamp", plan.fusion_timestamp},
            {"total_steps", plan.total_steps},
            {"overrides", overrides}};
}

RunManifest run_pipeline(const SceneBundle& bundle, const RunOptions& opt, const std::filesystem::path& dir,
                         std::string run_id, std::string fingerprint, const StageObserver& observe) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    RunManifest m;
    m.run_id = std::move(run_id);
    m.bundle_fingerprint = std::move(fingerprint);
    m.config = config_snapshot(bundle, opt);
    const Trajectory traj = run_simulate_stage(bundle, dir, m, observe);
    const auto packs = run_render_stage(bundle, traj, dir, m, opt.threads, observe);
    if (opt.refine) run_refine_stage(packs, opt, dir, m, observe);
    write_manifest(dir, m);
    return m;
}

}  // namespace imdyn
