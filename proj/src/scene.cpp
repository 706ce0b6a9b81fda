#include "imdyn/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "imdyn/image_io.hpp"

namespace imdyn {

using json = nlohmann::json;

namespace {

using Bytes = std::vector<std::uint8_t>;

/// Read-only view of a bundle's files, keyed by relative path.
class AssetSource {
public:
    virtual ~AssetSource() = default;
    virtual bool exists(const std::string& rel) const = 0;
    virtual Bytes read(const std::string& rel) const = 0;
};

Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingAsset(p.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

class DirectorySource final : public AssetSource {
public:
    explicit DirectorySource(std::filesystem::path root) : root_(std::move(root)) {}
    bool exists(const std::string& rel) const override { return std::filesystem::is_regular_file(root_ / rel); }
    Bytes read(const std::string& rel) const override {
        if (!exists(rel)) throw MissingAsset(rel);
        return read_file(root_ / rel);
    }

private:
    std::filesystem::path root_;
};

std::size_t octal_field(const std::uint8_t* field, std::size_t len, const std::filesystem::path& path) {
    const char* first = reinterpret_cast<const char*>(field);
    const char* last = first + len;
    while (first < last && *first == ' ') ++first;
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(first, last, value, 8);
    if (ec != std::errc{} || (end < last && *end != '\0' && *end != ' '))
        throw IoError("malformed tar header: " + path.string());
    return value;
}

/// Uncompressed POSIX (ustar) archive held in memory.
class TarSource final : public AssetSource {
public:
    explicit TarSource(const std::filesystem::path& path) {
        const Bytes data = read_file(path);
        std::size_t off = 0;
        while (off + 512 <= data.size()) {
            const std::uint8_t* hdr = data.data() + off;
            if (std::all_of(hdr, hdr + 512, [](std::uint8_t b) { return b == 0; })) break;
            std::string name(reinterpret_cast<const char*>(hdr), strnlen(reinterpret_cast<const char*>(hdr), 100));
            const std::string prefix(reinterpret_cast<const char*>(hdr + 345),
                                     strnlen(reinterpret_cast<const char*>(hdr + 345), 155));
            if (!prefix.empty()) name = prefix + "/" + name;
            const std::size_t size = octal_field(hdr + 124, 12, path);
            const char type = static_cast<char>(hdr[156]);
            off += 512;
            if (off + size > data.size()) throw IoError("truncated tar archive: " + path.string());
            if (type == '0' || type == '\0') {
                while (name.starts_with("./")) name.erase(0, 2);
                files_[name] = Bytes(data.begin() + static_cast<std::ptrdiff_t>(off),
                                     data.begin() + static_cast<std::ptrdiff_t>(off + size));
            }
            off += (size + 511) / 512 * 512;
        }
        // Archives commonly wrap the bundle in one top-level directory.
        if (!files_.contains("manifest.json")) {
            for (const auto& [name, _] : files_) {
                const auto slash = name.find('/');
                if (slash != std::string::npos && name.substr(slash + 1) == "manifest.json") {
                    strip_ = name.substr(0, slash + 1);
                    break;
                }
            }
        }
    }
    bool exists(const std::string& rel) const override { return files_.contains(strip_ + rel); }
    Bytes read(const std::string& rel) const override {
        auto it = files_.find(strip_ + rel);
        if (it == files_.end()) throw MissingAsset(rel);
        return it->second;
    }

private:
    std::map<std::string, Bytes> files_;
    std::string strip_;
};

// ---- manifest field access ------------------------------------------------

const json& require(const json& j, const char* key, const std::string& field) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(field, "required field is missing");
    return j.at(key);
}

double as_number(const json& j, const std::string& field) {
    if (!j.is_number()) throw ValidationError(field, "expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ValidationError(field, "expected an integer");
    return j.get<int>();
}

bool as_bool(const json& j, const std::string& field) {
    if (!j.is_boolean()) throw ValidationError(field, "expected a boolean");
    return j.get<bool>();
}

Vec2 as_vec2(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2) throw ValidationError(field, "expected [x, y]");
    return {as_number(j[0], field), as_number(j[1], field)};
}

std::string as_string(const json& j, const std::string& field) {
    if (!j.is_string()) throw ValidationError(field, "expected a string");
    return j.get<std::string>();
}

template <typename T, typename F>
void optional_field(const json& j, const char* key, const std::string& parent, T& out, F convert) {
    if (j.is_object() && j.contains(key) && !j.at(key).is_null()) out = convert(j.at(key), parent + "." + key);
}

json vec2_json(Vec2 v) { return json::array({v.x, v.y}); }

std::string object_dir(int id) { return "objects/" + std::to_string(id) + "/"; }

SceneObject parse_object(const json& j, const std::string& field, const AssetSource& src) {
    SceneObject o;
    o.id = as_int(require(j, "id", field), field + ".id");
    const std::string f = "objects." + std::to_string(o.id);
    o.mass = as_number(require(j, "mass", f + ".mass"), f + ".mass");
    o.friction = as_number(require(j, "friction", f + ".friction"), f + ".friction");
    o.elasticity = as_number(require(j, "elasticity", f + ".elasticity"), f + ".elasticity");
    optional_field(j, "initial_velocity", f, o.initial_velocity, as_vec2);
    optional_field(j, "initial_angular_velocity", f, o.initial_angular_velocity, as_number);
    optional_field(j, "applied_force", f, o.applied_force, as_vec2);
    optional_field(j, "application_point", f, o.application_point, as_vec2);
    optional_field(j, "applied_torque", f, o.applied_torque, as_number);
    optional_field(j, "force_duration", f, o.force_duration, as_number);
    optional_field(j, "z_order", f, o.z_order, as_int);

    std::string mask_path = object_dir(o.id) + "mask.png";
    std::string albedo_path = object_dir(o.id) + "albedo.png";
    std::string normal_path = object_dir(o.id) + "normal.png";
    optional_field(j, "mask", f, mask_path, as_string);
    const bool albedo_named = j.contains("albedo") && !j.at("albedo").is_null();
    const bool normal_named = j.contains("normal") && !j.at("normal").is_null();
    optional_field(j, "albedo", f, albedo_path, as_string);
    optional_field(j, "normal", f, normal_path, as_string);

    o.mask = decode_png_mask(src.read(mask_path), mask_path);
    // Intrinsic assets are optional; a path named explicitly must exist.
    if (albedo_named || src.exists(albedo_path)) o.albedo = decode_png_rgb(src.read(albedo_path), albedo_path);
    if (normal_named || src.exists(normal_path)) o.normal = decode_png_rgb(src.read(normal_path), normal_path);
    return o;
}

BoundarySegment parse_boundary(const json& j, const std::string& field) {
    BoundarySegment b;
    b.p0 = as_vec2(require(j, "p0", field + ".p0"), field + ".p0");
    b.p1 = as_vec2(require(j, "p1", field + ".p1"), field + ".p1");
    optional_field(j, "orientation", field, b.orientation, [](const json& v, const std::string& fld) {
        try {
            return parse_orientation(as_string(v, fld));
        } catch (const ValidationError&) {
            throw ValidationError(fld, "expected horizontal, vertical or free");
        }
    });
    optional_field(j, "friction", field, b.friction, as_number);
    optional_field(j, "elasticity", field, b.elasticity, as_number);
    return b;
}

SceneBundle parse_manifest(const json& m, const AssetSource& src) {
    if (!m.is_object()) throw ValidationError("manifest", "expected a JSON object");
    SceneBundle b;
    std::string image_path = "image.png";
    std::string background_path = "background.png";
    optional_field(m, "image", "manifest", image_path, as_string);
    optional_field(m, "background", "manifest", background_path, as_string);
    b.image = decode_png_rgb(src.read(image_path), image_path);
    b.background = decode_png_rgb(src.read(background_path), background_path);
    b.width = b.image.width();
    b.height = b.image.height();
    if (m.contains("width") && as_int(m["width"], "width") != b.width)
        throw ShapeError("manifest width does not match image.png");
    if (m.contains("height") && as_int(m["height"], "height") != b.height)
        throw ShapeError("manifest height does not match image.png");

    const json& objects = require(m, "objects", "objects");
    if (!objects.is_array()) throw ValidationError("objects", "expected an array");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        b.objects.push_back(parse_object(objects[i], "objects[" + std::to_string(i) + "]", src));
    }
    if (m.contains("boundaries")) {
        const json& bs = m["boundaries"];
        if (!bs.is_array()) throw ValidationError("boundaries", "expected an array");
        for (std::size_t i = 0; i < bs.size(); ++i) {
            b.boundaries.push_back(parse_boundary(bs[i], "boundaries[" + std::to_string(i) + "]"));
        }
    }
    if (m.contains("light")) {
        const json& l = m["light"];
        if (l.contains("direction")) {
            const json& d = l["direction"];
            if (!d.is_array() || d.size() != 3) throw ValidationError("light.direction", "expected [x, y, z]");
            for (int k = 0; k < 3; ++k) b.light.direction[k] = as_number(d[k], "light.direction");
        }
        optional_field(l, "intensity", "light", b.light.intensity, as_number);
        optional_field(l, "ambient", "light", b.light.ambient, as_number);
    }
    if (m.contains("sim")) {
        const json& s = m["sim"];
        optional_field(s, "dt", "sim", b.sim.dt, as_number);
        optional_field(s, "steps", "sim", b.sim.steps, as_int);
        optional_field(s, "gravity", "sim", b.sim.gravity, as_vec2);
        optional_field(s, "pixels_per_cm", "sim", b.sim.pixels_per_cm, as_number);
        optional_field(s, "substeps", "sim", b.sim.substeps, as_int);
        optional_field(s, "velocity_iterations", "sim", b.sim.velocity_iterations, as_int);
        optional_field(s, "baumgarte", "sim", b.sim.baumgarte, as_number);
        optional_field(s, "slop", "sim", b.sim.slop, as_number);
        optional_field(s, "rolling_resistance", "sim", b.sim.rolling_resistance, as_number);
        optional_field(s, "restitution_threshold", "sim", b.sim.restitution_threshold, as_number);
    }
    if (m.contains("render")) {
        const json& r = m["render"];
        optional_field(r, "num_frames", "render", b.render.num_frames, as_int);
        if (r.contains("resolution")) {
            const Vec2 res = as_vec2(r["resolution"], "render.resolution");
            b.render.resolution_width = static_cast<int>(res.x);
            b.render.resolution_height = static_cast<int>(res.y);
            if (b.render.resolution_width != res.x || b.render.resolution_height != res.y)
                throw ValidationError("render.resolution", "expected integers");
        }
        optional_field(r, "emit_flow", "render", b.render.emit_flow, as_bool);
        optional_field(r, "emit_intermediates", "render", b.render.emit_intermediates, as_bool);
    }
    validate(b);
    return b;
}

}  // namespace

const SceneObject* SceneBundle::find_object(int id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

int SceneBundle::z_order(std::size_t i) const { return objects.at(i).z_order.value_or(static_cast<int>(i)); }

std::string to_string(BoundaryOrientation o) {
    switch (o) {
        case BoundaryOrientation::kHorizontal: return "horizontal";
        case BoundaryOrientation::kVertical: return "vertical";
        case BoundaryOrientation::kFree: return "free";
    }
    return "free";
}

BoundaryOrientation parse_orientation(const std::string& s) {
    if (s == "horizontal") return BoundaryOrientation::kHorizontal;
    if (s == "vertical") return BoundaryOrientation::kVertical;
    if (s == "free") return BoundaryOrientation::kFree;
    throw ValidationError("orientation", "unknown orientation '" + s + "'");
}

void validate(const SceneBundle& b) {
    if (b.width <= 0 || b.height <= 0) throw ValidationError("image", "empty image");
    if (b.image.width() != b.width || b.image.height() != b.height) throw ShapeError("image size mismatch");
    require_same_shape(b.image, b.background, "background");
    if (b.objects.empty()) throw ValidationError("objects", "at least one object is required");

    std::set<int> ids;
    for (const auto& o : b.objects) {
        const std::string f = "objects." + std::to_string(o.id);
        if (!ids.insert(o.id).second) throw ValidationError(f + ".id", "duplicate object id");
        require_same_shape(b.image, o.mask, (f + ".mask").c_str());
        if (count_set(o.mask) == 0) throw ValidationError(f + ".mask", "mask is empty");
        if (o.albedo) require_same_shape(b.image, *o.albedo, (f + ".albedo").c_str());
        if (o.normal) require_same_shape(b.image, *o.normal, (f + ".normal").c_str());
        if (!(o.mass > 0.0) || !std::isfinite(o.mass)) throw ValidationError(f + ".mass", "must be > 0");
        if (!(o.friction >= 0.0) || !std::isfinite(o.friction)) throw ValidationError(f + ".friction", "must be >= 0");
        if (!(o.elasticity >= 0.0 && o.elasticity <= 1.0))
            throw ValidationError(f + ".elasticity", "must lie in [0, 1]");
        if (!(o.force_duration >= 0.0)) throw ValidationError(f + ".force_duration", "must be >= 0");
    }
    for (std::size_t i = 0; i < b.boundaries.size(); ++i) {
        const auto& s = b.boundaries[i];
        const std::string f = "boundaries[" + std::to_string(i) + "]";
        if (s.p0 == s.p1) throw ValidationError(f, "p0 and p1 coincide");
        if (s.orientation == BoundaryOrientation::kHorizontal && s.p0.y != s.p1.y)
            throw ValidationError(f + ".orientation", "horizontal segment must have p0.y == p1.y");
        if (s.orientation == BoundaryOrientation::kVertical && s.p0.x != s.p1.x)
            throw ValidationError(f + ".orientation", "vertical segment must have p0.x == p1.x");
        if (!(s.friction >= 0.0)) throw ValidationError(f + ".friction", "must be >= 0");
        if (!(s.elasticity >= 0.0 && s.elasticity <= 1.0)) throw ValidationError(f + ".elasticity", "must lie in [0, 1]");
    }
    const auto& d = b.light.direction;
    const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (!(std::abs(norm - 1.0) <= 1e-6)) throw ValidationError("light.direction", "must be a unit vector");
    if (!(b.light.intensity >= 0.0)) throw ValidationError("light.intensity", "must be >= 0");
    if (!(b.light.ambient >= 0.0 && b.light.ambient <= 1.0)) throw ValidationError("light.ambient", "must lie in [0, 1]");

    if (!(b.sim.dt > 0.0) || !std::isfinite(b.sim.dt)) throw ValidationError("sim.dt", "must be > 0");
    if (b.sim.steps < 1) throw ValidationError("sim.steps", "must be >= 1");
    if (b.sim.substeps < 1) throw ValidationError("sim.substeps", "must be >= 1");
    if (!(b.sim.pixels_per_cm > 0.0)) throw ValidationError("sim.pixels_per_cm", "must be > 0");
    if (b.sim.velocity_iterations < 1) throw ValidationError("sim.velocity_iterations", "must be >= 1");
    if (!std::isfinite(b.sim.gravity.x) || !std::isfinite(b.sim.gravity.y))
        throw ValidationError("sim.gravity", "must be finite");

    if (b.render.num_frames < 1) throw ValidationError("render.num_frames", "must be >= 1");
    if (b.render.num_frames > b.sim.steps + 1)
        throw ValidationError("render.num_frames", "must not exceed sim.steps + 1");
    if (b.render.resolution_width < 1 || b.render.resolution_height < 1)
        throw ValidationError("render.resolution", "must be positive");
}

SceneBundle load_bundle(const std::filesystem::path& path) {
    std::unique_ptr<AssetSource> src;
    if (std::filesystem::is_directory(path)) {
        src = std::make_unique<DirectorySource>(path);
    } else if (std::filesystem::is_regular_file(path)) {
        src = std::make_unique<TarSource>(path);
    } else {
        throw MissingAsset(path.string());
    }
    const Bytes raw = src->read("manifest.json");
    json manifest;
    try {
        manifest = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest", e.what());
    }
    return parse_manifest(manifest, *src);
}

namespace {

json manifest_json(const SceneBundle& b) {
    json m;
    m["width"] = b.width;
    m["height"] = b.height;
    m["image"] = "image.png";
    m["background"] = "background.png";
    json objects = json::array();
    for (const auto& o : b.objects) {
        json jo;
        jo["id"] = o.id;
        jo["mass"] = o.mass;
        jo["friction"] = o.friction;
        jo["elasticity"] = o.elasticity;
        jo["initial_velocity"] = vec2_json(o.initial_velocity);
        jo["initial_angular_velocity"] = o.initial_angular_velocity;
        if (o.applied_force) jo["applied_force"] = vec2_json(*o.applied_force);
        if (o.application_point) jo["application_point"] = vec2_json(*o.application_point);
        if (o.applied_torque) jo["applied_torque"] = *o.applied_torque;
        jo["force_duration"] = o.force_duration;
        if (o.z_order) jo["z_order"] = *o.z_order;
        const std::string od = object_dir(o.id);
        jo["mask"] = od + "mask.png";
        if (o.albedo) jo["albedo"] = od + "albedo.png";
        if (o.normal) jo["normal"] = od + "normal.png";
        objects.push_back(std::move(jo));
    }
    m["objects"] = std::move(objects);
    json bounds = json::array();
    for (const auto& s : b.boundaries) {
        bounds.push_back({{"p0", vec2_json(s.p0)},
                          {"p1", vec2_json(s.p1)},
                          {"orientation", to_string(s.orientation)},
                          {"friction", s.friction},
                          {"elasticity", s.elasticity}});
    }
    m["boundaries"] = std::move(bounds);
    m["light"] = {{"direction", b.light.direction}, {"intensity", b.light.intensity}, {"ambient", b.light.ambient}};
    m["sim"] = {{"dt", b.sim.dt},
                {"steps", b.sim.steps},
                {"gravity", vec2_json(b.sim.gravity)},
                {"pixels_per_cm", b.sim.pixels_per_cm},
                {"substeps", b.sim.substeps},
                {"velocity_iterations", b.sim.velocity_iterations},
                {"baumgarte", b.sim.baumgarte},
                {"slop", b.sim.slop},
                {"rolling_resistance", b.sim.rolling_resistance},
                {"restitution_threshold", b.sim.restitution_threshold}};
    m["render"] = {{"num_frames", b.render.num_frames},
                   {"resolution", {b.render.resolution_width, b.render.resolution_height}},
                   {"emit_flow", b.render.emit_flow},
                   {"emit_intermediates", b.render.emit_intermediates}};

    return m;
}

}  // namespace

std::string manifest_text(const SceneBundle& b) { return manifest_json(b).dump(2); }

void save_bundle(const SceneBundle& b, const std::filesystem::path& dir) {
    validate(b);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_png_rgb(dir / "image.png", b.image);
    write_png_rgb(dir / "background.png", b.background);
    for (const auto& o : b.objects) {
        const std::string od = object_dir(o.id);
        write_png_mask(dir / (od + "mask.png"), o.mask);
        if (o.albedo) write_png_rgb(dir / (od + "albedo.png"), *o.albedo);
        if (o.normal) write_png_rgb(dir / (od + "normal.png"), *o.normal);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest_text(b) << '\n';
    if (!out) throw IoError("short write to manifest.json");
}

Mask union_foreground(const SceneBundle& b) {
    Mask m(b.width, b.height);
    for (const auto& o : b.objects) {
        auto dst = m.pixels();
        auto src = o.mask.pixels();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] |= src[i];
    }
    return m;
}

}  // namespace imdyn
