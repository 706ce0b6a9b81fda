#include "imdyn/service.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <stop_token>
#include <thread>

#include <httplib.h>

#include "imdyn/primitive.hpp"
#include "imdyn/synthetic.hpp"

namespace imdyn {
namespace {

using json = nlohmann::json;

/// Fixed set of threads draining a bounded FIFO.
class WorkerPool {
public:
    WorkerPool(int workers, std::size_t capacity) : capacity_(capacity) {
        for (int i = 0; i < std::max(1, workers); ++i)
            threads_.emplace_back([this](std::stop_token st) { loop(st); });
    }
    ~WorkerPool() {
        for (auto& t : threads_) t.request_stop();
        cv_.notify_all();
    }

    /// False when the queue is full.
    bool submit(std::function<void()> job) {
        {
            std::lock_guard lock(mu_);
            if (queue_.size() >= capacity_) return false;
            queue_.push_back(std::move(job));
        }
        cv_.notify_one();
        return true;
    }

private:
    void loop(std::stop_token st) {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lock(mu_);
                if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
                job = std::move(queue_.front());
                queue_.pop_front();
            }
            job();
        }
    }

    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable_any cv_;
    std::deque<std::function<void()>> queue_;
    std::vector<std::jthread> threads_;  // last: joined before the queue dies
};

struct BundleEntry {
    std::string id;
    std::string fingerprint;
    SceneBundle bundle;
    std::vector<Primitive> primitives;
    json summary;
};

struct RunRecord {
    std::string status;  // simulated | queued | running | done | failed
    std::string stage;
    std::string error;
    std::string bundle_id;
    std::shared_ptr<const SceneBundle> bundle;  // options applied
    std::shared_ptr<const Trajectory> trajectory;
    RunOptions options;
    RunManifest manifest;
};

struct HttpError {
    int status;
    std::string message;
    std::string field;
};

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw HttpError{400, std::string("malformed JSON: ") + e.what(), ""};
    }
}

/// Resolves `rel` under `root`, refusing anything that could escape it.
std::optional<std::filesystem::path> safe_join(const std::filesystem::path& root, const std::string& rel) {
    const std::filesystem::path p(rel);
    if (rel.empty() || p.is_absolute()) return std::nullopt;
    for (const auto& part : p)
        if (part == ".." || part == ".") return std::nullopt;
    return root / p;
}

std::string content_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".json") return "application/json";
    if (ext == ".csv") return "text/csv";
    return "application/octet-stream";
}

void send_file(httplib::Response& res, const std::filesystem::path& root, const std::string& rel) {
    const auto path = safe_join(root, rel);
    if (!path || !std::filesystem::is_regular_file(*path)) throw HttpError{404, "no such file: " + rel, ""};
    std::ifstream in(*path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), {});
    res.status = 200;
    res.set_content(std::move(data), content_type(*path));
}

json bundle_summary(const std::string& id, const std::string& fingerprint, const SceneBundle& b,
                    std::span<const Primitive> primitives) {
    const std::string files = "/bundles/" + id + "/files/";
    json objects = json::array();
    for (std::size_t i = 0; i < b.objects.size(); ++i) {
        const auto& o = b.objects[i];
        const MassProperties mp = mass_properties(primitives[i], o.mass);
        int x0 = b.width, y0 = b.height, x1 = -1, y1 = -1;
        for (int y = 0; y < o.mask.height(); ++y)
            for (int x = 0; x < o.mask.width(); ++x)
                if (o.mask(x, y)) {
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x);
                    y1 = std::max(y1, y);
                }
        const std::string od = "objects/" + std::to_string(o.id) + "/";
        json jo{{"id", o.id},
                {"mass", o.mass},
                {"friction", o.friction},
                {"elasticity", o.elasticity},
                {"z_order", b.z_order(i)},
                {"relightable", o.relightable()},
                {"primitive", primitives[i].is_circle() ? "circle" : "polygon"},
                {"center_of_mass", {mp.center_of_mass.x, mp.center_of_mass.y}},
                {"bbox", {x0, y0, x1 + 1, y1 + 1}},
                {"mask_url", files + od + "mask.png"}};
        if (o.albedo) jo["albedo_url"] = files + od + "albedo.png";
        if (o.normal) jo["normal_url"] = files + od + "normal.png";
        objects.push_back(std::move(jo));
    }
    json bounds = json::array();
    for (const auto& s : b.boundaries)
        bounds.push_back({{"p0", {s.p0.x, s.p0.y}},
                          {"p1", {s.p1.x, s.p1.y}},
                          {"orientation", to_string(s.orientation)},
                          {"friction", s.friction},
                          {"elasticity", s.elasticity}});
    return {{"id", id},
            {"fingerprint", fingerprint},
            {"width", b.width},
            {"height", b.height},
            {"image_url", files + "image.png"},
            {"background_url", files + "background.png"},
            {"objects", objects},
            {"boundaries", bounds},
            {"sim",
             {{"dt", b.sim.dt},
              {"steps", b.sim.steps},
              {"gravity", {b.sim.gravity.x, b.sim.gravity.y}},
              {"pixels_per_cm", b.sim.pixels_per_cm}}},
            {"render",
             {{"num_frames", b.render.num_frames},
              {"resolution", {b.render.resolution_width, b.render.resolution_height}}}}};
}

json artifact_urls(const std::string& run_id, const RunArtifacts& a) {
    const std::string base = "/runs/" + run_id + "/artifacts/";
    auto one = [&](const std::string& s) { return s.empty() ? json(nullptr) : json(base + s); };
    auto many = [&](const std::vector<std::string>& v) {
        json out = json::array();
        for (const auto& s : v) out.push_back(base + s);
        return out;
    };
    return {{"manifest", base + "run.json"},
            {"trajectory", one(a.trajectory)},
            {"contacts", one(a.contacts)},
            {"frames", many(a.frames)},
            {"flow", many(a.flow)},
            {"masks", many(a.masks)},
            {"composited", many(a.composited)},
            {"albedo", many(a.albedo)},
            {"normal", many(a.normal)},
            {"guidance_latents", one(a.guidance_latents)},
            {"refined_latents", one(a.refined_latents)},
            {"refined_frames", many(a.refined_frames)}};
}

std::optional<int> optional_int(const json& body, const char* key) {
    if (!body.contains(key) || body[key].is_null()) return std::nullopt;
    if (!body[key].is_number_integer()) throw ValidationError(key, "expected an integer");
    return body[key].get<int>();
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    httplib::Server server;

    std::shared_mutex bundles_mu;
    std::map<std::string, std::shared_ptr<const BundleEntry>> bundles;

    std::mutex runs_mu;  // the single writer lock for the run registry
    std::map<std::string, RunRecord> runs;

    WorkerPool pool;

    explicit Impl(ServiceConfig c) : config(std::move(c)), pool(config.workers, config.queue_capacity) {
        std::error_code ec;
        std::filesystem::create_directories(config.artifact_root / "bundles", ec);
        std::filesystem::create_directories(config.artifact_root / "runs", ec);
        if (ec) throw IoError("cannot create artifact root " + config.artifact_root.string() + ": " + ec.message());
        routes();
    }

    std::filesystem::path bundle_dir(const std::string& id) const { return config.artifact_root / "bundles" / id; }
    std::filesystem::path run_dir(const std::string& id) const { return config.artifact_root / "runs" / id; }

    template <typename F>
    httplib::Server::Handler guarded(F f) {
        return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const HttpError& e) {
                json body{{"error", e.message}};
                if (!e.field.empty()) body["field"] = e.field;
                reply(res, e.status, body);
            } catch (const ValidationError& e) {
                reply(res, 422, {{"error", e.what()}, {"field", e.field()}});
            } catch (const ShapeError& e) {
                reply(res, 422, {{"error", e.what()}});
            } catch (const MissingAsset& e) {
                reply(res, 422, {{"error", e.what()}, {"field", e.path()}});
            } catch (const DegenerateMask& e) {
                reply(res, 422, {{"error", e.what()}});
            } catch (const MultiComponentMask& e) {
                reply(res, 422, {{"error", e.what()}});
            } catch (const IoError& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        };
    }

    std::shared_ptr<const BundleEntry> find_bundle(const std::string& id) {
        std::shared_lock lock(bundles_mu);
        auto it = bundles.find(id);
        if (it == bundles.end()) throw HttpError{404, "unknown bundle '" + id + "'", "bundle_id"};
        return it->second;
    }

    std::shared_ptr<const BundleEntry> register_bundle(SceneBundle bundle, const std::string& fingerprint) {
        const std::string id = fingerprint.substr(0, 16);
        {
            std::shared_lock lock(bundles_mu);
            if (auto it = bundles.find(id); it != bundles.end()) return it->second;
        }
        auto entry = std::make_shared<BundleEntry>();
        entry->id = id;
        entry->fingerprint = fingerprint;
        entry->primitives = fit_primitives(bundle);
        entry->summary = bundle_summary(id, fingerprint, bundle, entry->primitives);
        entry->bundle = std::move(bundle);
        // Stage into a private directory, then publish with a rename.
        const auto staging = config.artifact_root / "bundles" / (id + ".tmp-" + make_run_id());
        save_bundle(entry->bundle, staging);
        std::error_code ec;
        std::filesystem::rename(staging, bundle_dir(id), ec);
        if (ec) std::filesystem::remove_all(staging, ec);  // a concurrent upload won
        std::unique_lock lock(bundles_mu);
        return bundles.try_emplace(id, std::move(entry)).first->second;
    }

    void post_bundle(const httplib::Request& req, httplib::Response& res) {
        const std::string type = req.get_header_value("Content-Type");
        std::shared_ptr<const BundleEntry> entry;
        if (type.starts_with("application/json")) {
            const json body = parse_body(req);
            if (body.value("demo", false)) {
                SceneBundle b = synthetic::demo_bundle();
                const std::string fp = bundle_fingerprint(b);
                entry = register_bundle(std::move(b), fp);
            } else if (body.contains("path") && body["path"].is_string()) {
                const std::filesystem::path p = body["path"].get<std::string>();
                if (!std::filesystem::exists(p)) throw HttpError{404, "no bundle at " + p.string(), "path"};
                entry = register_bundle(load_bundle(p), bundle_fingerprint(p));
            } else {
                throw ValidationError("path", "expected {\"path\": ...} or {\"demo\": true}");
            }
        } else {
            if (req.body.empty()) throw ValidationError("body", "empty upload");
            const auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size());
            const std::string fp = sha256_hex(bytes);
            const auto tmp = config.artifact_root / "bundles" / ("upload-" + make_run_id() + ".tar");
            {
                std::ofstream out(tmp, std::ios::binary);
                out.write(req.body.data(), static_cast<std::streamsize>(req.body.size()));
                if (!out) throw IoError("cannot store upload");
            }
            struct Cleanup {
                std::filesystem::path p;
                ~Cleanup() {
                    std::error_code ec;
                    std::filesystem::remove(p, ec);
                }
            } cleanup{tmp};
            entry = register_bundle(load_bundle(tmp), fp);
        }
        reply(res, 201, entry->summary);
    }

    void post_simulate(const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
        if (!body.contains("bundle_id") || !body["bundle_id"].is_string())
            throw ValidationError("bundle_id", "required");
        const auto entry = find_bundle(body["bundle_id"].get<std::string>());

        RunOptions opt = config.defaults;
        opt.steps = optional_int(body, "steps");
        opt.frames = optional_int(body, "frames");
        if (body.contains("dt")) {
            if (!body["dt"].is_number()) throw ValidationError("dt", "expected a number");
            opt.dt = body["dt"].get<double>();
        }
        if (body.contains("seed")) {
            if (!body["seed"].is_number_unsigned()) throw ValidationError("seed", "expected a non-negative integer");
            opt.seed = body["seed"].get<std::uint64_t>();
        }
        if (body.contains("overrides")) {
            const json& ov = body["overrides"];
            if (!ov.is_array()) throw ValidationError("overrides", "expected an array");
            for (std::size_t i = 0; i < ov.size(); ++i)
                opt.overrides.push_back(override_from_json(ov[i], "overrides[" + std::to_string(i) + "]"));
        }
        const int max_points = optional_int(body, "max_points").value_or(128);
        if (max_points < 1 || max_points > 128) throw ValidationError("max_points", "must lie in [1, 128]");
        const bool preview = body.value("preview_only", true);

        auto bundle = std::make_shared<SceneBundle>(entry->bundle);
        apply_options(*bundle, opt);
        auto traj = std::make_shared<Trajectory>(simulate(*bundle, entry->primitives));

        json polylines = json::array();
        for (const auto& p : summarize(*traj, max_points)) polylines.push_back({{"id", p.id}, {"points", p.points}});
        json out{{"bundle_id", entry->id},
                 {"steps", bundle->sim.steps},
                 {"dt", bundle->sim.dt},
                 {"pixels_per_cm", bundle->sim.pixels_per_cm},
                 {"polylines", polylines}};
        if (!preview) {
            const std::string run_id = make_run_id();
            const auto dir = run_dir(run_id);
            RunRecord rec;
            rec.status = "simulated";
            rec.bundle_id = entry->id;
            rec.options = opt;
            rec.manifest.run_id = run_id;
            rec.manifest.bundle_fingerprint = entry->fingerprint;
            rec.manifest.config = config_snapshot(*bundle, opt);
            write_trajectory_csv(dir / "trajectory.csv", *traj);
            write_contacts_csv(dir / "contacts.csv", *traj);
            rec.manifest.artifacts.trajectory = "trajectory.csv";
            rec.manifest.artifacts.contacts = "contacts.csv";
            write_manifest(dir, rec.manifest);
            rec.bundle = std::move(bundle);
            rec.trajectory = std::move(traj);
            {
                std::lock_guard lock(runs_mu);
                runs.emplace(run_id, std::move(rec));
            }
            out["run_id"] = run_id;
        }
        reply(res, 200, out);
    }

    void post_render(const std::string& run_id, const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        std::shared_ptr<const SceneBundle> bundle;
        std::shared_ptr<const Trajectory> traj;
        RunOptions opt;
        {
            std::lock_guard lock(runs_mu);
            auto it = runs.find(run_id);
            if (it == runs.end()) throw HttpError{404, "unknown run '" + run_id + "'", "run_id"};
            RunRecord& rec = it->second;
            if (rec.status == "queued" || rec.status == "running")
                throw HttpError{409, "run is already " + rec.status, ""};
            opt = rec.options;
            if (body.contains("denoiser_endpoint")) {
                if (!body["denoiser_endpoint"].is_string())
                    throw ValidationError("denoiser_endpoint", "expected a string");
                opt.denoiser_endpoint = body["denoiser_endpoint"].get<std::string>();
            }
            if (body.contains("refine")) {
                if (!body["refine"].is_boolean()) throw ValidationError("refine", "expected a boolean");
                opt.refine = body["refine"].get<bool>();
            }
            bundle = rec.bundle;
            traj = rec.trajectory;
            rec.options = opt;
            rec.status = "queued";
            rec.stage.clear();
            rec.error.clear();
        }
        const bool accepted = pool.submit([this, run_id, bundle, traj, opt] { render_job(run_id, *bundle, *traj, opt); });
        if (!accepted) {
            set_status(run_id, "simulated", "", "");
            throw HttpError{503, "render queue is full", ""};
        }
        reply(res, 202, {{"run_id", run_id}, {"status", "queued"}, {"url", "/runs/" + run_id}});
    }

    void set_status(const std::string& run_id, std::string status, std::string stage, std::string error) {
        std::lock_guard lock(runs_mu);
        RunRecord& rec = runs.at(run_id);
        rec.status = std::move(status);
        rec.stage = std::move(stage);
        rec.error = std::move(error);
    }

    void render_job(const std::string& run_id, const SceneBundle& bundle, const Trajectory& traj,
                    const RunOptions& opt) {
        RunManifest m;
        {
            std::lock_guard lock(runs_mu);
            RunRecord& rec = runs.at(run_id);
            rec.status = "running";
            m = rec.manifest;
        }
        std::string stage = "render";
        const StageObserver observe = [&](std::string_view s) {
            stage = s;
            std::lock_guard lock(runs_mu);
            runs.at(run_id).stage = stage;
        };
        try {
            const auto dir = run_dir(run_id);
            m.config = config_snapshot(bundle, opt);
            m.timings.clear();
            const auto packs = run_render_stage(bundle, traj, dir, m, opt.threads, observe);
            if (opt.refine) run_refine_stage(packs, opt, dir, m, observe);
            observe("write_manifest");
            write_manifest(dir, m);
            std::lock_guard lock(runs_mu);
            RunRecord& rec = runs.at(run_id);
            rec.manifest = std::move(m);
            rec.status = "done";
            rec.stage.clear();
        } catch (const std::exception& e) {
            set_status(run_id, "failed", stage, e.what());
        }
    }

    void get_run(const std::string& run_id, httplib::Response& res) {
        json out;
        {
            std::lock_guard lock(runs_mu);
            auto it = runs.find(run_id);
            if (it == runs.end()) throw HttpError{404, "unknown run '" + run_id + "'", "run_id"};
            const RunRecord& rec = it->second;
            out = {{"run_id", run_id},
                   {"status", rec.status},
                   {"bundle_id", rec.bundle_id},
                   {"manifest", to_json(rec.manifest)},
                   {"artifacts", artifact_urls(run_id, rec.manifest.artifacts)}};
            if (!rec.stage.empty()) out["stage"] = rec.stage;
            if (!rec.error.empty()) out["error"] = rec.error;
        }
        reply(res, 200, out);
    }

    void routes() {
        server.set_payload_max_length(std::size_t{512} << 20);
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        server.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });
        server.Post("/bundles", guarded([this](const auto& req, auto& res) { post_bundle(req, res); }));
        server.Get(R"(/bundles/([0-9a-f]+))", guarded([this](const auto& req, auto& res) {
                       reply(res, 200, find_bundle(req.matches[1].str())->summary);
                   }));
        server.Get(R"(/bundles/([0-9a-f]+)/files/(.+))", guarded([this](const auto& req, auto& res) {
                       const auto entry = find_bundle(req.matches[1].str());
                       send_file(res, bundle_dir(entry->id), req.matches[2].str());
                   }));
        server.Post("/simulate", guarded([this](const auto& req, auto& res) { post_simulate(req, res); }));
        server.Post(R"(/runs/([0-9a-f]+)/render)",
                    guarded([this](const auto& req, auto& res) { post_render(req.matches[1].str(), req, res); }));
        server.Get(R"(/runs/([0-9a-f]+))",
                   guarded([this](const auto& req, auto& res) { get_run(req.matches[1].str(), res); }));
        server.Get(R"(/runs/([0-9a-f]+)/artifacts/(.+))", guarded([this](const auto& req, auto& res) {
                       const std::string id = req.matches[1].str();
                       {
                           std::lock_guard lock(runs_mu);
                           if (!runs.contains(id)) throw HttpError{404, "unknown run '" + id + "'", "run_id"};
                       }
                       send_file(res, run_dir(id), req.matches[2].str());
                   }));
        if (config.ui_dir && !server.set_mount_point("/", config.ui_dir->string()))
            throw IoError("cannot serve UI directory " + config.ui_dir->string());
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw IoError("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

void Service::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace imdyn
