#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "imdyn/pipeline.hpp"

namespace imdyn {

struct ServiceConfig {
    std::filesystem::path artifact_root = "imdyn-artifacts";
    std::optional<std::filesystem::path> ui_dir;  // static files served at /
    int workers = 2;
    std::size_t queue_capacity = 16;
    RunOptions defaults;  // denoiser endpoint, seed and threads for renders
};

/// HTTP API:
///   POST /bundles                       tar body, or JSON {"path": ...} / {"demo": true}
///   GET  /bundles/{id}                  summary
///   GET  /bundles/{id}/files/{path}     bundle rasters
///   POST /simulate                      {"bundle_id", "overrides", "steps", "dt", "preview_only"}
///   POST /runs/{id}/render              queue a render of a recorded simulation (202)
///   GET  /runs/{id}                     status, manifest and artifact URLs
///   GET  /runs/{id}/artifacts/{path}    run files
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds without serving; port 0 picks a free port. Returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); requires bind().
    void serve();
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace imdyn
