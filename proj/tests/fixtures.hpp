#pragma once

#include <filesystem>
#include <string>

#include "imdyn/dynamics.hpp"
#include "imdyn/synthetic.hpp"

namespace imdyn::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "imdyn");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Minimal ustar archive of every regular file under `root`.
void write_tar(const std::filesystem::path& archive, const std::filesystem::path& root);

Body circle_body(int id, Vec2 position, double radius, double mass, Vec2 velocity = {}, double friction = 0.0,
                 double elasticity = 1.0);
Body box_body(int id, Vec2 position, double w, double h, double mass, Vec2 velocity = {}, double friction = 0.0,
              double elasticity = 0.0);

World empty_world(Vec2 gravity = {}, double dt = 1.0 / 240.0, int substeps = 1);

}  // namespace imdyn::testing
