#include "fixtures.hpp"

#include <atomic>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <unistd.h>

namespace imdyn::testing {

// Minimal ustar writer used to exercise archive loading independently.
void write_tar(const std::filesystem::path& archive, const std::filesystem::path& root) {
    std::ofstream out(archive, std::ios::binary);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = std::filesystem::relative(entry.path(), root).generic_string();
        std::ifstream in(entry.path(), std::ios::binary);
        const std::string data((std::istreambuf_iterator<char>(in)), {});
        char header[512] = {};
        std::strncpy(header, name.c_str(), 99);
        std::snprintf(header + 100, 8, "%07o", 0644);
        std::snprintf(header + 108, 8, "%07o", 0);
        std::snprintf(header + 116, 8, "%07o", 0);
        std::snprintf(header + 124, 12, "%011o", static_cast<unsigned>(data.size()));
        std::snprintf(header + 136, 12, "%011o", 0);
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        std::memset(header + 148, ' ', 8);
        unsigned sum = 0;
        for (unsigned char c : header) sum += c;
        std::snprintf(header + 148, 8, "%06o", sum);
        out.write(header, 512);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        const std::size_t pad = (512 - data.size() % 512) % 512;
        out.write(std::string(pad, '\0').data(), static_cast<std::streamsize>(pad));
    }
    out.write(std::string(1024, '\0').data(), 1024);
}


TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

Body circle_body(int id, Vec2 position, double radius, double mass, Vec2 velocity, double friction, double elasticity) {
    Body b;
    b.id = id;
    b.shape.circle = true;
    b.shape.radius = radius;
    b.shape.bounding_radius = radius;
    b.mass = mass;
    b.inertia = 0.5 * mass * radius * radius;
    b.friction = friction;
    b.elasticity = elasticity;
    b.state.translation = position;
    b.state.linear_velocity = velocity;
    return b;
}

Body box_body(int id, Vec2 position, double w, double h, double mass, Vec2 velocity, double friction,
              double elasticity) {
    Body b;
    b.id = id;
    const double hx = w / 2.0, hy = h / 2.0;
    b.shape.pieces = {{{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}}};
    b.shape.bounding_radius = std::hypot(hx, hy);
    b.mass = mass;
    b.inertia = mass * (w * w + h * h) / 12.0;
    b.friction = friction;
    b.elasticity = elasticity;
    b.state.translation = position;
    b.state.linear_velocity = velocity;
    return b;
}

World empty_world(Vec2 gravity, double dt, int substeps) {
    World w;
    w.gravity = gravity;
    w.dt = dt;
    w.substeps = substeps;
    return w;
}

}  // namespace imdyn::testing
