#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "imdyn/pipeline.hpp"

using namespace imdyn;
using imdyn::testing::TempDir;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

Outcome run(const std::string& args) {
    const std::string cmd = std::string(IMDYN_CLI) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    Outcome o;
    char buf[4096];
    while (const std::size_t n = std::fread(buf, 1, sizeof buf, p)) o.output.append(buf, n);
    const int status = ::pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("pipeline --out x").code == 2);
    CHECK(run("simulate --bundle a --out b --steps -3").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("validate") {
    TempDir tmp;
    REQUIRE(run("demo-scene --out " + q(tmp / "demo")).code == 0);
    const Outcome ok = run("validate --bundle " + q(tmp / "demo"));
    CHECK(ok.code == 0);
    CHECK(ok.output.find("2 objects") != std::string::npos);

    // Break one field.
    nlohmann::json m;
    std::ifstream(tmp / "demo" / "manifest.json") >> m;
    m["objects"][0]["mass"] = -1.0;
    std::ofstream(tmp / "demo" / "manifest.json") << m.dump();
    const Outcome bad = run("validate --bundle " + q(tmp / "demo"));
    CHECK(bad.code == 1);
    CHECK(bad.output.find("objects.1.mass") != std::string::npos);

    CHECK(run("validate --bundle " + q(tmp / "nowhere")).code == 1);
}

TEST_CASE("simulate writes only the trajectory") {
    TempDir tmp;
    REQUIRE(run("demo-scene --out " + q(tmp / "demo")).code == 0);
    const Outcome o = run("simulate --bundle " + q(tmp / "demo") + " --out " + q(tmp / "run") +
                          " --force 1:100,0 --torque 2:500 --steps 30");
    REQUIRE_MESSAGE(o.code == 0, o.output);
    CHECK(std::filesystem::is_regular_file(tmp / "run" / "trajectory.csv"));
    CHECK_FALSE(std::filesystem::exists(tmp / "run" / "frames"));
    const Trajectory t = read_trajectory_csv(tmp / "run" / "trajectory.csv", 1.0);
    CHECK(t.steps() == 30);
    const RunManifest m = read_manifest(tmp / "run");
    CHECK(m.config["overrides"].size() == 2);

    const Outcome bad = run("simulate --bundle " + q(tmp / "demo") + " --out " + q(tmp / "r2") + " --force 9:1,1");
    CHECK(bad.code == 1);
    CHECK(bad.output.find("overrides[0].id") != std::string::npos);
    CHECK(run("simulate --bundle " + q(tmp / "demo") + " --out " + q(tmp / "r3") + " --force 1:1").code == 1);
}

TEST_CASE("pipeline and staged runs") {
    TempDir tmp;
    REQUIRE(run("demo-scene --out " + q(tmp / "demo")).code == 0);
    const Outcome p = run("pipeline --bundle " + q(tmp / "demo") + " --out " + q(tmp / "run") + " --seed 4");
    REQUIRE_MESSAGE(p.code == 0, p.output);
    const RunManifest m = read_manifest(tmp / "run");
    CHECK(m.artifacts.frames.size() == 16);
    CHECK(m.artifacts.flow.size() == 15);
    CHECK(read_trajectory_csv(tmp / "run" / "trajectory.csv", 1.0).steps() == 120);
    CHECK(m.bundle_fingerprint == bundle_fingerprint(tmp / "demo"));

    // simulate -> render -> refine reproduces the one-shot trajectory and frames.
    const std::string bundle = " --bundle " + q(tmp / "demo") + " --out " + q(tmp / "staged");
    REQUIRE(run("simulate" + bundle).code == 0);
    REQUIRE(run("render" + bundle).code == 0);
    const Outcome r = run("refine --run " + q(tmp / "staged") + " --denoiser-endpoint 'exec:" + IMDYN_CLI +
                          " serve-denoiser'");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const RunManifest s = read_manifest(tmp / "staged");
    CHECK(s.artifacts.refined_frames.size() == 16);
    auto bytes = [](const std::filesystem::path& f) {
        std::ifstream in(f, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(bytes(tmp / "run" / "trajectory.csv") == bytes(tmp / "staged" / "trajectory.csv"));
    for (std::size_t k = 0; k < 16; ++k)
        CHECK(bytes(tmp / "run" / m.artifacts.frames[k]) == bytes(tmp / "staged" / s.artifacts.frames[k]));

    CHECK(run("refine --run " + q(tmp / "staged") + " --denoiser-endpoint tcp://127.0.0.1:1").code == 1);
    CHECK(run("render --bundle " + q(tmp / "demo") + " --out " + q(tmp / "empty")).code == 1);
}
