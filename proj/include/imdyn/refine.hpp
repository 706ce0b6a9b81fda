#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "imdyn/raster.hpp"

namespace imdyn {

struct FramePack;

/// frames x height x width x channels, row-major (channels fastest).
class LatentVideo {
public:
    using Shape = std::array<int, 4>;

    LatentVideo() = default;
    explicit LatentVideo(Shape shape, float fill = 0.0f);
    LatentVideo(Shape shape, std::vector<float> values);

    const Shape& shape() const noexcept { return shape_; }
    int frames() const noexcept { return shape_[0]; }
    int height() const noexcept { return shape_[1]; }
    int width() const noexcept { return shape_[2]; }
    int channels() const noexcept { return shape_[3]; }
    std::size_t size() const noexcept { return values_.size(); }

    float& at(int f, int y, int x, int c) { return values_[index(f, y, x, c)]; }
    float at(int f, int y, int x, int c) const { return values_[index(f, y, x, c)]; }
    std::span<float> values() noexcept { return values_; }
    std::span<const float> values() const noexcept { return values_; }

    friend bool operator==(const LatentVideo&, const LatentVideo&) = default;

private:
    std::size_t index(int f, int y, int x, int c) const noexcept {
        return ((static_cast<std::size_t>(f) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(y)) *
                    static_cast<std::size_t>(shape_[2]) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(shape_[3]) +
               static_cast<std::size_t>(c);
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<float> values_;
};

void require_same_shape(const LatentVideo& a, const LatentVideo& b, const char* what);

/// Betas for t = 1..T and the cumulative products alpha_bar(t), alpha_bar(0) = 1.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> betas);

    /// Linear betas over `base_steps`, then every (base_steps / total_steps)-th
    /// cumulative product is kept.
    static NoiseSchedule linear(double beta_start = 1e-4, double beta_end = 2e-2, int base_steps = 1000,
                                int total_steps = 50);

    int total_steps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta(int t) const;
    double alpha_bar(int t) const;
    std::span<const double> betas() const noexcept { return betas_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

/// Which executed steps receive latent fusion.
enum class FusionGate {
    kStopAtDelta,       // fuse while t > delta: the last delta steps are pure denoising
    kAlgorithmLiteral,  // fuse while t <= T - delta: the first delta steps are pure denoising
};

/// Foreground mask at latent resolution: frames x height x width with values
/// in {0, 1}, or a single frame broadcast to every frame.
struct LatentMask {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    bool at(int f, int y, int x) const {
        const int ff = frames == 1 ? 0 : f;
        return values[(static_cast<std::size_t>(ff) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
                          static_cast<std::size_t>(width) +
                      static_cast<std::size_t>(x)] != 0;
    }
};

struct RefinePlan {
    double noise_strength = 0.5;
    int fusion_timestamp = 5;
    int total_steps = 50;
    LatentMask mask;
    std::uint64_t seed = 0;
    FusionGate gate = FusionGate::kStopAtDelta;

    /// round-half-up(total_steps * noise_strength)
    int executed_steps() const;
    bool fuses(int t) const;
};

/// Plan with the default noise strength 0.5, fusion stop 5 and 50 steps.
RefinePlan default_plan(LatentMask mask = {}, std::uint64_t seed = 0);

class Denoiser {
public:
    virtual ~Denoiser() = default;
    /// One reverse step: z_t -> z_{t-1}. Must preserve the shape.
    virtual LatentVideo denoise(const LatentVideo& z_t, int t) = 0;
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps with eps drawn from a
/// generator seeded by (seed, t); t = 0 returns z0 exactly.
LatentVideo forward_noise(const LatentVideo& z0, int t, const NoiseSchedule& schedule, std::uint64_t seed);

/// (T - t) / T
double fusion_weight(int t, int T);

/// Per-step record of a refinement run.
struct RefineStep {
    int t = 0;
    bool fused = false;
    double weight = 0.0;
};

LatentVideo refine(const LatentVideo& guidance, const RefinePlan& plan, const NoiseSchedule& schedule,
                   Denoiser& denoiser, std::vector<RefineStep>* trace = nullptr);

// ---- mock denoisers -------------------------------------------------------

/// Returns its input unchanged.
class IdentityDenoiser final : public Denoiser {
public:
    LatentVideo denoise(const LatentVideo& z_t, int) override { return z_t; }
};

/// Returns forward_noise(guidance, t - 1) with the plan's seed: the exact
/// guidance trajectory, so refinement must return the guidance.
class GuidanceEchoDenoiser final : public Denoiser {
public:
    GuidanceEchoDenoiser(LatentVideo guidance, NoiseSchedule schedule, std::uint64_t seed)
        : guidance_(std::move(guidance)), schedule_(std::move(schedule)), seed_(seed) {}
    LatentVideo denoise(const LatentVideo& z_t, int t) override;

private:
    LatentVideo guidance_;
    NoiseSchedule schedule_;
    std::uint64_t seed_;
};

/// Wraps another denoiser and keeps every call's t, input and output.
class RecordingDenoiser final : public Denoiser {
public:
    struct Call {
        int t = 0;
        LatentVideo input;
        LatentVideo output;
    };
    explicit RecordingDenoiser(Denoiser& inner) : inner_(inner) {}
    LatentVideo denoise(const LatentVideo& z_t, int t) override;
    const std::vector<Call>& calls() const noexcept { return calls_; }

private:
    Denoiser& inner_;
    std::vector<Call> calls_;
};

// ---- pixel latents --------------------------------------------------------

/// Average-pools relit frames by `factor` and maps [0, 1] to [-1, 1].
LatentVideo pixel_latents(std::span<const FramePack> frames, int factor = 8);
/// Inverse of pixel_latents up to pooling: nearest upsample, [-1, 1] -> [0, 1].
std::vector<ImageRgbf> decode_pixel_latents(const LatentVideo& z, int factor = 8);
/// Per-frame foreground at latent resolution (nearest sample of the object
/// coverage at each block center).
LatentMask latent_foreground(std::span<const FramePack> frames, int factor = 8);

/// NumPy .npy (float32, C order) for inspection from any ecosystem.
void save_npy(const std::filesystem::path& path, const LatentVideo& z);
LatentVideo load_npy(const std::filesystem::path& path);

}  // namespace imdyn
