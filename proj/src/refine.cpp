#include "imdyn/refine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "imdyn/render.hpp"

namespace imdyn {

LatentVideo::LatentVideo(Shape shape, float fill) : shape_(shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative latent dimension");
        n *= static_cast<std::size_t>(d);
    }
    values_.assign(n, fill);
}

LatentVideo::LatentVideo(Shape shape, std::vector<float> values) : LatentVideo(shape) {
    if (values.size() != values_.size()) throw ShapeError("latent payload does not match its shape");
    values_ = std::move(values);
}

void require_same_shape(const LatentVideo& a, const LatentVideo& b, const char* what) {
    if (a.shape() != b.shape()) {
        const auto& s = a.shape();
        const auto& t = b.shape();
        throw ShapeError(std::string(what) + ": latent shape mismatch (" + std::to_string(s[0]) + "x" +
                         std::to_string(s[1]) + "x" + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " vs " +
                         std::to_string(t[0]) + "x" + std::to_string(t[1]) + "x" + std::to_string(t[2]) + "x" +
                         std::to_string(t[3]) + ")");
    }
}

// ---- schedule ---------------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw ValidationError("schedule.betas", "at least one step is required");
    alpha_bar_.reserve(betas_.size() + 1);
    alpha_bar_.push_back(1.0);
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw ValidationError("schedule.betas", "each beta must lie in (0, 1)");
        alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
    }
}

NoiseSchedule NoiseSchedule::linear(double beta_start, double beta_end, int base_steps, int total_steps) {
    if (base_steps < 1 || total_steps < 1 || base_steps % total_steps != 0)
        throw ValidationError("schedule.total_steps", "must divide the base step count");
    std::vector<double> base_bar;
    base_bar.reserve(static_cast<std::size_t>(base_steps));
    double prod = 1.0;
    for (int i = 0; i < base_steps; ++i) {
        const double b = base_steps == 1 ? beta_start
                                         : beta_start + (beta_end - beta_start) * i / static_cast<double>(base_steps - 1);
        prod *= 1.0 - b;
        base_bar.push_back(prod);
    }
    const int stride = base_steps / total_steps;
    std::vector<double> betas;
    double prev = 1.0;
    for (int k = 1; k <= total_steps; ++k) {
        const double bar = base_bar[static_cast<std::size_t>(k * stride - 1)];
        betas.push_back(1.0 - bar / prev);
        prev = bar;
    }
    return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > total_steps()) throw ValidationError("t", "timestep out of range");
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > total_steps()) throw ValidationError("t", "timestep out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

// ---- plan -------------------------------------------------------------------

int RefinePlan::executed_steps() const { return static_cast<int>(std::floor(total_steps * noise_strength + 0.5)); }

bool RefinePlan::fuses(int t) const {
    switch (gate) {
        case FusionGate::kStopAtDelta: return t > fusion_timestamp;
        case FusionGate::kAlgorithmLiteral: return t <= executed_steps() - fusion_timestamp;
    }
    return false;
}

RefinePlan default_plan(LatentMask mask, std::uint64_t seed) {
    RefinePlan p;
    p.mask = std::move(mask);
    p.seed = seed;
    return p;
}

namespace {

void validate_plan(const RefinePlan& plan, const NoiseSchedule& schedule, const LatentVideo& z) {
    if (!(plan.noise_strength >= 0.0 && plan.noise_strength <= 1.0))
        throw ValidationError("noise_strength", "must lie in [0, 1]");
    if (plan.fusion_timestamp < 0) throw ValidationError("fusion_timestamp", "must be >= 0");
    if (plan.total_steps < 1) throw ValidationError("total_steps", "must be >= 1");
    if (plan.total_steps > schedule.total_steps())
        throw ValidationError("total_steps", "exceeds the noise schedule length");
    const LatentMask& m = plan.mask;
    if (m.values.empty()) throw ValidationError("mask", "a latent foreground mask is required");
    if (m.height != z.height() || m.width != z.width() || (m.frames != 1 && m.frames != z.frames()) ||
        m.values.size() != static_cast<std::size_t>(m.frames) * m.height * m.width)
        throw ShapeError("mask: not broadcastable to the latent shape");
}

}  // namespace

// ---- noising and fusion -----------------------------------------------------

LatentVideo forward_noise(const LatentVideo& z0, int t, const NoiseSchedule& schedule, std::uint64_t seed) {
    const double abar = schedule.alpha_bar(t);
    if (t == 0) return z0;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    LatentVideo out(z0.shape());
    auto src = z0.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(a * src[i] + b * normal(rng));
    return out;
}

double fusion_weight(int t, int T) {
    if (T < 1 || t < 1 || t > T) throw ValidationError("t", "fusion weight needs 1 <= t <= T");
    return static_cast<double>(T - t) / T;
}

LatentVideo refine(const LatentVideo& guidance, const RefinePlan& plan, const NoiseSchedule& schedule,
                   Denoiser& denoiser, std::vector<RefineStep>* trace) {
    validate_plan(plan, schedule, guidance);
    const int T = plan.executed_steps();
    if (T == 0) return guidance;

    // z_T and the noised guidance at T share one draw.
    LatentVideo z = forward_noise(guidance, T, schedule, plan.seed);
    for (int t = T; t >= 1; --t) {
        LatentVideo d = denoiser.denoise(z, t);
        require_same_shape(d, guidance, "denoiser output");
        RefineStep step{t, plan.fuses(t), 0.0};
        if (step.fused) {
            step.weight = fusion_weight(t, T);
            const float w = static_cast<float>(step.weight);
            const LatentVideo g = forward_noise(guidance, t - 1, schedule, plan.seed);
            const int C = d.channels();
            std::size_t i = 0;
            for (int f = 0; f < d.frames(); ++f)
                for (int y = 0; y < d.height(); ++y)
                    for (int x = 0; x < d.width(); ++x) {
                        const bool fg = plan.mask.at(f, y, x);
                        for (int c = 0; c < C; ++c, ++i) {
                            if (!fg) continue;
                            const float dv = d.values()[i], gv = g.values()[i];
                            // w d + (1 - w) g, kept inside [min, max] under rounding.
                            const float blended = gv + w * (dv - gv);
                            d.values()[i] = std::clamp(blended, std::min(dv, gv), std::max(dv, gv));
                        }
                    }
        }
        if (trace) trace->push_back(step);
        z = std::move(d);
    }
    return z;
}

LatentVideo GuidanceEchoDenoiser::denoise(const LatentVideo& z_t, int t) {
    require_same_shape(z_t, guidance_, "echo input");
    return forward_noise(guidance_, t - 1, schedule_, seed_);
}

LatentVideo RecordingDenoiser::denoise(const LatentVideo& z_t, int t) {
    LatentVideo out = inner_.denoise(z_t, t);
    calls_.push_back({t, z_t, out});
    return out;
}

// ---- pixel latents ------------------------------------------------------------

LatentVideo pixel_latents(std::span<const FramePack> frames, int factor) {
    if (frames.empty()) throw ValidationError("frames", "no frames to encode");
    if (factor < 1) throw ValidationError("factor", "must be >= 1");
    const int W = frames[0].relit.width(), H = frames[0].relit.height();
    if (W % factor || H % factor) throw ShapeError("frame size is not a multiple of the latent factor");
    const int w = W / factor, h = H / factor;
    LatentVideo z({static_cast<int>(frames.size()), h, w, 3});
    const float norm = 1.0f / static_cast<float>(factor * factor);
    for (int f = 0; f < z.frames(); ++f) {
        const ImageRgbf& img = frames[static_cast<std::size_t>(f)].relit;
        if (img.width() != W || img.height() != H) throw ShapeError("frames differ in size");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    float sum = 0.0f;
                    for (int j = 0; j < factor; ++j)
                        for (int i = 0; i < factor; ++i) sum += img(x * factor + i, y * factor + j)[c];
                    z.at(f, y, x, c) = 2.0f * sum * norm - 1.0f;
                }
    }
    return z;
}

std::vector<ImageRgbf> decode_pixel_latents(const LatentVideo& z, int factor) {
    if (z.channels() != 3) throw ShapeError("pixel latents need 3 channels");
    std::vector<ImageRgbf> out;
    for (int f = 0; f < z.frames(); ++f) {
        ImageRgbf img(z.width() * factor, z.height() * factor);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                for (int c = 0; c < 3; ++c)
                    img(x, y)[c] = std::clamp(0.5f * (z.at(f, y / factor, x / factor, c) + 1.0f), 0.0f, 1.0f);
        out.push_back(std::move(img));
    }
    return out;
}

LatentMask latent_foreground(std::span<const FramePack> frames, int factor) {
    if (frames.empty()) throw ValidationError("frames", "no frames to encode");
    LatentMask m;
    m.frames = static_cast<int>(frames.size());
    m.width = frames[0].coverage.width() / factor;
    m.height = frames[0].coverage.height() / factor;
    m.values.reserve(static_cast<std::size_t>(m.frames) * m.width * m.height);
    for (const auto& fp : frames)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                m.values.push_back(fp.coverage(x * factor + factor / 2, y * factor + factor / 2) > 0.0f ? 1 : 0);
    return m;
}

// ---- npy ------------------------------------------------------------------------

void save_npy(const std::filesystem::path& path, const LatentVideo& z) {
    static_assert(std::endian::native == std::endian::little);
    std::ostringstream dict;
    dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << z.shape()[0] << ", " << z.shape()[1] << ", "
         << z.shape()[2] << ", " << z.shape()[3] << "), }";
    std::string header = dict.str();
    // Pad so that magic(6) + version(2) + len(2) + header is a multiple of 64.
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(z.values().data()), static_cast<std::streamsize>(z.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path.string());
}

LatentVideo load_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingAsset(path.string());
    char magic[8];
    std::uint16_t len = 0;
    in.read(magic, 8).read(reinterpret_cast<char*>(&len), 2);
    if (!in || std::memcmp(magic, "\x93NUMPY\x01\x00", 8) != 0) throw IoError("not a version 1 .npy file: " + path.string());
    std::string header(len, '\0');
    in.read(header.data(), len);
    if (header.find("'<f4'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos)
        throw IoError("expected little-endian float32 C-order array: " + path.string());
    const auto open = header.find('('), close = header.find(')');
    if (open == std::string::npos || close == std::string::npos) throw IoError("malformed .npy header");
    LatentVideo::Shape shape{};
    std::istringstream dims(header.substr(open + 1, close - open - 1));
    for (int k = 0; k < 4; ++k) {
        char sep = 0;
        if (!(dims >> shape[static_cast<std::size_t>(k)])) throw IoError("expected a 4-d array: " + path.string());
        if (k < 3) dims >> sep;
    }
    LatentVideo z(shape);
    in.read(reinterpret_cast<char*>(z.values().data()), static_cast<std::streamsize>(z.size() * sizeof(float)));
    if (!in) throw IoError("truncated .npy payload: " + path.string());
    return z;
}

}  // namespace imdyn
