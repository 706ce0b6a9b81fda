#include "imdyn/raster.hpp"

#include <algorithm>
#include <cmath>

namespace imdyn {

ImageRgbf to_float(const ImageRgb8& img) {
    ImageRgbf out(img.width(), img.height());
    auto src = img.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (int c = 0; c < 3; ++c) dst[i][c] = static_cast<float>(src[i][c]) / 255.0f;
    }
    return out;
}

std::uint8_t quantize_unit(float v) {
    const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

ImageRgb8 to_rgb8(const ImageRgbf& img) {
    ImageRgb8 out(img.width(), img.height());
    auto src = img.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (int c = 0; c < 3; ++c) dst[i][c] = quantize_unit(src[i][c]);
    }
    return out;
}

NormalMap decode_normals(const ImageRgb8& img) {
    NormalMap out(img.width(), img.height());
    auto src = img.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        Vec3f n;
        for (int c = 0; c < 3; ++c) n[c] = 2.0f * static_cast<float>(src[i][c]) / 255.0f - 1.0f;
        const float len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (len > 1e-6f) {
            for (auto& v : n) v /= len;
        } else {
            n = {0.0f, 0.0f, 0.0f};
        }
        dst[i] = n;
    }
    return out;
}

ImageRgb8 encode_normals(const NormalMap& normals) {
    ImageRgb8 out(normals.width(), normals.height());
    auto src = normals.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (int c = 0; c < 3; ++c) dst[i][c] = quantize_unit((src[i][c] + 1.0f) * 0.5f);
    }
    return out;
}

}  // namespace imdyn
