#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "imdyn/error.hpp"

namespace imdyn {

/// Row-major 2D grid. Pixel (x, y) covers [x, x+1) x [y, y+1); its center is
/// at (x + 0.5, y + 0.5). Origin top-left, +x right, +y down.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked(width)) * static_cast<std::size_t>(checked(height)), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static int checked(int v) {
        if (v < 0) throw ShapeError("negative raster dimension");
        return v;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using Rgb8 = std::array<std::uint8_t, 3>;
using Rgbf = std::array<float, 3>;
using Rgbaf = std::array<float, 4>;
using Vec3f = std::array<float, 3>;

/// Binary mask; every element is 0 or 1.
using Mask = Raster<std::uint8_t>;
using ImageRgb8 = Raster<Rgb8>;
using ImageRgbf = Raster<Rgbf>;
using NormalMap = Raster<Vec3f>;
using FlowField = Raster<std::array<float, 2>>;

inline void require_same_shape(const auto& a, const auto& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": raster size mismatch (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
    }
}

inline std::size_t count_set(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.pixels()) n += v != 0;
    return n;
}

ImageRgbf to_float(const ImageRgb8& img);
/// Rounds to nearest after clamping to [0, 1].
ImageRgb8 to_rgb8(const ImageRgbf& img);
std::uint8_t quantize_unit(float v);

/// 8-bit RGB encoding n = 2c/255 - 1, renormalized (zero vectors stay zero).
NormalMap decode_normals(const ImageRgb8& img);
ImageRgb8 encode_normals(const NormalMap& normals);

}  // namespace imdyn
