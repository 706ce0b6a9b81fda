#include "imdyn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace imdyn {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr float kFloMagic = 202021.25f;

std::vector<std::uint8_t> finish_read(png_image& image, std::uint32_t format, const std::string& name, int& w,
                                      int& h) {
    image.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode PNG " + name + ": " + image.message);
    }
    w = static_cast<int>(image.width);
    h = static_cast<int>(image.height);
    return buffer;
}

std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, std::uint32_t format, int& w, int& h) {
    if (!std::filesystem::exists(path)) throw MissingAsset(path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    return finish_read(image, format, path.string(), w, h);
}

std::vector<std::uint8_t> decode_png_raw(std::span<const std::uint8_t> bytes, const std::string& name,
                                         std::uint32_t format, int& w, int& h) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw IoError("cannot decode PNG " + name + ": " + image.message);
    }
    return finish_read(image, format, name, w, h);
}

void write_png_raw(const std::filesystem::path& path, std::uint32_t format, int w, int h, const void* data) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

}  // namespace

ImageRgb8 read_png_rgb(const std::filesystem::path& path) {
    int w = 0, h = 0;
    auto raw = read_png_raw(path, PNG_FORMAT_RGB, w, h);
    ImageRgb8 img(w, h);
    std::memcpy(img.data(), raw.data(), raw.size());
    return img;
}

void write_png_rgb(const std::filesystem::path& path, const ImageRgb8& img) {
    write_png_raw(path, PNG_FORMAT_RGB, img.width(), img.height(), img.data());
}

namespace {

ImageRgb8 rgb_from_raw(const std::vector<std::uint8_t>& raw, int w, int h) {
    ImageRgb8 img(w, h);
    std::memcpy(img.data(), raw.data(), raw.size());
    return img;
}

Mask mask_from_raw(const std::vector<std::uint8_t>& raw, int w, int h) {
    Mask m(w, h);
    auto px = m.pixels();
    for (std::size_t i = 0; i < raw.size(); ++i) px[i] = raw[i] >= 128 ? 1 : 0;
    return m;
}

}  // namespace

ImageRgb8 decode_png_rgb(std::span<const std::uint8_t> bytes, const std::string& name) {
    int w = 0, h = 0;
    auto raw = decode_png_raw(bytes, name, PNG_FORMAT_RGB, w, h);
    return rgb_from_raw(raw, w, h);
}

Mask decode_png_mask(std::span<const std::uint8_t> bytes, const std::string& name) {
    int w = 0, h = 0;
    auto raw = decode_png_raw(bytes, name, PNG_FORMAT_GRAY, w, h);
    return mask_from_raw(raw, w, h);
}

Mask read_png_mask(const std::filesystem::path& path) {
    int w = 0, h = 0;
    auto raw = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
    return mask_from_raw(raw, w, h);
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> raw(mask.size());
    auto px = mask.pixels();
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = px[i] ? 255 : 0;
    write_png_raw(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), raw.data());
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::int32_t w = flow.width();
    const std::int32_t h = flow.height();
    out.write(reinterpret_cast<const char*>(&kFloMagic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(flow.data()), static_cast<std::streamsize>(flow.size() * 8));
    if (!out) throw IoError("short write to " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingAsset(path.string());
    float magic = 0;
    std::int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || magic != kFloMagic) throw IoError("not a .flo file: " + path.string());
    if (w < 0 || h < 0) throw ShapeError("negative .flo dimensions in " + path.string());
    FlowField flow(w, h);
    in.read(reinterpret_cast<char*>(flow.data()), static_cast<std::streamsize>(flow.size() * 8));
    if (!in) throw IoError("truncated .flo file: " + path.string());
    return flow;
}

namespace {

// RY, YG, GC, CB, BM, MR segment lengths of the Middlebury color wheel.
std::vector<std::array<float, 3>> make_color_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<float, 3>> wheel;
    for (int i = 0; i < RY; ++i) wheel.push_back({255.f, 255.f * i / RY, 0.f});
    for (int i = 0; i < YG; ++i) wheel.push_back({255.f - 255.f * i / YG, 255.f, 0.f});
    for (int i = 0; i < GC; ++i) wheel.push_back({0.f, 255.f, 255.f * i / GC});
    for (int i = 0; i < CB; ++i) wheel.push_back({0.f, 255.f - 255.f * i / CB, 255.f});
    for (int i = 0; i < BM; ++i) wheel.push_back({255.f * i / BM, 0.f, 255.f});
    for (int i = 0; i < MR; ++i) wheel.push_back({255.f, 0.f, 255.f - 255.f * i / MR});
    return wheel;
}

}  // namespace

ImageRgb8 colorize_flow(const FlowField& flow, float max_magnitude) {
    static const auto wheel = make_color_wheel();
    const int ncols = static_cast<int>(wheel.size());
    float maxrad = max_magnitude;
    if (maxrad <= 0.0f) {
        for (const auto& f : flow.pixels()) maxrad = std::max(maxrad, std::hypot(f[0], f[1]));
    }
    if (maxrad <= 0.0f) maxrad = 1.0f;

    ImageRgb8 out(flow.width(), flow.height());
    auto src = flow.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const float u = src[i][0] / maxrad;
        const float v = src[i][1] / maxrad;
        const float rad = std::min(1.0f, std::hypot(u, v));
        const float a = std::atan2(-v, -u) / std::numbers::pi_v<float>;
        const float fk = (a + 1.0f) / 2.0f * static_cast<float>(ncols - 1);
        const int k0 = static_cast<int>(fk);
        const int k1 = (k0 + 1) % ncols;
        const float f = fk - static_cast<float>(k0);
        for (int c = 0; c < 3; ++c) {
            const float col = ((1.0f - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0f;
            dst[i][c] = static_cast<std::uint8_t>(std::lround(255.0f * (1.0f - rad * (1.0f - col))));
        }
    }
    return out;
}

}  // namespace imdyn
