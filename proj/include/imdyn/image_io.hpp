#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "imdyn/raster.hpp"

namespace imdyn {

ImageRgb8 read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const ImageRgb8& img);

ImageRgb8 decode_png_rgb(std::span<const std::uint8_t> bytes, const std::string& name);
Mask decode_png_mask(std::span<const std::uint8_t> bytes, const std::string& name);

/// Grayscale PNG thresholded at 128 into a 0/1 mask.
Mask read_png_mask(const std::filesystem::path& path);
/// Writes 0 -> 0, nonzero -> 255.
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

/// Middlebury .flo: float 202021.25, int32 width, int32 height, then
/// interleaved float32 (u, v) rows, all little-endian.
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

/// Standard flow color wheel (Baker et al. ordering) for visual inspection.
/// `max_magnitude` <= 0 normalizes by the field's largest vector.
ImageRgb8 colorize_flow(const FlowField& flow, float max_magnitude = 0.0f);

}  // namespace imdyn
