#pragma once

#include <filesystem>

#include "adatrack/flow.hpp"
#include "adatrack/geometry.hpp"

namespace adatrack {

/// 8-bit grayscale, gray+alpha, RGB or RGBA PNG -> Image with values in
/// [0, 1]. Alpha is dropped. Throws InputError on unreadable files.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0, 1].
void write_png(const std::filesystem::path& path, const Image& img);

/// Flow dump: "ADFL", u32 width, u32 height (little-endian), width*height
/// f32 (u, v) pairs row-major, then width*height u8 valid flags.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace adatrack
