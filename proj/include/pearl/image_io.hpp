#pragma once

// PNG and raw-grid I/O. All decoders validate bit depth and channel layout
// instead of silently converting label data.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pearl/geometry.hpp"

namespace pearl::io {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct Gray16Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> values;
};

/// 8-bit RGB. Grayscale, palette and alpha inputs are expanded/stripped.
RgbImage decode_png_rgb(std::span<const std::uint8_t> bytes);
RgbImage read_png_rgb(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Single-channel 16-bit (8-bit grayscale inputs are widened). Rejects color.
Gray16Image decode_png_gray16(std::span<const std::uint8_t> bytes);
Gray16Image read_png_gray16(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image);

/// Masks travel as 8-bit single-channel PNGs holding 0/255.
std::vector<std::uint8_t> encode_mask_png(const geom::BinaryMask& mask);
geom::BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes);
void write_mask_png(const std::filesystem::path& path, const geom::BinaryMask& mask);
geom::BinaryMask read_mask_png(const std::filesystem::path& path);

/// 8-byte header (width, height as little-endian u32) followed by row-major
/// little-endian float32 distances.
std::vector<std::uint8_t> encode_distance_field(const geom::DistanceField& field);
std::vector<float> decode_distance_field(std::span<const std::uint8_t> bytes, int& width, int& height);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Draws a filled circle outline marker at `p` (used for annotated previews).
void draw_marker(RgbImage& image, geom::Point2D p, int radius, std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace pearl::io
