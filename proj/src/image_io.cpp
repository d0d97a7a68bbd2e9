#include "pearl/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pearl/error.hpp"

namespace pearl::io {

namespace {

struct PngImage {
    png_image image{};
    PngImage() {
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

void begin_read(PngImage& png, std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error(ErrorKind::MalformedInput, "empty PNG buffer");
    if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
        throw Error(ErrorKind::MalformedInput, std::string("PNG decode failed: ") + png.image.message);
    }
    if (png.image.width == 0 || png.image.height == 0 || png.image.width > (1u << 15) || png.image.height > (1u << 15)) {
        throw Error(ErrorKind::MalformedInput, "PNG dimensions out of range");
    }
}

void finish_read(PngImage& png, void* buffer, const png_color* background = nullptr) {
    if (!png_image_finish_read(&png.image, background, buffer, 0, nullptr)) {
        throw Error(ErrorKind::MalformedInput, std::string("PNG decode failed: ") + png.image.message);
    }
}

std::vector<std::uint8_t> write_memory(PngImage& png, const void* buffer) {
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, buffer, 0, nullptr)) {
        throw Error(ErrorKind::MalformedInput, std::string("PNG encode failed: ") + png.image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, buffer, 0, nullptr)) {
        throw Error(ErrorKind::MalformedInput, std::string("PNG encode failed: ") + png.image.message);
    }
    out.resize(size);
    return out;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

RgbImage decode_png_rgb(std::span<const std::uint8_t> bytes) {
    PngImage png;
    begin_read(png, bytes);
    png.image.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = static_cast<int>(png.image.width);
    out.height = static_cast<int>(png.image.height);
    out.rgb.resize(PNG_IMAGE_SIZE(png.image));
    const png_color black{0, 0, 0};
    finish_read(png, out.rgb.data(), &black);
    return out;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    try {
        return decode_png_rgb(read_file(path));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::MissingFile) throw;
        throw Error(e.kind(), path.string() + ": " + e.detail());
    }
}

std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image) {
    if (image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw Error(ErrorKind::DimensionMismatch, "RGB buffer does not match dimensions");
    }
    PngImage png;
    png.image.width = static_cast<png_uint_32>(image.width);
    png.image.height = static_cast<png_uint_32>(image.height);
    png.image.format = PNG_FORMAT_RGB;
    return write_memory(png, image.rgb.data());
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
    write_file(path, encode_png_rgb(image));
}

Gray16Image decode_png_gray16(std::span<const std::uint8_t> bytes) {
    PngImage png;
    begin_read(png, bytes);
    if (png.image.format & PNG_FORMAT_FLAG_COLOR) {
        throw Error(ErrorKind::MalformedInput, "expected a single-channel PNG");
    }
    Gray16Image out;
    out.width = static_cast<int>(png.image.width);
    out.height = static_cast<int>(png.image.height);
    const auto pixels = static_cast<std::size_t>(out.width) * out.height;
    if (png.image.format & PNG_FORMAT_FLAG_LINEAR) {
        png.image.format = PNG_FORMAT_LINEAR_Y;
        out.values.resize(pixels);
        finish_read(png, out.values.data());
    } else {
        png.image.format = PNG_FORMAT_GRAY;
        std::vector<std::uint8_t> narrow(pixels);
        finish_read(png, narrow.data());
        out.values.assign(narrow.begin(), narrow.end());
    }
    return out;
}

Gray16Image read_png_gray16(const std::filesystem::path& path) {
    try {
        return decode_png_gray16(read_file(path));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::MissingFile) throw;
        throw Error(e.kind(), path.string() + ": " + e.detail());
    }
}

void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image) {
    if (image.values.size() != static_cast<std::size_t>(image.width) * image.height) {
        throw Error(ErrorKind::DimensionMismatch, "gray buffer does not match dimensions");
    }
    PngImage png;
    png.image.width = static_cast<png_uint_32>(image.width);
    png.image.height = static_cast<png_uint_32>(image.height);
    png.image.format = PNG_FORMAT_LINEAR_Y;
    write_file(path, write_memory(png, image.values.data()));
}

std::vector<std::uint8_t> encode_mask_png(const geom::BinaryMask& mask) {
    std::vector<std::uint8_t> gray(mask.size());
    const auto bits = mask.bits();
    std::transform(bits.begin(), bits.end(), gray.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
    PngImage png;
    png.image.width = static_cast<png_uint_32>(mask.width());
    png.image.height = static_cast<png_uint_32>(mask.height());
    png.image.format = PNG_FORMAT_GRAY;
    return write_memory(png, gray.data());
}

geom::BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes) {
    PngImage png;
    begin_read(png, bytes);
    if (png.image.format & PNG_FORMAT_FLAG_COLOR) {
        throw Error(ErrorKind::MalformedInput, "mask PNG must be single-channel");
    }
    const int w = static_cast<int>(png.image.width);
    const int h = static_cast<int>(png.image.height);
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
    png.image.format = PNG_FORMAT_GRAY;
    finish_read(png, gray.data());
    for (auto& g : gray) g = g >= 128 ? 1 : 0;
    return geom::BinaryMask(w, h, std::move(gray));
}

void write_mask_png(const std::filesystem::path& path, const geom::BinaryMask& mask) {
    write_file(path, encode_mask_png(mask));
}

geom::BinaryMask read_mask_png(const std::filesystem::path& path) {
    return decode_mask_png(read_file(path));
}

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_distance_field(const geom::DistanceField& field) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + field.squared.size() * 4);
    put_u32le(out, static_cast<std::uint32_t>(field.width));
    put_u32le(out, static_cast<std::uint32_t>(field.height));
    for (std::size_t i = 0; i < field.squared.size(); ++i) {
        const auto value = static_cast<float>(std::sqrt(static_cast<double>(field.squared[i])));
        put_u32le(out, std::bit_cast<std::uint32_t>(value));
    }
    return out;
}

std::vector<float> decode_distance_field(std::span<const std::uint8_t> bytes, int& width, int& height) {
    if (bytes.size() < 8) throw Error(ErrorKind::MalformedInput, "distance field header truncated");
    width = static_cast<int>(get_u32le(bytes, 0));
    height = static_cast<int>(get_u32le(bytes, 4));
    const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() != 8 + count * 4) throw Error(ErrorKind::MalformedInput, "distance field size mismatch");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32le(bytes, 8 + 4 * i));
    return values;
}

void draw_marker(RgbImage& image, geom::Point2D p, int radius, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int outer = radius * radius;
    const int inner = (radius - 2) * (radius - 2);
    for (int y = p.y - radius; y <= p.y + radius; ++y) {
        for (int x = p.x - radius; x <= p.x + radius; ++x) {
            if (x < 0 || y < 0 || x >= image.width || y >= image.height) continue;
            const int d = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
            if (d > outer || (radius > 2 && d < inner)) continue;
            auto* px = &image.rgb[(static_cast<std::size_t>(y) * image.width + x) * 3];
            px[0] = r;
            px[1] = g;
            px[2] = b;
        }
    }
}

}  // namespace pearl::io
