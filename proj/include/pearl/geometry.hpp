#pragma once

// Exact pixel-grid geometry over validity masks.
//
// Conventions: x grows rightward, y grows downward, origin at the top-left
// pixel. Distances are center-to-center between integer pixel indices, so
// every squared distance is an integer. Whenever several pixels qualify, the
// one with the smallest y, then the smallest x, wins.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pearl::geom {

struct Point2D {
    int x = 0;
    int y = 0;

    friend bool operator==(const Point2D&, const Point2D&) = default;
    /// Row-major order: y first, then x. This is the library-wide tie-break.
    friend std::strong_ordering operator<=>(const Point2D& a, const Point2D& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
};

inline std::int64_t squared_distance(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by) {
    return (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
}

/// Row-major validity grid. 1 = inside the mask.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }
    bool empty() const noexcept { return bits_.empty(); }

    bool in_bounds(std::int64_t x, std::int64_t y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    bool in_bounds(Point2D p) const noexcept { return in_bounds(p.x, p.y); }

    bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
    bool at(Point2D p) const noexcept { return at(p.x, p.y); }
    void set(int x, int y, bool v = true) noexcept { bits_[index(x, y)] = v ? 1 : 0; }

    std::size_t popcount() const noexcept;
    /// True when every pixel has the same value (including the 0-pixel case).
    bool uniform() const noexcept;

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Exact Euclidean distances, stored as integer squared distances.
struct DistanceField {
    int width = 0;
    int height = 0;
    std::vector<std::int64_t> squared;

    std::int64_t squared_at(int x, int y) const {
        return squared[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    double at(int x, int y) const;
    double at(Point2D p) const { return at(p.x, p.y); }
};

/// Real-valued per-pixel activations (text-query relevance maps).
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    float at(int x, int y) const {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

/// For each pixel, the distance to the nearest pixel whose bit differs from
/// `target`. Pixels of the opposite class therefore read 0 and pixels of class
/// `target` read their depth. Throws UniformMask if either class is absent.
DistanceField euclidean_distance_transform(const BinaryMask& mask, bool target);

/// Squared-distance lower-envelope transform of one sampled function:
/// out[p] = min_q (f[q] + (p - q)^2) over finite f[q]. `kInfinite` marks
/// samples that never attain the minimum. Exposed for testing.
inline constexpr std::int64_t kInfinite = INT64_MAX;
void squared_distance_1d(std::span<const std::int64_t> f, std::span<std::int64_t> out);

/// Nearest pixel of class `cls` to the integer location (x, y), which may lie
/// outside the grid. nullopt when no pixel has that class.
struct NearestPixel {
    Point2D point;
    std::int64_t squared = 0;
};
std::optional<NearestPixel> nearest_pixel_of_class(const BinaryMask& mask, bool cls, std::int64_t x, std::int64_t y);

/// (-1)^(1 - V(p)) * D(p): positive inside, negative outside, magnitude equal
/// to the distance to the nearest opposite-class pixel.
/// Throws OutOfBounds or UniformMask.
double signed_distance(const BinaryMask& mask, Point2D p);

/// Opposite-class pixel realizing |signed_distance(mask, p)|.
Point2D nearest_opposite_point(const BinaryMask& mask, Point2D p);

/// Scoring variant used by the evaluation suite; never throws on geometry.
struct SignedDistance {
    double value = 0.0;
    bool out_of_bounds = false;     // scored as outside, distance to the nearest set pixel
    bool uniform_fallback = false;  // no opposite class: distance to the frame border + 1
};
SignedDistance signed_distance_scored(const BinaryMask& mask, Point2D p);

/// Distance of each set pixel to background where the frame border also counts
/// as background.
DistanceField interior_depth_field(const BinaryMask& mask);

/// Set pixel farthest from any edge (frame border included). Throws EmptyMask.
Point2D innermost_point(const BinaryMask& mask);

/// Set pixel with the largest y, then the smallest x. Throws EmptyMask.
Point2D bottommost_point(const BinaryMask& mask);

/// Location of the maximum activation. NaN entries never win. Throws
/// InvalidArgument on an empty heatmap.
Point2D argmax_point(const Heatmap& heatmap);

/// Largest activation value. Throws InvalidArgument on an empty heatmap.
float max_activation(const Heatmap& heatmap);

/// Pixelwise OR. Throws EmptyList or DimensionMismatch.
BinaryMask mask_union(std::span<const BinaryMask> masks);

}  // namespace pearl::geom
