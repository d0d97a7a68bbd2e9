#include "pearl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pearl/error.hpp"

namespace pearl::geom {

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::InvalidArgument, "mask dimensions must be positive");
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::InvalidArgument, "mask dimensions must be positive");
    }
    if (bits_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error(ErrorKind::DimensionMismatch, "mask bit count does not match width*height");
    }
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::uniform() const noexcept {
    if (bits_.empty()) return true;
    const auto first = bits_.front();
    return std::all_of(bits_.begin(), bits_.end(), [first](std::uint8_t b) { return b == first; });
}

double DistanceField::at(int x, int y) const {
    return std::sqrt(static_cast<double>(squared_at(x, y)));
}

namespace {

// Intersection abscissa of two parabolas, kept as an exact fraction with a
// positive denominator.
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;
    bool neg_inf = false;
};

bool less_equal(const Fraction& a, const Fraction& b) {
    if (b.neg_inf) return a.neg_inf;
    if (a.neg_inf) return true;
    return static_cast<__int128>(a.num) * b.den <= static_cast<__int128>(b.num) * a.den;
}

bool less_than_integer(const Fraction& a, std::int64_t p) {
    if (a.neg_inf) return true;
    return static_cast<__int128>(a.num) < static_cast<__int128>(p) * a.den;
}

}  // namespace

void squared_distance_1d(std::span<const std::int64_t> f, std::span<std::int64_t> out) {
    const auto n = static_cast<std::int64_t>(f.size());
    if (out.size() != f.size()) {
        throw Error(ErrorKind::LengthMismatch, "output span must match input length");
    }
    std::vector<std::int64_t> hull(f.size());
    std::vector<Fraction> bounds(f.size() + 1);
    std::int64_t k = -1;

    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kInfinite) continue;
        if (k < 0) {
            k = 0;
            hull[0] = q;
            bounds[0].neg_inf = true;
            continue;
        }
        Fraction s;
        while (true) {
            const std::int64_t v = hull[k];
            s.num = (f[q] + q * q) - (f[v] + v * v);
            s.den = 2 * (q - v);
            s.neg_inf = false;
            if (k > 0 && less_equal(s, bounds[k])) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        hull[k] = q;
        bounds[k] = s;
    }

    if (k < 0) {
        std::fill(out.begin(), out.end(), kInfinite);
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t p = 0; p < n; ++p) {
        while (j < k && less_than_integer(bounds[j + 1], p)) ++j;
        const std::int64_t v = hull[j];
        out[p] = (p - v) * (p - v) + f[v];
    }
}

DistanceField euclidean_distance_transform(const BinaryMask& mask, bool target) {
    if (mask.empty()) throw Error(ErrorKind::InvalidArgument, "empty mask");
    const auto target_count = target ? mask.popcount() : mask.size() - mask.popcount();
    if (target_count == 0 || target_count == mask.size()) {
        throw Error(ErrorKind::UniformMask, "distance transform needs both pixel classes");
    }

    const int w = mask.width();
    const int h = mask.height();
    const auto bits = mask.bits();
    const std::uint8_t target_bit = target ? 1 : 0;

    DistanceField field;
    field.width = w;
    field.height = h;
    field.squared.assign(mask.size(), 0);

    std::vector<std::int64_t> column(static_cast<std::size_t>(h));
    std::vector<std::int64_t> column_out(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            column[y] = bits[i] == target_bit ? kInfinite : 0;
        }
        squared_distance_1d(column, column_out);
        for (int y = 0; y < h; ++y) field.squared[static_cast<std::size_t>(y) * w + x] = column_out[y];
    }

    std::vector<std::int64_t> row_out(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        auto row = std::span<std::int64_t>(field.squared).subspan(static_cast<std::size_t>(y) * w, w);
        squared_distance_1d(row, row_out);
        std::copy(row_out.begin(), row_out.end(), row.begin());
    }
    return field;
}

std::optional<NearestPixel> nearest_pixel_of_class(const BinaryMask& mask, bool cls, std::int64_t x, std::int64_t y) {
    const std::int64_t w = mask.width();
    const std::int64_t h = mask.height();
    if (w == 0 || h == 0) return std::nullopt;
    const std::uint8_t want = cls ? 1 : 0;
    const auto bits = mask.bits();
    const std::int64_t cx = std::clamp<std::int64_t>(x, 0, w - 1);
    const std::int64_t cy = std::clamp<std::int64_t>(y, 0, h - 1);

    std::optional<NearestPixel> best;
    auto better = [&](std::int64_t sq, std::int64_t px, std::int64_t py) {
        if (!best) return true;
        if (sq != best->squared) return sq < best->squared;
        return Point2D{static_cast<int>(px), static_cast<int>(py)} < best->point;
    };
    auto exceeds = [&](std::int64_t sq) { return best && sq > best->squared; };

    auto scan_row = [&](std::int64_t r) {
        const std::int64_t dy2 = (r - y) * (r - y);
        const auto* row = bits.data() + r * w;
        for (std::int64_t px = cx; px >= 0; --px) {
            const std::int64_t sq = dy2 + (px - x) * (px - x);
            if (exceeds(sq)) break;
            if (row[px] == want) {
                if (better(sq, px, r)) best = NearestPixel{{static_cast<int>(px), static_cast<int>(r)}, sq};
                break;
            }
        }
        for (std::int64_t px = cx + 1; px < w; ++px) {
            const std::int64_t sq = dy2 + (px - x) * (px - x);
            if (exceeds(sq)) break;
            if (row[px] == want) {
                if (better(sq, px, r)) best = NearestPixel{{static_cast<int>(px), static_cast<int>(r)}, sq};
                break;
            }
        }
    };

    for (std::int64_t r = cy; r >= 0; --r) {
        if (exceeds((r - y) * (r - y))) break;
        scan_row(r);
    }
    for (std::int64_t r = cy + 1; r < h; ++r) {
        if (exceeds((r - y) * (r - y))) break;
        scan_row(r);
    }
    return best;
}

namespace {

NearestPixel nearest_opposite(const BinaryMask& mask, Point2D p) {
    if (!mask.in_bounds(p)) {
        throw Error(ErrorKind::OutOfBounds, "point outside the mask");
    }
    auto hit = nearest_pixel_of_class(mask, !mask.at(p), p.x, p.y);
    if (!hit) throw Error(ErrorKind::UniformMask, "mask has no pixel of the opposite class");
    return *hit;
}

}  // namespace

double signed_distance(const BinaryMask& mask, Point2D p) {
    const auto hit = nearest_opposite(mask, p);
    const double d = std::sqrt(static_cast<double>(hit.squared));
    return mask.at(p) ? d : -d;
}

Point2D nearest_opposite_point(const BinaryMask& mask, Point2D p) {
    return nearest_opposite(mask, p).point;
}

SignedDistance signed_distance_scored(const BinaryMask& mask, Point2D p) {
    SignedDistance out;
    if (!mask.in_bounds(p)) {
        out.out_of_bounds = true;
        if (auto hit = nearest_pixel_of_class(mask, true, p.x, p.y)) {
            out.value = -std::sqrt(static_cast<double>(hit->squared));
        } else {
            out.uniform_fallback = true;
            out.value = -1.0;
        }
        return out;
    }
    const bool inside = mask.at(p);
    if (auto hit = nearest_pixel_of_class(mask, !inside, p.x, p.y)) {
        const double d = std::sqrt(static_cast<double>(hit->squared));
        out.value = inside ? d : -d;
        return out;
    }
    out.uniform_fallback = true;
    const int border = std::min({p.x, p.y, mask.width() - 1 - p.x, mask.height() - 1 - p.y});
    const double d = static_cast<double>(border) + 1.0;
    out.value = inside ? d : -d;
    return out;
}

DistanceField interior_depth_field(const BinaryMask& mask) {
    if (mask.popcount() == 0) throw Error(ErrorKind::EmptyMask, "mask has no set pixel");
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask padded(w + 2, h + 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y)) padded.set(x + 1, y + 1);
        }
    }
    const auto full = euclidean_distance_transform(padded, true);
    DistanceField field;
    field.width = w;
    field.height = h;
    field.squared.resize(mask.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            field.squared[static_cast<std::size_t>(y) * w + x] = full.squared_at(x + 1, y + 1);
        }
    }
    return field;
}

Point2D innermost_point(const BinaryMask& mask) {
    const auto field = interior_depth_field(mask);
    Point2D best{-1, -1};
    std::int64_t best_sq = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            const auto sq = field.squared_at(x, y);
            if (sq > best_sq) {
                best_sq = sq;
                best = {x, y};
            }
        }
    }
    return best;
}

Point2D bottommost_point(const BinaryMask& mask) {
    for (int y = mask.height() - 1; y >= 0; --y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y)) return {x, y};
        }
    }
    throw Error(ErrorKind::EmptyMask, "mask has no set pixel");
}

Point2D argmax_point(const Heatmap& heatmap) {
    if (heatmap.values.empty() || heatmap.width <= 0 || heatmap.height <= 0) {
        throw Error(ErrorKind::InvalidArgument, "empty heatmap");
    }
    Point2D best{0, 0};
    float best_value = -std::numeric_limits<float>::infinity();
    bool found = false;
    for (int y = 0; y < heatmap.height; ++y) {
        for (int x = 0; x < heatmap.width; ++x) {
            const float v = heatmap.at(x, y);
            if (std::isnan(v)) continue;
            if (!found || v > best_value) {
                best_value = v;
                best = {x, y};
                found = true;
            }
        }
    }
    return best;
}

float max_activation(const Heatmap& heatmap) {
    const auto p = argmax_point(heatmap);
    return heatmap.at(p.x, p.y);
}

BinaryMask mask_union(std::span<const BinaryMask> masks) {
    if (masks.empty()) throw Error(ErrorKind::EmptyList, "no masks to merge");
    BinaryMask out(masks.front().width(), masks.front().height());
    std::vector<std::uint8_t> bits(out.size(), 0);
    for (const auto& m : masks) {
        if (m.width() != out.width() || m.height() != out.height()) {
            throw Error(ErrorKind::DimensionMismatch, "masks differ in size");
        }
        const auto src = m.bits();
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] |= src[i];
    }
    return BinaryMask(out.width(), out.height(), std::move(bits));
}

}  // namespace pearl::geom
