#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "pearl/error.hpp"
#include "pearl/geometry.hpp"
#include "pearl/image_io.hpp"
#include "pearl/random.hpp"

using namespace pearl;
using geom::BinaryMask;
using geom::Point2D;

namespace {

BinaryMask m5() {
    BinaryMask m(5, 5);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) m.set(x, y);
    return m;
}

BinaryMask random_mask(Rng& rng, int w, int h, double density) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, rng.unit() < density);
    return m;
}

template <typename F>
void expect_kind(ErrorKind kind, F&& f) {
    try {
        f();
        FAIL() << "expected " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

}  // namespace

TEST(DistanceTransform, M5Center) {
    const auto field = geom::euclidean_distance_transform(m5(), true);
    EXPECT_EQ(field.squared_at(2, 2), 4);
    EXPECT_DOUBLE_EQ(field.at(2, 2), 2.0);
    EXPECT_EQ(field.squared_at(0, 0), 0);
    EXPECT_EQ(field.squared_at(4, 2), 0);
}

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
    Rng rng(11);
    for (int i = 0; i < 60; ++i) {
        const int w = 1 + static_cast<int>(rng.below(40));
        const int h = 1 + static_cast<int>(rng.below(40));
        auto m = random_mask(rng, w, h, 0.02 + 0.96 * rng.unit());
        if (m.uniform()) continue;
        for (bool target : {true, false}) {
            const auto field = geom::euclidean_distance_transform(m, target);
            EXPECT_EQ(field.squared, oracle::edt_squared(m, target)) << w << "x" << h;
            EXPECT_EQ(oracle::edt_squared_rows(m, target), field.squared) << "row oracle, " << w << "x" << h;
        }
    }
}

TEST(DistanceTransform, UniformMaskThrows) {
    expect_kind(ErrorKind::UniformMask, [] { geom::euclidean_distance_transform(BinaryMask(3, 3, true), true); });
    expect_kind(ErrorKind::UniformMask, [] { geom::euclidean_distance_transform(BinaryMask(3, 3), true); });
}

TEST(DistanceTransform, LowerEnvelopeOneDimensional) {
    const std::vector<std::int64_t> f = {geom::kInfinite, 0, geom::kInfinite, geom::kInfinite, 0};
    std::vector<std::int64_t> out(f.size());
    geom::squared_distance_1d(f, out);
    EXPECT_EQ(out, (std::vector<std::int64_t>{1, 0, 1, 1, 0}));
}

TEST(SignedDistance, M5Examples) {
    const auto m = m5();
    EXPECT_DOUBLE_EQ(geom::signed_distance(m, {2, 2}), 2.0);
    EXPECT_NEAR(geom::signed_distance(m, {0, 0}), -1.41421356, 1e-8);
    EXPECT_DOUBLE_EQ(geom::signed_distance(m, {1, 1}), 1.0);
}

TEST(SignedDistance, NearestOppositeExamples) {
    const auto m = m5();
    EXPECT_EQ(geom::nearest_opposite_point(m, {2, 2}), (Point2D{2, 0}));
    EXPECT_EQ(geom::nearest_opposite_point(m, {0, 0}), (Point2D{1, 1}));
    EXPECT_EQ(geom::nearest_opposite_point(m, {4, 4}), (Point2D{3, 3}));
}

TEST(SignedDistance, SignLawAndMagnitudeAgainstOracle) {
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
        const int w = 2 + static_cast<int>(rng.below(20));
        const int h = 2 + static_cast<int>(rng.below(20));
        auto m = random_mask(rng, w, h, rng.unit());
        if (m.uniform()) continue;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d = geom::signed_distance(m, {x, y});
                EXPECT_EQ(d > 0, m.at(x, y));
                EXPECT_EQ(d, oracle::signed_distance(m, {x, y}));
                const auto q = geom::nearest_opposite_point(m, {x, y});
                EXPECT_EQ(q, oracle::nearest_opposite(m, {x, y}));
                EXPECT_EQ(std::abs(d), std::sqrt(static_cast<double>(geom::squared_distance(x, y, q.x, q.y))));
            }
        }
    }
}

TEST(SignedDistance, Errors) {
    expect_kind(ErrorKind::OutOfBounds, [] { geom::signed_distance(m5(), {5, 0}); });
    expect_kind(ErrorKind::UniformMask, [] { geom::signed_distance(BinaryMask(4, 4, true), {1, 1}); });
}

TEST(SignedDistance, ScoredVariantFlagsOutOfBoundsAndUniform) {
    const auto oob = geom::signed_distance_scored(m5(), {-2, 2});
    EXPECT_TRUE(oob.out_of_bounds);
    EXPECT_DOUBLE_EQ(oob.value, -3.0);  // nearest set pixel (1, 2)

    const auto full = geom::signed_distance_scored(BinaryMask(5, 5, true), {2, 1});
    EXPECT_TRUE(full.uniform_fallback);
    EXPECT_DOUBLE_EQ(full.value, 2.0);  // one pixel from the top border, plus one

    const auto inside = geom::signed_distance_scored(m5(), {2, 2});
    EXPECT_FALSE(inside.out_of_bounds || inside.uniform_fallback);
    EXPECT_DOUBLE_EQ(inside.value, 2.0);
}

TEST(SignedDistance, TranslationEquivariance) {
    Rng rng(21);
    for (int i = 0; i < 20; ++i) {
        BinaryMask small = random_mask(rng, 8, 8, 0.5);
        if (small.uniform()) continue;
        const int dx = static_cast<int>(rng.below(5));
        const int dy = static_cast<int>(rng.below(5));
        // The shift adds background only, so background pixels keep their
        // nearest set pixel; set pixels may find new background in the margin.
        BinaryMask big(8 + dx, 8 + dy);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) big.set(x + dx, y + dy, small.at(x, y));
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const auto q = geom::nearest_opposite_point(small, {x, y});
                const auto q2 = geom::nearest_opposite_point(big, {x + dx, y + dy});
                if (!small.at(x, y)) {
                    // Nearest set pixel is unaffected by the added background.
                    EXPECT_EQ(q2, (Point2D{q.x + dx, q.y + dy}));
                    EXPECT_EQ(geom::signed_distance(small, {x, y}), geom::signed_distance(big, {x + dx, y + dy}));
                }
            }
        }
    }
}

TEST(Innermost, Examples) {
    EXPECT_EQ(geom::innermost_point(m5()), (Point2D{2, 2}));
    EXPECT_DOUBLE_EQ(geom::interior_depth_field(m5()).at(2, 2), 2.0);

    BinaryMask single(6, 4);
    single.set(3, 1);
    EXPECT_EQ(geom::innermost_point(single), (Point2D{3, 1}));

    EXPECT_EQ(geom::innermost_point(BinaryMask(4, 4, true)), (Point2D{1, 1}));
    expect_kind(ErrorKind::EmptyMask, [] { geom::innermost_point(BinaryMask(3, 3)); });
}

TEST(Innermost, MatchesOracleAndIsDeepest) {
    Rng rng(8);
    for (int i = 0; i < 80; ++i) {
        const int w = 1 + static_cast<int>(rng.below(24));
        const int h = 1 + static_cast<int>(rng.below(24));
        auto m = random_mask(rng, w, h, rng.unit());
        if (m.popcount() == 0) continue;
        const auto p = geom::innermost_point(m);
        ASSERT_TRUE(m.at(p));
        EXPECT_EQ(p, oracle::innermost(m));
        EXPECT_EQ(geom::innermost_point(m), p);
        const auto depth = geom::interior_depth_field(m);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                EXPECT_TRUE(!m.at(x, y) || depth.squared_at(p.x, p.y) >= depth.squared_at(x, y));
    }
}

TEST(Innermost, TranslationAwayFromBorders) {
    BinaryMask a(20, 20);
    BinaryMask b(20, 20);
    for (int y = 4; y < 10; ++y)
        for (int x = 3; x < 11; ++x) {
            a.set(x, y);
            b.set(x + 5, y + 6);
        }
    const auto p = geom::innermost_point(a);
    EXPECT_EQ(geom::innermost_point(b), (Point2D{p.x + 5, p.y + 6}));
}

TEST(Bottommost, Examples) {
    EXPECT_EQ(geom::bottommost_point(m5()), (Point2D{1, 3}));
    BinaryMask origin(3, 3);
    origin.set(0, 0);
    EXPECT_EQ(geom::bottommost_point(origin), (Point2D{0, 0}));
    BinaryMask pair(6, 6);
    pair.set(4, 5);
    pair.set(2, 5);
    EXPECT_EQ(geom::bottommost_point(pair), (Point2D{2, 5}));
    expect_kind(ErrorKind::EmptyMask, [] { geom::bottommost_point(BinaryMask(2, 2)); });

    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        auto m = random_mask(rng, 17, 13, 0.1);
        if (m.popcount() == 0) continue;
        EXPECT_EQ(geom::bottommost_point(m), oracle::bottommost(m));
    }
}

TEST(Argmax, Examples) {
    geom::Heatmap h{16, 8, std::vector<float>(128, 0.1f)};
    h.values[4 * 16 + 10] = 0.93f;
    EXPECT_EQ(geom::argmax_point(h), (Point2D{10, 4}));
    EXPECT_FLOAT_EQ(geom::max_activation(h), 0.93f);

    geom::Heatmap flat{5, 5, std::vector<float>(25, 0.5f)};
    EXPECT_EQ(geom::argmax_point(flat), (Point2D{0, 0}));

    geom::Heatmap nan{3, 1, {NAN, 0.2f, NAN}};
    EXPECT_EQ(geom::argmax_point(nan), (Point2D{1, 0}));

    expect_kind(ErrorKind::InvalidArgument, [] { geom::argmax_point(geom::Heatmap{}); });
}

TEST(Argmax, MatchesExhaustiveScan) {
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        geom::Heatmap h{64, 64, {}};
        for (int k = 0; k < 64 * 64; ++k) h.values.push_back(static_cast<float>(rng.below(50)) / 50.0f);
        Point2D best{0, 0};
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (h.at(x, y) > h.at(best.x, best.y)) best = {x, y};
        EXPECT_EQ(geom::argmax_point(h), best);
    }
}

TEST(MaskUnion, Laws) {
    const auto m = m5();
    const BinaryMask zero(5, 5);
    EXPECT_EQ(geom::mask_union(std::vector<BinaryMask>{m, zero}), m);
    EXPECT_EQ(geom::mask_union(std::vector<BinaryMask>{m, m}), m);

    BinaryMask a(5, 5), b(5, 5);
    a.set(0, 0);
    a.set(1, 0);
    b.set(4, 4);
    EXPECT_EQ(geom::mask_union(std::vector<BinaryMask>{a, b}).popcount(), 3u);

    expect_kind(ErrorKind::EmptyList, [] { geom::mask_union(std::vector<BinaryMask>{}); });
    expect_kind(ErrorKind::DimensionMismatch,
                [] { geom::mask_union(std::vector<BinaryMask>{BinaryMask(2, 2), BinaryMask(3, 2)}); });
}

TEST(Serialization, MaskPngRoundTrip) {
    Rng rng(4);
    const auto m = random_mask(rng, 13, 7, 0.4);
    EXPECT_EQ(io::decode_mask_png(io::encode_mask_png(m)), m);
}

TEST(Serialization, DistanceFieldHeader) {
    const auto field = geom::euclidean_distance_transform(m5(), true);
    const auto bytes = io::encode_distance_field(field);
    ASSERT_EQ(bytes.size(), 8u + 25u * 4u);
    EXPECT_EQ(bytes[0], 5);
    EXPECT_EQ(bytes[4], 5);
    int w = 0, h = 0;
    const auto values = io::decode_distance_field(bytes, w, h);
    EXPECT_EQ(w, 5);
    EXPECT_EQ(h, 5);
    EXPECT_FLOAT_EQ(values[2 * 5 + 2], 2.0f);
}
