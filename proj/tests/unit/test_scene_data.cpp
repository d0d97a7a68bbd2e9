#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include <unistd.h>

#include "pearl/error.hpp"
#include "pearl/image_io.hpp"
#include "pearl/scene_data.hpp"
#include "pearl/synthetic.hpp"

using namespace pearl;
namespace fs = std::filesystem;
using geom::Point2D;

namespace {

// Digest of the 10-scene synthetic benchmark, default generator settings.
constexpr const char* kGoldenSyntheticDigest = "6cbec607b88b110a410dd2a95520e072a6c6adf5e4a2a925429bcd4bb31de82e";

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("pearl_scene_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

scene::DatasetIndex two_image_dataset() {
    scene::DatasetIndex index;
    index.labels = scene::LabelMap({{3, "wall"}, {5, "couch"}, {9, "floor"}, {12, "table"}});
    for (const std::string id : {"a", "b"}) {
        scene::SceneEntry entry;
        entry.image.id = id;
        entry.image.pixels = io::RgbImage{6, 4, std::vector<std::uint8_t>(6 * 4 * 3, 100)};
        entry.mask = scene::LabelMask{6, 4, std::vector<std::uint16_t>(24, 3)};
        for (int x = 0; x < 6; ++x) entry.mask.labels[3 * 6 + x] = 9;
        entry.mask.labels[2 * 6 + 2] = 12;
        index.scenes[id] = std::move(entry);
    }
    index.annotations = scene::AnnotationSet::parse_json(R"({
        "objects": ["apple", "cat"],
        "images": {
            "a": {"apple": {"natural": [2, 2], "unnatural": [0, 0], "valid_locations": ["table"]}},
            "b": {"cat": {"natural": [1, 3], "valid_locations": ["floor", "couch"]},
                  "apple": {"valid_locations": ["shelf"]}}
        }})");
    return index;
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

TEST(Remap, PaperRules) {
    const scene::RemapTable table({{"sofa", "couch"}, {"coffee table", "table"}, {"desk", "table"}});
    EXPECT_EQ(scene::apply_remap("sofa", table), "couch");
    EXPECT_EQ(scene::apply_remap("coffee table", table), "table");
    EXPECT_EQ(scene::apply_remap("floor", table), "floor");
    EXPECT_EQ(scene::apply_remap(" Coffee  Table ", table), "table");
}

TEST(Remap, Idempotent) {
    const scene::RemapTable table({{"sofa", "couch"}, {"desk", "table"}});
    for (const std::string name : {"sofa", "couch", "desk", "table", "lamp"}) {
        const auto once = scene::apply_remap(name, table);
        EXPECT_EQ(scene::apply_remap(once, table), once);
    }
}

TEST(Remap, ChainsRejected) {
    expect_kind(ErrorKind::InvalidConfig, [] { scene::RemapTable({{"a", "b"}, {"b", "c"}}); });
}

TEST(Remap, JsonRoundTrip) {
    const auto table = scene::RemapTable::parse_json(R"({"rules": {"sofa": "couch"}})");
    EXPECT_EQ(scene::RemapTable::parse_json(table.to_json()).rules(), table.rules());
    expect_kind(ErrorKind::MalformedInput, [] { scene::RemapTable::parse_json("[1]"); });
}

TEST(LabelMap, ParseTsv) {
    const auto map = scene::LabelMap::parse_tsv("3\twall\n5\tCouch\n");
    ASSERT_NE(map.find(5), nullptr);
    EXPECT_EQ(*map.find(5), "couch");
    EXPECT_EQ(map.find(4), nullptr);
    EXPECT_EQ(scene::LabelMap::parse_tsv(map.to_tsv()).entries(), map.entries());
    expect_kind(ErrorKind::MalformedInput, [] { scene::LabelMap::parse_tsv("3\twall\n3\tfloor\n"); });
    expect_kind(ErrorKind::MalformedInput, [] { scene::LabelMap::parse_tsv("x\twall\n"); });
}

TEST(Consolidate, UnionOfMatchingLabels) {
    const scene::LabelMap map({{5, "couch"}, {9, "floor"}, {3, "wall"}});
    const scene::LabelMask mask{3, 2, {5, 9, 3, 3, 5, 0}};
    const std::vector<std::string> valid = {"couch", "floor"};
    const auto m = scene::consolidate_mask(mask, map, {}, valid);
    EXPECT_EQ(std::vector<std::uint8_t>(m.bits().begin(), m.bits().end()), (std::vector<std::uint8_t>{1, 1, 0, 0, 1, 0}));

    const std::vector<std::string> table = {"table"};
    EXPECT_EQ(scene::consolidate_mask(mask, map, {}, table).popcount(), 0u);
}

TEST(Consolidate, RemappedLabels) {
    const scene::LabelMap map({{45, "sofa"}, {9, "floor"}});
    const scene::RemapTable remap(std::map<std::string, std::string>{{"sofa", "couch"}});
    const scene::LabelMask mask{2, 2, {45, 9, 45, 0}};
    const std::vector<std::string> valid = {"couch"};
    const auto m = scene::consolidate_mask(mask, map, remap, valid);
    EXPECT_TRUE(m.at(0, 0));
    EXPECT_TRUE(m.at(0, 1));
    EXPECT_EQ(m.popcount(), 2u);
}

TEST(Consolidate, UnionOverLocations) {
    const auto index = scene::generate_synthetic_dataset({.scenes = 3});
    for (const auto& [id, list] : index.annotations.images) {
        const auto& entry = index.scene(id);
        for (const auto& a : list) {
            auto all = scene::consolidate_mask(entry.mask, index.labels, index.remap, a.valid_locations);
            for (const auto& loc : a.valid_locations) {
                const std::vector<std::string> one = {loc};
                const auto part = scene::consolidate_mask(entry.mask, index.labels, index.remap, one);
                for (int y = 0; y < part.height(); ++y)
                    for (int x = 0; x < part.width(); ++x)
                        EXPECT_TRUE(!part.at(x, y) || all.at(x, y));
            }
        }
    }
}

TEST(EvaluablePairs, ExclusionReasons) {
    auto index = two_image_dataset();
    index.annotations.images["a"].push_back({"cat", std::nullopt, std::nullopt, {"floor"}, true});
    const auto [pairs, report] = scene::filter_evaluable_pairs(index);
    EXPECT_EQ(report.total, 4u);
    EXPECT_EQ(report.annotator_excluded, 1u);
    EXPECT_EQ(report.no_mask, 1u);
    EXPECT_EQ(report.retained, 2u);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[0].image_id, "a");
    EXPECT_EQ(pairs[0].object, "apple");
    EXPECT_EQ(pairs[0].mask.popcount(), 1u);
    EXPECT_EQ(pairs[1].object, "cat");
    EXPECT_EQ(pairs[1].mask.popcount(), 6u);

    std::set<std::string> reasons;
    for (const auto& d : report.dropped) reasons.insert(d.second);
    EXPECT_EQ(reasons, (std::set<std::string>{"annotator_excluded", "no_mask"}));
}

TEST(RandomPlacement, Deterministic) {
    EXPECT_EQ(scene::random_placement(561, 427, 7), scene::random_placement(561, 427, 7));
    EXPECT_EQ(scene::random_placement(1, 1, 12345), (Point2D{0, 0}));
    EXPECT_EQ(scene::random_placement(561, 427, 7, "img", "apple"), scene::random_placement(561, 427, 7, "img", "apple"));
    EXPECT_NE(scene::random_placement(561, 427, 7, "img", "apple"), scene::random_placement(561, 427, 7, "img", "cat"));
}

TEST(RandomPlacement, QuadrantsUniform) {
    int counts[4] = {};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const auto p = scene::random_placement(100, 100, static_cast<std::uint64_t>(i), "img", "obj");
        ASSERT_TRUE(p.x >= 0 && p.x < 100 && p.y >= 0 && p.y < 100);
        ++counts[(p.x >= 50 ? 1 : 0) + (p.y >= 50 ? 2 : 0)];
    }
    double chi2 = 0.0;
    for (int c : counts) {
        EXPECT_NEAR(c / static_cast<double>(draws), 0.25, 0.015);
        chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
    }
    EXPECT_LT(chi2, 16.27);  // p = 0.001 with 3 degrees of freedom
}

TEST(Dataset, WriteLoadRoundTrip) {
    const auto dir = scratch_dir("roundtrip");
    const auto index = two_image_dataset();
    scene::write_dataset(dir, index);
    const auto loaded = scene::load_dataset(dir);
    EXPECT_EQ(loaded.scenes.size(), 2u);
    EXPECT_EQ(loaded.digest(), index.digest());
    EXPECT_EQ(loaded.scene("a").mask.labels, index.scene("a").mask.labels);
    fs::remove_all(dir);
}

TEST(Dataset, SyntheticGoldenDigest) {
    const auto index = scene::generate_synthetic_dataset({});
    const auto dir = scratch_dir("golden");
    scene::write_dataset(dir, index);
    const auto loaded = scene::load_dataset(dir);
    EXPECT_EQ(loaded.scenes.size(), 10u);
    EXPECT_EQ(loaded.digest(), index.digest());
    EXPECT_EQ(loaded.digest(), kGoldenSyntheticDigest);
    fs::remove_all(dir);
}

TEST(Dataset, DimensionMismatch) {
    const auto dir = scratch_dir("dims");
    scene::write_dataset(dir, two_image_dataset());
    io::write_png_gray16(dir / "masks" / "a.png", io::Gray16Image{5, 4, std::vector<std::uint16_t>(20, 3)});
    expect_kind(ErrorKind::DimensionMismatch, [&] { scene::load_dataset(dir); });
    fs::remove_all(dir);
}

TEST(Dataset, UnknownLabelId) {
    const auto dir = scratch_dir("labels");
    scene::write_dataset(dir, two_image_dataset());
    io::write_png_gray16(dir / "masks" / "a.png", io::Gray16Image{6, 4, std::vector<std::uint16_t>(24, 77)});
    expect_kind(ErrorKind::UnknownLabelId, [&] { scene::load_dataset(dir); });
    fs::remove_all(dir);
}

TEST(Dataset, MissingFiles) {
    const auto dir = scratch_dir("missing");
    expect_kind(ErrorKind::MissingFile, [&] { scene::load_dataset(dir / "nope"); });
    scene::write_dataset(dir, two_image_dataset());
    fs::remove(dir / "images" / "b.png");
    expect_kind(ErrorKind::MissingFile, [&] { scene::load_dataset(dir); });
    fs::remove_all(dir);
}

TEST(Annotations, Malformed) {
    expect_kind(ErrorKind::MalformedAnnotation, [] { scene::AnnotationSet::parse_json("{"); });
    expect_kind(ErrorKind::MalformedAnnotation, [] { scene::AnnotationSet::parse_json(R"({"objects": []})"); });
    expect_kind(ErrorKind::MalformedAnnotation, [] {
        scene::AnnotationSet::parse_json(R"({"objects": ["apple"], "images": {"a": {"apple": {"natural": [1]}}}})");
    });
    expect_kind(ErrorKind::MalformedAnnotation, [] {
        scene::AnnotationSet::parse_json(R"({"objects": ["apple"], "images": {"a": {"pear": {"valid_locations": ["x"]}}}})");
    });
}

TEST(Annotations, PointOutsideImage) {
    auto index = two_image_dataset();
    index.annotations.images["a"][0].natural = Point2D{6, 0};
    expect_kind(ErrorKind::MalformedAnnotation, [&] { scene::validate_dataset(index); });
}

TEST(Annotations, JsonRoundTrip) {
    const auto set = two_image_dataset().annotations;
    const auto again = scene::AnnotationSet::parse_json(set.to_json());
    EXPECT_EQ(again.to_json(), set.to_json());
    ASSERT_NE(again.find("b", "cat"), nullptr);
    EXPECT_EQ(again.find("b", "cat")->natural, (Point2D{1, 3}));
}

TEST(Synthetic, GroundTruthPoints) {
    const auto index = scene::generate_synthetic_dataset({.scenes = 6});
    const auto [pairs, report] = scene::filter_evaluable_pairs(index);
    EXPECT_GT(report.annotator_excluded, 0u);
    EXPECT_GT(report.no_mask, 0u);
    for (const auto& p : pairs) {
        const auto* a = index.annotations.find(p.image_id, p.object);
        ASSERT_NE(a, nullptr);
        ASSERT_TRUE(a->natural && a->unnatural);
        EXPECT_EQ(*a->natural, geom::innermost_point(p.mask));
        EXPECT_FALSE(p.mask.at(*a->unnatural));
        const double frac = static_cast<double>(p.mask.popcount()) / static_cast<double>(p.mask.size());
        EXPECT_GE(frac, 0.10);
        EXPECT_LE(frac, 0.40);
    }
}
