#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "pearl/codec.hpp"
#include "pearl/pipeline.hpp"
#include "pearl/simulated_bridge.hpp"
#include "pearl/synthetic.hpp"
#include "support/golden.hpp"

using namespace pearl;
using pipeline::PipelineResult;

namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

const scene::DatasetIndex& dataset() {
    static const auto d = [] {
        scene::SyntheticConfig cfg;
        cfg.scenes = 10;
        return scene::generate_synthetic_dataset(cfg);
    }();
    return d;
}

Pairs annotated_pairs(const scene::DatasetIndex& d) {
    Pairs out;
    for (const auto& [image, objects] : d.annotations.images) {
        for (const auto& a : objects) {
            if (!a.excluded) out.emplace_back(image, a.object);
        }
    }
    return out;
}

std::string records_text(const std::vector<PipelineResult>& results) {
    std::string out;
    for (const auto& r : results) {
        if (r.ok()) {
            out += std::get<pipeline::PlacementRecord>(r.outcome).dump() + "\n";
        } else {
            out += r.image + "\t" + r.object + "\terror\t" + std::get<Error>(r.outcome).what() + "\n";
        }
    }
    return out;
}

struct Recorded {
    std::string fixtures;
    std::map<std::string, std::string> records;  // preset -> records text
};

const Recorded& recorded() {
    static const Recorded r = [] {
        sim::SimulatedBridge bridge(dataset());
        backend::RecordingTransport recorder(bridge);
        Recorded out;
        for (const auto& name : pipeline::preset_names()) {
            out.records[name] =
                records_text(pipeline::run_pipelines(dataset(), annotated_pairs(dataset()), pipeline::preset(name),
                                                     recorder, 1));
        }
        out.fixtures = recorder.fixture_jsonl();
        return out;
    }();
    return r;
}

}  // namespace

TEST(GoldenReplay, FixturesReproduceRecordsByteForByte) {
    auto fixtures = backend::FixtureTransport::parse(recorded().fixtures);
    for (const auto& name : pipeline::preset_names()) {
        const auto cfg = pipeline::preset(name);
        const auto first = records_text(pipeline::run_pipelines(dataset(), annotated_pairs(dataset()), cfg, fixtures, 1));
        const auto second = records_text(pipeline::run_pipelines(dataset(), annotated_pairs(dataset()), cfg, fixtures, 1));
        const auto parallel =
            records_text(pipeline::run_pipelines(dataset(), annotated_pairs(dataset()), cfg, fixtures, 8));
        EXPECT_EQ(first, recorded().records.at(name)) << name;
        EXPECT_EQ(first, second) << name;
        EXPECT_EQ(first, parallel) << name;
    }
}

TEST(GoldenReplay, RecordsMatchGolden) {
    std::string summary;
    for (const auto& [name, text] : recorded().records) {
        summary += name + "\t" + codec::sha256_hex(text) + "\n";
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.find("\terror\t") != std::string::npos) {
                summary += name + "\t" + line + "\n";
                continue;
            }
            const auto j = nlohmann::json::parse(line);
            summary += name + "\t" + j["image"].get<std::string>() + "\t" + j["object"].get<std::string>() + "\t" +
                       (j["selected"].is_null() ? std::string("-") : j["selected"].get<std::string>()) + "\t" +
                       j["point"].dump() + "\n";
        }
    }
    pearl::testing::expect_golden("synthetic_placements.tsv", summary);
    pearl::testing::expect_golden("synthetic_fixtures.sha256", codec::sha256_hex(recorded().fixtures) + "\n");
}

TEST(GoldenReplay, UnknownRequestIsFixtureMiss) {
    auto fixtures = backend::FixtureTransport::parse(recorded().fixtures);
    auto cfg = pipeline::preset("octo-plus");
    cfg.filter.t = 0.3;  // changes the detector request, so its hash is not recorded
    const auto results = pipeline::run_pipelines(dataset(), annotated_pairs(dataset()), cfg, fixtures, 1);
    ASSERT_FALSE(results.empty());
    for (const auto& r : results) {
        ASSERT_FALSE(r.ok());
        EXPECT_EQ(std::get<Error>(r.outcome).kind(), ErrorKind::FixtureMiss);
        EXPECT_EQ(std::get<Error>(r.outcome).stage(), "filter");
    }
}

TEST(GoldenReplay, DetectorFilterMonotoneOnRecordedBoxes) {
    std::istringstream lines(recorded().records.at("octo-plus"));
    std::string line;
    int checked = 0;
    while (std::getline(lines, line)) {
        if (line.find("\terror\t") != std::string::npos) continue;
        const auto j = nlohmann::json::parse(line);
        const auto& scene = dataset().scene(j["image"].get<std::string>());
        const auto tags = j["tags_pre"].get<std::vector<std::string>>();
        std::vector<backend::BBox> boxes;
        for (const auto& e : j["transcript"]) {
            if (e["stage"] == "filter" && e["endpoint"] == "detect") {
                for (const auto& b : e["response"]["boxes"]) boxes.push_back(backend::bbox_from_json(b));
            }
        }
        std::vector<std::string> previous = tags;
        for (double t = 0.05; t < 1.0; t += 0.05) {
            const auto kept = pipeline::select_tags_by_boxes(tags, boxes, scene.image.pixels.width,
                                                             scene.image.pixels.height, t, 0.9);
            for (const auto& tag : kept) {
                EXPECT_NE(std::find(previous.begin(), previous.end(), tag), previous.end()) << tag << " at t=" << t;
            }
            previous = kept;
        }
        ++checked;
    }
    EXPECT_GT(checked, 0);
}
