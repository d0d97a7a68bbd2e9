#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pearl/embedding.hpp"
#include "pearl/image_io.hpp"
#include "pearl/metrics.hpp"
#include "pearl/scene_data.hpp"
#include "pearl/simulated_bridge.hpp"
#include "support/bridge_server.hpp"

namespace fs = std::filesystem;
using namespace pearl;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("pearl_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    CliRun run(const std::string& args, const std::string& env = "SOURCE_DATE_EPOCH=0") const {
        const auto out = path("stdout.txt");
        const auto err = path("stderr.txt");
        const std::string cmd = env + " '" PEARL_BIN "' " + args + " >'" + out + "' 2>'" + err + "'";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, io::read_text(out), io::read_text(err)};
    }

    // Synthetic dataset with embeddings; returns its directory.
    std::string synth(int scenes = 6) const {
        const auto r = run("synth --out '" + path("data") + "' --scenes " + std::to_string(scenes) +
                           " --seed 3 --embeddings '" + path("emb.json") + "'");
        EXPECT_EQ(r.code, 0) << r.err;
        return path("data");
    }

    fs::path dir_;
};

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// CSV row for `method` split on commas (no quoting in these tests).
std::vector<std::string> csv_row(const std::string& text, const std::string& method) {
    for (const auto& line : lines_of(text)) {
        std::vector<std::string> cells;
        std::istringstream in(line);
        std::string cell;
        while (std::getline(in, cell, ',')) cells.push_back(cell);
        if (cells.size() > 1 && cells[1] == method) return cells;
    }
    ADD_FAILURE() << "no row for " << method << " in\n" << text;
    return {};
}

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
    const auto data = synth(2);
    auto r = run("place --dataset '" + data + "' --preset octo --backend '" + path("none.jsonl") + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("octo"), std::string::npos);

    r = run("place --image '" + data + "/images/scene0000.png' --object '' --preset octo-plus --backend '" +
            path("none.jsonl") + "'");
    EXPECT_EQ(r.code, 2) << r.err;

    r = run("eval --stage 3 --dataset '" + data + "'");
    EXPECT_EQ(r.code, 2);
    r = run("frobnicate");
    EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, MissingInputsAreListed) {
    const auto data = synth(3);
    io::write_text(path("tags.jsonl"), R"({"image": "scene0000", "tags": ["floor"]})" "\n");
    const auto r = run("eval --stage 1 --dataset '" + data + "' --embeddings '" + path("emb.json") +
                       "' --inputs mine='" + path("tags.jsonl") + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("MissingTags"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("scene0001"), std::string::npos) << r.err;
}

TEST_F(CliTest, BaselinesDeterministicAndOrdered) {
    const auto data = synth();
    for (const char* kind : {"natural", "random", "unnatural"}) {
        const auto first = run(std::string("baseline --kind ") + kind + " --seed 7 --dataset '" + data + "' --out '" +
                               path(std::string(kind) + ".jsonl") + "'");
        ASSERT_EQ(first.code, 0) << first.err;
        const auto again = run(std::string("baseline --kind ") + kind + " --seed 7 --dataset '" + data + "'");
        EXPECT_EQ(again.out, io::read_text(path(std::string(kind) + ".jsonl")));
    }
    EXPECT_NE(run("baseline --kind random --seed 8 --dataset '" + data + "'").out,
              io::read_text(path("random.jsonl")));

    const auto r = run("eval --stage 3 --dataset '" + data + "' --inputs natural='" + path("natural.jsonl") +
                       "' random='" + path("random.jsonl") + "' unnatural='" + path("unnatural.jsonl") + "' --out '" +
                       path("report.csv") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = io::read_text(path("report.csv"));
    const auto natural = csv_row(report, "natural");
    const auto random = csv_row(report, "random");
    const auto unnatural = csv_row(report, "unnatural");
    ASSERT_EQ(natural.size(), 7u);
    EXPECT_EQ(natural[5], "1.000000");
    EXPECT_EQ(unnatural[5], "0.000000");
    EXPECT_GT(std::stod(natural[6]), std::stod(random[6]));
    EXPECT_GT(std::stod(random[6]), std::stod(unnatural[6]));
    EXPECT_TRUE(fs::exists(path("report.csv.audit.jsonl")));
}

TEST_F(CliTest, EvalStageOneMatchesLibrary) {
    const auto data = synth(4);
    const auto dataset = scene::load_dataset(data);
    // Every image gets half of its location vocabulary: first half of the
    // sorted location names, so exact match is well below 1.
    std::string text;
    metrics::TagLists tags;
    for (const auto& [image, objects] : dataset.annotations.images) {
        std::set<std::string> all;
        for (const auto& a : objects) all.insert(a.valid_locations.begin(), a.valid_locations.end());
        std::vector<std::string> half(all.begin(), all.end());
        half.resize((half.size() + 1) / 2);
        tags[image] = half;
        text += nlohmann::json{{"image", image}, {"tags", half}}.dump() + "\n";
    }
    io::write_text(path("tags.jsonl"), text);
    const auto r = run("eval --stage 1 --format json --dataset '" + data + "' --embeddings '" + path("emb.json") +
                       "' --inputs half='" + path("tags.jsonl") + "'");
    ASSERT_EQ(r.code, 0) << r.err;

    auto provider = metrics::FixtureEmbeddings::load(path("emb.json"));
    const auto expected = metrics::stage1_metrics(tags, dataset.annotations, provider);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["manifest"]["timestamp"], "1970-01-01T00:00:00Z");
    const auto row = j["report"]["stage1"][0];
    EXPECT_NEAR(row["exact_match"].get<double>(), expected.exact_match, 1e-6);
    EXPECT_NEAR(row["sbert"].get<double>(), expected.sbert, 1e-6);
    EXPECT_LT(expected.exact_match, 1.0);
}

TEST_F(CliTest, RecordThenReplay) {
    const auto data = synth(3);
    const auto dataset = scene::load_dataset(data);
    sim::SimulatedBridge bridge(dataset);
    pearl::testing::BridgeServer server(bridge);

    const auto rec = run("record-fixtures --backend-url " + server.url() + " --dataset '" + data +
                         "' --preset octo-plus --out '" + path("fx.jsonl") + "' --placements '" + path("rec.jsonl") +
                         "' --jobs 2");
    ASSERT_EQ(rec.code, 0) << rec.err;
    const auto manifest = nlohmann::json::parse(io::read_text(path("fx.jsonl.manifest.json")));
    EXPECT_EQ(manifest["backend_mode"], "http");
    EXPECT_EQ(manifest["dataset_digest"], dataset.digest());

    const auto replay = run("place --dataset '" + data + "' --preset octo-plus --backend '" + path("fx.jsonl") +
                            "' --jobs 3");
    ASSERT_EQ(replay.code, 0) << replay.err;
    auto recorded = lines_of(io::read_text(path("rec.jsonl")));
    auto replayed = lines_of(replay.out);
    ASSERT_GT(recorded.size(), 1u);
    ASSERT_EQ(recorded.size(), replayed.size());
    EXPECT_EQ(nlohmann::json::parse(replayed[0])["manifest"]["backend_mode"], "fixture");
    EXPECT_EQ(std::vector<std::string>(recorded.begin() + 1, recorded.end()),
              std::vector<std::string>(replayed.begin() + 1, replayed.end()));

    // Another preset's requests were never recorded.
    const auto miss = run("place --dataset '" + data + "' --preset octopus --backend '" + path("fx.jsonl") + "'");
    EXPECT_EQ(miss.code, 1);
    EXPECT_NE(miss.err.find("FixtureMiss"), std::string::npos) << miss.err;
}

TEST_F(CliTest, RecordEmptyDatasetGivesEmptyFixture) {
    const auto r0 = run("synth --out '" + path("empty") + "' --scenes 0");
    ASSERT_EQ(r0.code, 0) << r0.err;
    const auto dataset = scene::load_dataset(path("empty"));
    sim::SimulatedBridge bridge(dataset);
    pearl::testing::BridgeServer server(bridge);
    const auto r = run("record-fixtures --backend-url " + server.url() + " --dataset '" + path("empty") +
                       "' --preset octopus --out '" + path("fx.jsonl") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(io::read_text(path("fx.jsonl")), "");
}

TEST_F(CliTest, RecordUnreachableBridge) {
    const auto data = synth(1);
    const auto r = run("record-fixtures --backend-url http://127.0.0.1:1 --dataset '" + data +
                       "' --preset octo-plus --out '" + path("fx.jsonl") + "'");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("http://127.0.0.1:1"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("fx.jsonl")));
}

TEST_F(CliTest, SingleImagePlacementWritesAnnotation) {
    const auto data = synth(1);
    const auto dataset = scene::load_dataset(data);
    sim::SimulatedBridge bridge(dataset);
    pearl::testing::BridgeServer server(bridge);
    const auto& scene = dataset.scenes.begin()->second;
    const auto object = dataset.annotations.images.begin()->second.front().object;
    const auto r = run("place --image '" + data + "/images/" + scene.image.id + ".png' --object " + object +
                       " --preset octo-plus --backend " + server.url() + " --annotate '" + path("shot.png") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = lines_of(r.out);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(nlohmann::json::parse(lines[0])["manifest"]["timestamp"], "1970-01-01T00:00:00Z");
    const auto rec = nlohmann::json::parse(lines[1]);
    EXPECT_EQ(rec["object"], object);
    EXPECT_TRUE(fs::exists(path("shot.png")));
}
