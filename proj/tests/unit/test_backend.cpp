#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "pearl/backend.hpp"
#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "support/scripted_transport.hpp"

using namespace pearl;
using namespace pearl::backend;
using pearl::testing::ScriptedTransport;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(RequestHash, CanonicalAndImageSensitive) {
    const auto img = pearl::testing::gray_image(4, 3);
    auto other = img;
    other.rgb[5] = 7;

    const auto a = make_request("tag", {{"threshold_multiplier", 0.8}}, &img);
    const auto b = make_request("tag", {{"threshold_multiplier", 0.8}}, &img);
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 64u);
    EXPECT_NE(a.hash(), make_request("tag", {{"threshold_multiplier", 0.8}}, &other).hash());
    EXPECT_NE(a.hash(), make_request("tag", {{"threshold_multiplier", 0.8}}, &img, "scp").hash());
    EXPECT_NE(a.hash(), make_request("tag", {{"threshold_multiplier", 0.9}}, &img).hash());

    // Key order in the body does not matter.
    EXPECT_EQ(make_request("detect", Json::parse(R"({"query": "a", "box_threshold": 0.25})")).hash(),
              make_request("detect", Json::parse(R"({"box_threshold": 0.25, "query": "a"})")).hash());
    EXPECT_EQ(a.canonical().find("image_b64"), std::string::npos);
}

TEST(RequestHash, ImageDigestIncludesShape) {
    const io::RgbImage wide{2, 1, std::vector<std::uint8_t>(6, 0)};
    const io::RgbImage tall{1, 2, std::vector<std::uint8_t>(6, 0)};
    EXPECT_NE(image_digest(wide), image_digest(tall));
}

TEST(Fixtures, ReplayAndMiss) {
    const auto req = make_request("vqa", {{"question", "Is there a cat in the image?"}});
    const auto jsonl = R"({"manifest": {"tool": "pearl"}})"
                       "\n"
                       R"({"endpoint": "vqa", "request_hash": ")" +
                       req.hash() + R"(", "response": {"answer": "yes"}})" + "\n\n";
    auto fixtures = FixtureTransport::parse(jsonl);
    EXPECT_EQ(fixtures.size(), 1u);
    EXPECT_EQ(fixtures.call(req)["answer"], "yes");

    const auto miss = make_request("vqa", {{"question", "Is there a dog in the image?"}});
    try {
        fixtures.call(miss);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::FixtureMiss);
        EXPECT_NE(std::string(e.what()).find(miss.hash()), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("/v1/vqa"), std::string::npos);
    }
    EXPECT_EQ(kind_of([] { FixtureTransport::parse("{not json\n"); }), ErrorKind::MalformedInput);
    EXPECT_EQ(kind_of([] { FixtureTransport::parse(R"({"endpoint": "vqa"})"); }), ErrorKind::MalformedInput);
}

TEST(Recording, DedupSortAndReplay) {
    ScriptedTransport inner;
    inner.on("vqa", [](const BackendRequest& r) {
        return Json{{"answer", r.body["question"].get<std::string>().size() % 2 ? "yes" : "no"}};
    });
    RecordingTransport rec(inner);
    EXPECT_EQ(rec.fixture_jsonl(), "");

    const auto q1 = make_request("vqa", {{"question", "a"}});
    const auto q2 = make_request("vqa", {{"question", "bb"}});
    rec.call(q1);
    rec.call(q2);
    rec.call(q1);
    EXPECT_EQ(rec.size(), 2u);
    const auto text = rec.fixture_jsonl();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);

    const auto first_hash = std::min(q1.hash(), q2.hash());
    EXPECT_EQ(text.find(R"({"endpoint":"vqa","request_hash":")" + first_hash), 0u);

    auto replay = FixtureTransport::parse(text);
    EXPECT_EQ(replay.call(q1), inner.call(q1));
    EXPECT_EQ(replay.call(q2), inner.call(q2));
}

TEST(Throttle, BoundsConcurrency) {
    std::atomic<int> live{0};
    std::atomic<int> peak{0};
    ScriptedTransport inner;
    inner.on("embed", [&](const BackendRequest&) {
        const int now = ++live;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --live;
        return Json{{"dim", 1}, {"vectors", {{1.0}}}};
    });
    ThrottledTransport throttled(inner, 2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] { throttled.call(make_request("embed", {{"texts", {std::to_string(i)}}})); });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_EQ(inner.calls().size(), 8u);
}

TEST(Wire, RoundTripThroughDispatch) {
    const auto img = pearl::testing::gray_image(5, 4, 33);
    ScriptedTransport server;
    std::string seen_hash;
    server.on("tag", [&](const BackendRequest& r) {
        seen_hash = r.hash();
        EXPECT_NE(r.image, nullptr);
        EXPECT_EQ(r.variant, "scp");
        return Json{{"tags", Json::array()}};
    });
    const auto req = make_request("tag", {{"threshold_multiplier", 1.0}}, &img, "scp");
    const auto wire = to_wire(req);
    EXPECT_TRUE(wire.contains("image_b64"));
    dispatch_wire(server, "tag", "scp", wire);
    EXPECT_EQ(seen_hash, req.hash());
    EXPECT_EQ(kind_of([&] { dispatch_wire(server, "tag", "", Json::array()); }), ErrorKind::MalformedInput);
}

TEST(Heatmap, CodecRoundTrip) {
    geom::Heatmap h{3, 2, {0.0f, 0.5f, -1.25f, 1e-7f, 3.0f, 0.93f}};
    const auto back = heatmap_from_json(heatmap_to_json(h));
    EXPECT_EQ(back.width, 3);
    EXPECT_EQ(back.values, h.values);
    EXPECT_EQ(kind_of([] { heatmap_from_json({{"width", 2}, {"height", 2}, {"data_b64", "AAAA"}}); }),
              ErrorKind::MalformedResponse);
}

TEST(Client, ValidatesResponses) {
    const auto img = pearl::testing::gray_image(6, 4);
    ScriptedTransport t;
    t.on("tag", Json{{"labels", Json::array()}})
        .on("detect", Json{{"boxes", {pearl::testing::box_json(-3, 1, 4, 9, "table", 0.7),
                                      pearl::testing::box_json(5, 1, 5, 3, "flat", 0.9)}}})
        .on("segment", Json{{"masks", {pearl::testing::mask_b64(geom::BinaryMask(3, 3))}}})
        .on("heatmap", Json{{"heatmap", heatmap_to_json(geom::Heatmap{2, 2, {0, 0, 0, 1}})}})
        .on("chat", Json::array());
    BackendClient client(t);
    EXPECT_EQ(kind_of([&] { client.tag(img, 1.0); }), ErrorKind::MalformedResponse);

    const auto boxes = client.detect(img, "table", 0.25);
    ASSERT_EQ(boxes.size(), 1u);  // the zero-width box is dropped
    EXPECT_EQ(boxes[0].x0, 0.0);
    EXPECT_EQ(boxes[0].y1, 4.0);

    EXPECT_EQ(kind_of([&] { client.segment(img, boxes); }), ErrorKind::MalformedResponse);
    EXPECT_EQ(kind_of([&] { client.heatmap(img, "table"); }), ErrorKind::MalformedResponse);
    EXPECT_EQ(kind_of([&] { client.chat({{"user", "hi"}}, 0.2); }), ErrorKind::MalformedResponse);
}

TEST(Client, TranscriptElidesLongStrings) {
    const auto img = pearl::testing::gray_image(6, 4);
    ScriptedTransport t;
    t.on("segment", Json{{"masks", {pearl::testing::mask_b64(geom::BinaryMask(6, 4, true))}}});
    BackendClient client(t);
    client.set_stage("locate");
    client.segment(img, {BBox{0, 0, 6, 4, "table", 0.9}});
    ASSERT_EQ(client.transcript().size(), 1u);
    const auto& e = client.transcript()[0];
    EXPECT_EQ(e.stage, "locate");
    EXPECT_EQ(e.endpoint, "segment");
    EXPECT_EQ(e.request_hash, t.hashes()[0]);
    const auto mask_text = e.response["masks"][0].get<std::string>();
    if (pearl::testing::mask_b64(geom::BinaryMask(6, 4, true)).size() > 200) {
        EXPECT_EQ(mask_text.rfind("<elided sha256:", 0), 0u);
    }
    EXPECT_FALSE(e.request.contains("image_b64"));
}

TEST(Client, ElisionOfLongChatText) {
    ScriptedTransport t;
    const std::string long_answer(300, 'x');
    t.on("chat", Json{{"response", long_answer}});
    BackendClient client(t);
    EXPECT_EQ(client.chat({{"user", "hi"}}, 0.2), long_answer);
    const auto shown = client.transcript()[0].response["response"].get<std::string>();
    EXPECT_EQ(shown, "<elided sha256:" + codec::sha256_hex(long_answer).substr(0, 16) + ">");
}

TEST(Transport, OpenBySpec) {
    EXPECT_EQ(open_transport("http://127.0.0.1:9")->mode(), "http");
    EXPECT_EQ(kind_of([] { open_transport("/nonexistent/fixtures.jsonl"); }), ErrorKind::MissingFile);
}
