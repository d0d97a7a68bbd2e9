#pragma once

// Model backends behind one request/response contract.
//
// A request is an endpoint name, a JSON body and optionally the scene image.
// Every transport (fixture replay, HTTP bridge, in-process simulator) sees the
// same BackendRequest and returns the same response JSON, so recorded sessions
// replay exactly. Requests are identified by a SHA-256 over their canonical
// JSON with the image replaced by its pixel digest.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pearl/embedding.hpp"
#include "pearl/geometry.hpp"
#include "pearl/image_io.hpp"

namespace pearl::backend {

using Json = nlohmann::json;

struct TagScore {
    std::string tag;
    double score = 0.0;
};

/// Pixel box; x1 and y1 are exclusive.
struct BBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
    std::string phrase;
    double score = 0.0;

    double area() const noexcept { return (x1 - x0) * (y1 - y0); }
};

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

Json to_json(const BBox& box);
BBox bbox_from_json(const Json& j);
Json to_json(const std::vector<ChatMessage>& messages);
std::vector<ChatMessage> messages_from_json(const Json& j);

/// SHA-256 of (u32le width, u32le height, rgb bytes).
std::string image_digest(const io::RgbImage& image);

struct BackendRequest {
    std::string endpoint;  // tag, detect, segment, heatmap, vqa, chat, embed, edit
    std::string variant;   // tagger variant such as "scp"; empty for the default model
    Json body = Json::object();
    const io::RgbImage* image = nullptr;
    std::string image_sha256;  // filled from `image` by make_request

    std::string canonical() const;
    std::string hash() const;
};

BackendRequest make_request(std::string endpoint, Json body, const io::RgbImage* image = nullptr,
                            std::string variant = {});

class Transport {
public:
    virtual ~Transport() = default;
    /// Throws BackendUnavailable, FixtureMiss or MalformedResponse.
    virtual Json call(const BackendRequest& request) = 0;
    /// "fixture", "http" or "simulated".
    virtual std::string mode() const = 0;
};

/// Replays a JSON-lines fixture file: {"endpoint", "request_hash", "response"}.
class FixtureTransport final : public Transport {
public:
    static FixtureTransport parse(std::string_view jsonl);
    static FixtureTransport load(const std::string& path);

    Json call(const BackendRequest& request) override;
    std::string mode() const override { return "fixture"; }
    std::size_t size() const noexcept { return entries_.size(); }

private:
    struct Entry {
        std::string endpoint;
        Json response;
    };
    std::map<std::string, Entry> entries_;
};

/// Forwards to another transport and keeps every distinct exchange.
class RecordingTransport final : public Transport {
public:
    explicit RecordingTransport(Transport& inner) : inner_(inner) {}

    Json call(const BackendRequest& request) override;
    std::string mode() const override { return inner_.mode(); }

    /// One line per request hash, sorted by hash. Empty session, empty text.
    std::string fixture_jsonl() const;
    std::size_t size() const;

private:
    Transport& inner_;
    mutable std::mutex mutex_;
    std::map<std::string, std::pair<std::string, Json>> recorded_;
};

/// Bounds the number of concurrent calls into `inner`.
class ThrottledTransport final : public Transport {
public:
    ThrottledTransport(Transport& inner, unsigned max_in_flight);

    Json call(const BackendRequest& request) override;
    std::string mode() const override { return inner_.mode(); }

private:
    Transport& inner_;
    std::counting_semaphore<1024> slots_;
};

/// Client for the HTTP bridge: POST <base>/v1/<endpoint>[?variant=..].
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::string base_url, int timeout_seconds = 120);

    Json call(const BackendRequest& request) override;
    std::string mode() const override { return "http"; }
    const std::string& base_url() const noexcept { return base_url_; }

private:
    std::string base_url_;
    int timeout_seconds_;
};

/// Request body as sent over HTTP: the JSON body plus "image_b64" (PNG).
Json to_wire(const BackendRequest& request);

/// Server side of the contract: decodes a wire body, dispatches it to
/// `transport` and returns the response JSON. Throws MalformedInput.
Json dispatch_wire(Transport& transport, const std::string& endpoint, const std::string& variant, const Json& wire);

/// Opens a fixture file or an HTTP bridge depending on the shape of `target`:
/// "http://..." or "https://..." selects HTTP, anything else is a path.
std::unique_ptr<Transport> open_transport(const std::string& target);

struct TranscriptEntry {
    std::string stage;
    std::string endpoint;
    std::string request_hash;
    Json request;
    Json response;
};

/// Typed, validated access to every endpoint. Each call is appended to the
/// transcript in call order. One client per pipeline run.
class BackendClient {
public:
    explicit BackendClient(Transport& transport) : transport_(transport) {}

    void set_stage(std::string stage) { stage_ = std::move(stage); }

    std::vector<TagScore> tag(const io::RgbImage& image, double threshold_multiplier, const std::string& variant = {});
    std::vector<BBox> detect(const io::RgbImage& image, const std::string& query, double box_threshold);
    std::vector<geom::BinaryMask> segment(const io::RgbImage& image, const std::vector<BBox>& boxes);
    geom::Heatmap heatmap(const io::RgbImage& image, const std::string& text);
    std::string vqa(const io::RgbImage& image, const std::string& question);
    std::string chat(const std::vector<ChatMessage>& messages, double temperature, const io::RgbImage* image = nullptr);
    std::vector<metrics::EmbeddingVector> embed(const std::vector<std::string>& texts);
    io::RgbImage edit(const io::RgbImage& image, const std::string& instruction);

    const std::vector<TranscriptEntry>& transcript() const noexcept { return transcript_; }

private:
    Json exchange(const BackendRequest& request);

    Transport& transport_;
    std::string stage_;
    std::vector<TranscriptEntry> transcript_;
};

/// Embeddings served by the /v1/embed endpoint.
class BackendEmbeddings final : public metrics::EmbeddingProvider {
public:
    explicit BackendEmbeddings(Transport& transport) : transport_(transport) {}
    metrics::EmbeddingVector embed(const std::string& text) override;

private:
    Transport& transport_;
};

/// Heatmap wire form: {"width", "height", "data_b64"} with float32 LE values.
Json heatmap_to_json(const geom::Heatmap& heatmap);
geom::Heatmap heatmap_from_json(const Json& j);

}  // namespace pearl::backend
