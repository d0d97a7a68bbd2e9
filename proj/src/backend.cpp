#include "pearl/backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "pearl/text.hpp"

namespace pearl::backend {

namespace {

[[noreturn]] void malformed(const std::string& endpoint, const std::string& what) {
    throw Error(ErrorKind::MalformedResponse, "/v1/" + endpoint + ": " + what);
}

const Json& require(const Json& j, const char* key, const std::string& endpoint) {
    if (!j.is_object() || !j.contains(key)) malformed(endpoint, std::string("missing field '") + key + "'");
    return j.at(key);
}

double number(const Json& j, const char* key, const std::string& endpoint) {
    const auto& v = require(j, key, endpoint);
    if (!v.is_number()) malformed(endpoint, std::string("field '") + key + "' is not a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) malformed(endpoint, std::string("field '") + key + "' is not finite");
    return d;
}

std::string string_field(const Json& j, const char* key, const std::string& endpoint) {
    const auto& v = require(j, key, endpoint);
    if (!v.is_string()) malformed(endpoint, std::string("field '") + key + "' is not a string");
    return v.get<std::string>();
}

io::RgbImage decode_image_b64(const std::string& b64) {
    return io::decode_png_rgb(codec::base64_decode(b64));
}

std::string encode_image_b64(const io::RgbImage& image) {
    return codec::base64_encode(io::encode_png_rgb(image));
}

// Transcripts keep responses readable: long payloads (PNG and float grids) are
// replaced by a short digest of their content.
Json elide(const Json& j) {
    constexpr std::size_t kLimit = 200;
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s.size() <= kLimit) return j;
        return "<elided sha256:" + codec::sha256_hex(s).substr(0, 16) + ">";
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& v : j) out.push_back(elide(v));
        return out;
    }
    if (j.is_object()) {
        Json out = Json::object();
        for (const auto& [k, v] : j.items()) out[k] = elide(v);
        return out;
    }
    return j;
}

}  // namespace

Json to_json(const BBox& box) {
    return {{"x0", box.x0}, {"y0", box.y0}, {"x1", box.x1}, {"y1", box.y1}, {"phrase", box.phrase}, {"score", box.score}};
}

BBox bbox_from_json(const Json& j) {
    BBox b;
    b.x0 = number(j, "x0", "detect");
    b.y0 = number(j, "y0", "detect");
    b.x1 = number(j, "x1", "detect");
    b.y1 = number(j, "y1", "detect");
    b.phrase = string_field(j, "phrase", "detect");
    b.score = number(j, "score", "detect");
    return b;
}

Json to_json(const std::vector<ChatMessage>& messages) {
    Json out = Json::array();
    for (const auto& m : messages) out.push_back({{"role", m.role}, {"content", m.content}});
    return out;
}

std::vector<ChatMessage> messages_from_json(const Json& j) {
    if (!j.is_array()) throw Error(ErrorKind::MalformedInput, "messages must be an array");
    std::vector<ChatMessage> out;
    for (const auto& m : j) {
        if (!m.is_object() || !m.contains("role") || !m.contains("content") || !m["role"].is_string() ||
            !m["content"].is_string()) {
            throw Error(ErrorKind::MalformedInput, "message needs string 'role' and 'content'");
        }
        out.push_back({m["role"].get<std::string>(), m["content"].get<std::string>()});
    }
    return out;
}

std::string image_digest(const io::RgbImage& image) {
    codec::Sha256 h;
    h.update_u32(static_cast<std::uint32_t>(image.width));
    h.update_u32(static_cast<std::uint32_t>(image.height));
    h.update(image.rgb);
    return h.hex_digest();
}

std::string BackendRequest::canonical() const {
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    Json j = {{"endpoint", endpoint}, {"body", body}};
    if (!variant.empty()) j["variant"] = variant;
    if (!image_sha256.empty()) j["image_sha256"] = image_sha256;
    return j.dump();
}

std::string BackendRequest::hash() const { return codec::sha256_hex(canonical()); }

BackendRequest make_request(std::string endpoint, Json body, const io::RgbImage* image, std::string variant) {
    BackendRequest r;
    r.endpoint = std::move(endpoint);
    r.variant = std::move(variant);
    r.body = std::move(body);
    r.image = image;
    if (image) r.image_sha256 = image_digest(*image);
    return r;
}

// -- Fixtures -----------------------------------------------------------------

FixtureTransport FixtureTransport::parse(std::string_view jsonl) {
    FixtureTransport t;
    std::size_t line_no = 0;
    for (const auto& line : text::split(jsonl, '\n')) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw Error(ErrorKind::MalformedInput, "fixture line " + std::to_string(line_no) + ": " + e.what());
        }
        if (j.is_object() && j.contains("manifest")) continue;
        if (!j.is_object() || !j.contains("endpoint") || !j.contains("request_hash") || !j.contains("response") ||
            !j["endpoint"].is_string() || !j["request_hash"].is_string()) {
            throw Error(ErrorKind::MalformedInput,
                        "fixture line " + std::to_string(line_no) + " needs endpoint, request_hash, response");
        }
        t.entries_[j["request_hash"].get<std::string>()] = {j["endpoint"].get<std::string>(), j["response"]};
    }
    return t;
}

FixtureTransport FixtureTransport::load(const std::string& path) { return parse(io::read_text(path)); }

Json FixtureTransport::call(const BackendRequest& request) {
    const auto h = request.hash();
    const auto it = entries_.find(h);
    if (it == entries_.end() || it->second.endpoint != request.endpoint) {
        throw Error(ErrorKind::FixtureMiss, "no recorded response for /v1/" + request.endpoint + " request " + h);
    }
    return it->second.response;
}

Json RecordingTransport::call(const BackendRequest& request) {
    auto response = inner_.call(request);
    std::lock_guard lock(mutex_);
    recorded_.try_emplace(request.hash(), request.endpoint, response);
    return response;
}

std::string RecordingTransport::fixture_jsonl() const {
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& [h, entry] : recorded_) {
        nlohmann::ordered_json line;
        line["endpoint"] = entry.first;
        line["request_hash"] = h;
        line["response"] = entry.second;
        out += line.dump() + "\n";
    }
    return out;
}

std::size_t RecordingTransport::size() const {
    std::lock_guard lock(mutex_);
    return recorded_.size();
}

ThrottledTransport::ThrottledTransport(Transport& inner, unsigned max_in_flight)
    : inner_(inner), slots_(static_cast<std::ptrdiff_t>(std::clamp(max_in_flight, 1u, 1024u))) {}

Json ThrottledTransport::call(const BackendRequest& request) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slots_};
    return inner_.call(request);
}

// -- Wire form ----------------------------------------------------------------

Json to_wire(const BackendRequest& request) {
    Json wire = request.body;
    if (request.image) wire["image_b64"] = encode_image_b64(*request.image);
    return wire;
}

Json dispatch_wire(Transport& transport, const std::string& endpoint, const std::string& variant, const Json& wire) {
    if (!wire.is_object()) throw Error(ErrorKind::MalformedInput, "request body must be a JSON object");
    Json body = wire;
    std::optional<io::RgbImage> image;
    if (body.contains("image_b64")) {
        if (!body["image_b64"].is_string()) throw Error(ErrorKind::MalformedInput, "image_b64 must be a string");
        image = decode_image_b64(body["image_b64"].get<std::string>());
        body.erase("image_b64");
    }
    const auto request = make_request(endpoint, std::move(body), image ? &*image : nullptr, variant);
    return transport.call(request);
}

std::unique_ptr<Transport> open_transport(const std::string& target) {
    if (target.rfind("http://", 0) == 0 || target.rfind("https://", 0) == 0) return std::make_unique<HttpTransport>(target);
    return std::make_unique<FixtureTransport>(FixtureTransport::load(target));
}

// -- Heatmaps -----------------------------------------------------------------

Json heatmap_to_json(const geom::Heatmap& heatmap) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(heatmap.values.size() * 4);
    for (float v : heatmap.values) {
        const auto u = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
    }
    return {{"width", heatmap.width}, {"height", heatmap.height}, {"data_b64", codec::base64_encode(bytes)}};
}

geom::Heatmap heatmap_from_json(const Json& j) {
    geom::Heatmap h;
    const double w = number(j, "width", "heatmap");
    const double ht = number(j, "height", "heatmap");
    if (w < 1 || ht < 1 || w != std::floor(w) || ht != std::floor(ht)) malformed("heatmap", "bad dimensions");
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(ht);
    std::vector<std::uint8_t> bytes;
    try {
        bytes = codec::base64_decode(string_field(j, "data_b64", "heatmap"));
    } catch (const Error& e) {
        malformed("heatmap", e.detail());
    }
    const auto count = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
    if (bytes.size() != count * 4) malformed("heatmap", "data size does not match dimensions");
    h.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        h.values[i] = std::bit_cast<float>(u);
    }
    return h;
}

// -- Typed client -------------------------------------------------------------

Json BackendClient::exchange(const BackendRequest& request) {
    Json response = transport_.call(request);
    if (!response.is_object()) malformed(request.endpoint, "response is not a JSON object");
    TranscriptEntry entry;
    entry.stage = stage_;
    entry.endpoint = request.endpoint;
    entry.request_hash = request.hash();
    entry.request = elide(request.body);
    if (!request.variant.empty()) entry.request["variant"] = request.variant;
    entry.response = elide(response);
    transcript_.push_back(std::move(entry));
    return response;
}

std::vector<TagScore> BackendClient::tag(const io::RgbImage& image, double threshold_multiplier,
                                         const std::string& variant) {
    const auto response = exchange(make_request("tag", {{"threshold_multiplier", threshold_multiplier}}, &image, variant));
    const auto& tags = require(response, "tags", "tag");
    if (!tags.is_array()) malformed("tag", "'tags' is not an array");
    std::vector<TagScore> out;
    for (const auto& t : tags) out.push_back({string_field(t, "tag", "tag"), number(t, "score", "tag")});
    return out;
}

std::vector<BBox> BackendClient::detect(const io::RgbImage& image, const std::string& query, double box_threshold) {
    const auto response =
        exchange(make_request("detect", {{"query", query}, {"box_threshold", box_threshold}}, &image));
    const auto& boxes = require(response, "boxes", "detect");
    if (!boxes.is_array()) malformed("detect", "'boxes' is not an array");
    std::vector<BBox> out;
    const double w = image.width;
    const double h = image.height;
    for (const auto& jb : boxes) {
        auto b = bbox_from_json(jb);
        b.x0 = std::clamp(b.x0, 0.0, w);
        b.x1 = std::clamp(b.x1, 0.0, w);
        b.y0 = std::clamp(b.y0, 0.0, h);
        b.y1 = std::clamp(b.y1, 0.0, h);
        if (b.x1 <= b.x0 || b.y1 <= b.y0) continue;
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<geom::BinaryMask> BackendClient::segment(const io::RgbImage& image, const std::vector<BBox>& boxes) {
    Json jboxes = Json::array();
    for (const auto& b : boxes) jboxes.push_back(to_json(b));
    const auto response = exchange(make_request("segment", {{"boxes", jboxes}}, &image));
    const auto& masks = require(response, "masks", "segment");
    if (!masks.is_array()) malformed("segment", "'masks' is not an array");
    std::vector<geom::BinaryMask> out;
    for (const auto& m : masks) {
        if (!m.is_string()) malformed("segment", "mask is not a base64 string");
        geom::BinaryMask mask;
        try {
            mask = io::decode_mask_png(codec::base64_decode(m.get<std::string>()));
        } catch (const Error& e) {
            malformed("segment", e.detail());
        }
        if (mask.width() != image.width || mask.height() != image.height) {
            malformed("segment", "mask dimensions differ from the image");
        }
        out.push_back(std::move(mask));
    }
    return out;
}

geom::Heatmap BackendClient::heatmap(const io::RgbImage& image, const std::string& text) {
    const auto response = exchange(make_request("heatmap", {{"text", text}}, &image));
    auto h = heatmap_from_json(require(response, "heatmap", "heatmap"));
    if (h.width != image.width || h.height != image.height) malformed("heatmap", "grid dimensions differ from the image");
    return h;
}

std::string BackendClient::vqa(const io::RgbImage& image, const std::string& question) {
    const auto response = exchange(make_request("vqa", {{"question", question}}, &image));
    return string_field(response, "answer", "vqa");
}

std::string BackendClient::chat(const std::vector<ChatMessage>& messages, double temperature,
                                const io::RgbImage* image) {
    const auto response =
        exchange(make_request("chat", {{"messages", to_json(messages)}, {"temperature", temperature}}, image));
    return string_field(response, "response", "chat");
}

std::vector<metrics::EmbeddingVector> BackendClient::embed(const std::vector<std::string>& texts) {
    const auto response = exchange(make_request("embed", {{"texts", texts}}));
    const double dim = number(response, "dim", "embed");
    const auto& vectors = require(response, "vectors", "embed");
    if (!vectors.is_array() || vectors.size() != texts.size()) malformed("embed", "expected one vector per text");
    std::vector<metrics::EmbeddingVector> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto& v = vectors[i];
        if (!v.is_array() || static_cast<double>(v.size()) != dim) malformed("embed", "vector length differs from dim");
        metrics::EmbeddingVector e;
        e.source = texts[i];
        for (const auto& x : v) {
            if (!x.is_number()) malformed("embed", "vector entry is not a number");
            e.values.push_back(x.get<double>());
        }
        out.push_back(std::move(e));
    }
    return out;
}

io::RgbImage BackendClient::edit(const io::RgbImage& image, const std::string& instruction) {
    const auto response = exchange(make_request("edit", {{"instruction", instruction}}, &image));
    try {
        return decode_image_b64(string_field(response, "image_b64", "edit"));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::MalformedResponse) throw;
        malformed("edit", e.detail());
    }
}

metrics::EmbeddingVector BackendEmbeddings::embed(const std::string& text) {
    BackendClient client(transport_);
    auto vectors = client.embed({text});
    return std::move(vectors.front());
}

}  // namespace pearl::backend
