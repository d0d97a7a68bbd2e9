#include "pearl/simulated_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "pearl/random.hpp"
#include "pearl/text.hpp"

namespace pearl::sim {

using backend::Json;

namespace {

// Deterministic pseudo-confidence in [0, 1).
double unit_hash(std::initializer_list<std::string_view> parts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : parts) {
        h = fnv1a(p, h);
        h = fnv1a(std::string_view("\0", 1), h);
    }
    return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

const std::vector<std::string>& ram_distractors() {
    static const std::vector<std::string> d = {"room", "indoor", "lamp", "furniture"};
    return d;
}

const std::vector<std::string>& scp_distractors() {
    static const std::vector<std::string> d = {"room", "corner", "light", "side"};
    return d;
}

// Generic fallback ordering when a scene has no opinion.
const std::vector<std::string>& surface_preference(const std::string& object) {
    static const std::vector<std::string> wall_first = {"wall", "shelf", "cabinet", "table", "counter", "desk", "floor"};
    static const std::vector<std::string> floor_first = {"floor", "rug", "couch", "sofa", "bed", "table", "counter"};
    static const std::vector<std::string> table_first = {"table", "counter", "desk", "shelf", "cabinet", "bed",
                                                         "couch", "sofa", "chair", "rug", "floor", "wall"};
    static const std::set<std::string> wall_objects = {"clock", "painting", "poster", "picture", "mirror", "calendar"};
    static const std::set<std::string> floor_objects = {"dog", "cat", "plant", "trash can", "backpack", "shoes"};
    const auto o = text::normalize_label(object);
    if (wall_objects.count(o)) return wall_first;
    if (floor_objects.count(o)) return floor_first;
    return table_first;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

const std::string& require_string(const Json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string()) {
        throw Error(ErrorKind::MalformedInput, std::string("request needs string '") + key + "'");
    }
    return body[key].get_ref<const std::string&>();
}

double require_number(const Json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_number()) {
        throw Error(ErrorKind::MalformedInput, std::string("request needs number '") + key + "'");
    }
    return body[key].get<double>();
}

std::optional<std::string> capture(const std::string& s, const std::regex& re) {
    std::smatch m;
    if (!std::regex_search(s, m, re)) return std::nullopt;
    return text::normalize_label(m[1].str());
}

}  // namespace

std::vector<double> trigram_embedding(std::string_view input) {
    constexpr std::size_t kDim = 32;
    const auto padded = "  " + text::normalize_label(input) + " ";
    std::vector<double> v(kDim, 0.0);
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) v[fnv1a(std::string_view(padded).substr(i, 3)) % kDim] += 1.0;
    return v;
}

std::vector<std::string> tagger_vocabulary(const scene::DatasetIndex& dataset) {
    std::set<std::string> words;
    for (const auto& [_, name] : dataset.labels.entries()) {
        words.insert(name);
        words.insert(scene::apply_remap(name, dataset.remap));
    }
    for (const auto& d : ram_distractors()) words.insert(d);
    for (const auto& d : scp_distractors()) words.insert(d);
    for (const auto& [_, objects] : dataset.annotations.images) {
        for (const auto& a : objects) words.insert(a.valid_locations.begin(), a.valid_locations.end());
    }
    return {words.begin(), words.end()};
}

SimulatedBridge::SimulatedBridge(const scene::DatasetIndex& dataset) : dataset_(dataset) {
    for (const auto& [id, entry] : dataset.scenes) {
        SceneInfo info;
        info.entry = &entry;
        info.digest = backend::image_digest(entry.image.pixels);
        std::map<int, LabelInfo> labels;
        const int w = entry.mask.width;
        for (int y = 0; y < entry.mask.height; ++y) {
            for (int x = 0; x < w; ++x) {
                const int l = entry.mask.at(x, y);
                if (l == 0) continue;
                auto [it, fresh] = labels.try_emplace(l);
                auto& li = it->second;
                if (fresh) {
                    li.id = l;
                    const auto* name = dataset.labels.find(l);
                    li.raw = name ? *name : std::to_string(l);
                    li.location = scene::apply_remap(li.raw, dataset.remap);
                    li.x0 = x;
                    li.y0 = y;
                    li.x1 = x + 1;
                    li.y1 = y + 1;
                }
                ++li.pixels;
                li.x0 = std::min(li.x0, x);
                li.x1 = std::max(li.x1, x + 1);
                li.y1 = std::max(li.y1, y + 1);
            }
        }
        for (auto& [_, li] : labels) info.labels.push_back(std::move(li));
        by_digest_.emplace(info.digest, std::move(info));
    }
}

Json SimulatedBridge::call(const backend::BackendRequest& request) {
    const auto r = resolve(request);
    const auto& e = request.endpoint;
    if (e == "tag") return tag(request, r);
    if (e == "detect") return detect(request, r);
    if (e == "segment") return segment(request, r);
    if (e == "heatmap") return heatmap(request, r);
    if (e == "vqa") return vqa(request, r);
    if (e == "chat") return chat(request, r);
    if (e == "embed") return embed(request);
    if (e == "edit") return edit(request, r);
    throw Error(ErrorKind::InvalidArgument, "unknown endpoint '" + e + "'");
}

SimulatedBridge::Resolved SimulatedBridge::resolve(const backend::BackendRequest& request) const {
    Resolved r;
    if (request.image_sha256.empty()) return r;
    if (const auto it = by_digest_.find(request.image_sha256); it != by_digest_.end()) {
        r.scene = &it->second;
        return r;
    }
    std::lock_guard lock(edits_mutex_);
    if (const auto it = edits_.find(request.image_sha256); it != edits_.end()) {
        r.edit = &it->second;
        r.scene = it->second.scene;
        return r;
    }
    throw Error(ErrorKind::MalformedInput, "image " + request.image_sha256.substr(0, 12) + " is not a simulated scene");
}

std::vector<const SimulatedBridge::LabelInfo*> SimulatedBridge::match(const SceneInfo& scene,
                                                                      const std::string& text) const {
    auto q = text::normalize_label(text);
    if (q.rfind("wooden ", 0) == 0) q.erase(0, 7);
    std::vector<const LabelInfo*> out;
    for (const auto& l : scene.labels) {
        if (l.raw == q || l.location == q) out.push_back(&l);
    }
    return out;
}

geom::BinaryMask SimulatedBridge::label_mask(const SceneInfo& scene, const std::vector<const LabelInfo*>& labels) const {
    const auto& m = scene.entry->mask;
    geom::BinaryMask mask(m.width, m.height);
    std::set<int> ids;
    for (const auto* l : labels) ids.insert(l->id);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (ids.count(m.at(x, y))) mask.set(x, y);
        }
    }
    return mask;
}

Json SimulatedBridge::tag(const backend::BackendRequest& request, const Resolved& r) const {
    if (!r.scene) throw Error(ErrorKind::MalformedInput, "tag needs an image");
    const double threshold = 0.68 * require_number(request.body, "threshold_multiplier");
    const bool scp = request.variant == "scp";
    const auto& scene = *r.scene;
    const double frame = static_cast<double>(scene.entry->mask.width) * scene.entry->mask.height;

    std::vector<std::pair<std::string, double>> candidates;
    for (const auto& l : scene.labels) {
        double s = 0.55 + 0.4 * unit_hash({scene.digest, request.variant, l.raw});
        if (static_cast<double>(l.pixels) / frame > 0.08) s += 0.05;
        candidates.emplace_back(l.raw, round4(s));
    }
    for (const auto& d : scp ? scp_distractors() : ram_distractors()) {
        const double s = d == "room" ? 0.97 : 0.4 + 0.5 * unit_hash({scene.digest, request.variant, d});
        candidates.emplace_back(d, round4(s));
    }
    Json tags = Json::array();
    std::optional<std::pair<std::string, double>> top;
    for (const auto& [name, score] : candidates) {
        if (score < threshold) continue;
        tags.push_back({{"tag", name}, {"score", score}});
        if (!top || score > top->second) top = std::make_pair(name, score);
    }
    // Real taggers occasionally repeat themselves; the client must dedupe.
    if (top) tags.push_back({{"tag", capitalize(top->first)}, {"score", top->second}});
    return {{"tags", tags}};
}

Json SimulatedBridge::detect(const backend::BackendRequest& request, const Resolved& r) const {
    if (!r.scene) throw Error(ErrorKind::MalformedInput, "detect needs an image");
    const auto& query = require_string(request.body, "query");
    const double t = require_number(request.body, "box_threshold");
    const auto& scene = *r.scene;
    const int w = scene.entry->mask.width;
    const int h = scene.entry->mask.height;
    Json boxes = Json::array();
    auto emit = [&](double x0, double y0, double x1, double y1, const std::string& phrase, double score) {
        score = round4(score);
        if (score >= t) {
            boxes.push_back({{"x0", x0}, {"y0", y0}, {"x1", x1}, {"y1", y1}, {"phrase", phrase}, {"score", score}});
        }
    };
    for (const auto& part : text::split(query, ',')) {
        const auto phrase = text::normalize_label(part);
        if (phrase.empty()) continue;
        if (r.edit && phrase == r.edit->object) {
            emit(r.edit->x0, r.edit->y0, r.edit->x1, r.edit->y1, phrase, 0.88);
            continue;
        }
        if (phrase == "room") {
            emit(0, 0, w, h, "room", 0.9);
            continue;
        }
        for (const auto* l : match(scene, phrase)) {
            const auto label = l->raw == "table" ? std::string("wooden table") : l->raw;
            emit(l->x0, l->y0, l->x1, l->y1, label, 0.3 + 0.65 * unit_hash({scene.digest, "detect", l->raw}));
        }
    }
    return {{"boxes", boxes}};
}

Json SimulatedBridge::segment(const backend::BackendRequest& request, const Resolved& r) const {
    if (!r.scene) throw Error(ErrorKind::MalformedInput, "segment needs an image");
    if (!request.body.contains("boxes") || !request.body["boxes"].is_array()) {
        throw Error(ErrorKind::MalformedInput, "segment needs 'boxes'");
    }
    const auto& scene = *r.scene;
    const auto& m = scene.entry->mask;
    Json masks = Json::array();
    for (const auto& jb : request.body["boxes"]) {
        const auto b = backend::bbox_from_json(jb);
        const int x0 = std::clamp(static_cast<int>(std::floor(b.x0)), 0, m.width);
        const int y0 = std::clamp(static_cast<int>(std::floor(b.y0)), 0, m.height);
        const int x1 = std::clamp(static_cast<int>(std::ceil(b.x1)), 0, m.width);
        const int y1 = std::clamp(static_cast<int>(std::ceil(b.y1)), 0, m.height);
        geom::BinaryMask mask(m.width, m.height);
        if (r.edit && text::normalize_label(b.phrase) == r.edit->object) {
            for (int y = std::max(y0, r.edit->y0); y < std::min(y1, r.edit->y1); ++y) {
                for (int x = std::max(x0, r.edit->x0); x < std::min(x1, r.edit->x1); ++x) mask.set(x, y);
            }
        } else {
            const auto labels = match(scene, b.phrase);
            std::set<int> ids;
            for (const auto* l : labels) ids.insert(l->id);
            if (ids.empty()) {
                // Unknown phrase: segment the dominant label inside the box.
                std::map<int, std::size_t> counts;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        if (m.at(x, y) != 0) ++counts[m.at(x, y)];
                    }
                }
                const auto best = std::max_element(counts.begin(), counts.end(),
                                                   [](const auto& a, const auto& b) { return a.second < b.second; });
                if (best != counts.end()) ids.insert(best->first);
            }
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    if (ids.count(m.at(x, y))) mask.set(x, y);
                }
            }
        }
        masks.push_back(codec::base64_encode(io::encode_mask_png(mask)));
    }
    return {{"masks", masks}};
}

Json SimulatedBridge::heatmap(const backend::BackendRequest& request, const Resolved& r) const {
    if (!r.scene) throw Error(ErrorKind::MalformedInput, "heatmap needs an image");
    const auto& text_query = require_string(request.body, "text");
    const auto& scene = *r.scene;
    const int w = scene.entry->mask.width;
    const int h = scene.entry->mask.height;
    geom::Heatmap hm{w, h, std::vector<float>(static_cast<std::size_t>(w) * h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            hm.values[static_cast<std::size_t>(y) * w + x] = static_cast<float>(0.1 * (x + y) / (w + h));
        }
    }
    const auto labels = match(scene, text_query);
    if (!labels.empty()) {
        const auto mask = label_mask(scene, labels);
        const auto depth = geom::interior_depth_field(mask);
        const auto deepest = *std::max_element(depth.squared.begin(), depth.squared.end());
        const double salt = 0.05 * unit_hash({scene.digest, "heatmap", text::normalize_label(text_query)});
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!mask.at(x, y)) continue;
                const double d = std::sqrt(static_cast<double>(depth.squared_at(x, y)) / static_cast<double>(deepest));
                hm.values[static_cast<std::size_t>(y) * w + x] = static_cast<float>(0.5 + 0.45 * d + salt);
            }
        }
    }
    return {{"heatmap", backend::heatmap_to_json(hm)}};
}

Json SimulatedBridge::vqa(const backend::BackendRequest& request, const Resolved& r) const {
    if (!r.scene) throw Error(ErrorKind::MalformedInput, "vqa needs an image");
    static const std::regex kQuestion(R"(^\s*[Ii]s there an? (.+?) in the image\??\s*$)");
    const auto tag = capture(require_string(request.body, "question"), kQuestion);
    const bool present = tag && !match(*r.scene, *tag).empty();
    return {{"answer", present ? "Yes." : "no"}};
}

Json SimulatedBridge::chat(const backend::BackendRequest& request, const Resolved& r) const {
    if (!request.body.contains("messages")) throw Error(ErrorKind::MalformedInput, "chat needs 'messages'");
    const auto messages = backend::messages_from_json(request.body["messages"]);
    std::string last_user;
    std::string question;
    for (const auto& m : messages) {
        if (m.role != "user") continue;
        last_user = m.content;
        if (m.content.find("Possible Answers:") != std::string::npos) question = m.content;
    }

    auto annotation = [&](const std::string& object) -> const scene::ObjectAnnotation* {
        if (!r.scene) return nullptr;
        const auto* a = dataset_.annotations.find(r.scene->entry->image.id, object);
        return a && !a->excluded ? a : nullptr;
    };
    auto present_surface = [&](const std::string& object) -> std::string {
        if (const auto* a = annotation(object)) {
            for (const auto& loc : a->valid_locations) {
                if (!match(*r.scene, loc).empty()) return loc;
            }
        }
        for (const auto& pref : surface_preference(object)) {
            if (r.scene && !match(*r.scene, pref).empty()) return pref;
        }
        return "floor";
    };

    if (!question.empty()) {
        static const std::regex kObject(R"(for an? (.+?) to be placed)");
        const auto object = capture(question, kObject).value_or("");
        const auto at = question.find("Possible Answers:");
        std::vector<std::string> tags;
        for (const auto& t : text::split(question.substr(at + 17), ',')) tags.push_back(text::normalize_label(t));
        for (const auto& pref : surface_preference(object)) {
            if (std::find(tags.begin(), tags.end(), pref) != tags.end()) return {{"response", capitalize(pref) + "."}};
        }
        return {{"response", tags.empty() ? std::string("Nothing.") : tags.front()}};
    }
    if (last_user.find("list of nouns") != std::string::npos && r.scene) {
        std::vector<std::string> nouns;
        for (const auto& l : r.scene->labels) nouns.push_back(l.raw);
        return {{"response", text::join(nouns, ", ")}};
    }
    if (last_user.find("(x,y)") != std::string::npos && r.scene) {
        static const std::regex kObject(R"(place an? (.+?) in this image)");
        const auto object = capture(last_user, kObject).value_or("");
        const auto surface = present_surface(object);
        geom::Point2D p;
        const auto* a = annotation(object);
        if (a && a->natural) {
            p = *a->natural;
        } else {
            const auto mask = label_mask(*r.scene, match(*r.scene, surface));
            p = mask.popcount() ? geom::innermost_point(mask)
                                : geom::Point2D{r.scene->entry->mask.width / 2, r.scene->entry->mask.height / 2};
        }
        return {{"response", "The " + object + " should be placed on the " + surface + ". (" + std::to_string(p.x) +
                                 ", " + std::to_string(p.y) + ")."}};
    }
    if (last_user.find("most natural location to place") != std::string::npos) {
        static const std::regex kObject(R"(place an? (.+?) in this image)");
        const auto object = capture(last_user, kObject).value_or("");
        return {{"response", "The " + present_surface(object) + "."}};
    }
    return {{"response", "I am not sure."}};
}

Json SimulatedBridge::embed(const backend::BackendRequest& request) const {
    if (!request.body.contains("texts") || !request.body["texts"].is_array()) {
        throw Error(ErrorKind::MalformedInput, "embed needs 'texts'");
    }
    Json vectors = Json::array();
    for (const auto& t : request.body["texts"]) {
        if (!t.is_string()) throw Error(ErrorKind::MalformedInput, "texts must be strings");
        vectors.push_back(trigram_embedding(t.get<std::string>()));
    }
    return {{"dim", trigram_embedding("").size()}, {"vectors", vectors}};
}

Json SimulatedBridge::edit(const backend::BackendRequest& request, const Resolved& r) {
    if (!r.scene || !request.image) throw Error(ErrorKind::MalformedInput, "edit needs an image");
    static const std::regex kAdd(R"(^\s*add (.+?)\s*$)");
    const auto object = capture(require_string(request.body, "instruction"), kAdd).value_or("object");
    const auto& scene = *r.scene;
    const auto& m = scene.entry->mask;

    geom::BinaryMask target;
    if (const auto* a = dataset_.annotations.find(scene.entry->image.id, object); a && !a->excluded) {
        target = scene::consolidate_mask(m, dataset_.labels, dataset_.remap, a->valid_locations);
    }
    if (target.empty() || target.popcount() == 0) target = label_mask(scene, match(scene, "floor"));
    geom::Point2D p{m.width / 2, m.height - 1};
    if (target.popcount() > 0) p = geom::innermost_point(target);

    EditInfo info;
    info.scene = &scene;
    info.object = object;
    const int pw = std::max(3, m.width / 12);
    const int ph = std::max(3, m.height / 10);
    info.x0 = std::clamp(p.x - pw / 2, 0, m.width - pw);
    info.x1 = info.x0 + pw;
    info.y1 = p.y + 1;
    info.y0 = std::max(0, info.y1 - ph);

    io::RgbImage edited = *request.image;
    for (int y = info.y0; y < info.y1; ++y) {
        for (int x = info.x0; x < info.x1; ++x) {
            auto* px = &edited.rgb[(static_cast<std::size_t>(y) * edited.width + x) * 3];
            px[0] = 255;
            px[1] = 0;
            px[2] = 255;
        }
    }
    {
        std::lock_guard lock(edits_mutex_);
        edits_.try_emplace(backend::image_digest(edited), info);
    }
    return {{"image_b64", codec::base64_encode(io::encode_png_rgb(edited))}};
}

}  // namespace pearl::sim
