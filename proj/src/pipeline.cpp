#include "pearl/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <regex>
#include <set>

#include "pearl/parallel.hpp"
#include "pearl/text.hpp"

namespace pearl::pipeline {

namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

template <typename Enum>
struct NameTable {
    Enum value;
    const char* name;
};

constexpr NameTable<TaggerKind> kTaggers[] = {
    {TaggerKind::RamPlusPlus, "ram++"}, {TaggerKind::Scp, "scp"}, {TaggerKind::Mllm, "mllm"}, {TaggerKind::None, "none"}};
constexpr NameTable<FilterKind> kFilters[] = {{FilterKind::None, "none"},
                                              {FilterKind::Vqa, "vqa"},
                                              {FilterKind::HeatmapTopK, "heatmap-topk"},
                                              {FilterKind::Detector, "detector"}};
constexpr NameTable<SelectorKind> kSelectors[] = {
    {SelectorKind::Llm, "llm"}, {SelectorKind::Mllm, "mllm"}, {SelectorKind::None, "none"}};
constexpr NameTable<LocatorKind> kLocators[] = {{LocatorKind::HeatmapMax, "heatmap-max"},
                                                {LocatorKind::MaskCenter, "mask-center"},
                                                {LocatorKind::EditBottom, "edit-bottom"},
                                                {LocatorKind::DirectMllm, "direct-mllm"}};

template <typename Enum, std::size_t N>
const char* name_of(const NameTable<Enum> (&table)[N], Enum v) {
    for (const auto& e : table) {
        if (e.value == v) return e.name;
    }
    return "?";
}

template <typename Enum, std::size_t N>
Enum parse_name(const NameTable<Enum> (&table)[N], const std::string& name, const char* what) {
    for (const auto& e : table) {
        if (name == e.name) return e.value;
    }
    std::string options;
    for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
    throw Error(ErrorKind::InvalidConfig, "unknown " + std::string(what) + " '" + name + "' (expected " + options + ")");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get(const Json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw Error(ErrorKind::InvalidConfig, std::string("bad value for '") + key + "' in " + where);
    }
}

// Preserves first occurrence order.
std::vector<std::string> dedup(std::vector<std::string> in) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (auto& s : in) {
        if (s.empty() || !seen.insert(s).second) continue;
        out.push_back(std::move(s));
    }
    return out;
}

const std::string* match_tag(std::span<const std::string> tags, std::string_view answer) {
    const auto normalized = text::normalize_answer(answer);
    for (const auto& t : tags) {
        if (text::normalize_answer(t) == normalized) return &t;
    }
    return nullptr;
}

}  // namespace

// -- Config -------------------------------------------------------------------

void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
    if (!(tagger.threshold_multiplier > 0.0)) fail("tagger threshold_multiplier must be > 0");
    if (filter.k < 1) fail("filter k must be >= 1");
    if (!(filter.t > 0.0 && filter.t < 1.0)) fail("filter t must lie in (0, 1)");
    if (!(filter.area_cap > 0.0 && filter.area_cap <= 1.0)) fail("filter area_cap must lie in (0, 1]");
    if (!(selector.temperature >= 0.0)) fail("selector temperature must be >= 0");
    if (!(locator.box_threshold > 0.0 && locator.box_threshold < 1.0)) fail("locator box_threshold must lie in (0, 1)");
    if (tagger.kind == TaggerKind::None && filter.kind != FilterKind::None) fail("a tag filter needs a tagger");
    if (tagger.kind == TaggerKind::None && selector.kind == SelectorKind::Llm) fail("the llm selector needs a tagger");
    if (selector.kind == SelectorKind::None &&
        (locator.kind == LocatorKind::HeatmapMax || locator.kind == LocatorKind::MaskCenter)) {
        fail(std::string("locator ") + name_of(kLocators, locator.kind) + " needs a selected surface");
    }
    if (intrinsics && !(intrinsics->fx > 0.0 && intrinsics->fy > 0.0)) fail("intrinsics need positive focal lengths");
    templates.validate();
}

PipelineConfig PipelineConfig::parse_json(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"preset", "name", "tagger", "filter", "selector", "locator", "templates", "seed", "intrinsics"},
               "config");
    PipelineConfig cfg;
    if (j.contains("preset")) cfg = preset(get<std::string>(j, "preset", "", "config"));
    if (j.contains("name")) cfg.name = get<std::string>(j, "name", "", "config");
    else if (!j.contains("preset")) cfg.name.clear();
    if (j.contains("tagger")) {
        const auto& t = j["tagger"];
        check_keys(t, {"kind", "threshold_multiplier"}, "tagger");
        if (t.contains("kind")) cfg.tagger.kind = parse_name(kTaggers, get<std::string>(t, "kind", "", "tagger"), "tagger");
        cfg.tagger.threshold_multiplier = get(t, "threshold_multiplier", cfg.tagger.threshold_multiplier, "tagger");
    }
    if (j.contains("filter")) {
        const auto& f = j["filter"];
        check_keys(f, {"kind", "k", "t", "area_cap"}, "filter");
        if (f.contains("kind")) cfg.filter.kind = parse_name(kFilters, get<std::string>(f, "kind", "", "filter"), "filter");
        cfg.filter.k = get(f, "k", cfg.filter.k, "filter");
        cfg.filter.t = get(f, "t", cfg.filter.t, "filter");
        cfg.filter.area_cap = get(f, "area_cap", cfg.filter.area_cap, "filter");
    }
    if (j.contains("selector")) {
        const auto& s = j["selector"];
        check_keys(s, {"kind", "temperature"}, "selector");
        if (s.contains("kind")) {
            cfg.selector.kind = parse_name(kSelectors, get<std::string>(s, "kind", "", "selector"), "selector");
        }
        cfg.selector.temperature = get(s, "temperature", cfg.selector.temperature, "selector");
    }
    if (j.contains("locator")) {
        const auto& l = j["locator"];
        check_keys(l, {"kind", "box_threshold"}, "locator");
        if (l.contains("kind")) cfg.locator.kind = parse_name(kLocators, get<std::string>(l, "kind", "", "locator"), "locator");
        cfg.locator.box_threshold = get(l, "box_threshold", cfg.locator.box_threshold, "locator");
    }
    if (j.contains("templates")) cfg.templates.apply_overrides(j["templates"]);
    cfg.seed = get<std::uint64_t>(j, "seed", cfg.seed, "config");
    if (j.contains("intrinsics") && !j["intrinsics"].is_null()) {
        const auto& k = j["intrinsics"];
        check_keys(k, {"fx", "fy", "cx", "cy"}, "intrinsics");
        Intrinsics in;
        in.fx = get(k, "fx", 0.0, "intrinsics");
        in.fy = get(k, "fy", 0.0, "intrinsics");
        in.cx = get(k, "cx", 0.0, "intrinsics");
        in.cy = get(k, "cy", 0.0, "intrinsics");
        cfg.intrinsics = in;
    }
    cfg.validate();
    return cfg;
}

OJson PipelineConfig::to_json() const {
    OJson j;
    j["name"] = name;
    j["tagger"] = {{"kind", name_of(kTaggers, tagger.kind)}, {"threshold_multiplier", tagger.threshold_multiplier}};
    j["filter"] = {{"kind", name_of(kFilters, filter.kind)}, {"k", filter.k}, {"t", filter.t}, {"area_cap", filter.area_cap}};
    j["selector"] = {{"kind", name_of(kSelectors, selector.kind)}, {"temperature", selector.temperature}};
    j["locator"] = {{"kind", name_of(kLocators, locator.kind)}, {"box_threshold", locator.box_threshold}};
    j["templates"] = templates.overrides_from(prompts::PromptTemplates::defaults());
    j["seed"] = seed;
    if (intrinsics) {
        j["intrinsics"] = {{"fx", intrinsics->fx}, {"fy", intrinsics->fy}, {"cx", intrinsics->cx}, {"cy", intrinsics->cy}};
    } else {
        j["intrinsics"] = nullptr;
    }
    return j;
}

PipelineConfig preset(std::string_view name) {
    PipelineConfig cfg;
    if (name == "octo-plus") {
        cfg.name = "octo-plus";
        cfg.tagger = {TaggerKind::RamPlusPlus, 0.8};
        cfg.filter = {FilterKind::Detector, 20, 0.25, 0.9};
        cfg.selector = {SelectorKind::Llm, 0.2};
        cfg.locator = {LocatorKind::MaskCenter, 0.25};
    } else if (name == "octopus") {
        cfg.name = "octopus";
        cfg.tagger = {TaggerKind::Scp, 1.0};
        cfg.filter = {FilterKind::Vqa, 20, 0.25, 0.9};
        cfg.selector = {SelectorKind::Llm, 0.2};
        cfg.locator = {LocatorKind::HeatmapMax, 0.25};
    } else {
        throw Error(ErrorKind::InvalidConfig, "unknown preset '" + std::string(name) + "' (expected octo-plus, octopus)");
    }
    return cfg;
}

std::vector<std::string> preset_names() { return {"octo-plus", "octopus"}; }

// -- Records ------------------------------------------------------------------

OJson PlacementRecord::to_json() const {
    OJson j;
    j["image"] = image;
    j["object"] = object;
    j["tags_pre"] = tags_pre;
    j["tags_post"] = tags_post;
    j["selected"] = selected ? OJson(*selected) : OJson(nullptr);
    j["point"] = {point.x, point.y};
    j["point_clamped"] = point_clamped;
    j["point3d"] = point3d ? OJson::array({point3d->x, point3d->y, point3d->z}) : OJson(nullptr);
    OJson calls = OJson::array();
    for (const auto& t : transcript) {
        OJson c;
        c["stage"] = t.stage;
        c["endpoint"] = t.endpoint;
        c["request_hash"] = t.request_hash;
        c["request"] = t.request;
        c["response"] = t.response;
        calls.push_back(std::move(c));
    }
    j["transcript"] = std::move(calls);
    return j;
}

std::string PlacementRecord::dump() const { return to_json().dump(); }

// -- Stage 1 ------------------------------------------------------------------

std::vector<std::string> parse_tag_list(std::string_view response) {
    std::vector<std::string> tags;
    for (const auto& part : text::split(response, ',')) tags.push_back(text::normalize_label(part));
    auto out = dedup(std::move(tags));
    if (out.empty()) throw Error(ErrorKind::EmptyAfterParse, "no tags in response '" + std::string(response) + "'");
    return out;
}

std::vector<std::string> run_stage1_tag(const io::RgbImage& image, const PipelineConfig& cfg,
                                        backend::BackendClient& be) {
    std::vector<std::string> tags;
    switch (cfg.tagger.kind) {
        case TaggerKind::RamPlusPlus:
        case TaggerKind::Scp: {
            auto scored = be.tag(image, cfg.tagger.threshold_multiplier,
                                 cfg.tagger.kind == TaggerKind::Scp ? "scp" : "");
            std::stable_sort(scored.begin(), scored.end(),
                             [](const backend::TagScore& a, const backend::TagScore& b) { return a.score > b.score; });
            for (auto& s : scored) tags.push_back(text::normalize_label(s.tag));
            tags = dedup(std::move(tags));
            break;
        }
        case TaggerKind::Mllm: {
            const auto response =
                be.chat({{"user", cfg.templates.mllm_tag_user}}, cfg.selector.temperature, &image);
            tags = parse_tag_list(response);
            break;
        }
        case TaggerKind::None:
            return {};
    }
    if (tags.empty()) throw Error(ErrorKind::EmptyTagList, "tagger returned no tags");
    return tags;
}

std::vector<std::string> filter_vqa(std::span<const std::string> tags, const io::RgbImage& image,
                                    backend::BackendClient& be, const prompts::PromptTemplates& templates) {
    static const std::vector<std::string> kRequired = {"tag"};
    std::vector<std::string> kept;
    for (const auto& tag : tags) {
        const auto question = prompts::render(templates.vqa_question, {{"tag", tag}}, kRequired);
        if (text::normalize_answer(be.vqa(image, question)) == "yes") kept.push_back(tag);
    }
    return kept;
}

std::vector<std::string> select_top_k(std::span<const std::string> tags, std::span<const double> peaks, int k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    if (tags.size() != peaks.size()) throw Error(ErrorKind::LengthMismatch, "one peak per tag expected");
    std::vector<std::size_t> order(tags.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // NaN peaks rank last.
    auto key = [&](std::size_t i) { return std::isnan(peaks[i]) ? -std::numeric_limits<double>::infinity() : peaks[i]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < order.size() && out.size() < static_cast<std::size_t>(k); ++i) {
        out.push_back(tags[order[i]]);
    }
    return out;
}

std::vector<std::string> filter_heatmap_topk(std::span<const std::string> tags, const io::RgbImage& image,
                                             backend::BackendClient& be, int k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    std::vector<double> peaks;
    for (const auto& tag : tags) peaks.push_back(geom::max_activation(be.heatmap(image, tag)));
    return select_top_k(tags, peaks, k);
}

bool phrase_contains_tag(std::string_view phrase, std::string_view tag) {
    const auto p = text::tokenize(phrase);
    const auto t = text::tokenize(tag);
    if (t.empty() || t.size() > p.size()) return false;
    return std::search(p.begin(), p.end(), t.begin(), t.end()) != p.end();
}

std::vector<std::string> select_tags_by_boxes(std::span<const std::string> tags, std::span<const backend::BBox> boxes,
                                              int width, int height, double t, double area_cap) {
    const double frame = static_cast<double>(width) * static_cast<double>(height);
    std::vector<const backend::BBox*> surviving;
    for (const auto& b : boxes) {
        if (b.score >= t && b.area() / frame <= area_cap) surviving.push_back(&b);
    }
    std::vector<std::string> kept;
    for (const auto& tag : tags) {
        if (std::any_of(surviving.begin(), surviving.end(),
                        [&](const backend::BBox* b) { return phrase_contains_tag(b->phrase, tag); })) {
            kept.push_back(tag);
        }
    }
    return kept;
}

std::vector<std::string> filter_detector(std::span<const std::string> tags, const io::RgbImage& image,
                                         backend::BackendClient& be, double t, double area_cap) {
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorKind::InvalidArgument, "box threshold must lie in (0, 1)");
    const std::vector<std::string> list(tags.begin(), tags.end());
    const auto boxes = be.detect(image, text::join(list, ", "), t);
    return select_tags_by_boxes(tags, boxes, image.width, image.height, t, area_cap);
}

// -- Stage 2 ------------------------------------------------------------------

std::string run_stage2_select(std::span<const std::string> tags, const std::string& object,
                              backend::BackendClient& be, const PipelineConfig& cfg) {
    auto messages = prompts::build_selector_prompt(tags, object, cfg.templates);
    const auto first = be.chat(messages, cfg.selector.temperature);
    if (const auto* tag = match_tag(tags, first)) return *tag;

    static const std::vector<std::string> kRequired = {"answer", "tags"};
    const std::vector<std::string> list(tags.begin(), tags.end());
    messages.push_back({"assistant", first});
    messages.push_back({"user", prompts::render(cfg.templates.selector_correction,
                                                {{"answer", text::trim(first)}, {"tags", text::join(list, ", ")}},
                                                kRequired)});
    const auto second = be.chat(messages, cfg.selector.temperature);
    if (const auto* tag = match_tag(tags, second)) return *tag;
    throw Error(ErrorKind::SelectionNotInTags,
                "answers '" + text::trim(first) + "' and '" + text::trim(second) + "' are not among the tags");
}

std::string run_stage2_select_mllm(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                                   const PipelineConfig& cfg) {
    static const std::vector<std::string> kRequired = {"object"};
    const std::vector<backend::ChatMessage> messages = {
        {"system", cfg.templates.mllm_select_system},
        {"user", prompts::render(cfg.templates.mllm_select_user, {{"object", object}}, kRequired)}};
    auto answer = text::normalize_answer(be.chat(messages, cfg.selector.temperature, &image));
    for (const char* article : {"the ", "a ", "an "}) {
        if (answer.rfind(article, 0) == 0) {
            answer.erase(0, std::string_view(article).size());
            break;
        }
    }
    if (answer.empty()) throw Error(ErrorKind::EmptyAfterParse, "multimodal selector gave an empty answer");
    return answer;
}

// -- Stage 3 ------------------------------------------------------------------

geom::Point2D locate_heatmap_max(const io::RgbImage& image, const std::string& tag, backend::BackendClient& be) {
    if (tag.empty()) throw Error(ErrorKind::InvalidArgument, "locator needs a surface name");
    return geom::argmax_point(be.heatmap(image, tag));
}

namespace {

geom::BinaryMask detect_and_segment(const io::RgbImage& image, const std::string& text, backend::BackendClient& be,
                                    double t) {
    auto boxes = be.detect(image, text, t);
    std::erase_if(boxes, [&](const backend::BBox& b) { return b.score < t; });
    if (boxes.empty()) throw Error(ErrorKind::NoBoxFound, "detector found no box for '" + text + "'");
    const auto masks = be.segment(image, boxes);
    if (masks.empty()) throw Error(ErrorKind::EmptyMask, "segmenter returned no mask for '" + text + "'");
    return geom::mask_union(masks);
}

}  // namespace

geom::Point2D locate_mask_center(const io::RgbImage& image, const std::string& tag, backend::BackendClient& be,
                                 double t) {
    if (tag.empty()) throw Error(ErrorKind::InvalidArgument, "locator needs a surface name");
    return geom::innermost_point(detect_and_segment(image, tag, be, t));
}

geom::Point2D locate_edit_bottom(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                                 double t, const prompts::PromptTemplates& templates) {
    static const std::vector<std::string> kRequired = {"object"};
    const auto edited = be.edit(image, prompts::render(templates.edit_instruction, {{"object", object}}, kRequired));
    if (edited.width != image.width || edited.height != image.height) {
        throw Error(ErrorKind::EditorDimensionChange,
                    "editor returned " + std::to_string(edited.width) + "x" + std::to_string(edited.height) +
                        " for a " + std::to_string(image.width) + "x" + std::to_string(image.height) + " image");
    }
    return geom::bottommost_point(detect_and_segment(edited, object, be, t));
}

DirectPoint parse_direct_point(std::string_view response, int width, int height) {
    static const std::regex kPair(R"(\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\))");
    const std::string s(response);
    std::smatch last;
    bool found = false;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kPair); it != std::sregex_iterator(); ++it) {
        last = *it;
        found = true;
    }
    if (!found) throw Error(ErrorKind::NoCoordinateInResponse, "no (x, y) pair in '" + s + "'");
    auto to_int = [](const std::string& digits) {
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec == std::errc::result_out_of_range) {
            return digits.front() == '-' ? std::numeric_limits<std::int64_t>::min()
                                         : std::numeric_limits<std::int64_t>::max();
        }
        return v;
    };
    const auto x = to_int(last[1].str());
    const auto y = to_int(last[2].str());
    DirectPoint out;
    out.point.x = static_cast<int>(std::clamp<std::int64_t>(x, 0, width - 1));
    out.point.y = static_cast<int>(std::clamp<std::int64_t>(y, 0, height - 1));
    out.clamped = out.point.x != x || out.point.y != y;
    return out;
}

DirectPoint locate_direct_mllm(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                               const PipelineConfig& cfg) {
    static const std::vector<std::string> kSystem = {"width", "height"};
    static const std::vector<std::string> kUser = {"object"};
    const std::vector<backend::ChatMessage> messages = {
        {"system", prompts::render(cfg.templates.direct_system,
                                   {{"width", std::to_string(image.width)}, {"height", std::to_string(image.height)}},
                                   kSystem)},
        {"user", prompts::render(cfg.templates.direct_user, {{"object", object}}, kUser)}};
    return parse_direct_point(be.chat(messages, cfg.selector.temperature, &image), image.width, image.height);
}

Point3D backproject(geom::Point2D p, double depth_mm, const Intrinsics& k) {
    if (!(depth_mm > 0.0)) throw Error(ErrorKind::NonPositiveDepth, "depth " + std::to_string(depth_mm) + " mm");
    if (!(k.fx > 0.0 && k.fy > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
    const double z = depth_mm / 1000.0;
    return {(p.x - k.cx) * z / k.fx, (p.y - k.cy) * z / k.fy, z};
}

// -- Whole runs ---------------------------------------------------------------

PlacementRecord run_pipeline(const scene::SceneImage& image, const std::string& object, const PipelineConfig& cfg,
                             backend::Transport& transport) {
    if (text::trim(object).empty()) throw Error(ErrorKind::InvalidArgument, "object name is empty");
    backend::BackendClient be(transport);
    PlacementRecord rec;
    rec.image = image.id;
    rec.object = object;
    const auto& pixels = image.pixels;

    std::string stage = "tag";
    try {
        be.set_stage(stage);
        rec.tags_pre = run_stage1_tag(pixels, cfg, be);

        stage = "filter";
        be.set_stage(stage);
        switch (cfg.filter.kind) {
            case FilterKind::None: rec.tags_post = rec.tags_pre; break;
            case FilterKind::Vqa: rec.tags_post = filter_vqa(rec.tags_pre, pixels, be, cfg.templates); break;
            case FilterKind::HeatmapTopK: rec.tags_post = filter_heatmap_topk(rec.tags_pre, pixels, be, cfg.filter.k); break;
            case FilterKind::Detector:
                rec.tags_post = filter_detector(rec.tags_pre, pixels, be, cfg.filter.t, cfg.filter.area_cap);
                break;
        }
        if (cfg.tagger.kind != TaggerKind::None && rec.tags_post.empty()) {
            throw Error(ErrorKind::EmptyTagList, "no tag survived the filter");
        }

        stage = "select";
        be.set_stage(stage);
        switch (cfg.selector.kind) {
            case SelectorKind::Llm: rec.selected = run_stage2_select(rec.tags_post, object, be, cfg); break;
            case SelectorKind::Mllm: rec.selected = run_stage2_select_mllm(pixels, object, be, cfg); break;
            case SelectorKind::None: break;
        }

        stage = "locate";
        be.set_stage(stage);
        switch (cfg.locator.kind) {
            case LocatorKind::HeatmapMax: rec.point = locate_heatmap_max(pixels, *rec.selected, be); break;
            case LocatorKind::MaskCenter:
                rec.point = locate_mask_center(pixels, *rec.selected, be, cfg.locator.box_threshold);
                break;
            case LocatorKind::EditBottom:
                rec.point = locate_edit_bottom(pixels, object, be, cfg.locator.box_threshold, cfg.templates);
                break;
            case LocatorKind::DirectMllm: {
                const auto d = locate_direct_mllm(pixels, object, be, cfg);
                rec.point = d.point;
                rec.point_clamped = d.clamped;
                break;
            }
        }
    } catch (const Error& e) {
        throw e.with_stage(stage);
    }

    // A missing or zero depth reading leaves the 3D point unset rather than
    // failing a run whose 2D answer is valid.
    if (cfg.intrinsics) {
        const auto depth = image.depth_at(rec.point);
        if (depth && *depth > 0) rec.point3d = backproject(rec.point, *depth, *cfg.intrinsics);
    }
    rec.transcript = be.transcript();
    return rec;
}

std::vector<PipelineResult> run_pipelines(const scene::DatasetIndex& dataset,
                                          std::vector<std::pair<std::string, std::string>> pairs,
                                          const PipelineConfig& cfg, backend::Transport& transport, unsigned jobs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<std::optional<PipelineResult>> slots(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t i) {
        const auto& [image_id, object] = pairs[i];
        try {
            const auto& scene = dataset.scene(image_id);
            slots[i] = PipelineResult{image_id, object, run_pipeline(scene.image, object, cfg, transport)};
        } catch (const Error& e) {
            slots[i] = PipelineResult{image_id, object, e};
        }
    });
    std::vector<PipelineResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace pearl::pipeline
