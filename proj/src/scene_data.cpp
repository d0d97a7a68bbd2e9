#include "pearl/scene_data.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "json.hpp"
#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "pearl/parallel.hpp"
#include "pearl/random.hpp"
#include "pearl/text.hpp"

namespace pearl::scene {

using nlohmann::json;

const std::vector<std::string>& default_object_list() {
    static const std::vector<std::string> objects = {
        "apple", "cake", "cup",  "plate",    "vase",   "stool",   "painting", "lamp",
        "book",  "bag",  "computer", "pencil", "shoes", "cushion", "cat",
    };
    return objects;
}

std::optional<std::uint16_t> SceneImage::depth_at(geom::Point2D p) const {
    if (!depth_mm || p.x < 0 || p.y < 0 || p.x >= width() || p.y >= height()) return std::nullopt;
    return (*depth_mm)[static_cast<std::size_t>(p.y) * static_cast<std::size_t>(width()) + static_cast<std::size_t>(p.x)];
}

// ---------------------------------------------------------------------------
// LabelMap

LabelMap::LabelMap(std::map<int, std::string> entries) {
    for (auto& [id, name] : entries) {
        if (id < 0) throw Error(ErrorKind::MalformedInput, "negative label id " + std::to_string(id));
        auto clean = text::normalize_label(name);
        if (clean.empty()) throw Error(ErrorKind::MalformedInput, "empty name for label id " + std::to_string(id));
        entries_.emplace(id, std::move(clean));
    }
}

LabelMap LabelMap::parse_tsv(std::string_view text) {
    std::map<int, std::string> entries;
    int line_no = 0;
    for (const auto& raw : text::split(text, '\n')) {
        ++line_no;
        auto line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorKind::MalformedInput, "labelmap line " + std::to_string(line_no) + ": expected id<TAB>name");
        }
        const auto id_text = text::trim(std::string_view(line).substr(0, tab));
        int id = 0;
        const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
        if (ec != std::errc() || ptr != id_text.data() + id_text.size()) {
            throw Error(ErrorKind::MalformedInput, "labelmap line " + std::to_string(line_no) + ": bad id '" + id_text + "'");
        }
        if (!entries.emplace(id, line.substr(tab + 1)).second) {
            throw Error(ErrorKind::MalformedInput, "labelmap: duplicate id " + std::to_string(id));
        }
    }
    return LabelMap(std::move(entries));
}

std::string LabelMap::to_tsv() const {
    std::string out;
    for (const auto& [id, name] : entries_) out += std::to_string(id) + "\t" + name + "\n";
    return out;
}

const std::string* LabelMap::find(int id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// RemapTable

RemapTable::RemapTable(std::map<std::string, std::string> rules) {
    for (const auto& [source, target] : rules) {
        auto s = text::normalize_label(source);
        auto t = text::normalize_label(target);
        if (s.empty() || t.empty()) throw Error(ErrorKind::InvalidConfig, "remap rule with empty name");
        if (s == t) continue;
        rules_[s] = t;
    }
    for (const auto& [source, target] : rules_) {
        if (rules_.count(target)) {
            throw Error(ErrorKind::InvalidConfig,
                        "remap chain: '" + source + "' -> '" + target + "' -> '" + rules_.at(target) + "'");
        }
    }
}

RemapTable RemapTable::parse_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("remap.json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_object()) {
        throw Error(ErrorKind::MalformedInput, "remap.json: expected {\"rules\": {...}}");
    }
    std::map<std::string, std::string> rules;
    for (const auto& [k, v] : doc["rules"].items()) {
        if (!v.is_string()) throw Error(ErrorKind::MalformedInput, "remap.json: target of '" + k + "' is not a string");
        rules[k] = v.get<std::string>();
    }
    return RemapTable(std::move(rules));
}

std::string RemapTable::to_json() const {
    return json{{"rules", rules_}}.dump(2) + "\n";
}

std::string apply_remap(std::string_view name, const RemapTable& table) {
    const auto key = text::normalize_label(name);
    const auto it = table.rules().find(key);
    if (it == table.rules().end()) return std::string(name);
    return it->second;
}

// ---------------------------------------------------------------------------
// Annotations

const ObjectAnnotation* AnnotationSet::find(std::string_view image_id, std::string_view object) const {
    const auto it = images.find(std::string(image_id));
    if (it == images.end()) return nullptr;
    for (const auto& a : it->second) {
        if (a.object == object) return &a;
    }
    return nullptr;
}

namespace {

std::optional<geom::Point2D> parse_point(const json& v, const std::string& where) {
    if (v.is_null()) return std::nullopt;
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw Error(ErrorKind::MalformedAnnotation, where + ": point must be [x, y] integers or null");
    }
    return geom::Point2D{v[0].get<int>(), v[1].get<int>()};
}

json point_json(const std::optional<geom::Point2D>& p) {
    if (!p) return nullptr;
    return json::array({p->x, p->y});
}

}  // namespace

AnnotationSet AnnotationSet::parse_json(std::string_view text, const std::vector<std::string>* object_override) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedAnnotation, std::string("annotations.json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_object()) {
        throw Error(ErrorKind::MalformedAnnotation, "annotations.json: missing \"images\" object");
    }

    AnnotationSet set;
    if (object_override) {
        set.objects = *object_override;
    } else if (doc.contains("objects")) {
        if (!doc["objects"].is_array()) throw Error(ErrorKind::MalformedAnnotation, "\"objects\" must be an array");
        for (const auto& o : doc["objects"]) {
            if (!o.is_string()) throw Error(ErrorKind::MalformedAnnotation, "object names must be strings");
            set.objects.push_back(o.get<std::string>());
        }
    } else {
        set.objects = default_object_list();
    }
    for (auto& o : set.objects) o = text::normalize_label(o);
    const std::set<std::string> known(set.objects.begin(), set.objects.end());

    for (const auto& [image_id, objects] : doc["images"].items()) {
        if (!objects.is_object()) {
            throw Error(ErrorKind::MalformedAnnotation, "image '" + image_id + "': expected an object map");
        }
        auto& list = set.images[image_id];
        for (const auto& [raw_name, entry] : objects.items()) {
            const std::string where = "image '" + image_id + "', object '" + raw_name + "'";
            if (!entry.is_object()) throw Error(ErrorKind::MalformedAnnotation, where + ": expected an object");
            ObjectAnnotation a;
            a.object = text::normalize_label(raw_name);
            if (!known.count(a.object)) {
                throw Error(ErrorKind::MalformedAnnotation, where + ": not in the configured object list");
            }
            a.natural = parse_point(entry.value("natural", json()), where + " natural");
            a.unnatural = parse_point(entry.value("unnatural", json()), where + " unnatural");
            const auto excluded = entry.value("excluded", json(false));
            if (!excluded.is_boolean()) throw Error(ErrorKind::MalformedAnnotation, where + ": excluded must be boolean");
            a.excluded = excluded.get<bool>();
            const auto valid = entry.value("valid_locations", json::array());
            if (!valid.is_array()) throw Error(ErrorKind::MalformedAnnotation, where + ": valid_locations must be an array");
            for (const auto& v : valid) {
                if (!v.is_string()) throw Error(ErrorKind::MalformedAnnotation, where + ": valid location is not a string");
                auto name = text::normalize_label(v.get<std::string>());
                if (name.empty()) continue;
                if (std::find(a.valid_locations.begin(), a.valid_locations.end(), name) == a.valid_locations.end()) {
                    a.valid_locations.push_back(std::move(name));
                }
            }
            if (a.valid_locations.empty() && !a.excluded) {
                throw Error(ErrorKind::MalformedAnnotation, where + ": valid_locations is empty");
            }
            list.push_back(std::move(a));
        }
        std::sort(list.begin(), list.end(), [](const auto& l, const auto& r) { return l.object < r.object; });
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i].object == list[i - 1].object) {
                throw Error(ErrorKind::MalformedAnnotation,
                            "image '" + image_id + "': object '" + list[i].object + "' annotated twice");
            }
        }
    }
    return set;
}

std::string AnnotationSet::to_json() const {
    json images_json = json::object();
    for (const auto& [id, list] : images) {
        json objs = json::object();
        for (const auto& a : list) {
            objs[a.object] = json{{"natural", point_json(a.natural)},
                                  {"unnatural", point_json(a.unnatural)},
                                  {"valid_locations", a.valid_locations},
                                  {"excluded", a.excluded}};
        }
        images_json[id] = std::move(objs);
    }
    return json{{"objects", objects}, {"images", images_json}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Dataset

const SceneEntry& DatasetIndex::scene(std::string_view id) const {
    const auto it = scenes.find(std::string(id));
    if (it == scenes.end()) throw Error(ErrorKind::MissingFile, "no scene with id '" + std::string(id) + "'");
    return it->second;
}

std::string DatasetIndex::digest() const {
    codec::Sha256 h;
    h.update("pearl-dataset-v1\n");
    for (const auto& [id, entry] : scenes) {
        h.update(id);
        h.update_u32(0);
        h.update_u32(static_cast<std::uint32_t>(entry.image.width()));
        h.update_u32(static_cast<std::uint32_t>(entry.image.height()));
        h.update(entry.image.pixels.rgb);
        if (entry.image.depth_mm) {
            h.update_u32(1);
            for (auto d : *entry.image.depth_mm) h.update_u32(d);
        } else {
            h.update_u32(0);
        }
        h.update_u32(static_cast<std::uint32_t>(entry.mask.width));
        h.update_u32(static_cast<std::uint32_t>(entry.mask.height));
        for (auto l : entry.mask.labels) h.update_u32(l);
    }
    h.update(labels.to_tsv());
    h.update(remap.to_json());
    h.update(annotations.to_json());
    return h.hex_digest();
}

void validate_dataset(const DatasetIndex& index, int max_label_id) {
    for (const auto& [id, entry] : index.scenes) {
        const auto& img = entry.image;
        if (img.width() <= 0 || img.height() <= 0 ||
            img.pixels.rgb.size() != static_cast<std::size_t>(img.width()) * img.height() * 3) {
            throw Error(ErrorKind::DimensionMismatch, "image '" + id + "': pixel buffer does not match its size");
        }
        if (entry.mask.width != img.width() || entry.mask.height != img.height()) {
            throw Error(ErrorKind::DimensionMismatch,
                        "image '" + id + "': mask is " + std::to_string(entry.mask.width) + "x" +
                            std::to_string(entry.mask.height) + " but image is " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()));
        }
        if (img.depth_mm && img.depth_mm->size() != static_cast<std::size_t>(img.width()) * img.height()) {
            throw Error(ErrorKind::DimensionMismatch, "image '" + id + "': depth map size differs from image");
        }
        std::vector<bool> seen(65536, false);
        for (auto label : entry.mask.labels) {
            if (label == 0 || seen[label]) continue;
            seen[label] = true;
            if (label > max_label_id || !index.labels.find(label)) {
                throw Error(ErrorKind::UnknownLabelId,
                            "image '" + id + "': label id " + std::to_string(label) + " is not in the label map");
            }
        }
    }
    for (const auto& [id, list] : index.annotations.images) {
        const auto it = index.scenes.find(id);
        if (it == index.scenes.end()) throw Error(ErrorKind::MissingFile, "annotated image '" + id + "' has no scene");
        const auto& img = it->second.image;
        for (const auto& a : list) {
            for (const auto& p : {a.natural, a.unnatural}) {
                if (p && (p->x < 0 || p->y < 0 || p->x >= img.width() || p->y >= img.height())) {
                    throw Error(ErrorKind::MalformedAnnotation,
                                "image '" + id + "', object '" + a.object + "': point outside the image");
                }
            }
        }
    }
}

DatasetIndex load_dataset(const std::filesystem::path& root, const DatasetConfig& config) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw Error(ErrorKind::MissingFile, "dataset root " + root.string() + " is not a directory");

    DatasetIndex index;
    const auto ann_path = root / "annotations.json";
    if (!fs::exists(ann_path)) throw Error(ErrorKind::MissingFile, ann_path.string());
    index.annotations = AnnotationSet::parse_json(io::read_text(ann_path), config.objects ? &*config.objects : nullptr);

    const auto map_path = root / "labelmap.tsv";
    if (!fs::exists(map_path)) throw Error(ErrorKind::MissingFile, map_path.string());
    index.labels = LabelMap::parse_tsv(io::read_text(map_path));

    const auto remap_path = root / "remap.json";
    if (fs::exists(remap_path)) index.remap = RemapTable::parse_json(io::read_text(remap_path));

    std::vector<std::string> ids;
    for (const auto& [id, _] : index.annotations.images) ids.push_back(id);
    std::vector<SceneEntry> entries(ids.size());

    parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
        const auto& id = ids[i];
        const auto image_path = root / "images" / (id + ".png");
        const auto mask_path = root / "masks" / (id + ".png");
        if (!fs::exists(image_path)) throw Error(ErrorKind::MissingFile, image_path.string());
        if (!fs::exists(mask_path)) throw Error(ErrorKind::MissingFile, mask_path.string());

        auto& entry = entries[i];
        entry.image.id = id;
        entry.image.pixels = io::read_png_rgb(image_path);
        auto mask = io::read_png_gray16(mask_path);
        entry.mask.width = mask.width;
        entry.mask.height = mask.height;
        entry.mask.labels = std::move(mask.values);

        const auto depth_path = root / "depth" / (id + ".png");
        if (fs::exists(depth_path)) {
            auto depth = io::read_png_gray16(depth_path);
            if (depth.width != entry.image.width() || depth.height != entry.image.height()) {
                throw Error(ErrorKind::DimensionMismatch, "image '" + id + "': depth map size differs from image");
            }
            entry.image.depth_mm = std::move(depth.values);
        }
    });

    for (std::size_t i = 0; i < ids.size(); ++i) index.scenes.emplace(ids[i], std::move(entries[i]));
    validate_dataset(index, config.max_label_id);
    return index;
}

void write_dataset(const std::filesystem::path& root, const DatasetIndex& index) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const auto& [id, entry] : index.scenes) {
        io::write_png_rgb(root / "images" / (id + ".png"), entry.image.pixels);
        io::write_png_gray16(root / "masks" / (id + ".png"), {entry.mask.width, entry.mask.height, entry.mask.labels});
        if (entry.image.depth_mm) {
            io::write_png_gray16(root / "depth" / (id + ".png"),
                                 {entry.image.width(), entry.image.height(), *entry.image.depth_mm});
        }
    }
    io::write_text(root / "labelmap.tsv", index.labels.to_tsv());
    io::write_text(root / "remap.json", index.remap.to_json());
    io::write_text(root / "annotations.json", index.annotations.to_json());
}

geom::BinaryMask consolidate_mask(const LabelMask& mask, const LabelMap& map, const RemapTable& table,
                                  std::span<const std::string> valid) {
    std::set<std::string> wanted;
    for (const auto& v : valid) wanted.insert(text::normalize_label(v));

    std::vector<std::uint8_t> accept(65536, 0);
    for (const auto& [id, name] : map.entries()) {
        if (id <= 0 || id >= 65536) continue;
        if (wanted.count(text::normalize_label(apply_remap(name, table)))) accept[id] = 1;
    }
    std::vector<std::uint8_t> bits(mask.labels.size());
    std::transform(mask.labels.begin(), mask.labels.end(), bits.begin(), [&](std::uint16_t l) { return accept[l]; });
    return geom::BinaryMask(mask.width, mask.height, std::move(bits));
}

std::pair<std::vector<EvaluablePair>, ExclusionReport> filter_evaluable_pairs(const DatasetIndex& index) {
    std::vector<EvaluablePair> pairs;
    ExclusionReport report;
    for (const auto& [id, list] : index.annotations.images) {
        const auto& entry = index.scene(id);
        for (const auto& a : list) {
            ++report.total;
            if (a.excluded) {
                ++report.annotator_excluded;
                report.dropped.push_back({{id, a.object}, "annotator_excluded"});
                continue;
            }
            auto mask = consolidate_mask(entry.mask, index.labels, index.remap, a.valid_locations);
            if (mask.popcount() == 0) {
                ++report.no_mask;
                report.dropped.push_back({{id, a.object}, "no_mask"});
                continue;
            }
            ++report.retained;
            pairs.push_back({id, a.object, std::move(mask)});
        }
    }
    return {std::move(pairs), std::move(report)};
}

geom::Point2D random_placement(int width, int height, std::uint64_t seed) {
    if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidArgument, "random placement needs a non-empty grid");
    Rng rng(seed);
    const auto x = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    const auto y = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
    return {x, y};
}

geom::Point2D random_placement(int width, int height, std::uint64_t seed, std::string_view image_id,
                               std::string_view object) {
    return random_placement(width, height, derive_seed(seed, image_id, object));
}

}  // namespace pearl::scene
