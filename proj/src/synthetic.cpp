#include "pearl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

#include "pearl/error.hpp"
#include "pearl/random.hpp"

namespace pearl::scene {

namespace {

struct LabelSpec {
    int id;
    const char* name;
    std::array<std::uint8_t, 3> color;
};

// Raw dataset vocabulary. Some names are synonyms or specializations that the
// remap table folds into benchmark location names.
constexpr LabelSpec kLabels[] = {
    {3, "wall", {200, 196, 180}},      {11, "floor", {120, 90, 60}},     {17, "ceiling", {235, 235, 230}},
    {24, "table", {150, 100, 50}},     {31, "desk", {140, 110, 70}},     {38, "coffee table", {110, 70, 40}},
    {45, "sofa", {60, 80, 140}},       {52, "couch", {70, 90, 150}},     {59, "chair", {180, 60, 60}},
    {66, "counter", {210, 210, 200}},  {73, "shelf", {100, 60, 30}},     {80, "bed", {230, 200, 210}},
    {87, "window", {150, 200, 240}},   {94, "cabinet", {160, 130, 90}},  {101, "plate", {250, 250, 250}},
    {108, "rug", {130, 30, 60}},       {115, "kitchen counter", {190, 190, 185}},
};

constexpr int kWall = 3;
constexpr int kFloor = 11;
constexpr int kCeiling = 17;
constexpr int kWindow = 87;
constexpr int kPlate = 101;
constexpr int kRug = 108;

constexpr int kFurniture[] = {24, 31, 38, 45, 52, 59, 66, 73, 80, 94, 115};
constexpr int kTabletops[] = {24, 31, 38, 66, 115};

const LabelSpec& spec_of(int id) {
    for (const auto& s : kLabels) {
        if (s.id == id) return s;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown synthetic label " + std::to_string(id));
}

LabelMap synthetic_label_map() {
    std::map<int, std::string> entries;
    for (const auto& s : kLabels) entries[s.id] = s.name;
    return LabelMap(std::move(entries));
}

RemapTable synthetic_remap() {
    return RemapTable({{"sofa", "couch"}, {"coffee table", "table"}, {"desk", "table"}, {"kitchen counter", "counter"}});
}

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), labels_(static_cast<std::size_t>(w) * h, 0) {}

    void rect(int x0, int y0, int x1, int y1, int label) {
        for (int y = std::max(0, y0); y < std::min(h_, y1); ++y) {
            for (int x = std::max(0, x0); x < std::min(w_, x1); ++x) put(x, y, label);
        }
    }

    // Axis-aligned ellipse with integer-exact inclusion test.
    void ellipse(int cx, int cy, int rx, int ry, int label) {
        const std::int64_t rr = static_cast<std::int64_t>(rx) * rx * ry * ry;
        for (int y = std::max(0, cy - ry); y <= std::min(h_ - 1, cy + ry); ++y) {
            for (int x = std::max(0, cx - rx); x <= std::min(w_ - 1, cx + rx); ++x) {
                const std::int64_t dx = static_cast<std::int64_t>(x - cx) * ry;
                const std::int64_t dy = static_cast<std::int64_t>(y - cy) * rx;
                if (dx * dx + dy * dy <= rr) put(x, y, label);
            }
        }
    }

    void put(int x, int y, int label) { labels_[static_cast<std::size_t>(y) * w_ + x] = static_cast<std::uint16_t>(label); }
    std::uint16_t at(int x, int y) const { return labels_[static_cast<std::size_t>(y) * w_ + x]; }
    std::vector<std::uint16_t>& labels() { return labels_; }

private:
    int w_;
    int h_;
    std::vector<std::uint16_t> labels_;
};

SceneEntry render_scene(const std::string& id, const SyntheticConfig& cfg, Rng& rng) {
    const int w = cfg.width;
    const int h = cfg.height;
    Canvas canvas(w, h);
    canvas.rect(0, 0, w, h, kWall);
    canvas.rect(0, 0, w, std::max(1, h / 12), kCeiling);

    const int horizon = static_cast<int>(h * rng.uniform(0.55, 0.72));
    canvas.rect(0, horizon, w, h, kFloor);

    if (rng.below(2) == 0) {
        const int ww = std::max(2, static_cast<int>(w * rng.uniform(0.12, 0.25)));
        const int wh = std::max(2, static_cast<int>(h * rng.uniform(0.12, 0.22)));
        const int wx = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, w - ww))));
        const int wy = h / 12 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, horizon / 2 - wh))));
        canvas.rect(wx, wy, wx + ww, wy + wh, kWindow);
    }
    if (rng.below(3) == 0) {
        canvas.ellipse(static_cast<int>(rng.below(static_cast<std::uint64_t>(w))), h - h / 8, w / 8, h / 14, kRug);
    }

    const int pieces = 2 + static_cast<int>(rng.below(2));
    for (int i = 0; i < pieces; ++i) {
        const int label = kFurniture[rng.below(std::size(kFurniture))];
        const int pw = std::max(3, static_cast<int>(w * rng.uniform(0.15, 0.40)));
        const int ph = std::max(3, static_cast<int>(h * rng.uniform(0.12, 0.30)));
        const int px = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, w - pw))));
        const int base = std::clamp(horizon + static_cast<int>(rng.between(-h / 10, h / 6)), ph, h - 1);
        if (rng.below(4) == 0) {
            canvas.ellipse(px + pw / 2, base - ph / 2, pw / 2, ph / 2, label);
        } else {
            canvas.rect(px, base - ph, px + pw, base, label);
        }
        if (std::find(std::begin(kTabletops), std::end(kTabletops), label) != std::end(kTabletops) && rng.below(2) == 0) {
            canvas.ellipse(px + pw / 2, base - ph + std::max(1, ph / 5), std::max(1, pw / 8), std::max(1, ph / 10), kPlate);
        }
    }
    // A patch the annotators left unlabeled.
    const int ux = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    const int uy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    canvas.rect(ux, uy, ux + std::max(1, w / 20), uy + std::max(1, h / 20), 0);

    SceneEntry entry;
    entry.image.id = id;
    entry.image.pixels.width = w;
    entry.image.pixels.height = h;
    entry.image.pixels.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    if (cfg.with_depth) entry.image.depth_mm.emplace(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int label = canvas.at(x, y);
            const std::array<std::uint8_t, 3> color =
                label == 0 ? std::array<std::uint8_t, 3>{20, 20, 20} : spec_of(label).color;
            const int shade = (y * 24) / h - 12;
            auto* px = &entry.image.pixels.rgb[(static_cast<std::size_t>(y) * w + x) * 3];
            for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::clamp(color[c] + shade, 0, 255));
            if (entry.image.depth_mm) {
                // Distance falls off toward the bottom of the frame (closer floor).
                (*entry.image.depth_mm)[static_cast<std::size_t>(y) * w + x] =
                    static_cast<std::uint16_t>(label == 0 ? 0 : 1000 + (3000 * (h - 1 - y)) / h);
            }
        }
    }
    entry.mask.width = w;
    entry.mask.height = h;
    entry.mask.labels = std::move(canvas.labels());
    return entry;
}

std::vector<std::string> present_locations(const SceneEntry& entry, const LabelMap& map, const RemapTable& remap) {
    std::set<std::string> names;
    std::set<int> seen;
    for (auto l : entry.mask.labels) {
        if (l == 0 || !seen.insert(l).second) continue;
        if (l == kCeiling || l == kWindow) continue;
        names.insert(apply_remap(*map.find(l), remap));
    }
    return {names.begin(), names.end()};
}

}  // namespace

geom::Point2D farthest_outside_point(const geom::BinaryMask& mask) {
    const auto field = geom::euclidean_distance_transform(mask, false);
    geom::Point2D best{-1, -1};
    std::int64_t best_sq = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y)) continue;
            if (field.squared_at(x, y) > best_sq) {
                best_sq = field.squared_at(x, y);
                best = {x, y};
            }
        }
    }
    return best;
}

DatasetIndex generate_synthetic_dataset(const SyntheticConfig& cfg) {
    if (cfg.scenes < 0 || cfg.width < 8 || cfg.height < 8) {
        throw Error(ErrorKind::InvalidArgument, "synthetic scenes need at least 8x8 pixels");
    }
    if (cfg.objects.empty() || cfg.objects_per_scene < 1) {
        throw Error(ErrorKind::InvalidArgument, "synthetic dataset needs objects to place");
    }
    DatasetIndex index;
    index.labels = synthetic_label_map();
    index.remap = synthetic_remap();
    index.annotations.objects = cfg.objects;

    Rng rng(mix64(cfg.seed));
    const double total = static_cast<double>(cfg.width) * cfg.height;

    for (int s = 0; s < cfg.scenes; ++s) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene%04d", s);
        const std::string id = buf;
        auto entry = render_scene(id, cfg, rng);
        const auto locations = present_locations(entry, index.labels, index.remap);

        std::vector<std::string> pool = cfg.objects;
        std::vector<ObjectAnnotation> annotations;
        const int count = std::min<int>(cfg.objects_per_scene, static_cast<int>(pool.size()));
        for (int k = 0; k < count; ++k) {
            const auto pick = rng.below(pool.size());
            ObjectAnnotation a;
            a.object = pool[pick];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));

            std::optional<geom::BinaryMask> chosen;
            for (int attempt = 0; attempt < 60 && !chosen; ++attempt) {
                std::vector<std::string> subset;
                const auto size = 1 + rng.below(std::min<std::size_t>(3, locations.size()));
                while (subset.size() < size) {
                    const auto& name = locations[rng.below(locations.size())];
                    if (std::find(subset.begin(), subset.end(), name) == subset.end()) subset.push_back(name);
                }
                auto mask = consolidate_mask(entry.mask, index.labels, index.remap, subset);
                const double fraction = static_cast<double>(mask.popcount()) / total;
                if (fraction >= cfg.min_mask_fraction && fraction <= cfg.max_mask_fraction) {
                    std::sort(subset.begin(), subset.end());
                    a.valid_locations = subset;
                    chosen = std::move(mask);
                }
            }
            if (!chosen) {
                // No surface combination fits the area band: the annotators drop it.
                a.valid_locations = {locations.front()};
                a.excluded = true;
            } else {
                a.natural = geom::innermost_point(*chosen);
                a.unnatural = farthest_outside_point(*chosen);
            }
            annotations.push_back(std::move(a));
        }

        if (cfg.include_exclusions && !pool.empty() && (s == 0 || s == 1)) {
            ObjectAnnotation extra;
            extra.object = pool.front();
            if (s == 0) {
                extra.valid_locations = {"floor"};
                extra.excluded = true;
            } else {
                extra.valid_locations = {"bookcase"};
            }
            annotations.push_back(std::move(extra));
        }
        std::sort(annotations.begin(), annotations.end(), [](const auto& l, const auto& r) { return l.object < r.object; });
        index.annotations.images[id] = std::move(annotations);
        index.scenes.emplace(id, std::move(entry));
    }
    validate_dataset(index);
    return index;
}

}  // namespace pearl::scene
