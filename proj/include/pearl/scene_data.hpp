#pragma once

// Benchmark dataset: scene images, per-pixel label masks, label names,
// label remapping, expert annotations, and the image-object pairs that can be
// scored.
//
// On-disk layout under a dataset root:
//   images/<id>.png       8-bit RGB
//   depth/<id>.png        optional, 16-bit single channel, millimeters
//   masks/<id>.png        16-bit single channel, pixel = label id (0 = unlabeled)
//   labelmap.tsv          "id<TAB>name" per line
//   remap.json            optional, {"rules": {"source": "target"}}
//   annotations.json      {"objects": [...], "images": {...}}

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pearl/geometry.hpp"
#include "pearl/image_io.hpp"

namespace pearl::scene {

inline constexpr int kMaxLabelId = 895;

/// The fifteen household objects of the reference benchmark. Any list of
/// open-vocabulary names can replace it.
const std::vector<std::string>& default_object_list();

struct SceneImage {
    std::string id;
    io::RgbImage pixels;
    std::optional<std::vector<std::uint16_t>> depth_mm;

    int width() const noexcept { return pixels.width; }
    int height() const noexcept { return pixels.height; }
    std::optional<std::uint16_t> depth_at(geom::Point2D p) const;
};

struct LabelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> labels;

    std::uint16_t at(int x, int y) const {
        return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::map<int, std::string> entries);

    static LabelMap parse_tsv(std::string_view text);
    std::string to_tsv() const;

    const std::string* find(int id) const;
    const std::map<int, std::string>& entries() const noexcept { return entries_; }

private:
    std::map<int, std::string> entries_;
};

class RemapTable {
public:
    RemapTable() = default;
    /// Names are normalized. Throws InvalidConfig on rule chains.
    explicit RemapTable(std::map<std::string, std::string> rules);

    static RemapTable parse_json(std::string_view text);
    std::string to_json() const;

    const std::map<std::string, std::string>& rules() const noexcept { return rules_; }

private:
    std::map<std::string, std::string> rules_;
};

std::string apply_remap(std::string_view name, const RemapTable& table);

struct ObjectAnnotation {
    std::string object;
    std::optional<geom::Point2D> natural;
    std::optional<geom::Point2D> unnatural;
    std::vector<std::string> valid_locations;
    bool excluded = false;
};

struct AnnotationSet {
    std::vector<std::string> objects;
    /// image id -> annotations, objects sorted by name.
    std::map<std::string, std::vector<ObjectAnnotation>> images;

    const ObjectAnnotation* find(std::string_view image_id, std::string_view object) const;

    static AnnotationSet parse_json(std::string_view text, const std::vector<std::string>* object_override = nullptr);
    std::string to_json() const;
};

struct SceneEntry {
    SceneImage image;
    LabelMask mask;
};

struct DatasetConfig {
    /// Overrides the object list declared in annotations.json.
    std::optional<std::vector<std::string>> objects;
    int max_label_id = kMaxLabelId;
    unsigned jobs = 1;
};

/// Immutable after loading; safe to share between threads.
struct DatasetIndex {
    std::map<std::string, SceneEntry> scenes;
    LabelMap labels;
    RemapTable remap;
    AnnotationSet annotations;

    const SceneEntry& scene(std::string_view id) const;

    /// SHA-256 over a canonical serialization of every loaded value.
    std::string digest() const;
};

/// Throws MissingFile, DimensionMismatch, UnknownLabelId, MalformedAnnotation.
DatasetIndex load_dataset(const std::filesystem::path& root, const DatasetConfig& config = {});

/// Checks every cross-file invariant of an in-memory index.
void validate_dataset(const DatasetIndex& index, int max_label_id = kMaxLabelId);

void write_dataset(const std::filesystem::path& root, const DatasetIndex& index);

/// Pixel = 1 iff the remapped name of its label is one of `valid`.
geom::BinaryMask consolidate_mask(const LabelMask& mask, const LabelMap& map, const RemapTable& table,
                                  std::span<const std::string> valid);

struct EvaluablePair {
    std::string image_id;
    std::string object;
    geom::BinaryMask mask;
};

struct ExclusionReport {
    std::size_t total = 0;
    std::size_t annotator_excluded = 0;
    std::size_t no_mask = 0;
    std::size_t retained = 0;
    /// (image, object) of every dropped pair, with its reason.
    std::vector<std::pair<std::pair<std::string, std::string>, std::string>> dropped;
};

/// Pairs sorted by (image id, object name).
std::pair<std::vector<EvaluablePair>, ExclusionReport> filter_evaluable_pairs(const DatasetIndex& index);

/// Uniform pixel from a seed already derived for one (image, object).
geom::Point2D random_placement(int width, int height, std::uint64_t seed);

/// random_placement with the per-pair seed derivation applied.
geom::Point2D random_placement(int width, int height, std::uint64_t seed, std::string_view image_id,
                               std::string_view object);

}  // namespace pearl::scene
