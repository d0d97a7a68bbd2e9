#pragma once

// Three-stage placement: tag the scene, filter the tags, pick a surface for
// the object, then locate a pixel on it. Every model call goes through a
// BackendClient so a run's transcript lists the calls in order.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pearl/backend.hpp"
#include "pearl/error.hpp"
#include "pearl/geometry.hpp"
#include "pearl/prompts.hpp"
#include "pearl/scene_data.hpp"

namespace pearl::pipeline {

enum class TaggerKind { RamPlusPlus, Scp, Mllm, None };
enum class FilterKind { None, Vqa, HeatmapTopK, Detector };
enum class SelectorKind { Llm, Mllm, None };
enum class LocatorKind { HeatmapMax, MaskCenter, EditBottom, DirectMllm };

struct TaggerConfig {
    TaggerKind kind = TaggerKind::RamPlusPlus;
    double threshold_multiplier = 1.0;
};

struct FilterConfig {
    FilterKind kind = FilterKind::None;
    int k = 20;
    double t = 0.25;
    double area_cap = 0.9;
};

struct SelectorConfig {
    SelectorKind kind = SelectorKind::Llm;
    double temperature = 0.2;
};

struct LocatorConfig {
    LocatorKind kind = LocatorKind::MaskCenter;
    double box_threshold = 0.25;
};

struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
};

struct PipelineConfig {
    std::string name;  // preset name, or empty for custom configs
    TaggerConfig tagger;
    FilterConfig filter;
    SelectorConfig selector;
    LocatorConfig locator;
    prompts::PromptTemplates templates = prompts::PromptTemplates::defaults();
    std::uint64_t seed = 0;
    std::optional<Intrinsics> intrinsics;

    /// Throws InvalidConfig or TemplateMissingPlaceholder.
    void validate() const;

    static PipelineConfig parse_json(std::string_view text);
    nlohmann::ordered_json to_json() const;
};

/// "octo-plus" or "octopus". Throws InvalidConfig for other names.
PipelineConfig preset(std::string_view name);
std::vector<std::string> preset_names();

struct Point3D {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct PlacementRecord {
    std::string image;
    std::string object;
    std::vector<std::string> tags_pre;
    std::vector<std::string> tags_post;
    std::optional<std::string> selected;
    geom::Point2D point;
    bool point_clamped = false;
    std::optional<Point3D> point3d;
    std::vector<backend::TranscriptEntry> transcript;

    nlohmann::ordered_json to_json() const;
    /// Single-line JSON; byte-stable for equal records.
    std::string dump() const;
};

// -- Stage 1 ------------------------------------------------------------------

/// Deduplicated lowercase tags in descending confidence. Throws EmptyTagList.
std::vector<std::string> run_stage1_tag(const io::RgbImage& image, const PipelineConfig& cfg,
                                        backend::BackendClient& be);

/// Comma-separated list to normalized, deduplicated tags. Throws EmptyAfterParse.
std::vector<std::string> parse_tag_list(std::string_view response);

std::vector<std::string> filter_vqa(std::span<const std::string> tags, const io::RgbImage& image,
                                    backend::BackendClient& be, const prompts::PromptTemplates& templates);

std::vector<std::string> filter_heatmap_topk(std::span<const std::string> tags, const io::RgbImage& image,
                                             backend::BackendClient& be, int k);

std::vector<std::string> filter_detector(std::span<const std::string> tags, const io::RgbImage& image,
                                         backend::BackendClient& be, double t, double area_cap);

/// True when the tokens of `tag` occur contiguously in the tokens of `phrase`.
bool phrase_contains_tag(std::string_view phrase, std::string_view tag);

/// Decision rule of filter_detector applied to an existing detector response:
/// boxes below `t` or covering more than `area_cap` of the frame are ignored.
std::vector<std::string> select_tags_by_boxes(std::span<const std::string> tags, std::span<const backend::BBox> boxes,
                                              int width, int height, double t, double area_cap);

/// Decision rule of filter_heatmap_topk: the k tags with the highest peaks,
/// ties kept in input order.
std::vector<std::string> select_top_k(std::span<const std::string> tags, std::span<const double> peaks, int k);

// -- Stage 2 ------------------------------------------------------------------

/// Returns an element of `tags`. Retries once with a correction message, then
/// throws SelectionNotInTags.
std::string run_stage2_select(std::span<const std::string> tags, const std::string& object,
                              backend::BackendClient& be, const PipelineConfig& cfg);

/// Free-form surface name chosen by a multimodal model looking at the image.
std::string run_stage2_select_mllm(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                                   const PipelineConfig& cfg);

// -- Stage 3 ------------------------------------------------------------------

geom::Point2D locate_heatmap_max(const io::RgbImage& image, const std::string& tag, backend::BackendClient& be);

/// Throws NoBoxFound or EmptyMask.
geom::Point2D locate_mask_center(const io::RgbImage& image, const std::string& tag, backend::BackendClient& be,
                                 double t);

/// Throws NoBoxFound or EditorDimensionChange.
geom::Point2D locate_edit_bottom(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                                 double t, const prompts::PromptTemplates& templates);

struct DirectPoint {
    geom::Point2D point;
    bool clamped = false;
};

/// Last "(x, y)" integer pair in `response`, clamped into the image.
/// Throws NoCoordinateInResponse.
DirectPoint parse_direct_point(std::string_view response, int width, int height);

DirectPoint locate_direct_mllm(const io::RgbImage& image, const std::string& object, backend::BackendClient& be,
                               const PipelineConfig& cfg);

/// Pinhole back-projection; depth in millimeters. Throws NonPositiveDepth.
Point3D backproject(geom::Point2D p, double depth_mm, const Intrinsics& k);

// -- Whole runs ---------------------------------------------------------------

/// Errors carry the failing stage ("tag", "filter", "select", "locate").
PlacementRecord run_pipeline(const scene::SceneImage& image, const std::string& object, const PipelineConfig& cfg,
                             backend::Transport& transport);

struct PipelineResult {
    std::string image;
    std::string object;
    std::variant<PlacementRecord, Error> outcome;

    bool ok() const noexcept { return outcome.index() == 0; }
};

/// Runs every (image, object) pair, up to `jobs` at a time. Results come back
/// sorted by (image, object) whatever the scheduling.
std::vector<PipelineResult> run_pipelines(const scene::DatasetIndex& dataset,
                                          std::vector<std::pair<std::string, std::string>> pairs,
                                          const PipelineConfig& cfg, backend::Transport& transport, unsigned jobs = 1);

}  // namespace pearl::pipeline
