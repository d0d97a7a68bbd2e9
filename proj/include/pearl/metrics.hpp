#pragma once

// PEARL scoring for the three placement stages.
//
// Every aggregate is a two-level mean: average over the objects of one image,
// then over images. Images and objects are visited in sorted order so sums are
// reproducible to the last bit regardless of input order or thread count.

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pearl/embedding.hpp"
#include "pearl/geometry.hpp"
#include "pearl/scene_data.hpp"

namespace pearl::metrics {

struct PairKey {
    std::string image;
    std::string object;

    friend bool operator==(const PairKey&, const PairKey&) = default;
    friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

/// Max cosine similarity over candidates x targets. Both lists non-empty.
double sbert_max(std::span<const std::string> candidates, std::span<const std::string> targets,
                 EmbeddingProvider& provider);

// -- Stage 1: image tags vs. annotated valid locations ----------------------

using TagLists = std::map<std::string, std::vector<std::string>>;

struct Stage1Report {
    double exact_match = 0.0;
    double sbert = 0.0;
    double avg_tags = 0.0;
    std::size_t images = 0;
    std::size_t pairs = 0;
};

/// Throws MissingTags when an annotated image has no tag list.
Stage1Report stage1_metrics(const TagLists& tags, const scene::AnnotationSet& annotations, EmbeddingProvider& provider);

// -- Stage 2: selected surface vs. annotated valid locations -----------------

struct Stage2Report {
    double exact_match = 0.0;
    double sbert = 0.0;
    std::size_t pairs = 0;
};

struct Stage2Options {
    /// Mean over all pairs instead of per-image-then-overall.
    bool flat = false;
};

/// Throws MissingSelection.
Stage2Report stage2_metrics(const std::map<PairKey, std::string>& selections,
                            const scene::AnnotationSet& annotations, EmbeddingProvider& provider,
                            Stage2Options options = {});

// -- Stage 3: 2D placements vs. valid-location masks --------------------------

using Placements = std::map<PairKey, geom::Point2D>;

struct AuditRow {
    std::string image;
    std::string object;
    geom::Point2D point;
    bool in_mask = false;
    double score = 0.0;
    bool out_of_bounds = false;
    bool uniform_fallback = false;
};

struct Stage3Report {
    double in_mask = 0.0;
    double pearl_score = 0.0;
    std::vector<AuditRow> rows;  // sorted by (image, object)
};

/// Both automated metrics plus per-pair audit rows. Throws MissingPlacement.
Stage3Report stage3_metrics(const Placements& placements, std::span<const scene::EvaluablePair> pairs,
                            unsigned jobs = 1);

double in_mask_score(const Placements& placements, std::span<const scene::EvaluablePair> pairs);
double pearl_score(const Placements& placements, std::span<const scene::EvaluablePair> pairs);

std::string audit_jsonl(const Stage3Report& report, const std::string& method = {});

}  // namespace pearl::metrics
