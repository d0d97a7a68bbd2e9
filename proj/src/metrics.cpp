#include "pearl/metrics.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "pearl/error.hpp"
#include "pearl/parallel.hpp"
#include "pearl/text.hpp"

namespace pearl::metrics {

namespace {

std::vector<std::string> normalized_unique(std::span<const std::string> names) {
    std::vector<std::string> out;
    for (const auto& n : names) {
        auto v = text::normalize_label(n);
        if (v.empty()) continue;
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
    }
    return out;
}

bool intersects(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return std::any_of(a.begin(), a.end(), [&](const auto& x) { return std::find(b.begin(), b.end(), x) != b.end(); });
}

// Accumulates the per-image-then-overall mean in the order groups are closed.
class TwoLevelMean {
public:
    void add(double v) {
        sum_ += v;
        ++count_;
    }
    void close_group() {
        if (count_ == 0) return;
        total_ += sum_ / static_cast<double>(count_);
        ++groups_;
        sum_ = 0.0;
        count_ = 0;
    }
    double value() const { return groups_ ? total_ / static_cast<double>(groups_) : 0.0; }
    std::size_t groups() const { return groups_; }

private:
    double sum_ = 0.0;
    std::size_t count_ = 0;
    double total_ = 0.0;
    std::size_t groups_ = 0;
};

// "3 missing: a, b, c" with at most 20 names spelled out.
std::string missing_list(const std::vector<std::string>& items) {
    std::string out = std::to_string(items.size()) + " missing: ";
    for (std::size_t i = 0; i < items.size() && i < 20; ++i) out += (i ? ", " : "") + items[i];
    if (items.size() > 20) out += ", ...";
    return out;
}

std::string pair_name(const std::string& image, const std::string& object) {
    return "(" + image + ", " + object + ")";
}

}  // namespace

double sbert_max(std::span<const std::string> candidates, std::span<const std::string> targets,
                 EmbeddingProvider& provider) {
    if (candidates.empty() || targets.empty()) {
        throw Error(ErrorKind::EmptyList, "sbert_max needs non-empty candidate and target lists");
    }
    std::vector<EmbeddingVector> target_vectors;
    target_vectors.reserve(targets.size());
    for (const auto& t : targets) target_vectors.push_back(provider.embed(t));
    double best = -1.0;
    for (const auto& c : candidates) {
        const auto cv = provider.embed(c);
        for (const auto& tv : target_vectors) best = std::max(best, cosine_similarity(cv, tv));
    }
    return best;
}

Stage1Report stage1_metrics(const TagLists& tags, const scene::AnnotationSet& annotations, EmbeddingProvider& provider) {
    TwoLevelMean em;
    TwoLevelMean sb;
    double tag_total = 0.0;
    Stage1Report report;

    auto scored = [](const std::vector<scene::ObjectAnnotation>& objects) {
        return std::any_of(objects.begin(), objects.end(), [](const auto& a) { return !a.excluded; });
    };
    std::vector<std::string> missing;
    for (const auto& [image, objects] : annotations.images) {
        if (scored(objects) && !tags.count(image)) missing.push_back(image);
    }
    if (!missing.empty()) throw Error(ErrorKind::MissingTags, "tag lists " + missing_list(missing));

    for (const auto& [image, objects] : annotations.images) {
        if (!scored(objects)) continue;
        const auto it = tags.find(image);
        const auto image_tags = normalized_unique(it->second);
        tag_total += static_cast<double>(image_tags.size());

        for (const auto& a : objects) {
            if (a.excluded) continue;
            const auto locations = normalized_unique(a.valid_locations);
            em.add(intersects(image_tags, locations) ? 1.0 : 0.0);
            sb.add(image_tags.empty() ? 0.0 : sbert_max(image_tags, locations, provider));
            ++report.pairs;
        }
        em.close_group();
        sb.close_group();
    }
    report.images = em.groups();
    report.exact_match = em.value();
    report.sbert = sb.value();
    report.avg_tags = report.images ? tag_total / static_cast<double>(report.images) : 0.0;
    return report;
}

Stage2Report stage2_metrics(const std::map<PairKey, std::string>& selections,
                            const scene::AnnotationSet& annotations, EmbeddingProvider& provider,
                            Stage2Options options) {
    TwoLevelMean em;
    TwoLevelMean sb;
    double flat_em = 0.0;
    double flat_sb = 0.0;
    Stage2Report report;

    std::vector<std::string> missing;
    for (const auto& [image, objects] : annotations.images) {
        for (const auto& a : objects) {
            if (a.excluded) continue;
            const auto it = selections.find({image, a.object});
            if (it == selections.end() || text::normalize_label(it->second).empty()) {
                missing.push_back(pair_name(image, a.object));
            }
        }
    }
    if (!missing.empty()) throw Error(ErrorKind::MissingSelection, "selections " + missing_list(missing));

    for (const auto& [image, objects] : annotations.images) {
        for (const auto& a : objects) {
            if (a.excluded) continue;
            const auto it = selections.find({image, a.object});
            const auto chosen = text::normalize_label(it->second);
            const auto locations = normalized_unique(a.valid_locations);
            const double hit = std::find(locations.begin(), locations.end(), chosen) != locations.end() ? 1.0 : 0.0;
            const std::string candidate[] = {chosen};
            const double sim = sbert_max(candidate, locations, provider);
            em.add(hit);
            sb.add(sim);
            flat_em += hit;
            flat_sb += sim;
            ++report.pairs;
        }
        em.close_group();
        sb.close_group();
    }
    if (options.flat) {
        report.exact_match = report.pairs ? flat_em / static_cast<double>(report.pairs) : 0.0;
        report.sbert = report.pairs ? flat_sb / static_cast<double>(report.pairs) : 0.0;
    } else {
        report.exact_match = em.value();
        report.sbert = sb.value();
    }
    return report;
}

Stage3Report stage3_metrics(const Placements& placements, std::span<const scene::EvaluablePair> pairs, unsigned jobs) {
    std::vector<const scene::EvaluablePair*> order;
    order.reserve(pairs.size());
    for (const auto& p : pairs) order.push_back(&p);
    std::sort(order.begin(), order.end(), [](const auto* l, const auto* r) {
        return std::tie(l->image_id, l->object) < std::tie(r->image_id, r->object);
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->image_id == order[i - 1]->image_id && order[i]->object == order[i - 1]->object) {
            throw Error(ErrorKind::InvalidArgument, "duplicate evaluable pair ('" + order[i]->image_id + "', '" +
                                                        order[i]->object + "')");
        }
    }

    std::vector<geom::Point2D> points(order.size());
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto it = placements.find({order[i]->image_id, order[i]->object});
        if (it == placements.end()) {
            missing.push_back(pair_name(order[i]->image_id, order[i]->object));
            continue;
        }
        points[i] = it->second;
    }
    if (!missing.empty()) throw Error(ErrorKind::MissingPlacement, "placements " + missing_list(missing));

    Stage3Report report;
    report.rows.resize(order.size());
    parallel_for(order.size(), jobs, [&](std::size_t i) {
        const auto& pair = *order[i];
        const auto scored = geom::signed_distance_scored(pair.mask, points[i]);
        auto& row = report.rows[i];
        row.image = pair.image_id;
        row.object = pair.object;
        row.point = points[i];
        row.in_mask = !scored.out_of_bounds && pair.mask.at(points[i]);
        row.score = scored.value;
        row.out_of_bounds = scored.out_of_bounds;
        row.uniform_fallback = scored.uniform_fallback;
    });

    TwoLevelMean in_mask;
    TwoLevelMean score;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        if (i > 0 && report.rows[i].image != report.rows[i - 1].image) {
            in_mask.close_group();
            score.close_group();
        }
        in_mask.add(report.rows[i].in_mask ? 1.0 : 0.0);
        score.add(report.rows[i].score);
    }
    in_mask.close_group();
    score.close_group();
    report.in_mask = in_mask.value();
    report.pearl_score = score.value();
    return report;
}

double in_mask_score(const Placements& placements, std::span<const scene::EvaluablePair> pairs) {
    return stage3_metrics(placements, pairs).in_mask;
}

double pearl_score(const Placements& placements, std::span<const scene::EvaluablePair> pairs) {
    return stage3_metrics(placements, pairs).pearl_score;
}

std::string audit_jsonl(const Stage3Report& report, const std::string& method) {
    std::string out;
    for (const auto& row : report.rows) {
        nlohmann::ordered_json j;
        if (!method.empty()) j["method"] = method;
        j["image"] = row.image;
        j["object"] = row.object;
        j["point"] = {row.point.x, row.point.y};
        j["in_mask"] = row.in_mask;
        j["score"] = row.score;
        if (row.out_of_bounds || row.uniform_fallback) {
            auto flags = nlohmann::ordered_json::array();
            if (row.out_of_bounds) flags.push_back("out_of_bounds");
            if (row.uniform_fallback) flags.push_back("uniform_fallback");
            j["flags"] = flags;
        }
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace pearl::metrics
