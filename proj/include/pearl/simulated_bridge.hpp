#pragma once

// In-process stand-in for the model bridge, answering every endpoint from a
// dataset's ground truth. It exists to produce realistic, reproducible fixture
// sessions and to exercise the HTTP contract without model weights; its
// answers are deterministic functions of the request.

#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/backend.hpp"
#include "pearl/scene_data.hpp"

namespace pearl::sim {

/// Character-trigram count vector served by the simulated /v1/embed.
std::vector<double> trigram_embedding(std::string_view text);

/// Words the simulated tagger may emit on top of scene labels.
std::vector<std::string> tagger_vocabulary(const scene::DatasetIndex& dataset);

class SimulatedBridge final : public backend::Transport {
public:
    /// `dataset` must outlive the bridge.
    explicit SimulatedBridge(const scene::DatasetIndex& dataset);

    backend::Json call(const backend::BackendRequest& request) override;
    std::string mode() const override { return "simulated"; }

private:
    struct LabelInfo {
        int id = 0;
        std::string raw;
        std::string location;  // remapped name
        std::size_t pixels = 0;
        int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // exclusive max
    };
    struct SceneInfo {
        const scene::SceneEntry* entry = nullptr;
        std::string digest;
        std::vector<LabelInfo> labels;  // ascending id
    };
    struct EditInfo {
        const SceneInfo* scene = nullptr;
        std::string object;
        int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    };
    struct Resolved {
        const SceneInfo* scene = nullptr;
        const EditInfo* edit = nullptr;
    };

    Resolved resolve(const backend::BackendRequest& request) const;
    std::vector<const LabelInfo*> match(const SceneInfo& scene, const std::string& text) const;
    geom::BinaryMask label_mask(const SceneInfo& scene, const std::vector<const LabelInfo*>& labels) const;

    backend::Json tag(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json detect(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json segment(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json heatmap(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json vqa(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json chat(const backend::BackendRequest& request, const Resolved& r) const;
    backend::Json embed(const backend::BackendRequest& request) const;
    backend::Json edit(const backend::BackendRequest& request, const Resolved& r);

    const scene::DatasetIndex& dataset_;
    std::map<std::string, SceneInfo> by_digest_;
    mutable std::mutex edits_mutex_;
    std::map<std::string, EditInfo> edits_;
};

}  // namespace pearl::sim
