#pragma once

// Procedural indoor-scene benchmark with exact ground truth: every generated
// pair has a known valid-location mask, a natural point at the mask's
// innermost pixel and an unnatural point at the pixel farthest from it.

#include <cstdint>
#include <string>
#include <vector>

#include "pearl/geometry.hpp"
#include "pearl/scene_data.hpp"

namespace pearl::scene {

struct SyntheticConfig {
    int scenes = 10;
    int width = 96;
    int height = 72;
    std::uint64_t seed = 1;
    int objects_per_scene = 3;
    double min_mask_fraction = 0.10;
    double max_mask_fraction = 0.40;
    bool with_depth = true;
    /// Adds one annotator-excluded pair and one pair whose locations have no
    /// mask, so exclusion paths are exercised.
    bool include_exclusions = true;
    std::vector<std::string> objects = default_object_list();
};

DatasetIndex generate_synthetic_dataset(const SyntheticConfig& config);

/// Background pixel farthest from every set pixel. Throws UniformMask if the
/// mask has no background or no set pixel.
geom::Point2D farthest_outside_point(const geom::BinaryMask& mask);

}  // namespace pearl::scene
