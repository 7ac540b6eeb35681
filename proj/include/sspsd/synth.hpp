#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "sspsd/types.hpp"

namespace sspsd {

/// Configuration of the synthetic scene generator. Geometry defaults are in
/// pixels at image_size = 512 and should be scaled together with image_size
/// (see scaled_to()).
struct SynthConfig {
    int n_images = 100;
    int image_size = 512;

    double slot_width_min = 120.0;  // entrance-line length range per slot
    double slot_width_max = 300.0;
    int slots_min = 2;  // slots per row
    int slots_max = 3;
    int rows_min = 1;  // slot rows per image; rows get distinct orientations
    int rows_max = 1;

    double slanted_fraction = 0.15;  // probability a scene uses slanted slots
    double line_thickness = 3.0;
    double noise_std = 0.03;
    double brightness_min = 0.25;  // background intensity range
    double brightness_max = 0.55;
    double occlusion_prob = 0.0;
    double far_line_prob = 0.3;  // closing line at the far end of the slots

    /// Scene-tag sampling weights. The `slanted` tag is assigned by geometry
    /// (any weight for it here is ignored); remaining weights are normalized.
    std::map<Scene, double> scene_mix = default_scene_mix();

    static std::map<Scene, double> default_scene_mix();

    /// Same generator recipe with all pixel-unit fields scaled to a new
    /// image size.
    SynthConfig scaled_to(int new_image_size) const;

    void validate() const;  // throws ConfigError

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

/// Deterministic synthetic dataset: each image renders one row of parking
/// slots (baseline + separator lines) over a noisy background. Ground-truth
/// marking points are the entrance-line corners with theta1 along the
/// entrance line and theta2 along the separating line.
std::vector<AnnotatedImage> generate_synthetic(const SynthConfig& config,
                                               std::uint64_t seed);

}  // namespace sspsd
