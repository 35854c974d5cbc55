#pragma once

#include <json.hpp>

#include "promptface/dataset.hpp"
#include "promptface/geometry.hpp"
#include "promptface/rng.hpp"

namespace promptface {

struct AugmentationConfig {
    double translation_px = 10.0;
    double rotation_deg = 30.0;
    double scale = 0.05;
    double flip_prob = 0.5;
    double gray_prob = 0.2;
    double brightness_prob = 0.5;
    double brightness = 0.3;
    double occlusion_prob = 0.5;
    double shear_prob = 1.0 / 3.0;
    double shear = 0.2;  // max |shear factor|
    std::uint64_t seed = 0;

    static AugmentationConfig none();
    void validate() const;
};

nlohmann::json to_json(const AugmentationConfig& c);
AugmentationConfig augmentation_from_json(const nlohmann::json& j);

/// Drawn geometric parameters, in crop pixels / radians.
struct GeometricParams {
    double tx = 0.0, ty = 0.0;
    double rotation = 0.0;
    double scale = 1.0;
    double shear = 0.0;
    bool flip = false;
};

/// Pixel-space map: translation + rotation * scale * shear about the crop center.
AffineTransform geometric_transform(const GeometricParams& g, int height, int width);

/// Warps image and landmarks through the same map, then mirrors (with the
/// descriptor's index permutation) when g.flip is set.
Sample apply_geometric(const Sample& sample, const GeometricParams& g, const DatasetDescriptor* descriptor);

/// Geometric then photometric augmentation. Photometric steps (gray,
/// brightness, occlusion) never touch the landmarks.
Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng,
               const DatasetDescriptor* descriptor);

}  // namespace promptface
