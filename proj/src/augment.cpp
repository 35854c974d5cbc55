#include "promptface/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "promptface/errors.hpp"

namespace promptface {

AugmentationConfig AugmentationConfig::none() {
    AugmentationConfig c;
    c.translation_px = 0.0;
    c.rotation_deg = 0.0;
    c.scale = 0.0;
    c.flip_prob = 0.0;
    c.gray_prob = 0.0;
    c.brightness_prob = 0.0;
    c.occlusion_prob = 0.0;
    c.shear_prob = 0.0;
    return c;
}

void AugmentationConfig::validate() const {
    for (double p : {flip_prob, gray_prob, brightness_prob, occlusion_prob, shear_prob}) {
        if (!(p >= 0.0 && p <= 1.0)) throw UsageError("augmentation probabilities must lie in [0, 1]");
    }
    if (translation_px < 0 || rotation_deg < 0 || scale < 0 || scale >= 1 || brightness < 0 || shear < 0) {
        throw UsageError("augmentation ranges must be non-negative (scale < 1)");
    }
}

nlohmann::json to_json(const AugmentationConfig& c) {
    return {{"translation_px", c.translation_px}, {"rotation_deg", c.rotation_deg},
            {"scale", c.scale},                   {"flip_prob", c.flip_prob},
            {"gray_prob", c.gray_prob},           {"brightness_prob", c.brightness_prob},
            {"brightness", c.brightness},         {"occlusion_prob", c.occlusion_prob},
            {"shear_prob", c.shear_prob},         {"shear", c.shear},
            {"seed", c.seed}};
}

AugmentationConfig augmentation_from_json(const nlohmann::json& j) {
    AugmentationConfig c;
    if (j.is_string() && j.get<std::string>() == "none") return AugmentationConfig::none();
    try {
        c.translation_px = j.value("translation_px", c.translation_px);
        c.rotation_deg = j.value("rotation_deg", c.rotation_deg);
        c.scale = j.value("scale", c.scale);
        c.flip_prob = j.value("flip_prob", c.flip_prob);
        c.gray_prob = j.value("gray_prob", c.gray_prob);
        c.brightness_prob = j.value("brightness_prob", c.brightness_prob);
        c.brightness = j.value("brightness", c.brightness);
        c.occlusion_prob = j.value("occlusion_prob", c.occlusion_prob);
        c.shear_prob = j.value("shear_prob", c.shear_prob);
        c.shear = j.value("shear", c.shear);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed augmentation config: ") + e.what());
    }
    c.validate();
    return c;
}

AffineTransform geometric_transform(const GeometricParams& g, int height, int width) {
    const double c = std::cos(g.rotation), s = std::sin(g.rotation);
    Eigen::Matrix2d rot;
    rot << c, -s, s, c;
    Eigen::Matrix2d shear;
    shear << 1.0, g.shear, 0.0, 1.0;
    const Eigen::Vector2d center(0.5 * width, 0.5 * height);
    AffineTransform t;
    t.linear = rot * (g.scale * shear);
    t.offset = center + Eigen::Vector2d(g.tx, g.ty) - t.linear * center;
    return t;
}

Sample apply_geometric(const Sample& sample, const GeometricParams& g, const DatasetDescriptor* descriptor) {
    if (g.flip && (!descriptor || descriptor->flip_permutation.empty())) {
        throw DataError("horizontal flip requested but dataset '" + sample.dataset_id +
                        "' has no flip permutation");
    }
    const int h = sample.image.height, w = sample.image.width;
    AffineTransform m = geometric_transform(g, h, w);
    if (g.flip) {
        AffineTransform mirror;
        mirror.linear << -1.0, 0.0, 0.0, 1.0;
        mirror.offset << static_cast<double>(w), 0.0;
        m = mirror.compose(m);
    }
    const AffineTransform inv = m.inverse();

    Sample out = sample;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Point2 src = inv.apply(Point2{x + 0.5, y + 0.5});
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = sample.image.sample(src.x, src.y, c);
        }
    }
    for (std::size_t i = 0; i < sample.landmarks.size(); ++i) {
        const Point2& p = sample.landmarks.coords[i];
        const Point2 q = m.apply(Point2{p.x * w, p.y * h});
        out.landmarks.coords[i] = {q.x / w, q.y / h};
    }
    if (g.flip) {
        const auto& perm = descriptor->flip_permutation;
        if (perm.size() != sample.landmarks.size()) throw DataError("flip permutation length mismatch");
        LandmarkSet permuted = out.landmarks;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            permuted.coords[i] = out.landmarks.coords[perm[i]];
            permuted.valid[i] = out.landmarks.valid[perm[i]];
        }
        out.landmarks = std::move(permuted);
    }
    return out;
}

Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng,
               const DatasetDescriptor* descriptor) {
    config.validate();
    GeometricParams g;
    g.tx = rng.uniform(-config.translation_px, config.translation_px);
    g.ty = rng.uniform(-config.translation_px, config.translation_px);
    g.rotation = rng.uniform(-config.rotation_deg, config.rotation_deg) * std::numbers::pi / 180.0;
    g.scale = 1.0 + rng.uniform(-config.scale, config.scale);
    if (rng.bernoulli(config.shear_prob)) g.shear = rng.uniform(-config.shear, config.shear);
    g.flip = rng.bernoulli(config.flip_prob);

    const bool identity = g.tx == 0.0 && g.ty == 0.0 && g.rotation == 0.0 && g.scale == 1.0 &&
                          g.shear == 0.0 && !g.flip;
    Sample out = identity ? sample : apply_geometric(sample, g, descriptor);
    Image& img = out.image;

    if (rng.bernoulli(config.gray_prob)) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const double l = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = l;
            }
        }
    }
    if (rng.bernoulli(config.brightness_prob)) {
        const double delta = rng.uniform(-config.brightness, config.brightness);
        for (double& v : img.data) v = std::clamp(v + delta, 0.0, 1.0);
    }
    if (rng.bernoulli(config.occlusion_prob)) {
        const int side_max = std::min(img.height, img.width);
        const int side = std::max(1, static_cast<int>(std::lround(rng.uniform(0.1, 0.3) * side_max)));
        const int x0 = static_cast<int>(rng.index(static_cast<std::size_t>(img.width - side + 1)));
        const int y0 = static_cast<int>(rng.index(static_cast<std::size_t>(img.height - side + 1)));
        double color[3];
        for (double& c : color) c = rng.uniform();
        for (int y = y0; y < y0 + side; ++y) {
            for (int x = x0; x < x0 + side; ++x) {
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
            }
        }
    }
    return out;
}

}  // namespace promptface
