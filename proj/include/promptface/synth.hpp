#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptface/dataset.hpp"
#include "promptface/geometry.hpp"
#include "promptface/image.hpp"
#include "promptface/rng.hpp"

namespace promptface {

/// Procedural faces with analytic landmarks. Scheme A (20 points) and scheme
/// B (12 points) sample the same curves at different parameters, so either
/// scheme's ground truth is known on every image.
enum class SynthScheme { A, B };

SynthScheme parse_scheme(const std::string& name);  // "A"/"a"/"synth-a", "B"/"b"/"synth-b"
std::string scheme_preset(SynthScheme scheme);      // "synth-a" | "synth-b"
int scheme_landmark_count(SynthScheme scheme);

enum class FaceCurve { Head, LeftEye, RightEye, Mouth, Nose };

/// A curve and its parameter: an angle for closed curves, s in [0, 1] for the
/// mouth, ignored for the nose.
struct CurvePosition {
    FaceCurve curve;
    double t;
};

std::vector<CurvePosition> scheme_positions(SynthScheme scheme);

/// Face geometry in a face frame where the head is the ellipse
/// (cos t, aspect * sin t); the frame maps to the crop by
/// center + scale * rotation(angle).
struct FaceParams {
    double cx = 0.5, cy = 0.5, scale = 0.3, angle = 0.0, aspect = 1.2;
    double eye_dx = 0.41, eye_dy = -0.26, eye_rx = 0.175, eye_ry = 0.1;
    double mouth_y = 0.525, mouth_w = 0.34, mouth_curve = 0.02;
    double nose_y = 0.14;
    double background[3] = {0.2, 0.2, 0.2};
    double skin[3] = {0.75, 0.6, 0.48};
    double feature[3] = {0.08, 0.06, 0.06};
    double shade_x = 0.0, shade_y = 0.0;
};

/// Mean of the sampling distribution, upright and centered.
FaceParams canonical_face();
FaceParams random_face(Rng& rng);

/// Crop-relative position of a curve point.
Point2 curve_point(const FaceParams& face, const CurvePosition& pos);
PointList scheme_points(const FaceParams& face, SynthScheme scheme);

/// Anti-aliased rendering (4x4 supersampling). With `noise` set, adds seeded
/// pixel noise; the result is quantized to 8 bits either way.
Image render_face(const FaceParams& face, int height, int width, Rng* noise = nullptr);

struct SynthDataset {
    DatasetDescriptor descriptor;
    std::vector<Sample> samples;
    std::vector<FaceParams> faces;
};

SynthDataset synth_generate(SynthScheme scheme, int count, std::uint64_t seed, int height = 32, int width = 32,
                            std::string dataset_id = {});

/// Plane positions of `target`'s landmarks expressed in the plane of a model
/// trained on `source`: the canonical face's source points are aligned onto
/// `source_mean` by an affine fit and the same map carries the canonical
/// target points over.
PointList analytic_plane_positions(SynthScheme target, SynthScheme source, const MeanShape& source_mean);

}  // namespace promptface
