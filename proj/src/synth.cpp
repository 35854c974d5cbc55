#include "promptface/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "promptface/errors.hpp"

namespace promptface {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kClosedOffset = 0.3;  // scheme B shift along closed curves (radians)
constexpr double kMouthOffset = 0.1;   // scheme B shift along the mouth
constexpr double kMouthHalfWidth = 0.035;
constexpr double kNoseRadius = 0.06;

struct FacePoint {
    double u, v;
};

FacePoint face_frame_point(const FaceParams& f, const CurvePosition& pos) {
    switch (pos.curve) {
        case FaceCurve::Head: return {std::cos(pos.t), f.aspect * std::sin(pos.t)};
        case FaceCurve::LeftEye:
            return {-f.eye_dx + f.eye_rx * std::cos(pos.t), f.eye_dy + f.eye_ry * std::sin(pos.t)};
        case FaceCurve::RightEye:
            return {f.eye_dx + f.eye_rx * std::cos(pos.t), f.eye_dy + f.eye_ry * std::sin(pos.t)};
        case FaceCurve::Mouth: {
            const double a = 2.0 * pos.t - 1.0;
            return {f.mouth_w * a, f.mouth_y + f.mouth_curve * (1.0 - a * a)};
        }
        case FaceCurve::Nose: return {0.0, f.nose_y};
    }
    return {0.0, 0.0};
}

Point2 to_crop(const FaceParams& f, FacePoint p) {
    const double c = std::cos(f.angle), s = std::sin(f.angle);
    return {f.cx + f.scale * (c * p.u - s * p.v), f.cy + f.scale * (s * p.u + c * p.v)};
}

FacePoint to_face(const FaceParams& f, double x, double y) {
    const double c = std::cos(f.angle), s = std::sin(f.angle);
    const double dx = (x - f.cx) / f.scale, dy = (y - f.cy) / f.scale;
    return {c * dx + s * dy, -s * dx + c * dy};
}

double segment_distance(FacePoint p, FacePoint a, FacePoint b) {
    const double vx = b.u - a.u, vy = b.v - a.v;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.u - a.u) * vx + (p.v - a.v) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.u - a.u - t * vx, p.v - a.v - t * vy);
}

}  // namespace

SynthScheme parse_scheme(const std::string& name) {
    if (name == "A" || name == "a" || name == "synth-a") return SynthScheme::A;
    if (name == "B" || name == "b" || name == "synth-b") return SynthScheme::B;
    throw UsageError("unknown synthetic scheme '" + name + "' (expected A or B)");
}

std::string scheme_preset(SynthScheme scheme) { return scheme == SynthScheme::A ? "synth-a" : "synth-b"; }

int scheme_landmark_count(SynthScheme scheme) { return scheme == SynthScheme::A ? 20 : 12; }

std::vector<CurvePosition> scheme_positions(SynthScheme scheme) {
    std::vector<CurvePosition> out;
    if (scheme == SynthScheme::A) {
        for (int k = 0; k < 6; ++k) out.push_back({FaceCurve::Head, k * kPi / 3.0});
        for (FaceCurve eye : {FaceCurve::LeftEye, FaceCurve::RightEye}) {
            for (int k = 0; k < 4; ++k) out.push_back({eye, k * kPi / 2.0});
        }
        for (int k = 0; k < 5; ++k) out.push_back({FaceCurve::Mouth, k * 0.25});
        out.push_back({FaceCurve::Nose, 0.0});
    } else {
        for (int k = 0; k < 4; ++k) out.push_back({FaceCurve::Head, k * kPi / 2.0 + kClosedOffset});
        for (FaceCurve eye : {FaceCurve::LeftEye, FaceCurve::RightEye}) {
            for (int k = 0; k < 2; ++k) out.push_back({eye, k * kPi + kClosedOffset});
        }
        for (int k = 0; k < 3; ++k) out.push_back({FaceCurve::Mouth, k * 0.4 + kMouthOffset});
        out.push_back({FaceCurve::Nose, 0.0});
    }
    return out;
}

FaceParams canonical_face() { return FaceParams{}; }

FaceParams random_face(Rng& rng) {
    FaceParams f;
    f.cx = rng.uniform(0.45, 0.55);
    f.cy = rng.uniform(0.45, 0.55);
    f.scale = rng.uniform(0.26, 0.34);
    f.angle = rng.uniform(-0.35, 0.35);
    f.aspect = rng.uniform(1.1, 1.3);
    f.eye_dx = rng.uniform(0.36, 0.46);
    f.eye_dy = rng.uniform(-0.32, -0.2);
    f.eye_rx = rng.uniform(0.15, 0.2);
    f.eye_ry = rng.uniform(0.08, 0.12);
    f.mouth_y = rng.uniform(0.45, 0.6);
    f.mouth_w = rng.uniform(0.28, 0.4);
    f.mouth_curve = rng.uniform(-0.08, 0.12);
    f.nose_y = rng.uniform(0.08, 0.2);
    for (double& c : f.background) c = rng.uniform(0.05, 0.35);
    f.skin[0] = rng.uniform(0.6, 0.9);
    f.skin[1] = rng.uniform(0.45, 0.75);
    f.skin[2] = rng.uniform(0.35, 0.6);
    for (double& c : f.feature) c = rng.uniform(0.0, 0.15);
    f.shade_x = rng.uniform(-0.05, 0.05);
    f.shade_y = rng.uniform(-0.05, 0.05);
    return f;
}

Point2 curve_point(const FaceParams& face, const CurvePosition& pos) {
    return to_crop(face, face_frame_point(face, pos));
}

PointList scheme_points(const FaceParams& face, SynthScheme scheme) {
    PointList out;
    for (const auto& pos : scheme_positions(scheme)) out.push_back(curve_point(face, pos));
    return out;
}

Image render_face(const FaceParams& f, int height, int width, Rng* noise) {
    constexpr int kSub = 4;
    constexpr int kMouthSegments = 24;
    std::vector<FacePoint> mouth(kMouthSegments + 1);
    for (int k = 0; k <= kMouthSegments; ++k) {
        mouth[k] = face_frame_point(f, {FaceCurve::Mouth, static_cast<double>(k) / kMouthSegments});
    }
    double nose[3];
    for (int c = 0; c < 3; ++c) nose[c] = 0.7 * f.skin[c];

    Image img(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int j = 0; j < kSub; ++j) {
                for (int i = 0; i < kSub; ++i) {
                    const double qx = (x + (i + 0.5) / kSub) / width;
                    const double qy = (y + (j + 0.5) / kSub) / height;
                    const FacePoint p = to_face(f, qx, qy);
                    const double* color = f.background;
                    if (p.u * p.u + (p.v / f.aspect) * (p.v / f.aspect) <= 1.0) {
                        color = f.skin;
                        const double ly = (p.v - f.eye_dy) / f.eye_ry;
                        const double lx = (p.u + f.eye_dx) / f.eye_rx;
                        const double rx = (p.u - f.eye_dx) / f.eye_rx;
                        if (p.u * p.u + (p.v - f.nose_y) * (p.v - f.nose_y) <= kNoseRadius * kNoseRadius) {
                            color = nose;
                        }
                        if (lx * lx + ly * ly <= 1.0 || rx * rx + ly * ly <= 1.0) color = f.feature;
                        for (int k = 0; k < kMouthSegments; ++k) {
                            if (segment_distance(p, mouth[k], mouth[k + 1]) <= kMouthHalfWidth) {
                                color = f.feature;
                                break;
                            }
                        }
                    }
                    for (int c = 0; c < 3; ++c) acc[c] += color[c];
                }
            }
            const double shade = f.shade_x * (2.0 * (x + 0.5) / width - 1.0) +
                                 f.shade_y * (2.0 * (y + 0.5) / height - 1.0);
            for (int c = 0; c < 3; ++c) {
                double v = acc[c] / (kSub * kSub) + shade;
                if (noise) v += 0.01 * noise->normal();
                img.at(y, x, c) = v;
            }
        }
    }
    quantize_8bit(img);
    return img;
}

SynthDataset synth_generate(SynthScheme scheme, int count, std::uint64_t seed, int height, int width,
                            std::string dataset_id) {
    if (count < 1) throw UsageError("synthetic dataset needs count >= 1");
    SynthDataset out;
    out.descriptor = descriptor_preset(scheme_preset(scheme), std::move(dataset_id));
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const FaceParams face = random_face(rng);
        Rng noise = Rng::derive(seed, 0x5eed, static_cast<std::uint64_t>(i));
        Sample s;
        s.image = render_face(face, height, width, &noise);
        s.landmarks = LandmarkSet(scheme_points(face, scheme));
        s.dataset_id = out.descriptor.id;
        s.source = out.descriptor.id + "/" + std::to_string(i);
        s.source_box = {0.0, 0.0, static_cast<double>(width), static_cast<double>(height)};
        out.samples.push_back(std::move(s));
        out.faces.push_back(face);
    }
    return out;
}

PointList analytic_plane_positions(SynthScheme target, SynthScheme source, const MeanShape& source_mean) {
    const FaceParams face = canonical_face();
    const PointList src = scheme_points(face, source);
    if (src.size() != source_mean.size()) throw DataError("mean shape does not match the source scheme");
    const AffineFit fit = fit_affine_alignment(src, source_mean.points);
    return fit.transform.apply(scheme_points(face, target));
}

}  // namespace promptface
