#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace promptface {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

using PointList = std::vector<Point2>;

/// Landmarks of one face. Invalid entries (self-occluded, no position) keep a
/// placeholder coordinate that must never be read.
struct LandmarkSet {
    PointList coords;
    std::vector<bool> valid;

    LandmarkSet() = default;
    explicit LandmarkSet(PointList points);
    LandmarkSet(PointList points, std::vector<bool> validity);

    std::size_t size() const { return coords.size(); }
    std::size_t valid_count() const;

    /// Throws DataError when lengths disagree, N == 0, or a valid entry is non-finite.
    void validate() const;
};

/// Statistical shape of one dataset on the plane [-1, 1]^2.
struct MeanShape {
    PointList points;
    std::string dataset_id;

    std::size_t size() const { return points.size(); }
};

struct AffineTransform {
    Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();

    static AffineTransform identity() { return {}; }

    Point2 apply(const Point2& p) const;
    PointList apply(std::span<const Point2> points) const;

    /// Throws NumericError when the linear part is singular.
    AffineTransform inverse() const;

    /// (this * other)(p) == this->apply(other.apply(p)).
    AffineTransform compose(const AffineTransform& other) const;
};

/// Axis-aligned box [x0, x1] x [y0, y1].
struct Box {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool contains(const Point2& p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

inline constexpr Box kPlaneBox{-1.0, -1.0, 1.0, 1.0};

/// Per-index mean over valid entries of the canonicalized samples, then scaled
/// uniformly and centered so its bounding box fits [-1, 1]^2.
MeanShape compute_mean_shape(std::span<const LandmarkSet> samples,
                             std::span<const AffineTransform> canonicalizers,
                             std::string dataset_id);

/// Same, with every canonicalizer the identity.
MeanShape compute_mean_shape(std::span<const LandmarkSet> samples, std::string dataset_id);

/// Uniform scale + translation mapping the bounding box of `points` into [-1, 1]^2.
AffineTransform plane_normalizer(std::span<const Point2> points);

/// Elementwise shape + offsets. The result is not clamped to the plane.
PointList apply_semantic_offsets(const MeanShape& shape, std::span<const Point2> offsets);

struct AffineFit {
    AffineTransform transform;
    double residual = 0.0;  ///< sum of squared residuals
};

/// Least-squares affine map with sum ||A s + b - t||^2 minimal. Needs >= 3
/// non-collinear source points.
AffineFit fit_affine_alignment(std::span<const Point2> source, std::span<const Point2> target);

/// Random plane points inside `region`, deterministic for a given seed.
PointList generate_scratch_shape(std::size_t n_points, const Box& region, std::uint64_t seed);

double distance(const Point2& a, const Point2& b);

}  // namespace promptface
