#include "promptface/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptface/errors.hpp"
#include "promptface/rng.hpp"

namespace promptface {

LandmarkSet::LandmarkSet(PointList points)
    : coords(std::move(points)), valid(coords.size(), true) {}

LandmarkSet::LandmarkSet(PointList points, std::vector<bool> validity)
    : coords(std::move(points)), valid(std::move(validity)) {}

std::size_t LandmarkSet::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void LandmarkSet::validate() const {
    if (coords.empty()) throw DataError("landmark set is empty");
    if (coords.size() != valid.size()) {
        throw DataError("landmark set has " + std::to_string(coords.size()) + " coordinates but " +
                        std::to_string(valid.size()) + " validity flags");
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (valid[i] && !(std::isfinite(coords[i].x) && std::isfinite(coords[i].y))) {
            throw DataError("landmark " + std::to_string(i) + " is valid but not finite");
        }
    }
}

Point2 AffineTransform::apply(const Point2& p) const {
    const Eigen::Vector2d r = linear * Eigen::Vector2d(p.x, p.y) + offset;
    return {r.x(), r.y()};
}

PointList AffineTransform::apply(std::span<const Point2> points) const {
    PointList out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(apply(p));
    return out;
}

AffineTransform AffineTransform::inverse() const {
    const double det = linear.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300) {
        throw NumericError("affine transform is singular");
    }
    AffineTransform inv;
    inv.linear = linear.inverse();
    inv.offset = -inv.linear * offset;
    return inv;
}

AffineTransform AffineTransform::compose(const AffineTransform& other) const {
    AffineTransform out;
    out.linear = linear * other.linear;
    out.offset = linear * other.offset + offset;
    return out;
}

AffineTransform plane_normalizer(std::span<const Point2> points) {
    if (points.empty()) throw DataError("cannot normalize an empty point list");
    double x0 = points[0].x, x1 = points[0].x, y0 = points[0].y, y1 = points[0].y;
    for (const auto& p : points) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const double extent = std::max(x1 - x0, y1 - y0);
    // A single distinct point collapses to the origin.
    const double scale = extent > 0.0 ? 2.0 / extent : 0.0;
    AffineTransform t;
    t.linear = Eigen::Matrix2d::Identity() * scale;
    t.offset = Eigen::Vector2d(-0.5 * (x0 + x1) * scale, -0.5 * (y0 + y1) * scale);
    return t;
}

MeanShape compute_mean_shape(std::span<const LandmarkSet> samples,
                             std::span<const AffineTransform> canonicalizers,
                             std::string dataset_id) {
    if (samples.empty()) throw DataError("mean shape needs at least one sample");
    if (canonicalizers.size() != samples.size()) {
        throw DataError("mean shape needs one canonicalizer per sample");
    }
    const std::size_t n = samples.front().size();
    std::vector<double> sx(n, 0.0), sy(n, 0.0);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& sample = samples[s];
        sample.validate();
        if (sample.size() != n) {
            throw DataError("sample " + std::to_string(s) + " has " + std::to_string(sample.size()) +
                            " landmarks, expected " + std::to_string(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!sample.valid[i]) continue;
            const Point2 p = canonicalizers[s].apply(sample.coords[i]);
            sx[i] += p.x;
            sy[i] += p.y;
            ++counts[i];
        }
    }
    PointList mean(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[i] == 0) {
            throw DataError("landmark " + std::to_string(i) + " is valid in no sample");
        }
        mean[i] = {sx[i] / static_cast<double>(counts[i]), sy[i] / static_cast<double>(counts[i])};
    }
    const AffineTransform norm = plane_normalizer(mean);
    MeanShape shape{norm.apply(mean), std::move(dataset_id)};
    // Rounding may push an extreme coordinate a few ulps outside the plane.
    for (auto& p : shape.points) {
        p.x = std::clamp(p.x, -1.0, 1.0);
        p.y = std::clamp(p.y, -1.0, 1.0);
    }
    return shape;
}

MeanShape compute_mean_shape(std::span<const LandmarkSet> samples, std::string dataset_id) {
    const std::vector<AffineTransform> ids(samples.size());
    return compute_mean_shape(samples, ids, std::move(dataset_id));
}

PointList apply_semantic_offsets(const MeanShape& shape, std::span<const Point2> offsets) {
    if (offsets.size() != shape.points.size()) {
        throw DataError("expected " + std::to_string(shape.points.size()) + " offsets, got " +
                        std::to_string(offsets.size()));
    }
    PointList out(shape.points.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {shape.points[i].x + offsets[i].x, shape.points[i].y + offsets[i].y};
    }
    return out;
}

AffineFit fit_affine_alignment(std::span<const Point2> source, std::span<const Point2> target) {
    if (source.size() != target.size()) {
        throw DataError("affine fit needs equally many source and target points");
    }
    const auto n = static_cast<Eigen::Index>(source.size());
    if (n < 3) throw NumericError("degenerate affine fit: fewer than 3 point pairs");

    // Collinearity test on the centered source scatter.
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : source) centroid += Eigen::Vector2d(p.x, p.y);
    centroid /= static_cast<double>(n);
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (const auto& p : source) {
        const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - centroid;
        scatter += d * d.transpose();
    }
    const Eigen::Vector2d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(scatter).eigenvalues();
    if (!(eig(1) > 0.0) || eig(0) <= 1e-12 * eig(1)) {
        throw NumericError("degenerate affine fit: source points are collinear");
    }

    Eigen::MatrixXd design(n, 3);
    Eigen::MatrixXd rhs(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        design(i, 0) = source[i].x;
        design(i, 1) = source[i].y;
        design(i, 2) = 1.0;
        rhs(i, 0) = target[i].x;
        rhs(i, 1) = target[i].y;
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 3) throw NumericError("degenerate affine fit: rank-deficient design");
    const Eigen::MatrixXd sol = qr.solve(rhs);  // 3 x 2

    AffineFit fit;
    fit.transform.linear << sol(0, 0), sol(1, 0), sol(0, 1), sol(1, 1);
    fit.transform.offset << sol(2, 0), sol(2, 1);
    fit.residual = (design * sol - rhs).squaredNorm();
    return fit;
}

PointList generate_scratch_shape(std::size_t n_points, const Box& region, std::uint64_t seed) {
    if (n_points == 0) throw UsageError("scratch shape needs at least one point");
    if (!(region.x0 <= region.x1) || !(region.y0 <= region.y1)) {
        throw UsageError("scratch shape region is empty");
    }
    if (region.x0 < -1.0 || region.y0 < -1.0 || region.x1 > 1.0 || region.y1 > 1.0) {
        throw UsageError("scratch shape region must lie inside [-1, 1]^2");
    }
    Rng rng(seed);
    PointList out(n_points);
    for (auto& p : out) {
        p.x = region.x0 + region.width() * rng.uniform();
        p.y = region.y0 + region.height() * rng.uniform();
    }
    return out;
}

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace promptface
