#pragma once

#include <span>

#include <Eigen/Dense>

#include "promptface/geometry.hpp"

namespace promptface {

/// Sinusoidal plane-coordinate encoder. Each axis gets C/2 channels laid out
/// as (sin, cos) pairs over C/4 geometrically spaced wavelengths.
struct PromptCodecConfig {
    int channels = 64;
    double tau = 10000.0;

    /// Throws UsageError unless channels > 0, channels % 4 == 0 and tau > 1.
    void validate() const;

    int frequencies() const { return channels / 4; }

    /// tau^(2c / (C/2)): the divisor applied to a coordinate at frequency index c.
    double wavelength(int c) const;
};

using StructurePrompt = Eigen::VectorXd;

/// C/2 entries: [sin(v/w_0), cos(v/w_0), sin(v/w_1), cos(v/w_1), ...].
Eigen::VectorXd encode_axis(double v, const PromptCodecConfig& config);

/// Concatenation of the x and y axis encodings.
StructurePrompt encode_point(const Point2& p, const PromptCodecConfig& config);

/// One prompt per row.
Eigen::MatrixXd encode_points(std::span<const Point2> points, const PromptCodecConfig& config);

/// Rotation taking the (sin, cos) pair at frequency c of encode_axis(v) to the
/// pair of encode_axis(v + delta).
Eigen::Matrix2d shift_rotation_matrix(double delta, int c, const PromptCodecConfig& config);

}  // namespace promptface
