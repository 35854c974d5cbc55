#include "promptface/prompt_codec.hpp"

#include <cmath>
#include <string>

#include "promptface/errors.hpp"

namespace promptface {

void PromptCodecConfig::validate() const {
    if (channels <= 0 || channels % 4 != 0) {
        throw UsageError("prompt channels must be a positive multiple of 4, got " +
                         std::to_string(channels));
    }
    if (!(tau > 1.0)) throw UsageError("prompt tau must exceed 1");
}

double PromptCodecConfig::wavelength(int c) const {
    return std::pow(tau, 2.0 * c / (0.5 * channels));
}

Eigen::VectorXd encode_axis(double v, const PromptCodecConfig& config) {
    config.validate();
    Eigen::VectorXd out(config.channels / 2);
    for (int c = 0; c < config.frequencies(); ++c) {
        const double arg = v / config.wavelength(c);
        out(2 * c) = std::sin(arg);
        out(2 * c + 1) = std::cos(arg);
    }
    return out;
}

StructurePrompt encode_point(const Point2& p, const PromptCodecConfig& config) {
    StructurePrompt out(config.channels);
    out << encode_axis(p.x, config), encode_axis(p.y, config);
    return out;
}

Eigen::MatrixXd encode_points(std::span<const Point2> points, const PromptCodecConfig& config) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), config.channels);
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = encode_point(points[i], config).transpose();
    }
    return out;
}

Eigen::Matrix2d shift_rotation_matrix(double delta, int c, const PromptCodecConfig& config) {
    config.validate();
    const double theta = delta / config.wavelength(c);
    Eigen::Matrix2d r;
    r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
    return r;
}

}  // namespace promptface
