#pragma once

#include <filesystem>
#include <vector>

#include "promptface/geometry.hpp"

namespace promptface {

/// Interleaved RGB image with intensities in [0, 1]. Pixel (x, y) covers the
/// continuous square [x, x+1) x [y, y+1).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * 3, row-major, channel fastest

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    /// Bilinear lookup at continuous coordinates; outside samples clamp to the border.
    double sample(double x, double y, int c) const;

    bool empty() const { return data.empty(); }
};

/// Rounds every intensity to the nearest of 256 levels, as an 8-bit file would.
void quantize_8bit(Image& image);

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

/// Resamples the pixel-space box of `src` into an h x w image (area-averaged).
Image crop_resize(const Image& src, const Box& box, int h, int w);

}  // namespace promptface
