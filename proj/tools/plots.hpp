#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "promptface/dataset.hpp"
#include "promptface/geometry.hpp"

namespace promptface::tools {

struct CedSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // breakpoints (e, f(e))
};

/// Step-function CED curves on one set of axes, x from 0 to `x_max`.
void render_ced_plot(const std::filesystem::path& path, const std::vector<CedSeries>& series, double x_max);

/// Up to `max_tiles` samples side by side, upscaled, with predicted points in
/// red and labeled points (when present) in green.
void render_overlays(const std::filesystem::path& path, const std::vector<Sample>& samples,
                     const std::vector<PointList>& predicted, bool show_labels, std::size_t max_tiles = 8);

}  // namespace promptface::tools
