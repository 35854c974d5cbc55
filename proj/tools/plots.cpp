#include "plots.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "promptface/errors.hpp"

namespace promptface::tools {

namespace {

const cv::Scalar kPalette[] = {{200, 60, 30}, {40, 40, 210}, {40, 150, 40}, {160, 40, 160}, {20, 140, 200}, {90, 90, 90}};

void save(const std::filesystem::path& path, const cv::Mat& img) {
    if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

}  // namespace

void render_ced_plot(const std::filesystem::path& path, const std::vector<CedSeries>& series, double x_max) {
    if (series.empty()) throw UsageError("nothing to plot");
    if (!(x_max > 0.0)) throw UsageError("plot range must be positive");
    const int width = 720, height = 540, left = 70, right = 20, top = 20, bottom = 60;
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int pw = width - left - right, ph = height - top - bottom;
    auto to_px = [&](double e, double f) {
        return cv::Point(left + static_cast<int>(std::min(e, x_max) / x_max * pw + 0.5),
                         top + static_cast<int>((1.0 - f) * ph + 0.5));
    };
    for (int i = 0; i <= 10; ++i) {
        const int x = left + pw * i / 10, y = top + ph * i / 10;
        cv::line(canvas, {x, top}, {x, top + ph}, cv::Scalar(225, 225, 225), 1);
        cv::line(canvas, {left, y}, {left + pw, y}, cv::Scalar(225, 225, 225), 1);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x_max * i / 10.0);
        cv::putText(canvas, buf, {x - 12, top + ph + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1,
                    cv::LINE_AA);
        std::snprintf(buf, sizeof buf, "%.1f", 1.0 - i / 10.0);
        cv::putText(canvas, buf, {left - 34, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1,
                    cv::LINE_AA);
    }
    cv::rectangle(canvas, {left, top}, {left + pw, top + ph}, cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, "NME (%)", {left + pw / 2 - 30, height - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(canvas, "fraction of samples", {5, top + 12}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1,
                cv::LINE_AA);

    for (std::size_t s = 0; s < series.size(); ++s) {
        const cv::Scalar color = kPalette[s % std::size(kPalette)];
        std::vector<cv::Point> poly{to_px(0.0, 0.0)};
        double f = 0.0;
        for (const auto& [e, fe] : series[s].points) {
            if (e > x_max) break;
            poly.push_back(to_px(e, f));
            poly.push_back(to_px(e, fe));
            f = fe;
        }
        poly.push_back(to_px(x_max, f));
        cv::polylines(canvas, poly, false, color, 2, cv::LINE_AA);
        const int ly = top + 20 + 20 * static_cast<int>(s);
        cv::line(canvas, {left + pw - 200, ly - 4}, {left + pw - 170, ly - 4}, color, 2, cv::LINE_AA);
        cv::putText(canvas, series[s].label, {left + pw - 162, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                    cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    }
    save(path, canvas);
}

void render_overlays(const std::filesystem::path& path, const std::vector<Sample>& samples,
                     const std::vector<PointList>& predicted, bool show_labels, std::size_t max_tiles) {
    const std::size_t n = std::min({samples.size(), predicted.size(), max_tiles});
    if (n == 0) throw UsageError("no samples to draw");
    const int scale = 8;
    const int th = samples.front().image.height * scale, tw = samples.front().image.width * scale;
    cv::Mat canvas(th, tw * static_cast<int>(n), CV_8UC3, cv::Scalar(0, 0, 0));
    for (std::size_t i = 0; i < n; ++i) {
        const Image& img = samples[i].image;
        cv::Mat tile(img.height, img.width, CV_8UC3);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                auto& px = tile.at<cv::Vec3b>(y, x);
                for (int c = 0; c < 3; ++c) {
                    px[2 - c] = cv::saturate_cast<uchar>(img.at(y, x, c) * 255.0 + 0.5);
                }
            }
        }
        cv::Mat big;
        cv::resize(tile, big, cv::Size(tw, th), 0, 0, cv::INTER_NEAREST);
        auto draw = [&](const Point2& p, const cv::Scalar& color) {
            cv::circle(big, cv::Point(static_cast<int>(p.x * tw), static_cast<int>(p.y * th)), 3, color, -1,
                       cv::LINE_AA);
        };
        if (show_labels) {
            const auto& lm = samples[i].landmarks;
            for (std::size_t k = 0; k < lm.size(); ++k) {
                if (lm.valid[k]) draw(lm.coords[k], cv::Scalar(60, 200, 60));
            }
        }
        for (const auto& p : predicted[i]) draw(p, cv::Scalar(40, 40, 230));
        big.copyTo(canvas(cv::Rect(tw * static_cast<int>(i), 0, tw, th)));
    }
    save(path, canvas);
}

}  // namespace promptface::tools
