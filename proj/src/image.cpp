#include "promptface/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "promptface/errors.hpp"

namespace promptface {

double Image::sample(double x, double y, int c) const {
    // Pixel centers sit at half-integers.
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double ax = fx - x0, ay = fy - y0;
    const double top = at(y0, x0, c) * (1 - ax) + at(y0, x1, c) * ax;
    const double bottom = at(y1, x0, c) * (1 - ax) + at(y1, x1, c) * ax;
    return top * (1 - ay) + bottom * ay;
}

void quantize_8bit(Image& image) {
    for (double& v : image.data) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Image read_image(const std::filesystem::path& path) {
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image " + path.string());
    Image img(bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c] / 255.0;
        }
    }
    return img;
}

void write_image(const std::filesystem::path& path, const Image& image) {
    cv::Mat bgr(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                row[x][2 - c] = static_cast<unsigned char>(
                    std::lround(std::clamp(image.at(y, x, c), 0.0, 1.0) * 255.0));
            }
        }
    }
    if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

Image crop_resize(const Image& src, const Box& box, int h, int w) {
    if (box.width() <= 0.0 || box.height() <= 0.0) throw DataError("crop box is empty");
    Image out(h, w);
    const double sx = box.width() / w;
    const double sy = box.height() / h;
    const int nx = std::max(1, static_cast<int>(std::ceil(sx)));
    const int ny = std::max(1, static_cast<int>(std::ceil(sy)));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int j = 0; j < ny; ++j) {
                    for (int i = 0; i < nx; ++i) {
                        const double px = box.x0 + (x + (i + 0.5) / nx) * sx;
                        const double py = box.y0 + (y + (j + 0.5) / ny) * sy;
                        acc += src.sample(px, py, c);
                    }
                }
                out.at(y, x, c) = acc / (nx * ny);
            }
        }
    }
    return out;
}

}  // namespace promptface
