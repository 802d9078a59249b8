#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cdasr/core/error.hpp"
#include "cdasr/data/image.hpp"

namespace cdasr {

inline bool has_image_extension(const std::filesystem::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

// Decodes PNG/JPEG/BMP into [0,1] floats. Grayscale files give one channel,
// anything with color gives RGB (alpha dropped).
inline Image<float> load_image(const std::filesystem::path& path)
{
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty())
        throw io_error("cannot decode image '" + path.string() + "'");
    double range = 255.0;
    if (mat.depth() == CV_16U)
        range = 65535.0;
    else if (mat.depth() != CV_8U)
        throw io_error("unsupported bit depth in '" + path.string() + "'");
    const int src_channels = mat.channels();
    const int channels = src_channels == 1 ? 1 : 3;
    Image<float> img(channels, mat.rows, mat.cols);
    img.source_path = path.string();
    cv::Mat f;
    mat.convertTo(f, CV_MAKETYPE(CV_32F, src_channels), 1.0 / range);
    for (int y = 0; y < mat.rows; ++y) {
        const float* row = f.ptr<float>(y);
        for (int x = 0; x < mat.cols; ++x) {
            if (channels == 1) {
                img.at(0, y, x) = row[x];
            } else {
                // OpenCV stores BGR(A).
                const float* px = row + static_cast<std::size_t>(x) * src_channels;
                img.at(0, y, x) = px[2];
                img.at(1, y, x) = px[1];
                img.at(2, y, x) = px[0];
            }
        }
    }
    return img;
}

// 8-bit PNG (or whatever the extension selects); values are clamped and rounded.
template <class T>
void save_image(const Image<T>& img, const std::filesystem::path& path)
{
    validate_image(img);
    const int c = img.channels();
    cv::Mat mat(img.height(), img.width(), CV_MAKETYPE(CV_8U, c));
    for (int y = 0; y < img.height(); ++y) {
        auto* row = mat.ptr<unsigned char>(y);
        for (int x = 0; x < img.width(); ++x) {
            for (int k = 0; k < c; ++k) {
                const int src = c == 3 ? 2 - k : 0;
                const double v = std::clamp(static_cast<double>(img.at(src, y, x)), 0.0, 1.0);
                row[x * c + k] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat))
        throw io_error("cannot write image '" + path.string() + "'");
}

} // namespace cdasr
