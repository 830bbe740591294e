#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

#include "rrw/attacks.hpp"
#include "rrw/image.hpp"

namespace rrw {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool has_png_extension(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot == std::string::npos) return false;
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == "png";
}

inline QuantizedImage read_image_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot read image: " + path);
    return detail::from_mat(m);
}

// Lossless output is mandatory for reversibility; any other extension is
// refused rather than silently transcoded.
inline void write_image_png(const QuantizedImage& img, const std::string& path) {
    if (!has_png_extension(path))
        throw IoError("refusing lossy output format; use a .png path: " + path);
    if (!cv::imwrite(path, detail::to_mat(img)))
        throw IoError("cannot write image: " + path);
}

// Watermarks load from 1-bit or 8-bit grayscale PNGs, thresholded at 128.
inline WatermarkImage read_watermark_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read watermark: " + path);
    WatermarkImage wm(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            wm.bits[static_cast<size_t>(y) * m.cols + x] = m.at<uint8_t>(y, x) >= 128 ? 1 : 0;
    return wm;
}

inline void write_watermark_png(const WatermarkImage& wm, const std::string& path) {
    if (!has_png_extension(path))
        throw IoError("refusing lossy output format; use a .png path: " + path);
    cv::Mat m(wm.h, wm.w, CV_8UC1);
    for (int y = 0; y < wm.h; ++y)
        for (int x = 0; x < wm.w; ++x)
            m.at<uint8_t>(y, x) = wm.bits[static_cast<size_t>(y) * wm.w + x] ? 255 : 0;
    if (!cv::imwrite(path, m)) throw IoError("cannot write watermark: " + path);
}

}  // namespace rrw
