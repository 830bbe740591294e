#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rrw/image.hpp"

namespace rrw {

inline double mse_quantized(const QuantizedImage& a, const QuantizedImage& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// 10*log10(255^2 / MSE); identical images map to the infinity sentinel.
inline double psnr(const QuantizedImage& a, const QuantizedImage& b) {
    double m = mse_quantized(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / m);
}

// Structural similarity: 11x11 Gaussian window (sigma 1.5), standard
// stabilizers, channel-averaged, on the 8-bit dynamic range.
inline double ssim(const QuantizedImage& a, const QuantizedImage& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int R = 5;  // 11x11 window
    constexpr double sigma = 1.5;
    constexpr double C1 = (0.01 * 255) * (0.01 * 255);
    constexpr double C2 = (0.03 * 255) * (0.03 * 255);

    static const std::vector<double> kernel = [] {
        std::vector<double> k(2 * R + 1);
        double sum = 0;
        for (int i = -R; i <= R; ++i) {
            k[i + R] = std::exp(-0.5 * i * i / (sigma * sigma));
            sum += k[i + R];
        }
        for (double& v : k) v /= sum;
        return k;
    }();

    auto blur = [&](const std::vector<double>& src, int h, int w) {
        std::vector<double> tmp(src.size()), dst(src.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int t = -R; t <= R; ++t) {
                    int xx = std::clamp(x + t, 0, w - 1);
                    s += kernel[t + R] * src[static_cast<size_t>(y) * w + xx];
                }
                tmp[static_cast<size_t>(y) * w + x] = s;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int t = -R; t <= R; ++t) {
                    int yy = std::clamp(y + t, 0, h - 1);
                    s += kernel[t + R] * tmp[static_cast<size_t>(yy) * w + x];
                }
                dst[static_cast<size_t>(y) * w + x] = s;
            }
        return dst;
    };

    const int h = a.h, w = a.w;
    const size_t plane = static_cast<size_t>(h) * w;
    double total = 0.0;
    for (int c = 0; c < a.c; ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (size_t i = 0; i < plane; ++i) {
            x[i] = a.data[c * plane + i];
            y[i] = b.data[c * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        auto mx = blur(x, h, w), my = blur(y, h, w);
        auto mxx = blur(xx, h, w), myy = blur(yy, h, w), mxy = blur(xy, h, w);
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) {
            double vx = mxx[i] - mx[i] * mx[i];
            double vy = myy[i] - my[i] * my[i];
            double cov = mxy[i] - mx[i] * my[i];
            double num = (2 * mx[i] * my[i] + C1) * (2 * cov + C2);
            double den = (mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2);
            acc += num / den;
        }
        total += acc / static_cast<double>(plane);
    }
    return total / a.c;
}

// Bit error ratio; ACC = 1 - BER.
inline double ber(const WatermarkImage& a, const WatermarkImage& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ber: shape mismatch");
    size_t diff = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.bits[i] > 1 || b.bits[i] > 1) throw std::invalid_argument("ber: non-binary input");
        if (a.bits[i] != b.bits[i]) ++diff;
    }
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

inline double acc(const WatermarkImage& a, const WatermarkImage& b) { return 1.0 - ber(a, b); }

}  // namespace rrw
