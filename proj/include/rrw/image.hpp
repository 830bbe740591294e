#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rrw/tensor.hpp"

namespace rrw {

// Real-valued working image, 3 channels, values in [0,1].
using ImageTensor = Tensor;

// 8-bit distribution form of an image. Values in [0,255].
struct QuantizedImage {
    int c = 0, h = 0, w = 0;
    std::vector<int16_t> data;

    QuantizedImage() = default;
    QuantizedImage(int c_, int h_, int w_, int16_t fill = 0)
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    size_t size() const { return data.size(); }
    bool same_shape(const QuantizedImage& o) const { return c == o.c && h == o.h && w == o.w; }
    bool operator==(const QuantizedImage& o) const {
        return same_shape(o) && data == o.data;
    }
};

// One-bit-per-pixel watermark plane, shape (1,H,W), values strictly {0,1}.
struct WatermarkImage {
    int h = 0, w = 0;
    std::vector<uint8_t> bits;

    WatermarkImage() = default;
    WatermarkImage(int h_, int w_, uint8_t fill = 0)
        : h(h_), w(w_), bits(static_cast<size_t>(h_) * w_, fill) {}

    size_t size() const { return bits.size(); }
    bool same_shape(const WatermarkImage& o) const { return h == o.h && w == o.w; }
    bool operator==(const WatermarkImage& o) const { return h == o.h && w == o.w && bits == o.bits; }

    Tensor to_tensor() const {
        Tensor t(1, h, w);
        for (size_t i = 0; i < bits.size(); ++i) t.data[i] = static_cast<float>(bits[i]);
        return t;
    }
};

// Signed integer embedding residual, values in [-255, 255].
struct Residual {
    int c = 0, h = 0, w = 0;
    std::vector<int16_t> data;

    Residual() = default;
    Residual(int c_, int h_, int w_, int16_t fill = 0)
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    bool operator==(const Residual& o) const {
        return c == o.c && h == o.h && w == o.w && data == o.data;
    }
};

// Half-away-from-zero rounding; the one rounding convention used everywhere
// the real and integer image domains meet.
inline int round_half_away(double v) {
    return static_cast<int>(v >= 0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

inline QuantizedImage quantize(const ImageTensor& img) {
    if (!img.all_finite()) throw std::invalid_argument("quantize: invalid image data");
    QuantizedImage q(img.c, img.h, img.w);
    for (size_t i = 0; i < img.size(); ++i) {
        int v = round_half_away(static_cast<double>(img.data[i]) * 255.0);
        q.data[i] = static_cast<int16_t>(std::clamp(v, 0, 255));
    }
    return q;
}

// Snap a real-valued plane set to a uniform grid of `levels` values in [0,1].
// Used on the guider's first-stage output: once the snapped abstractions of
// the cover and the watermarked image coincide, the guiding intermediate is
// bitwise identical on both sides and recovery is exact by construction.
inline ImageTensor quantize_levels(ImageTensor t, int levels) {
    if (levels <= 1) return t;
    const float k = static_cast<float>(levels - 1);
    for (float& v : t.data)
        v = std::clamp(static_cast<float>(round_half_away(static_cast<double>(v) * k)) / k, 0.0f,
                       1.0f);
    return t;
}

inline ImageTensor dequantize(const QuantizedImage& q) {
    ImageTensor img(q.c, q.h, q.w);
    for (size_t i = 0; i < q.size(); ++i) {
        if (q.data[i] < 0 || q.data[i] > 255)
            throw std::invalid_argument("dequantize: value out of [0,255]");
        img.data[i] = static_cast<float>(q.data[i]) / 255.0f;
    }
    return img;
}

// Hnet input layout: cover channels 0-2, watermark plane as channel 3.
inline Tensor concat_cover_watermark(const ImageTensor& img, const WatermarkImage& wm) {
    if (img.h != wm.h || img.w != wm.w)
        throw std::invalid_argument("concat_cover_watermark: spatial size mismatch");
    return concat_channels(img, wm.to_tensor());
}

// Threshold at 0.5 (>= 0.5 maps to 1). Idempotent and total on [0,1].
inline WatermarkImage binarize_watermark(const Tensor& raw) {
    WatermarkImage wm(raw.h, raw.w);
    for (size_t i = 0; i < raw.size(); ++i) wm.bits[i] = raw.data[i] >= 0.5f ? 1 : 0;
    return wm;
}

inline WatermarkImage blank_watermark(int h, int w) { return WatermarkImage(h, w, 0); }

}  // namespace rrw
