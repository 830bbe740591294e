#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rrw/rng.hpp"
#include "rrw/tensor.hpp"

namespace rrw {

// Training-time distortion module configuration.
struct NoiseConfig {
    int jpeg_qf = 50;
    double gauss_sigma = 7.0;
    bool sigma_is_kernel_size = false;  // alternative reading of the blur parameter
    bool jpeg_enabled = true;
    bool gauss_enabled = true;
    double strength_weight = 1.0;  // multiplier on the noise-extraction loss

    bool any_enabled() const { return jpeg_enabled || gauss_enabled; }
    double effective_sigma() const {
        if (!sigma_is_kernel_size) return gauss_sigma;
        // kernel-size reading: size = 2*ceil(3*sigma)+1  =>  sigma = (size-1)/6
        return std::max((gauss_sigma - 1.0) / 6.0, 0.1);
    }
};

// Robustness-enhanced trade-off preset: heavier simulated distortion and a
// larger noise-loss weight, trading some reversibility margin for robustness.
inline NoiseConfig robust_enhanced_noise_preset() {
    NoiseConfig cfg;
    cfg.jpeg_qf = 10;
    cfg.gauss_sigma = 15.0;
    cfg.strength_weight = 5.0;
    return cfg;
}

namespace detail {

// Standard base quantization tables (luminance / chrominance).
inline const std::array<int, 64>& jpeg_luma_base() {
    static const std::array<int, 64> t = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    return t;
}

inline const std::array<int, 64>& jpeg_chroma_base() {
    static const std::array<int, 64> t = {
        17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
    return t;
}

inline std::array<float, 64> scaled_quant_table(const std::array<int, 64>& base, int qf) {
    const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
    std::array<float, 64> q{};
    for (int i = 0; i < 64; ++i)
        q[i] = static_cast<float>(std::clamp((base[i] * scale + 50) / 100, 1, 255));
    return q;
}

// Orthonormal 8-point DCT-II matrix.
inline const std::array<float, 64>& dct8_matrix() {
    static const std::array<float, 64> m = [] {
        std::array<float, 64> c{};
        const double pi = 3.14159265358979323846;
        for (int k = 0; k < 8; ++k) {
            double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n)
                c[k * 8 + n] = static_cast<float>(a * std::cos(pi * (n + 0.5) * k / 8.0));
        }
        return c;
    }();
    return m;
}

// B = C A C^T (8x8 blocks)
inline void dct8x8(const float* a, float* b) {
    const auto& c = dct8_matrix();
    float tmp[64];
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            float s = 0;
            for (int k = 0; k < 8; ++k) s += c[i * 8 + k] * a[k * 8 + j];
            tmp[i * 8 + j] = s;
        }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            float s = 0;
            for (int k = 0; k < 8; ++k) s += tmp[i * 8 + k] * c[j * 8 + k];
            b[i * 8 + j] = s;
        }
}

// A = C^T B C
inline void idct8x8(const float* b, float* a) {
    const auto& c = dct8_matrix();
    float tmp[64];
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            float s = 0;
            for (int k = 0; k < 8; ++k) s += c[k * 8 + i] * b[k * 8 + j];
            tmp[i * 8 + j] = s;
        }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            float s = 0;
            for (int k = 0; k < 8; ++k) s += tmp[i * 8 + k] * c[k * 8 + j];
            a[i * 8 + j] = s;
        }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable JPEG: RGB->YCbCr, 4:2:0 chroma subsampling, blockwise DCT,
// quantization-table scaling by QF, rounding of coefficients (straight-through
// or smooth), inverse path, clamp to [0,1].

enum class JpegRounding { straight_through, soft };

class DiffJpeg {
  public:
    struct Ctx {
        int h = 0, w = 0;
        std::vector<uint8_t> clamp_mask;         // 1 where output stayed inside [0,1]
        std::vector<std::vector<float>> deriv;   // per-plane d(round)/d(coef), soft mode only
        JpegRounding mode = JpegRounding::straight_through;
        int qf = 50;
    };

    static Tensor forward(const Tensor& x, int qf, Ctx* ctx = nullptr,
                          JpegRounding mode = JpegRounding::straight_through) {
        if (qf < 1 || qf > 100) throw std::invalid_argument("jpeg_branch: qf must be in [1,100]");
        if (x.c != 3) throw std::invalid_argument("jpeg_branch: expects 3 channels");
        const int h = x.h, w = x.w;
        // pad to a multiple of 16 (so chroma planes are block-aligned)
        const int ph = (h + 15) / 16 * 16, pw = (w + 15) / 16 * 16;

        std::vector<float> Y(static_cast<size_t>(ph) * pw), Cb(Y.size()), Cr(Y.size());
        for (int yy = 0; yy < ph; ++yy) {
            const int sy = std::min(yy, h - 1);
            for (int xx = 0; xx < pw; ++xx) {
                const int sx = std::min(xx, w - 1);
                const float r = x.at(0, sy, sx) * 255.0f;
                const float g = x.at(1, sy, sx) * 255.0f;
                const float b = x.at(2, sy, sx) * 255.0f;
                const size_t i = static_cast<size_t>(yy) * pw + xx;
                Y[i] = 0.299f * r + 0.587f * g + 0.114f * b - 128.0f;
                Cb[i] = -0.168736f * r - 0.331264f * g + 0.5f * b;
                Cr[i] = 0.5f * r - 0.418688f * g - 0.081312f * b;
            }
        }
        // 4:2:0 subsample (2x2 mean)
        const int ch = ph / 2, cw = pw / 2;
        std::vector<float> cb2(static_cast<size_t>(ch) * cw), cr2(cb2.size());
        for (int yy = 0; yy < ch; ++yy)
            for (int xx = 0; xx < cw; ++xx) {
                size_t i0 = static_cast<size_t>(2 * yy) * pw + 2 * xx;
                cb2[static_cast<size_t>(yy) * cw + xx] =
                    0.25f * (Cb[i0] + Cb[i0 + 1] + Cb[i0 + pw] + Cb[i0 + pw + 1]);
                cr2[static_cast<size_t>(yy) * cw + xx] =
                    0.25f * (Cr[i0] + Cr[i0 + 1] + Cr[i0 + pw] + Cr[i0 + pw + 1]);
            }

        if (ctx) {
            ctx->h = h;
            ctx->w = w;
            ctx->mode = mode;
            ctx->qf = qf;
            ctx->deriv.assign(3, {});
            if (mode == JpegRounding::soft) {
                ctx->deriv[0].resize(Y.size());
                ctx->deriv[1].resize(cb2.size());
                ctx->deriv[2].resize(cr2.size());
            }
        }

        auto ql = detail::scaled_quant_table(detail::jpeg_luma_base(), qf);
        auto qc = detail::scaled_quant_table(detail::jpeg_chroma_base(), qf);
        quantize_plane(Y.data(), ph, pw, ql, mode, ctx ? &ctx->deriv[0] : nullptr);
        quantize_plane(cb2.data(), ch, cw, qc, mode, ctx ? &ctx->deriv[1] : nullptr);
        quantize_plane(cr2.data(), ch, cw, qc, mode, ctx ? &ctx->deriv[2] : nullptr);

        Tensor out(3, h, w);
        if (ctx) ctx->clamp_mask.assign(out.size(), 1);
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const size_t i = static_cast<size_t>(yy) * pw + xx;
                const size_t ci = static_cast<size_t>(yy / 2) * cw + xx / 2;
                const float y = Y[i] + 128.0f;
                const float cb = cb2[ci], cr = cr2[ci];
                float rgb[3] = {y + 1.402f * cr, y - 0.344136f * cb - 0.714136f * cr,
                                y + 1.772f * cb};
                for (int c = 0; c < 3; ++c) {
                    float v = rgb[c] / 255.0f;
                    bool inside = v > 0.0f && v < 1.0f;
                    if (ctx)
                        ctx->clamp_mask[(static_cast<size_t>(c) * h + yy) * w + xx] = inside;
                    out.at(c, yy, xx) = std::clamp(v, 0.0f, 1.0f);
                }
            }
        return out;
    }

    static Tensor backward(const Tensor& gy, const Ctx& ctx) {
        const int h = ctx.h, w = ctx.w;
        const int ph = (h + 15) / 16 * 16, pw = (w + 15) / 16 * 16;
        const int ch = ph / 2, cw = pw / 2;

        std::vector<float> gY(static_cast<size_t>(ph) * pw, 0.0f);
        std::vector<float> gCb2(static_cast<size_t>(ch) * cw, 0.0f), gCr2(gCb2.size(), 0.0f);

        // adjoint of YCbCr->RGB (with clamp mask and the /255 at the output)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                float gr[3];
                for (int c = 0; c < 3; ++c) {
                    const size_t mi = (static_cast<size_t>(c) * h + yy) * w + xx;
                    gr[c] = ctx.clamp_mask[mi] ? gy.at(c, yy, xx) / 255.0f : 0.0f;
                }
                const size_t i = static_cast<size_t>(yy) * pw + xx;
                const size_t ci = static_cast<size_t>(yy / 2) * cw + xx / 2;
                gY[i] += gr[0] + gr[1] + gr[2];
                gCb2[ci] += -0.344136f * gr[1] + 1.772f * gr[2];
                gCr2[ci] += 1.402f * gr[0] - 0.714136f * gr[1];
            }

        // adjoint of the coefficient rounding path (DCT, scale, round, IDCT)
        backprop_plane(gY.data(), ph, pw, ctx.mode, ctx.deriv.empty() ? nullptr : &ctx.deriv[0]);
        backprop_plane(gCb2.data(), ch, cw, ctx.mode, ctx.deriv.empty() ? nullptr : &ctx.deriv[1]);
        backprop_plane(gCr2.data(), ch, cw, ctx.mode, ctx.deriv.empty() ? nullptr : &ctx.deriv[2]);

        // adjoint of 2x2 mean subsampling
        std::vector<float> gCb(static_cast<size_t>(ph) * pw), gCr(gCb.size());
        for (int yy = 0; yy < ph; ++yy)
            for (int xx = 0; xx < pw; ++xx) {
                const size_t ci = static_cast<size_t>(yy / 2) * cw + xx / 2;
                gCb[static_cast<size_t>(yy) * pw + xx] = 0.25f * gCb2[ci];
                gCr[static_cast<size_t>(yy) * pw + xx] = 0.25f * gCr2[ci];
            }

        // adjoint of RGB->YCbCr and the *255 at the input; padded rows/cols
        // replicate edge pixels, so fold their gradient back onto the edge.
        Tensor gx(3, h, w);
        for (int yy = 0; yy < ph; ++yy) {
            const int sy = std::min(yy, h - 1);
            for (int xx = 0; xx < pw; ++xx) {
                const int sx = std::min(xx, w - 1);
                const size_t i = static_cast<size_t>(yy) * pw + xx;
                const float gy_ = gY[i], gcb = gCb[i], gcr = gCr[i];
                gx.at(0, sy, sx) += 255.0f * (0.299f * gy_ - 0.168736f * gcb + 0.5f * gcr);
                gx.at(1, sy, sx) += 255.0f * (0.587f * gy_ - 0.331264f * gcb - 0.418688f * gcr);
                gx.at(2, sy, sx) += 255.0f * (0.114f * gy_ + 0.5f * gcb - 0.081312f * gcr);
            }
        }
        return gx;
    }

  private:
    static void quantize_plane(float* p, int h, int w, const std::array<float, 64>& q,
                               JpegRounding mode, std::vector<float>* deriv) {
        const double two_pi = 6.283185307179586;
        float block[64], coef[64];
        for (int by = 0; by < h; by += 8)
            for (int bx = 0; bx < w; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        block[i * 8 + j] = p[static_cast<size_t>(by + i) * w + bx + j];
                detail::dct8x8(block, coef);
                for (int i = 0; i < 64; ++i) {
                    const float t = coef[i] / q[i];
                    float r;
                    if (mode == JpegRounding::soft) {
                        r = static_cast<float>(t - std::sin(two_pi * t) / two_pi);
                        if (deriv && mode == JpegRounding::soft) {
                            int i8 = i / 8, j8 = i % 8;
                            (*deriv)[static_cast<size_t>(by + i8) * w + bx + j8] =
                                static_cast<float>(1.0 - std::cos(two_pi * t));
                        }
                    } else {
                        r = std::nearbyint(t);
                    }
                    coef[i] = r * q[i];
                }
                detail::idct8x8(coef, block);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        p[static_cast<size_t>(by + i) * w + bx + j] = block[i * 8 + j];
            }
    }

    // Adjoint of quantize_plane: IDCT^T = DCT, rounding derivative, DCT^T = IDCT.
    static void backprop_plane(float* g, int h, int w, JpegRounding mode,
                               const std::vector<float>* deriv) {
        float block[64], coef[64];
        for (int by = 0; by < h; by += 8)
            for (int bx = 0; bx < w; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        block[i * 8 + j] = g[static_cast<size_t>(by + i) * w + bx + j];
                detail::dct8x8(block, coef);
                if (mode == JpegRounding::soft && deriv)
                    for (int i = 0; i < 64; ++i)
                        coef[i] *= (*deriv)[static_cast<size_t>(by + i / 8) * w + bx + i % 8];
                detail::idct8x8(coef, block);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        g[static_cast<size_t>(by + i) * w + bx + j] = block[i * 8 + j];
            }
    }
};

inline Tensor jpeg_branch(const Tensor& img, int qf,
                          JpegRounding mode = JpegRounding::straight_through) {
    return DiffJpeg::forward(img, qf, nullptr, mode);
}

// ---------------------------------------------------------------------------
// Gaussian filtering branch: normalized kernel of size 2*ceil(3*sigma)+1,
// separable convolution with reflect padding.

class GaussBlur {
  public:
    struct Ctx {
        std::vector<float> kernel;
        std::vector<uint8_t> clamp_mask;
    };

    static std::vector<float> kernel_for(double sigma) {
        if (!(sigma > 0)) throw std::invalid_argument("gauss_branch: sigma must be > 0");
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<float> k(2 * radius + 1);
        double sum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
            k[i + radius] = static_cast<float>(v);
            sum += v;
        }
        for (float& v : k) v = static_cast<float>(v / sum);
        return k;
    }

    static Tensor forward(const Tensor& x, double sigma, Ctx* ctx = nullptr) {
        auto k = kernel_for(sigma);
        Tensor y = convolve_axis(convolve_axis(x, k, /*horizontal=*/true), k, false);
        if (ctx) {
            ctx->kernel = k;
            ctx->clamp_mask.assign(y.size(), 1);
        }
        for (size_t i = 0; i < y.size(); ++i) {
            bool inside = y.data[i] > 0.0f && y.data[i] < 1.0f;
            if (ctx) ctx->clamp_mask[i] = inside;
            y.data[i] = std::clamp(y.data[i], 0.0f, 1.0f);
        }
        return y;
    }

    static Tensor backward(const Tensor& gy, const Ctx& ctx) {
        Tensor g = gy;
        for (size_t i = 0; i < g.size(); ++i)
            if (!ctx.clamp_mask[i]) g.data[i] = 0.0f;
        g = scatter_axis(g, ctx.kernel, false);
        return scatter_axis(g, ctx.kernel, true);
    }

  private:
    static int reflect(int i, int n) {
        // reflect-101 style boundary; degenerate sizes fall back to clamping
        if (n == 1) return 0;
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
        }
        return i;
    }

    static Tensor convolve_axis(const Tensor& x, const std::vector<float>& k, bool horizontal) {
        const int radius = static_cast<int>(k.size()) / 2;
        Tensor y(x.c, x.h, x.w);
        for (int c = 0; c < x.c; ++c)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    float s = 0;
                    for (int t = -radius; t <= radius; ++t) {
                        int sy = horizontal ? yy : reflect(yy + t, x.h);
                        int sx = horizontal ? reflect(xx + t, x.w) : xx;
                        s += k[t + radius] * x.at(c, sy, sx);
                    }
                    y.at(c, yy, xx) = s;
                }
        return y;
    }

    // Adjoint of convolve_axis under reflect padding.
    static Tensor scatter_axis(const Tensor& g, const std::vector<float>& k, bool horizontal) {
        const int radius = static_cast<int>(k.size()) / 2;
        Tensor out(g.c, g.h, g.w);
        for (int c = 0; c < g.c; ++c)
            for (int yy = 0; yy < g.h; ++yy)
                for (int xx = 0; xx < g.w; ++xx) {
                    const float gv = g.at(c, yy, xx);
                    for (int t = -radius; t <= radius; ++t) {
                        int sy = horizontal ? yy : reflect(yy + t, g.h);
                        int sx = horizontal ? reflect(xx + t, g.w) : xx;
                        out.at(c, sy, sx) += k[t + radius] * gv;
                    }
                }
        return out;
    }
};

inline Tensor gauss_branch(const Tensor& img, double sigma) {
    return GaussBlur::forward(img, sigma);
}

// ---------------------------------------------------------------------------
// Per-sample uniform routing over the enabled branches.

enum class NoiseBranch { jpeg, gauss };

inline NoiseBranch route_branch(const NoiseConfig& cfg, uint64_t seed, size_t sample_index) {
    if (!cfg.any_enabled()) throw std::invalid_argument("noise layer: no branches enabled");
    if (cfg.jpeg_enabled && !cfg.gauss_enabled) return NoiseBranch::jpeg;
    if (cfg.gauss_enabled && !cfg.jpeg_enabled) return NoiseBranch::gauss;
    Rng r(seed ^ (0xa5a5a5a5ULL + sample_index * 0x9e3779b97f4a7c15ULL));
    return r.coin() ? NoiseBranch::jpeg : NoiseBranch::gauss;
}

struct NoiseCtx {
    NoiseBranch branch = NoiseBranch::jpeg;
    DiffJpeg::Ctx jpeg;
    GaussBlur::Ctx gauss;
};

class NoiseLayer {
  public:
    explicit NoiseLayer(NoiseConfig cfg) : cfg_(cfg) {
        if (!cfg.any_enabled())
            throw std::invalid_argument("noise layer: at least one branch must be enabled");
    }

    const NoiseConfig& config() const { return cfg_; }

    Tensor forward(const Tensor& x, uint64_t seed, size_t sample_index, NoiseCtx* ctx) const {
        NoiseBranch b = route_branch(cfg_, seed, sample_index);
        if (ctx) ctx->branch = b;
        if (b == NoiseBranch::jpeg)
            return DiffJpeg::forward(x, cfg_.jpeg_qf, ctx ? &ctx->jpeg : nullptr);
        return GaussBlur::forward(x, cfg_.effective_sigma(), ctx ? &ctx->gauss : nullptr);
    }

    Tensor backward(const Tensor& gy, const NoiseCtx& ctx) const {
        if (ctx.branch == NoiseBranch::jpeg) return DiffJpeg::backward(gy, ctx.jpeg);
        return GaussBlur::backward(gy, ctx.gauss);
    }

  private:
    NoiseConfig cfg_;
};

inline std::vector<Tensor> noise_forward(const NoiseConfig& cfg, const std::vector<Tensor>& batch,
                                         uint64_t seed) {
    NoiseLayer layer(cfg);
    std::vector<Tensor> out;
    out.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) out.push_back(layer.forward(batch[i], seed, i, nullptr));
    return out;
}

}  // namespace rrw
