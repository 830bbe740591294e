#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rrw/rng.hpp"
#include "rrw/tensor.hpp"

namespace rrw::nn {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using CMapRM = Eigen::Map<const MatrixRM>;

struct Param {
    std::string name;
    FloatVec w;
    FloatVec g;

    explicit Param(std::string n, size_t size) : name(std::move(n)), w(size, 0.0f), g(size, 0.0f) {}
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }
};

struct Ctx {
    virtual ~Ctx() = default;
};
using CtxPtr = std::unique_ptr<Ctx>;

class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, CtxPtr& ctx) = 0;
    // Accumulates parameter gradients and returns the input gradient.
    virtual Tensor backward(const Tensor& gy, const Ctx& ctx) = 0;
    virtual void collect_params(std::vector<Param*>& out) {}
};

// ---------------------------------------------------------------------------
// Convolution (zero padding), im2col + GEMM.

class Conv2d : public Layer {
  public:
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad, Rng init)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
          weight_(name + ".weight", static_cast<size_t>(out_c) * in_c * k * k),
          bias_(name + ".bias", static_cast<size_t>(out_c)) {
        // He-style init for leaky-type activations
        double fan_in = static_cast<double>(in_c) * k * k;
        double std = std::sqrt(2.0 / fan_in);
        for (float& v : weight_.w) v = static_cast<float>(init.normal() * std);
    }

    Tensor forward(const Tensor& x, CtxPtr& ctx) override {
        if (x.c != in_c_) throw std::invalid_argument("Conv2d: channel mismatch");
        int ho = (x.h + 2 * pad_ - k_) / stride_ + 1;
        int wo = (x.w + 2 * pad_ - k_) / stride_ + 1;
        auto c = std::make_unique<ConvCtx>();
        c->in_h = x.h;
        c->in_w = x.w;
        c->col = im2col(x, ho, wo);
        Tensor y(out_c_, ho, wo);
        const int kdim = in_c_ * k_ * k_;
        CMapRM W(weight_.w.data(), out_c_, kdim);
        CMapRM col(c->col.data(), kdim, ho * wo);
        MapRM Y(y.data.data(), out_c_, ho * wo);
        Y.noalias() = W * col;
        for (int oc = 0; oc < out_c_; ++oc) Y.row(oc).array() += bias_.w[oc];
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const Ctx& ctx) override {
        const auto& c = static_cast<const ConvCtx&>(ctx);
        const int kdim = in_c_ * k_ * k_;
        const int n = gy.h * gy.w;
        CMapRM GY(gy.data.data(), out_c_, n);
        CMapRM col(c.col.data(), kdim, n);
        MapRM GW(weight_.g.data(), out_c_, kdim);
        GW.noalias() += GY * col.transpose();
        for (int oc = 0; oc < out_c_; ++oc) bias_.g[oc] += GY.row(oc).sum();

        FloatVec gcol(static_cast<size_t>(kdim) * n);
        MapRM GCOL(gcol.data(), kdim, n);
        CMapRM W(weight_.w.data(), out_c_, kdim);
        GCOL.noalias() = W.transpose() * GY;
        return col2im(gcol, gy.h, gy.w, c.in_h, c.in_w);
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

  private:
    struct ConvCtx : Ctx {
        FloatVec col;
        int in_h = 0, in_w = 0;
    };

    FloatVec im2col(const Tensor& x, int ho, int wo) const {
        const int kdim = in_c_ * k_ * k_;
        FloatVec col(static_cast<size_t>(kdim) * ho * wo, 0.0f);
        for (int ic = 0; ic < in_c_; ++ic) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const int row = (ic * k_ + ky) * k_ + kx;
                    float* dst = col.data() + static_cast<size_t>(row) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ + ky - pad_;
                        if (iy < 0 || iy >= x.h) {
                            dst += wo;
                            continue;
                        }
                        const float* src = x.data.data() + (static_cast<size_t>(ic) * x.h + iy) * x.w;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            *dst++ = (ix >= 0 && ix < x.w) ? src[ix] : 0.0f;
                        }
                    }
                }
            }
        }
        return col;
    }

    Tensor col2im(const FloatVec& gcol, int ho, int wo, int ih, int iw) const {
        Tensor gx(in_c_, ih, iw);
        for (int ic = 0; ic < in_c_; ++ic) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const int row = (ic * k_ + ky) * k_ + kx;
                    const float* src = gcol.data() + static_cast<size_t>(row) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy, src += wo) {
                        const int iy = oy * stride_ + ky - pad_;
                        if (iy < 0 || iy >= ih) continue;
                        float* dst = gx.data.data() + (static_cast<size_t>(ic) * ih + iy) * iw;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            if (ix >= 0 && ix < iw) dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
        return gx;
    }

    int in_c_, out_c_, k_, stride_, pad_;
    Param weight_, bias_;
};

// ---------------------------------------------------------------------------
// Per-channel instance normalization with affine parameters.

class InstanceNorm : public Layer {
  public:
    InstanceNorm(std::string name, int channels)
        : c_(channels), gamma_(name + ".gamma", channels), beta_(name + ".beta", channels) {
        std::fill(gamma_.w.begin(), gamma_.w.end(), 1.0f);
    }

    Tensor forward(const Tensor& x, CtxPtr& ctx) override {
        auto c = std::make_unique<NormCtx>();
        c->xhat = Tensor(x.c, x.h, x.w);
        c->inv_std.resize(x.c);
        Tensor y(x.c, x.h, x.w);
        const int n = x.plane();
        for (int ci = 0; ci < x.c; ++ci) {
            const float* xs = x.data.data() + static_cast<size_t>(ci) * n;
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += xs[i];
            mean /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                double d = xs[i] - mean;
                var += d * d;
            }
            var /= n;
            float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
            c->inv_std[ci] = inv;
            float* xh = c->xhat.data.data() + static_cast<size_t>(ci) * n;
            float* ys = y.data.data() + static_cast<size_t>(ci) * n;
            const float g = gamma_.w[ci], b = beta_.w[ci];
            const float m = static_cast<float>(mean);
            for (int i = 0; i < n; ++i) {
                xh[i] = (xs[i] - m) * inv;
                ys[i] = g * xh[i] + b;
            }
        }
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const Ctx& ctx) override {
        const auto& c = static_cast<const NormCtx&>(ctx);
        const int n = gy.plane();
        Tensor gx(gy.c, gy.h, gy.w);
        for (int ci = 0; ci < gy.c; ++ci) {
            const float* gys = gy.data.data() + static_cast<size_t>(ci) * n;
            const float* xh = c.xhat.data.data() + static_cast<size_t>(ci) * n;
            double sum_gy = 0.0, sum_gy_xh = 0.0;
            for (int i = 0; i < n; ++i) {
                sum_gy += gys[i];
                sum_gy_xh += gys[i] * xh[i];
            }
            gamma_.g[ci] += static_cast<float>(sum_gy_xh);
            beta_.g[ci] += static_cast<float>(sum_gy);
            const float g = gamma_.w[ci];
            const float inv = c.inv_std[ci];
            const float mgy = static_cast<float>(sum_gy / n);
            const float mgyxh = static_cast<float>(sum_gy_xh / n);
            float* gxs = gx.data.data() + static_cast<size_t>(ci) * n;
            for (int i = 0; i < n; ++i)
                gxs[i] = g * inv * (gys[i] - mgy - xh[i] * mgyxh);
        }
        return gx;
    }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

  private:
    struct NormCtx : Ctx {
        Tensor xhat;
        std::vector<float> inv_std;
    };
    static constexpr double kEps = 1e-5;
    int c_;
    Param gamma_, beta_;
};

// ---------------------------------------------------------------------------
// Activations

class LeakyReLU : public Layer {
  public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}

    Tensor forward(const Tensor& x, CtxPtr& ctx) override {
        auto c = std::make_unique<MaskCtx>();
        c->mask.resize(x.size());
        Tensor y(x.c, x.h, x.w);
        for (size_t i = 0; i < x.size(); ++i) {
            bool pos = x.data[i] > 0.0f;
            c->mask[i] = pos;
            y.data[i] = pos ? x.data[i] : slope_ * x.data[i];
        }
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const Ctx& ctx) override {
        const auto& c = static_cast<const MaskCtx&>(ctx);
        Tensor gx(gy.c, gy.h, gy.w);
        for (size_t i = 0; i < gy.size(); ++i) gx.data[i] = c.mask[i] ? gy.data[i] : slope_ * gy.data[i];
        return gx;
    }

  private:
    struct MaskCtx : Ctx {
        std::vector<uint8_t> mask;
    };
    float slope_;
};

class Sigmoid : public Layer {
  public:
    Tensor forward(const Tensor& x, CtxPtr& ctx) override {
        auto c = std::make_unique<OutCtx>();
        Tensor y(x.c, x.h, x.w);
        for (size_t i = 0; i < x.size(); ++i) y.data[i] = 1.0f / (1.0f + std::exp(-x.data[i]));
        c->y = y;
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const Ctx& ctx) override {
        const auto& c = static_cast<const OutCtx&>(ctx);
        Tensor gx(gy.c, gy.h, gy.w);
        for (size_t i = 0; i < gy.size(); ++i) {
            float s = c.y.data[i];
            gx.data[i] = gy.data[i] * s * (1.0f - s);
        }
        return gx;
    }

  private:
    struct OutCtx : Ctx {
        Tensor y;
    };
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling.

class Upsample2x : public Layer {
  public:
    Tensor forward(const Tensor& x, CtxPtr& ctx) override {
        (void)ctx;
        Tensor y(x.c, x.h * 2, x.w * 2);
        for (int ci = 0; ci < x.c; ++ci)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
        return y;
    }

    Tensor backward(const Tensor& gy, const Ctx&) override {
        Tensor gx(gy.c, gy.h / 2, gy.w / 2);
        for (int ci = 0; ci < gy.c; ++ci)
            for (int yy = 0; yy < gy.h; ++yy)
                for (int xx = 0; xx < gy.w; ++xx)
                    gx.at(ci, yy / 2, xx / 2) += gy.at(ci, yy, xx);
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Small composition helper for straight-line blocks.

class Sequential {
  public:
    struct PassCtx {
        std::vector<CtxPtr> layer_ctx;
    };

    void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }

    Tensor forward(Tensor x, PassCtx& ctx) const {
        ctx.layer_ctx.clear();
        ctx.layer_ctx.resize(layers_.size());
        for (size_t i = 0; i < layers_.size(); ++i) x = layers_[i]->forward(x, ctx.layer_ctx[i]);
        return x;
    }

    Tensor backward(Tensor gy, const PassCtx& ctx) const {
        for (size_t i = layers_.size(); i-- > 0;) {
            static const struct NullCtx : Ctx {
            } kNull;
            const Ctx& c = ctx.layer_ctx[i] ? *ctx.layer_ctx[i] : static_cast<const Ctx&>(kNull);
            gy = layers_[i]->backward(gy, c);
        }
        return gy;
    }

    void collect_params(std::vector<Param*>& out) const {
        for (const auto& l : layers_) l->collect_params(out);
    }

    bool empty() const { return layers_.empty(); }

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Adam optimizer over a fixed parameter registry.

class Adam {
  public:
    explicit Adam(std::vector<Param*> params, double lr = 0.002, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Param* p : params_) {
            m_.emplace_back(p->w.size(), 0.0f);
            v_.emplace_back(p->w.size(), 0.0f);
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Param& p = *params_[pi];
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < p.w.size(); ++i) {
                const float g = p.g[i];
                m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
                v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p.w[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

  private:
    std::vector<Param*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace rrw::nn
