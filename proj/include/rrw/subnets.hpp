#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrw/image.hpp"
#include "rrw/nn.hpp"
#include "rrw/rng.hpp"

namespace rrw {

enum class Role { H, E, D, G };

inline char role_tag(Role r) {
    switch (r) {
        case Role::H: return 'H';
        case Role::E: return 'E';
        case Role::D: return 'D';
        case Role::G: return 'G';
    }
    return '?';
}

struct SubnetConfig {
    int base_width = 64;   // channels at the finest level
    int width_cap = 512;   // widths double per level up to this cap
    int enet_blocks = 9;   // residual blocks in the extractor trunk
    int enet_width = 64;
    // Pre-sigmoid gain on the guiding net's head. Values > 1 push the output
    // toward saturation, where float32 sigmoid is exactly 0.0/1.0 and locally
    // constant - saturated pixels of the guiding abstraction are then bitwise
    // identical for the cover and the watermarked image, which is the
    // property exact recovery rests on.
    float guide_gain = 1.0f;
    // When > 0, the guiding net sees its input with per-channel means of
    // aligned BxB blocks removed. The embedding residual concentrates in the
    // block-mean subspace (that is where a noise-robust mark lives), so
    // removing it makes the guiding abstraction nearly blind to the mark:
    // the consistency the recovery path needs then holds by structure rather
    // than by asymptotic convergence. Content detail (everything except
    // local DC) still reaches the net.
    int guide_highpass_block = 0;
};

// Common forward/backward surface. Parameters are mutated only by training;
// concurrent read-only forward passes are safe.
class Subnet {
  public:
    virtual ~Subnet() = default;

    virtual Role role() const = 0;
    virtual int depth() const = 0;

    struct PassCtx {
        virtual ~PassCtx() = default;
    };
    using PassCtxPtr = std::unique_ptr<PassCtx>;

    virtual Tensor forward(const Tensor& x, PassCtxPtr& ctx) const = 0;
    virtual Tensor backward(const Tensor& gy, const PassCtx& ctx) = 0;

    // Inference-mode call; the throwaway context is dropped.
    Tensor forward(const Tensor& x) const {
        PassCtxPtr ctx;
        return forward(x, ctx);
    }

    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> out;
        collect_params(out);
        return out;
    }

    size_t param_count() {
        size_t n = 0;
        for (const nn::Param* p : params()) n += p->w.size();
        return n;
    }

    virtual void collect_params(std::vector<nn::Param*>& out) = 0;
};

// ---------------------------------------------------------------------------
// UNet encoder-decoder with skip connections; used for Hnet (4-in) and
// Gnet (3-in). depth = number of resolution levels; the input must be
// divisible by 2^(depth-1).

class UNet : public Subnet {
  public:
    UNet(Role role, int depth, int in_c, int out_c, const SubnetConfig& cfg, Rng init)
        : role_(role), depth_(depth), out_c_(out_c) {
        if (depth < 3) throw std::invalid_argument("UNet: unsupported depth (< 3)");
        widths_.resize(depth);
        for (int i = 0; i < depth; ++i)
            widths_[i] = std::min(cfg.base_width << i, cfg.width_cap);

        std::string tag(1, role_tag(role));
        stem_.add(std::make_unique<nn::Conv2d>(tag + ".stem", in_c, widths_[0], 3, 1, 1,
                                               init.fork(1)));
        stem_.add(std::make_unique<nn::LeakyReLU>());

        for (int i = 1; i < depth; ++i) {
            nn::Sequential blk;
            std::string nm = tag + ".down" + std::to_string(i);
            blk.add(std::make_unique<nn::Conv2d>(nm, widths_[i - 1], widths_[i], 3, 2, 1,
                                                 init.fork(100 + i)));
            if (i + 1 < depth)  // innermost level runs without normalization
                blk.add(std::make_unique<nn::InstanceNorm>(nm + ".norm", widths_[i]));
            blk.add(std::make_unique<nn::LeakyReLU>());
            down_.push_back(std::move(blk));
        }

        for (int i = depth - 1; i >= 1; --i) {
            nn::Sequential ups;
            ups.add(std::make_unique<nn::Upsample2x>());
            ups_.push_back(std::move(ups));
            nn::Sequential blk;
            std::string nm = tag + ".up" + std::to_string(i);
            // input = upsampled deep features concatenated with the skip
            blk.add(std::make_unique<nn::Conv2d>(nm, widths_[i] + widths_[i - 1], widths_[i - 1], 3,
                                                 1, 1, init.fork(200 + i)));
            blk.add(std::make_unique<nn::InstanceNorm>(nm + ".norm", widths_[i - 1]));
            blk.add(std::make_unique<nn::LeakyReLU>());
            up_.push_back(std::move(blk));
        }

        head_.add(std::make_unique<nn::Conv2d>(tag + ".head", widths_[0], out_c, 3, 1, 1,
                                               init.fork(300)));
        // The embedder carries a global identity skip: the input image's
        // logit is added to the head's pre-activation, so the net starts
        // near the identity map and only has to learn the mark perturbation.
        // The guiding net deliberately omits it - its training objective is
        // insensitivity to the embedding residual, which a pass-through skip
        // would fight.
        identity_skip_ = (role == Role::H);
        head_gain_ = (role == Role::G) ? cfg.guide_gain : 1.0f;
        hp_block_ = (role == Role::G) ? cfg.guide_highpass_block : 0;
    }

    Role role() const override { return role_; }
    int depth() const override { return depth_; }

    Tensor forward(const Tensor& x, PassCtxPtr& ctx) const override {
        if ((x.h % (1 << (depth_ - 1))) != 0 || (x.w % (1 << (depth_ - 1))) != 0)
            throw std::invalid_argument("UNet: input not divisible by downsampling factor");
        auto c = std::make_unique<UNetCtx>();
        c->skips.resize(depth_ - 1);
        c->down_ctx.resize(down_.size());
        c->ups_ctx.resize(ups_.size());
        c->up_ctx.resize(up_.size());

        Tensor h;
        if (hp_block_ > 0) {
            Tensor xin = x;
            block_highpass(xin, hp_block_);
            h = stem_.forward(std::move(xin), c->stem_ctx);
        } else {
            h = stem_.forward(x, c->stem_ctx);
        }
        for (size_t i = 0; i < down_.size(); ++i) {
            c->skips[i] = h;
            h = down_[i].forward(std::move(h), c->down_ctx[i]);
        }
        for (size_t i = 0; i < up_.size(); ++i) {
            // skip index: up_[0] pairs with the deepest stored skip
            const Tensor& skip = c->skips[up_.size() - 1 - i];
            h = ups_[i].forward(std::move(h), c->ups_ctx[i]);
            c->up_in_deep_c.push_back(h.c);
            h = up_[i].forward(concat_channels(h, skip), c->up_ctx[i]);
        }
        Tensor z = head_.forward(std::move(h), c->head_ctx);
        if (head_gain_ != 1.0f)
            for (float& v : z.data) v *= head_gain_;
        if (identity_skip_) {
            c->x_img = slice_channels(x, 0, out_c_);
            for (size_t j = 0; j < z.data.size(); ++j) {
                float v = std::clamp(c->x_img.data[j], kSkipEps, 1.0f - kSkipEps);
                z.data[j] += std::log(v / (1.0f - v));
            }
        }
        for (float& v : z.data) v = 1.0f / (1.0f + std::exp(-v));
        c->y = z;
        ctx = std::move(c);
        return z;
    }

    Tensor backward(const Tensor& gy, const PassCtx& ctx) override {
        const auto& c = static_cast<const UNetCtx&>(ctx);
        Tensor gpre = gy;
        for (size_t j = 0; j < gpre.data.size(); ++j) {
            float y = c.y.data[j];
            gpre.data[j] *= y * (1.0f - y);
        }
        Tensor ghead = gpre;
        if (head_gain_ != 1.0f)
            for (float& v : ghead.data) v *= head_gain_;
        Tensor g = head_.backward(ghead, c.head_ctx);
        std::vector<Tensor> skip_grads(c.skips.size());
        for (size_t i = up_.size(); i-- > 0;) {
            Tensor gcat = up_[i].backward(std::move(g), c.up_ctx[i]);
            int deep_c = c.up_in_deep_c[i];
            g = ups_[i].backward(slice_channels(gcat, 0, deep_c), c.ups_ctx[i]);
            skip_grads[up_.size() - 1 - i] = slice_channels(gcat, deep_c, gcat.c - deep_c);
        }
        for (size_t i = down_.size(); i-- > 0;) {
            g = down_[i].backward(std::move(g), c.down_ctx[i]);
            g += skip_grads[i];
        }
        Tensor gx = stem_.backward(std::move(g), c.stem_ctx);
        if (hp_block_ > 0) block_highpass(gx, hp_block_);  // projection is symmetric
        if (identity_skip_) {
            // d logit(v) / dv = 1 / (v (1 - v)) inside the clamp, 0 outside.
            for (size_t j = 0; j < c.x_img.data.size(); ++j) {
                float raw = c.x_img.data[j];
                if (raw <= kSkipEps || raw >= 1.0f - kSkipEps) continue;
                gx.data[j] += gpre.data[j] / (raw * (1.0f - raw));
            }
        }
        return gx;
    }

    void collect_params(std::vector<nn::Param*>& out) override {
        stem_.collect_params(out);
        for (auto& b : down_) b.collect_params(out);
        for (auto& b : up_) b.collect_params(out);
        head_.collect_params(out);
    }

  private:
    struct UNetCtx : PassCtx {
        nn::Sequential::PassCtx stem_ctx, head_ctx;
        std::vector<nn::Sequential::PassCtx> down_ctx, ups_ctx, up_ctx;
        std::vector<Tensor> skips;
        mutable std::vector<int> up_in_deep_c;
        Tensor x_img, y;
    };

    static constexpr float kSkipEps = 1e-3f;

    // Remove per-channel means of aligned BxB blocks (orthogonal projection,
    // hence its own adjoint for the backward pass).
    static void block_highpass(Tensor& t, int B) {
        for (int ch = 0; ch < t.c; ++ch)
            for (int by = 0; by < t.h; by += B)
                for (int bx = 0; bx < t.w; bx += B) {
                    int ye = std::min(by + B, t.h), xe = std::min(bx + B, t.w);
                    double sum = 0;
                    for (int y = by; y < ye; ++y)
                        for (int x = bx; x < xe; ++x) sum += t.at(ch, y, x);
                    float m = static_cast<float>(sum / ((ye - by) * (xe - bx)));
                    for (int y = by; y < ye; ++y)
                        for (int x = bx; x < xe; ++x) t.at(ch, y, x) -= m;
                }
    }

    Role role_;
    int depth_;
    int out_c_ = 0;
    bool identity_skip_ = false;
    float head_gain_ = 1.0f;
    int hp_block_ = 0;
    std::vector<int> widths_;
    nn::Sequential stem_, head_;
    std::vector<nn::Sequential> down_, ups_, up_;
};

// ---------------------------------------------------------------------------
// Residual image-to-image extractor (CEILNet-style): strided stem, residual
// trunk at 1/4 resolution, mirrored decoder, 1-channel sigmoid head.

class Extractor : public Subnet {
  public:
    Extractor(int blocks, int width, Rng init) : blocks_(blocks) {
        if (blocks < 1) throw std::invalid_argument("Extractor: needs >= 1 residual block");
        stem_.add(std::make_unique<nn::Conv2d>("E.stem", 3, width, 3, 1, 1, init.fork(1)));
        stem_.add(std::make_unique<nn::InstanceNorm>("E.stem.norm", width));
        stem_.add(std::make_unique<nn::LeakyReLU>());
        stem_.add(std::make_unique<nn::Conv2d>("E.down1", width, width, 3, 2, 1, init.fork(2)));
        stem_.add(std::make_unique<nn::InstanceNorm>("E.down1.norm", width));
        stem_.add(std::make_unique<nn::LeakyReLU>());
        stem_.add(std::make_unique<nn::Conv2d>("E.down2", width, width, 3, 2, 1, init.fork(3)));
        stem_.add(std::make_unique<nn::InstanceNorm>("E.down2.norm", width));
        stem_.add(std::make_unique<nn::LeakyReLU>());

        for (int b = 0; b < blocks; ++b) {
            nn::Sequential blk;
            std::string nm = "E.res" + std::to_string(b);
            blk.add(std::make_unique<nn::Conv2d>(nm + ".c1", width, width, 3, 1, 1,
                                                 init.fork(100 + b * 2)));
            blk.add(std::make_unique<nn::InstanceNorm>(nm + ".n1", width));
            blk.add(std::make_unique<nn::LeakyReLU>());
            blk.add(std::make_unique<nn::Conv2d>(nm + ".c2", width, width, 3, 1, 1,
                                                 init.fork(101 + b * 2)));
            blk.add(std::make_unique<nn::InstanceNorm>(nm + ".n2", width));
            trunk_.push_back(std::move(blk));
        }

        head_.add(std::make_unique<nn::Upsample2x>());
        head_.add(std::make_unique<nn::Conv2d>("E.up1", width, width, 3, 1, 1, init.fork(300)));
        head_.add(std::make_unique<nn::InstanceNorm>("E.up1.norm", width));
        head_.add(std::make_unique<nn::LeakyReLU>());
        head_.add(std::make_unique<nn::Upsample2x>());
        head_.add(std::make_unique<nn::Conv2d>("E.up2", width, width, 3, 1, 1, init.fork(301)));
        head_.add(std::make_unique<nn::InstanceNorm>("E.up2.norm", width));
        head_.add(std::make_unique<nn::LeakyReLU>());
        head_.add(std::make_unique<nn::Conv2d>("E.head", width, 1, 3, 1, 1, init.fork(302)));
        head_.add(std::make_unique<nn::Sigmoid>());
    }

    Role role() const override { return Role::E; }
    int depth() const override { return blocks_; }

    Tensor forward(const Tensor& x, PassCtxPtr& ctx) const override {
        if (x.c != 3) throw std::invalid_argument("Extractor: expects 3-channel input");
        auto c = std::make_unique<ECtx>();
        c->trunk_ctx.resize(trunk_.size());
        Tensor h = stem_.forward(x, c->stem_ctx);
        for (size_t i = 0; i < trunk_.size(); ++i) {
            Tensor r = trunk_[i].forward(h, c->trunk_ctx[i]);
            h += r;  // residual connection
            // post-add activation
            c->relu_mask.emplace_back(h.size());
            for (size_t j = 0; j < h.size(); ++j) {
                bool pos = h.data[j] > 0.0f;
                c->relu_mask.back()[j] = pos;
                if (!pos) h.data[j] *= 0.2f;
            }
        }
        Tensor y = head_.forward(std::move(h), c->head_ctx);
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const PassCtx& ctx) override {
        const auto& c = static_cast<const ECtx&>(ctx);
        Tensor g = head_.backward(gy, c.head_ctx);
        for (size_t i = trunk_.size(); i-- > 0;) {
            for (size_t j = 0; j < g.size(); ++j)
                if (!c.relu_mask[i][j]) g.data[j] *= 0.2f;
            Tensor gr = trunk_[i].backward(g, c.trunk_ctx[i]);
            g += gr;
        }
        return stem_.backward(std::move(g), c.stem_ctx);
    }

    void collect_params(std::vector<nn::Param*>& out) override {
        stem_.collect_params(out);
        for (auto& b : trunk_) b.collect_params(out);
        head_.collect_params(out);
    }

  private:
    struct ECtx : PassCtx {
        nn::Sequential::PassCtx stem_ctx, head_ctx;
        std::vector<nn::Sequential::PassCtx> trunk_ctx;
        std::vector<std::vector<uint8_t>> relu_mask;
    };

    int blocks_;
    nn::Sequential stem_, head_;
    std::vector<nn::Sequential> trunk_;
};

// Patch-wise realness scores in (0,1); grid size follows from the strided
// 4x4 convolution stack (a 64x64 input yields a 6x6 patch grid).
using PatchLogits = Tensor;

// ---------------------------------------------------------------------------
// Patch discriminator: 4x4 convolutions, three stride-2 stages, sigmoid head.

class PatchDiscriminator : public Subnet {
  public:
    PatchDiscriminator(int layers, const SubnetConfig& cfg, Rng init) : layers_(layers) {
        if (layers < 3) throw std::invalid_argument("PatchDiscriminator: unsupported depth (< 3)");
        int w = cfg.base_width;
        net_.add(std::make_unique<nn::Conv2d>("D.c0", 3, w, 4, 2, 1, init.fork(1)));
        net_.add(std::make_unique<nn::LeakyReLU>());
        int in = w;
        for (int i = 1; i < layers; ++i) {
            int out = std::min(in * 2, cfg.width_cap);
            int stride = i < 3 ? 2 : 1;
            std::string nm = "D.c" + std::to_string(i);
            net_.add(std::make_unique<nn::Conv2d>(nm, in, out, 4, stride, 1, init.fork(10 + i)));
            net_.add(std::make_unique<nn::InstanceNorm>(nm + ".norm", out));
            net_.add(std::make_unique<nn::LeakyReLU>());
            in = out;
        }
        net_.add(std::make_unique<nn::Conv2d>("D.head", in, 1, 4, 1, 1, init.fork(99)));
        net_.add(std::make_unique<nn::Sigmoid>());
    }

    Role role() const override { return Role::D; }
    int depth() const override { return layers_; }

    Tensor forward(const Tensor& x, PassCtxPtr& ctx) const override {
        auto c = std::make_unique<DCtx>();
        Tensor y = net_.forward(x, c->seq);
        ctx = std::move(c);
        return y;
    }

    Tensor backward(const Tensor& gy, const PassCtx& ctx) override {
        return net_.backward(gy, static_cast<const DCtx&>(ctx).seq);
    }

    void collect_params(std::vector<nn::Param*>& out) override { net_.collect_params(out); }

  private:
    struct DCtx : PassCtx {
        nn::Sequential::PassCtx seq;
    };
    int layers_;
    nn::Sequential net_;
};

// ---------------------------------------------------------------------------

inline std::unique_ptr<Subnet> build_subnet(Role role, int depth, uint64_t seed,
                                            const SubnetConfig& cfg = {}) {
    // `depth` means residual-block count for the extractor, which accepts >= 1;
    // the UNet/discriminator constructors enforce their own >= 3 floor.
    Rng init(seed ^ (static_cast<uint64_t>(role_tag(role)) << 56));
    switch (role) {
        case Role::H: return std::make_unique<UNet>(Role::H, depth, 4, 3, cfg, init);
        case Role::G: return std::make_unique<UNet>(Role::G, depth, 3, 3, cfg, init);
        case Role::E: return std::make_unique<Extractor>(depth, cfg.enet_width, init);
        case Role::D: return std::make_unique<PatchDiscriminator>(depth, cfg, init);
    }
    throw std::invalid_argument("build_subnet: unknown role");
}

// Spec-level forward wrappers -----------------------------------------------

inline ImageTensor hnet_forward(const Subnet& hnet, const ImageTensor& img,
                                const WatermarkImage& wm) {
    return hnet.forward(concat_cover_watermark(img, wm));
}

inline Tensor enet_forward(const Subnet& enet, const ImageTensor& img) {
    return enet.forward(img);
}

inline PatchLogits dnet_forward(const Subnet& dnet, const ImageTensor& img) {
    return dnet.forward(img);
}

inline ImageTensor gnet_forward(const Subnet& gnet, const ImageTensor& img) {
    return gnet.forward(img);
}

}  // namespace rrw
