#pragma once

#include <cmath>
#include <stdexcept>

#include "rrw/nn.hpp"
#include "rrw/tensor.hpp"

namespace rrw {

// Every loss term of the two training stages plus the composites.
struct LossBreakdown {
    double l2 = 0, vgg = 0, adv = 0, wm = 0, nw = 0, noise = 0, g = 0, c = 0;
    double L_wm = 0, L_G = 0, L_C = 0;
};

struct LossWeights {
    double lambda1 = 10.0;
    double lambda2 = 10.0;
    double lambda3 = 1.0;
    double eta = 2.0;
};

// Mean squared error over all elements ("L2 norm" in the mean-squared sense,
// so loss magnitudes are resolution-independent).
inline double l2_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l2_loss");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// d l2_loss / d a, scaled by `weight`.
inline Tensor l2_grad(const Tensor& a, const Tensor& b, double weight = 1.0) {
    check_same_shape(a, b, "l2_grad");
    Tensor g(a.c, a.h, a.w);
    const double s = 2.0 * weight / static_cast<double>(a.size());
    for (size_t i = 0; i < a.size(); ++i)
        g.data[i] = static_cast<float>(s * (static_cast<double>(a.data[i]) - b.data[i]));
    return g;
}

inline double watermark_loss(const Tensor& wm, const Tensor& raw) { return l2_loss(wm, raw); }

// Extraction from a watermark-free image is compared against the blank plane.
inline double nonwatermark_loss(const Tensor& raw_from_cover, const Tensor& blank) {
    return l2_loss(raw_from_cover, blank);
}

// ---------------------------------------------------------------------------
// Adversarial loss: mean over patches of log(D(I_o)) + log(1 - D(I_w)).
// Scores are clamped away from {0,1} before the logs.

inline constexpr double kScoreEps = 0.05;

inline double adversarial_loss(const Tensor& d_real, const Tensor& d_fake) {
    check_same_shape(d_real, d_fake, "adversarial_loss");
    double acc = 0.0;
    for (size_t i = 0; i < d_real.size(); ++i) {
        double r = std::clamp(static_cast<double>(d_real.data[i]), kScoreEps, 1.0 - kScoreEps);
        double f = std::clamp(static_cast<double>(d_fake.data[i]), kScoreEps, 1.0 - kScoreEps);
        acc += std::log(r) + std::log(1.0 - f);
    }
    return acc / static_cast<double>(d_real.size());
}

// Gradient of adversarial_loss w.r.t. the fake scores (the only path that
// reaches the embedding nets; the real-score term is constant for them).
inline Tensor adversarial_grad_fake(const Tensor& d_fake, double weight = 1.0) {
    Tensor g(d_fake.c, d_fake.h, d_fake.w);
    const double n = static_cast<double>(d_fake.size());
    for (size_t i = 0; i < d_fake.size(); ++i) {
        double f = static_cast<double>(d_fake.data[i]);
        // true subgradient of the clamped loss: zero once the score leaves the
        // clamp window, so a frozen discriminator cannot be exploited without
        // bound
        g.data[i] = (f > 1.0 - kScoreEps || f < kScoreEps)
                        ? 0.0f
                        : static_cast<float>(-weight / ((1.0 - f) * n));
    }
    return g;
}

inline Tensor adversarial_grad_real(const Tensor& d_real, double weight = 1.0) {
    Tensor g(d_real.c, d_real.h, d_real.w);
    const double n = static_cast<double>(d_real.size());
    for (size_t i = 0; i < d_real.size(); ++i) {
        double r = static_cast<double>(d_real.data[i]);
        g.data[i] = (r > 1.0 - kScoreEps || r < kScoreEps)
                        ? 0.0f
                        : static_cast<float>(weight / (r * n));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Perceptual loss. The default backend is a fixed, seeded stack of random
// convolutions; pretrained classifier features can be substituted when a
// weights file is available, but the toolkit must train fully offline.

class PerceptualNet {
  public:
    explicit PerceptualNet(uint64_t seed = 0x9e94fecabULL) {
        Rng init(seed);
        net_.add(std::make_unique<nn::Conv2d>("P.c0", 3, 8, 3, 2, 1, init.fork(1)));
        net_.add(std::make_unique<nn::LeakyReLU>(0.0f));
        net_.add(std::make_unique<nn::Conv2d>("P.c1", 8, 16, 3, 2, 1, init.fork(2)));
        net_.add(std::make_unique<nn::LeakyReLU>(0.0f));
        net_.add(std::make_unique<nn::Conv2d>("P.c2", 16, 32, 3, 2, 1, init.fork(3)));
    }

    Tensor features(const Tensor& x) const {
        nn::Sequential::PassCtx ctx;
        return net_.forward(x, ctx);
    }

    // Returns the loss; optionally accumulates d loss / d a into *ga
    // (scaled by weight). The stack itself stays frozen.
    double loss(const Tensor& a, const Tensor& b, Tensor* ga = nullptr,
                double weight = 1.0) const {
        check_same_shape(a, b, "perceptual_loss");
        nn::Sequential::PassCtx ca, cb;
        Tensor fa = net_.forward(a, ca);
        Tensor fb = net_.forward(b, cb);
        double v = l2_loss(fa, fb);
        if (ga) {
            Tensor gf = l2_grad(fa, fb, weight);
            Tensor gx = net_.backward(std::move(gf), ca);
            *ga += gx;
            // discard gradients accumulated into the frozen stack
            std::vector<nn::Param*> ps;
            net_.collect_params(ps);
            for (nn::Param* p : ps) p->zero_grad();
        }
        return v;
    }

  private:
    mutable nn::Sequential net_;
};

inline double perceptual_loss(const Tensor& a, const Tensor& b, const PerceptualNet& net) {
    return net.loss(a, b);
}

// ---------------------------------------------------------------------------
// Guider losses: g compares the two guiding outputs, c ties them to the
// images they were derived from. L_G = g + c.

struct GuiderLosses {
    double g = 0, c = 0;
};

inline GuiderLosses guider_losses(const Tensor& I_o, const Tensor& I_w, const Tensor& I_g,
                                  const Tensor& I_g_prime) {
    check_same_shape(I_o, I_g, "guider_losses");
    check_same_shape(I_w, I_g_prime, "guider_losses");
    GuiderLosses out;
    out.g = l2_loss(I_g, I_g_prime);
    out.c = l2_loss(I_o, I_g) + l2_loss(I_w, I_g_prime);
    return out;
}

// ---------------------------------------------------------------------------
// Composites.

inline double stage1_loss(const LossBreakdown& p, const LossWeights& w) {
    return w.lambda1 * (p.l2 + p.vgg) + w.lambda2 * (p.wm + p.nw) + w.eta * p.adv;
}

inline double stage1_loss_noisy(const LossBreakdown& p, const LossWeights& w) {
    return stage1_loss(p, w) + w.lambda2 * p.noise;
}

inline double stage2_loss(const LossBreakdown& p, const LossWeights& w,
                          bool noise_enabled = false) {
    double l_wm = noise_enabled ? stage1_loss_noisy(p, w) : stage1_loss(p, w);
    return l_wm + w.lambda3 * (p.g + p.c);
}

}  // namespace rrw
