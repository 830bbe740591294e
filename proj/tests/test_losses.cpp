#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rrw/losses.hpp"
#include "rrw/rng.hpp"

using namespace rrw;

namespace {

Tensor random_t(int c, int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(c, h, w);
    for (auto& v : t.data) v = float(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("l2_loss matches a loop oracle and its gradient matches finite differences") {
    Tensor a = random_t(3, 6, 6, 1), b = random_t(3, 6, 6, 2);
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i)
        acc += (double(a.data[i]) - b.data[i]) * (double(a.data[i]) - b.data[i]);
    REQUIRE(l2_loss(a, b) == Catch::Approx(acc / a.size()).margin(1e-12));
    REQUIRE(l2_loss(a, a) == 0.0);

    Tensor g = l2_grad(a, b, 3.0);
    const double eps = 1e-4;
    Rng pick(3);
    for (int t = 0; t < 10; ++t) {
        size_t i = pick.below(uint32_t(a.size()));
        Tensor ap = a, am = a;
        ap.data[i] += float(eps);
        am.data[i] -= float(eps);
        double fd = 3.0 * (l2_loss(ap, b) - l2_loss(am, b)) / (2 * eps);
        REQUIRE(g.data[i] == Catch::Approx(fd).epsilon(1e-3).margin(1e-6));
    }
}

TEST_CASE("adversarial loss equals mean log(r) + log(1-f) with score clamping") {
    Tensor r = random_t(1, 3, 3, 10, 0.05, 0.95), f = random_t(1, 3, 3, 11, 0.05, 0.95);
    double acc = 0;
    for (size_t i = 0; i < r.size(); ++i)
        acc += std::log(double(r.data[i])) + std::log(1.0 - double(f.data[i]));
    REQUIRE(adversarial_loss(r, f) == Catch::Approx(acc / r.size()).margin(1e-9));

    // saturated scores must not produce infinities
    Tensor ones(1, 2, 2, 1.0f), zeros(1, 2, 2, 0.0f);
    REQUIRE(std::isfinite(adversarial_loss(ones, ones)));
    REQUIRE(std::isfinite(adversarial_loss(zeros, zeros)));
}

TEST_CASE("adversarial gradients match finite differences") {
    Tensor r = random_t(1, 3, 3, 20, 0.1, 0.9), f = random_t(1, 3, 3, 21, 0.1, 0.9);
    Tensor gf = adversarial_grad_fake(f, 2.0);
    Tensor gr = adversarial_grad_real(r, 2.0);
    const double eps = 1e-5;
    for (size_t i = 0; i < f.size(); ++i) {
        Tensor fp = f, fm = f;
        fp.data[i] += float(eps);
        fm.data[i] -= float(eps);
        double fd = 2.0 * (adversarial_loss(r, fp) - adversarial_loss(r, fm)) / (2 * eps);
        REQUIRE(gf.data[i] == Catch::Approx(fd).epsilon(1e-2));

        Tensor rp = r, rm = r;
        rp.data[i] += float(eps);
        rm.data[i] -= float(eps);
        fd = 2.0 * (adversarial_loss(rp, f) - adversarial_loss(rm, f)) / (2 * eps);
        REQUIRE(gr.data[i] == Catch::Approx(fd).epsilon(1e-2));
    }
}

TEST_CASE("perceptual loss: zero on identity, positive otherwise, stack stays frozen") {
    PerceptualNet net(123);
    Tensor a = random_t(3, 16, 16, 30), b = random_t(3, 16, 16, 31);
    REQUIRE(net.loss(a, a) == 0.0);
    REQUIRE(net.loss(a, b) > 0.0);

    // deterministic per seed
    PerceptualNet net2(123);
    REQUIRE(net.loss(a, b) == net2.loss(a, b));

    // gradient accumulates into the caller's buffer and matches finite differences
    Tensor ga(3, 16, 16);
    net.loss(a, b, &ga, 1.0);
    Rng pick(5);
    const double eps = 1e-3;
    for (int t = 0; t < 6; ++t) {
        size_t i = pick.below(uint32_t(a.size()));
        Tensor ap = a, am = a;
        ap.data[i] += float(eps);
        am.data[i] -= float(eps);
        double fd = (net.loss(ap, b) - net.loss(am, b)) / (2 * eps);
        if (std::abs(fd) < 1e-5) continue;
        REQUIRE(ga.data[i] == Catch::Approx(fd).epsilon(0.05).margin(1e-4));
    }
}

TEST_CASE("guider losses compose g and c as documented") {
    Tensor io = random_t(3, 8, 8, 40), iw = random_t(3, 8, 8, 41);
    Tensor ig = random_t(3, 8, 8, 42), igp = random_t(3, 8, 8, 43);
    GuiderLosses gl = guider_losses(io, iw, ig, igp);
    REQUIRE(gl.g == Catch::Approx(l2_loss(ig, igp)).margin(1e-12));
    REQUIRE(gl.c == Catch::Approx(l2_loss(io, ig) + l2_loss(iw, igp)).margin(1e-12));
}

TEST_CASE("loss composition matches independent weighted sums on random parts") {
    Rng rng(77);
    for (int t = 0; t < 50; ++t) {
        LossBreakdown p;
        p.l2 = rng.uniform();
        p.vgg = rng.uniform();
        p.adv = rng.uniform(-2.0, 0.0);
        p.wm = rng.uniform();
        p.nw = rng.uniform();
        p.noise = rng.uniform();
        p.g = rng.uniform();
        p.c = rng.uniform();
        LossWeights w;
        w.lambda1 = rng.uniform(0.0, 20.0);
        w.lambda2 = rng.uniform(0.0, 20.0);
        w.lambda3 = rng.uniform(0.0, 5.0);
        w.eta = rng.uniform(0.0, 4.0);

        double s1 = w.lambda1 * (p.l2 + p.vgg) + w.lambda2 * (p.wm + p.nw) + w.eta * p.adv;
        REQUIRE(stage1_loss(p, w) == s1);
        REQUIRE(stage1_loss_noisy(p, w) == s1 + w.lambda2 * p.noise);
        REQUIRE(stage2_loss(p, w, false) == s1 + w.lambda3 * (p.g + p.c));
        REQUIRE(stage2_loss(p, w, true) == s1 + w.lambda2 * p.noise + w.lambda3 * (p.g + p.c));
    }
}

TEST_CASE("worked composition example evaluates to 42") {
    LossBreakdown p;
    p.l2 = p.vgg = p.wm = p.nw = 1.0;
    p.adv = 1.0;
    LossWeights w;
    w.lambda1 = 10.0;
    w.lambda2 = 10.0;
    w.eta = 2.0;
    REQUIRE(stage1_loss(p, w) == 42.0);
}

TEST_CASE("default weights are (10, 10, 1) with eta = 2") {
    LossWeights w;
    REQUIRE(w.lambda1 == 10.0);
    REQUIRE(w.lambda2 == 10.0);
    REQUIRE(w.lambda3 == 1.0);
    REQUIRE(w.eta == 2.0);
}
