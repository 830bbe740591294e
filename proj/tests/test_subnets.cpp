#include <catch2/catch_amalgamated.hpp>

#include "rrw/rng.hpp"
#include "rrw/subnets.hpp"

using namespace rrw;

namespace {

SubnetConfig tiny() {
    SubnetConfig cfg;
    cfg.base_width = 4;
    cfg.width_cap = 8;
    cfg.enet_blocks = 1;
    cfg.enet_width = 4;
    return cfg;
}

Tensor random_image(int c, int h, int w, uint64_t seed) {
    Rng rng(seed);
    Tensor t(c, h, w);
    for (auto& v : t.data) v = float(rng.uniform());
    return t;
}

// central finite difference on one parameter coordinate
double fd_param(Subnet& net, nn::Param* p, size_t i, const Tensor& x, double eps = 1e-3) {
    auto loss = [&] {
        Tensor y = net.forward(x);
        double s = 0;
        for (size_t k = 0; k < y.size(); ++k) s += 0.5 * y.data[k] * y.data[k];
        return s;
    };
    float save = p->w[i];
    p->w[i] = float(save + eps);
    double up = loss();
    p->w[i] = float(save - eps);
    double dn = loss();
    p->w[i] = save;
    return (up - dn) / (2 * eps);
}

}  // namespace

TEST_CASE("factory builds each role with the right input/output shapes") {
    SubnetConfig cfg = tiny();
    auto h = build_subnet(Role::H, 3, 1, cfg);
    auto g = build_subnet(Role::G, 3, 1, cfg);
    auto e = build_subnet(Role::E, 1, 1, cfg);
    auto d = build_subnet(Role::D, 3, 1, cfg);

    Tensor img = random_image(3, 16, 16, 10);
    WatermarkImage wm(16, 16, 1);

    Tensor iw = hnet_forward(*h, img, wm);
    REQUIRE(iw.c == 3);
    REQUIRE(iw.h == 16);
    Tensor ig = gnet_forward(*g, img);
    REQUIRE(ig.c == 3);
    Tensor raw = enet_forward(*e, img);
    REQUIRE(raw.c == 1);
    REQUIRE(raw.h == 16);
    Tensor logits = dnet_forward(*d, img);
    REQUIRE(logits.c == 1);
    REQUIRE(logits.h < img.h);

    for (const Tensor* t : {&iw, &ig, &raw, &logits})
        for (float v : t->data) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
}

TEST_CASE("discriminator with 4 layers maps 64x64 to a 6x6 patch grid") {
    auto d = build_subnet(Role::D, 4, 1, tiny());
    Tensor logits = dnet_forward(*d, random_image(3, 64, 64, 3));
    REQUIRE(logits.h == 6);
    REQUIRE(logits.w == 6);
}

TEST_CASE("unsupported depth and non-divisible input are rejected") {
    REQUIRE_THROWS_WITH(build_subnet(Role::H, 2, 1, tiny()),
                        Catch::Matchers::ContainsSubstring("unsupported depth"));
    auto g = build_subnet(Role::G, 4, 1, tiny());  // needs divisibility by 8
    REQUIRE_THROWS_AS(gnet_forward(*g, random_image(3, 20, 20, 4)), std::invalid_argument);
}

TEST_CASE("initialization is deterministic per seed and distinct per role") {
    auto a = build_subnet(Role::G, 3, 42, tiny());
    auto b = build_subnet(Role::G, 3, 42, tiny());
    auto pa = a->params(), pb = b->params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->w == pb[i]->w);

    auto c = build_subnet(Role::G, 3, 43, tiny());
    bool any_diff = false;
    auto pc = c->params();
    for (size_t i = 0; i < pa.size() && !any_diff; ++i) any_diff = pa[i]->w != pc[i]->w;
    REQUIRE(any_diff);
}

TEST_CASE("deeper UNet has more parameters and all params are named") {
    auto d3 = build_subnet(Role::G, 3, 1, tiny());
    auto d4 = build_subnet(Role::G, 4, 1, tiny());
    REQUIRE(d4->param_count() > d3->param_count());
    for (auto* p : d4->params()) REQUIRE_FALSE(p->name.empty());
}

TEST_CASE("backward gradients agree with finite differences") {
    // loss = sum y^2/2 so dL/dy = y
    SubnetConfig cfg = tiny();

    for (Role role : {Role::G, Role::E, Role::D}) {
        // the discriminator's 4x4 stack needs a larger plane to stay non-empty
        Tensor x = random_image(3, role == Role::D ? 16 : 8, role == Role::D ? 16 : 8, 99);
        auto net = build_subnet(role, 3, 5, cfg);
        Subnet::PassCtxPtr ctx;
        Tensor y = net->forward(x, ctx);
        Tensor gx = net->backward(y, *ctx);
        REQUIRE(gx.same_shape(x));
        REQUIRE(gx.all_finite());

        auto params = net->params();
        Rng pick(role_tag(role));
        int checked = 0;
        for (int t = 0; t < 6; ++t) {
            nn::Param* p = params[pick.below(uint32_t(params.size()))];
            size_t i = pick.below(uint32_t(p->w.size()));
            double fd = fd_param(*net, p, i, x);
            double an = p->g[i];
            if (std::abs(fd) < 1e-4 && std::abs(an) < 1e-4) continue;  // too flat to compare
            REQUIRE(an == Catch::Approx(fd).epsilon(0.08).margin(2e-3));
            ++checked;
        }
        REQUIRE(checked >= 2);
    }
}

TEST_CASE("input gradient agrees with finite differences") {
    auto net = build_subnet(Role::G, 3, 11, tiny());
    Tensor x = random_image(3, 8, 8, 123);
    Subnet::PassCtxPtr ctx;
    Tensor y = net->forward(x, ctx);
    Tensor gx = net->backward(y, *ctx);

    auto loss = [&](const Tensor& in) {
        Tensor out = net->forward(in);
        double s = 0;
        for (float v : out.data) s += 0.5 * double(v) * v;
        return s;
    };
    Rng pick(3);
    const double eps = 1e-3;
    for (int t = 0; t < 8; ++t) {
        size_t i = pick.below(uint32_t(x.size()));
        Tensor xp = x, xm = x;
        xp.data[i] += float(eps);
        xm.data[i] -= float(eps);
        double fd = (loss(xp) - loss(xm)) / (2 * eps);
        if (std::abs(fd) < 1e-4 && std::abs(gx.data[i]) < 1e-4) continue;
        REQUIRE(gx.data[i] == Catch::Approx(fd).epsilon(0.08).margin(2e-3));
    }
}

TEST_CASE("extractor block count scales the trunk") {
    SubnetConfig one = tiny(), three = tiny();
    three.enet_blocks = 3;
    auto e1 = build_subnet(Role::E, 1, 1, one);
    auto e3 = build_subnet(Role::E, 3, 1, three);
    REQUIRE(e3->param_count() > e1->param_count());
}
