#include <catch2/catch_amalgamated.hpp>

#include "rrw/guider.hpp"
#include "rrw/rng.hpp"

using namespace rrw;

namespace {

// Stub pipeline whose guiding image depends only on the image size and a
// seed, never on pixel content — the residual algebra must then be exactly
// reversible regardless of the hide function.
PipelineFns stub_pipeline(uint64_t seed, float amplitude = 0.05f) {
    PipelineFns fns;
    fns.guide_net = [seed](const ImageTensor& img) {
        Rng rng(seed);
        ImageTensor g(img.c, img.h, img.w);
        for (auto& v : g.data) v = float(rng.uniform(0.3, 0.7));
        return g;
    };
    fns.hide = [seed, amplitude](const ImageTensor& img, const WatermarkImage& wm) {
        Rng rng(seed ^ 0xabcdefULL);
        ImageTensor out = img;
        for (int c = 0; c < out.c; ++c)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x) {
                    float mix = float(rng.uniform(-1.0, 1.0));
                    float bit = float(wm.bits[size_t(y) * wm.w + x]);
                    out.at(c, y, x) += amplitude * (bit * 0.7f + 0.3f) * mix;
                }
        return out;
    };
    fns.extract_raw = [](const ImageTensor& img) { return Tensor(1, img.h, img.w, 0.0f); };
    return fns;
}

QuantizedImage random_cover(int h, int w, uint64_t seed, int lo = 40, int hi = 215) {
    Rng rng(seed);
    QuantizedImage q(3, h, w);
    for (auto& v : q.data) v = int16_t(lo + rng.below(uint32_t(hi - lo + 1)));
    return q;
}

WatermarkImage random_wm(int h, int w, uint64_t seed) {
    Rng rng(seed);
    WatermarkImage wm(h, w);
    for (auto& b : wm.bits) b = rng.coin();
    return wm;
}

}  // namespace

TEST_CASE("embed then recover is bit-exact for content-independent stub guiders") {
    for (uint64_t s = 0; s < 5; ++s) {
        PipelineFns fns = stub_pipeline(1000 + s);
        for (int i = 0; i < 10; ++i) {
            QuantizedImage cover = random_cover(32, 32, s * 100 + i);
            WatermarkImage wm = random_wm(32, 32, s * 100 + i + 7);
            EmbedResult res = embed(fns, cover, wm, EmbedMode::strict);
            REQUIRE(res.saturation_count == 0);
            QuantizedImage back = recover(fns, res.watermarked, wm);
            REQUIRE(back == cover);
        }
    }
}

TEST_CASE("recovery with the wrong watermark is not bit-exact") {
    PipelineFns fns = stub_pipeline(7);
    QuantizedImage cover = random_cover(32, 32, 1);
    WatermarkImage wm = random_wm(32, 32, 2), wrong = random_wm(32, 32, 3);
    EmbedResult res = embed(fns, cover, wm);
    REQUIRE_FALSE(recover(fns, res.watermarked, wrong) == cover);
}

TEST_CASE("guiding image is identical when recomputed from the watermarked image") {
    PipelineFns fns = stub_pipeline(11);
    std::vector<QuantizedImage> covers;
    for (int i = 0; i < 8; ++i) covers.push_back(random_cover(32, 32, 50 + i));
    ConsistencyReport rep = verify_guiding_consistency(fns, covers, random_wm(32, 32, 99));
    REQUIRE(rep.rows.size() == covers.size());
    REQUIRE(rep.all_quantized_equal);
    REQUIRE(rep.max_mse <= 1e-6);
    REQUIRE(rep.passes());
}

TEST_CASE("consistency verification reports failure for content-sensitive guiders") {
    // a guider that echoes its input can never agree across embed/recover
    PipelineFns fns = stub_pipeline(13);
    fns.guide_net = [](const ImageTensor& img) { return img; };
    std::vector<QuantizedImage> covers{random_cover(32, 32, 3)};
    ConsistencyReport rep = verify_guiding_consistency(fns, covers, random_wm(32, 32, 4));
    REQUIRE_FALSE(rep.passes());
}

TEST_CASE("strict mode throws on saturation, best-effort counts it") {
    PipelineFns fns = stub_pipeline(21, /*amplitude=*/0.4f);
    QuantizedImage cover = random_cover(16, 16, 5, 0, 255);  // full range: saturation certain
    WatermarkImage wm = random_wm(16, 16, 6);

    EmbedResult res = embed(fns, cover, wm, EmbedMode::best_effort);
    REQUIRE(res.saturation_count > 0);

    REQUIRE_THROWS_MATCHES(
        embed(fns, cover, wm, EmbedMode::strict), SaturationError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("saturation would break reversibility")));
    try {
        embed(fns, cover, wm, EmbedMode::strict);
    } catch (const SaturationError& e) {
        REQUIRE(e.count == res.saturation_count);
        REQUIRE_FALSE(e.positions.empty());
    }
}

TEST_CASE("residual stays within [-255, 255] and watermarked pixels within [0, 255]") {
    PipelineFns fns = stub_pipeline(31, 1.5f);
    QuantizedImage cover = random_cover(16, 16, 8, 0, 255);
    EmbedResult res = embed(fns, cover, random_wm(16, 16, 9));
    for (int16_t v : res.residual.data) {
        REQUIRE(v >= -255);
        REQUIRE(v <= 255);
    }
    for (int16_t v : res.watermarked.data) {
        REQUIRE(v >= 0);
        REQUIRE(v <= 255);
    }
}

TEST_CASE("embed validates input shapes and missing extractor is reported") {
    PipelineFns fns = stub_pipeline(41);
    QuantizedImage cover = random_cover(16, 16, 1);
    REQUIRE_THROWS_AS(embed(fns, cover, WatermarkImage(8, 8)), std::invalid_argument);
    fns.extract_raw = nullptr;
    REQUIRE_THROWS_AS(extract(fns, cover), std::invalid_argument);
}

TEST_CASE("extract binarizes the raw extractor output") {
    PipelineFns fns = stub_pipeline(51);
    fns.extract_raw = [](const ImageTensor& img) {
        Tensor t(1, img.h, img.w);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(0, y, x) = (x + y) % 2 ? 0.9f : 0.1f;
        return t;
    };
    WatermarkImage wm = extract(fns, random_cover(8, 8, 3));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) REQUIRE(wm.bits[size_t(y) * 8 + x] == ((x + y) % 2 ? 1 : 0));
}
