#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <sstream>

#include "rrw/attacks.hpp"
#include "rrw/dataset.hpp"
#include "rrw/eval.hpp"
#include "rrw/rng.hpp"

using namespace rrw;

namespace {

QuantizedImage random_cover(int h, int w, uint64_t seed) {
    Rng rng(seed);
    QuantizedImage q(3, h, w);
    for (auto& v : q.data) v = int16_t(rng.below(256));
    return q;
}

TrainConfig micro_config() {
    TrainConfig cfg = toy_train_config();
    cfg.resolution = 16;
    cfg.gnet_depth = 3;
    cfg.hnet_depth = 3;
    cfg.dnet_layers = 3;
    cfg.enet_blocks = 1;
    cfg.unet_base_width = 4;
    cfg.unet_width_cap = 8;
    cfg.dnet_base_width = 4;
    cfg.enet_width = 4;
    cfg.wm_block = 4;
    return cfg;
}

}  // namespace

TEST_CASE("attacks are deterministic under a fixed seed") {
    QuantizedImage img = random_cover(32, 32, 1);
    for (AttackSpec spec : default_attack_suite(99)) {
        QuantizedImage a = apply_attack(spec, img);
        QuantizedImage b = apply_attack(spec, img);
        REQUIRE(a == b);
    }
}

TEST_CASE("default suite covers the documented attack set and order") {
    auto suite = default_attack_suite();
    std::vector<AttackKind> kinds;
    for (const auto& s : suite) kinds.push_back(s.kind);
    REQUIRE(kinds == std::vector<AttackKind>{
                         AttackKind::gaussian_noise, AttackKind::gaussian_blur,
                         AttackKind::salt_pepper, AttackKind::jpeg, AttackKind::median_filter,
                         AttackKind::scale, AttackKind::crop, AttackKind::dropout});
    REQUIRE(suite[0].sigma == 0.2);
    REQUIRE(suite[1].kernel == 7);
    REQUIRE(suite[2].density == 0.1);
    REQUIRE(suite[3].qf == 50);
    REQUIRE(suite[5].factor == 0.5);
    REQUIRE(suite[6].crop_size == 50);
    REQUIRE(suite[7].fraction == 0.3);
}

TEST_CASE("salt-pepper hits roughly the requested density with extreme values") {
    AttackSpec spec;
    spec.kind = AttackKind::salt_pepper;
    spec.density = 0.1;
    spec.seed = 5;
    QuantizedImage img(3, 64, 64, 128);
    QuantizedImage out = apply_attack(spec, img);
    size_t changed = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            int16_t v = out.data[size_t(y) * 64 + x];
            if (v != 128) {
                REQUIRE((v == 0 || v == 255));
                ++changed;
            }
        }
    REQUIRE(changed > 64 * 64 * 0.06);
    REQUIRE(changed < 64 * 64 * 0.14);
}

TEST_CASE("crop zeroes exactly one square region") {
    AttackSpec spec;
    spec.kind = AttackKind::crop;
    spec.crop_size = 10;
    spec.seed = 3;
    QuantizedImage img(3, 32, 32, 200);
    QuantizedImage out = apply_attack(spec, img);
    size_t zeros = 0;
    for (int16_t v : out.data) {
        REQUIRE((v == 0 || v == 200));
        zeros += v == 0;
    }
    REQUIRE(zeros == size_t(3) * 10 * 10);
}

TEST_CASE("attack parameter validation") {
    QuantizedImage img = random_cover(16, 16, 2);
    AttackSpec s;
    s.kind = AttackKind::gaussian_blur;
    s.kernel = 4;
    REQUIRE_THROWS_AS(apply_attack(s, img), std::invalid_argument);
    s.kind = AttackKind::jpeg;
    s.qf = 0;
    REQUIRE_THROWS_AS(apply_attack(s, img), std::invalid_argument);
    s.kind = AttackKind::scale;
    s.factor = 1.5;
    REQUIRE_THROWS_AS(apply_attack(s, img), std::invalid_argument);
    s.kind = AttackKind::external_plugin;
    s.plugin_cmd = "";
    REQUIRE_THROWS_AS(apply_attack(s, img), AttackError);
    s.plugin_cmd = "exit 1 # {in} {out}";
    REQUIRE_THROWS_AS(apply_attack(s, img), AttackError);
}

TEST_CASE("external plugin attack round-trips through a copy command") {
    AttackSpec s;
    s.kind = AttackKind::external_plugin;
    s.plugin_cmd = "cp {in} {out}";
    s.seed = 11;
    QuantizedImage img = random_cover(16, 16, 4);
    REQUIRE(apply_attack(s, img) == img);
}

TEST_CASE("robustness evaluation produces a clean row plus one row per attack") {
    TrainConfig cfg = micro_config();
    Checkpoint ck = Checkpoint::fresh(cfg);  // untrained; only plumbing is under test
    std::vector<QuantizedImage> covers{random_cover(16, 16, 5), random_cover(16, 16, 6)};
    WatermarkImage wm = random_watermark(16, 16, 4, 9);

    auto attacks = default_attack_suite(3);
    EvalReport rep = evaluate_robustness(ck, covers, wm, attacks);
    REQUIRE(rep.rows.size() == attacks.size() + 1);
    REQUIRE(rep.rows[0].attack == "none");
    for (const auto& row : rep.rows) {
        REQUIRE_FALSE(row.failed);
        REQUIRE(row.acc >= 0.0);
        REQUIRE(row.acc <= 1.0);
    }

    // deterministic across reruns
    EvalReport rep2 = evaluate_robustness(ck, covers, wm, attacks);
    REQUIRE(rep.to_jsonl() == rep2.to_jsonl());
}

TEST_CASE("a failing attack is isolated as a failed row, not a crash") {
    TrainConfig cfg = micro_config();
    Checkpoint ck = Checkpoint::fresh(cfg);
    std::vector<QuantizedImage> covers{random_cover(16, 16, 7)};
    WatermarkImage wm = random_watermark(16, 16, 4, 10);

    std::vector<AttackSpec> attacks;
    AttackSpec bad;
    bad.kind = AttackKind::external_plugin;
    bad.plugin_cmd = "exit 3 # {in} {out}";
    attacks.push_back(bad);
    AttackSpec ok;
    ok.kind = AttackKind::gaussian_noise;
    attacks.push_back(ok);

    EvalReport rep = evaluate_robustness(ck, covers, wm, attacks);
    int failed = 0, fine = 0;
    for (const auto& row : rep.rows) (row.failed ? failed : fine)++;
    REQUIRE(failed == 1);
    REQUIRE(fine == 2);  // clean row + gaussian row
}

TEST_CASE("report serializations parse and align") {
    TrainConfig cfg = micro_config();
    Checkpoint ck = Checkpoint::fresh(cfg);
    std::vector<QuantizedImage> covers{random_cover(16, 16, 8)};
    WatermarkImage wm = random_watermark(16, 16, 4, 11);
    EvalReport rep = evaluate_robustness(ck, covers, wm, {default_attack_suite(1)[0]});

    std::istringstream in(rep.to_jsonl());
    std::string line;
    int rows = 0;
    bool saw_aggregate = false;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j.contains("attack")) {
            REQUIRE(j.contains("acc"));
            ++rows;
        } else {
            REQUIRE(j.contains("clean_psnr"));
            saw_aggregate = true;
        }
    }
    REQUIRE(rows == int(rep.rows.size()));
    REQUIRE(saw_aggregate);
    REQUIRE_FALSE(rep.to_table().empty());
}

TEST_CASE("recovery-after-distortion report pairs watermarked and recovered PSNR") {
    TrainConfig cfg = micro_config();
    Checkpoint ck = Checkpoint::fresh(cfg);
    std::vector<QuantizedImage> covers{random_cover(16, 16, 9)};
    WatermarkImage wm = random_watermark(16, 16, 4, 12);
    AttackSpec noise = default_attack_suite(2)[0];
    EvalReport rep = evaluate_recovery_after_distortion(ck, covers, wm, {noise});
    for (const auto& row : rep.rows) {
        REQUIRE_FALSE(std::isnan(row.psnr_watermarked));
        REQUIRE_FALSE(std::isnan(row.psnr_recovered));
    }
}
