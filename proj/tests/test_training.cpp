#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <sstream>

#include "rrw/training.hpp"

using namespace rrw;

namespace {

TrainConfig micro_config() {
    TrainConfig cfg = toy_train_config();
    cfg.resolution = 16;
    cfg.batch_size = 2;
    cfg.epochs_stage1 = 1;
    cfg.epochs_stage2 = 1;
    cfg.gnet_depth = 3;
    cfg.hnet_depth = 3;
    cfg.dnet_layers = 3;
    cfg.enet_blocks = 1;
    cfg.unet_base_width = 4;
    cfg.unet_width_cap = 8;
    cfg.dnet_base_width = 4;
    cfg.enet_width = 4;
    cfg.wm_block = 4;
    cfg.noise.gauss_sigma = 1.0;
    return cfg;
}

std::vector<ImageTensor> micro_covers(int n, int res, uint64_t seed) {
    std::vector<ImageTensor> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        ImageTensor t(3, res, res);
        for (auto& v : t.data) v = float(rng.uniform(0.1, 0.9));
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("plateau scheduler decays by the factor after patience epochs without improvement") {
    PlateauScheduler s{0.002, 0.2, 5};
    SECTION("strictly improving losses leave the rate unchanged") {
        for (int i = 0; i < 20; ++i) REQUIRE(lr_schedule_step(s, 10.0 - i) == 0.002);
    }
    SECTION("five flat epochs trigger one decay") {
        lr_schedule_step(s, 1.0);
        for (int i = 0; i < 4; ++i) REQUIRE(lr_schedule_step(s, 1.0) == 0.002);
        REQUIRE(lr_schedule_step(s, 1.0) == Catch::Approx(0.0004));
    }
    SECTION("two consecutive plateaus compound the decay") {
        lr_schedule_step(s, 1.0);
        for (int i = 0; i < 10; ++i) lr_schedule_step(s, 1.0);
        REQUIRE(s.lr == Catch::Approx(0.002 * 0.2 * 0.2));
    }
    SECTION("improvement resets the counter") {
        lr_schedule_step(s, 1.0);
        for (int i = 0; i < 4; ++i) lr_schedule_step(s, 1.0);
        lr_schedule_step(s, 0.5);  // improvement just before the decay would fire
        for (int i = 0; i < 4; ++i) REQUIRE(lr_schedule_step(s, 0.5) == 0.002);
    }
}

TEST_CASE("micro training runs all stages, logs parsable metrics, losses finite") {
    TrainConfig cfg = micro_config();
    auto covers = micro_covers(4, cfg.resolution, 1);
    std::ostringstream log;
    Trainer trainer(cfg, covers, &log);
    Checkpoint ck = trainer.run_all();
    REQUIRE(ck.stage == "2");

    std::istringstream in(log.str());
    std::string line;
    int n1a = 0, n1b = 0, ns2 = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        for (const char* key : {"l2", "vgg", "adv", "wm", "nw", "noise", "g", "c", "L_wm", "L_G",
                                "L_C", "lr", "wall_seconds"})
            REQUIRE(j.contains(key));
        REQUIRE(std::isfinite(j["L_C"].get<double>()));
        std::string stage = j["stage"];
        if (stage == "1a") ++n1a;
        if (stage == "1b") ++n1b;
        if (stage == "s2") ++ns2;
    }
    REQUIRE(n1a == cfg.epochs_stage1);
    REQUIRE(n1b == cfg.epochs_stage1);
    REQUIRE(ns2 == cfg.epochs_stage2);
}

TEST_CASE("training is deterministic: identical metrics except wall time") {
    TrainConfig cfg = micro_config();
    auto covers = micro_covers(4, cfg.resolution, 2);
    auto run = [&] {
        std::ostringstream log;
        Trainer(cfg, covers, &log).run_all();
        // strip the timing field, the only nondeterministic value
        std::istringstream in(log.str());
        std::string line, out;
        while (std::getline(in, line)) {
            auto j = nlohmann::json::parse(line);
            j.erase("wall_seconds");
            out += j.dump() + "\n";
        }
        return out;
    };
    REQUIRE(run() == run());
}

TEST_CASE("stage 2 leaves the discriminator frozen") {
    TrainConfig cfg = micro_config();
    auto covers = micro_covers(4, cfg.resolution, 3);
    Trainer trainer(cfg, covers);
    Checkpoint ck = trainer.pretrain_stage1a();
    ck = trainer.pretrain_stage1b(std::move(ck));
    std::vector<FloatVec> before;
    for (auto* p : ck.dnet->params()) before.push_back(p->w);
    ck = trainer.train_stage2(std::move(ck));
    auto after = ck.dnet->params();
    for (size_t i = 0; i < after.size(); ++i) REQUIRE(after[i]->w == before[i]);
}

TEST_CASE("stage ordering is enforced") {
    TrainConfig cfg = micro_config();
    auto covers = micro_covers(2, cfg.resolution, 4);
    Trainer trainer(cfg, covers);
    Checkpoint fresh = Checkpoint::fresh(cfg);
    REQUIRE_THROWS_AS(trainer.pretrain_stage1b(std::move(fresh)), TrainingError);
    Checkpoint fresh2 = Checkpoint::fresh(cfg);
    REQUIRE_THROWS_AS(trainer.train_stage2(std::move(fresh2)), TrainingError);
}

TEST_CASE("trainer validates its inputs") {
    TrainConfig cfg = micro_config();
    REQUIRE_THROWS_AS(Trainer(cfg, {}), TrainingError);
    auto wrong = micro_covers(2, 8, 5);
    REQUIRE_THROWS_AS(Trainer(cfg, wrong), TrainingError);
    cfg.perceptual = PerceptualKind::vgg;
    REQUIRE_THROWS_WITH(Trainer(cfg, micro_covers(2, cfg.resolution, 6)),
                        Catch::Matchers::ContainsSubstring("weights are not bundled"));
}

TEST_CASE("stage-2 training reduces the composite loss on a micro problem") {
    TrainConfig cfg = micro_config();
    cfg.epochs_stage1 = 2;
    cfg.epochs_stage2 = 6;
    cfg.toggles.use_noise_layer = false;  // keep the micro run cheap and smooth
    auto covers = micro_covers(8, cfg.resolution, 7);
    std::ostringstream log;
    Trainer(cfg, covers, &log).run_all();
    std::istringstream in(log.str());
    std::string line;
    std::vector<double> lc;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j["stage"] == "s2") lc.push_back(j["L_C"].get<double>());
    }
    REQUIRE(lc.size() == 6);
    REQUIRE(lc.back() < lc.front());
}
