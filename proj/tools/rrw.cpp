// Command-line frontend: train / embed / extract / recover / eval /
// inspect-checkpoint over the watermarking library.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rrw/attacks.hpp"
#include "rrw/checkpoint.hpp"
#include "rrw/config.hpp"
#include "rrw/dataset.hpp"
#include "rrw/eval.hpp"
#include "rrw/guider.hpp"
#include "rrw/metrics.hpp"
#include "rrw/png_io.hpp"
#include "rrw/training.hpp"

namespace fs = std::filesystem;
using namespace rrw;

// Exit codes: 0 success, 2 validation failure, 3 saturation (strict embed),
// 4 I/O error.
constexpr int kExitValidation = 2;
constexpr int kExitSaturation = 3;
constexpr int kExitIo = 4;

namespace {

std::vector<ImageTensor> load_covers(const std::vector<std::string>& files, int resize) {
    std::vector<ImageTensor> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(dequantize(load_cover(f, resize)));
    return out;
}

std::vector<QuantizedImage> load_covers_q(const std::vector<std::string>& files, int resize) {
    std::vector<QuantizedImage> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_cover(f, resize));
    return out;
}

AttackKind attack_kind_from(const std::string& name) {
    for (int k = 0; k <= static_cast<int>(AttackKind::external_plugin); ++k)
        if (attack_name(static_cast<AttackKind>(k)) == name) return static_cast<AttackKind>(k);
    throw std::invalid_argument("unknown attack kind: " + name);
}

std::vector<AttackSpec> parse_attacks_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open attacks config: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<AttackSpec> specs;
    for (const auto& item : j) {
        AttackSpec s;
        s.kind = attack_kind_from(item.at("kind").get<std::string>());
        if (item.contains("sigma")) s.sigma = item["sigma"].get<double>();
        if (item.contains("kernel")) s.kernel = item["kernel"].get<int>();
        if (item.contains("density")) s.density = item["density"].get<double>();
        if (item.contains("qf")) s.qf = item["qf"].get<int>();
        if (item.contains("factor")) s.factor = item["factor"].get<double>();
        if (item.contains("crop_size")) s.crop_size = item["crop_size"].get<int>();
        if (item.contains("fraction")) s.fraction = item["fraction"].get<double>();
        if (item.contains("cmd")) s.plugin_cmd = item["cmd"].get<std::string>();
        if (item.contains("seed")) s.seed = item["seed"].get<uint64_t>();
        specs.push_back(std::move(s));
    }
    return specs;
}

WatermarkImage watermark_for(const std::string& wm_path, uint64_t wm_seed, int h, int w,
                             int block) {
    if (!wm_path.empty()) return read_watermark_png(wm_path);
    return random_watermark(h, w, block, wm_seed);
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir, const std::string& resume) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config_file(config_path);
    apply_env_overrides(cfg);

    fs::create_directories(out_dir);
    DatasetManifest manifest = ingest_dataset(dataset_dir, cfg.resolution, 0.8, cfg.seed);
    if (manifest.skipped > 0)
        std::cerr << "warning: skipped " << manifest.skipped << " undecodable file(s)\n";
    std::vector<ImageTensor> covers = load_covers(manifest.train_files, cfg.resolution);
    std::cout << "dataset: " << covers.size() << " train / " << manifest.val_files.size()
              << " val covers at " << cfg.resolution << "x" << cfg.resolution << "\n";

    std::ofstream metrics(out_dir + "/metrics.jsonl", std::ios::app);
    Trainer trainer(cfg, covers, &metrics);

    const std::string p1a = out_dir + "/ckpt_stage1a.rrw";
    const std::string p1b = out_dir + "/ckpt_stage1b.rrw";
    const std::string p2 = out_dir + "/ckpt_stage2.rrw";

    Checkpoint ck;
    if (resume == "1b" || resume == "2") {
        ck = load_checkpoint(resume == "1b" ? p1a : p1b);
        std::cout << "resuming after stage " << ck.stage << "\n";
    } else {
        std::cout << "stage 1a: embedding/extraction pretraining\n";
        ck = trainer.pretrain_stage1a();
        save_checkpoint(ck, p1a);
    }
    if (ck.stage == "1a") {
        std::cout << "stage 1b: guiding-network pretraining\n";
        ck = trainer.pretrain_stage1b(std::move(ck));
        save_checkpoint(ck, p1b);
    }
    std::cout << "stage 2: joint training through the guiding pipeline\n";
    ck = trainer.train_stage2(std::move(ck));
    save_checkpoint(ck, p2);

    const ConsistencyReport& rep = trainer.consistency_report();
    std::cout << "guiding consistency: max pre-quantization MSE " << rep.max_mse
              << (ck.reversibility_verified ? " (within tolerance)" : " (TOLERANCE NOT MET)")
              << "\nreversibility verified: " << (ck.reversibility_verified ? "yes" : "no")
              << "\ncheckpoints written to " << out_dir << "\n";
    return 0;
}

int cmd_embed(const std::string& ckpt, const std::string& cover_path, const std::string& wm_path,
              uint64_t wm_seed, const std::string& out_path, const std::string& mode) {
    Checkpoint ck = load_checkpoint(ckpt);
    if (!ck.reversibility_verified)
        std::cerr << "warning: checkpoint is not reversibility-verified\n";
    QuantizedImage cover = read_image_png(cover_path);
    if (cover.h != ck.config.resolution || cover.w != ck.config.resolution) {
        std::cerr << "error: resolution mismatch: cover is " << cover.w << "x" << cover.h
                  << ", checkpoint expects " << ck.config.resolution << "x"
                  << ck.config.resolution << "\n";
        return kExitValidation;
    }
    WatermarkImage wm = watermark_for(wm_path, wm_seed, cover.h, cover.w, ck.config.wm_block);
    if (wm.h != cover.h || wm.w != cover.w) {
        std::cerr << "error: resolution mismatch: watermark is " << wm.w << "x" << wm.h << "\n";
        return kExitValidation;
    }
    EmbedMode m = mode == "strict" ? EmbedMode::strict : EmbedMode::best_effort;
    try {
        EmbedResult res = embed(ck, cover, wm, m);
        write_image_png(res.watermarked, out_path);
        std::cout << "PSNR: " << psnr(cover, res.watermarked)
                  << " dB\nSSIM: " << ssim(cover, res.watermarked)
                  << "\nsaturation count: " << res.saturation_count << "\n";
    } catch (const SaturationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSaturation;
    }
    return 0;
}

int cmd_extract(const std::string& ckpt, const std::string& img_path, const std::string& out_path,
                const std::string& ref_path, double blank_threshold) {
    Checkpoint ck = load_checkpoint(ckpt);
    QuantizedImage img = read_image_png(img_path);
    PipelineFns fns = pipeline_from(ck);
    Tensor raw = fns.extract_raw(dequantize(img));
    double mean_act = 0;
    for (float v : raw.data) mean_act += v;
    mean_act /= raw.data.size();
    WatermarkImage wm = binarize_watermark(raw);
    write_watermark_png(wm, out_path);
    std::cout << "mean activation: " << mean_act << "\n";
    if (mean_act < blank_threshold) std::cout << "no watermark detected\n";
    if (!ref_path.empty()) {
        WatermarkImage ref = read_watermark_png(ref_path);
        std::cout << "BER: " << ber(ref, wm) << "\n";
    }
    return 0;
}

int cmd_recover(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
                const std::string& wm_path, const std::string& verify_path) {
    Checkpoint ck = load_checkpoint(ckpt);
    QuantizedImage watermarked = read_image_png(in_path);
    WatermarkImage wm =
        wm_path.empty() ? extract(ck, watermarked) : read_watermark_png(wm_path);
    QuantizedImage recovered = recover(ck, watermarked, wm);
    write_image_png(recovered, out_path);
    if (!verify_path.empty()) {
        QuantizedImage original = read_image_png(verify_path);
        if (original.h != recovered.h || original.w != recovered.w) {
            std::cerr << "error: resolution mismatch with --verify image\n";
            return kExitValidation;
        }
        size_t diff = 0;
        for (size_t i = 0; i < recovered.data.size(); ++i)
            if (recovered.data[i] != original.data[i]) ++diff;
        double p = psnr(original, recovered);
        std::cout << "bit-exact: " << (diff == 0 ? "yes" : "no") << "\nPSNR: ";
        if (std::isinf(p)) std::cout << "inf";
        else std::cout << p << " dB";
        std::cout << "\n";
        if (diff != 0) {
            std::cout << "differing values: " << diff << "\n";
            return kExitValidation;
        }
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset_dir,
             const std::string& attacks_path, const std::string& out_dir, uint64_t wm_seed,
             int limit) {
    Checkpoint ck = load_checkpoint(ckpt);
    DatasetManifest manifest = ingest_dataset(dataset_dir, ck.config.resolution, 0.0, ck.config.seed);
    std::vector<std::string> files = manifest.val_files;
    if (files.empty()) files = manifest.train_files;
    if (limit > 0 && static_cast<int>(files.size()) > limit) files.resize(limit);
    std::vector<QuantizedImage> covers = load_covers_q(files, ck.config.resolution);

    std::vector<AttackSpec> attacks =
        attacks_path.empty() ? default_attack_suite() : parse_attacks_file(attacks_path);
    WatermarkImage wm = random_watermark(ck.config.resolution, ck.config.resolution,
                                         ck.config.wm_block, wm_seed);

    EvalReport robust = evaluate_robustness(ck, covers, wm, attacks);
    EvalReport recovery = evaluate_recovery_after_distortion(ck, covers, wm, attacks);

    fs::create_directories(out_dir);
    std::ofstream table(out_dir + "/report.txt");
    table << "== robustness ==\n" << robust.to_table() << "\n== recovery after distortion ==\n"
          << recovery.to_table();
    std::ofstream jsonl(out_dir + "/report.jsonl");
    jsonl << robust.to_jsonl() << recovery.to_jsonl();
    std::cout << "== robustness ==\n" << robust.to_table() << "\n== recovery after distortion ==\n"
              << recovery.to_table() << "reports written to " << out_dir << "\n";
    return 0;
}

int cmd_inspect(const std::string& ckpt) {
    Checkpoint ck = load_checkpoint(ckpt);
    std::cout << "format version: " << Checkpoint::kFormatVersion << "\nstage: " << ck.stage
              << "\nreversibility verified: " << (ck.reversibility_verified ? "yes" : "no")
              << "\n";
    auto count = [](Subnet* n) -> size_t { return n ? n->param_count() : 0; };
    std::cout << "parameters: H=" << count(ck.hnet.get()) << " E=" << count(ck.enet.get())
              << " D=" << count(ck.dnet.get()) << " G=" << count(ck.gnet.get()) << "\nconfig:\n";
    for (const auto& [k, v] : config_to_map(ck.config)) std::cout << "  " << k << " = " << v << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust reversible image watermarking toolkit"};
    app.require_subcommand(1);

    std::string config_path, dataset_dir, out_dir = "runs", resume;
    auto* train = app.add_subcommand("train", "run the two-stage training pipeline");
    train->add_option("--config", config_path, "config file (key = value, [section] headers)");
    train->add_option("--dataset", dataset_dir, "directory of cover images")->required();
    train->add_option("--out", out_dir, "output directory for checkpoints and metrics");
    train->add_option("--resume", resume, "resume after a finished stage: 1b or 2")
        ->check(CLI::IsMember({"1b", "2"}));

    std::string ckpt, cover, wm_path, out_path, mode = "best-effort";
    uint64_t wm_seed = 1;
    auto* embed_cmd = app.add_subcommand("embed", "embed a watermark reversibly");
    embed_cmd->add_option("ckpt", ckpt)->required();
    embed_cmd->add_option("cover", cover)->required();
    embed_cmd->add_option("out", out_path)->required();
    embed_cmd->add_option("--wm", wm_path, "watermark PNG (otherwise generated from --wm-seed)");
    embed_cmd->add_option("--wm-seed", wm_seed, "seed for the generated watermark plane");
    embed_cmd->add_option("--mode", mode)->check(CLI::IsMember({"strict", "best-effort"}));

    std::string ref_path;
    double blank_threshold = 0.1;
    auto* extract_cmd = app.add_subcommand("extract", "extract the watermark bit plane");
    extract_cmd->add_option("ckpt", ckpt)->required();
    extract_cmd->add_option("image", cover)->required();
    extract_cmd->add_option("out", out_path)->required();
    extract_cmd->add_option("--ref", ref_path, "reference watermark PNG; prints BER");
    extract_cmd->add_option("--blank-threshold", blank_threshold,
                            "mean activation below this flags 'no watermark detected'");

    std::string verify_path;
    auto* recover_cmd = app.add_subcommand("recover", "reconstruct the original cover");
    recover_cmd->add_option("ckpt", ckpt)->required();
    recover_cmd->add_option("watermarked", cover)->required();
    recover_cmd->add_option("out", out_path)->required();
    recover_cmd->add_option("--wm", wm_path, "use this watermark instead of extracting one");
    recover_cmd->add_option("--verify", verify_path, "original cover; prints bit-exact yes/no");

    std::string attacks_path;
    int eval_limit = 0;
    auto* eval_cmd = app.add_subcommand("eval", "robustness and recovery evaluation");
    eval_cmd->add_option("ckpt", ckpt)->required();
    eval_cmd->add_option("dataset", dataset_dir)->required();
    eval_cmd->add_option("--attacks", attacks_path, "JSON array of attack specs");
    eval_cmd->add_option("--out", out_dir, "report directory");
    eval_cmd->add_option("--wm-seed", wm_seed);
    eval_cmd->add_option("--limit", eval_limit, "cap the number of evaluated covers");

    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
    inspect_cmd->add_option("ckpt", ckpt)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, dataset_dir, out_dir, resume);
        if (embed_cmd->parsed()) return cmd_embed(ckpt, cover, wm_path, wm_seed, out_path, mode);
        if (extract_cmd->parsed())
            return cmd_extract(ckpt, cover, out_path, ref_path, blank_threshold);
        if (recover_cmd->parsed()) return cmd_recover(ckpt, cover, out_path, wm_path, verify_path);
        if (eval_cmd->parsed())
            return cmd_eval(ckpt, dataset_dir, attacks_path, out_dir, wm_seed, eval_limit);
        if (inspect_cmd->parsed()) return cmd_inspect(ckpt);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
