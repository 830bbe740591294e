#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <type_traits>
#include <stdexcept>
#include <string>

#include "rrw/losses.hpp"
#include "rrw/noise_layer.hpp"
#include "rrw/subnets.hpp"

namespace rrw {

struct TrainToggles {
    bool use_l2 = true;
    bool use_vgg = true;
    bool use_adv = true;            // eta = 0 reproduces the no-discriminator ablation
    bool use_consistency_loss = true;
    bool use_noise_layer = true;
    bool noise_in_stage1a = false;  // noise layer defaults to Stage II only
};

enum class PerceptualKind { random_conv, vgg };

struct TrainConfig {
    int resolution = 256;
    int batch_size = 4;
    int epochs_stage1 = 50;
    int epochs_stage2 = 50;
    double lr = 0.002;
    double lr_decay_factor = 0.2;
    int plateau_patience = 5;
    LossWeights weights;
    NoiseConfig noise;
    TrainToggles toggles;
    int gnet_depth = 5;
    int hnet_depth = 7;
    int dnet_layers = 4;
    int enet_blocks = 9;
    int unet_base_width = 64;
    int unet_width_cap = 512;
    int dnet_base_width = 64;
    int enet_width = 64;
    int wm_block = 8;  // watermark sampler block granularity (pixels)
    // levels for snapping the guider's first-stage output (<=1 disables); a
    // coarse grid lets the snapped abstraction coincide exactly on the embed
    // and recover sides, which makes recovery bit-exact by construction
    int guide_quant_levels = 16;
    // block size for the guiding net's input high-pass (see
    // SubnetConfig::guide_highpass_block); 0 disables
    int guide_highpass_block = 0;
    // pre-sigmoid gain on the guiding net's head (see SubnetConfig::guide_gain)
    double guide_gain = 1.0;
    // discriminator updates per generator update in stage 1a; > 1 lets the
    // discriminator reach confident fake detection before it is frozen for
    // stage 2, where a half-fooled frozen discriminator would otherwise hand
    // the embedder an easy adversarial-distortion gradient
    int d_steps = 1;
    // discriminator-only passes after stage 1a (best-response polish before
    // the freeze; see run_stage1a)
    int d_polish_epochs = 0;
    PerceptualKind perceptual = PerceptualKind::random_conv;
    std::string vgg_weights_path;  // required when perceptual == vgg
    uint64_t seed = 1;

    SubnetConfig unet_subnet_config() const {
        SubnetConfig c;
        c.base_width = unet_base_width;
        c.width_cap = unet_width_cap;
        c.guide_gain = static_cast<float>(guide_gain);
        c.guide_highpass_block = guide_highpass_block;
        return c;
    }
    SubnetConfig dnet_subnet_config() const {
        SubnetConfig c;
        c.base_width = dnet_base_width;
        c.width_cap = unet_width_cap;
        return c;
    }
    SubnetConfig enet_subnet_config() const {
        SubnetConfig c;
        c.enet_blocks = enet_blocks;
        c.enet_width = enet_width;
        return c;
    }
};

// Desk-scale preset: small images, small widths, short schedule.
inline TrainConfig toy_train_config() {
    TrainConfig c;
    c.resolution = 64;
    c.epochs_stage1 = 10;
    c.epochs_stage2 = 10;
    c.unet_base_width = 16;
    c.unet_width_cap = 64;
    c.dnet_base_width = 32;
    c.enet_width = 32;
    c.enet_blocks = 4;
    c.noise.gauss_sigma = 2.0;  // scaled to the reduced working resolution
    // Harder compression and a heavier noise-branch weight push the mark's
    // amplitude equilibrium up: the training distortions (jpeg + blur) barely
    // touch coarse block-mean marks, so without this the amplitude settles
    // too low to survive distortions outside the training set.
    c.noise.jpeg_qf = 25;
    c.noise.strength_weight = 5.0;
    // At desk scale the short schedule cannot drive the guiding-consistency
    // error asymptotically to zero; a strong head gain saturates most of the
    // abstraction instead (exact-by-construction consistency), and extra
    // discriminator steps leave stage 2 with a confidently-trained frozen
    // discriminator whose clamped adversarial term is flat.
    c.guide_gain = 8.0;
    c.d_steps = 3;
    c.d_polish_epochs = 2;
    // Coarse payload blocks double the extractor's pooling gain against
    // additive noise at 64x64; the guiding net is made blind to exactly that
    // block-mean subspace, so the mark barely perturbs the abstraction.
    c.wm_block = 16;
    c.guide_highpass_block = 16;
    return c;
}

inline TrainConfig full_train_config() { return TrainConfig{}; }

// ---------------------------------------------------------------------------
// Flat key-value view of a config, shared by the config-file loader, env-var
// overrides, and the checkpoint snapshot.

inline std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
    std::map<std::string, std::string> m;
    auto put = [&](const std::string& k, auto v) {
        if constexpr (std::is_same_v<decltype(v), bool>) {
            m[k] = v ? "true" : "false";
        } else if constexpr (std::is_floating_point_v<decltype(v)>) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
            m[k] = buf;
        } else {
            m[k] = std::to_string(v);
        }
    };
    put("training.resolution", c.resolution);
    put("training.batch_size", c.batch_size);
    put("training.epochs_stage1", c.epochs_stage1);
    put("training.epochs_stage2", c.epochs_stage2);
    put("training.lr", c.lr);
    put("training.lr_decay_factor", c.lr_decay_factor);
    put("training.plateau_patience", c.plateau_patience);
    put("training.seed", c.seed);
    put("training.wm_block", c.wm_block);
    put("weights.lambda1", c.weights.lambda1);
    put("weights.lambda2", c.weights.lambda2);
    put("weights.lambda3", c.weights.lambda3);
    put("weights.eta", c.weights.eta);
    put("noise.jpeg_qf", c.noise.jpeg_qf);
    put("noise.gauss_sigma", c.noise.gauss_sigma);
    put("noise.sigma_is_kernel_size", c.noise.sigma_is_kernel_size);
    put("noise.jpeg_enabled", c.noise.jpeg_enabled);
    put("noise.gauss_enabled", c.noise.gauss_enabled);
    put("noise.strength_weight", c.noise.strength_weight);
    put("toggles.use_l2", c.toggles.use_l2);
    put("toggles.use_vgg", c.toggles.use_vgg);
    put("toggles.use_adv", c.toggles.use_adv);
    put("toggles.use_consistency_loss", c.toggles.use_consistency_loss);
    put("toggles.use_noise_layer", c.toggles.use_noise_layer);
    put("toggles.noise_in_stage1a", c.toggles.noise_in_stage1a);
    put("arch.gnet_depth", c.gnet_depth);
    put("arch.hnet_depth", c.hnet_depth);
    put("arch.dnet_layers", c.dnet_layers);
    put("arch.enet_blocks", c.enet_blocks);
    put("arch.unet_base_width", c.unet_base_width);
    put("arch.unet_width_cap", c.unet_width_cap);
    put("arch.dnet_base_width", c.dnet_base_width);
    put("arch.enet_width", c.enet_width);
    put("arch.guide_quant_levels", c.guide_quant_levels);
    put("arch.guide_gain", c.guide_gain);
    put("arch.guide_highpass_block", c.guide_highpass_block);
    put("training.d_steps", c.d_steps);
    put("training.d_polish_epochs", c.d_polish_epochs);
    m["perceptual.kind"] = c.perceptual == PerceptualKind::vgg ? "vgg" : "random_conv";
    m["perceptual.vgg_weights_path"] = c.vgg_weights_path;
    return m;
}

inline void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_bool = [&] {
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        throw std::invalid_argument("config: bad boolean for " + key + ": " + value);
    };
    auto as_u64 = [&] { return static_cast<uint64_t>(std::stoull(value)); };

    if (key == "training.resolution") c.resolution = as_int();
    else if (key == "training.batch_size") c.batch_size = as_int();
    else if (key == "training.epochs_stage1") c.epochs_stage1 = as_int();
    else if (key == "training.epochs_stage2") c.epochs_stage2 = as_int();
    else if (key == "training.lr") c.lr = as_double();
    else if (key == "training.lr_decay_factor") c.lr_decay_factor = as_double();
    else if (key == "training.plateau_patience") c.plateau_patience = as_int();
    else if (key == "training.seed") c.seed = as_u64();
    else if (key == "training.wm_block") c.wm_block = as_int();
    else if (key == "weights.lambda1") c.weights.lambda1 = as_double();
    else if (key == "weights.lambda2") c.weights.lambda2 = as_double();
    else if (key == "weights.lambda3") c.weights.lambda3 = as_double();
    else if (key == "weights.eta") c.weights.eta = as_double();
    else if (key == "noise.jpeg_qf") c.noise.jpeg_qf = as_int();
    else if (key == "noise.gauss_sigma") c.noise.gauss_sigma = as_double();
    else if (key == "noise.sigma_is_kernel_size") c.noise.sigma_is_kernel_size = as_bool();
    else if (key == "noise.jpeg_enabled") c.noise.jpeg_enabled = as_bool();
    else if (key == "noise.gauss_enabled") c.noise.gauss_enabled = as_bool();
    else if (key == "noise.strength_weight") c.noise.strength_weight = as_double();
    else if (key == "toggles.use_l2") c.toggles.use_l2 = as_bool();
    else if (key == "toggles.use_vgg") c.toggles.use_vgg = as_bool();
    else if (key == "toggles.use_adv") c.toggles.use_adv = as_bool();
    else if (key == "toggles.use_consistency_loss") c.toggles.use_consistency_loss = as_bool();
    else if (key == "toggles.use_noise_layer") c.toggles.use_noise_layer = as_bool();
    else if (key == "toggles.noise_in_stage1a") c.toggles.noise_in_stage1a = as_bool();
    else if (key == "arch.gnet_depth") c.gnet_depth = as_int();
    else if (key == "arch.hnet_depth") c.hnet_depth = as_int();
    else if (key == "arch.dnet_layers") c.dnet_layers = as_int();
    else if (key == "arch.enet_blocks") c.enet_blocks = as_int();
    else if (key == "arch.unet_base_width") c.unet_base_width = as_int();
    else if (key == "arch.unet_width_cap") c.unet_width_cap = as_int();
    else if (key == "arch.dnet_base_width") c.dnet_base_width = as_int();
    else if (key == "arch.enet_width") c.enet_width = as_int();
    else if (key == "arch.guide_quant_levels") c.guide_quant_levels = as_int();
    else if (key == "arch.guide_gain") c.guide_gain = as_double();
    else if (key == "arch.guide_highpass_block") c.guide_highpass_block = as_int();
    else if (key == "training.d_steps") c.d_steps = as_int();
    else if (key == "training.d_polish_epochs") c.d_polish_epochs = as_int();
    else if (key == "perceptual.kind") {
        if (value == "vgg") c.perceptual = PerceptualKind::vgg;
        else if (value == "random_conv") c.perceptual = PerceptualKind::random_conv;
        else throw std::invalid_argument("config: unknown perceptual.kind: " + value);
    } else if (key == "perceptual.vgg_weights_path") c.vgg_weights_path = value;
    else if (key == "preset") {
        if (value == "toy") c = toy_train_config();
        else if (value == "full") c = full_train_config();
        else throw std::invalid_argument("config: unknown preset: " + value);
    } else {
        throw std::invalid_argument("config: unknown key: " + key);
    }
}

}  // namespace rrw
