#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrw/checkpoint.hpp"
#include "rrw/dataset.hpp"
#include "rrw/guider.hpp"
#include "rrw/losses.hpp"
#include "rrw/noise_layer.hpp"
#include "rrw/subnets.hpp"
#include "rrw/train_config.hpp"

namespace rrw {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Learning-rate plateau tracker: decay by `factor` after `patience` epochs
// without improvement; the counter resets on improvement or decay.
struct PlateauScheduler {
    double lr;
    double factor;
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    double step(double loss) {
        if (loss < best) {
            best = loss;
            bad_epochs = 0;
        } else if (++bad_epochs >= patience) {
            lr *= factor;
            bad_epochs = 0;
        }
        return lr;
    }
};

inline double lr_schedule_step(PlateauScheduler& state, double current_loss) {
    return state.step(current_loss);
}

struct TrainState {
    std::string stage;
    int epoch = 0;
    PlateauScheduler sched{0.002, 0.2, 5};
    LossBreakdown last;
};

namespace traindetail {

inline void scale_grads(const std::vector<nn::Param*>& params, float s) {
    for (nn::Param* p : params)
        for (float& g : p->g) g *= s;
}

inline void zero_grads(const std::vector<nn::Param*>& params) {
    for (nn::Param* p : params) p->zero_grad();
}

inline nlohmann::json epoch_record(const std::string& stage, int epoch, const LossBreakdown& b,
                                   double lr, double seconds) {
    return nlohmann::json{{"stage", stage},   {"epoch", epoch},     {"l2", b.l2},
                          {"vgg", b.vgg},     {"adv", b.adv},       {"wm", b.wm},
                          {"nw", b.nw},       {"noise", b.noise},   {"g", b.g},
                          {"c", b.c},         {"L_wm", b.L_wm},     {"L_G", b.L_G},
                          {"L_C", b.L_C},     {"lr", lr},           {"wall_seconds", seconds}};
}

inline void add_into(LossBreakdown& acc, const LossBreakdown& b) {
    acc.l2 += b.l2;
    acc.vgg += b.vgg;
    acc.adv += b.adv;
    acc.wm += b.wm;
    acc.nw += b.nw;
    acc.noise += b.noise;
    acc.g += b.g;
    acc.c += b.c;
    acc.L_wm += b.L_wm;
    acc.L_G += b.L_G;
    acc.L_C += b.L_C;
}

inline void scale(LossBreakdown& b, double s) {
    b.l2 *= s;
    b.vgg *= s;
    b.adv *= s;
    b.wm *= s;
    b.nw *= s;
    b.noise *= s;
    b.g *= s;
    b.c *= s;
    b.L_wm *= s;
    b.L_G *= s;
    b.L_C *= s;
}

inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, const char* stage, int epoch) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed ^ (static_cast<uint64_t>(epoch + 1) * 0x9e3779b97f4a7c15ULL) ^
            (static_cast<uint64_t>(stage[0]) << 40) ^ (static_cast<uint64_t>(stage[1]) << 48));
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(static_cast<uint32_t>(i))]);
    return idx;
}

}  // namespace traindetail

// ---------------------------------------------------------------------------

class Trainer {
  public:
    Trainer(TrainConfig cfg, std::vector<ImageTensor> covers, std::ostream* metrics_log = nullptr)
        : cfg_(std::move(cfg)), covers_(std::move(covers)), metrics_(metrics_log),
          perceptual_(cfg_.seed ^ 0x70657263ULL) {
        if (covers_.empty()) throw TrainingError("empty training dataset");
        for (const auto& c : covers_)
            if (c.c != 3 || c.h != cfg_.resolution || c.w != cfg_.resolution)
                throw TrainingError("cover does not match the configured resolution");
        if (cfg_.perceptual == PerceptualKind::vgg)
            throw TrainingError(
                "perceptual extractor unavailable: pretrained weights are not bundled; "
                "set perceptual.kind = random_conv");
        blank_ = Tensor(1, cfg_.resolution, cfg_.resolution, 0.0f);
    }

    // Stage I step (a): H, E, D trained jointly as a conventional
    // embed/extract pipeline with adversarial alternation.
    Checkpoint pretrain_stage1a() {
        Checkpoint ck = Checkpoint::fresh(cfg_);
        run_stage1a(ck);
        ck.stage = "1a";
        return ck;
    }

    // Stage I step (b): Gnet alone, on frozen-Hnet output pairs.
    Checkpoint pretrain_stage1b(Checkpoint ck) {
        if (ck.stage != "1a") throw TrainingError("stage 1b requires a 1a checkpoint");
        run_stage1b(ck);
        ck.stage = "1b";
        return ck;
    }

    // Stage II: H, E, G jointly through the full guiding pipeline; D frozen.
    Checkpoint train_stage2(Checkpoint ck) {
        if (ck.stage != "1b") throw TrainingError("stage 2 requires a 1b checkpoint");
        run_stage2(ck);
        ck.stage = "2";
        verify(ck);
        return ck;
    }

    Checkpoint run_all() {
        Checkpoint ck = pretrain_stage1a();
        ck = pretrain_stage1b(std::move(ck));
        return train_stage2(std::move(ck));
    }

    const ConsistencyReport& consistency_report() const { return consistency_; }

  private:
    WatermarkImage sample_wm(const char* stage, int epoch, size_t index) const {
        uint64_t seed = cfg_.seed ^ (static_cast<uint64_t>(stage[0]) << 32) ^
                        (static_cast<uint64_t>(epoch) << 20) ^ (index * 0x2545f4914f6cdd1dULL);
        return random_watermark(cfg_.resolution, cfg_.resolution, cfg_.wm_block, seed);
    }

    double effective_eta() const { return cfg_.toggles.use_adv ? cfg_.weights.eta : 0.0; }

    void emit(const std::string& stage, int epoch, const LossBreakdown& b, double lr,
              double seconds) {
        if (metrics_)
            (*metrics_) << traindetail::epoch_record(stage, epoch, b, lr, seconds).dump() << "\n"
                        << std::flush;
    }

    // ---- Stage 1a -----------------------------------------------------

    void run_stage1a(Checkpoint& ck) {
        auto h_params = ck.hnet->params();
        auto e_params = ck.enet->params();
        auto d_params = ck.dnet->params();
        std::vector<nn::Param*> he_params = h_params;
        he_params.insert(he_params.end(), e_params.begin(), e_params.end());

        nn::Adam adam_he(he_params, cfg_.lr);
        nn::Adam adam_d(d_params, cfg_.lr);
        PlateauScheduler sched{cfg_.lr, cfg_.lr_decay_factor, cfg_.plateau_patience};

        const bool noise_on = cfg_.toggles.use_noise_layer && cfg_.toggles.noise_in_stage1a;
        std::unique_ptr<NoiseLayer> noise;
        if (noise_on) noise = std::make_unique<NoiseLayer>(cfg_.noise);

        const double eta = effective_eta();
        const int B = cfg_.batch_size;

        for (int epoch = 0; epoch < cfg_.epochs_stage1; ++epoch) {
            auto t0 = std::chrono::steady_clock::now();
            auto order = traindetail::epoch_order(covers_.size(), cfg_.seed, "1a", epoch);
            LossBreakdown esum;
            int nbatches = 0;

            for (size_t bstart = 0; bstart + B <= order.size(); bstart += B) {
                LossBreakdown bsum;
                struct SampleFwd {
                    Tensor I_o, I_w, wm_t;
                    Subnet::PassCtxPtr ctx_h;
                };
                std::vector<SampleFwd> fwd(B);

                for (int s = 0; s < B; ++s) {
                    const ImageTensor& I_o = covers_[order[bstart + s]];
                    WatermarkImage wm = sample_wm("1a", epoch, bstart + s);
                    fwd[s].I_o = I_o;
                    fwd[s].wm_t = wm.to_tensor();
                    fwd[s].I_w =
                        ck.hnet->forward(concat_channels(I_o, fwd[s].wm_t), fwd[s].ctx_h);
                }

                // D steps: ascend l_adv on this batch (d_steps per H/E step)
                if (eta > 0) {
                    for (int k = 0; k < std::max(1, cfg_.d_steps); ++k) {
                        traindetail::zero_grads(d_params);
                        for (int s = 0; s < B; ++s) {
                            Subnet::PassCtxPtr cr, cf;
                            Tensor d_real = ck.dnet->forward(fwd[s].I_o, cr);
                            Tensor d_fake = ck.dnet->forward(fwd[s].I_w, cf);
                            ck.dnet->backward(adversarial_grad_real(d_real, -1.0), *cr);
                            ck.dnet->backward(adversarial_grad_fake(d_fake, -1.0), *cf);
                        }
                        traindetail::scale_grads(d_params, 1.0f / B);
                        adam_d.set_lr(sched.lr);
                        adam_d.step();
                    }
                }

                // H/E step: descend L_wm
                traindetail::zero_grads(he_params);
                for (int s = 0; s < B; ++s) {
                    LossBreakdown parts;
                    const Tensor& I_o = fwd[s].I_o;
                    const Tensor& I_w = fwd[s].I_w;
                    Tensor dI_w(I_w.c, I_w.h, I_w.w);

                    if (cfg_.toggles.use_l2) {
                        parts.l2 = l2_loss(I_o, I_w);
                        dI_w += l2_grad(I_w, I_o, cfg_.weights.lambda1);
                    }
                    if (cfg_.toggles.use_vgg)
                        parts.vgg = perceptual_.loss(I_w, I_o, &dI_w, cfg_.weights.lambda1);

                    if (eta > 0) {
                        Subnet::PassCtxPtr cr, cf;
                        Tensor d_real = ck.dnet->forward(I_o, cr);
                        Tensor d_fake = ck.dnet->forward(I_w, cf);
                        parts.adv = adversarial_loss(d_real, d_fake);
                        dI_w += ck.dnet->backward(adversarial_grad_fake(d_fake, eta), *cf);
                    }

                    Subnet::PassCtxPtr ce1, ce2;
                    Tensor raw = ck.enet->forward(I_w, ce1);
                    parts.wm = l2_loss(fwd[s].wm_t, raw);
                    dI_w += ck.enet->backward(l2_grad(raw, fwd[s].wm_t, cfg_.weights.lambda2), *ce1);

                    Tensor raw0 = ck.enet->forward(I_o, ce2);
                    parts.nw = l2_loss(raw0, blank_);
                    ck.enet->backward(l2_grad(raw0, blank_, cfg_.weights.lambda2), *ce2);

                    if (noise_on) {
                        NoiseCtx nctx;
                        Tensor noised = noise->forward(I_w, cfg_.seed ^ (epoch * 1315423911ULL),
                                                       bstart + s, &nctx);
                        Subnet::PassCtxPtr ce3;
                        Tensor rawn = ck.enet->forward(noised, ce3);
                        parts.noise = l2_loss(fwd[s].wm_t, rawn);
                        Tensor gn = ck.enet->backward(
                            l2_grad(rawn, fwd[s].wm_t,
                                    cfg_.weights.lambda2 * cfg_.noise.strength_weight),
                            *ce3);
                        dI_w += noise->backward(gn, nctx);
                    }

                    ck.hnet->backward(dI_w, *fwd[s].ctx_h);

                    parts.L_wm = noise_on ? stage1_loss_noisy(parts, cfg_.weights)
                                          : stage1_loss(parts, cfg_.weights);
                    if (!std::isfinite(parts.L_wm))
                        throw TrainingError("non-finite loss in stage 1a, epoch " +
                                            std::to_string(epoch));
                    traindetail::add_into(bsum, parts);
                }
                traindetail::scale_grads(he_params, 1.0f / B);
                adam_he.set_lr(sched.lr);
                adam_he.step();

                traindetail::scale(bsum, 1.0 / B);
                traindetail::add_into(esum, bsum);
                ++nbatches;
            }

            traindetail::scale(esum, 1.0 / std::max(nbatches, 1));
            double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            double lr_now = sched.lr;
            sched.step(esum.L_wm);
            emit("1a", epoch, esum, lr_now, seconds);
        }

        // Discriminator polish: D-only passes against the final embedder, so
        // the discriminator enters stage 2 (where it is frozen) at its best
        // response. A confidently-trained D scores outside the clamp window,
        // which zeroes the adversarial subgradient and keeps the frozen-D
        // term from distorting the embedder during stage 2.
        if (eta > 0 && cfg_.d_polish_epochs > 0) {
            for (int epoch = 0; epoch < cfg_.d_polish_epochs; ++epoch) {
                auto t0 = std::chrono::steady_clock::now();
                auto order =
                    traindetail::epoch_order(covers_.size(), cfg_.seed, "1a-polish", epoch);
                LossBreakdown esum;
                int nbatches = 0;
                for (size_t bstart = 0; bstart + B <= order.size(); bstart += B) {
                    traindetail::zero_grads(d_params);
                    LossBreakdown bsum;
                    for (int s = 0; s < B; ++s) {
                        const ImageTensor& I_o = covers_[order[bstart + s]];
                        WatermarkImage wm = sample_wm("1a-polish", epoch, bstart + s);
                        Tensor I_w = ck.hnet->forward(concat_channels(I_o, wm.to_tensor()));
                        Subnet::PassCtxPtr cr, cf;
                        Tensor d_real = ck.dnet->forward(I_o, cr);
                        Tensor d_fake = ck.dnet->forward(I_w, cf);
                        bsum.adv += adversarial_loss(d_real, d_fake);
                        ck.dnet->backward(adversarial_grad_real(d_real, -1.0), *cr);
                        ck.dnet->backward(adversarial_grad_fake(d_fake, -1.0), *cf);
                    }
                    traindetail::scale_grads(d_params, 1.0f / B);
                    adam_d.set_lr(sched.lr);
                    adam_d.step();
                    traindetail::scale(bsum, 1.0 / B);
                    traindetail::add_into(esum, bsum);
                    ++nbatches;
                }
                traindetail::scale(esum, 1.0 / std::max(nbatches, 1));
                double seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                emit("1a+", epoch, esum, sched.lr, seconds);
            }
        }
    }

    // ---- Stage 1b -----------------------------------------------------

    void run_stage1b(Checkpoint& ck) {
        // Frozen-Hnet outputs paired with their inputs form Gnet's training set.
        std::vector<Tensor> hidden(covers_.size());
        for (size_t i = 0; i < covers_.size(); ++i) {
            WatermarkImage wm = sample_wm("1b", -1, i);
            hidden[i] = ck.hnet->forward(concat_channels(covers_[i], wm.to_tensor()));
        }

        auto g_params = ck.gnet->params();
        nn::Adam adam_g(g_params, cfg_.lr);
        PlateauScheduler sched{cfg_.lr, cfg_.lr_decay_factor, cfg_.plateau_patience};
        const int B = cfg_.batch_size;

        for (int epoch = 0; epoch < cfg_.epochs_stage1; ++epoch) {
            auto t0 = std::chrono::steady_clock::now();
            auto order = traindetail::epoch_order(covers_.size(), cfg_.seed, "1b", epoch);
            LossBreakdown esum;
            int nbatches = 0;

            for (size_t bstart = 0; bstart + B <= order.size(); bstart += B) {
                traindetail::zero_grads(g_params);
                LossBreakdown bsum;
                for (int s = 0; s < B; ++s) {
                    const Tensor& I_o = covers_[order[bstart + s]];
                    const Tensor& I_w = hidden[order[bstart + s]];
                    Subnet::PassCtxPtr c1, c2;
                    Tensor I_g = ck.gnet->forward(I_o, c1);
                    Tensor I_gp = ck.gnet->forward(I_w, c2);

                    LossBreakdown parts;
                    parts.g = l2_loss(I_g, I_gp);
                    Tensor dIg = l2_grad(I_g, I_gp);
                    Tensor dIgp = l2_grad(I_gp, I_g);
                    if (cfg_.toggles.use_consistency_loss) {
                        parts.c = l2_loss(I_o, I_g) + l2_loss(I_w, I_gp);
                        dIg += l2_grad(I_g, I_o);
                        dIgp += l2_grad(I_gp, I_w);
                    }
                    parts.L_G = parts.g + parts.c;
                    if (!std::isfinite(parts.L_G))
                        throw TrainingError("non-finite loss in stage 1b, epoch " +
                                            std::to_string(epoch));
                    ck.gnet->backward(dIg, *c1);
                    ck.gnet->backward(dIgp, *c2);
                    traindetail::add_into(bsum, parts);
                }
                traindetail::scale_grads(g_params, 1.0f / B);
                adam_g.set_lr(sched.lr);
                adam_g.step();
                traindetail::scale(bsum, 1.0 / B);
                traindetail::add_into(esum, bsum);
                ++nbatches;
            }

            traindetail::scale(esum, 1.0 / std::max(nbatches, 1));
            double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            double lr_now = sched.lr;
            sched.step(esum.L_G);
            emit("1b", epoch, esum, lr_now, seconds);
        }
    }

    // ---- Stage 2 --------------------------------------------------------

    void run_stage2(Checkpoint& ck) {
        auto h_params = ck.hnet->params();
        auto e_params = ck.enet->params();
        auto g_params = ck.gnet->params();
        auto d_params = ck.dnet->params();
        std::vector<nn::Param*> heg = h_params;
        heg.insert(heg.end(), e_params.begin(), e_params.end());
        heg.insert(heg.end(), g_params.begin(), g_params.end());

        nn::Adam adam(heg, cfg_.lr);
        PlateauScheduler sched{cfg_.lr, cfg_.lr_decay_factor, cfg_.plateau_patience};

        const bool noise_on = cfg_.toggles.use_noise_layer;
        std::unique_ptr<NoiseLayer> noise;
        if (noise_on) noise = std::make_unique<NoiseLayer>(cfg_.noise);

        const double eta = effective_eta();
        const double l1 = cfg_.weights.lambda1, l2w = cfg_.weights.lambda2,
                     l3 = cfg_.weights.lambda3;
        const int B = cfg_.batch_size;

        for (int epoch = 0; epoch < cfg_.epochs_stage2; ++epoch) {
            auto t0 = std::chrono::steady_clock::now();
            auto order = traindetail::epoch_order(covers_.size(), cfg_.seed, "s2", epoch);
            LossBreakdown esum;
            int nbatches = 0;

            for (size_t bstart = 0; bstart + B <= order.size(); bstart += B) {
                traindetail::zero_grads(heg);
                traindetail::zero_grads(d_params);  // frozen: never stepped
                LossBreakdown bsum;

                for (int s = 0; s < B; ++s) {
                    const Tensor& I_o = covers_[order[bstart + s]];
                    WatermarkImage wm = sample_wm("s2", epoch, bstart + s);
                    Tensor wm_t = wm.to_tensor();
                    LossBreakdown parts;

                    // forward: guide -> embed -> (noise) -> extract -> guide'
                    Subnet::PassCtxPtr cg1, ch1, ch2, cg2, ch3;
                    // the first-stage outputs pass through the same level grid
                    // as deployment; gradients treat the snap as identity
                    // (straight-through)
                    Tensor a1 = quantize_levels(ck.gnet->forward(I_o, cg1),
                                                cfg_.guide_quant_levels);
                    Tensor I_g = ck.hnet->forward(concat_channels(a1, blank_), ch1);
                    Tensor I_t = ck.hnet->forward(concat_channels(I_g, wm_t), ch2);
                    Tensor I_w = I_o + I_t - I_g;
                    Tensor a2 = quantize_levels(ck.gnet->forward(I_w, cg2),
                                                cfg_.guide_quant_levels);
                    Tensor I_gp = ck.hnet->forward(concat_channels(a2, blank_), ch3);

                    Tensor dI_w(3, I_w.h, I_w.w);
                    Tensor dI_g(3, I_g.h, I_g.w);

                    // guiding losses (full Guider outputs)
                    parts.g = l2_loss(I_g, I_gp);
                    Tensor dI_gp = l2_grad(I_gp, I_g, l3);
                    dI_g += l2_grad(I_g, I_gp, l3);
                    if (cfg_.toggles.use_consistency_loss) {
                        parts.c = l2_loss(I_o, I_g) + l2_loss(I_w, I_gp);
                        dI_g += l2_grad(I_g, I_o, l3);
                        dI_gp += l2_grad(I_gp, I_w, l3);
                        dI_w += l2_grad(I_w, I_gp, l3);
                    }
                    parts.L_G = parts.g + parts.c;

                    // recover-side guider path feeds gradient back into I_w
                    {
                        Tensor gcat = ck.hnet->backward(dI_gp, *ch3);
                        Tensor da2 = slice_channels(gcat, 0, 3);
                        dI_w += ck.gnet->backward(da2, *cg2);
                    }

                    // fidelity losses
                    if (cfg_.toggles.use_l2) {
                        parts.l2 = l2_loss(I_o, I_w);
                        dI_w += l2_grad(I_w, I_o, l1);
                    }
                    if (cfg_.toggles.use_vgg) parts.vgg = perceptual_.loss(I_w, I_o, &dI_w, l1);
                    if (eta > 0) {
                        Subnet::PassCtxPtr cr, cf;
                        Tensor d_real = ck.dnet->forward(I_o, cr);
                        Tensor d_fake = ck.dnet->forward(I_w, cf);
                        parts.adv = adversarial_loss(d_real, d_fake);
                        dI_w += ck.dnet->backward(adversarial_grad_fake(d_fake, eta), *cf);
                    }

                    // extraction losses
                    {
                        Subnet::PassCtxPtr ce1, ce2;
                        Tensor raw = ck.enet->forward(I_w, ce1);
                        parts.wm = l2_loss(wm_t, raw);
                        dI_w += ck.enet->backward(l2_grad(raw, wm_t, l2w), *ce1);
                        Tensor raw0 = ck.enet->forward(I_o, ce2);
                        parts.nw = l2_loss(raw0, blank_);
                        ck.enet->backward(l2_grad(raw0, blank_, l2w), *ce2);
                    }
                    if (noise_on) {
                        NoiseCtx nctx;
                        Tensor noised = noise->forward(I_w, cfg_.seed ^ (epoch * 2654435761ULL),
                                                       bstart + s, &nctx);
                        Subnet::PassCtxPtr ce3;
                        Tensor rawn = ck.enet->forward(noised, ce3);
                        parts.noise = l2_loss(wm_t, rawn);
                        Tensor gn = ck.enet->backward(
                            l2_grad(rawn, wm_t, l2w * cfg_.noise.strength_weight), *ce3);
                        dI_w += noise->backward(gn, nctx);
                    }

                    // embed equation: I_w = I_o + I_t - I_g
                    Tensor dI_t = dI_w;
                    dI_g -= dI_w;
                    {
                        Tensor gcat = ck.hnet->backward(dI_t, *ch2);
                        dI_g += slice_channels(gcat, 0, 3);
                    }
                    {
                        Tensor gcat = ck.hnet->backward(dI_g, *ch1);
                        Tensor da1 = slice_channels(gcat, 0, 3);
                        ck.gnet->backward(da1, *cg1);
                    }

                    parts.L_wm = noise_on ? stage1_loss_noisy(parts, cfg_.weights)
                                          : stage1_loss(parts, cfg_.weights);
                    parts.L_C = parts.L_wm + l3 * parts.L_G;
                    if (!std::isfinite(parts.L_C))
                        throw TrainingError("non-finite loss in stage 2, epoch " +
                                            std::to_string(epoch));
                    traindetail::add_into(bsum, parts);
                }

                traindetail::scale_grads(heg, 1.0f / B);
                adam.set_lr(sched.lr);
                adam.step();
                traindetail::scale(bsum, 1.0 / B);
                traindetail::add_into(esum, bsum);
                ++nbatches;
            }

            traindetail::scale(esum, 1.0 / std::max(nbatches, 1));
            double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            double lr_now = sched.lr;
            sched.step(esum.L_C);
            emit("s2", epoch, esum, lr_now, seconds);
        }
    }

    void verify(Checkpoint& ck) {
        size_t n = std::min<size_t>(covers_.size(), 16);
        std::vector<QuantizedImage> qcovers;
        qcovers.reserve(n);
        for (size_t i = 0; i < n; ++i) qcovers.push_back(quantize(covers_[i]));
        WatermarkImage wm =
            random_watermark(cfg_.resolution, cfg_.resolution, cfg_.wm_block, cfg_.seed ^ 0xfeedULL);
        consistency_ = verify_guiding_consistency(ck, qcovers, wm);
        ck.reversibility_verified = consistency_.passes();
        if (!ck.reversibility_verified)
            std::cerr << "warning: guiding consistency tolerance not met (max MSE "
                      << consistency_.max_mse << "); checkpoint flagged reversibility-unverified\n";
    }

    TrainConfig cfg_;
    std::vector<ImageTensor> covers_;
    std::ostream* metrics_;
    PerceptualNet perceptual_;
    Tensor blank_;
    ConsistencyReport consistency_;
};

// Spec-level wrappers --------------------------------------------------------

inline Checkpoint pretrain_stage1a(const TrainConfig& cfg, const std::vector<ImageTensor>& covers,
                                   std::ostream* metrics = nullptr) {
    return Trainer(cfg, covers, metrics).pretrain_stage1a();
}

inline Checkpoint pretrain_stage1b(const TrainConfig& cfg, Checkpoint ck,
                                   const std::vector<ImageTensor>& covers,
                                   std::ostream* metrics = nullptr) {
    return Trainer(cfg, covers, metrics).pretrain_stage1b(std::move(ck));
}

inline Checkpoint train_stage2(const TrainConfig& cfg, Checkpoint ck,
                               const std::vector<ImageTensor>& covers,
                               std::ostream* metrics = nullptr) {
    return Trainer(cfg, covers, metrics).train_stage2(std::move(ck));
}

}  // namespace rrw
