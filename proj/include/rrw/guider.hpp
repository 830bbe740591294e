#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrw/checkpoint.hpp"
#include "rrw/image.hpp"
#include "rrw/losses.hpp"
#include "rrw/subnets.hpp"

namespace rrw {

// Deterministic forward callables for the deployment pipeline. Decoupled from
// the network classes so the residual algebra is testable with stub functions.
struct PipelineFns {
    std::function<ImageTensor(const ImageTensor&, const WatermarkImage&)> hide;
    std::function<ImageTensor(const ImageTensor&)> guide_net;
    std::function<Tensor(const ImageTensor&)> extract_raw;
};

inline PipelineFns pipeline_from(const Checkpoint& ck) {
    if (!ck.hnet || !ck.gnet) throw std::invalid_argument("checkpoint: missing subnet");
    PipelineFns fns;
    fns.hide = [&ck](const ImageTensor& img, const WatermarkImage& wm) {
        return hnet_forward(*ck.hnet, img, wm);
    };
    fns.guide_net = [&ck](const ImageTensor& img) {
        return quantize_levels(gnet_forward(*ck.gnet, img), ck.config.guide_quant_levels);
    };
    if (ck.enet)
        fns.extract_raw = [&ck](const ImageTensor& img) { return enet_forward(*ck.enet, img); };
    return fns;
}

struct ToleranceSpec {
    double epsilon_mse = 1e-6;
};

// Pre-quantization guiding intermediate: H(G(img) || blank).
inline ImageTensor guide_raw(const PipelineFns& fns, const QuantizedImage& img) {
    ImageTensor real = dequantize(img);
    ImageTensor primary = fns.guide_net(real);
    return fns.hide(primary, blank_watermark(img.h, img.w));
}

// I_g = quantize(H(G(dequantize(img)) || blank)); identical on both the embed
// and recover sides once the pre-quantization error falls below rounding.
inline QuantizedImage guide(const PipelineFns& fns, const QuantizedImage& img) {
    return quantize(guide_raw(fns, img));
}

inline QuantizedImage guide(const Checkpoint& ck, const QuantizedImage& img) {
    return guide(pipeline_from(ck), img);
}

/// Signed integer guiding residual: round(255 * (H(I_g||wm) - I_g)), computed
// from the already-quantized guiding image so both sides agree bit-for-bit.
inline Residual compute_residual(const PipelineFns& fns, const QuantizedImage& guiding,
                                 const WatermarkImage& wm) {
    ImageTensor g = dequantize(guiding);
    ImageTensor t = fns.hide(g, wm);
    Residual r(guiding.c, guiding.h, guiding.w);
    for (size_t i = 0; i < r.data.size(); ++i) {
        double d = 255.0 * (static_cast<double>(t.data[i]) - g.data[i]);
        r.data[i] = static_cast<int16_t>(std::clamp(round_half_away(d), -255, 255));
    }
    return r;
}

inline Residual compute_residual(const Checkpoint& ck, const QuantizedImage& guiding,
                                 const WatermarkImage& wm) {
    return compute_residual(pipeline_from(ck), guiding, wm);
}

enum class EmbedMode { strict, best_effort };

struct EmbedResult {
    QuantizedImage watermarked;
    Residual residual;
    QuantizedImage guiding;
    int saturation_count = 0;
    // Number of embed-side refinement passes (1 = the first residual was
    // already self-consistent) and whether a fixed point was reached.
    int iterations = 0;
    bool converged = false;
};

struct SaturationError : std::runtime_error {
    int count;
    std::vector<size_t> positions;  // flat indices of the first clamped elements
    SaturationError(int n, std::vector<size_t> pos, const std::string& msg)
        : std::runtime_error(msg), count(n), positions(std::move(pos)) {}
};

// Embedding iterates the residual to a fixed point of
//   r = compute_residual(guide(clamp(cover + r)), wm)
// starting from r_0 = compute_residual(guide(cover), wm). The recovery side
// recomputes exactly that quantity from the watermarked image, so once a
// fixed point is reached, recovery is bit-exact wherever no clamping
// occurred. When the guiding image is already insensitive to the residual
// (the trained regime), the first candidate is itself the fixed point and
// the loop exits after one verification pass.
inline constexpr int kEmbedMaxIterations = 8;

inline EmbedResult embed(const PipelineFns& fns, const QuantizedImage& cover,
                         const WatermarkImage& wm, EmbedMode mode = EmbedMode::best_effort) {
    if (cover.h != wm.h || cover.w != wm.w)
        throw std::invalid_argument("embed: cover and watermark sizes differ");
    EmbedResult out;
    out.guiding = guide(fns, cover);
    out.residual = compute_residual(fns, out.guiding, wm);
    std::vector<size_t> clamped;
    auto apply = [&] {
        out.watermarked = QuantizedImage(cover.c, cover.h, cover.w);
        out.saturation_count = 0;
        clamped.clear();
        for (size_t i = 0; i < cover.data.size(); ++i) {
            int v = cover.data[i] + out.residual.data[i];
            int cv = std::clamp(v, 0, 255);
            if (cv != v) {
                ++out.saturation_count;
                if (clamped.size() < 16) clamped.push_back(i);
            }
            out.watermarked.data[i] = static_cast<int16_t>(cv);
        }
    };
    apply();
    for (out.iterations = 1; out.iterations <= kEmbedMaxIterations; ++out.iterations) {
        QuantizedImage guiding_next = guide(fns, out.watermarked);
        Residual next = compute_residual(fns, guiding_next, wm);
        if (next.data == out.residual.data) {
            out.guiding = std::move(guiding_next);
            out.converged = true;
            break;
        }
        out.residual = std::move(next);
        out.guiding = std::move(guiding_next);
        apply();
    }
    if (mode == EmbedMode::strict && out.saturation_count > 0) {
        std::string msg = "saturation would break reversibility: " +
                          std::to_string(out.saturation_count) + " clamped elements, first at";
        for (size_t p : clamped) msg += " " + std::to_string(p);
        throw SaturationError(out.saturation_count, std::move(clamped), msg);
    }
    if (mode == EmbedMode::strict && !out.converged)
        throw std::runtime_error(
            "embed: residual did not reach a fixed point within " +
            std::to_string(kEmbedMaxIterations) + " refinement passes");
    return out;
}

inline EmbedResult embed(const Checkpoint& ck, const QuantizedImage& cover,
                         const WatermarkImage& wm, EmbedMode mode = EmbedMode::best_effort) {
    return embed(pipeline_from(ck), cover, wm, mode);
}

// Raw extractor output is always binarized before use; recovery needs the
// exact bit plane, never the analog prediction.
inline WatermarkImage extract(const PipelineFns& fns, const QuantizedImage& img) {
    if (!fns.extract_raw) throw std::invalid_argument("extract: missing extractor");
    return binarize_watermark(fns.extract_raw(dequantize(img)));
}

inline WatermarkImage extract(const Checkpoint& ck, const QuantizedImage& img) {
    return extract(pipeline_from(ck), img);
}

// I_o' = I_w - (H(I_g'||wm') - I_g') in integer arithmetic.
inline QuantizedImage recover(const PipelineFns& fns, const QuantizedImage& watermarked,
                              const WatermarkImage& wm_extracted) {
    QuantizedImage guiding = guide(fns, watermarked);
    Residual r = compute_residual(fns, guiding, wm_extracted);
    QuantizedImage out(watermarked.c, watermarked.h, watermarked.w);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] =
            static_cast<int16_t>(std::clamp(watermarked.data[i] - r.data[i], 0, 255));
    return out;
}

inline QuantizedImage recover(const Checkpoint& ck, const QuantizedImage& watermarked,
                              const WatermarkImage& wm_extracted) {
    return recover(pipeline_from(ck), watermarked, wm_extracted);
}

// ---------------------------------------------------------------------------
/// Guiding-consistency verification: embeds each cover, recomputes the guiding
// intermediate from the watermarked image, and reports the pre-quantization
// MSE plus the post-quantization equality flag.

struct ConsistencyRow {
    double mse = 0.0;
    bool quantized_equal = false;
    int saturation_count = 0;
};

struct ConsistencyReport {
    std::vector<ConsistencyRow> rows;
    double max_mse = 0.0;
    bool all_quantized_equal = true;

    bool passes(const ToleranceSpec& tol = {}) const {
        return !rows.empty() && max_mse <= tol.epsilon_mse;
    }
};

inline ConsistencyReport verify_guiding_consistency(const PipelineFns& fns,
                                                    const std::vector<QuantizedImage>& covers,
                                                    const WatermarkImage& wm) {
    ConsistencyReport report;
    for (const QuantizedImage& cover : covers) {
        ConsistencyRow row;
        ImageTensor raw_embed_side = guide_raw(fns, cover);
        EmbedResult er = embed(fns, cover, wm, EmbedMode::best_effort);
        ImageTensor raw_recover_side = guide_raw(fns, er.watermarked);
        row.mse = l2_loss(raw_embed_side, raw_recover_side);
        row.quantized_equal = quantize(raw_embed_side) == quantize(raw_recover_side);
        row.saturation_count = er.saturation_count;
        report.max_mse = std::max(report.max_mse, row.mse);
        report.all_quantized_equal = report.all_quantized_equal && row.quantized_equal;
        report.rows.push_back(row);
    }
    return report;
}

inline ConsistencyReport verify_guiding_consistency(const Checkpoint& ck,
                                                    const std::vector<QuantizedImage>& covers,
                                                    const WatermarkImage& wm) {
    return verify_guiding_consistency(pipeline_from(ck), covers, wm);
}

}  // namespace rrw
