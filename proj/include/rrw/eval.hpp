#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rrw/attacks.hpp"
#include "rrw/guider.hpp"
#include "rrw/metrics.hpp"

namespace rrw {

struct EvalRow {
    std::string attack;
    std::string params;
    double acc = 0.0;
    double ber_ = 0.0;
    double psnr_watermarked = 0.0;  // PSNR(attacked I_w, reference)
    double psnr_recovered = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string error;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double clean_psnr = 0.0;  // PSNR(I_o, I_w) aggregate over covers
    double clean_ssim = 0.0;

    std::string to_table() const {
        std::ostringstream os;
        char line[256];
        std::snprintf(line, sizeof line, "%-16s %-18s %8s %8s %10s %10s\n", "attack", "params",
                      "ACC", "BER", "PSNR(w)", "PSNR(rec)");
        os << line;
        os << std::string(74, '-') << "\n";
        for (const auto& r : rows) {
            if (r.failed) {
                std::snprintf(line, sizeof line, "%-16s %-18s FAILED: %s\n", r.attack.c_str(),
                              r.params.c_str(), r.error.c_str());
            } else {
                auto p = [](double v) {
                    return std::isinf(v) ? std::string("inf")
                           : std::isnan(v) ? std::string("-")
                                           : [&] {
                                                 char b[32];
                                                 std::snprintf(b, sizeof b, "%.4f", v);
                                                 return std::string(b);
                                             }();
                };
                std::snprintf(line, sizeof line, "%-16s %-18s %8s %8s %10s %10s\n",
                              r.attack.c_str(), r.params.c_str(), p(r.acc).c_str(),
                              p(r.ber_).c_str(), p(r.psnr_watermarked).c_str(),
                              p(r.psnr_recovered).c_str());
            }
            os << line;
        }
        std::snprintf(line, sizeof line, "clean: PSNR=%.4f SSIM=%.4f\n", clean_psnr, clean_ssim);
        os << line;
        return os.str();
    }

    // One JSON record per row; infinities serialized as strings.
    std::string to_jsonl() const {
        std::ostringstream os;
        auto num = [](double v) -> nlohmann::json {
            if (std::isinf(v)) return "inf";
            if (std::isnan(v)) return nullptr;
            return v;
        };
        for (const auto& r : rows) {
            nlohmann::json j{{"attack", r.attack}, {"params", r.params}};
            if (r.failed) {
                j["failed"] = true;
                j["error"] = r.error;
            } else {
                j["acc"] = num(r.acc);
                j["ber"] = num(r.ber_);
                j["psnr_watermarked"] = num(r.psnr_watermarked);
                j["psnr_recovered"] = num(r.psnr_recovered);
            }
            os << j.dump() << "\n";
        }
        nlohmann::json agg{{"clean_psnr", num(clean_psnr)}, {"clean_ssim", num(clean_ssim)}};
        os << agg.dump() << "\n";
        return os.str();
    }
};

namespace detail {

inline double mean_psnr(const std::vector<double>& vals) {
    bool all_inf = true;
    double sum = 0.0;
    int finite = 0;
    for (double v : vals) {
        if (std::isinf(v)) continue;
        all_inf = false;
        sum += v;
        ++finite;
    }
    if (all_inf) return std::numeric_limits<double>::infinity();
    return sum / finite;
}

}  // namespace detail

// Per attack: embed -> attack -> extract -> BER/ACC. The clean channel is
// always reported as the first row.
inline EvalReport evaluate_robustness(const Checkpoint& ck,
                                      const std::vector<QuantizedImage>& covers,
                                      const WatermarkImage& wm,
                                      std::vector<AttackSpec> attack_set) {
    PipelineFns fns = pipeline_from(ck);
    EvalReport report;

    std::vector<EmbedResult> embeds;
    embeds.reserve(covers.size());
    std::vector<double> clean_psnrs, clean_ssims;
    for (const auto& cover : covers) {
        embeds.push_back(embed(fns, cover, wm, EmbedMode::best_effort));
        clean_psnrs.push_back(psnr(cover, embeds.back().watermarked));
        clean_ssims.push_back(ssim(cover, embeds.back().watermarked));
    }
    report.clean_psnr = detail::mean_psnr(clean_psnrs);
    report.clean_ssim =
        std::accumulate(clean_ssims.begin(), clean_ssims.end(), 0.0) / clean_ssims.size();

    std::stable_sort(attack_set.begin(), attack_set.end(),
                     [](const AttackSpec& a, const AttackSpec& b) { return a.kind < b.kind; });

    {
        EvalRow row;
        row.attack = "none";
        row.params = "-";
        double bsum = 0.0;
        std::vector<double> ps;
        for (size_t i = 0; i < covers.size(); ++i) {
            bsum += ber(wm, extract(fns, embeds[i].watermarked));
            ps.push_back(psnr(covers[i], embeds[i].watermarked));
        }
        row.ber_ = bsum / covers.size();
        row.acc = 1.0 - row.ber_;
        row.psnr_watermarked = detail::mean_psnr(ps);
        report.rows.push_back(row);
    }

    for (const AttackSpec& spec : attack_set) {
        EvalRow row;
        row.attack = attack_name(spec.kind);
        row.params = spec.params_str();
        try {
            double bsum = 0.0;
            std::vector<double> ps;
            for (size_t i = 0; i < covers.size(); ++i) {
                AttackSpec s = spec;
                s.seed = spec.seed ^ (0x517cc1b727220a95ULL * (i + 1));
                QuantizedImage attacked = apply_attack(s, embeds[i].watermarked);
                bsum += ber(wm, extract(fns, attacked));
                ps.push_back(psnr(embeds[i].watermarked, attacked));
            }
            row.ber_ = bsum / covers.size();
            row.acc = 1.0 - row.ber_;
            row.psnr_watermarked = detail::mean_psnr(ps);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        report.rows.push_back(row);
    }
    return report;
}

// Recovery after distortion: for every attack, embed -> attack -> extract ->
// recover, reporting PSNR(attacked watermarked, attacked cover) against
// PSNR(recovered, attacked cover). The same seed is used on both sides so the
// distortion realization is identical.
inline EvalReport evaluate_recovery_after_distortion(const Checkpoint& ck,
                                                     const std::vector<QuantizedImage>& covers,
                                                     const WatermarkImage& wm,
                                                     std::vector<AttackSpec> attack_set) {
    PipelineFns fns = pipeline_from(ck);
    EvalReport report;

    std::vector<EmbedResult> embeds;
    embeds.reserve(covers.size());
    std::vector<double> clean_psnrs, clean_ssims;
    for (const auto& cover : covers) {
        embeds.push_back(embed(fns, cover, wm, EmbedMode::best_effort));
        clean_psnrs.push_back(psnr(cover, embeds.back().watermarked));
        clean_ssims.push_back(ssim(cover, embeds.back().watermarked));
    }
    report.clean_psnr = detail::mean_psnr(clean_psnrs);
    report.clean_ssim =
        std::accumulate(clean_ssims.begin(), clean_ssims.end(), 0.0) / clean_ssims.size();

    std::stable_sort(attack_set.begin(), attack_set.end(),
                     [](const AttackSpec& a, const AttackSpec& b) { return a.kind < b.kind; });

    {
        // no-attack baseline row: exact recovery shows up as PSNR(rec)=inf
        EvalRow row;
        row.attack = "none";
        row.params = "-";
        std::vector<double> pw, pr;
        double bsum = 0.0;
        for (size_t i = 0; i < covers.size(); ++i) {
            WatermarkImage wx = extract(fns, embeds[i].watermarked);
            QuantizedImage rec = recover(fns, embeds[i].watermarked, wx);
            pw.push_back(psnr(embeds[i].watermarked, covers[i]));
            pr.push_back(psnr(rec, covers[i]));
            bsum += ber(wm, wx);
        }
        row.psnr_watermarked = detail::mean_psnr(pw);
        row.psnr_recovered = detail::mean_psnr(pr);
        row.ber_ = bsum / covers.size();
        row.acc = 1.0 - row.ber_;
        report.rows.push_back(row);
    }

    for (const AttackSpec& spec : attack_set) {
        EvalRow row;
        row.attack = attack_name(spec.kind);
        row.params = spec.params_str();
        try {
            std::vector<double> pw, pr;
            double bsum = 0.0;
            for (size_t i = 0; i < covers.size(); ++i) {
                AttackSpec s = spec;
                s.seed = spec.seed ^ (0x517cc1b727220a95ULL * (i + 1));
                QuantizedImage attacked_w = apply_attack(s, embeds[i].watermarked);
                QuantizedImage attacked_o = apply_attack(s, covers[i]);
                WatermarkImage wx = extract(fns, attacked_w);
                QuantizedImage rec = recover(fns, attacked_w, wx);
                pw.push_back(psnr(attacked_w, attacked_o));
                pr.push_back(psnr(rec, attacked_o));
                bsum += ber(wm, wx);
            }
            row.psnr_watermarked = detail::mean_psnr(pw);
            row.psnr_recovered = detail::mean_psnr(pr);
            row.ber_ = bsum / covers.size();
            row.acc = 1.0 - row.ber_;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace rrw
