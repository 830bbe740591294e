#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrw/image.hpp"
#include "rrw/rng.hpp"

namespace rrw {

enum class AttackKind {
    gaussian_noise,
    gaussian_blur,
    salt_pepper,
    jpeg,
    median_filter,
    scale,
    crop,
    dropout,
    external_plugin,
};

inline const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::gaussian_noise: return "gaussian_noise";
        case AttackKind::gaussian_blur: return "gaussian_blur";
        case AttackKind::salt_pepper: return "salt_pepper";
        case AttackKind::jpeg: return "jpeg";
        case AttackKind::median_filter: return "median_filter";
        case AttackKind::scale: return "scale";
        case AttackKind::crop: return "crop";
        case AttackKind::dropout: return "dropout";
        case AttackKind::external_plugin: return "external_plugin";
    }
    return "?";
}

struct AttackSpec {
    AttackKind kind = AttackKind::gaussian_noise;
    double sigma = 0.2;       // gaussian_noise (on the [0,1] scale) / gaussian_blur
    int kernel = 7;           // gaussian_blur / median_filter
    double density = 0.1;     // salt_pepper
    int qf = 50;              // jpeg
    double factor = 0.5;      // scale
    int crop_size = 50;       // crop (zero-filled square)
    double fraction = 0.3;    // dropout
    std::string plugin_cmd;   // external_plugin: "cmd {in} {out}"
    uint64_t seed = 0;

    std::string params_str() const {
        char buf[128];
        switch (kind) {
            case AttackKind::gaussian_noise: std::snprintf(buf, sizeof buf, "sigma=%g", sigma); break;
            case AttackKind::gaussian_blur: std::snprintf(buf, sizeof buf, "kernel=%dx%d", kernel, kernel); break;
            case AttackKind::salt_pepper: std::snprintf(buf, sizeof buf, "density=%g", density); break;
            case AttackKind::jpeg: std::snprintf(buf, sizeof buf, "qf=%d", qf); break;
            case AttackKind::median_filter: std::snprintf(buf, sizeof buf, "kernel=%dx%d", kernel, kernel); break;
            case AttackKind::scale: std::snprintf(buf, sizeof buf, "factor=%g", factor); break;
            case AttackKind::crop: std::snprintf(buf, sizeof buf, "region=%dx%d", crop_size, crop_size); break;
            case AttackKind::dropout: std::snprintf(buf, sizeof buf, "fraction=%g", fraction); break;
            case AttackKind::external_plugin: std::snprintf(buf, sizeof buf, "cmd=%s", plugin_cmd.c_str()); break;
        }
        return buf;
    }
};

// Parameter set of the evaluation suite.
inline std::vector<AttackSpec> default_attack_suite(uint64_t seed = 7) {
    std::vector<AttackSpec> v;
    AttackSpec a;
    a.seed = seed;
    a.kind = AttackKind::gaussian_noise; a.sigma = 0.2; v.push_back(a);
    a.kind = AttackKind::gaussian_blur; a.kernel = 7; v.push_back(a);
    a.kind = AttackKind::salt_pepper; a.density = 0.1; v.push_back(a);
    a.kind = AttackKind::jpeg; a.qf = 50; v.push_back(a);
    a.kind = AttackKind::median_filter; a.kernel = 7; v.push_back(a);
    a.kind = AttackKind::scale; a.factor = 0.5; v.push_back(a);
    a.kind = AttackKind::crop; a.crop_size = 50; v.push_back(a);
    a.kind = AttackKind::dropout; a.fraction = 0.3; v.push_back(a);
    return v;
}

namespace detail {

inline cv::Mat to_mat(const QuantizedImage& q) {
    cv::Mat m(q.h, q.w, CV_8UC3);
    for (int y = 0; y < q.h; ++y)
        for (int x = 0; x < q.w; ++x) {
            auto& px = m.at<cv::Vec3b>(y, x);
            // OpenCV convention is BGR
            px[0] = static_cast<uint8_t>(q.data[(static_cast<size_t>(2) * q.h + y) * q.w + x]);
            px[1] = static_cast<uint8_t>(q.data[(static_cast<size_t>(1) * q.h + y) * q.w + x]);
            px[2] = static_cast<uint8_t>(q.data[(static_cast<size_t>(0) * q.h + y) * q.w + x]);
        }
    return m;
}

inline QuantizedImage from_mat(const cv::Mat& m) {
    QuantizedImage q(3, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& px = m.at<cv::Vec3b>(y, x);
            q.data[(static_cast<size_t>(0) * q.h + y) * q.w + x] = px[2];
            q.data[(static_cast<size_t>(1) * q.h + y) * q.w + x] = px[1];
            q.data[(static_cast<size_t>(2) * q.h + y) * q.w + x] = px[0];
        }
    return q;
}

}  // namespace detail

struct AttackError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline QuantizedImage apply_attack(const AttackSpec& spec, const QuantizedImage& img) {
    switch (spec.kind) {
        case AttackKind::gaussian_noise: {
            if (!(spec.sigma > 0)) throw std::invalid_argument("gaussian_noise: sigma must be > 0");
            Rng rng(spec.seed ^ 0x6e6f697365ULL);
            QuantizedImage out(img.c, img.h, img.w);
            for (size_t i = 0; i < img.size(); ++i) {
                double v = img.data[i] / 255.0 + spec.sigma * rng.normal();
                out.data[i] = static_cast<int16_t>(
                    std::clamp(round_half_away(v * 255.0), 0, 255));
            }
            return out;
        }
        case AttackKind::gaussian_blur: {
            if (spec.kernel < 1 || spec.kernel % 2 == 0)
                throw std::invalid_argument("gaussian_blur: kernel must be odd and positive");
            cv::Mat m = detail::to_mat(img), dst;
            cv::GaussianBlur(m, dst, cv::Size(spec.kernel, spec.kernel), 0);
            return detail::from_mat(dst);
        }
        case AttackKind::salt_pepper: {
            if (spec.density < 0 || spec.density > 1)
                throw std::invalid_argument("salt_pepper: density must be in [0,1]");
            Rng rng(spec.seed ^ 0x73616c74ULL);
            QuantizedImage out = img;
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    if (rng.uniform() < spec.density) {
                        int16_t v = rng.coin() ? 255 : 0;
                        for (int c = 0; c < img.c; ++c)
                            out.data[(static_cast<size_t>(c) * img.h + y) * img.w + x] = v;
                    }
            return out;
        }
        case AttackKind::jpeg: {
            if (spec.qf < 1 || spec.qf > 100) throw std::invalid_argument("jpeg: qf in [1,100]");
            std::vector<uint8_t> buf;
            cv::imencode(".jpg", detail::to_mat(img), buf,
                         {cv::IMWRITE_JPEG_QUALITY, spec.qf});
            cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
            return detail::from_mat(dec);
        }
        case AttackKind::median_filter: {
            if (spec.kernel < 1 || spec.kernel % 2 == 0)
                throw std::invalid_argument("median_filter: kernel must be odd and positive");
            cv::Mat m = detail::to_mat(img), dst;
            cv::medianBlur(m, dst, spec.kernel);
            return detail::from_mat(dst);
        }
        case AttackKind::scale: {
            if (!(spec.factor > 0 && spec.factor < 1))
                throw std::invalid_argument("scale: factor must be in (0,1)");
            cv::Mat m = detail::to_mat(img), small, back;
            cv::resize(m, small, cv::Size(), spec.factor, spec.factor, cv::INTER_LINEAR);
            cv::resize(small, back, cv::Size(img.w, img.h), 0, 0, cv::INTER_LINEAR);
            return detail::from_mat(back);
        }
        case AttackKind::crop: {
            // zero-fill a crop_size x crop_size region; the image keeps its size
            int cs = std::min({spec.crop_size, img.h, img.w});
            if (cs < 1) throw std::invalid_argument("crop: bad region size");
            Rng rng(spec.seed ^ 0x63726f70ULL);
            int y0 = img.h > cs ? static_cast<int>(rng.below(img.h - cs + 1)) : 0;
            int x0 = img.w > cs ? static_cast<int>(rng.below(img.w - cs + 1)) : 0;
            QuantizedImage out = img;
            for (int c = 0; c < img.c; ++c)
                for (int y = y0; y < y0 + cs; ++y)
                    for (int x = x0; x < x0 + cs; ++x)
                        out.data[(static_cast<size_t>(c) * img.h + y) * img.w + x] = 0;
            return out;
        }
        case AttackKind::dropout: {
            if (spec.fraction < 0 || spec.fraction > 1)
                throw std::invalid_argument("dropout: fraction must be in [0,1]");
            Rng rng(spec.seed ^ 0x64726f70ULL);
            QuantizedImage out = img;
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    if (rng.uniform() < spec.fraction)
                        for (int c = 0; c < img.c; ++c)
                            out.data[(static_cast<size_t>(c) * img.h + y) * img.w + x] = 0;
            return out;
        }
        case AttackKind::external_plugin: {
            namespace fs = std::filesystem;
            if (spec.plugin_cmd.empty())
                throw AttackError("external_plugin: empty command");
            fs::path dir = fs::temp_directory_path();
            fs::path in = dir / ("rrw_plugin_in_" + std::to_string(spec.seed) + ".png");
            fs::path out = dir / ("rrw_plugin_out_" + std::to_string(spec.seed) + ".png");
            cv::imwrite(in.string(), detail::to_mat(img));
            std::string cmd = spec.plugin_cmd;
            auto replace = [&](const std::string& tag, const std::string& val) {
                size_t p = cmd.find(tag);
                if (p != std::string::npos) cmd.replace(p, tag.size(), val);
            };
            replace("{in}", in.string());
            replace("{out}", out.string());
            int rc = std::system(cmd.c_str());
            if (rc != 0) throw AttackError("external plugin failed with exit " + std::to_string(rc));
            cv::Mat dec = cv::imread(out.string(), cv::IMREAD_COLOR);
            if (dec.empty()) throw AttackError("external plugin produced no readable output");
            if (dec.rows != img.h || dec.cols != img.w)
                cv::resize(dec, dec, cv::Size(img.w, img.h), 0, 0, cv::INTER_LINEAR);
            return detail::from_mat(dec);
        }
    }
    throw std::invalid_argument("apply_attack: unknown kind");
}

// Makes an external executable usable like a built-in attack. The plugin is
// invoked as `cmd {in} {out}`; a nonzero exit surfaces as a failed row, not a
// harness crash.
inline AttackSpec register_external_attack(const std::string& plugin_cmd, uint64_t seed = 0) {
    AttackSpec spec;
    spec.kind = AttackKind::external_plugin;
    spec.plugin_cmd = plugin_cmd;
    spec.seed = seed;
    return spec;
}

}  // namespace rrw
