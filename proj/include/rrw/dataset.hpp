#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rrw/attacks.hpp"
#include "rrw/image.hpp"
#include "rrw/rng.hpp"

namespace rrw {

struct DatasetManifest {
    std::string root;
    int resize = 0;
    std::vector<std::string> train_files;
    std::vector<std::string> val_files;
    int skipped = 0;  // files present but not losslessly decodable

    size_t size() const { return train_files.size() + val_files.size(); }
};

inline QuantizedImage load_cover(const std::string& path, int resize) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot decode image: " + path);
    if (m.rows != resize || m.cols != resize)
        cv::resize(m, m, cv::Size(resize, resize), 0, 0, cv::INTER_AREA);
    return detail::from_mat(m);
}

// Deterministic ingestion: files sorted by name, shuffled and split by the
// seeded generator, corrupt files skipped with a warning.
inline DatasetManifest ingest_dataset(const std::string& dir, int resize, double split_ratio,
                                      uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);

    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());

    DatasetManifest mf;
    mf.root = dir;
    mf.resize = resize;

    std::vector<std::string> good;
    for (const auto& f : files) {
        cv::Mat m = cv::imread(f, cv::IMREAD_COLOR);
        if (m.empty()) {
            std::cerr << "warning: skipping undecodable file " << f << "\n";
            ++mf.skipped;
            continue;
        }
        good.push_back(f);
    }
    if (good.empty()) throw std::runtime_error("no decodable images in " + dir);

    // Fisher-Yates with the seeded generator
    Rng rng(seed ^ 0x64617461ULL);
    for (size_t i = good.size(); i > 1; --i)
        std::swap(good[i - 1], good[rng.below(static_cast<uint32_t>(i))]);

    size_t n_train = static_cast<size_t>(good.size() * split_ratio + 0.5);
    n_train = std::min(n_train, good.size());
    mf.train_files.assign(good.begin(), good.begin() + n_train);
    mf.val_files.assign(good.begin() + n_train, good.end());
    return mf;
}

// Block-structured random binary plane: bits drawn on a coarse grid and
// replicated, giving each bit spatial support (binary watermark images in the
// wild are logos with exactly this kind of redundancy).
inline WatermarkImage random_watermark(int h, int w, int block, uint64_t seed) {
    WatermarkImage wm(h, w);
    Rng rng(seed ^ 0x776d0000ULL);
    const int gh = (h + block - 1) / block, gw = (w + block - 1) / block;
    std::vector<uint8_t> grid(static_cast<size_t>(gh) * gw);
    for (auto& b : grid) b = rng.coin() ? 1 : 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            wm.bits[static_cast<size_t>(y) * w + x] =
                grid[static_cast<size_t>(y / block) * gw + x / block];
    return wm;
}

}  // namespace rrw
