#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "memjscc/ad.hpp"
#include "memjscc/rng.hpp"

namespace memjscc {

// Images are stored one per row, channel-major within the row
// (index = c*H*W + y*W + x), pixel values in [0,1].
struct ImageDataset {
    int height = 32, width = 32, channels = 3;
    ad::Mat pixels;  // [N, C*H*W]

    Eigen::Index count() const { return pixels.rows(); }
    int pixel_count() const { return channels * height * width; }
};

// Reads the standard 32x32 RGB benchmark binary layout: records of
// 1 label byte + 3072 image bytes (red plane, green plane, blue plane,
// row-major within each plane), which matches our channel-major rows.
// `path` may be a single .bin file or a directory, in which case every
// *.bin file inside is read in lexicographic order.
inline ImageDataset load_cifar10(const std::filesystem::path& path, Eigen::Index max_images = -1) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& e : std::filesystem::directory_iterator(path))
            if (e.path().extension() == ".bin") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw std::runtime_error("load_cifar10: no .bin files under " + path.string());

    constexpr int kRecord = 1 + 3072;
    std::vector<std::uint8_t> bytes;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw std::runtime_error("load_cifar10: cannot open " + f.string());
        std::vector<std::uint8_t> chunk((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        if (chunk.size() % kRecord != 0)
            throw std::runtime_error("load_cifar10: " + f.string() + " is not a whole record count");
        bytes.insert(bytes.end(), chunk.begin(), chunk.end());
    }
    Eigen::Index n = static_cast<Eigen::Index>(bytes.size()) / kRecord;
    if (max_images >= 0) n = std::min(n, max_images);
    ImageDataset ds;
    ds.pixels = ad::Mat(n, 3072);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < 3072; ++j)
            ds.pixels(i, j) =
                static_cast<double>(bytes[static_cast<std::size_t>(i) * kRecord + 1 +
                                          static_cast<std::size_t>(j)]) /
                255.0;
    return ds;
}

// Deterministic synthetic corpus with image-like structure: a smooth
// two-tone gradient background plus a handful of solid rectangles and soft
// disks, independently colored per channel. Each image depends only on
// (seed, index), so any subset is reproducible.
inline ImageDataset synthetic_images(Eigen::Index count, std::uint64_t seed, int height = 32,
                                     int width = 32, int channels = 3) {
    if (count < 0) throw std::invalid_argument("synthetic_images: negative count");
    ImageDataset ds;
    ds.height = height;
    ds.width = width;
    ds.channels = channels;
    ds.pixels = ad::Mat(count, channels * height * width);
    for (Eigen::Index i = 0; i < count; ++i) {
        RngStream rng(derive_stream_seed(seed, static_cast<std::uint64_t>(i)));
        std::vector<double> img(static_cast<std::size_t>(channels) * height * width);
        // Background gradient.
        for (int c = 0; c < channels; ++c) {
            const double a = rng.uniform(), b = rng.uniform();
            const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double u = (gx * x / (width - 1.0) + gy * y / (height - 1.0) + 2.0) / 4.0;
                    img[static_cast<std::size_t>(c) * height * width + static_cast<std::size_t>(y) * width + x] =
                        a + (b - a) * u;
                }
        }
        // Shapes.
        const int n_shapes = static_cast<int>(rng.uniform_int(2, 5));
        for (int s = 0; s < n_shapes; ++s) {
            const bool disk = rng.uniform() < 0.5;
            const double cx = rng.uniform(0.0, width - 1.0), cy = rng.uniform(0.0, height - 1.0);
            const double r = rng.uniform(2.0, width / 3.0);
            std::vector<double> color(static_cast<std::size_t>(channels));
            for (auto& v : color) v = rng.uniform();
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    double w;
                    if (disk) {
                        const double d = std::hypot(x - cx, y - cy);
                        w = 1.0 / (1.0 + std::exp(2.0 * (d - r)));
                    } else {
                        w = (std::abs(x - cx) <= r && std::abs(y - cy) <= 0.7 * r) ? 1.0 : 0.0;
                    }
                    if (w <= 0.0) continue;
                    for (int c = 0; c < channels; ++c) {
                        double& p = img[static_cast<std::size_t>(c) * height * width +
                                        static_cast<std::size_t>(y) * width + x];
                        p = (1.0 - w) * p + w * color[static_cast<std::size_t>(c)];
                    }
                }
        }
        for (int j = 0; j < ds.pixel_count(); ++j)
            ds.pixels(i, j) = std::clamp(img[static_cast<std::size_t>(j)], 0.0, 1.0);
    }
    return ds;
}

inline ImageDataset slice_images(const ImageDataset& ds, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || start + count > ds.count())
        throw std::out_of_range("slice_images: range outside dataset");
    ImageDataset out;
    out.height = ds.height;
    out.width = ds.width;
    out.channels = ds.channels;
    out.pixels = ds.pixels.middleRows(start, count);
    return out;
}

}  // namespace memjscc
