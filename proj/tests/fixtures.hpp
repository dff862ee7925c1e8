#pragma once
// Synthetic rasters and random generators shared by the test suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesionlens/lesionlens.hpp"

namespace fixtures {

using lesionlens::BinaryRaster;
using lesionlens::RasterImage;

// Dark RGB disk of the given radius centred in a bright field.
inline RasterImage dark_disk_image(int size, int radius, std::uint8_t fg = 60, std::uint8_t bg = 210) {
    RasterImage img(size, size, 3, bg);
    const double cr = (size - 1) / 2.0, cc = (size - 1) / 2.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= double(radius) * radius)
                for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = fg;
    return img;
}

inline BinaryRaster disk_bits(int size, int radius) {
    BinaryRaster b(size, size);
    const double cr = (size - 1) / 2.0, cc = (size - 1) / 2.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) b(r, c) = (r - cr) * (r - cr) + (c - cc) * (c - cc) <= double(radius) * radius;
    return b;
}

inline BinaryRaster rect_bits(int w, int h, int r0, int c0, int r1, int c1) {
    BinaryRaster b(w, h);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) b(r, c) = 1;
    return b;
}

inline double iou(const BinaryRaster& a, const BinaryRaster& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a.data[i] && b.data[i];
        uni += a.data[i] || b.data[i];
    }
    return uni ? double(inter) / double(uni) : 1.0;
}

inline BinaryRaster random_bits(lesionlens::Rng& rng, int w, int h, double p) {
    BinaryRaster b(w, h);
    for (auto& v : b.data) v = rng.uniform() < p;
    return b;
}

// Random single-component hole-free mask: random blob, largest component, holes filled.
inline lesionlens::LesionMask random_lesion_mask(lesionlens::Rng& rng, int w, int h) {
    while (true) {
        auto bits = random_bits(rng, w, h, 0.55 + 0.3 * rng.uniform());
        bool any = false;
        for (auto v : bits.data) any |= v != 0;
        if (!any) continue;
        return lesionlens::LesionMask::from_bits(lesionlens::fill_holes(lesionlens::largest_component(bits)));
    }
}

inline std::vector<std::vector<double>> random_simplex_rows(lesionlens::Rng& rng, std::size_t T, std::size_t C) {
    std::vector<std::vector<double>> rows(T, std::vector<double>(C));
    for (auto& row : rows) {
        double s = 0.0;
        // Mix of peaked, flat and sparse rows.
        const double mode = rng.uniform();
        for (auto& v : row) {
            double u = rng.uniform();
            if (mode < 0.3) u = std::pow(u, 8.0);
            else if (mode < 0.45 && rng.uniform() < 0.5) u = 0.0;
            v = u;
            s += v;
        }
        if (s == 0.0) {
            row[rng.below(C)] = 1.0;
            s = 1.0;
        }
        for (auto& v : row) v /= s;
    }
    return rows;
}

inline lesionlens::Tensor tensor(std::vector<std::uint32_t> dims, const std::vector<double>& values) {
    return lesionlens::Tensor(std::move(dims), std::vector<float>(values.begin(), values.end()));
}

// Per-test scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lesionlens_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Gaussian clusters at +/- `offset` along `axis` in `dims` dimensions.
inline std::pair<lesionlens::Matrix, lesionlens::Matrix> separated_clusters(std::uint64_t seed, std::size_t dims,
                                                                           std::size_t axis, std::size_t n = 100,
                                                                           double offset = 3.0, double sigma = 0.5) {
    lesionlens::Rng rng(seed);
    lesionlens::Matrix pos(n, dims), neg(n, dims);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dims; ++j) {
            pos(i, j) = rng.normal(j == axis ? offset : 0.0, sigma);
            neg(i, j) = rng.normal(j == axis ? -offset : 0.0, sigma);
        }
    return {pos, neg};
}

// Writes a complete, mutually consistent input set for the full pipeline:
// a two-tone dark lesion image, conv dumps peaking on the lesion, MC samples
// from the reference network, concept features, a linear head and one CAV.
inline lesionlens::AnalysisInputs write_full_inputs(const std::filesystem::path& dir, std::uint64_t seed = 1) {
    using namespace lesionlens;
    Rng rng(seed);
    const int size = 96;
    auto img = dark_disk_image(size, 24);
    for (int r = 0; r < size; ++r)
        for (int c = size / 2; c < size; ++c)
            if (img.at(r, c, 0) == 60) {
                img.at(r, c, 0) = 110;
                img.at(r, c, 1) = 70;
                img.at(r, c, 2) = 40;
            }
    write_image(img, dir / "lesion.ppm");

    const std::uint32_t K = 3, h = 8, w = 8;
    std::vector<double> acts(K * h * w), grads(K * h * w);
    for (std::uint32_t k = 0; k < K; ++k)
        for (std::uint32_t i = 0; i < h; ++i)
            for (std::uint32_t j = 0; j < w; ++j) {
                const double d = std::hypot(i - 3.5, j - 3.5);
                acts[(k * h + i) * w + j] = std::max(0.0, 2.0 - 0.5 * d + 0.1 * rng.normal(0, 1));
                grads[(k * h + i) * w + j] = 0.3 + 0.05 * rng.normal(0, 1);
            }
    write_tensor(tensor({K, h, w}, acts), dir / "acts.mnt");
    write_tensor(tensor({K, h, w}, grads), dir / "grads.mnt");

    const std::vector<double> x{0.4, -0.2, 1.3, 0.8};
    const auto m = reference_sampler(x, 10, seed);
    std::vector<double> flat;
    for (std::size_t t = 0; t < m.passes(); ++t)
        for (double v : m.row(t)) flat.push_back(v);
    write_tensor(tensor({static_cast<std::uint32_t>(m.passes()), static_cast<std::uint32_t>(m.classes())}, flat),
                 dir / "mc.mnt");

    const std::size_t F = 6, C = 8, n = 12;
    std::vector<double> feats(n * F), head(C * (F + 1));
    for (auto& v : feats) v = rng.normal(0, 1);
    for (auto& v : head) v = rng.normal(0, 0.5);
    write_tensor(tensor({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(F)}, feats), dir / "features.mnt");
    write_tensor(tensor({static_cast<std::uint32_t>(C), static_cast<std::uint32_t>(F + 1)}, head), dir / "head.mnt");

    auto [pos, neg] = separated_clusters(seed, F, 2, 30);
    save_concept_vector(train_cav(pos, neg, "large_diameter"), dir / "large_diameter.mnt");

    AnalysisInputs in;
    in.image = dir / "lesion.ppm";
    in.activations = dir / "acts.mnt";
    in.gradients = dir / "grads.mnt";
    in.class_index = 0;
    in.mc_samples = dir / "mc.mnt";
    in.features = dir / "features.mnt";
    in.head = dir / "head.mnt";
    in.cavs = {dir / "large_diameter.mnt"};
    return in;
}

}  // namespace fixtures
