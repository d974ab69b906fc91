#pragma once

#include <utility>
#include <vector>

#include "voxkit/mlp.hpp"
#include "voxkit/tensor.hpp"

namespace voxkit {

struct ImagePatchConfig {
    int32_t patch_h = 16;  // pixels
    int32_t patch_w = 16;
    int64_t out_dim = 64;  // encoder output width

    void validate() const {
        if (patch_h < 1 || patch_w < 1 || out_dim < 1)
            throw ConfigError("patch config: sides and out_dim must be >= 1");
    }
};

// RGB image, row-major (y, x, channel), values normalized to [0,1].
template <typename T>
struct Image {
    int32_t h = 0;
    int32_t w = 0;
    std::vector<T> data;

    Image() = default;
    Image(int32_t height, int32_t width, T fill = T(0))
        : h(height), w(width), data(size_t(height) * size_t(width) * 3, fill) {}

    T& at(int32_t y, int32_t x, int32_t c) { return data[(size_t(y) * w + x) * 3 + c]; }
    const T& at(int32_t y, int32_t x, int32_t c) const {
        return data[(size_t(y) * w + x) * 3 + c];
    }
};

// Non-overlapping patches in grid row-major order, one flattened patch per row.
template <typename T>
struct PatchSet {
    Matrix<T> patches;  // N_c x (patch_h*patch_w*3)
    int32_t patch_h = 0;
    int32_t patch_w = 0;
    int32_t grid_h = 0;  // patches per column
    int32_t grid_w = 0;  // patches per row
    std::vector<std::pair<int32_t, int32_t>> origin;  // (row, col) in the patch grid

    int64_t count() const { return patches.rows; }
};

template <typename T>
PatchSet<T> partition_image(const Image<T>& img, const ImagePatchConfig& cfg) {
    cfg.validate();
    if (img.h % cfg.patch_h != 0 || img.w % cfg.patch_w != 0)
        throw ConfigError("image dimensions must be multiples of the patch size; no implicit padding");
    PatchSet<T> ps;
    ps.patch_h = cfg.patch_h;
    ps.patch_w = cfg.patch_w;
    ps.grid_h = img.h / cfg.patch_h;
    ps.grid_w = img.w / cfg.patch_w;
    const int64_t n = int64_t(ps.grid_h) * ps.grid_w;
    const int64_t row_len = int64_t(cfg.patch_h) * cfg.patch_w * 3;
    ps.patches = Matrix<T>(n, row_len);
    ps.origin.reserve(size_t(n));
    int64_t pid = 0;
    for (int32_t gr = 0; gr < ps.grid_h; ++gr) {
        for (int32_t gc = 0; gc < ps.grid_w; ++gc, ++pid) {
            ps.origin.emplace_back(gr, gc);
            T* row = ps.patches.row(pid);
            int64_t k = 0;
            for (int32_t py = 0; py < cfg.patch_h; ++py)
                for (int32_t px = 0; px < cfg.patch_w; ++px)
                    for (int32_t c = 0; c < 3; ++c)
                        row[k++] = img.at(gr * cfg.patch_h + py, gc * cfg.patch_w + px, c);
        }
    }
    return ps;
}

// Shared-MLP patch encoding; one feature row per patch.
template <typename T>
Matrix<T> encode_patches(const PatchSet<T>& ps, const Mlp<T>& mlp,
                         typename Mlp<T>::Cache* cache = nullptr, bool training = false,
                         std::mt19937_64* drop_eng = nullptr) {
    return mlp.forward(ps.patches, cache, training, drop_eng);
}

}  // namespace voxkit
