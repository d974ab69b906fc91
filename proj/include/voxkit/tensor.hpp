#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "voxkit/rng.hpp"

namespace voxkit {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grid sizes in voxels, depth (z) / height (y) / width (x).
struct Extent {
    int32_t d = 0;
    int32_t h = 0;
    int32_t w = 0;

    bool operator==(const Extent&) const = default;
    int64_t volume() const { return int64_t(d) * h * w; }
};

// Active voxel coordinate. Canonical order is (b, z, y, x) ascending.
struct Coord {
    int32_t b = 0;
    int32_t z = 0;
    int32_t y = 0;
    int32_t x = 0;

    bool operator==(const Coord&) const = default;
    auto tie() const { return std::tie(b, z, y, x); }
    bool operator<(const Coord& o) const { return tie() < o.tie(); }
};

struct CoordHash {
    size_t operator()(const Coord& c) const {
        uint64_t k = (uint64_t(uint32_t(c.b)) << 48) ^ (uint64_t(uint32_t(c.z)) << 32) ^
                     (uint64_t(uint32_t(c.y)) << 16) ^ uint64_t(uint32_t(c.x));
        SplitMix64 s(k);
        return size_t(s.next());
    }
};

template <typename T>
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int64_t r, int64_t c, T fill = T(0)) : rows(r), cols(c), data(size_t(r) * size_t(c), fill) {}

    T& operator()(int64_t r, int64_t c) { return data[size_t(r) * cols + c]; }
    const T& operator()(int64_t r, int64_t c) const { return data[size_t(r) * cols + c]; }
    T* row(int64_t r) { return data.data() + size_t(r) * cols; }
    const T* row(int64_t r) const { return data.data() + size_t(r) * cols; }

    bool operator==(const Matrix&) const = default;
};

// Dense row-major tensor, shape order: batch, channel, then spatial axes.
template <typename T>
struct DenseTensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    DenseTensor() = default;

    static DenseTensor zeros(std::vector<int64_t> shp) {
        DenseTensor t;
        int64_t n = 1;
        for (int64_t s : shp) {
            if (s < 1) throw ShapeError("dense tensor dimension < 1");
            n *= s;
        }
        t.shape = std::move(shp);
        t.data.assign(size_t(n), T(0));
        return t;
    }

    int64_t numel() const { return int64_t(data.size()); }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            off = off * shape[k] + i;
            ++k;
        }
        return off;
    }

    T& at(std::initializer_list<int64_t> idx) { return data[size_t(offset(idx))]; }
    const T& at(std::initializer_list<int64_t> idx) const { return data[size_t(offset(idx))]; }

    bool operator==(const DenseTensor&) const = default;
};

// Differentiable payload: flat data plus an optional same-sized gradient.
template <typename T>
struct Value {
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = true;

    Value() = default;
    explicit Value(size_t n, bool rg = true) : data(n, T(0)), requires_grad(rg) {
        if (rg) grad.assign(n, T(0));
    }

    size_t size() const { return data.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    void init_uniform(std::mt19937_64& eng, T bound) {
        std::uniform_real_distribution<double> dist(-double(bound), double(bound));
        for (auto& v : data) v = T(dist(eng));
    }
};

// Set of active voxels with one feature row per voxel. Rows are kept in
// canonical (b, z, y, x) order and coordinates are hash-addressable.
template <typename T>
class SparseVoxelTensor {
public:
    SparseVoxelTensor() = default;

    SparseVoxelTensor(Extent extent, int32_t batch, std::vector<Coord> coords, Matrix<T> features)
        : extent_(extent), batch_(batch) {
        if (int64_t(coords.size()) != features.rows)
            throw ShapeError("coords/features row count mismatch");
        const int64_t m = int64_t(coords.size());
        std::vector<int32_t> perm(static_cast<size_t>(m));
        std::iota(perm.begin(), perm.end(), 0);
        std::sort(perm.begin(), perm.end(),
                  [&](int32_t a, int32_t b) { return coords[size_t(a)] < coords[size_t(b)]; });
        coords_.resize(size_t(m));
        features_ = Matrix<T>(m, features.cols);
        index_.reserve(size_t(m));
        for (int64_t i = 0; i < m; ++i) {
            const Coord& c = coords[size_t(perm[size_t(i)])];
            check_in_range(c);
            coords_[size_t(i)] = c;
            if (!index_.emplace(c, int32_t(i)).second)
                throw RangeError("duplicate voxel coordinate");
            const T* src = features.row(perm[size_t(i)]);
            std::copy(src, src + features.cols, features_.row(i));
        }
    }

    static SparseVoxelTensor empty(Extent extent, int32_t batch, int64_t channels) {
        SparseVoxelTensor t;
        t.extent_ = extent;
        t.batch_ = batch;
        t.features_ = Matrix<T>(0, channels);
        return t;
    }

    const Extent& extent() const { return extent_; }
    int32_t batch() const { return batch_; }
    int64_t active_count() const { return int64_t(coords_.size()); }
    int64_t channels() const { return features_.cols; }
    const std::vector<Coord>& coords() const { return coords_; }
    const Matrix<T>& features() const { return features_; }
    Matrix<T>& mutable_features() { return features_; }

    // -1 when inactive
    int32_t row_of(const Coord& c) const {
        auto it = index_.find(c);
        return it == index_.end() ? -1 : it->second;
    }

    bool same_coords(const SparseVoxelTensor& o) const {
        return extent_ == o.extent_ && batch_ == o.batch_ && coords_ == o.coords_;
    }

private:
    void check_in_range(const Coord& c) const {
        if (c.b < 0 || c.b >= batch_ || c.z < 0 || c.z >= extent_.d || c.y < 0 ||
            c.y >= extent_.h || c.x < 0 || c.x >= extent_.w)
            throw RangeError("voxel coordinate out of range: b=" + std::to_string(c.b) +
                             " z=" + std::to_string(c.z) + " y=" + std::to_string(c.y) +
                             " x=" + std::to_string(c.x));
    }

    Extent extent_;
    int32_t batch_ = 1;
    std::vector<Coord> coords_;
    Matrix<T> features_;
    std::unordered_map<Coord, int32_t, CoordHash> index_;
};

// Gather/scatter rulebook pairing input rows with output rows per kernel tap.
struct IndexMap {
    struct Pair {
        int32_t input_row;
        int32_t output_row;
        int32_t kernel_offset;
    };
    std::vector<Pair> pairs;
    std::vector<Coord> output_coords;
    Extent output_extent;
    // input side, kept so an inverse layer can restore the coordinate set
    std::vector<Coord> input_coords;
    Extent input_extent;
    int32_t batch = 1;
};

// zero-filled densification: (B, C, D, H, W)
template <typename T>
DenseTensor<T> densify(const SparseVoxelTensor<T>& s) {
    const int64_t c_count = s.channels();
    DenseTensor<T> out = DenseTensor<T>::zeros(
        {s.batch(), c_count, s.extent().d, s.extent().h, s.extent().w});
    const int64_t vol = s.extent().volume();
    for (int64_t i = 0; i < s.active_count(); ++i) {
        const Coord& c = s.coords()[size_t(i)];
        const T* row = s.features().row(i);
        const int64_t spatial = (int64_t(c.z) * s.extent().h + c.y) * s.extent().w + c.x;
        for (int64_t ch = 0; ch < c_count; ++ch)
            out.data[size_t((int64_t(c.b) * c_count + ch) * vol + spatial)] = row[ch];
    }
    return out;
}

// Gather rows of `d` (shape B,C,D,H,W) at `mask` into a sparse tensor.
template <typename T>
SparseVoxelTensor<T> sparsify(const DenseTensor<T>& d, const std::vector<Coord>& mask) {
    if (d.shape.size() != 5) throw ShapeError("sparsify expects a (B,C,D,H,W) tensor");
    const int64_t b_count = d.shape[0], c_count = d.shape[1];
    const Extent e{int32_t(d.shape[2]), int32_t(d.shape[3]), int32_t(d.shape[4])};
    Matrix<T> feats(int64_t(mask.size()), c_count);
    const int64_t vol = e.volume();
    for (size_t i = 0; i < mask.size(); ++i) {
        const Coord& c = mask[i];
        if (c.b < 0 || c.b >= b_count || c.z < 0 || c.z >= e.d || c.y < 0 || c.y >= e.h ||
            c.x < 0 || c.x >= e.w)
            throw RangeError("sparsify mask coordinate out of range");
        const int64_t spatial = (int64_t(c.z) * e.h + c.y) * e.w + c.x;
        for (int64_t ch = 0; ch < c_count; ++ch)
            feats(int64_t(i), ch) = d.data[size_t((int64_t(c.b) * c_count + ch) * vol + spatial)];
    }
    return SparseVoxelTensor<T>(e, int32_t(b_count), mask, std::move(feats));
}

// Row-wise channel concatenation of coordinate-aligned tensors.
template <typename T>
SparseVoxelTensor<T> concat_features(const SparseVoxelTensor<T>& a, const SparseVoxelTensor<T>& b) {
    if (!a.same_coords(b)) throw AlignmentError("concat_features: coordinate sets differ");
    Matrix<T> feats(a.active_count(), a.channels() + b.channels());
    for (int64_t i = 0; i < a.active_count(); ++i) {
        std::copy(a.features().row(i), a.features().row(i) + a.channels(), feats.row(i));
        std::copy(b.features().row(i), b.features().row(i) + b.channels(),
                  feats.row(i) + a.channels());
    }
    return SparseVoxelTensor<T>(a.extent(), a.batch(), a.coords(), std::move(feats));
}

}  // namespace voxkit
