#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "voxkit/mlp.hpp"
#include "voxkit/rng.hpp"
#include "voxkit/tensor.hpp"

namespace voxkit {

struct PointCloud {
    std::vector<std::array<float, 3>> points;  // x, y, z in meters
    std::vector<float> intensity;              // optional; empty or one per point
};

struct VoxelConfig {
    std::array<double, 3> range_min{0.0, 0.0, 0.0};  // x, y, z
    std::array<double, 3> range_max{1.0, 1.0, 1.0};
    std::array<double, 3> voxel_size{0.1, 0.1, 0.1};
    int32_t max_points = 32;  // T, retained points per voxel
    uint64_t seed = 0;

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (!(range_max[a] > range_min[a]))
                throw ConfigError("voxel range_max must exceed range_min on every axis");
            if (!(voxel_size[a] > 0.0)) throw ConfigError("voxel sides must be positive");
        }
        if (max_points < 1) throw ConfigError("max points per voxel must be >= 1");
    }

    // grid resolution per axis (x, y, z); the quoted ranges divide exactly,
    // rounding only absorbs float representation error
    std::array<int64_t, 3> grid_dims() const {
        std::array<int64_t, 3> dims;
        for (int a = 0; a < 3; ++a) {
            dims[a] = std::llround((range_max[a] - range_min[a]) / voxel_size[a]);
            if (dims[a] < 1) dims[a] = 1;
        }
        return dims;
    }

    Extent extent() const {
        auto dims = grid_dims();
        return Extent{int32_t(dims[2]), int32_t(dims[1]), int32_t(dims[0])};  // (D,H,W)=(z,y,x)
    }
};

// Non-empty voxels with their retained points and the 6-dim centroid-offset
// rows fed to the voxel encoder. Rows are grouped per voxel in canonical
// coordinate order; voxel i owns rows [offsets[i], offsets[i+1]).
template <typename T>
struct VoxelBatch {
    Extent extent;
    std::vector<Coord> voxel_coords;  // b == 0
    std::vector<int64_t> offsets;     // size voxel_coords.size()+1
    Matrix<T> augmented;              // total retained x 6: (x,y,z, dx,dy,dz)
    std::vector<int64_t> point_ids;   // original cloud index per retained point
    int64_t dropped_points = 0;       // subsampled away inside over-full voxels
    int64_t out_of_range = 0;

    int64_t voxel_count() const { return int64_t(voxel_coords.size()); }
    int64_t retained_points() const { return augmented.rows; }
    int64_t points_in(int64_t v) const { return offsets[size_t(v) + 1] - offsets[size_t(v)]; }
};

namespace detail {
inline uint64_t voxel_stream_key(const Coord& c) {
    return (uint64_t(uint32_t(c.z)) << 42) ^ (uint64_t(uint32_t(c.y)) << 21) ^
           uint64_t(uint32_t(c.x));
}
}  // namespace detail

// Bucket points into voxels, reservoir-sample over-full voxels to exactly T
// points, and append per-point centroid offsets. The sampling stream is
// derived from (seed, voxel coordinate) so the result does not depend on
// voxel visiting order.
template <typename T>
VoxelBatch<T> voxelize(const PointCloud& pc, const VoxelConfig& cfg) {
    cfg.validate();
    const auto dims = cfg.grid_dims();
    VoxelBatch<T> vb;
    vb.extent = cfg.extent();

    std::unordered_map<Coord, std::vector<int64_t>, CoordHash> buckets;
    for (int64_t pid = 0; pid < int64_t(pc.points.size()); ++pid) {
        const auto& p = pc.points[size_t(pid)];
        int64_t idx[3];
        bool in_range = true;
        for (int a = 0; a < 3; ++a) {
            idx[a] = int64_t(std::floor((double(p[size_t(a)]) - cfg.range_min[a]) / cfg.voxel_size[a]));
            if (idx[a] < 0 || idx[a] >= dims[a]) {
                in_range = false;
                break;
            }
        }
        if (!in_range) {
            ++vb.out_of_range;
            continue;
        }
        buckets[Coord{0, int32_t(idx[2]), int32_t(idx[1]), int32_t(idx[0])}].push_back(pid);
    }

    const int64_t t_max = cfg.max_points;
    std::vector<Coord> coords;
    coords.reserve(buckets.size());
    for (auto& [c, ids] : buckets) {
        coords.push_back(c);
        if (int64_t(ids.size()) > t_max) {
            SplitMix64 rng(mix_seed(cfg.seed, detail::voxel_stream_key(c)));
            std::vector<int64_t> slots(ids.begin(), ids.begin() + t_max);
            for (int64_t j = t_max; j < int64_t(ids.size()); ++j) {
                const uint64_t r = rng.below(uint64_t(j) + 1);
                if (r < uint64_t(t_max)) slots[size_t(r)] = ids[size_t(j)];
            }
            vb.dropped_points += int64_t(ids.size()) - t_max;
            ids = std::move(slots);
        }
    }
    std::sort(coords.begin(), coords.end());

    int64_t total = 0;
    for (const Coord& c : coords) total += int64_t(buckets[c].size());
    vb.voxel_coords = std::move(coords);
    vb.offsets.reserve(vb.voxel_coords.size() + 1);
    vb.offsets.push_back(0);
    vb.augmented = Matrix<T>(total, 6);
    vb.point_ids.reserve(size_t(total));

    int64_t row = 0;
    for (const Coord& c : vb.voxel_coords) {
        const auto& ids = buckets[c];
        double cx = 0, cy = 0, cz = 0;
        for (int64_t pid : ids) {
            const auto& p = pc.points[size_t(pid)];
            cx += p[0];
            cy += p[1];
            cz += p[2];
        }
        const double inv = 1.0 / double(ids.size());
        cx *= inv;
        cy *= inv;
        cz *= inv;
        for (int64_t pid : ids) {
            const auto& p = pc.points[size_t(pid)];
            T* r = vb.augmented.row(row++);
            r[0] = T(p[0]);
            r[1] = T(p[1]);
            r[2] = T(p[2]);
            r[3] = T(double(p[0]) - cx);
            r[4] = T(double(p[1]) - cy);
            r[5] = T(double(p[2]) - cz);
            vb.point_ids.push_back(pid);
        }
        vb.offsets.push_back(row);
    }
    return vb;
}

template <typename T>
struct VoxelEncodeCache {
    typename Mlp<T>::Cache mlp_cache;
    Matrix<T> point_feats;         // retained x C
    std::vector<int64_t> argmax;   // voxel*C entries (max-reduce routing)
};

// Shared-MLP per-point encoding followed by a per-voxel reduction to one
// feature row per voxel.
template <typename T>
SparseVoxelTensor<T> encode_voxels(const VoxelBatch<T>& vb, const Mlp<T>& mlp, Reduce reduce,
                                   VoxelEncodeCache<T>* cache = nullptr, bool training = false,
                                   std::mt19937_64* drop_eng = nullptr) {
    if (mlp.input_dim() != 6) throw ShapeError("voxel encoder expects MLP input width 6");
    typename Mlp<T>::Cache local_cache;
    typename Mlp<T>::Cache* mc = cache ? &cache->mlp_cache : (training ? &local_cache : nullptr);
    Matrix<T> pf = mlp.forward(vb.augmented, mc, training, drop_eng);
    const int64_t c_dim = pf.cols;
    const int64_t m = vb.voxel_count();
    Matrix<T> voxel_feats(m, c_dim);
    std::vector<int64_t> argmax;
    if (reduce == Reduce::max) argmax.assign(size_t(m * c_dim), -1);
    for (int64_t v = 0; v < m; ++v) {
        const int64_t lo = vb.offsets[size_t(v)], hi = vb.offsets[size_t(v) + 1];
        T* out = voxel_feats.row(v);
        if (reduce == Reduce::max) {
            for (int64_t r = lo; r < hi; ++r) {
                const T* pr = pf.row(r);
                for (int64_t c = 0; c < c_dim; ++c) {
                    if (r == lo || pr[c] > out[c]) {
                        out[c] = pr[c];
                        argmax[size_t(v * c_dim + c)] = r;
                    }
                }
            }
        } else {
            const T inv = T(1) / T(hi - lo);
            for (int64_t r = lo; r < hi; ++r) {
                const T* pr = pf.row(r);
                for (int64_t c = 0; c < c_dim; ++c) out[c] += pr[c];
            }
            for (int64_t c = 0; c < c_dim; ++c) out[c] *= inv;
        }
    }
    if (cache) {
        cache->point_feats = std::move(pf);
        cache->argmax = std::move(argmax);
    }
    return SparseVoxelTensor<T>(vb.extent, 1, vb.voxel_coords, std::move(voxel_feats));
}

// Routes per-voxel gradients back through the reduction and the shared MLP.
// Returns grad wrt the augmented 6-dim rows; parameter grads accumulate in
// the MLP.
template <typename T>
Matrix<T> encode_voxels_backward(const VoxelBatch<T>& vb, Mlp<T>& mlp, Reduce reduce,
                                 const VoxelEncodeCache<T>& cache,
                                 const Matrix<T>& grad_voxel_feats) {
    const int64_t c_dim = grad_voxel_feats.cols;
    Matrix<T> grad_pf(cache.point_feats.rows, c_dim);
    for (int64_t v = 0; v < vb.voxel_count(); ++v) {
        const int64_t lo = vb.offsets[size_t(v)], hi = vb.offsets[size_t(v) + 1];
        const T* gv = grad_voxel_feats.row(v);
        if (reduce == Reduce::max) {
            for (int64_t c = 0; c < c_dim; ++c)
                grad_pf(cache.argmax[size_t(v * c_dim + c)], c) += gv[c];
        } else {
            const T inv = T(1) / T(hi - lo);
            for (int64_t r = lo; r < hi; ++r)
                for (int64_t c = 0; c < c_dim; ++c) grad_pf(r, c) += gv[c] * inv;
        }
    }
    return mlp.backward(cache.mlp_cache, grad_pf);
}

}  // namespace voxkit
