#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

#include "voxkit/tensor.hpp"

namespace voxkit {

enum class ConvMode { submanifold, regular };

struct ConvGeom {
    std::array<int32_t, 3> ksize{3, 3, 3};    // z, y, x
    std::array<int32_t, 3> stride{1, 1, 1};
    std::array<int32_t, 3> pad{1, 1, 1};
    ConvMode mode = ConvMode::submanifold;

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (ksize[a] < 1 || stride[a] < 1 || pad[a] < 0)
                throw ConfigError("conv geometry: bad kernel/stride/pad");
            if (mode == ConvMode::submanifold) {
                if (stride[a] != 1) throw ConfigError("submanifold conv requires stride 1");
                if (ksize[a] % 2 == 0) throw ConfigError("submanifold conv requires odd kernels");
            }
        }
    }

    // submanifold layers keep coordinates, so padding is pinned to (k-1)/2
    static ConvGeom submanifold(int32_t k = 3) {
        return ConvGeom{{k, k, k}, {1, 1, 1}, {(k - 1) / 2, (k - 1) / 2, (k - 1) / 2},
                        ConvMode::submanifold};
    }
    static ConvGeom strided2(int32_t k = 3) {
        return ConvGeom{{k, k, k}, {2, 2, 2}, {1, 1, 1}, ConvMode::regular};
    }

    int32_t taps() const { return ksize[0] * ksize[1] * ksize[2]; }
};

// Sparse 3D convolution. Submanifold mode emits outputs only at the input's
// active sites; regular mode emits a site wherever a receptive field touches
// an active input and the stride division is exact.
template <typename T>
class SparseConv {
public:
    SparseConv() = default;
    SparseConv(int64_t c_in, int64_t c_out, ConvGeom geom, std::mt19937_64& eng)
        : c_in_(c_in), c_out_(c_out), geom_(geom) {
        geom.validate();
        kernel = Value<T>(size_t(c_out) * size_t(c_in) * size_t(geom.taps()));
        bias = Value<T>(size_t(c_out));
        const double fan_in = double(c_in) * geom.taps();
        kernel.init_uniform(eng, T(1.0 / std::sqrt(fan_in)));
    }

    int64_t in_channels() const { return c_in_; }
    int64_t out_channels() const { return c_out_; }
    const ConvGeom& geom() const { return geom_; }
    std::vector<Value<T>*> params() { return {&kernel, &bias}; }

    IndexMap build_index_map(const SparseVoxelTensor<T>& in) const {
        IndexMap map;
        map.input_coords = in.coords();
        map.input_extent = in.extent();
        map.batch = in.batch();
        map.output_extent =
            (geom_.mode == ConvMode::submanifold) ? in.extent() : regular_out_extent(in.extent());

        if (geom_.mode == ConvMode::submanifold) {
            map.output_coords = in.coords();
        } else {
            std::unordered_set<Coord, CoordHash> sites;
            for (const Coord& c : in.coords()) {
                for (int32_t kz = 0; kz < geom_.ksize[0]; ++kz)
                    for (int32_t ky = 0; ky < geom_.ksize[1]; ++ky)
                        for (int32_t kx = 0; kx < geom_.ksize[2]; ++kx) {
                            Coord o;
                            o.b = c.b;
                            if (!out_site(c.z, kz, 0, map.output_extent.d, o.z)) continue;
                            if (!out_site(c.y, ky, 1, map.output_extent.h, o.y)) continue;
                            if (!out_site(c.x, kx, 2, map.output_extent.w, o.x)) continue;
                            sites.insert(o);
                        }
            }
            map.output_coords.assign(sites.begin(), sites.end());
            std::sort(map.output_coords.begin(), map.output_coords.end());
        }

        // gather form: pairs grouped by output row, tap order fixed
        for (int32_t p = 0; p < int32_t(map.output_coords.size()); ++p) {
            const Coord& o = map.output_coords[size_t(p)];
            int32_t k = 0;
            for (int32_t kz = 0; kz < geom_.ksize[0]; ++kz)
                for (int32_t ky = 0; ky < geom_.ksize[1]; ++ky)
                    for (int32_t kx = 0; kx < geom_.ksize[2]; ++kx, ++k) {
                        Coord c{o.b, o.z * geom_.stride[0] - geom_.pad[0] + kz,
                                o.y * geom_.stride[1] - geom_.pad[1] + ky,
                                o.x * geom_.stride[2] - geom_.pad[2] + kx};
                        if (c.z < 0 || c.z >= in.extent().d || c.y < 0 || c.y >= in.extent().h ||
                            c.x < 0 || c.x >= in.extent().w)
                            continue;
                        const int32_t i = in.row_of(c);
                        if (i >= 0) map.pairs.push_back({i, p, k});
                    }
        }
        return map;
    }

    std::pair<SparseVoxelTensor<T>, IndexMap> forward(const SparseVoxelTensor<T>& in) const {
        IndexMap map = build_index_map(in);
        return {forward_with(in, map), std::move(map)};
    }

    SparseVoxelTensor<T> forward_with(const SparseVoxelTensor<T>& in, const IndexMap& map) const {
        if (in.channels() != c_in_)
            throw ShapeError("sparse conv expects " + std::to_string(c_in_) + " channels, got " +
                             std::to_string(in.channels()));
        Matrix<T> out(int64_t(map.output_coords.size()), c_out_);
        for (int64_t p = 0; p < out.rows; ++p)
            std::copy(bias.data.begin(), bias.data.end(), out.row(p));
        const int32_t taps = geom_.taps();
        for (const auto& pr : map.pairs) {
            const T* xin = in.features().row(pr.input_row);
            T* orow = out.row(pr.output_row);
            for (int64_t co = 0; co < c_out_; ++co) {
                const T* w = kernel.data.data() + (size_t(co) * c_in_) * taps + pr.kernel_offset;
                T acc = T(0);
                for (int64_t ci = 0; ci < c_in_; ++ci) acc += w[size_t(ci) * taps] * xin[ci];
                orow[co] += acc;
            }
        }
        return SparseVoxelTensor<T>(map.output_extent, map.batch, map.output_coords,
                                    std::move(out));
    }

    // grad_out rows follow map.output_coords order; returns grad wrt input
    // features and accumulates kernel/bias grads.
    Matrix<T> backward(const Matrix<T>& grad_out, const IndexMap& map,
                       const SparseVoxelTensor<T>& in) {
        if (grad_out.cols != c_out_ || grad_out.rows != int64_t(map.output_coords.size()))
            throw ShapeError("sparse conv backward: grad_out shape mismatch");
        Matrix<T> grad_in(in.active_count(), c_in_);
        const int32_t taps = geom_.taps();
        for (const auto& pr : map.pairs) {
            const T* g = grad_out.row(pr.output_row);
            const T* xin = in.features().row(pr.input_row);
            T* gi = grad_in.row(pr.input_row);
            for (int64_t co = 0; co < c_out_; ++co) {
                const size_t base = (size_t(co) * c_in_) * taps + size_t(pr.kernel_offset);
                const T gco = g[co];
                for (int64_t ci = 0; ci < c_in_; ++ci) {
                    kernel.grad[base + size_t(ci) * taps] += gco * xin[ci];
                    gi[ci] += gco * kernel.data[base + size_t(ci) * taps];
                }
            }
        }
        for (int64_t p = 0; p < grad_out.rows; ++p) {
            const T* g = grad_out.row(p);
            for (int64_t co = 0; co < c_out_; ++co) bias.grad[size_t(co)] += g[co];
        }
        return grad_in;
    }

    Value<T> kernel;  // c_out x c_in x kz*ky*kx
    Value<T> bias;

private:
    Extent regular_out_extent(const Extent& e) const {
        auto out_axis = [&](int32_t n, int a) {
            const int32_t num = n + 2 * geom_.pad[size_t(a)] - geom_.ksize[size_t(a)];
            if (num < 0) throw ShapeError("conv kernel larger than padded input extent");
            return num / geom_.stride[size_t(a)] + 1;
        };
        return Extent{out_axis(e.d, 0), out_axis(e.h, 1), out_axis(e.w, 2)};
    }

    // site exists when (c + pad - k) divides the stride exactly and lands in range
    bool out_site(int32_t c, int32_t k, int a, int32_t limit, int32_t& o) const {
        const int32_t num = c + geom_.pad[size_t(a)] - k;
        if (num < 0 || num % geom_.stride[size_t(a)] != 0) return false;
        o = num / geom_.stride[size_t(a)];
        return o < limit;
    }

    int64_t c_in_ = 0;
    int64_t c_out_ = 0;
    ConvGeom geom_;
};

// Scatter convolution keyed to the index map a strided layer recorded; its
// output coordinate set is exactly that layer's input coordinate set. Carries
// its own learned kernel.
template <typename T>
class InverseSparseConv {
public:
    InverseSparseConv() = default;
    InverseSparseConv(int64_t c_in, int64_t c_out, int32_t ksize, std::mt19937_64& eng)
        : c_in_(c_in), c_out_(c_out), taps_(ksize * ksize * ksize) {
        kernel = Value<T>(size_t(c_out) * size_t(c_in) * size_t(taps_));
        bias = Value<T>(size_t(c_out));
        kernel.init_uniform(eng, T(1.0 / std::sqrt(double(c_in) * taps_)));
    }

    int64_t in_channels() const { return c_in_; }
    int64_t out_channels() const { return c_out_; }
    std::vector<Value<T>*> params() { return {&kernel, &bias}; }

    void pair_with(IndexMap map) { paired_ = std::move(map); }
    const IndexMap& paired_map() const {
        if (!paired_) throw StateError("inverse conv used before pairing with a strided layer");
        return *paired_;
    }

    SparseVoxelTensor<T> forward(const SparseVoxelTensor<T>& in) const {
        const IndexMap& map = paired_map();
        if (in.channels() != c_in_) throw ShapeError("inverse conv channel mismatch");
        if (in.coords() != map.output_coords)
            throw AlignmentError("inverse conv input does not match the paired layer's output");
        Matrix<T> out(int64_t(map.input_coords.size()), c_out_);
        for (int64_t i = 0; i < out.rows; ++i)
            std::copy(bias.data.begin(), bias.data.end(), out.row(i));
        for (const auto& pr : map.pairs) {
            const T* xin = in.features().row(pr.output_row);
            T* orow = out.row(pr.input_row);
            for (int64_t co = 0; co < c_out_; ++co) {
                const T* w = kernel.data.data() + (size_t(co) * c_in_) * taps_ + pr.kernel_offset;
                T acc = T(0);
                for (int64_t ci = 0; ci < c_in_; ++ci) acc += w[size_t(ci) * taps_] * xin[ci];
                orow[co] += acc;
            }
        }
        return SparseVoxelTensor<T>(map.input_extent, map.batch, map.input_coords,
                                    std::move(out));
    }

    // grad_out rows follow map.input_coords order (the restored set).
    Matrix<T> backward(const Matrix<T>& grad_out, const SparseVoxelTensor<T>& in) {
        const IndexMap& map = paired_map();
        if (grad_out.cols != c_out_ || grad_out.rows != int64_t(map.input_coords.size()))
            throw ShapeError("inverse conv backward: grad_out shape mismatch");
        Matrix<T> grad_in(in.active_count(), c_in_);
        for (const auto& pr : map.pairs) {
            const T* g = grad_out.row(pr.input_row);
            const T* xin = in.features().row(pr.output_row);
            T* gi = grad_in.row(pr.output_row);
            for (int64_t co = 0; co < c_out_; ++co) {
                const size_t base = (size_t(co) * c_in_) * taps_ + size_t(pr.kernel_offset);
                const T gco = g[co];
                for (int64_t ci = 0; ci < c_in_; ++ci) {
                    kernel.grad[base + size_t(ci) * taps_] += gco * xin[ci];
                    gi[ci] += gco * kernel.data[base + size_t(ci) * taps_];
                }
            }
        }
        for (int64_t i = 0; i < grad_out.rows; ++i) {
            const T* g = grad_out.row(i);
            for (int64_t co = 0; co < c_out_; ++co) bias.grad[size_t(co)] += g[co];
        }
        return grad_in;
    }

    Value<T> kernel;  // c_out x c_in x taps
    Value<T> bias;

private:
    int64_t c_in_ = 0;
    int64_t c_out_ = 0;
    int32_t taps_ = 27;
    std::optional<IndexMap> paired_;
};

struct SdsConfig {
    int64_t c_down = 16;  // width after the first stride-2 layer
    int64_t c_inv = 16;   // width restored by the inverse layer
    int64_t c_post = 16;  // width after the post-concat layer
    int64_t c_out = 16;   // width after the final stride-2 layer
    int32_t ksize = 3;
};

// Sparse down-sampling block: stride-2 down, two submanifold layers, inverse
// restoration, concat with the raw input, one more submanifold layer, and a
// final stride-2 down. Net effect is one stride-2 reduction of the extent.
template <typename T>
class SdsBlock {
public:
    struct Cache {
        SparseVoxelTensor<T> input, d1, m1, m2, restored, cat, post_out;
        IndexMap map_d1, map_m1, map_m2, map_post, map_d2;
    };

    SdsBlock() = default;
    SdsBlock(int64_t c_in, const SdsConfig& cfg, std::mt19937_64& eng)
        : c_in_(c_in),
          down1(c_in, cfg.c_down, ConvGeom::strided2(cfg.ksize), eng),
          mid1(cfg.c_down, cfg.c_down, ConvGeom::submanifold(cfg.ksize), eng),
          mid2(cfg.c_down, cfg.c_down, ConvGeom::submanifold(cfg.ksize), eng),
          inv(cfg.c_down, cfg.c_inv, cfg.ksize, eng),
          post(c_in + cfg.c_inv, cfg.c_post, ConvGeom::submanifold(cfg.ksize), eng),
          down2(cfg.c_post, cfg.c_out, ConvGeom::strided2(cfg.ksize), eng) {}

    int64_t in_channels() const { return c_in_; }
    int64_t out_channels() const { return down2.out_channels(); }

    std::vector<Value<T>*> params() {
        return {&down1.kernel, &down1.bias, &mid1.kernel, &mid1.bias, &mid2.kernel,
                &mid2.bias,    &inv.kernel, &inv.bias,    &post.kernel, &post.bias,
                &down2.kernel, &down2.bias};
    }

    SparseVoxelTensor<T> forward(const SparseVoxelTensor<T>& in, Cache* cache = nullptr) {
        Cache local;
        Cache& c = cache ? *cache : local;
        c.input = in;
        c.map_d1 = down1.build_index_map(in);
        c.d1 = down1.forward_with(in, c.map_d1);
        c.map_m1 = mid1.build_index_map(c.d1);
        c.m1 = mid1.forward_with(c.d1, c.map_m1);
        c.map_m2 = mid2.build_index_map(c.m1);
        c.m2 = mid2.forward_with(c.m1, c.map_m2);
        inv.pair_with(c.map_d1);
        c.restored = inv.forward(c.m2);
        c.cat = concat_features(in, c.restored);
        c.map_post = post.build_index_map(c.cat);
        c.post_out = post.forward_with(c.cat, c.map_post);
        c.map_d2 = down2.build_index_map(c.post_out);
        return down2.forward_with(c.post_out, c.map_d2);
    }

    Matrix<T> backward(const Cache& c, const Matrix<T>& grad_out) {
        Matrix<T> g_post = down2.backward(grad_out, c.map_d2, c.post_out);
        Matrix<T> g_cat = post.backward(g_post, c.map_post, c.cat);
        Matrix<T> g_in_direct(c.input.active_count(), c_in_);
        Matrix<T> g_restored(c.restored.active_count(), c.restored.channels());
        for (int64_t r = 0; r < g_cat.rows; ++r) {
            const T* src = g_cat.row(r);
            std::copy(src, src + c_in_, g_in_direct.row(r));
            std::copy(src + c_in_, src + g_cat.cols, g_restored.row(r));
        }
        inv.pair_with(c.map_d1);
        Matrix<T> g_m2 = inv.backward(g_restored, c.m2);
        Matrix<T> g_m1 = mid2.backward(g_m2, c.map_m2, c.m1);
        Matrix<T> g_d1 = mid1.backward(g_m1, c.map_m1, c.d1);
        Matrix<T> g_in = down1.backward(g_d1, c.map_d1, c.input);
        for (size_t i = 0; i < g_in.data.size(); ++i) g_in.data[i] += g_in_direct.data[i];
        return g_in;
    }

    SparseConv<T> down1, mid1, mid2;
    InverseSparseConv<T> inv;
    SparseConv<T> post, down2;

private:
    int64_t c_in_ = 0;
};

}  // namespace voxkit
