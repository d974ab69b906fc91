#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "voxkit/rng.hpp"
#include "voxkit/sparse_conv.hpp"

namespace voxkit {

struct BenchRow {
    std::string mode;
    int64_t active = 0;
    int64_t grid = 0;
    double sparse_ms = 0.0;
    double dense_ms = 0.0;
    double ratio = 0.0;
};

namespace bench_detail {

// Plain dense 3D convolution over the zero-filled grid; the performance
// baseline the sparse path is measured against.
template <typename T>
DenseTensor<T> dense_conv_reference(const DenseTensor<T>& in, const Value<T>& kernel,
                                    const Value<T>& bias, const ConvGeom& g, int64_t c_out) {
    const int64_t b_n = in.shape[0], c_in = in.shape[1];
    const int64_t d = in.shape[2], h = in.shape[3], w = in.shape[4];
    auto out_axis = [&](int64_t n, int a) {
        return (n + 2 * g.pad[size_t(a)] - g.ksize[size_t(a)]) / g.stride[size_t(a)] + 1;
    };
    const int64_t od = g.mode == ConvMode::submanifold ? d : out_axis(d, 0);
    const int64_t oh = g.mode == ConvMode::submanifold ? h : out_axis(h, 1);
    const int64_t ow = g.mode == ConvMode::submanifold ? w : out_axis(w, 2);
    DenseTensor<T> out = DenseTensor<T>::zeros({b_n, c_out, od, oh, ow});
    const int32_t taps = g.taps();
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t co = 0; co < c_out; ++co)
            for (int64_t oz = 0; oz < od; ++oz)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        T acc = bias.data[size_t(co)];
                        int32_t k = 0;
                        for (int32_t kz = 0; kz < g.ksize[0]; ++kz) {
                            const int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
                            if (iz < 0 || iz >= d) {
                                k += g.ksize[1] * g.ksize[2];
                                continue;
                            }
                            for (int32_t ky = 0; ky < g.ksize[1]; ++ky) {
                                const int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
                                if (iy < 0 || iy >= h) {
                                    k += g.ksize[2];
                                    continue;
                                }
                                for (int32_t kx = 0; kx < g.ksize[2]; ++kx, ++k) {
                                    const int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    for (int64_t ci = 0; ci < c_in; ++ci)
                                        acc += kernel.data[size_t((co * c_in + ci) * taps + k)] *
                                               in.at({b, ci, iz, iy, ix});
                                }
                            }
                        }
                        out.at({b, co, oz, oy, ox}) = acc;
                    }
    return out;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace bench_detail

// Random sparse tensor at the requested density, then one sparse forward
// (index build included) against the dense reference on the densified input.
inline std::vector<BenchRow> bench_sparse_vs_dense(int32_t side = 64, double density = 0.01,
                                                   int64_t channels = 8, uint64_t seed = 99) {
    std::mt19937_64 eng = make_engine(seed, 0xbe7cull);
    const Extent e{side, side, side};
    std::uniform_real_distribution<double> u(0.0, 1.0), fval(-1.0, 1.0);
    std::vector<Coord> coords;
    for (int32_t z = 0; z < side; ++z)
        for (int32_t y = 0; y < side; ++y)
            for (int32_t x = 0; x < side; ++x)
                if (u(eng) < density) coords.push_back({0, z, y, x});
    Matrix<float> feats(int64_t(coords.size()), channels);
    for (auto& v : feats.data) v = float(fval(eng));
    SparseVoxelTensor<float> sparse(e, 1, coords, std::move(feats));
    DenseTensor<float> dense = densify(sparse);

    std::vector<BenchRow> rows;
    for (const ConvGeom& geom : {ConvGeom::submanifold(3), ConvGeom::strided2(3)}) {
        SparseConv<float> conv(channels, channels, geom, eng);
        double sparse_best = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            auto [out, map] = conv.forward(sparse);
            const double ms = bench_detail::ms_since(t0);
            if (rep == 0 || ms < sparse_best) sparse_best = ms;
            (void)out;
        }
        const auto t1 = std::chrono::steady_clock::now();
        DenseTensor<float> ref =
            bench_detail::dense_conv_reference(dense, conv.kernel, conv.bias, geom, channels);
        const double dense_ms = bench_detail::ms_since(t1);
        (void)ref;
        BenchRow row;
        row.mode = geom.mode == ConvMode::submanifold ? "submanifold" : "regular_stride2";
        row.active = sparse.active_count();
        row.grid = e.volume();
        row.sparse_ms = sparse_best;
        row.dense_ms = dense_ms;
        row.ratio = dense_ms / std::max(sparse_best, 1e-6);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace voxkit
