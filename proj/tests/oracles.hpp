#pragma once

// Independent reference implementations the unit and acceptance tests check
// the library against. Nothing here may route through the index-map or
// batched code paths under test.

#include <cmath>
#include <set>
#include <vector>

#include "voxkit/mlp.hpp"
#include "voxkit/sparse_conv.hpp"
#include "voxkit/tensor.hpp"

namespace oracles {

using voxkit::Coord;
using voxkit::ConvGeom;
using voxkit::ConvMode;
using voxkit::DenseTensor;
using voxkit::Extent;
using voxkit::Matrix;
using voxkit::Value;

// Direct 3D convolution of a zero-filled dense tensor; out[o] = bias +
// sum_k W_k * in[o*stride - pad + k].
template <typename T>
DenseTensor<T> dense_conv3d(const DenseTensor<T>& in, const Value<T>& kernel,
                            const Value<T>& bias, const ConvGeom& g, int64_t c_out) {
    const int64_t b_n = in.shape[0], c_in = in.shape[1];
    const int64_t d = in.shape[2], h = in.shape[3], w = in.shape[4];
    int64_t od, oh, ow;
    if (g.mode == ConvMode::submanifold) {
        od = d;
        oh = h;
        ow = w;
    } else {
        od = (d + 2 * g.pad[0] - g.ksize[0]) / g.stride[0] + 1;
        oh = (h + 2 * g.pad[1] - g.ksize[1]) / g.stride[1] + 1;
        ow = (w + 2 * g.pad[2] - g.ksize[2]) / g.stride[2] + 1;
    }
    DenseTensor<T> out = DenseTensor<T>::zeros({b_n, c_out, od, oh, ow});
    const int64_t taps = g.taps();
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t co = 0; co < c_out; ++co)
            for (int64_t oz = 0; oz < od; ++oz)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double acc = double(bias.data[size_t(co)]);
                        int64_t k = 0;
                        for (int32_t kz = 0; kz < g.ksize[0]; ++kz)
                            for (int32_t ky = 0; ky < g.ksize[1]; ++ky)
                                for (int32_t kx = 0; kx < g.ksize[2]; ++kx, ++k) {
                                    const int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
                                    const int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
                                    const int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                                    if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 ||
                                        ix >= w)
                                        continue;
                                    for (int64_t ci = 0; ci < c_in; ++ci)
                                        acc += double(kernel.data[size_t(
                                                   (co * c_in + ci) * taps + k)]) *
                                               double(in.at({b, ci, iz, iy, ix}));
                                }
                        out.at({b, co, oz, oy, ox}) = T(acc);
                    }
    return out;
}

// Regular-conv output sites enumerated from the dense side: walk every
// candidate output cell and every tap, and keep cells whose receptive field
// touches an active input.
template <typename T>
std::set<Coord> enumerate_regular_sites(const voxkit::SparseVoxelTensor<T>& in,
                                        const ConvGeom& g) {
    const Extent e = in.extent();
    const int32_t od = (e.d + 2 * g.pad[0] - g.ksize[0]) / g.stride[0] + 1;
    const int32_t oh = (e.h + 2 * g.pad[1] - g.ksize[1]) / g.stride[1] + 1;
    const int32_t ow = (e.w + 2 * g.pad[2] - g.ksize[2]) / g.stride[2] + 1;
    std::set<Coord> sites;
    for (int32_t b = 0; b < in.batch(); ++b)
        for (int32_t oz = 0; oz < od; ++oz)
            for (int32_t oy = 0; oy < oh; ++oy)
                for (int32_t ox = 0; ox < ow; ++ox)
                    for (int32_t kz = 0; kz < g.ksize[0] && !sites.count({b, oz, oy, ox}); ++kz)
                        for (int32_t ky = 0; ky < g.ksize[1]; ++ky)
                            for (int32_t kx = 0; kx < g.ksize[2]; ++kx) {
                                const Coord c{b, oz * g.stride[0] - g.pad[0] + kz,
                                              oy * g.stride[1] - g.pad[1] + ky,
                                              ox * g.stride[2] - g.pad[2] + kx};
                                if (c.z < 0 || c.z >= e.d || c.y < 0 || c.y >= e.h || c.x < 0 ||
                                    c.x >= e.w)
                                    continue;
                                if (in.row_of(c) >= 0) {
                                    sites.insert({b, oz, oy, ox});
                                    break;
                                }
                            }
    return sites;
}

// Single-row MLP forward with its own loop structure (loop-vs-batch oracle).
template <typename T>
std::vector<T> mlp_single_row(const voxkit::Mlp<T>& mlp, const T* row, int64_t n) {
    std::vector<T> cur(row, row + n);
    const auto& layers = mlp.layers();
    for (size_t li = 0; li < layers.size(); ++li) {
        const auto& lay = layers[li];
        std::vector<T> next(size_t(lay.out));
        for (int64_t o = 0; o < lay.out; ++o) {
            double acc = double(lay.bias.data[size_t(o)]);
            for (int64_t i = 0; i < lay.in; ++i)
                acc += double(lay.weight.data[size_t(o * lay.in + i)]) * double(cur[size_t(i)]);
            next[size_t(o)] = T(acc);
        }
        if (li + 1 < layers.size()) {
            for (auto& v : next) {
                if (mlp.activation() == voxkit::Activation::relu)
                    v = v > T(0) ? v : T(0);
                else
                    v = std::tanh(v);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

// Element-at-a-time Adam in double precision.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    int64_t t = 0;

    double step(double param, double grad, double lr, double b1, double b2, double eps) {
        ++t;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(b1, double(t)));
        const double vhat = v / (1.0 - std::pow(b2, double(t)));
        return param - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace oracles
