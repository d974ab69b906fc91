#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "voxkit/tensor.hpp"

namespace voxkit {

// Plain 2D convolution on (B, C, H, W) tensors.
template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int64_t c_in, int64_t c_out, int32_t ksize, int32_t stride, int32_t pad,
           std::mt19937_64& eng)
        : c_in_(c_in), c_out_(c_out), k_(ksize), stride_(stride), pad_(pad) {
        kernel = Value<T>(size_t(c_out) * size_t(c_in) * size_t(ksize) * size_t(ksize));
        bias = Value<T>(size_t(c_out));
        kernel.init_uniform(eng, T(1.0 / std::sqrt(double(c_in) * ksize * ksize)));
    }

    int64_t in_channels() const { return c_in_; }
    int64_t out_channels() const { return c_out_; }
    std::vector<Value<T>*> params() { return {&kernel, &bias}; }

    DenseTensor<T> forward(const DenseTensor<T>& x) const {
        check_input(x);
        const int64_t b_n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const int64_t oh = (h + 2 * pad_ - k_) / stride_ + 1;
        const int64_t ow = (w + 2 * pad_ - k_) / stride_ + 1;
        DenseTensor<T> out = DenseTensor<T>::zeros({b_n, c_out_, oh, ow});
        for (int64_t b = 0; b < b_n; ++b)
            for (int64_t co = 0; co < c_out_; ++co)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        T acc = bias.data[size_t(co)];
                        for (int64_t ci = 0; ci < c_in_; ++ci)
                            for (int32_t ky = 0; ky < k_; ++ky) {
                                const int64_t iy = oy * stride_ - pad_ + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int32_t kx = 0; kx < k_; ++kx) {
                                    const int64_t ix = ox * stride_ - pad_ + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    acc += weight(co, ci, ky, kx) * x.at({b, ci, iy, ix});
                                }
                            }
                        out.at({b, co, oy, ox}) = acc;
                    }
        return out;
    }

    DenseTensor<T> backward(const DenseTensor<T>& x, const DenseTensor<T>& grad_out) {
        check_input(x);
        const int64_t b_n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];
        DenseTensor<T> grad_in = DenseTensor<T>::zeros(x.shape);
        for (int64_t b = 0; b < b_n; ++b)
            for (int64_t co = 0; co < c_out_; ++co)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const T g = grad_out.at({b, co, oy, ox});
                        bias.grad[size_t(co)] += g;
                        for (int64_t ci = 0; ci < c_in_; ++ci)
                            for (int32_t ky = 0; ky < k_; ++ky) {
                                const int64_t iy = oy * stride_ - pad_ + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int32_t kx = 0; kx < k_; ++kx) {
                                    const int64_t ix = ox * stride_ - pad_ + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    weight_grad(co, ci, ky, kx) += g * x.at({b, ci, iy, ix});
                                    grad_in.at({b, ci, iy, ix}) += g * weight(co, ci, ky, kx);
                                }
                            }
                    }
        return grad_in;
    }

    Value<T> kernel;  // c_out x c_in x k x k
    Value<T> bias;

private:
    void check_input(const DenseTensor<T>& x) const {
        if (x.shape.size() != 4 || x.shape[1] != c_in_)
            throw ShapeError("conv2d expects (B," + std::to_string(c_in_) + ",H,W) input");
    }
    T& weight_grad(int64_t co, int64_t ci, int32_t ky, int32_t kx) {
        return kernel.grad[size_t(((co * c_in_ + ci) * k_ + ky) * k_ + kx)];
    }
    const T& weight(int64_t co, int64_t ci, int32_t ky, int32_t kx) const {
        return kernel.data[size_t(((co * c_in_ + ci) * k_ + ky) * k_ + kx)];
    }

    int64_t c_in_ = 0;
    int64_t c_out_ = 0;
    int32_t k_ = 3;
    int32_t stride_ = 1;
    int32_t pad_ = 1;
};

// Height-axis flattening: (B,C,D,H,W) -> (B, C*D, H, W) with channel block
// c' = z*C + c. A pure permutation, exactly invertible.
template <typename T>
DenseTensor<T> dense_to_bev(const DenseTensor<T>& d) {
    if (d.shape.size() != 5) throw ShapeError("dense_to_bev expects a (B,C,D,H,W) tensor");
    const int64_t b_n = d.shape[0], c_n = d.shape[1], d_n = d.shape[2], h = d.shape[3],
                  w = d.shape[4];
    DenseTensor<T> bev = DenseTensor<T>::zeros({b_n, c_n * d_n, h, w});
    const int64_t plane = h * w;
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t z = 0; z < d_n; ++z) {
                const T* src = d.data.data() + size_t((((b * c_n + c) * d_n + z)) * plane);
                T* dst = bev.data.data() + size_t(((b * c_n * d_n + z * c_n + c)) * plane);
                std::copy(src, src + plane, dst);
            }
    return bev;
}

template <typename T>
DenseTensor<T> bev_to_dense(const DenseTensor<T>& bev, int64_t depth) {
    if (bev.shape.size() != 4) throw ShapeError("bev_to_dense expects a (B,C*D,H,W) tensor");
    if (depth < 1 || bev.shape[1] % depth != 0)
        throw ShapeError("bev channel count not divisible by depth");
    const int64_t b_n = bev.shape[0], c_n = bev.shape[1] / depth, h = bev.shape[2],
                  w = bev.shape[3];
    DenseTensor<T> d = DenseTensor<T>::zeros({b_n, c_n, depth, h, w});
    const int64_t plane = h * w;
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t z = 0; z < depth; ++z) {
                const T* src = bev.data.data() + size_t(((b * c_n * depth + z * c_n + c)) * plane);
                T* dst = d.data.data() + size_t((((b * c_n + c) * depth + z)) * plane);
                std::copy(src, src + plane, dst);
            }
    return d;
}

// Nearest-neighbor 2x upsample resized to an exact target; source index is
// clamped so odd targets are covered.
template <typename T>
DenseTensor<T> upsample_nearest2x(const DenseTensor<T>& x, int64_t out_h, int64_t out_w) {
    const int64_t b_n = x.shape[0], c_n = x.shape[1], h = x.shape[2], w = x.shape[3];
    DenseTensor<T> out = DenseTensor<T>::zeros({b_n, c_n, out_h, out_w});
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t y = 0; y < out_h; ++y) {
                const int64_t sy = std::min(y / 2, h - 1);
                for (int64_t xx = 0; xx < out_w; ++xx) {
                    const int64_t sx = std::min(xx / 2, w - 1);
                    out.at({b, c, y, xx}) = x.at({b, c, sy, sx});
                }
            }
    return out;
}

template <typename T>
DenseTensor<T> upsample_nearest2x_backward(const DenseTensor<T>& grad_out, int64_t in_h,
                                           int64_t in_w) {
    const int64_t b_n = grad_out.shape[0], c_n = grad_out.shape[1], oh = grad_out.shape[2],
                  ow = grad_out.shape[3];
    DenseTensor<T> grad_in = DenseTensor<T>::zeros({b_n, c_n, in_h, in_w});
    for (int64_t b = 0; b < b_n; ++b)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t y = 0; y < oh; ++y) {
                const int64_t sy = std::min(y / 2, in_h - 1);
                for (int64_t xx = 0; xx < ow; ++xx) {
                    const int64_t sx = std::min(xx / 2, in_w - 1);
                    grad_in.at({b, c, sy, sx}) += grad_out.at({b, c, y, xx});
                }
            }
    return grad_in;
}

struct GsaConfig {
    int64_t c0 = 32;          // scale-0 branch width
    int64_t c1 = 32;          // scale-1 branch width
    bool linear_mode = false;  // test hook: bypass activations
};

// Global spatial aggregation: project the sparse tensor to a dense BEV map,
// run a two-scale 2D CNN, convert back, and concatenate with the input
// features. The sparsity pattern never changes; output width is 2*C.
template <typename T>
class GsaBlock {
public:
    struct Cache {
        SparseVoxelTensor<T> input;
        DenseTensor<T> bev;               // CNN input
        DenseTensor<T> pre0a, pre0b;      // scale-0 pre-activations
        DenseTensor<T> act0a, act0b;
        DenseTensor<T> pre1a, pre1b;      // scale-1 pre-activations
        DenseTensor<T> act1a, act1b;
        DenseTensor<T> cat;               // fused CNN input
    };

    GsaBlock() = default;
    GsaBlock(int64_t channels, int64_t depth, const GsaConfig& cfg, std::mt19937_64& eng)
        : channels_(channels),
          depth_(depth),
          bev_channels_(channels * depth),
          linear_(cfg.linear_mode),
          s0a(bev_channels_, cfg.c0, 3, 1, 1, eng),
          s0b(cfg.c0, cfg.c0, 3, 1, 1, eng),
          s1a(bev_channels_, cfg.c1, 3, 2, 1, eng),
          s1b(cfg.c1, cfg.c1, 3, 1, 1, eng),
          fuse(cfg.c0 + cfg.c1, bev_channels_, 1, 1, 0, eng) {}

    int64_t bev_channels() const { return bev_channels_; }
    bool linear_mode() const { return linear_; }

    std::vector<Value<T>*> params() {
        return {&s0a.kernel, &s0a.bias, &s0b.kernel, &s0b.bias, &s1a.kernel,
                &s1a.bias,   &s1b.kernel, &s1b.bias, &fuse.kernel, &fuse.bias};
    }

    // Two-scale CNN on a BEV map; spatial size and channel count preserved.
    DenseTensor<T> cnn_forward(const DenseTensor<T>& bev, Cache* cache = nullptr) const {
        if (bev.shape.size() != 4 || bev.shape[1] != bev_channels_)
            throw ShapeError("bev cnn expects " + std::to_string(bev_channels_) + " channels");
        const int64_t h = bev.shape[2], w = bev.shape[3];
        DenseTensor<T> pre0a = s0a.forward(bev);
        DenseTensor<T> act0a = activate(pre0a);
        DenseTensor<T> pre0b = s0b.forward(act0a);
        DenseTensor<T> act0b = activate(pre0b);
        DenseTensor<T> pre1a = s1a.forward(bev);
        DenseTensor<T> act1a = activate(pre1a);
        DenseTensor<T> pre1b = s1b.forward(act1a);
        DenseTensor<T> act1b = activate(pre1b);
        DenseTensor<T> up = upsample_nearest2x(act1b, h, w);
        DenseTensor<T> cat = concat_channels(act0b, up);
        DenseTensor<T> out = fuse.forward(cat);
        if (cache) {
            cache->bev = bev;
            cache->pre0a = std::move(pre0a);
            cache->act0a = std::move(act0a);
            cache->pre0b = std::move(pre0b);
            cache->act0b = std::move(act0b);
            cache->pre1a = std::move(pre1a);
            cache->act1a = std::move(act1a);
            cache->pre1b = std::move(pre1b);
            cache->act1b = std::move(act1b);
            cache->cat = std::move(cat);
        }
        return out;
    }

    DenseTensor<T> cnn_backward(const Cache& c, const DenseTensor<T>& grad_out) {
        const int64_t h = c.bev.shape[2], w = c.bev.shape[3];
        DenseTensor<T> g_cat = fuse.backward(c.cat, grad_out);
        auto [g_act0b, g_up] = split_channels(g_cat, s0b.out_channels());
        DenseTensor<T> g_act1b =
            upsample_nearest2x_backward(g_up, c.act1b.shape[2], c.act1b.shape[3]);
        activate_backward(g_act1b, c.pre1b);
        DenseTensor<T> g_act1a = s1b.backward(c.act1a, g_act1b);
        activate_backward(g_act1a, c.pre1a);
        DenseTensor<T> g_bev_s1 = s1a.backward(c.bev, g_act1a);
        activate_backward(g_act0b, c.pre0b);
        DenseTensor<T> g_act0a = s0b.backward(c.act0a, g_act0b);
        activate_backward(g_act0a, c.pre0a);
        DenseTensor<T> g_bev = s0a.backward(c.bev, g_act0a);
        for (size_t i = 0; i < g_bev.data.size(); ++i) g_bev.data[i] += g_bev_s1.data[i];
        (void)h;
        (void)w;
        return g_bev;
    }

    SparseVoxelTensor<T> forward(const SparseVoxelTensor<T>& s, Cache* cache = nullptr) const {
        if (s.channels() != channels_ || s.extent().d != depth_)
            throw ShapeError("gsa block built for different channel/depth configuration");
        Cache local;
        Cache& c = cache ? *cache : local;
        c.input = s;
        DenseTensor<T> dense = densify(s);
        c.bev = dense_to_bev(dense);
        DenseTensor<T> cnn_out = cnn_forward(c.bev, &c);
        DenseTensor<T> back = bev_to_dense(cnn_out, depth_);
        SparseVoxelTensor<T> residual = sparsify(back, s.coords());
        return concat_features(s, residual);
    }

    // grad_out columns: first C for the pass-through input, second C for the
    // CNN residual. Returns grad wrt the input features.
    Matrix<T> backward(const Cache& c, const Matrix<T>& grad_out) {
        const SparseVoxelTensor<T>& s = c.input;
        if (grad_out.cols != 2 * channels_ || grad_out.rows != s.active_count())
            throw ShapeError("gsa backward: grad shape mismatch");
        Matrix<T> g_residual(s.active_count(), channels_);
        Matrix<T> g_in(s.active_count(), channels_);
        for (int64_t r = 0; r < grad_out.rows; ++r) {
            const T* src = grad_out.row(r);
            std::copy(src, src + channels_, g_in.row(r));
            std::copy(src + channels_, src + 2 * channels_, g_residual.row(r));
        }
        // scatter the residual grad into the dense voxel grid (sparsify^T)
        SparseVoxelTensor<T> g_res_sparse(s.extent(), s.batch(), s.coords(),
                                          std::move(g_residual));
        DenseTensor<T> g_back = densify(g_res_sparse);
        DenseTensor<T> g_cnn_out = dense_to_bev(g_back);
        DenseTensor<T> g_bev = cnn_backward(c, g_cnn_out);
        DenseTensor<T> g_dense = bev_to_dense(g_bev, depth_);
        SparseVoxelTensor<T> g_gathered = sparsify(g_dense, s.coords());
        for (int64_t r = 0; r < g_in.rows; ++r) {
            const T* src = g_gathered.features().row(r);
            T* dst = g_in.row(r);
            for (int64_t ch = 0; ch < channels_; ++ch) dst[ch] += src[ch];
        }
        return g_in;
    }

    Conv2d<T> s0a, s0b, s1a, s1b, fuse;

private:
    DenseTensor<T> activate(const DenseTensor<T>& x) const {
        if (linear_) return x;
        DenseTensor<T> out = x;
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        return out;
    }

    void activate_backward(DenseTensor<T>& g, const DenseTensor<T>& pre) const {
        if (linear_) return;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (!(pre.data[i] > T(0))) g.data[i] = T(0);
    }

    static DenseTensor<T> concat_channels(const DenseTensor<T>& a, const DenseTensor<T>& b) {
        const int64_t b_n = a.shape[0], ca = a.shape[1], cb = b.shape[1], h = a.shape[2],
                      w = a.shape[3];
        DenseTensor<T> out = DenseTensor<T>::zeros({b_n, ca + cb, h, w});
        const int64_t plane = h * w;
        for (int64_t bb = 0; bb < b_n; ++bb) {
            std::copy(a.data.begin() + bb * ca * plane, a.data.begin() + (bb + 1) * ca * plane,
                      out.data.begin() + bb * (ca + cb) * plane);
            std::copy(b.data.begin() + bb * cb * plane, b.data.begin() + (bb + 1) * cb * plane,
                      out.data.begin() + bb * (ca + cb) * plane + ca * plane);
        }
        return out;
    }

    static std::pair<DenseTensor<T>, DenseTensor<T>> split_channels(const DenseTensor<T>& x,
                                                                    int64_t ca) {
        const int64_t b_n = x.shape[0], ct = x.shape[1], h = x.shape[2], w = x.shape[3];
        const int64_t cb = ct - ca;
        DenseTensor<T> a = DenseTensor<T>::zeros({b_n, ca, h, w});
        DenseTensor<T> b = DenseTensor<T>::zeros({b_n, cb, h, w});
        const int64_t plane = h * w;
        for (int64_t bb = 0; bb < b_n; ++bb) {
            std::copy(x.data.begin() + bb * ct * plane, x.data.begin() + bb * ct * plane + ca * plane,
                      a.data.begin() + bb * ca * plane);
            std::copy(x.data.begin() + bb * ct * plane + ca * plane,
                      x.data.begin() + (bb + 1) * ct * plane, b.data.begin() + bb * cb * plane);
        }
        return {std::move(a), std::move(b)};
    }

    int64_t channels_ = 0;
    int64_t depth_ = 0;
    int64_t bev_channels_ = 0;
    bool linear_ = false;
};

// sparse -> dense projection stage of the aggregation pipeline
template <typename T>
DenseTensor<T> sparse_to_dense(const SparseVoxelTensor<T>& s) {
    return densify(s);
}

}  // namespace voxkit
