#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "voxkit/gsa.hpp"
#include "voxkit/loss.hpp"
#include "voxkit/mlp.hpp"
#include "voxkit/patch.hpp"
#include "voxkit/scene.hpp"
#include "voxkit/sparse_conv.hpp"
#include "voxkit/voxelize.hpp"

namespace voxkit {

struct GradCheckReport {
    std::string op;
    int instances = 0;
    int64_t elements = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

constexpr double kGradTol = 1e-4;

// One flat array to probe plus its analytic gradient.
struct ProbeTarget {
    double* data = nullptr;
    const double* analytic = nullptr;
    int64_t n = 0;
};

// Central differences at 64-bit; the relative-error denominator is floored
// so finite-difference noise on near-zero gradients does not dominate.
template <typename F>
double fd_max_rel_err(const std::vector<ProbeTarget>& targets, F&& eval_loss,
                      int64_t* probed = nullptr, double eps = 1e-6) {
    double worst = 0.0;
    int64_t count = 0;
    for (const auto& t : targets) {
        for (int64_t i = 0; i < t.n; ++i, ++count) {
            const double saved = t.data[i];
            t.data[i] = saved + eps;
            const double f_plus = eval_loss();
            t.data[i] = saved - eps;
            const double f_minus = eval_loss();
            t.data[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * eps);
            const double a = t.analytic[i];
            const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-2});
            worst = std::max(worst, std::fabs(a - fd) / denom);
        }
    }
    if (probed) *probed = count;
    return worst;
}

namespace gradcheck_detail {

inline Matrix<double> random_matrix(int64_t rows, int64_t cols, std::mt19937_64& eng,
                                    double scale = 1.0) {
    Matrix<double> m(rows, cols);
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& v : m.data) v = d(eng);
    return m;
}

inline SparseVoxelTensor<double> random_sparse(Extent e, int32_t batch, int64_t channels,
                                               double density, std::mt19937_64& eng) {
    std::uniform_real_distribution<double> u(0.0, 1.0), f(-1.0, 1.0);
    std::vector<Coord> coords;
    for (int32_t b = 0; b < batch; ++b)
        for (int32_t z = 0; z < e.d; ++z)
            for (int32_t y = 0; y < e.h; ++y)
                for (int32_t x = 0; x < e.w; ++x)
                    if (u(eng) < density) coords.push_back({b, z, y, x});
    if (coords.empty()) coords.push_back({0, 0, 0, 0});
    Matrix<double> feats(int64_t(coords.size()), channels);
    for (auto& v : feats.data) v = f(eng);
    return SparseVoxelTensor<double>(e, batch, coords, std::move(feats));
}

// projection weights for a scalar test loss over a feature matrix
inline double proj_loss(const Matrix<double>& out, const Matrix<double>& r) {
    double s = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * r.data[i];
    return s;
}

inline GradCheckReport check_patch_mlp(int instances, uint64_t seed) {
    GradCheckReport rep{"patch-mlp", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x6e11 + uint64_t(inst));
        Image<double> img(6, 8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : img.data) v = u(eng);
        ImagePatchConfig pcfg{3, 4, 5};
        PatchSet<double> ps = partition_image(img, pcfg);
        Mlp<double> mlp(ps.patches.cols, {7}, pcfg.out_dim, Activation::relu, 0.0, eng);
        Matrix<double> r = random_matrix(ps.count(), pcfg.out_dim, eng);

        typename Mlp<double>::Cache cache;
        encode_patches(ps, mlp, &cache);
        Matrix<double> g_in = mlp.backward(cache, r);

        auto eval = [&]() { return proj_loss(encode_patches(ps, mlp), r); };
        std::vector<ProbeTarget> targets;
        for (auto* p : mlp.params())
            targets.push_back({p->data.data(), p->grad.data(), int64_t(p->size())});
        targets.push_back({ps.patches.data.data(), g_in.data.data(),
                           int64_t(ps.patches.data.size())});
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

inline GradCheckReport check_voxel_mlp(int instances, uint64_t seed) {
    GradCheckReport rep{"voxel-mlp", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x70cc + uint64_t(inst));
        PointCloud pc;
        std::uniform_real_distribution<double> pos(0.05, 1.95);
        for (int i = 0; i < 50; ++i)
            pc.points.push_back({float(pos(eng)), float(pos(eng)), float(pos(eng))});
        VoxelConfig vcfg;
        vcfg.range_min = {0, 0, 0};
        vcfg.range_max = {2, 2, 2};
        vcfg.voxel_size = {0.5, 0.5, 0.5};
        vcfg.max_points = 6;
        vcfg.seed = seed + uint64_t(inst);
        VoxelBatch<double> vb = voxelize<double>(pc, vcfg);

        Mlp<double> mlp(6, {8}, 4, Activation::relu, 0.0, eng);
        const Reduce reduce = inst % 2 == 0 ? Reduce::max : Reduce::mean;
        Matrix<double> r = random_matrix(vb.voxel_count(), 4, eng);

        VoxelEncodeCache<double> cache;
        encode_voxels(vb, mlp, reduce, &cache);
        Matrix<double> g_aug = encode_voxels_backward(vb, mlp, reduce, cache, r);

        auto eval = [&]() {
            return proj_loss(encode_voxels(vb, mlp, reduce).features(), r);
        };
        std::vector<ProbeTarget> targets;
        for (auto* p : mlp.params())
            targets.push_back({p->data.data(), p->grad.data(), int64_t(p->size())});
        targets.push_back({vb.augmented.data.data(), g_aug.data.data(),
                           int64_t(vb.augmented.data.size())});
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

inline GradCheckReport check_sparse_conv(int instances, uint64_t seed) {
    GradCheckReport rep{"sparse-conv", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x5c01 + uint64_t(inst));
        SparseVoxelTensor<double> in = random_sparse({5, 5, 6}, 1, 3, 0.2, eng);
        const ConvGeom geom =
            inst % 2 == 0 ? ConvGeom::submanifold(3) : ConvGeom::strided2(3);
        SparseConv<double> conv(3, 4, geom, eng);
        IndexMap map = conv.build_index_map(in);
        Matrix<double> r = random_matrix(int64_t(map.output_coords.size()), 4, eng);

        conv.kernel.zero_grad();
        conv.bias.zero_grad();
        Matrix<double> g_in = conv.backward(r, map, in);

        auto eval = [&]() { return proj_loss(conv.forward_with(in, map).features(), r); };
        std::vector<ProbeTarget> targets = {
            {conv.kernel.data.data(), conv.kernel.grad.data(), int64_t(conv.kernel.size())},
            {conv.bias.data.data(), conv.bias.grad.data(), int64_t(conv.bias.size())},
            {in.mutable_features().data.data(), g_in.data.data(),
             int64_t(in.features().data.size())}};
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

inline GradCheckReport check_inverse_conv(int instances, uint64_t seed) {
    GradCheckReport rep{"inverse-conv", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x14fc + uint64_t(inst));
        SparseVoxelTensor<double> base = random_sparse({6, 6, 6}, 1, 3, 0.15, eng);
        SparseConv<double> down(3, 3, ConvGeom::strided2(3), eng);
        auto [mid, map] = down.forward(base);

        InverseSparseConv<double> inv(3, 2, 3, eng);
        inv.pair_with(map);
        Matrix<double> r = random_matrix(int64_t(map.input_coords.size()), 2, eng);

        inv.kernel.zero_grad();
        inv.bias.zero_grad();
        Matrix<double> g_in = inv.backward(r, mid);

        auto eval = [&]() { return proj_loss(inv.forward(mid).features(), r); };
        std::vector<ProbeTarget> targets = {
            {inv.kernel.data.data(), inv.kernel.grad.data(), int64_t(inv.kernel.size())},
            {inv.bias.data.data(), inv.bias.grad.data(), int64_t(inv.bias.size())},
            {mid.mutable_features().data.data(), g_in.data.data(),
             int64_t(mid.features().data.size())}};
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

inline GradCheckReport check_sds(int instances, uint64_t seed) {
    GradCheckReport rep{"sds", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x5d5 + uint64_t(inst));
        SparseVoxelTensor<double> in = random_sparse({6, 6, 6}, 1, 2, 0.12, eng);
        SdsConfig cfg{3, 3, 3, 2, 3};
        SdsBlock<double> block(2, cfg, eng);

        typename SdsBlock<double>::Cache cache;
        SparseVoxelTensor<double> out = block.forward(in, &cache);
        Matrix<double> r = random_matrix(out.active_count(), out.channels(), eng);
        for (auto* p : block.params()) p->zero_grad();
        Matrix<double> g_in = block.backward(cache, r);

        auto eval = [&]() { return proj_loss(block.forward(in).features(), r); };
        std::vector<ProbeTarget> targets;
        for (auto* p : block.params())
            targets.push_back({p->data.data(), p->grad.data(), int64_t(p->size())});
        targets.push_back({in.mutable_features().data.data(), g_in.data.data(),
                           int64_t(in.features().data.size())});
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

inline GradCheckReport check_gsa(int instances, uint64_t seed) {
    GradCheckReport rep{"gsa", instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x65a + uint64_t(inst));
        SparseVoxelTensor<double> in = random_sparse({3, 4, 5}, 1, 2, 0.3, eng);
        GsaBlock<double> block(2, 3, GsaConfig{4, 4, false}, eng);

        typename GsaBlock<double>::Cache cache;
        SparseVoxelTensor<double> out = block.forward(in, &cache);
        Matrix<double> r = random_matrix(out.active_count(), out.channels(), eng);
        for (auto* p : block.params()) p->zero_grad();
        Matrix<double> g_in = block.backward(cache, r);

        auto eval = [&]() { return proj_loss(block.forward(in).features(), r); };
        std::vector<ProbeTarget> targets;
        for (auto* p : block.params())
            targets.push_back({p->data.data(), p->grad.data(), int64_t(p->size())});
        targets.push_back({in.mutable_features().data.data(), g_in.data.data(),
                           int64_t(in.features().data.size())});
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

// toy heads: linear layer + softmax cross-entropy (voxel), mean pool +
// linear + cross-entropy (image)
inline GradCheckReport check_head(const std::string& name, bool pooled, int instances,
                                  uint64_t seed) {
    GradCheckReport rep{name, instances, 0, 0.0, false};
    for (int inst = 0; inst < instances; ++inst) {
        std::mt19937_64 eng = make_engine(seed, 0x4ead + uint64_t(inst));
        const int64_t rows = 12, feat = 5, classes = 3;
        Mlp<double> head(feat, {}, classes, Activation::relu, 0.0, eng);
        Matrix<double> x = random_matrix(rows, feat, eng);
        std::vector<int32_t> labels(size_t(pooled ? 1 : rows));
        std::uniform_int_distribution<int32_t> lab(0, classes - 1);
        for (auto& l : labels) l = lab(eng);

        auto eval = [&]() {
            if (!pooled) return softmax_cross_entropy(head.forward(x), labels);
            Matrix<double> p(1, feat);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < feat; ++c) p(0, c) += x(r, c) / double(rows);
            return softmax_cross_entropy(head.forward(p), labels);
        };

        typename Mlp<double>::Cache cache;
        Matrix<double> g_x(rows, feat);
        if (!pooled) {
            Matrix<double> logits = head.forward(x, &cache);
            Matrix<double> grad;
            softmax_cross_entropy(logits, labels, &grad);
            g_x = head.backward(cache, grad);
        } else {
            Matrix<double> p(1, feat);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < feat; ++c) p(0, c) += x(r, c) / double(rows);
            Matrix<double> logits = head.forward(p, &cache);
            Matrix<double> grad;
            softmax_cross_entropy(logits, labels, &grad);
            Matrix<double> g_pool = head.backward(cache, grad);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < feat; ++c) g_x(r, c) = g_pool(0, c) / double(rows);
        }

        std::vector<ProbeTarget> targets;
        for (auto* p : head.params())
            targets.push_back({p->data.data(), p->grad.data(), int64_t(p->size())});
        targets.push_back({x.data.data(), g_x.data.data(), int64_t(x.data.size())});
        int64_t n = 0;
        rep.max_rel_err = std::max(rep.max_rel_err, fd_max_rel_err(targets, eval, &n));
        rep.elements += n;
    }
    rep.pass = rep.max_rel_err < kGradTol;
    return rep;
}

}  // namespace gradcheck_detail

inline std::vector<std::string> gradcheck_ops() {
    return {"patch-mlp", "voxel-mlp", "sparse-conv", "inverse-conv",
            "sds",       "gsa",       "head-voxel",  "head-image"};
}

inline GradCheckReport run_gradcheck(const std::string& op, uint64_t seed = 17,
                                     int instances = 10) {
    using namespace gradcheck_detail;
    if (op == "patch-mlp") return check_patch_mlp(instances, seed);
    if (op == "voxel-mlp") return check_voxel_mlp(instances, seed);
    if (op == "sparse-conv") return check_sparse_conv(instances, seed);
    if (op == "inverse-conv") return check_inverse_conv(instances, seed);
    if (op == "sds") return check_sds(instances, seed);
    if (op == "gsa") return check_gsa(instances, seed);
    if (op == "head-voxel") return check_head("head-voxel", false, instances, seed);
    if (op == "head-image") return check_head("head-image", true, instances, seed);
    throw ConfigError("unknown gradcheck op '" + op + "'");
}

}  // namespace voxkit
