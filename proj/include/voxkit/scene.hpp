#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "voxkit/patch.hpp"
#include "voxkit/rng.hpp"
#include "voxkit/voxelize.hpp"

namespace voxkit {

// Labeled desk-scale LiDAR stand-in: a ground plane plus simple primitives.
// Classes: 0 ground, 1 box, 2 sphere, 3 pillar.
struct SceneParams {
    int32_t object_count = 5;
    int64_t ground_points = 2500;
    int64_t points_per_object = 400;
    double noise = 0.02;  // coordinate jitter, meters

    static constexpr int32_t num_classes = 4;
};

struct SyntheticScene {
    PointCloud cloud;
    std::vector<int32_t> labels;  // one per point
};

// Primitives live in disjoint height bands (fractions of the z span) so the
// toy task is learnable from point coordinates alone.
inline SyntheticScene gen_synthetic_scene(uint64_t seed, const SceneParams& params,
                                          const std::array<double, 3>& range_min,
                                          const std::array<double, 3>& range_max) {
    SyntheticScene scene;
    std::mt19937_64 eng = make_engine(seed, 0x5ce9e5ull);
    std::normal_distribution<double> jitter(0.0, params.noise);
    const double zmin = range_min[2], zspan = range_max[2] - range_min[2];
    const double margin = 0.12;
    auto uniform_xy = [&](int axis) {
        const double lo = range_min[size_t(axis)], hi = range_max[size_t(axis)];
        const double pad = (hi - lo) * margin;
        std::uniform_real_distribution<double> d(lo + pad, hi - pad);
        return d(eng);
    };
    auto push = [&](double x, double y, double z, int32_t label) {
        scene.cloud.points.push_back({float(x + jitter(eng)), float(y + jitter(eng)),
                                      float(z + jitter(eng))});
        scene.labels.push_back(label);
    };

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int64_t i = 0; i < params.ground_points; ++i) {
        const double x = range_min[0] + u01(eng) * (range_max[0] - range_min[0]);
        const double y = range_min[1] + u01(eng) * (range_max[1] - range_min[1]);
        const double z = zmin + zspan * (0.02 + 0.05 * u01(eng));
        push(x, y, z, 0);
    }

    for (int32_t obj = 0; obj < params.object_count; ++obj) {
        const int32_t cls = 1 + obj % 3;
        const double cx = uniform_xy(0);
        const double cy = uniform_xy(1);
        if (cls == 1) {  // box, band around 0.35*span
            const double cz = zmin + zspan * 0.35;
            std::uniform_real_distribution<double> hx(0.3, 0.9), hz(0.2, 0.35);
            const double ax = hx(eng), ay = hx(eng), az = zspan * 0.1 * hz(eng) / 0.35;
            for (int64_t i = 0; i < params.points_per_object; ++i)
                push(cx + ax * (2 * u01(eng) - 1), cy + ay * (2 * u01(eng) - 1),
                     cz + az * (2 * u01(eng) - 1), cls);
        } else if (cls == 2) {  // sphere, band around 0.62*span
            const double cz = zmin + zspan * 0.62;
            std::uniform_real_distribution<double> rad(0.25, 0.6);
            const double r = rad(eng);
            for (int64_t i = 0; i < params.points_per_object; ++i) {
                double px, py, pz;
                do {
                    px = 2 * u01(eng) - 1;
                    py = 2 * u01(eng) - 1;
                    pz = 2 * u01(eng) - 1;
                } while (px * px + py * py + pz * pz > 1.0);
                push(cx + r * px, cy + r * py, cz + zspan * 0.05 * pz, cls);
            }
        } else {  // pillar, band around 0.88*span
            std::uniform_real_distribution<double> rad(0.1, 0.3);
            const double r = rad(eng);
            for (int64_t i = 0; i < params.points_per_object; ++i) {
                const double ang = 2.0 * M_PI * u01(eng);
                const double rr = r * std::sqrt(u01(eng));
                const double z = zmin + zspan * (0.84 + 0.08 * u01(eng));
                push(cx + rr * std::cos(ang), cy + rr * std::sin(ang), z, cls);
            }
        }
    }
    return scene;
}

// Laser noise: zero-mean Gaussian jitter on point coordinates. sigma == 0 is
// the identity (bit-exact copy).
inline SyntheticScene corrupt_scene(const SyntheticScene& scene, double sigma, uint64_t seed) {
    SyntheticScene out = scene;
    if (sigma <= 0.0) return out;
    std::mt19937_64 eng = make_engine(seed, 0x1a5e2ull);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& p : out.cloud.points)
        for (int a = 0; a < 3; ++a) p[size_t(a)] = float(double(p[size_t(a)]) + noise(eng));
    return out;
}

// Pixel noise: Gaussian jitter clamped back into [0,1]. sigma == 0 is the
// identity.
inline Image<float> corrupt_image(const Image<float>& img, double sigma, uint64_t seed) {
    Image<float> out = img;
    if (sigma <= 0.0) return out;
    std::mt19937_64 eng = make_engine(seed, 0x91e1ull);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : out.data)
        v = std::min(1.0f, std::max(0.0f, float(double(v) + noise(eng))));
    return out;
}

// Class-dependent synthetic image: a per-class base color with an oriented
// gradient; easy to classify, non-trivial to memorize.
inline Image<float> gen_synthetic_image(uint64_t seed, int32_t h, int32_t w, int32_t cls,
                                        int32_t num_classes) {
    Image<float> img(h, w);
    std::mt19937_64 eng = make_engine(seed, 0xfacadeull);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double hue = double(cls) / double(num_classes);
    const double angle = 2.0 * M_PI * hue + 0.3 * u01(eng);
    const double gx = std::cos(angle), gy = std::sin(angle);
    for (int32_t y = 0; y < h; ++y)
        for (int32_t x = 0; x < w; ++x) {
            const double t = 0.5 + 0.5 * (gx * (double(x) / w - 0.5) + gy * (double(y) / h - 0.5));
            img.at(y, x, 0) = float(std::clamp(0.15 + 0.7 * hue + 0.15 * t + 0.05 * u01(eng), 0.0, 1.0));
            img.at(y, x, 1) = float(std::clamp(0.9 - 0.7 * hue + 0.1 * t + 0.05 * u01(eng), 0.0, 1.0));
            img.at(y, x, 2) = float(std::clamp(0.2 + 0.6 * t + 0.05 * u01(eng), 0.0, 1.0));
        }
    return img;
}

}  // namespace voxkit
