#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxkit/mlp.hpp"
#include "voxkit/optim.hpp"
#include "voxkit/patch.hpp"
#include "voxkit/scene.hpp"
#include "voxkit/sparse_conv.hpp"
#include "voxkit/voxelize.hpp"

namespace voxkit {

enum class Task { voxel_segmentation, image_classification };
enum class OptKind { fp32, q8 };
enum class CorruptionKind { none, laser, pixel, both };

struct MlpSpec {
    std::vector<int64_t> hidden{32, 32};
    int64_t out_dim = 16;
    Activation activation = Activation::relu;
    double dropout = 0.3;
    Reduce reduce = Reduce::max;
};

struct GsaWidths {
    int64_t c0 = 32;
    int64_t c1 = 32;
};

struct SceneSetup {
    SceneParams params;
    int32_t train_scenes = 6;
    int32_t val_scenes = 2;
};

struct ImageTaskParams {
    int32_t height = 32;
    int32_t width = 32;
    int32_t classes = 4;
    int32_t train_images = 48;
    int32_t val_images = 24;
};

struct ExperimentConfig {
    Task task = Task::voxel_segmentation;
    uint64_t seed = 7;
    int32_t epochs = 30;
    int32_t batch_size = 2;
    bool sds = true;
    bool gsa = true;
    OptKind opt_kind = OptKind::q8;
    OptimConfig optim;
    CorruptionKind corruption = CorruptionKind::none;
    double sigma = 0.0;
    VoxelConfig voxel;
    ImagePatchConfig patch;
    MlpSpec mlp;
    SdsConfig sds_cfg;
    GsaWidths gsa_cfg;
    SceneSetup scene;
    ImageTaskParams image_task;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (sigma < 0.0) throw ConfigError("corruption sigma must be >= 0");
        if (task == Task::image_classification && (sds || gsa))
            throw ConfigError("sds/gsa layers apply to the voxel task only");
        optim.validate();
        voxel.validate();
        patch.validate();
        if (mlp.dropout < 0.0 || mlp.dropout >= 1.0)
            throw ConfigError("mlp dropout must lie in [0,1)");
        if (scene.train_scenes < 1 || scene.val_scenes < 1)
            throw ConfigError("scene counts must be >= 1");
        if (image_task.classes < 2) throw ConfigError("image task needs >= 2 classes");
        const int32_t ph = patch.patch_h, pw = patch.patch_w;
        if (task == Task::image_classification &&
            (image_task.height % ph != 0 || image_task.width % pw != 0))
            throw ConfigError("image size must be a multiple of the patch size");
    }
};

// Toy defaults: a 24x24x8 voxel grid over a 12m x 12m x 4m volume. The
// learning-rate is sized for desk-scale runs; betas/eps keep their standard
// values.
inline ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.voxel.range_min = {-6.0, -6.0, 0.0};
    cfg.voxel.range_max = {6.0, 6.0, 4.0};
    cfg.voxel.voxel_size = {0.5, 0.5, 0.5};
    cfg.voxel.max_points = 32;
    cfg.voxel.seed = mix_seed(cfg.seed, 0x70f31ull);
    cfg.optim.lr = 0.01;
    cfg.optim.block_size = 256;
    cfg.mlp.dropout = 0.1;
    cfg.patch.patch_h = 8;
    cfg.patch.patch_w = 8;
    cfg.patch.out_dim = 16;
    return cfg;
}

namespace detail {

using json = nlohmann::json;

inline void expect_keys(const json& obj, const std::string& ctx,
                        std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown config key '" + it.key() + "' in " + ctx);
    }
}

template <typename V>
void read_field(const json& obj, const char* key, V& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<V>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline void read_triple(const json& obj, const char* key, std::array<double, 3>& out) {
    if (!obj.contains(key)) return;
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 3)
        throw ConfigError(std::string("'") + key + "' must be a 3-element array");
    for (int a = 0; a < 3; ++a) out[size_t(a)] = arr.at(size_t(a)).get<double>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    using detail::expect_keys;
    using detail::read_field;
    using detail::read_triple;

    ExperimentConfig cfg = default_config();
    expect_keys(root, "top level",
                {"task", "seed", "epochs", "batch_size", "sds", "gsa", "optimizer", "corruption",
                 "extractor", "model", "scene", "image_task"});

    if (root.contains("task")) {
        const std::string t = root.at("task").get<std::string>();
        if (t == "voxel-segmentation")
            cfg.task = Task::voxel_segmentation;
        else if (t == "image-classification")
            cfg.task = Task::image_classification;
        else
            throw ConfigError("unknown task '" + t + "'");
    }
    read_field(root, "seed", cfg.seed);
    read_field(root, "epochs", cfg.epochs);
    read_field(root, "batch_size", cfg.batch_size);
    read_field(root, "sds", cfg.sds);
    read_field(root, "gsa", cfg.gsa);

    if (root.contains("optimizer")) {
        const auto& o = root.at("optimizer");
        expect_keys(o, "optimizer", {"kind", "lr", "beta1", "beta2", "eps", "block_size"});
        if (o.contains("kind")) {
            const std::string k = o.at("kind").get<std::string>();
            if (k == "fp32")
                cfg.opt_kind = OptKind::fp32;
            else if (k == "8bit")
                cfg.opt_kind = OptKind::q8;
            else
                throw ConfigError("optimizer kind must be 'fp32' or '8bit'");
        }
        read_field(o, "lr", cfg.optim.lr);
        read_field(o, "beta1", cfg.optim.beta1);
        read_field(o, "beta2", cfg.optim.beta2);
        read_field(o, "eps", cfg.optim.eps);
        read_field(o, "block_size", cfg.optim.block_size);
    }

    if (root.contains("corruption")) {
        const auto& c = root.at("corruption");
        expect_keys(c, "corruption", {"kind", "sigma"});
        if (c.contains("kind")) {
            const std::string k = c.at("kind").get<std::string>();
            if (k == "none")
                cfg.corruption = CorruptionKind::none;
            else if (k == "laser_noise" || k == "laser")
                cfg.corruption = CorruptionKind::laser;
            else if (k == "pixel_noise" || k == "pixel")
                cfg.corruption = CorruptionKind::pixel;
            else if (k == "both")
                cfg.corruption = CorruptionKind::both;
            else
                throw ConfigError("unknown corruption kind '" + k + "'");
        }
        read_field(c, "sigma", cfg.sigma);
    }

    if (root.contains("extractor")) {
        const auto& e = root.at("extractor");
        expect_keys(e, "extractor", {"voxel", "patch", "mlp"});
        if (e.contains("voxel")) {
            const auto& v = e.at("voxel");
            expect_keys(v, "extractor.voxel",
                        {"range_min", "range_max", "voxel_size", "max_points_per_voxel"});
            read_triple(v, "range_min", cfg.voxel.range_min);
            read_triple(v, "range_max", cfg.voxel.range_max);
            read_triple(v, "voxel_size", cfg.voxel.voxel_size);
            read_field(v, "max_points_per_voxel", cfg.voxel.max_points);
        }
        if (e.contains("patch")) {
            const auto& p = e.at("patch");
            expect_keys(p, "extractor.patch", {"patch_h", "patch_w", "out_dim"});
            read_field(p, "patch_h", cfg.patch.patch_h);
            read_field(p, "patch_w", cfg.patch.patch_w);
            read_field(p, "out_dim", cfg.patch.out_dim);
        }
        if (e.contains("mlp")) {
            const auto& m = e.at("mlp");
            expect_keys(m, "extractor.mlp",
                        {"hidden", "out_dim", "activation", "dropout", "reduce"});
            read_field(m, "hidden", cfg.mlp.hidden);
            read_field(m, "out_dim", cfg.mlp.out_dim);
            if (m.contains("activation")) {
                const std::string a = m.at("activation").get<std::string>();
                if (a == "relu")
                    cfg.mlp.activation = Activation::relu;
                else if (a == "tanh")
                    cfg.mlp.activation = Activation::tanh_fn;
                else
                    throw ConfigError("activation must be 'relu' or 'tanh'");
            }
            read_field(m, "dropout", cfg.mlp.dropout);
            if (m.contains("reduce")) {
                const std::string r = m.at("reduce").get<std::string>();
                if (r == "max")
                    cfg.mlp.reduce = Reduce::max;
                else if (r == "mean")
                    cfg.mlp.reduce = Reduce::mean;
                else
                    throw ConfigError("reduce must be 'max' or 'mean'");
            }
        }
    }

    if (root.contains("model")) {
        const auto& m = root.at("model");
        expect_keys(m, "model", {"sds", "gsa"});
        if (m.contains("sds")) {
            const auto& s = m.at("sds");
            expect_keys(s, "model.sds", {"c_down", "c_inv", "c_post", "c_out", "ksize"});
            read_field(s, "c_down", cfg.sds_cfg.c_down);
            read_field(s, "c_inv", cfg.sds_cfg.c_inv);
            read_field(s, "c_post", cfg.sds_cfg.c_post);
            read_field(s, "c_out", cfg.sds_cfg.c_out);
            read_field(s, "ksize", cfg.sds_cfg.ksize);
        }
        if (m.contains("gsa")) {
            const auto& g = m.at("gsa");
            expect_keys(g, "model.gsa", {"c0", "c1"});
            read_field(g, "c0", cfg.gsa_cfg.c0);
            read_field(g, "c1", cfg.gsa_cfg.c1);
        }
    }

    if (root.contains("scene")) {
        const auto& s = root.at("scene");
        expect_keys(s, "scene",
                    {"objects", "ground_points", "points_per_object", "noise", "train_scenes",
                     "val_scenes"});
        read_field(s, "objects", cfg.scene.params.object_count);
        read_field(s, "ground_points", cfg.scene.params.ground_points);
        read_field(s, "points_per_object", cfg.scene.params.points_per_object);
        read_field(s, "noise", cfg.scene.params.noise);
        read_field(s, "train_scenes", cfg.scene.train_scenes);
        read_field(s, "val_scenes", cfg.scene.val_scenes);
    }

    if (root.contains("image_task")) {
        const auto& it = root.at("image_task");
        expect_keys(it, "image_task",
                    {"height", "width", "classes", "train_images", "val_images"});
        read_field(it, "height", cfg.image_task.height);
        read_field(it, "width", cfg.image_task.width);
        read_field(it, "classes", cfg.image_task.classes);
        read_field(it, "train_images", cfg.image_task.train_images);
        read_field(it, "val_images", cfg.image_task.val_images);
    }

    cfg.voxel.seed = mix_seed(cfg.seed, 0x70f31ull);  // sampling stream follows the run seed
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(root);
}

}  // namespace voxkit
