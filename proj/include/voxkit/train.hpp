#pragma once

#include <chrono>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "voxkit/config.hpp"
#include "voxkit/gsa.hpp"
#include "voxkit/loss.hpp"
#include "voxkit/mlp.hpp"
#include "voxkit/optim.hpp"
#include "voxkit/patch.hpp"
#include "voxkit/scene.hpp"
#include "voxkit/sparse_conv.hpp"
#include "voxkit/voxelize.hpp"

namespace voxkit {

struct EpochMetrics {
    int32_t epoch = 0;
    double loss = 0.0;
    double score = 0.0;     // mean IoU (voxel task) or top-1 accuracy (image task)
    double step_ms = 0.0;   // median step wall-clock after a 10-step warmup
    int64_t state_bytes = 0;
    int64_t dropped_points = 0;   // subsampled away during training voxelization
    int64_t oob_points = 0;       // outside the configured range

    // step_ms is a measurement, not a function of the config, so it is
    // excluded from determinism comparisons
    bool same_learning_outcome(const EpochMetrics& o) const {
        return epoch == o.epoch && loss == o.loss && score == o.score &&
               state_bytes == o.state_bytes && dropped_points == o.dropped_points &&
               oob_points == o.oob_points;
    }
};

struct Metrics {
    std::vector<EpochMetrics> epochs;

    static const char* csv_header() {
        return "epoch,loss,score,step_ms,state_bytes,dropped_points,oob_points";
    }

    void write_csv(std::ostream& os) const {
        os << csv_header() << "\n";
        for (const auto& e : epochs)
            os << e.epoch << "," << e.loss << "," << e.score << "," << e.step_ms << ","
               << e.state_bytes << "," << e.dropped_points << "," << e.oob_points << "\n";
    }

    const EpochMetrics& final_epoch() const {
        if (epochs.empty()) throw StateError("no epochs recorded");
        return epochs.back();
    }
};

// Stack per-scene sparse tensors into one batched tensor; part i keeps its
// coordinates with batch index i, so rows stay contiguous per part.
template <typename T>
SparseVoxelTensor<T> merge_batch(const std::vector<SparseVoxelTensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("merge_batch: empty part list");
    const Extent e = parts.front().extent();
    const int64_t c = parts.front().channels();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (!(p.extent() == e) || p.channels() != c)
            throw ShapeError("merge_batch: parts disagree on extent/channels");
        total += p.active_count();
    }
    std::vector<Coord> coords;
    coords.reserve(size_t(total));
    Matrix<T> feats(total, c);
    int64_t row = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
        for (int64_t r = 0; r < parts[i].active_count(); ++r, ++row) {
            Coord cc = parts[i].coords()[size_t(r)];
            cc.b = int32_t(i);
            coords.push_back(cc);
            std::copy(parts[i].features().row(r), parts[i].features().row(r) + c,
                      feats.row(row));
        }
    }
    return SparseVoxelTensor<T>(e, int32_t(parts.size()), std::move(coords), std::move(feats));
}

// Voxel-segmentation pipeline: voxelize -> shared-MLP encode -> optional SDS
// -> optional GSA -> per-voxel linear head.
class VoxelPipeline {
public:
    struct Fwd {
        std::vector<VoxelBatch<float>> vbs;
        std::vector<VoxelEncodeCache<float>> enc_caches;
        std::vector<SparseVoxelTensor<float>> encoded;
        typename SdsBlock<float>::Cache sds_cache;
        typename GsaBlock<float>::Cache gsa_cache;
        SparseVoxelTensor<float> final_t;
        typename Mlp<float>::Cache head_cache;
        int64_t dropped = 0;
        int64_t oob = 0;
    };

    VoxelPipeline(const ExperimentConfig& cfg, std::mt19937_64& eng) : cfg_(cfg) {
        encoder_ = Mlp<float>(6, cfg.mlp.hidden, cfg.mlp.out_dim, cfg.mlp.activation,
                              cfg.mlp.dropout, eng);
        int64_t c = cfg.mlp.out_dim;
        int64_t depth = cfg.voxel.extent().d;
        if (cfg.sds) {
            sds_.emplace(c, cfg.sds_cfg, eng);
            c = cfg.sds_cfg.c_out;
            depth = (depth - 1) / 2 + 1;  // stride-2, kernel 3, pad 1
        }
        if (cfg.gsa) {
            gsa_.emplace(c, depth, GsaConfig{cfg.gsa_cfg.c0, cfg.gsa_cfg.c1, false}, eng);
            c = 2 * c;
        }
        head_ = Mlp<float>(c, {}, SceneParams::num_classes, cfg.mlp.activation, 0.0, eng);
    }

    int32_t net_downsample() const { return sds_ ? 2 : 1; }

    std::vector<Value<float>*> params() {
        std::vector<Value<float>*> ps = encoder_.params();
        if (sds_)
            for (auto* p : sds_->params()) ps.push_back(p);
        if (gsa_)
            for (auto* p : gsa_->params()) ps.push_back(p);
        for (auto* p : head_.params()) ps.push_back(p);
        return ps;
    }

    Matrix<float> forward(const std::vector<const PointCloud*>& clouds, Fwd& f, bool training,
                          std::mt19937_64* drop_eng) {
        f.vbs.clear();
        f.enc_caches.assign(clouds.size(), {});
        f.encoded.clear();
        f.dropped = f.oob = 0;
        for (size_t i = 0; i < clouds.size(); ++i) {
            f.vbs.push_back(voxelize<float>(*clouds[i], cfg_.voxel));
            f.dropped += f.vbs.back().dropped_points;
            f.oob += f.vbs.back().out_of_range;
            f.encoded.push_back(encode_voxels(f.vbs.back(), encoder_, cfg_.mlp.reduce,
                                              &f.enc_caches[i], training, drop_eng));
        }
        SparseVoxelTensor<float> cur = merge_batch(f.encoded);
        if (sds_) cur = sds_->forward(cur, &f.sds_cache);
        if (gsa_) cur = gsa_->forward(cur, &f.gsa_cache);
        f.final_t = std::move(cur);
        return head_.forward(f.final_t.features(), &f.head_cache, training, drop_eng);
    }

    void backward(Fwd& f, const Matrix<float>& grad_logits) {
        Matrix<float> g = head_.backward(f.head_cache, grad_logits);
        if (gsa_) g = gsa_->backward(f.gsa_cache, g);
        if (sds_) g = sds_->backward(f.sds_cache, g);
        int64_t row = 0;
        for (size_t i = 0; i < f.encoded.size(); ++i) {
            const int64_t m = f.encoded[i].active_count();
            Matrix<float> gi(m, g.cols);
            for (int64_t r = 0; r < m; ++r)
                std::copy(g.row(row + r), g.row(row + r) + g.cols, gi.row(r));
            row += m;
            encode_voxels_backward(f.vbs[i], encoder_, cfg_.mlp.reduce, f.enc_caches[i], gi);
        }
    }

    // Majority vote over retained point labels pooled onto the final grid;
    // voxels nobody labeled get -1 and are ignored by loss and IoU.
    std::vector<int32_t> voxel_labels(const Fwd& f,
                                      const std::vector<const std::vector<int32_t>*>& labels) const {
        const int32_t factor = net_downsample();
        constexpr int32_t k_classes = SceneParams::num_classes;
        std::unordered_map<Coord, std::array<int64_t, k_classes>, CoordHash> hist;
        for (size_t i = 0; i < f.vbs.size(); ++i) {
            const VoxelBatch<float>& vb = f.vbs[i];
            for (int64_t v = 0; v < vb.voxel_count(); ++v) {
                const Coord& c = vb.voxel_coords[size_t(v)];
                const Coord target{int32_t(i), c.z / factor, c.y / factor, c.x / factor};
                auto& h = hist[target];
                for (int64_t r = vb.offsets[size_t(v)]; r < vb.offsets[size_t(v) + 1]; ++r)
                    ++h[size_t((*labels[i])[size_t(vb.point_ids[size_t(r)])])];
            }
        }
        std::vector<int32_t> out(size_t(f.final_t.active_count()), -1);
        for (int64_t r = 0; r < f.final_t.active_count(); ++r) {
            auto it = hist.find(f.final_t.coords()[size_t(r)]);
            if (it == hist.end()) continue;
            int32_t best = 0;
            for (int32_t k = 1; k < k_classes; ++k)
                if (it->second[size_t(k)] > it->second[size_t(best)]) best = k;
            out[size_t(r)] = best;
        }
        return out;
    }

private:
    ExperimentConfig cfg_;
    Mlp<float> encoder_;
    std::optional<SdsBlock<float>> sds_;
    std::optional<GsaBlock<float>> gsa_;
    Mlp<float> head_;
};

// Image-classification pipeline: patch partition -> shared-MLP encode ->
// mean pool -> linear head.
class ImagePipeline {
public:
    struct Fwd {
        PatchSet<float> ps;
        typename Mlp<float>::Cache enc_cache;
        Matrix<float> feats;
        typename Mlp<float>::Cache head_cache;
    };

    ImagePipeline(const ExperimentConfig& cfg, std::mt19937_64& eng) : patch_(cfg.patch) {
        const int64_t in_dim = int64_t(cfg.patch.patch_h) * cfg.patch.patch_w * 3;
        encoder_ = Mlp<float>(in_dim, cfg.mlp.hidden, cfg.patch.out_dim, cfg.mlp.activation,
                              cfg.mlp.dropout, eng);
        head_ = Mlp<float>(cfg.patch.out_dim, {}, cfg.image_task.classes, cfg.mlp.activation,
                           0.0, eng);
    }

    std::vector<Value<float>*> params() {
        std::vector<Value<float>*> ps = encoder_.params();
        for (auto* p : head_.params()) ps.push_back(p);
        return ps;
    }

    Matrix<float> forward(const Image<float>& img, Fwd& f, bool training,
                          std::mt19937_64* drop_eng) {
        f.ps = partition_image(img, patch_);
        f.feats = encode_patches(f.ps, encoder_, &f.enc_cache, training, drop_eng);
        Matrix<float> pooled(1, f.feats.cols);
        for (int64_t r = 0; r < f.feats.rows; ++r)
            for (int64_t c = 0; c < f.feats.cols; ++c) pooled(0, c) += f.feats(r, c);
        const float inv = 1.0f / float(f.feats.rows);
        for (auto& v : pooled.data) v *= inv;
        return head_.forward(pooled, &f.head_cache, training, drop_eng);
    }

    void backward(Fwd& f, const Matrix<float>& grad_logits) {
        Matrix<float> g_pooled = head_.backward(f.head_cache, grad_logits);
        Matrix<float> g_rows(f.feats.rows, f.feats.cols);
        const float inv = 1.0f / float(f.feats.rows);
        for (int64_t r = 0; r < g_rows.rows; ++r)
            for (int64_t c = 0; c < g_rows.cols; ++c) g_rows(r, c) = g_pooled(0, c) * inv;
        encoder_.backward(f.enc_cache, g_rows);
    }

private:
    ImagePatchConfig patch_;
    Mlp<float> encoder_;
    Mlp<float> head_;
};

inline const char* corruption_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::none: return "none";
        case CorruptionKind::laser: return "laser_noise";
        case CorruptionKind::pixel: return "pixel_noise";
        case CorruptionKind::both: return "both";
    }
    return "?";
}

// One toy experiment: owns the data, the model, and the optimizer, so the
// robustness protocol can re-evaluate the same trained model under different
// corruptions.
class ToyExperiment {
public:
    struct EvalResult {
        double loss = 0.0;
        double score = 0.0;
    };

    explicit ToyExperiment(const ExperimentConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
    }

    Metrics train() {
        Metrics metrics;
        std::vector<double> step_times;
        const auto params = vox_ ? vox_->params() : img_->params();
        for (int32_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            double epoch_loss = 0.0;
            int64_t batches = 0, dropped = 0, oob = 0;
            if (vox_) {
                for (size_t start = 0; start < train_scenes_.size();
                     start += size_t(cfg_.batch_size)) {
                    const auto t0 = std::chrono::steady_clock::now();
                    zero_grads(params);
                    std::vector<const PointCloud*> clouds;
                    std::vector<const std::vector<int32_t>*> labels;
                    for (size_t i = start;
                         i < std::min(train_scenes_.size(), start + size_t(cfg_.batch_size)); ++i) {
                        clouds.push_back(&train_scenes_[i].cloud);
                        labels.push_back(&train_scenes_[i].labels);
                    }
                    VoxelPipeline::Fwd f;
                    Matrix<float> logits = vox_->forward(clouds, f, true, &dropout_eng_);
                    const std::vector<int32_t> targets = vox_->voxel_labels(f, labels);
                    Matrix<float> grad;
                    epoch_loss += softmax_cross_entropy(logits, targets, &grad);
                    vox_->backward(f, grad);
                    optimizer_step(params);
                    dropped += f.dropped;
                    oob += f.oob;
                    ++batches;
                    step_times.push_back(elapsed_ms(t0));
                }
            } else {
                for (size_t start = 0; start < train_images_.size();
                     start += size_t(cfg_.batch_size)) {
                    const auto t0 = std::chrono::steady_clock::now();
                    zero_grads(params);
                    double batch_loss = 0.0;
                    const size_t end =
                        std::min(train_images_.size(), start + size_t(cfg_.batch_size));
                    for (size_t i = start; i < end; ++i) {
                        ImagePipeline::Fwd f;
                        Matrix<float> logits =
                            img_->forward(train_images_[i], f, true, &dropout_eng_);
                        Matrix<float> grad;
                        batch_loss += softmax_cross_entropy(
                            logits, {train_image_labels_[i]}, &grad);
                        const float inv = 1.0f / float(end - start);
                        for (auto& g : grad.data) g *= inv;
                        img_->backward(f, grad);
                    }
                    epoch_loss += batch_loss / double(end - start);
                    optimizer_step(params);
                    ++batches;
                    step_times.push_back(elapsed_ms(t0));
                }
            }
            const EvalResult er = evaluate(cfg_.corruption, cfg_.sigma);
            EpochMetrics em;
            em.epoch = epoch;
            em.loss = epoch_loss / double(batches);
            em.score = er.score;
            em.step_ms = median_after_warmup(step_times);
            em.state_bytes = state_bytes();
            em.dropped_points = dropped;
            em.oob_points = oob;
            metrics.epochs.push_back(em);
        }
        return metrics;
    }

    // Corruption applies at evaluation time only, on the validation data.
    EvalResult evaluate(CorruptionKind kind, double sigma) {
        EvalResult er;
        if (vox_) {
            const bool laser =
                kind == CorruptionKind::laser || kind == CorruptionKind::both;
            std::vector<SyntheticScene> scenes;
            scenes.reserve(val_scenes_.size());
            for (size_t i = 0; i < val_scenes_.size(); ++i)
                scenes.push_back(laser ? corrupt_scene(val_scenes_[i], sigma,
                                                       mix_seed(cfg_.seed, 3000 + i))
                                       : val_scenes_[i]);
            std::vector<const PointCloud*> clouds;
            std::vector<const std::vector<int32_t>*> labels;
            for (const auto& s : scenes) {
                clouds.push_back(&s.cloud);
                labels.push_back(&s.labels);
            }
            VoxelPipeline::Fwd f;
            Matrix<float> logits = vox_->forward(clouds, f, false, nullptr);
            const std::vector<int32_t> targets = vox_->voxel_labels(f, labels);
            er.loss = softmax_cross_entropy(logits, targets);
            er.score = mean_iou(argmax_rows(logits), targets, SceneParams::num_classes);
        } else {
            const bool pixel =
                kind == CorruptionKind::pixel || kind == CorruptionKind::both;
            int64_t correct = 0;
            double loss = 0.0;
            for (size_t i = 0; i < val_images_.size(); ++i) {
                const Image<float> img =
                    pixel ? corrupt_image(val_images_[i], sigma, mix_seed(cfg_.seed, 4000 + i))
                          : val_images_[i];
                ImagePipeline::Fwd f;
                Matrix<float> logits = img_->forward(img, f, false, nullptr);
                loss += softmax_cross_entropy(logits, {val_image_labels_[i]});
                if (argmax_rows(logits)[0] == val_image_labels_[i]) ++correct;
            }
            er.loss = loss / double(val_images_.size());
            er.score = double(correct) / double(val_images_.size());
        }
        return er;
    }

    int64_t state_bytes() const {
        if (opt_fp32_) return opt_fp32_->state_bytes();
        return opt_q8_->state_bytes();
    }

private:
    void build() {
        std::mt19937_64 init_eng = make_engine(cfg_.seed, 0x10de1ull);
        if (cfg_.task == Task::voxel_segmentation) {
            vox_.emplace(cfg_, init_eng);
            for (int32_t i = 0; i < cfg_.scene.train_scenes; ++i)
                train_scenes_.push_back(gen_synthetic_scene(mix_seed(cfg_.seed, 1000 + i),
                                                            cfg_.scene.params,
                                                            cfg_.voxel.range_min,
                                                            cfg_.voxel.range_max));
            for (int32_t i = 0; i < cfg_.scene.val_scenes; ++i)
                val_scenes_.push_back(gen_synthetic_scene(mix_seed(cfg_.seed, 2000 + i),
                                                          cfg_.scene.params,
                                                          cfg_.voxel.range_min,
                                                          cfg_.voxel.range_max));
        } else {
            img_.emplace(cfg_, init_eng);
            for (int32_t i = 0; i < cfg_.image_task.train_images; ++i) {
                const int32_t cls = i % cfg_.image_task.classes;
                train_images_.push_back(gen_synthetic_image(mix_seed(cfg_.seed, 5000 + i),
                                                            cfg_.image_task.height,
                                                            cfg_.image_task.width, cls,
                                                            cfg_.image_task.classes));
                train_image_labels_.push_back(cls);
            }
            for (int32_t i = 0; i < cfg_.image_task.val_images; ++i) {
                const int32_t cls = i % cfg_.image_task.classes;
                val_images_.push_back(gen_synthetic_image(mix_seed(cfg_.seed, 6000 + i),
                                                          cfg_.image_task.height,
                                                          cfg_.image_task.width, cls,
                                                          cfg_.image_task.classes));
                val_image_labels_.push_back(cls);
            }
        }
        if (cfg_.opt_kind == OptKind::fp32)
            opt_fp32_.emplace(cfg_.optim);
        else
            opt_q8_.emplace(cfg_.optim);
        dropout_eng_ = make_engine(cfg_.seed, 0xd401ull);
    }

    static void zero_grads(const std::vector<Value<float>*>& params) {
        for (auto* p : params) p->zero_grad();
    }

    void optimizer_step(const std::vector<Value<float>*>& params) {
        if (opt_fp32_)
            opt_fp32_->step(params);
        else
            opt_q8_->step(params);
    }

    static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }

    static double median_after_warmup(std::vector<double> times) {
        if (times.empty()) return 0.0;
        if (times.size() > 10) times.erase(times.begin(), times.begin() + 10);
        std::sort(times.begin(), times.end());
        const size_t n = times.size();
        return n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    }

    ExperimentConfig cfg_;
    std::vector<SyntheticScene> train_scenes_, val_scenes_;
    std::vector<Image<float>> train_images_, val_images_;
    std::vector<int32_t> train_image_labels_, val_image_labels_;
    std::optional<VoxelPipeline> vox_;
    std::optional<ImagePipeline> img_;
    std::optional<AdamFp32> opt_fp32_;
    std::optional<Adam8bit> opt_q8_;
    std::mt19937_64 dropout_eng_;
};

inline Metrics train_toy(const ExperimentConfig& cfg) { return ToyExperiment(cfg).train(); }

struct AblationRow {
    bool sds = false;
    bool gsa = false;
    double final_loss = 0.0;
    double final_score = 0.0;
    double step_ms = 0.0;
    int64_t state_bytes = 0;
};

// Four (SDS x GSA) runs with a shared seed; row order off/off, on/off,
// off/on, on/on.
inline std::vector<AblationRow> ablate(const ExperimentConfig& cfg) {
    if (cfg.task != Task::voxel_segmentation)
        throw ConfigError("ablate runs on the voxel-segmentation task");
    std::vector<AblationRow> rows;
    const bool flags[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
    for (const auto& fl : flags) {
        ExperimentConfig c = cfg;
        c.sds = fl[0];
        c.gsa = fl[1];
        const Metrics m = train_toy(c);
        const EpochMetrics& last = m.final_epoch();
        rows.push_back({fl[0], fl[1], last.loss, last.score, last.step_ms, last.state_bytes});
    }
    return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& os) {
    os << "sds,gsa,final_loss,final_score,step_ms,state_bytes\n";
    for (const auto& r : rows)
        os << (r.sds ? 1 : 0) << "," << (r.gsa ? 1 : 0) << "," << r.final_loss << ","
           << r.final_score << "," << r.step_ms << "," << r.state_bytes << "\n";
}

struct RobustRow {
    CorruptionKind kind = CorruptionKind::none;
    double sigma = 0.0;
    double loss = 0.0;
    double score = 0.0;
    double delta_score = 0.0;  // vs. the clean row
};

// Clean run plus laser/pixel/both corruption applied at evaluation on the
// same trained model.
inline std::vector<RobustRow> robustness_suite(const ExperimentConfig& cfg, double sigma) {
    ExperimentConfig clean = cfg;
    clean.corruption = CorruptionKind::none;
    clean.sigma = 0.0;
    ToyExperiment ex(clean);
    ex.train();
    std::vector<RobustRow> rows;
    const CorruptionKind kinds[4] = {CorruptionKind::none, CorruptionKind::laser,
                                     CorruptionKind::pixel, CorruptionKind::both};
    double clean_score = 0.0;
    for (CorruptionKind k : kinds) {
        const double s = k == CorruptionKind::none ? 0.0 : sigma;
        const auto er = ex.evaluate(k, s);
        if (k == CorruptionKind::none) clean_score = er.score;
        rows.push_back({k, s, er.loss, er.score, er.score - clean_score});
    }
    return rows;
}

inline void write_robust_csv(const std::vector<RobustRow>& rows, std::ostream& os) {
    os << "corruption,sigma,loss,score,delta_score\n";
    for (const auto& r : rows)
        os << corruption_name(r.kind) << "," << r.sigma << "," << r.loss << "," << r.score << ","
           << r.delta_score << "\n";
}

}  // namespace voxkit
