#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "voxkit/bench.hpp"
#include "voxkit/config.hpp"
#include "voxkit/gradcheck.hpp"
#include "voxkit/io.hpp"
#include "voxkit/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

voxkit::ExperimentConfig config_or_default(const std::string& path) {
    if (path.empty()) return voxkit::default_config();
    return voxkit::load_config_file(path);
}

int cmd_voxelize(const std::string& scan_path, const std::string& config_path) {
    const voxkit::ExperimentConfig cfg = config_or_default(config_path);
    const voxkit::PointCloud pc = voxkit::read_lidar_bin(scan_path);
    const voxkit::VoxelBatch<float> vb = voxkit::voxelize<float>(pc, cfg.voxel);
    const auto dims = cfg.voxel.grid_dims();
    std::cout << "scan: " << scan_path << "\n"
              << "points: " << pc.points.size() << "\n"
              << "grid (x,y,z): " << dims[0] << " x " << dims[1] << " x " << dims[2] << "\n"
              << "non-empty voxels: " << vb.voxel_count() << "\n"
              << "retained points: " << vb.retained_points() << "\n"
              << "dropped (over-full voxels): " << vb.dropped_points << "\n"
              << "out of range: " << vb.out_of_range << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& op, uint64_t seed, int instances) {
    std::vector<std::string> ops = op.empty() ? voxkit::gradcheck_ops()
                                              : std::vector<std::string>{op};
    bool all_pass = true;
    std::cout << std::left << std::setw(14) << "op" << std::setw(10) << "probes"
              << std::setw(14) << "max_rel_err" << "status\n";
    for (const auto& name : ops) {
        const voxkit::GradCheckReport rep = voxkit::run_gradcheck(name, seed, instances);
        std::cout << std::left << std::setw(14) << rep.op << std::setw(10) << rep.elements
                  << std::setw(14) << std::scientific << std::setprecision(2)
                  << rep.max_rel_err << (rep.pass ? "pass" : "FAIL") << "\n"
                  << std::defaultfloat;
        all_pass = all_pass && rep.pass;
    }
    return all_pass ? kExitOk : kExitNumeric;
}

int cmd_train(const std::string& config_path, const std::string& out_path) {
    const voxkit::ExperimentConfig cfg = config_or_default(config_path);
    const voxkit::Metrics metrics = voxkit::train_toy(cfg);
    std::ofstream out(out_path);
    if (!out) throw voxkit::ConfigError("cannot write metrics file: " + out_path);
    metrics.write_csv(out);
    const auto& last = metrics.final_epoch();
    std::cout << "epochs: " << last.epoch << "  final loss: " << last.loss
              << "  final score: " << last.score << "\nmetrics written to " << out_path << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& out_path) {
    const voxkit::ExperimentConfig cfg = config_or_default(config_path);
    const auto rows = voxkit::ablate(cfg);
    voxkit::write_ablation_csv(rows, std::cout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw voxkit::ConfigError("cannot write metrics file: " + out_path);
        voxkit::write_ablation_csv(rows, out);
    }
    return kExitOk;
}

int cmd_robust(const std::string& config_path, double sigma, const std::string& out_path) {
    const voxkit::ExperimentConfig cfg = config_or_default(config_path);
    const auto rows = voxkit::robustness_suite(cfg, sigma);
    voxkit::write_robust_csv(rows, std::cout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw voxkit::ConfigError("cannot write metrics file: " + out_path);
        voxkit::write_robust_csv(rows, out);
    }
    return kExitOk;
}

int cmd_bench(int side, double density, int64_t channels) {
    const auto rows = voxkit::bench_sparse_vs_dense(side, density, channels);
    std::cout << std::left << std::setw(18) << "mode" << std::setw(10) << "active"
              << std::setw(12) << "sparse_ms" << std::setw(12) << "dense_ms" << "ratio\n";
    for (const auto& r : rows)
        std::cout << std::left << std::setw(18) << r.mode << std::setw(10) << r.active
                  << std::setw(12) << std::fixed << std::setprecision(2) << r.sparse_ms
                  << std::setw(12) << r.dense_ms << std::setprecision(1) << r.ratio << "x\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse voxel perception toolkit"};
    app.require_subcommand(1);

    std::string scan_path, config_path, out_path, op;
    uint64_t seed = 17;
    int instances = 10;
    double sigma = 0.1;
    int bench_side = 64;
    double bench_density = 0.01;
    int64_t bench_channels = 8;

    auto* vox = app.add_subcommand("voxelize", "voxelize a raw LiDAR scan and print stats");
    vox->add_option("scan", scan_path, "little-endian float32 (x,y,z,intensity) scan file")
        ->required();
    vox->add_option("--config", config_path, "experiment config file (JSON)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--op", op, "single op to check (default: all)");
    gc->add_option("--seed", seed, "probe seed");
    gc->add_option("--instances", instances, "random instances per op");

    auto* tr = app.add_subcommand("train-toy", "train the toy task and emit metrics CSV");
    tr->add_option("--config", config_path, "experiment config file (JSON)");
    tr->add_option("--out", out_path, "metrics CSV path")->default_val("metrics.csv");

    auto* ab = app.add_subcommand("ablate", "four-run SDS x GSA ablation table");
    ab->add_option("--config", config_path, "experiment config file (JSON)");
    ab->add_option("--out", out_path, "also write the table to this CSV");

    auto* rb = app.add_subcommand("robust", "corruption robustness table on one trained model");
    rb->add_option("--config", config_path, "experiment config file (JSON)");
    rb->add_option("--sigma", sigma, "corruption noise std")->required();
    rb->add_option("--out", out_path, "also write the table to this CSV");

    auto* be = app.add_subcommand("bench", "sparse vs dense convolution timing table");
    be->add_option("--extent", bench_side, "cubic grid side")->default_val(64);
    be->add_option("--density", bench_density, "active voxel fraction")->default_val(0.01);
    be->add_option("--channels", bench_channels, "channel count")->default_val(8);

    try {
        app.parse(argc, argv);
        if (vox->parsed()) return cmd_voxelize(scan_path, config_path);
        if (gc->parsed()) return cmd_gradcheck(op, seed, instances);
        if (tr->parsed()) return cmd_train(config_path, out_path);
        if (ab->parsed()) return cmd_ablate(config_path, out_path);
        if (rb->parsed()) return cmd_robust(config_path, sigma, out_path);
        if (be->parsed()) return cmd_bench(bench_side, bench_density, bench_channels);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    } catch (const voxkit::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const voxkit::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
