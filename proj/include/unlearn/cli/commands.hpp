#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "unlearn/cli/config.hpp"
#include "unlearn/cli/experiment.hpp"
#include "unlearn/data/checkpoint.hpp"
#include "unlearn/data/export.hpp"
#include "unlearn/error.hpp"
#include "unlearn/linalg/matrix.hpp"
#include "unlearn/nn/model.hpp"
#include "unlearn/nn/train.hpp"
#include "unlearn/sap/sap.hpp"

namespace unlearn {

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

/// Restores the observed labels to the true ones, modelling a retrain on
/// uncorrupted data.
inline LabeledDataset with_true_labels(const LabeledDataset& data) {
    LabeledDataset out = data;
    out.labels = data.true_labels;
    return out;
}

}  // namespace detail

/// Full pipeline: corrupt, split, train the vanilla model, apply the
/// correction, evaluate everything, and write metrics.csv, checkpoints, and
/// manifest.json into the output directory.
inline int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed_flag = {},
                   std::optional<std::string> out_flag = {}) {
    const LoadedConfig loaded = load_config(config_path, seed_flag, out_flag);
    const ExperimentConfig& cfg = loaded.cfg;
    const DerivedSeeds seeds = derive_seeds(cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);

    const PreparedData data = prepare_data(cfg, seeds);
    Model arch = build_model(cfg, data.train);
    init_weights(arch, seeds.init);
    TrainConfig tc = cfg.train;
    tc.seed = seeds.train;

    CsvWriter metrics = metrics_writer();
    std::vector<std::string> artifacts = {"metrics.csv", "manifest.json", "vanilla.ckpt",
                                          "sap.ckpt"};
    const Provenance prov{cfg.seed, loaded.digest};

    WallClock w1;
    auto [vanilla, hist] = train(arch, data.train, tc);
    metrics_row(metrics, measure(loaded.digest, "vanilla", vanilla, data, -1.0, w1.seconds()));
    save_checkpoint(vanilla, detail::join_path(cfg.out_dir, "vanilla.ckpt"), prov);

    if (cfg.run_retrain && data.train.has_true_labels()) {
        WallClock w2;
        auto [retrained, rh] = train(arch, detail::with_true_labels(data.train), tc);
        metrics_row(metrics,
                    measure(loaded.digest, "retrain", retrained, data, -1.0, w2.seconds()));
        save_checkpoint(retrained, detail::join_path(cfg.out_dir, "retrain.ckpt"), prov);
        artifacts.push_back("retrain.ckpt");
    }

    WallClock w3;
    SapResult corrected = sap(vanilla, data.train, cfg.sap.alpha, cfg.sap.n_trust,
                              cfg.sap.patch_cap);
    metrics_row(metrics,
                measure(loaded.digest, "sap", corrected.model, data,
                        trusted_purity(corrected.trusted, data.train), w3.seconds()));
    save_checkpoint(corrected.model, detail::join_path(cfg.out_dir, "sap.ckpt"), prov);

    metrics.write(detail::join_path(cfg.out_dir, "metrics.csv"));
    detail::write_text(detail::join_path(cfg.out_dir, "manifest.json"),
                       make_manifest(cfg, loaded.digest, artifacts).dump(2) + "\n");
    return 0;
}

/// Sweeps alpha or n_trust over an explicit value list against one shared
/// vanilla model. Alpha sweeps reuse the per-layer SVD plan; only the
/// importance diagonal and downstream products are recomputed per value.
inline int cmd_sweep(const std::string& config_path, const std::string& param,
                     const std::vector<double>& values,
                     std::optional<std::uint64_t> seed_flag = {},
                     std::optional<std::string> out_flag = {}) {
    if (param != "alpha" && param != "n_trust")
        throw ValidationError("sweep: param must be 'alpha' or 'n_trust'");
    if (values.empty()) throw ValidationError("sweep: empty value list");
    const LoadedConfig loaded = load_config(config_path, seed_flag, out_flag);
    const ExperimentConfig& cfg = loaded.cfg;
    const DerivedSeeds seeds = derive_seeds(cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);

    const PreparedData data = prepare_data(cfg, seeds);
    Model arch = build_model(cfg, data.train);
    init_weights(arch, seeds.init);
    TrainConfig tc = cfg.train;
    tc.seed = seeds.train;

    WallClock w1;
    auto [vanilla, hist] = train(arch, data.train, tc);
    const double vanilla_time = w1.seconds();
    const Provenance prov{cfg.seed, loaded.digest};
    save_checkpoint(vanilla, detail::join_path(cfg.out_dir, "vanilla.ckpt"), prov);

    CsvWriter sweep;
    sweep.field(std::string("param"));
    sweep.field(std::string("value"));
    for (const char* h : kMetricsHeader) sweep.field(std::string(h));
    sweep.end_row();
    {
        MetricsRecord base = measure(loaded.digest, "vanilla", vanilla, data, -1.0, vanilla_time);
        sweep.field(param);
        sweep.field(std::string());
        metrics_row(sweep, base);
    }

    if (param == "n_trust")
        for (double v : values)
            if (v < 1.0 || v != double(static_cast<std::size_t>(v)))
                throw ValidationError("sweep: n_trust values must be positive integers");
    std::optional<SapPlan> plan;
    if (param == "alpha") plan = sap_plan(vanilla, data.train, cfg.sap.n_trust, cfg.sap.patch_cap);
    for (double v : values) {
        WallClock wv;
        SapResult res = param == "alpha"
                            ? sap_apply(vanilla, *plan, v)
                            : sap(vanilla, data.train, cfg.sap.alpha,
                                  static_cast<std::size_t>(v), cfg.sap.patch_cap);
        MetricsRecord r = measure(loaded.digest, "sap", res.model, data,
                                  trusted_purity(res.trusted, data.train), wv.seconds());
        sweep.field(param);
        sweep.field(v);
        metrics_row(sweep, r);
    }

    sweep.write(detail::join_path(cfg.out_dir, "sweep.csv"));
    detail::write_text(
        detail::join_path(cfg.out_dir, "manifest.json"),
        make_manifest(cfg, loaded.digest, {"sweep.csv", "manifest.json", "vanilla.ckpt"}).dump(2) +
            "\n");
    return 0;
}

/// Evaluates a 2-D checkpoint over a lattice and writes x,y,predicted rows,
/// scanning y ascending in the outer loop and x ascending within each row.
inline int cmd_boundary(const std::string& ckpt_path, double xmin, double xmax, double ymin,
                        double ymax, std::size_t res, const std::string& out_path) {
    if (res < 1) throw ValidationError("boundary: resolution must be >= 1");
    if (!(xmax >= xmin && ymax >= ymin))
        throw ValidationError("boundary: ranges must satisfy max >= min");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.model.input_dim != 2)
        throw ValidationError("boundary: model input is not 2-D");

    Matrix grid(res * res, 2);
    for (std::size_t yi = 0; yi < res; ++yi) {
        const double y = res == 1 ? ymin : ymin + (ymax - ymin) * double(yi) / double(res - 1);
        for (std::size_t xi = 0; xi < res; ++xi) {
            const double x = res == 1 ? xmin : xmin + (xmax - xmin) * double(xi) / double(res - 1);
            grid(yi * res + xi, 0) = x;
            grid(yi * res + xi, 1) = y;
        }
    }
    const Matrix logits = forward(ckpt.model, grid);

    CsvWriter csv;
    csv.field(std::string("x"));
    csv.field(std::string("y"));
    csv.field(std::string("predicted"));
    csv.end_row();
    for (std::size_t i = 0; i < grid.rows(); ++i) {
        csv.field(grid(i, 0));
        csv.field(grid(i, 1));
        csv.field(detail::row_argmax(logits.row(i), logits.cols()));
        csv.end_row();
    }
    csv.write(out_path);
    return 0;
}

/// Further trains a checkpointed model on a retain subset: a seeded random
/// sample of the clean partition when true labels exist, else the lowest-loss
/// samples. Provenance is copied from the input checkpoint, so a zero-epoch
/// finetune writes back identical bytes.
inline int cmd_finetune(const std::string& ckpt_path, const std::string& config_path,
                        std::optional<std::uint64_t> seed_flag = {},
                        std::optional<std::string> out_flag = {}) {
    const LoadedConfig loaded = load_config(config_path, seed_flag, out_flag);
    const ExperimentConfig& cfg = loaded.cfg;
    if (cfg.finetune.retain_size < 1)
        throw ValidationError("finetune: finetune.retain_size must be >= 1");
    const DerivedSeeds seeds = derive_seeds(cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);

    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const PreparedData data = prepare_data(cfg, seeds);

    std::vector<std::size_t> retain_idx;
    if (data.train.has_true_labels()) {
        for (std::size_t i = 0; i < data.train.size(); ++i)
            if (data.train.labels[i] == data.train.true_labels[i]) retain_idx.push_back(i);
        std::mt19937_64 rng(seeds.retain);
        shuffle(retain_idx, rng);
        if (retain_idx.size() > cfg.finetune.retain_size)
            retain_idx.resize(cfg.finetune.retain_size);
        std::sort(retain_idx.begin(), retain_idx.end());
    } else {
        retain_idx = get_trusted(ckpt.model, data.train, cfg.finetune.retain_size).indices;
    }
    if (retain_idx.empty()) throw ValidationError("finetune: empty retain set");
    const LabeledDataset retain = data.train.subset(retain_idx);

    TrainConfig tc = cfg.train;
    tc.seed = seeds.train;
    WallClock w1;
    auto [tuned, hist] = finetune(ckpt.model, retain, tc);

    double purity = -1.0;
    if (data.train.has_true_labels()) {
        std::size_t clean = 0;
        for (std::size_t i : retain_idx)
            if (data.train.labels[i] == data.train.true_labels[i]) ++clean;
        purity = double(clean) / double(retain_idx.size());
    }
    CsvWriter metrics = metrics_writer();
    metrics_row(metrics, measure(loaded.digest, "finetune", tuned, data, purity, w1.seconds()));
    metrics.write(detail::join_path(cfg.out_dir, "metrics_finetune.csv"));
    save_checkpoint(tuned, detail::join_path(cfg.out_dir, "finetuned.ckpt"), ckpt.provenance);
    detail::write_text(detail::join_path(cfg.out_dir, "manifest_finetune.json"),
                       make_manifest(cfg, loaded.digest,
                                     {"metrics_finetune.csv", "manifest_finetune.json",
                                      "finetuned.ckpt"})
                               .dump(2) +
                           "\n");
    return 0;
}

/// Standalone corruption: generates the configured training set, applies the
/// noise model, and exports the labeled samples as CSV.
inline int cmd_corrupt(const std::string& config_path, std::optional<std::uint64_t> seed_flag = {},
                       std::optional<std::string> out_flag = {}) {
    const LoadedConfig loaded = load_config(config_path, seed_flag, out_flag);
    const ExperimentConfig& cfg = loaded.cfg;
    const DerivedSeeds seeds = derive_seeds(cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);
    const PreparedData data = prepare_data(cfg, seeds);
    export_dataset_csv(data.train_full, detail::join_path(cfg.out_dir, "corrupted.csv"));
    detail::write_text(detail::join_path(cfg.out_dir, "manifest_corrupt.json"),
                       make_manifest(cfg, loaded.digest, {"corrupted.csv", "manifest_corrupt.json"})
                               .dump(2) +
                           "\n");
    return 0;
}

/// Standalone evaluation of a checkpoint against the configured splits.
/// Prints one CSV row per split to the given stream.
inline int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
                    std::ostream& out, std::optional<std::uint64_t> seed_flag = {}) {
    const LoadedConfig loaded = load_config(config_path, seed_flag);
    const DerivedSeeds seeds = derive_seeds(loaded.cfg.seed);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const PreparedData data = prepare_data(loaded.cfg, seeds);

    CsvWriter csv;
    csv.field(std::string("split"));
    csv.field(std::string("accuracy"));
    csv.field(std::string("loss"));
    csv.end_row();
    const std::pair<const char*, const LabeledDataset*> splits[] = {
        {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
    for (const auto& [name, ds] : splits) {
        const EvalResult r = evaluate(ckpt.model, *ds);
        csv.field(std::string(name));
        csv.field(r.accuracy);
        csv.field(r.mean_loss);
        csv.end_row();
    }
    out << csv.str();
    return 0;
}

}  // namespace unlearn
