#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unlearn/cli/config.hpp"
#include "unlearn/data/cifar10.hpp"
#include "unlearn/data/dataset.hpp"
#include "unlearn/data/spiral.hpp"
#include "unlearn/data/split.hpp"
#include "unlearn/error.hpp"
#include "unlearn/io/csv.hpp"
#include "unlearn/nn/model.hpp"
#include "unlearn/nn/train.hpp"
#include "unlearn/noise/noise.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/sap/sap.hpp"

namespace unlearn {

/// Per-purpose seeds derived from the master seed. Every run draws the full
/// chain in a fixed order, so adding a pipeline stage never reshuffles the
/// seeds of earlier stages.
struct DerivedSeeds {
    std::uint64_t train_data = 0;
    std::uint64_t test_data = 0;
    std::uint64_t noise_matrix = 0;
    std::uint64_t corrupt = 0;
    std::uint64_t split = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
    std::uint64_t retain = 0;
};

inline DerivedSeeds derive_seeds(std::uint64_t master) {
    std::uint64_t s = master;
    DerivedSeeds d;
    d.train_data = splitmix64(s);
    d.test_data = splitmix64(s);
    d.noise_matrix = splitmix64(s);
    d.corrupt = splitmix64(s);
    d.split = splitmix64(s);
    d.init = splitmix64(s);
    d.train = splitmix64(s);
    d.retain = splitmix64(s);
    return d;
}

struct PreparedData {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
    LabeledDataset train_full;
};

inline TransitionMatrix build_noise(const NoiseSpec& spec, std::size_t classes,
                                    std::uint64_t seed) {
    switch (spec.kind) {
        case NoiseSpec::Kind::Symmetric: return symmetric(classes, spec.eta);
        case NoiseSpec::Kind::Asymmetric: return asymmetric(classes, spec.eta, seed);
        case NoiseSpec::Kind::Hierarchical: {
            HierarchyGroups g;
            g.groups = spec.groups;
            return hierarchical(classes, spec.eta, g);
        }
        case NoiseSpec::Kind::None: break;
    }
    throw ValidationError("build_noise: no noise requested");
}

/// Generates (or loads) the train and test sets, corrupts the full training
/// set before splitting, then splits off the validation part.
inline PreparedData prepare_data(const ExperimentConfig& cfg, const DerivedSeeds& seeds) {
    PreparedData out;
    if (cfg.dataset.kind == DatasetSpec::Kind::Spiral) {
        out.train_full = spiral(cfg.dataset.n_per_class, cfg.dataset.jitter, seeds.train_data);
        out.test = spiral(cfg.dataset.test_n_per_class, cfg.dataset.jitter, seeds.test_data);
    } else {
        out.train_full = load_cifar10(cfg.dataset.path, cfg.dataset.norm);
        out.test = load_cifar10(cfg.dataset.test_path, cfg.dataset.norm);
    }
    if (cfg.noise.kind != NoiseSpec::Kind::None) {
        const TransitionMatrix t =
            build_noise(cfg.noise, out.train_full.classes, seeds.noise_matrix);
        out.train_full = corrupt(out.train_full, t, seeds.corrupt);
    }
    auto [tr, va] = split(out.train_full, cfg.split_fraction, seeds.split);
    out.train = std::move(tr);
    out.val = std::move(va);
    return out;
}

/// Assembles the configured layer stack into a model sized for the dataset.
/// Weights are uninitialized; callers seed them explicitly.
inline Model build_model(const ExperimentConfig& cfg, const LabeledDataset& data) {
    Model m;
    m.layers = cfg.layers;
    m.input_dim = data.feature_dim();
    m.classes = data.classes;
    m.validate();
    return m;
}

/// One row of metrics.csv. Negative purity means "not applicable" and is
/// written as an empty field.
struct MetricsRecord {
    std::string run_id;
    std::string stage;
    double train_acc = 0.0, train_loss = 0.0;
    double val_acc = 0.0, val_loss = 0.0;
    double test_acc = 0.0, test_loss = 0.0;
    double purity = -1.0;
    double wall_time_s = 0.0;

    void validate() const {
        for (double a : {train_acc, val_acc, test_acc})
            if (!(a >= 0.0 && a <= 1.0))
                throw ValidationError("metrics: accuracy outside [0,1]");
    }
};

inline const char* kMetricsHeader[] = {"run_id",   "stage",    "train_acc", "train_loss",
                                       "val_acc",  "val_loss", "test_acc",  "test_loss",
                                       "purity",   "wall_time_s"};

inline void metrics_row(CsvWriter& w, const MetricsRecord& r) {
    r.validate();
    w.field(r.run_id);
    w.field(r.stage);
    w.field(r.train_acc);
    w.field(r.train_loss);
    w.field(r.val_acc);
    w.field(r.val_loss);
    w.field(r.test_acc);
    w.field(r.test_loss);
    if (r.purity >= 0.0)
        w.field(r.purity);
    else
        w.field(std::string());
    w.field(r.wall_time_s);
    w.end_row();
}

inline CsvWriter metrics_writer() {
    CsvWriter w;
    for (const char* h : kMetricsHeader) w.field(std::string(h));
    w.end_row();
    return w;
}

/// Evaluates a model on all three splits and assembles the metrics row.
inline MetricsRecord measure(const std::string& run_id, const std::string& stage,
                             const Model& model, const PreparedData& data, double purity,
                             double wall_time_s) {
    MetricsRecord r;
    r.run_id = run_id;
    r.stage = stage;
    const EvalResult tr = evaluate(model, data.train);
    const EvalResult va = evaluate(model, data.val);
    const EvalResult te = evaluate(model, data.test);
    r.train_acc = tr.accuracy;
    r.train_loss = tr.mean_loss;
    r.val_acc = va.accuracy;
    r.val_loss = va.mean_loss;
    r.test_acc = te.accuracy;
    r.test_loss = te.mean_loss;
    r.purity = purity;
    r.wall_time_s = wall_time_s;
    return r;
}

/// Fraction of trusted samples whose observed label matches the true label.
/// Returns -1 when true labels are unavailable.
inline double trusted_purity(const TrustedSet& trusted, const LabeledDataset& data) {
    if (!data.has_true_labels() || trusted.indices.empty()) return -1.0;
    std::size_t clean = 0;
    for (std::size_t i : trusted.indices)
        if (data.labels[i] == data.true_labels[i]) ++clean;
    return double(clean) / double(trusted.indices.size());
}

class WallClock {
public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Deterministic run manifest: the digest plus the effective config and the
/// artifact list. Contains no timestamps, so reruns produce identical bytes.
inline nlohmann::json make_manifest(const ExperimentConfig& cfg, const std::string& digest,
                                    std::vector<std::string> artifacts) {
    std::sort(artifacts.begin(), artifacts.end());
    nlohmann::json m;
    m["format_version"] = 1;
    m["config_digest"] = digest;
    m["config"] = config_json(cfg);
    m["artifacts"] = artifacts;
    return m;
}

}  // namespace unlearn
